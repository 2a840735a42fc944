//! Planar vectors and axis-aligned box contact geometry.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// A point or displacement on the work-surface, in centimetres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    pub const fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl<T: Scalar> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Open-interior overlap test for two axis-aligned boxes. Touching faces do not overlap.
pub fn boxes_overlap<T: Scalar>(
    a_center: Vec2<T>,
    a_half: Vec2<T>,
    b_center: Vec2<T>,
    b_half: Vec2<T>,
) -> bool {
    (b_center.x - a_center.x).abs() < a_half.x + b_half.x
        && (b_center.y - a_center.y).abs() < a_half.y + b_half.y
}

/// Axis-separating gap between two boxes: the larger of the x and y gaps.
/// Negative when the boxes overlap.
pub fn box_gap<T: Scalar>(a_center: Vec2<T>, a_half: Vec2<T>, b_center: Vec2<T>, b_half: Vec2<T>) -> T {
    let gx = (b_center.x - a_center.x).abs() - (a_half.x + b_half.x);
    let gy = (b_center.y - a_center.y).abs() - (a_half.y + b_half.y);
    gx.max(gy)
}

/// Smallest `s >= 0` such that translating box B by `s * dir` leaves it disjoint from box A.
///
/// Returns zero when the boxes do not overlap. `dir` must be a unit vector; when it has no
/// component along an axis that axis cannot separate the boxes.
pub fn penetration_depth<T: Scalar>(
    a_center: Vec2<T>,
    a_half: Vec2<T>,
    b_center: Vec2<T>,
    b_half: Vec2<T>,
    dir: Vec2<T>,
) -> T {
    if !boxes_overlap(a_center, a_half, b_center, b_half) {
        return T::zero();
    }
    let rel = b_center - a_center;
    let ext = a_half + b_half;
    let axis = |rel: T, ext: T, d: T| -> T {
        if d > T::zero() {
            (ext - rel) / d
        } else if d < T::zero() {
            (ext + rel) / -d
        } else {
            T::infinity()
        }
    };
    axis(rel.x, ext.x, dir.x).min(axis(rel.y, ext.y, dir.y))
}

#[cfg(test)]
mod tests {
    use super::*;

    type V = Vec2<f64>;

    #[test]
    fn disjoint_boxes_have_zero_depth() {
        let d = penetration_depth(
            V::new(0.0, 0.0),
            V::new(1.0, 1.0),
            V::new(5.0, 0.0),
            V::new(1.0, 1.0),
            V::new(0.0, 1.0),
        );
        assert_eq!(d, 0.0);
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        assert!(!boxes_overlap(V::new(0.0, 0.0), V::new(1.0, 1.0), V::new(0.0, 2.0), V::new(1.0, 1.0)));
    }

    #[test]
    fn coincident_boxes_need_full_extent() {
        let d = penetration_depth(V::zero(), V::new(1.0, 1.0), V::zero(), V::new(1.0, 1.0), V::new(0.0, 1.0));
        assert_eq!(d, 2.0);
    }

    #[test]
    fn shallow_overlap_along_motion() {
        let d = penetration_depth(
            V::new(0.0, 0.0),
            V::new(1.0, 1.0),
            V::new(0.0, 1.7),
            V::new(1.0, 1.0),
            V::new(0.0, 1.0),
        );
        assert!((d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn diagonal_push_picks_cheaper_axis() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // Overlap of 0.5 in x and 1.5 in y; x separates first.
        let d = penetration_depth(
            V::new(0.0, 0.0),
            V::new(1.0, 1.0),
            V::new(1.5, 0.5),
            V::new(1.0, 1.0),
            V::new(h, h),
        );
        assert!((d - 0.5 / h).abs() < 1e-12);
    }

    #[test]
    fn gap_is_negative_on_overlap() {
        let g = box_gap(V::zero(), V::new(1.0, 1.0), V::new(1.0, 0.0), V::new(1.0, 1.0));
        assert_eq!(g, -1.0);
        let g = box_gap(V::zero(), V::new(1.0, 1.0), V::new(5.0, 0.0), V::new(1.0, 1.0));
        assert_eq!(g, 3.0);
    }
}
