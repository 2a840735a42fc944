//! Informed exploration: a skew-Gaussian potential field over the obstacles and a softmax over
//! the potential change inside each action's 45 degree sector.
//!
//! Each obstacle contributes `U_i(p) = phi(p.x; mu.x, sigma) * phi_alpha(p.y; mu.y, sigma)`, where
//! `phi` is the normal density and `phi_alpha(y) = (2 / sigma) * phi_std(z) * Phi_std(alpha * z)`,
//! `z = (y - mu.y) / sigma`, is the skew-normal density. The field is the mean of the components
//! scaled by `gain`. With a negative `alpha` the mass sits on the approach side (below the
//! obstacle) and falls off steeply past its centre.
//!
//! The sector of action `a` spans `[psi_a - pi/8, psi_a + pi/8]`, directions are
//! `v = [cos theta, sin theta]`, and the integral of `v . grad U` over the sector has the closed form
//! `U_x (sin hi - sin lo) - U_y (cos hi - cos lo)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::geom::Vec2;
use crate::scalar::Scalar;

/// Half-width of an action sector.
pub const SECTOR_HALF_WIDTH: f64 = std::f64::consts::FRAC_PI_8;

/// Standard normal density.
pub fn std_normal_pdf<T: Scalar>(z: T) -> T {
    let inv_sqrt_2pi = T::lit(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-(z * z) / T::lit(2.0)).exp()
}

/// Standard normal CDF via the complementary error function.
pub fn std_normal_cdf<T: Scalar>(z: T) -> T {
    T::lit(0.5 * libm::erfc(-z.as_f64() / std::f64::consts::SQRT_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialComponent<T> {
    pub mu: Vec2<T>,
    pub sigma: T,
    pub skew_alpha: T,
}

impl<T: Scalar> PotentialComponent<T> {
    fn value_and_gradient(&self, p: Vec2<T>) -> (T, Vec2<T>) {
        let s = self.sigma;
        let zx = (p.x - self.mu.x) / s;
        let zy = (p.y - self.mu.y) / s;
        let fx = std_normal_pdf(zx) / s;
        let dfx = -zx / s * fx;

        let two = T::lit(2.0);
        let pdf_y = std_normal_pdf(zy);
        let cdf_skew = std_normal_cdf(self.skew_alpha * zy);
        let fy = two / s * pdf_y * cdf_skew;
        let dfy = two / (s * s) * pdf_y * (self.skew_alpha * std_normal_pdf(self.skew_alpha * zy) - zy * cdf_skew);

        (fx * fy, Vec2::new(dfx * fy, fx * dfy))
    }
}

/// Shape parameters used to build a field from obstacle centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldParams {
    pub sigma: f64,
    pub skew_alpha: f64,
    pub gain: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self { sigma: 3.0, skew_alpha: -3.0, gain: DEFAULT_GAIN }
    }
}

/// Amplitude applied to the obstacle field used for exploration.
///
/// Component densities peak near `1 / (pi sigma^2)`, which at `sigma = 3 cm` gives sector
/// integrals of order `1e-2` and an almost uniform softmax. The gain brings the largest sector
/// integral next to an obstacle to a few units.
pub const DEFAULT_GAIN: f64 = 400.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialField<T> {
    pub components: Vec<PotentialComponent<T>>,
    pub gain: T,
}

impl<T: Scalar> Default for PotentialField<T> {
    fn default() -> Self {
        Self { components: Vec::new(), gain: T::one() }
    }
}

impl<T: Scalar> PotentialField<T> {
    /// Unit-gain field from explicit components.
    pub fn new(components: Vec<PotentialComponent<T>>) -> Self {
        Self { components, gain: T::one() }
    }

    pub fn from_obstacles(obstacles: &[Vec2<T>], params: &FieldParams) -> Self {
        let components = obstacles
            .iter()
            .map(|&mu| PotentialComponent { mu, sigma: T::lit(params.sigma), skew_alpha: T::lit(params.skew_alpha) })
            .collect();
        Self { components, gain: T::lit(params.gain) }
    }

    fn evaluate(&self, p: Vec2<T>) -> (T, Vec2<T>) {
        if self.components.is_empty() {
            return (T::zero(), Vec2::zero());
        }
        let mut u = T::zero();
        let mut g = Vec2::zero();
        for c in &self.components {
            let (ui, gi) = c.value_and_gradient(p);
            u += ui;
            g = g + gi;
        }
        let scale = self.gain / T::lit(self.components.len() as f64);
        (u * scale, g * scale)
    }

    pub fn potential(&self, p: Vec2<T>) -> T {
        self.evaluate(p).0
    }

    pub fn gradient(&self, p: Vec2<T>) -> Vec2<T> {
        self.evaluate(p).1
    }

    /// Integral of the directional derivative over the action's sector.
    pub fn sector_delta(&self, p: Vec2<T>, action: Action) -> T {
        sector_integral(self.gradient(p), action)
    }

    pub fn sector_deltas(&self, p: Vec2<T>) -> [T; 5] {
        let g = self.gradient(p);
        Action::ALL.map(|a| sector_integral(g, a))
    }

    pub fn action_distribution(&self, p: Vec2<T>) -> ActionDistribution<T> {
        ActionDistribution::from_deltas(&self.sector_deltas(p))
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, p: Vec2<T>, rng: &mut R) -> Action {
        self.action_distribution(p).sample(rng)
    }
}

/// Sector bounds `[lo, hi]` of an action, in radians from +X.
pub fn sector_bounds(action: Action) -> (f64, f64) {
    let psi = action.angle();
    (psi - SECTOR_HALF_WIDTH, psi + SECTOR_HALF_WIDTH)
}

/// Closed-form sector integral for a fixed gradient.
pub fn sector_integral<T: Scalar>(gradient: Vec2<T>, action: Action) -> T {
    let (lo, hi) = sector_bounds(action);
    let (lo, hi) = (T::lit(lo), T::lit(hi));
    gradient.x * (hi.sin() - lo.sin()) - gradient.y * (hi.cos() - lo.cos())
}

/// Categorical distribution over the five actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution<T> {
    pub probs: [T; 5],
}

impl<T: Scalar> ActionDistribution<T> {
    pub fn uniform() -> Self {
        Self { probs: [T::lit(0.2); 5] }
    }

    /// Softmax of the negated potential changes, with max subtraction.
    pub fn from_deltas(deltas: &[T; 5]) -> Self {
        let logits = deltas.map(|d| -d);
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let exps = logits.map(|l| (l - max).exp());
        let total: T = exps.iter().copied().sum();
        Self { probs: exps.map(|e| e / total) }
    }

    pub fn prob(&self, action: Action) -> T {
        self.probs[action.slot()]
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let u = T::lit(rng.gen::<f64>());
        let mut acc = T::zero();
        for (slot, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Action::from_slot(slot);
            }
        }
        // Rounding left the cumulative sum just below one.
        let last = self.probs.iter().rposition(|&p| p > T::zero()).unwrap_or(4);
        Action::from_slot(last)
    }
}
