//! Nonprehensile tabletop rearrangement with deep Q-learning.
//!
//! A kinematic 2D pushing simulator ([`env`]) is rendered to RGB observations ([`observe`]) and
//! scored with shaped rewards ([`reward`]). Exploration draws actions from a potential field
//! over the obstacles ([`explore`]), experiences go through a success-balanced replay buffer
//! ([`replay`]), and a convolutional Q-network written from scratch ([`neural`]) is trained by the
//! loop in [`trainer`]. [`session`] drives interactive human and agent play.
//!
//! Geometry, potential fields and network math are generic over [`Scalar`]; the aliases below
//! pin the precisions used in training.

pub mod env;
pub mod explore;
pub mod geom;
pub mod neural;
pub mod observe;
pub mod replay;
pub mod reward;
pub mod scalar;
pub mod session;
pub mod trainer;

pub use scalar::Scalar;

/// Network precision used for training and checkpoints.
pub type Real = f32;
pub type Network = neural::QNetwork<Real>;
pub type Pair = neural::NetworkPair<Real>;
pub type Adam = neural::AdamState<Real>;
/// Exploration field over work-surface coordinates.
pub type Field = explore::PotentialField<f64>;
