//! Autonomous 2D exploration by constrained Bayesian optimisation over spline controls.

pub mod bo;
pub mod baselines;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod harness;
pub mod map;
pub mod planner;
pub mod reward;
pub mod sim;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::{wrap_angle, Point2, Pose2D};
