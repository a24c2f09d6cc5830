//! Generalization-error bounds under train/test distribution mismatch, via
//! information measures, rate-distortion curves and optimal couplings on
//! finite alphabets.

pub mod bounds;
pub mod coupling_solver;
pub mod error;
pub mod learners;
pub mod measures;
pub mod numeric;
pub mod rd_solver;

pub use error::{Error, Result};
pub use measures::{
    chi_squared, hoeffding_sigma, kl_divergence, mutual_information, renyi_divergence, tv_distance,
    DivergenceValue, FiniteDistribution, JointTable,
};
pub use rd_solver::{Channel, GapMatrix, LossMatrix, RdCurve, RdPoint, Scenario};
pub use coupling_solver::Coupling;
