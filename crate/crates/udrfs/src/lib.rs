//! Multi-object Bayes filtering with explicit detected/undetected target tags.
//!
//! Targets carry a binary tag: `1` once some measurement has been attributed
//! to them, `0` while they have never been detected. The tag can only flip
//! from undetected to detected, and the flip is driven by the measurement
//! process rather than by target kinematics, so it cannot live in an ordinary
//! Markov transition density. The filters here use a joint transition
//! function that couples the measurement set and the state transition in a
//! single step, which is where the tag flip belongs.
//!
//! The crate has two interchangeable base-state backends:
//!
//! * continuous state vectors with Gaussian-mixture intensities, used by the
//!   PHD and Bernoulli filters and the scenario simulator;
//! * small finite index spaces, used by the exact grid filters and by the
//!   [`oracle`] module, which evaluates every closed-form identity by direct
//!   set calculus (set integrals, probability generating functionals,
//!   functional derivatives, censoring).
//!
//! All core math is generic over the scalar type via [`Scalar`]; `f64`
//! aliases are exported at the crate root.

pub mod bayes;
pub mod jtf;
pub mod model;
pub mod oracle;
pub mod phd;
pub mod posterior;
pub mod sim;
pub mod verify;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar type the library is generic over: `f32` or `f64`.
pub trait Scalar:
    RealField
    + FromPrimitive
    + ToPrimitive
    + Copy
    + Default
    + std::iter::Sum<Self>
    + std::iter::Product<Self>
{
}

impl<T> Scalar for T where
    T: RealField
        + FromPrimitive
        + ToPrimitive
        + Copy
        + Default
        + std::iter::Sum<T>
        + std::iter::Product<T>
{
}

/// Converts an `f64` constant into the working scalar type.
pub(crate) fn real<S: Scalar>(v: f64) -> S {
    S::from_f64(v).expect("f64 constant must be representable in the scalar type")
}

/// Errors shared across the filtering and oracle modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("measurement impossible under model")]
    MeasurementImpossible,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("{what} size {got} exceeds exact-enumeration bound {limit}")]
    EnumerationBound {
        what: &'static str,
        limit: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use model::{
    ClutterModel, FiniteModel, GaussianComponent, GaussianMixture, MeasurementModel, MotionModel,
    ScenarioModel, UDState, UDTag,
};
pub use oracle::{FiniteSpace, SetDensity, TestFunction};

/// `f64` aliases for the main model and oracle types.
pub type GaussianMixture64 = GaussianMixture<f64>;
pub type ScenarioModel64 = ScenarioModel<f64>;
pub type FiniteModel64 = FiniteModel<f64>;
pub type SetDensity64 = SetDensity<f64>;
pub type TestFunction64 = TestFunction<f64>;
pub type UDState64 = UDState<f64>;
