//! Bayesian state estimation for linear Gaussian state-space models whose
//! measurements pass through an adversarial channel that may block them
//! (denial of service) or corrupt them with additive and multiplicative
//! false data.
//!
//! The estimator replaces the attacked measurement model by an affine
//! surrogate `y ≈ H⁺ x + b⁺ + ν̃`, `ν̃ ~ N(0, Ω̃)`, fitted by statistical linear
//! regression against the predicted state density, and then runs an ordinary
//! Kalman filter and Rauch–Tung–Striebel smoother on the surrogate.
//!
//! Module map:
//!
//! * [`model`]: state-space model, Gaussian beliefs and trajectory simulation.
//! * [`attack`]: attack parameters, per-step attack sampling and classification.
//! * [`gslr`]: closed-form measurement moments and the affine surrogate.
//! * [`filter`]: attack-aware and standard Kalman filter / RTS smoother.
//! * [`sim`]: coordinated-turn scenario, Monte Carlo harness and RMSE metrics.

pub mod attack;
pub mod error;
pub mod filter;
pub mod gslr;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod sim;

pub use attack::{
    classify_attack, sample_attack, AttackChannel, AttackParams, AttackRealization, AttackType,
};
pub use error::{Error, Result, Violation};
pub use filter::{FilterOptions, FilterStepRecord, KfsOutput, SmootherResult};
pub use gslr::{GslrApproximation, MomentForm, PredictedMeasurementMoments, ThetaParams};
pub use model::{GaussianBelief, LinearGaussianModel, Trajectory};
pub use sim::{CtScenario, EstimationRun, McResult, Method, SimulatedData};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
