//! Linear Gaussian state-space models
//!
//! ```text
//! x_k = A x_{k-1} + η_{k-1},   η ~ N(0, Q)
//! z_k = H x_k + ν_k,           ν ~ N(0, R)
//! ```
//!
//! and simulation of ground-truth trajectories from them.

use rand::Rng;

use crate::error::{Error, Result, Violation};
use crate::linalg::{self, GaussianSampler, PSD_RTOL, SYMMETRY_RTOL};
use crate::{Matrix, Vector};

/// Gaussian density `N(mean, cov)` over the state at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vector,
    pub cov: Matrix,
}

impl GaussianBelief {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension {
                context: "belief covariance",
                expected: mean.len(),
                found: cov.nrows().max(cov.ncols()),
            });
        }
        Ok(Self { mean, cov })
    }

    /// Point mass at `mean`.
    pub fn deterministic(mean: Vector) -> Self {
        let n = mean.len();
        Self {
            mean,
            cov: Matrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Symmetric to `1e-12` relative and PSD to `-1e-10` relative eigenvalue tolerance.
    pub fn is_valid(&self) -> bool {
        linalg::is_symmetric(&self.cov, SYMMETRY_RTOL) && linalg::is_psd(&self.cov, PSD_RTOL)
    }
}

/// Time-invariant linear Gaussian state-space model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    /// State transition, `n_x × n_x`.
    pub a: Matrix,
    /// Measurement matrix, `n_z × n_x`.
    pub h: Matrix,
    /// Process noise covariance, `n_x × n_x`.
    pub q: Matrix,
    /// Measurement noise covariance, `n_z × n_z`.
    pub r: Matrix,
}

impl LinearGaussianModel {
    /// Builds the model and checks every invariant.
    pub fn new(a: Matrix, h: Matrix, q: Matrix, r: Matrix) -> Result<Self> {
        let model = Self { a, h, q, r };
        validate_model(&model).map_err(Error::InvalidModel)?;
        Ok(model)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }
}

/// Ground truth `x_1..x_T` and clean measurements `z_1..z_T`.
/// The initial state is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub clean_measurements: Vec<Vector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn shape(m: &Matrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

pub(crate) fn check_covariance(name: &str, m: &Matrix, dim: usize, strict: bool, out: &mut Vec<Violation>) {
    if m.nrows() != dim || m.ncols() != dim {
        out.push(Violation::Dimension {
            what: name.to_string(),
            expected: format!("{dim}x{dim}"),
            found: shape(m),
        });
        return;
    }
    if m.iter().any(|v| !v.is_finite()) {
        out.push(Violation::NonFinite {
            name: name.to_string(),
        });
        return;
    }
    if !linalg::is_symmetric(m, SYMMETRY_RTOL) {
        out.push(Violation::NotSymmetric {
            name: name.to_string(),
            max_asymmetry: linalg::max_asymmetry(m),
        });
        return;
    }
    let (lo, hi) = linalg::eig_range(m);
    if strict {
        if lo <= PSD_RTOL * hi.abs() || hi <= 0.0 {
            out.push(Violation::NotPositiveDefinite {
                name: name.to_string(),
                min_eigenvalue: lo,
            });
        }
    } else if lo < -PSD_RTOL * hi.abs().max(lo.abs()) {
        out.push(Violation::NotPsd {
            name: name.to_string(),
            min_eigenvalue: lo,
        });
    }
}

/// Check every model invariant, collecting all violations.
pub fn validate_model(model: &LinearGaussianModel) -> std::result::Result<(), Vec<Violation>> {
    collect_violations(model, true)
}

/// Like [`validate_model`] but only requires `R` to be PSD, so that
/// noiseless sensors can be simulated and filtered.
pub fn validate_model_structure(model: &LinearGaussianModel) -> std::result::Result<(), Vec<Violation>> {
    collect_violations(model, false)
}

fn collect_violations(
    model: &LinearGaussianModel,
    strict_r: bool,
) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let nx = model.a.nrows();
    if !model.a.is_square() {
        out.push(Violation::Dimension {
            what: "A".into(),
            expected: "square".into(),
            found: shape(&model.a),
        });
    }
    if model.a.iter().any(|v| !v.is_finite()) {
        out.push(Violation::NonFinite { name: "A".into() });
    }
    if model.h.ncols() != nx {
        out.push(Violation::Dimension {
            what: "H columns".into(),
            expected: nx.to_string(),
            found: model.h.ncols().to_string(),
        });
    }
    if model.h.iter().any(|v| !v.is_finite()) {
        out.push(Violation::NonFinite { name: "H".into() });
    }
    check_covariance("Q", &model.q, nx, false, &mut out);
    check_covariance("R", &model.r, model.h.nrows(), strict_r, &mut out);
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Simulate `horizon` steps from an initial state drawn from `init`, with a
/// single stream for the initial state, process noise and measurement noise
/// (drawn in that order at each step).
pub fn simulate_trajectory<R: Rng + ?Sized>(
    model: &LinearGaussianModel,
    init: &GaussianBelief,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut sim = TrajectorySimulator::new(model, init, horizon)?;
    let mut x = sim.initial.sample(rng);
    for _ in 0..horizon {
        x = sim.propagate(&x, rng);
        sim.observe(&x, rng);
    }
    Ok(sim.finish())
}

/// As [`simulate_trajectory`], but the initial state and process noise come
/// from `process_rng` and measurement noise from `measurement_rng`.
pub fn simulate_trajectory_split<P, M>(
    model: &LinearGaussianModel,
    init: &GaussianBelief,
    horizon: usize,
    process_rng: &mut P,
    measurement_rng: &mut M,
) -> Result<Trajectory>
where
    P: Rng + ?Sized,
    M: Rng + ?Sized,
{
    let mut sim = TrajectorySimulator::new(model, init, horizon)?;
    let mut x = sim.initial.sample(process_rng);
    for _ in 0..horizon {
        x = sim.propagate(&x, process_rng);
        sim.observe(&x, measurement_rng);
    }
    Ok(sim.finish())
}

struct TrajectorySimulator<'a> {
    model: &'a LinearGaussianModel,
    initial: GaussianSampler,
    process: GaussianSampler,
    measurement: GaussianSampler,
    out: Trajectory,
}

impl<'a> TrajectorySimulator<'a> {
    fn new(model: &'a LinearGaussianModel, init: &GaussianBelief, horizon: usize) -> Result<Self> {
        validate_model_structure(model).map_err(Error::InvalidModel)?;
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if init.dim() != model.state_dim() {
            return Err(Error::Dimension {
                context: "initial belief",
                expected: model.state_dim(),
                found: init.dim(),
            });
        }
        Ok(Self {
            model,
            initial: GaussianSampler::new(init.mean.clone(), &init.cov),
            process: GaussianSampler::zero_mean(&model.q),
            measurement: GaussianSampler::zero_mean(&model.r),
            out: Trajectory {
                states: Vec::with_capacity(horizon),
                clean_measurements: Vec::with_capacity(horizon),
            },
        })
    }

    fn propagate<R: Rng + ?Sized>(&mut self, x: &Vector, rng: &mut R) -> Vector {
        let next = &self.model.a * x + self.process.sample(rng);
        self.out.states.push(next.clone());
        next
    }

    fn observe<R: Rng + ?Sized>(&mut self, x: &Vector, rng: &mut R) {
        let z = &self.model.h * x + self.measurement.sample(rng);
        self.out.clean_measurements.push(z);
    }

    fn finish(self) -> Trajectory {
        self.out
    }
}
