//! Kalman filtering and RTS smoothing.
//!
//! The attack-aware filter linearizes the attacked channel once per step
//! around the predicted density (see [`crate::gslr`]) and then applies an
//! ordinary Kalman update with the surrogate `(H⁺, b⁺, Ω̃)`. The smoother is
//! the standard RTS backward recursion, which does not depend on the
//! measurement model. The standard filter ignores attacks and updates with
//! `(H, R)`; it is the baseline the attack-aware filter is compared against.

use nalgebra::linalg::Cholesky;

use crate::error::{Error, Result};
use crate::gslr::{self, GslrApproximation, MomentForm, ThetaParams};
use crate::linalg;
use crate::model::{GaussianBelief, LinearGaussianModel};
use crate::{Matrix, Vector};

/// Relative eigenvalue threshold below which the innovation covariance is
/// treated as singular and the update is skipped.
pub const INNOVATION_SINGULAR_RTOL: f64 = 1e-10;
/// Smoother jitter, as a multiple of `trace(P) / n`.
pub const SMOOTHER_JITTER: f64 = 1e-12;

/// Per-step quantities of the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStepRecord {
    /// Predicted belief `N(x̂_{k|k-1}, P_{k|k-1})`.
    pub prior: GaussianBelief,
    /// Filtered belief `N(x̂_{k|k}, P_{k|k})`.
    pub posterior: GaussianBelief,
    /// Measurement model used in the update.
    pub gslr: GslrApproximation,
    /// `y - H⁺ x̂_{k|k-1} - b⁺`.
    pub innovation: Vector,
    /// The innovation covariance was singular; `posterior == prior`.
    pub skipped_update: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherResult {
    /// `N(x̂ˢ_{k|T}, Pˢ_{k|T})` for `k = 1..T`.
    pub smoothed: Vec<GaussianBelief>,
    /// Smoother gains for `k = 1..T-1`.
    pub gains: Vec<Matrix>,
}

/// Forward and backward pass together.
#[derive(Debug, Clone, PartialEq)]
pub struct KfsOutput {
    pub filtered: Vec<FilterStepRecord>,
    pub smoothed: SmootherResult,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterOptions {
    /// Use the Joseph form `(I - K H⁺) P (I - K H⁺)ᵀ + K Ω̃ Kᵀ` for the
    /// covariance update instead of `P - K S Kᵀ`.
    pub joseph: bool,
    pub moment_form: MomentForm,
}

/// Time update: `x̂ ← A x̂`, `P ← A P Aᵀ + Q`.
pub fn predict(post: &GaussianBelief, model: &LinearGaussianModel) -> Result<GaussianBelief> {
    if post.dim() != model.state_dim() {
        return Err(Error::Dimension {
            context: "predict",
            expected: model.state_dim(),
            found: post.dim(),
        });
    }
    let mean = &model.a * &post.mean;
    let cov = linalg::symmetrized(&model.a * &post.cov * model.a.transpose() + &model.q);
    Ok(GaussianBelief { mean, cov })
}

/// Measurement update against the surrogate model, with the default options.
pub fn update(
    prior: &GaussianBelief,
    y: &Vector,
    gslr: &GslrApproximation,
) -> Result<(GaussianBelief, Vector, bool)> {
    update_with(prior, y, gslr, FilterOptions::default())
}

/// Measurement update. Returns the posterior, the innovation and whether the
/// update was skipped because `S = H⁺ P H⁺ᵀ + Ω̃` is singular
/// (`λ_min(S) ≤ 1e-10 λ_max(S)`, the zero matrix included).
pub fn update_with(
    prior: &GaussianBelief,
    y: &Vector,
    gslr: &GslrApproximation,
    options: FilterOptions,
) -> Result<(GaussianBelief, Vector, bool)> {
    let (nz, nx) = gslr.h_plus.shape();
    if prior.dim() != nx {
        return Err(Error::Dimension {
            context: "update prior vs H⁺ columns",
            expected: nx,
            found: prior.dim(),
        });
    }
    if y.len() != nz || gslr.b_plus.len() != nz || gslr.omega.nrows() != nz {
        return Err(Error::Dimension {
            context: "update measurement",
            expected: nz,
            found: y.len(),
        });
    }
    let innovation = y - &gslr.h_plus * &prior.mean - &gslr.b_plus;
    let pht = &prior.cov * gslr.h_plus.transpose();
    let s = linalg::symmetrized(&gslr.h_plus * &pht + &gslr.omega);
    if !linalg::is_well_conditioned_spd(&s, INNOVATION_SINGULAR_RTOL) {
        return Ok((prior.clone(), innovation, true));
    }
    let Some(chol) = Cholesky::new(s.clone()) else {
        return Ok((prior.clone(), innovation, true));
    };
    // K = P H⁺ᵀ S⁻¹
    let gain = chol.solve(&pht.transpose()).transpose();
    let mean = &prior.mean + &gain * &innovation;
    let cov = if options.joseph {
        let i_kh = Matrix::identity(nx, nx) - &gain * &gslr.h_plus;
        &i_kh * &prior.cov * i_kh.transpose() + &gain * &gslr.omega * gain.transpose()
    } else {
        &prior.cov - &gain * &s * gain.transpose()
    };
    Ok((
        GaussianBelief {
            mean,
            cov: linalg::symmetrized(cov),
        },
        innovation,
        false,
    ))
}

/// Attack-aware forward pass with default options.
pub fn filter_pass(
    init: &GaussianBelief,
    measurements: &[Vector],
    theta: &ThetaParams,
) -> Result<Vec<FilterStepRecord>> {
    filter_pass_with(init, measurements, theta, FilterOptions::default())
}

/// For `k = 1..T`: predict, fit the surrogate around the prediction, update.
/// Numerical failures carry the 1-based step index.
pub fn filter_pass_with(
    init: &GaussianBelief,
    measurements: &[Vector],
    theta: &ThetaParams,
    options: FilterOptions,
) -> Result<Vec<FilterStepRecord>> {
    theta.validate()?;
    if measurements.is_empty() {
        return Err(Error::InvalidArgument("no measurements to filter".into()));
    }
    let mut records = Vec::with_capacity(measurements.len());
    let mut belief = init.clone();
    for (k, y) in measurements.iter().enumerate() {
        let step = k + 1;
        let prior = predict(&belief, &theta.model)?;
        let surrogate = surrogate_for(&prior, theta, options.moment_form).map_err(|e| e.at_step(step))?;
        let (posterior, innovation, skipped) = update_with(&prior, y, &surrogate, options)?;
        belief = posterior.clone();
        records.push(FilterStepRecord {
            prior,
            posterior,
            gslr: surrogate,
            innovation,
            skipped_update: skipped,
        });
    }
    Ok(records)
}

/// Surrogate around `prior`; falls back to the pseudo-inverse regression
/// when the predicted covariance is singular (e.g. an exactly known state
/// with no process noise).
fn surrogate_for(prior: &GaussianBelief, theta: &ThetaParams, form: MomentForm) -> Result<GslrApproximation> {
    let moments = gslr::predicted_moments(prior, theta, form)?;
    match gslr::gslr_from_moments(prior, &moments) {
        Err(Error::SingularCovariance { .. }) => gslr::gslr_from_moments_pinv(prior, &moments),
        other => other,
    }
}

/// Textbook Kalman update with `(H, R)`. Skipped (prior returned, flag set)
/// under the same singular-innovation rule as [`update_with`].
pub fn kalman_update(
    prior: &GaussianBelief,
    y: &Vector,
    model: &LinearGaussianModel,
) -> Result<(GaussianBelief, Vector, bool)> {
    let h = &model.h;
    let innovation = y - h * &prior.mean;
    let s = linalg::symmetrized(h * &prior.cov * h.transpose() + &model.r);
    if !linalg::is_well_conditioned_spd(&s, INNOVATION_SINGULAR_RTOL) {
        return Ok((prior.clone(), innovation, true));
    }
    let Some(chol) = Cholesky::new(s) else {
        return Ok((prior.clone(), innovation, true));
    };
    let pht = &prior.cov * h.transpose();
    let gain = chol.solve(&pht.transpose()).transpose();
    let mean = &prior.mean + &gain * &innovation;
    let cov = linalg::symmetrized(&prior.cov - &gain * h * &prior.cov);
    Ok((GaussianBelief { mean, cov }, innovation, false))
}

/// Kalman filter that assumes the measurements are clean.
pub fn standard_filter_pass(
    init: &GaussianBelief,
    measurements: &[Vector],
    model: &LinearGaussianModel,
) -> Result<Vec<FilterStepRecord>> {
    crate::model::validate_model_structure(model).map_err(Error::InvalidModel)?;
    if measurements.is_empty() {
        return Err(Error::InvalidArgument("no measurements to filter".into()));
    }
    let clean = GslrApproximation::clean(model);
    let mut records = Vec::with_capacity(measurements.len());
    let mut belief = init.clone();
    for y in measurements {
        if y.len() != model.measurement_dim() {
            return Err(Error::Dimension {
                context: "measurement",
                expected: model.measurement_dim(),
                found: y.len(),
            });
        }
        let prior = predict(&belief, model)?;
        let (posterior, innovation, skipped) = kalman_update(&prior, y, model)?;
        belief = posterior.clone();
        records.push(FilterStepRecord {
            prior,
            posterior,
            gslr: clean.clone(),
            innovation,
            skipped_update: skipped,
        });
    }
    Ok(records)
}

/// RTS backward pass over forward-pass records.
///
/// `K_s = P_{k|k} Aᵀ P_{k+1|k}⁻¹` is obtained from a Cholesky solve. If
/// `P_{k+1|k}` has no Cholesky factor, `1e-12 · trace/n` is added to its
/// diagonal once. A still-singular `P_{k+1|k}` is accepted only when the
/// gain equation `K_s P_{k+1|k} = P_{k|k} Aᵀ` remains solvable; otherwise the
/// failing (1-based) index of `P_{k+1|k}` is reported.
pub fn rts_backward(records: &[FilterStepRecord], model: &LinearGaussianModel) -> Result<SmootherResult> {
    let Some(last) = records.last() else {
        return Err(Error::InvalidArgument("no filter records to smooth".into()));
    };
    let t = records.len();
    let mut smoothed = vec![last.posterior.clone(); t];
    let mut gains = vec![Matrix::zeros(0, 0); t.saturating_sub(1)];
    for k in (0..t.saturating_sub(1)).rev() {
        let filtered = &records[k].posterior;
        let predicted = &records[k + 1].prior;
        let cross = &filtered.cov * model.a.transpose();
        let gain = solve_smoother_gain(&predicted.cov, &cross).ok_or(Error::SingularCovariance {
            context: "smoother predicted covariance",
            step: Some(k + 2),
        })?;
        let next = &smoothed[k + 1];
        let mean = &filtered.mean + &gain * (&next.mean - &predicted.mean);
        let cov =
            linalg::symmetrized(&filtered.cov + &gain * (&next.cov - &predicted.cov) * gain.transpose());
        smoothed[k] = GaussianBelief { mean, cov };
        gains[k] = gain;
    }
    Ok(SmootherResult { smoothed, gains })
}

fn solve_smoother_gain(predicted_cov: &Matrix, cross: &Matrix) -> Option<Matrix> {
    if let Some(gain) = linalg::solve_right_spd(predicted_cov, cross) {
        return Some(gain);
    }
    let n = predicted_cov.nrows().max(1) as f64;
    let jitter = SMOOTHER_JITTER * predicted_cov.trace().abs() / n;
    let bumped = predicted_cov + Matrix::identity(predicted_cov.nrows(), predicted_cov.ncols()) * jitter;
    if jitter > 0.0 {
        if let Some(gain) = linalg::solve_right_spd(&bumped, cross) {
            return Some(gain);
        }
    }
    // Singular prediction (e.g. a perfectly known state with no process
    // noise): the gain exists iff the cross-covariance lies in the row space
    // of P_{k+1|k}, in which case the pseudo-inverse gives it.
    let scale = linalg::max_abs(predicted_cov).max(linalg::max_abs(cross));
    let pinv = predicted_cov
        .clone()
        .pseudo_inverse(1e-12 * scale.max(f64::MIN_POSITIVE))
        .ok()?;
    let gain = cross * pinv;
    let residual = linalg::max_abs(&(&gain * predicted_cov - cross));
    (residual <= 1e-9 * scale.max(f64::MIN_POSITIVE)).then_some(gain)
}

/// Attack-aware filter followed by the RTS smoother.
pub fn proposed_kf_rtss(
    init: &GaussianBelief,
    measurements: &[Vector],
    theta: &ThetaParams,
    options: FilterOptions,
) -> Result<KfsOutput> {
    let filtered = filter_pass_with(init, measurements, theta, options)?;
    let smoothed = rts_backward(&filtered, &theta.model)?;
    Ok(KfsOutput { filtered, smoothed })
}

/// Standard Kalman filter and RTS smoother, blind to the attack channel.
pub fn standard_kf_rtss(
    init: &GaussianBelief,
    measurements: &[Vector],
    model: &LinearGaussianModel,
) -> Result<KfsOutput> {
    let filtered = standard_filter_pass(init, measurements, model)?;
    let smoothed = rts_backward(&filtered, model)?;
    Ok(KfsOutput { filtered, smoothed })
}
