//! Statistical linear regression of the attacked measurement.
//!
//! Given the predicted density `N(x̂, P)`, the attacked measurement `y` is
//! replaced by the affine surrogate
//!
//! ```text
//! y ≈ H⁺ x + b⁺ + ν̃,   ν̃ ~ N(0, Ω̃)
//! H⁺ = P_yx P⁻¹,   b⁺ = ŷ - H⁺ x̂,   Ω̃ = P_yy - H⁺ P H⁺ᵀ
//! ```
//!
//! where `(ŷ, P_yy, P_yx)` are the exact first two joint moments of `(y, x)`.
//!
//! Write the received measurement as `y = w z + C ξ_a a` with
//! `C = (1 - ξ_b) ξ_c (1 + ξ_m (m - 1))` and `w = ξ_b + C`. The indicators
//! `ξ_b` and `C` are never simultaneously nonzero, so `Cov(ξ_b, C) = -α_b E[C]`.
//! [`MomentForm::Exact`] keeps that covariance in `E[V[y | x]]`;
//! [`MomentForm::WithoutCoupling`] treats `ξ_b` and `C` as uncorrelated, which
//! overstates `P_yy` whenever both the bypass and the corrupted branch have
//! positive probability. Both forms coincide for `α_b ∈ {0, 1}` or `α_c = 0`.

use rand::Rng;
use rayon::prelude::*;

use crate::attack::{AttackChannel, AttackParams};
use crate::error::{Error, Result};
use crate::linalg::{self, GaussianSampler};
use crate::model::{validate_model_structure, GaussianBelief, LinearGaussianModel};
use crate::rng::substream;
use crate::{Matrix, Vector};

/// Relative eigenvalue threshold below which the prior covariance is treated as singular.
pub const PRIOR_SINGULAR_RTOL: f64 = 1e-12;
/// Negative eigenvalues of `Ω̃` smaller than this (relative) are clamped to zero.
pub const OMEGA_CLAMP_RTOL: f64 = 1e-9;

/// Affine surrogate `(H⁺, b⁺, Ω̃)` of the attacked measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct GslrApproximation {
    pub h_plus: Matrix,
    pub b_plus: Vector,
    pub omega: Matrix,
}

impl GslrApproximation {
    /// The clean measurement model `(H, 0, R)`.
    pub fn clean(model: &LinearGaussianModel) -> Self {
        Self {
            h_plus: model.h.clone(),
            b_plus: Vector::zeros(model.measurement_dim()),
            omega: model.r.clone(),
        }
    }

    /// Moments `(ŷ, P_yy, P_yx)` implied by the surrogate under `N(x̂, P)`.
    pub fn implied_moments(&self, prior: &GaussianBelief) -> PredictedMeasurementMoments {
        let hp = &self.h_plus * &prior.cov;
        PredictedMeasurementMoments {
            y_hat: &self.h_plus * &prior.mean + &self.b_plus,
            p_yy: linalg::symmetrized(&hp * self.h_plus.transpose() + &self.omega),
            p_yx: hp,
        }
    }
}

/// `ŷ`, `P_yy` (`n_z × n_z`) and `P_yx` (`n_z × n_x`).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedMeasurementMoments {
    pub y_hat: Vector,
    pub p_yy: Matrix,
    pub p_yx: Matrix,
}

/// Everything the estimator knows: dynamics, sensor and attack statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaParams {
    pub model: LinearGaussianModel,
    pub attack: AttackParams,
}

impl ThetaParams {
    pub fn new(model: LinearGaussianModel, attack: AttackParams) -> Result<Self> {
        let theta = Self { model, attack };
        theta.validate()?;
        Ok(theta)
    }

    /// `Q` and `R` need only be PSD here; a singular innovation covariance
    /// is handled by the filter.
    pub fn validate(&self) -> Result<()> {
        validate_model_structure(&self.model).map_err(Error::InvalidModel)?;
        self.attack.validate().map_err(Error::InvalidAttack)?;
        if self.attack.measurement_dim() != self.model.measurement_dim() {
            return Err(Error::Dimension {
                context: "mu_a vs measurement dimension",
                expected: self.model.measurement_dim(),
                found: self.attack.measurement_dim(),
            });
        }
        Ok(())
    }
}

/// How `E[V[y | x]]` treats the coupling between the bypass indicator and
/// the corrupted-branch coefficient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MomentForm {
    /// Exact second moments of the attacked measurement.
    #[default]
    Exact,
    /// Treats ξ_b and the corrupted-branch coefficient as uncorrelated, dropping `Cov(ξ_b, C)`.
    WithoutCoupling,
}

/// `E[C²]` for `C = (1 - ξ_b) ξ_c (1 + ξ_m (m - 1))`.
pub fn lemma1_squared_mass(attack: &AttackParams) -> f64 {
    let gain_second_moment =
        (1.0 - attack.alpha_m) + attack.alpha_m * (attack.sigma_m_sq + attack.mu_m * attack.mu_m);
    (1.0 - attack.alpha_b) * attack.alpha_c * gain_second_moment
}

/// `E[(C - E[C])²]`, the spread of the corrupted-branch coefficient.
pub fn lemma1_centered_mass(attack: &AttackParams) -> f64 {
    let p = (1.0 - attack.alpha_b) * attack.alpha_c;
    let gain_second_moment =
        (1.0 - attack.alpha_m) + attack.alpha_m * (attack.mu_m * attack.mu_m + attack.sigma_m_sq);
    let c = attack.mean_gain();
    p * (gain_second_moment - p * c * c)
}

/// Covariance of the additive injection `ξ_a a`:
/// `α_a Σ_a + α_a (1 - α_a) μ_a μ_aᵀ`.
pub fn lemma1_additive_cov(attack: &AttackParams) -> Matrix {
    let mu = &attack.mu_a;
    &attack.sigma_a * attack.alpha_a + (mu * mu.transpose()) * (attack.alpha_a * (1.0 - attack.alpha_a))
}

/// `α_b + (1 - α_b) α_c (1 + α_m (μ_m - 1))`: the slope of `E[y | x]` in `H x`.
pub fn cross_cov_coefficient(attack: &AttackParams) -> f64 {
    attack.alpha_b + attack.mean_fdi_coefficient()
}

/// Expanded coefficient of `H P Hᵀ` in `V_pr[E[y | x]]`:
/// `α_b² + 2 α_b (1 - α_b) α_c c + (1 - α_b)² α_c² c²`.
pub fn mean_spread_coefficient(attack: &AttackParams) -> f64 {
    let ab = attack.alpha_b;
    let c = attack.mean_gain();
    let p = (1.0 - ab) * attack.alpha_c;
    ab * ab + 2.0 * ab * p * c + p * p * c * c
}

fn check_dims(prior: &GaussianBelief, theta: &ThetaParams) -> Result<()> {
    let nx = theta.model.state_dim();
    if prior.dim() != nx || prior.cov.nrows() != nx || prior.cov.ncols() != nx {
        return Err(Error::Dimension {
            context: "prior vs state dimension",
            expected: nx,
            found: prior.dim(),
        });
    }
    if theta.attack.measurement_dim() != theta.model.measurement_dim() {
        return Err(Error::Dimension {
            context: "mu_a vs measurement dimension",
            expected: theta.model.measurement_dim(),
            found: theta.attack.measurement_dim(),
        });
    }
    Ok(())
}

/// `ŷ = α_b H x̂ + (1 - α_b) α_c (1 + α_m (μ_m - 1)) (H x̂ + α_a μ_a)`.
pub fn predicted_mean(prior: &GaussianBelief, theta: &ThetaParams) -> Result<Vector> {
    check_dims(prior, theta)?;
    let attack = &theta.attack;
    let hx = &theta.model.h * &prior.mean;
    let cbar = attack.mean_fdi_coefficient();
    Ok(&hx * attack.alpha_b + (&hx + &attack.mu_a * attack.alpha_a) * cbar)
}

/// `P_yy` in the exact form.
pub fn predicted_cov(prior: &GaussianBelief, theta: &ThetaParams) -> Result<Matrix> {
    predicted_cov_with(prior, theta, MomentForm::Exact)
}

/// `P_yy = E_pr[V[y | x]] + V_pr[E[y | x]]`.
pub fn predicted_cov_with(prior: &GaussianBelief, theta: &ThetaParams, form: MomentForm) -> Result<Matrix> {
    check_dims(prior, theta)?;
    let attack = &theta.attack;
    let h = &theta.model.h;
    let (ab, aa) = (attack.alpha_b, attack.alpha_a);
    let mu_a = &attack.mu_a;

    let squared = lemma1_squared_mass(attack);
    let centered = lemma1_centered_mass(attack);
    let injection = lemma1_additive_cov(attack);
    // Cov(ξ_b, C): the bypass and corrupted branches are mutually exclusive.
    let coupling = match form {
        MomentForm::Exact => -ab * attack.mean_fdi_coefficient(),
        MomentForm::WithoutCoupling => 0.0,
    };

    let hp = h * &prior.cov;
    let hpht = &hp * h.transpose();
    let u = h * &prior.mean;
    let second_moment = &hpht + &u * u.transpose();
    let u_mu = &u * mu_a.transpose();
    let mu_mu = mu_a * mu_a.transpose();

    // E_pr[V[y | x]]
    let mut p_yy = &second_moment * (ab * (1.0 - ab) + centered + 2.0 * coupling)
        + (&u_mu + u_mu.transpose()) * ((centered + coupling) * aa)
        + &mu_mu * (centered * aa * aa)
        + &theta.model.r * (ab + squared)
        + injection * squared;
    // V_pr[E[y | x]]
    p_yy += hpht * mean_spread_coefficient(attack);
    Ok(linalg::symmetrized(p_yy))
}

/// `P_yx = (α_b + (1 - α_b) α_c (1 + α_m (μ_m - 1))) H P`.
pub fn predicted_cross_cov(prior: &GaussianBelief, theta: &ThetaParams) -> Result<Matrix> {
    check_dims(prior, theta)?;
    Ok((&theta.model.h * &prior.cov) * cross_cov_coefficient(&theta.attack))
}

pub fn predicted_moments(
    prior: &GaussianBelief,
    theta: &ThetaParams,
    form: MomentForm,
) -> Result<PredictedMeasurementMoments> {
    Ok(PredictedMeasurementMoments {
        y_hat: predicted_mean(prior, theta)?,
        p_yy: predicted_cov_with(prior, theta, form)?,
        p_yx: predicted_cross_cov(prior, theta)?,
    })
}

/// Surrogate from the exact moments.
pub fn gslr_params(prior: &GaussianBelief, theta: &ThetaParams) -> Result<GslrApproximation> {
    gslr_params_with(prior, theta, MomentForm::Exact)
}

pub fn gslr_params_with(
    prior: &GaussianBelief,
    theta: &ThetaParams,
    form: MomentForm,
) -> Result<GslrApproximation> {
    let moments = predicted_moments(prior, theta, form)?;
    gslr_from_moments(prior, &moments)
}

/// Regress the measurement moments onto the prior.
///
/// Fails with [`Error::SingularCovariance`] when `λ_min(P) ≤ 1e-12 λ_max(P)`,
/// and with [`Error::NotPsd`] when `Ω̃` has a negative eigenvalue beyond the
/// clamp tolerance.
pub fn gslr_from_moments(
    prior: &GaussianBelief,
    moments: &PredictedMeasurementMoments,
) -> Result<GslrApproximation> {
    if !linalg::is_well_conditioned_spd(&prior.cov, PRIOR_SINGULAR_RTOL) {
        return Err(Error::SingularCovariance {
            context: "GSLR prior covariance",
            step: None,
        });
    }
    let h_plus = linalg::solve_right_spd(&prior.cov, &moments.p_yx).ok_or(Error::SingularCovariance {
        context: "GSLR prior covariance",
        step: None,
    })?;
    let b_plus = &moments.y_hat - &h_plus * &prior.mean;
    let omega = linalg::symmetrized(&moments.p_yy - &h_plus * &prior.cov * h_plus.transpose());

    let (lo, hi) = linalg::eig_range(&omega);
    let omega = if lo >= 0.0 {
        omega
    } else if lo >= -OMEGA_CLAMP_RTOL * hi.abs().max(linalg::max_abs(&moments.p_yy)) {
        linalg::clamp_psd(&omega)
    } else {
        return Err(Error::NotPsd {
            context: "GSLR noise covariance",
            min_eigenvalue: lo,
            step: None,
        });
    };
    Ok(GslrApproximation {
        h_plus,
        b_plus,
        omega,
    })
}

/// Fallback regression for a singular prior: `H⁺ = P_yx P⁺` with the
/// Moore–Penrose pseudo-inverse, so directions with no prior spread carry no
/// slope and their uncertainty lands in `b⁺` and `Ω̃`.
pub fn gslr_from_moments_pinv(
    prior: &GaussianBelief,
    moments: &PredictedMeasurementMoments,
) -> Result<GslrApproximation> {
    let scale = linalg::max_abs(&prior.cov);
    let pinv = prior
        .cov
        .clone()
        .pseudo_inverse(PRIOR_SINGULAR_RTOL * scale.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let h_plus = &moments.p_yx * pinv;
    let b_plus = &moments.y_hat - &h_plus * &prior.mean;
    let omega = linalg::symmetrized(&moments.p_yy - &h_plus * &prior.cov * h_plus.transpose());
    let (lo, hi) = linalg::eig_range(&omega);
    let omega = if lo >= 0.0 {
        omega
    } else if lo >= -OMEGA_CLAMP_RTOL * hi.abs().max(linalg::max_abs(&moments.p_yy)) {
        linalg::clamp_psd(&omega)
    } else {
        return Err(Error::NotPsd {
            context: "GSLR noise covariance",
            min_eigenvalue: lo,
            step: None,
        });
    };
    Ok(GslrApproximation {
        h_plus,
        b_plus,
        omega,
    })
}

/// Streaming mean and co-moment accumulator (Welford updates, Chan merges).
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    count: u64,
    mean: Vec<f64>,
    comoment: Vec<f64>,
    delta: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
            delta: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    #[allow(clippy::needless_range_loop)]
    pub fn push(&mut self, sample: &[f64]) {
        let d = self.dim();
        self.count += 1;
        let n = self.count as f64;
        for i in 0..d {
            self.delta[i] = sample[i] - self.mean[i];
            self.mean[i] += self.delta[i] / n;
        }
        for i in 0..d {
            let after = sample[i] - self.mean[i];
            for j in 0..d {
                self.comoment[i * d + j] += after * self.delta[j];
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let d = self.dim();
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..d {
            self.delta[i] = other.mean[i] - self.mean[i];
        }
        for i in 0..d {
            for j in 0..d {
                self.comoment[i * d + j] +=
                    other.comoment[i * d + j] + self.delta[i] * self.delta[j] * na * nb / n;
            }
        }
        for i in 0..d {
            self.mean[i] += self.delta[i] * nb / n;
        }
        self.count += other.count;
    }

    pub fn mean(&self) -> Vector {
        Vector::from_column_slice(&self.mean)
    }

    /// Unbiased sample covariance; zero for fewer than two samples.
    pub fn covariance(&self) -> Matrix {
        let d = self.dim();
        if self.count < 2 {
            return Matrix::zeros(d, d);
        }
        let scale = 1.0 / (self.count as f64 - 1.0);
        linalg::symmetrized(Matrix::from_row_slice(d, d, &self.comoment) * scale)
    }
}

const ORACLE_BLOCK: usize = 1 << 16;

/// Monte Carlo estimate of `(ŷ, P_yy, P_yx)`: draw `x ~ prior`, `z = H x + ν`,
/// pass `z` through the attack channel and accumulate joint moments of `(y, x)`.
///
/// Samples are generated in fixed blocks of 65536, block `b` using ChaCha
/// stream `b` of `seed`, and merged in block order, so the result depends only
/// on `(prior, theta, samples, seed)` and not on the thread count.
pub fn mc_moment_oracle(
    prior: &GaussianBelief,
    theta: &ThetaParams,
    samples: usize,
    seed: u64,
) -> Result<PredictedMeasurementMoments> {
    if samples == 0 {
        return Err(Error::InvalidArgument("oracle needs at least one sample".into()));
    }
    check_dims(prior, theta)?;
    let channel = AttackChannel::new(theta.attack.clone())?;
    let state = GaussianSampler::new(prior.mean.clone(), &prior.cov);
    let noise = GaussianSampler::zero_mean(&theta.model.r);
    let (nx, nz) = (theta.model.state_dim(), theta.model.measurement_dim());

    let blocks = samples.div_ceil(ORACLE_BLOCK);
    let partials: Vec<MomentAccumulator> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = ORACLE_BLOCK.min(samples - b * ORACLE_BLOCK);
            let mut rng = substream(seed, b as u64);
            let mut acc = MomentAccumulator::new(nz + nx);
            let mut joint = vec![0.0; nz + nx];
            let mut scratch = vec![0.0; nx.max(nz)];
            let mut x = Vector::zeros(nx);
            let mut nu = vec![0.0; nz];
            for _ in 0..len {
                oracle_draw(
                    &state,
                    &noise,
                    &channel,
                    &theta.model.h,
                    &mut rng,
                    &mut x,
                    &mut nu,
                    &mut scratch,
                    &mut joint,
                );
                acc.push(&joint);
            }
            acc
        })
        .collect();

    let mut total = MomentAccumulator::new(nz + nx);
    for part in &partials {
        total.merge(part);
    }
    let mean = total.mean();
    let cov = total.covariance();
    Ok(PredictedMeasurementMoments {
        y_hat: mean.rows(0, nz).into_owned(),
        p_yy: cov.view((0, 0), (nz, nz)).into_owned(),
        p_yx: cov.view((0, nz), (nz, nx)).into_owned(),
    })
}

#[allow(clippy::too_many_arguments)]
fn oracle_draw<R: Rng + ?Sized>(
    state: &GaussianSampler,
    noise: &GaussianSampler,
    channel: &AttackChannel,
    h: &Matrix,
    rng: &mut R,
    x: &mut Vector,
    nu: &mut [f64],
    scratch: &mut [f64],
    joint: &mut [f64],
) {
    let (nz, nx) = (h.nrows(), h.ncols());
    state.sample_into(rng, scratch, x.as_mut_slice());
    noise.sample_into(rng, scratch, nu);
    let r = channel.draw(rng);
    let gain = if r.xi_b {
        1.0
    } else if !r.xi_c {
        0.0
    } else {
        r.m.unwrap_or(1.0)
    };
    for i in 0..nz {
        let mut z = nu[i];
        for j in 0..nx {
            z += h[(i, j)] * x[j];
        }
        let bias = match (&r.a, r.xi_b) {
            (Some(a), false) => a[i],
            _ => 0.0,
        };
        joint[i] = gain * (z + bias);
    }
    joint[nz..].copy_from_slice(x.as_slice());
}
