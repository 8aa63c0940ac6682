//! The adversarial measurement channel.
//!
//! A clean measurement `z` is received as
//!
//! ```text
//! y = ξ_b z + (1 - ξ_b) ξ_c (1 + ξ_m (m - 1)) (z + ξ_a a)
//! ```
//!
//! with independent Bernoulli indicators `ξ_b ~ B(α_b)` (measurement passes
//! untouched), `ξ_c ~ B(α_c)` (not blocked), `ξ_m ~ B(α_m)` (multiplicative
//! injection), `ξ_a ~ B(α_a)` (additive injection), a scalar gain
//! `m ~ N(μ_m, σ_m²)` and a bias `a ~ N(μ_a, Σ_a)`. A blocked measurement is
//! received as the zero vector.
//!
//! Within a step the draws happen in the fixed order `ξ_b, ξ_c, ξ_m, ξ_a`,
//! then `m` (only if `ξ_m = 1`), then `a` (only if `ξ_a = 1`). Steps are i.i.d.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result, Violation};
use crate::linalg::GaussianSampler;
use crate::model::{check_covariance, Trajectory};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct AttackParams {
    /// Probability of an additive injection.
    pub alpha_a: f64,
    /// Probability that the measurement is delivered unmodified.
    pub alpha_b: f64,
    /// Probability that a non-bypassed measurement is not blocked.
    pub alpha_c: f64,
    /// Probability of a multiplicative injection.
    pub alpha_m: f64,
    pub mu_a: Vector,
    pub sigma_a: Matrix,
    pub mu_m: f64,
    pub sigma_m_sq: f64,
}

impl AttackParams {
    /// A channel that never attacks (`α_b = 1`), for measurements of size `nz`.
    pub fn disabled(nz: usize) -> Self {
        Self {
            alpha_a: 0.0,
            alpha_b: 1.0,
            alpha_c: 1.0,
            alpha_m: 0.0,
            mu_a: Vector::zeros(nz),
            sigma_a: Matrix::zeros(nz, nz),
            mu_m: 1.0,
            sigma_m_sq: 0.0,
        }
    }

    pub fn measurement_dim(&self) -> usize {
        self.mu_a.len()
    }

    /// Every violated invariant, or `Ok(())`.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        for (name, value) in [
            ("alpha_a", self.alpha_a),
            ("alpha_b", self.alpha_b),
            ("alpha_c", self.alpha_c),
            ("alpha_m", self.alpha_m),
        ] {
            if !(0.0..=1.0).contains(&value) {
                out.push(Violation::ProbabilityOutOfRange {
                    name: name.into(),
                    value,
                });
            }
        }
        if self.mu_a.iter().any(|v| !v.is_finite()) {
            out.push(Violation::NonFinite { name: "mu_a".into() });
        }
        check_covariance("Sigma_a", &self.sigma_a, self.mu_a.len(), false, &mut out);
        if !self.mu_m.is_finite() {
            out.push(Violation::NonFinite { name: "mu_m".into() });
        }
        if !self.sigma_m_sq.is_finite() {
            out.push(Violation::NonFinite {
                name: "sigma_m_sq".into(),
            });
        } else if self.sigma_m_sq < 0.0 {
            out.push(Violation::Negative {
                name: "sigma_m_sq".into(),
                value: self.sigma_m_sq,
            });
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// `1 + α_m (μ_m - 1)`, the mean multiplicative gain given an FDI step.
    pub fn mean_gain(&self) -> f64 {
        1.0 + self.alpha_m * (self.mu_m - 1.0)
    }

    /// `E[(1 - ξ_b) ξ_c (1 + ξ_m (m - 1))]`, the mean of the mixing coefficient
    /// applied to the corrupted branch.
    pub fn mean_fdi_coefficient(&self) -> f64 {
        (1.0 - self.alpha_b) * self.alpha_c * self.mean_gain()
    }
}

/// One draw of the attack variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRealization {
    pub xi_a: bool,
    pub xi_b: bool,
    pub xi_c: bool,
    pub xi_m: bool,
    /// Present iff `xi_a`.
    pub a: Option<Vector>,
    /// Present iff `xi_m`.
    pub m: Option<f64>,
}

impl AttackRealization {
    /// Build a realization, checking that the sampled values are present
    /// exactly when their indicators fire.
    pub fn new(
        xi_a: bool,
        xi_b: bool,
        xi_c: bool,
        xi_m: bool,
        a: Option<Vector>,
        m: Option<f64>,
    ) -> Result<Self> {
        if xi_a != a.is_some() || xi_m != m.is_some() {
            return Err(Error::InvalidArgument(
                "attack realization: a must be present iff xi_a, m iff xi_m".into(),
            ));
        }
        Ok(Self {
            xi_a,
            xi_b,
            xi_c,
            xi_m,
            a,
            m,
        })
    }

    /// Received measurement for clean measurement `z`.
    pub fn apply(&self, z: &Vector) -> Result<Vector> {
        if let Some(a) = &self.a {
            if a.len() != z.len() {
                return Err(Error::Dimension {
                    context: "additive attack vector",
                    expected: z.len(),
                    found: a.len(),
                });
            }
        }
        if self.xi_b {
            return Ok(z.clone());
        }
        if !self.xi_c {
            return Ok(Vector::zeros(z.len()));
        }
        let gain = match self.m {
            Some(m) if self.xi_m => m,
            _ => 1.0,
        };
        let mut y = z.clone();
        if let Some(a) = &self.a {
            y += a;
        }
        Ok(y * gain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackType {
    NoAttack,
    AdditiveFdia,
    MultiplicativeFdia,
    SimultaneousFdia,
    Dos,
}

impl AttackType {
    pub const ALL: [AttackType; 5] = [
        AttackType::NoAttack,
        AttackType::AdditiveFdia,
        AttackType::MultiplicativeFdia,
        AttackType::SimultaneousFdia,
        AttackType::Dos,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AttackType::NoAttack => "no_attack",
            AttackType::AdditiveFdia => "additive_fdia",
            AttackType::MultiplicativeFdia => "multiplicative_fdia",
            AttackType::SimultaneousFdia => "simultaneous_fdia",
            AttackType::Dos => "dos",
        }
    }
}

impl fmt::Display for AttackType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AttackType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackType::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown attack type {s:?}")))
    }
}

pub fn classify_attack(r: &AttackRealization) -> AttackType {
    match (r.xi_b, r.xi_c, r.xi_a, r.xi_m) {
        (true, _, _, _) => AttackType::NoAttack,
        (false, false, _, _) => AttackType::Dos,
        (false, true, true, false) => AttackType::AdditiveFdia,
        (false, true, false, true) => AttackType::MultiplicativeFdia,
        (false, true, true, true) => AttackType::SimultaneousFdia,
        (false, true, false, false) => AttackType::NoAttack,
    }
}

/// Sampler for a fixed parameter set. Holds the factor of `Σ_a` so repeated
/// draws do not refactor it.
#[derive(Debug, Clone)]
pub struct AttackChannel {
    params: AttackParams,
    bias: GaussianSampler,
    gain_std: f64,
}

impl AttackChannel {
    pub fn new(params: AttackParams) -> Result<Self> {
        params.validate().map_err(Error::InvalidAttack)?;
        Ok(Self {
            bias: GaussianSampler::new(params.mu_a.clone(), &params.sigma_a),
            gain_std: params.sigma_m_sq.sqrt(),
            params,
        })
    }

    pub fn params(&self) -> &AttackParams {
        &self.params
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> AttackRealization {
        let p = &self.params;
        let xi_b = rng.random::<f64>() < p.alpha_b;
        let xi_c = rng.random::<f64>() < p.alpha_c;
        let xi_m = rng.random::<f64>() < p.alpha_m;
        let xi_a = rng.random::<f64>() < p.alpha_a;
        let m = xi_m.then(|| p.mu_m + self.gain_std * rng.sample::<f64, _>(StandardNormal));
        let a = xi_a.then(|| self.bias.sample(rng));
        AttackRealization {
            xi_a,
            xi_b,
            xi_c,
            xi_m,
            a,
            m,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, z: &Vector, rng: &mut R) -> Result<(Vector, AttackRealization)> {
        if z.len() != self.params.measurement_dim() {
            return Err(Error::Dimension {
                context: "measurement vs mu_a",
                expected: self.params.measurement_dim(),
                found: z.len(),
            });
        }
        let realization = self.draw(rng);
        let y = realization.apply(z)?;
        Ok((y, realization))
    }
}

/// Pass one clean measurement through the attack channel.
pub fn sample_attack<R: Rng + ?Sized>(
    z: &Vector,
    params: &AttackParams,
    rng: &mut R,
) -> Result<(Vector, AttackRealization)> {
    AttackChannel::new(params.clone())?.sample(z, rng)
}

/// Attack every clean measurement of a trajectory independently.
pub fn attack_sequence<R: Rng + ?Sized>(
    traj: &Trajectory,
    params: &AttackParams,
    rng: &mut R,
) -> Result<Vec<(Vector, AttackRealization)>> {
    let channel = AttackChannel::new(params.clone())?;
    traj.clean_measurements
        .iter()
        .map(|z| channel.sample(z, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    pub(crate) fn paper_params() -> AttackParams {
        AttackParams {
            alpha_a: 0.3,
            alpha_b: 0.7,
            alpha_c: 0.9,
            alpha_m: 0.1,
            mu_a: v(&[0.7, 0.9]),
            sigma_a: Matrix::from_diagonal(&v(&[1.0, 0.5])),
            mu_m: 0.95,
            sigma_m_sq: 0.01,
        }
    }

    fn realization(xi_a: bool, xi_b: bool, xi_c: bool, xi_m: bool) -> AttackRealization {
        AttackRealization::new(
            xi_a,
            xi_b,
            xi_c,
            xi_m,
            xi_a.then(|| v(&[1.0, 1.0])),
            xi_m.then_some(2.0),
        )
        .unwrap()
    }

    /// The unsimplified two-branch form of the channel.
    fn apply_two_branch(r: &AttackRealization, z: &Vector) -> Vector {
        let f = |b: bool| if b { 1.0 } else { 0.0 };
        let a = r.a.clone().unwrap_or_else(|| Vector::zeros(z.len()));
        let m = r.m.unwrap_or(0.0);
        let injected = z + &a * f(r.xi_a);
        z * f(r.xi_b)
            + (&injected * (f(r.xi_m) * m) + &injected * (1.0 - f(r.xi_m))) * ((1.0 - f(r.xi_b)) * f(r.xi_c))
    }

    #[test]
    fn bypass_returns_clean_measurement() {
        for xi_a in [false, true] {
            for xi_c in [false, true] {
                for xi_m in [false, true] {
                    let r = realization(xi_a, true, xi_c, xi_m);
                    assert_eq!(r.apply(&v(&[3.0, 4.0])).unwrap(), v(&[3.0, 4.0]));
                }
            }
        }
    }

    #[test]
    fn dos_returns_zero() {
        let r = realization(true, false, false, true);
        assert_eq!(r.apply(&v(&[3.0, 4.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn simultaneous_injection() {
        let r = realization(true, false, true, true);
        assert_eq!(r.apply(&v(&[1.0, 2.0])).unwrap(), v(&[4.0, 6.0]));
    }

    #[test]
    fn realization_consistency_is_enforced() {
        assert!(AttackRealization::new(true, false, true, false, None, None).is_err());
        assert!(AttackRealization::new(false, false, true, true, None, None).is_err());
    }

    #[test]
    fn classification_table() {
        use AttackType::*;
        assert_eq!(
            classify_attack(&realization(true, false, true, false)),
            AdditiveFdia
        );
        assert_eq!(
            classify_attack(&realization(false, false, true, true)),
            MultiplicativeFdia
        );
        assert_eq!(
            classify_attack(&realization(true, false, true, true)),
            SimultaneousFdia
        );
        assert_eq!(classify_attack(&realization(true, false, false, true)), Dos);
        assert_eq!(classify_attack(&realization(false, false, true, false)), NoAttack);
        assert_eq!(classify_attack(&realization(true, true, false, true)), NoAttack);
    }

    #[test]
    fn attack_type_labels_round_trip() {
        for t in AttackType::ALL {
            assert_eq!(t.label().parse::<AttackType>().unwrap(), t);
        }
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut p = paper_params();
        p.alpha_c = 1.3;
        p.sigma_a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        p.sigma_m_sq = -1.0;
        let errs = p.validate().unwrap_err();
        assert_eq!(errs.len(), 3, "{errs:?}");
        assert!(paper_params().validate().is_ok());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let z = v(&[1.0, 2.0, 3.0]);
        assert!(sample_attack(&z, &paper_params(), &mut seeded(0)).is_err());
    }

    #[test]
    fn always_bypass_and_always_dos_sequences() {
        let traj = Trajectory {
            states: vec![Vector::zeros(4); 20],
            clean_measurements: (0..20).map(|k| v(&[k as f64, 1.0])).collect(),
        };
        let mut clean = paper_params();
        clean.alpha_b = 1.0;
        let out = attack_sequence(&traj, &clean, &mut seeded(5)).unwrap();
        assert_eq!(out.len(), 20);
        for ((y, _), z) in out.iter().zip(&traj.clean_measurements) {
            assert_eq!(y, z);
        }
        let mut dos = paper_params();
        dos.alpha_b = 0.0;
        dos.alpha_c = 0.0;
        let out = attack_sequence(&traj, &dos, &mut seeded(5)).unwrap();
        assert!(out.iter().all(|(y, _)| y.iter().all(|&e| e == 0.0)));
    }

    #[test]
    fn indicator_frequencies_match_probabilities() {
        let channel = AttackChannel::new(paper_params()).unwrap();
        let mut rng = seeded(11);
        let n = 200_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let r = channel.draw(&mut rng);
            counts[0] += r.xi_a as usize;
            counts[1] += r.xi_b as usize;
            counts[2] += r.xi_c as usize;
            counts[3] += r.xi_m as usize;
        }
        for (count, alpha) in counts.iter().zip([0.3, 0.7, 0.9, 0.1]) {
            let freq = *count as f64 / n as f64;
            let se = (alpha * (1.0 - alpha) / n as f64).sqrt();
            assert!((freq - alpha).abs() < 3.0 * se, "freq {freq} vs {alpha}");
        }
    }

    #[test]
    fn no_attack_frequency_matches_closed_form() {
        let channel = AttackChannel::new(paper_params()).unwrap();
        let mut rng = seeded(2024);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| classify_attack(&channel.draw(&mut rng)) == AttackType::NoAttack)
            .count();
        let expected = 0.7 + 0.3 * 0.9 * 0.7 * 0.9;
        let freq = hits as f64 / n as f64;
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((freq - expected).abs() < 4.0 * se, "{freq} vs {expected}");
    }

    #[test]
    fn seeded_draws_reproduce() {
        let z = v(&[10.0, -3.0]);
        let a = sample_attack(&z, &paper_params(), &mut seeded(77)).unwrap();
        let b = sample_attack(&z, &paper_params(), &mut seeded(77)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn simplified_and_two_branch_forms_agree(
            xi in prop::array::uniform4(any::<bool>()),
            a in prop::array::uniform2(-10.0..10.0f64),
            m in -3.0..3.0f64,
            z in prop::array::uniform2(-100.0..100.0f64),
        ) {
            let r = AttackRealization::new(
                xi[0], xi[1], xi[2], xi[3],
                xi[0].then(|| v(&a)),
                xi[3].then_some(m),
            ).unwrap();
            let z = v(&z);
            let y = r.apply(&z).unwrap();
            let y2 = apply_two_branch(&r, &z);
            prop_assert!((y - y2).abs().max() <= 1e-12);
        }

        #[test]
        fn bypass_ignores_every_other_indicator(
            xi in prop::array::uniform3(any::<bool>()),
            z in prop::array::uniform2(-100.0..100.0f64),
        ) {
            let r = AttackRealization::new(
                xi[0], true, xi[1], xi[2],
                xi[0].then(|| v(&[5.0, 5.0])),
                xi[2].then_some(-2.0),
            ).unwrap();
            prop_assert_eq!(r.apply(&v(&z)).unwrap(), v(&z));
        }
    }
}
