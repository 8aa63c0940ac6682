//! Coordinated-turn tracking scenario and the Monte Carlo harness.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::attack::{AttackChannel, AttackParams, AttackRealization};
use crate::error::{Error, Result};
use crate::filter::{proposed_kf_rtss, standard_kf_rtss, FilterOptions, KfsOutput};
use crate::gslr::ThetaParams;
use crate::model::{simulate_trajectory_split, GaussianBelief, LinearGaussianModel, Trajectory};
use crate::rng::run_streams;
use crate::{Matrix, Vector};

/// State layout of the coordinated-turn model: `[x₁, x₂, ẋ₁, ẋ₂]`.
pub const POSITION: [usize; 2] = [0, 1];
pub const VELOCITY: [usize; 2] = [2, 3];

/// Length of the initial transient excluded from trimmed RMSE means, seconds.
pub const TRANSIENT_SECONDS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CtScenario {
    /// Seconds.
    pub sample_time: f64,
    /// Radians per second.
    pub turn_rate: f64,
    pub model: LinearGaussianModel,
    /// Distribution of the true initial state; zero covariance for a known `x₀`.
    pub init_true: GaussianBelief,
    /// Estimator prior `N(x̂_{0|0}, P_{0|0})`.
    pub init_estimator: GaussianBelief,
    pub horizon: usize,
    pub attack: AttackParams,
}

impl CtScenario {
    pub fn theta(&self) -> Result<ThetaParams> {
        ThetaParams::new(self.model.clone(), self.attack.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_time > 0.0 && self.sample_time.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample time must be positive, got {}",
                self.sample_time
            )));
        }
        if self.turn_rate == 0.0 || !self.turn_rate.is_finite() {
            return Err(Error::InvalidArgument(
                "turn rate must be finite and nonzero".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        for (name, b) in [
            ("true initial state", &self.init_true),
            ("estimator prior", &self.init_estimator),
        ] {
            if b.dim() != 4 {
                return Err(Error::InvalidArgument(format!("{name} must have 4 components")));
            }
            if !b.is_valid() {
                return Err(Error::InvalidArgument(format!(
                    "{name} covariance is not symmetric PSD"
                )));
            }
        }
        self.theta().map(|_| ())
    }

    /// Number of leading steps that fall inside the first [`TRANSIENT_SECONDS`].
    pub fn transient_steps(&self) -> usize {
        transient_steps(self.sample_time)
    }
}

pub fn transient_steps(sample_time: f64) -> usize {
    (TRANSIENT_SECONDS / sample_time).round() as usize
}

/// Transition matrix of the coordinated-turn model with known turn rate.
pub fn ct_transition(sample_time: f64, turn_rate: f64) -> Matrix {
    let wt = turn_rate * sample_time;
    let (s, c) = wt.sin_cos();
    let w = turn_rate;
    #[rustfmt::skip]
    let a = Matrix::from_row_slice(4, 4, &[
        1.0, 0.0, s / w,         -(1.0 - c) / w,
        0.0, 1.0, (1.0 - c) / w, s / w,
        0.0, 0.0, c,             -s,
        0.0, 0.0, s,             c,
    ]);
    a
}

/// Coordinated-turn dynamics with position-only measurements `H = [I₂ 0₂]`.
pub fn build_ct_model(sample_time: f64, turn_rate: f64, q: Matrix, r: Matrix) -> Result<LinearGaussianModel> {
    if turn_rate == 0.0 || !turn_rate.is_finite() {
        return Err(Error::InvalidArgument(
            "turn rate must be finite and nonzero".into(),
        ));
    }
    if sample_time.is_nan() || sample_time <= 0.0 {
        return Err(Error::InvalidArgument("sample time must be positive".into()));
    }
    let mut h = Matrix::zeros(2, 4);
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    let model = LinearGaussianModel {
        a: ct_transition(sample_time, turn_rate),
        h,
        q,
        r,
    };
    crate::model::validate_model_structure(&model).map_err(Error::InvalidModel)?;
    Ok(model)
}

/// The aircraft tracking experiment: 20 s at 0.05 s sampling, turn rate
/// 3°/s, position measurements, mixed DoS and FDI attacks.
pub fn default_paper_scenario() -> CtScenario {
    let sample_time = 0.05;
    let turn_rate = 3.0_f64.to_radians();
    let diag = |xs: &[f64]| Matrix::from_diagonal(&Vector::from_row_slice(xs));
    let q = diag(&[0.3 * 0.3, 0.3 * 0.3, 0.05 * 0.05, 0.05 * 0.05]);
    let r = diag(&[12.0, 12.0]);
    let model = build_ct_model(sample_time, turn_rate, q, r).expect("paper model is valid");
    CtScenario {
        sample_time,
        turn_rate,
        model,
        init_true: GaussianBelief::deterministic(Vector::from_row_slice(&[200.0, 200.0, 15.0, 15.0])),
        init_estimator: GaussianBelief {
            mean: Vector::from_row_slice(&[250.0, 150.0, 12.0, 17.0]),
            cov: diag(&[10.0 * 10.0, 10.0 * 10.0, 4.0 * 4.0, 4.0 * 4.0]),
        },
        horizon: (20.0 / sample_time).round() as usize,
        attack: AttackParams {
            alpha_a: 0.3,
            alpha_b: 0.7,
            alpha_c: 0.9,
            alpha_m: 0.1,
            mu_a: Vector::from_row_slice(&[0.7, 0.9]),
            sigma_a: diag(&[1.0, 0.5]),
            mu_m: 0.95,
            sigma_m_sq: 0.10 * 0.10,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    ProposedKf,
    ProposedRtss,
    StandardKf,
    StandardRtss,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::ProposedKf,
        Method::ProposedRtss,
        Method::StandardKf,
        Method::StandardRtss,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::ProposedKf => "proposed_kf",
            Method::ProposedRtss => "proposed_rtss",
            Method::StandardKf => "standard_kf",
            Method::StandardRtss => "standard_rtss",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `proposed_kf` and `proposed-kf` spellings.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.label() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Everything produced by one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRun {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub measurements: Vec<Vector>,
    pub realizations: Vec<AttackRealization>,
    pub proposed: KfsOutput,
    pub standard: KfsOutput,
}

impl EstimationRun {
    /// Posterior (or smoothed) means of `method`, one per step.
    pub fn estimates(&self, method: Method) -> Vec<&Vector> {
        match method {
            Method::ProposedKf => self.proposed.filtered.iter().map(|r| &r.posterior.mean).collect(),
            Method::ProposedRtss => self.proposed.smoothed.smoothed.iter().map(|b| &b.mean).collect(),
            Method::StandardKf => self.standard.filtered.iter().map(|r| &r.posterior.mean).collect(),
            Method::StandardRtss => self.standard.smoothed.smoothed.iter().map(|b| &b.mean).collect(),
        }
    }

    /// Per-step squared position and velocity errors of `method`.
    pub fn squared_errors(&self, method: Method) -> (Vec<f64>, Vec<f64>) {
        let sq = |est: &Vector, truth: &Vector, idx: [usize; 2]| {
            idx.iter().map(|&i| (est[i] - truth[i]).powi(2)).sum::<f64>()
        };
        self.estimates(method)
            .into_iter()
            .zip(&self.trajectory.states)
            .map(|(est, truth)| (sq(est, truth, POSITION), sq(est, truth, VELOCITY)))
            .unzip()
    }
}

/// Ground truth and attacked measurements of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub trajectory: Trajectory,
    pub measurements: Vec<Vector>,
    pub realizations: Vec<AttackRealization>,
}

/// Simulate truth and attack the measurements, without estimation.
/// Seeds come from [`crate::rng::run_streams`].
pub fn simulate_measurements(scenario: &CtScenario, seed: u64) -> Result<SimulatedData> {
    let (mut process, mut measurement, mut attack_rng) = run_streams(seed);
    let trajectory = simulate_trajectory_split(
        &scenario.model,
        &scenario.init_true,
        scenario.horizon,
        &mut process,
        &mut measurement,
    )?;
    let channel = AttackChannel::new(scenario.attack.clone())?;
    let (measurements, realizations) = trajectory
        .clean_measurements
        .iter()
        .map(|z| channel.sample(z, &mut attack_rng))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(SimulatedData {
        trajectory,
        measurements,
        realizations,
    })
}

/// Simulate truth, attack the measurements and run both estimators.
pub fn simulate_run(scenario: &CtScenario, seed: u64, options: FilterOptions) -> Result<EstimationRun> {
    let theta = scenario.theta()?;
    let SimulatedData {
        trajectory,
        measurements,
        realizations,
    } = simulate_measurements(scenario, seed)?;
    let proposed = proposed_kf_rtss(&scenario.init_estimator, &measurements, &theta, options)?;
    let standard = standard_kf_rtss(&scenario.init_estimator, &measurements, &scenario.model)?;
    Ok(EstimationRun {
        seed,
        trajectory,
        measurements,
        realizations,
        proposed,
        standard,
    })
}

/// Per-step RMSE curves for each method over a set of Monte Carlo runs.
#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub methods: Vec<Method>,
    /// `position_rmse[i][k]` for `methods[i]`, metres.
    pub position_rmse: Vec<Vec<f64>>,
    /// `velocity_rmse[i][k]` for `methods[i]`, metres per second.
    pub velocity_rmse: Vec<Vec<f64>>,
    pub runs: usize,
    pub base_seed: u64,
    pub sample_time: f64,
}

impl McResult {
    pub fn horizon(&self) -> usize {
        self.position_rmse.first().map_or(0, Vec::len)
    }

    fn index(&self, method: Method) -> Option<usize> {
        self.methods.iter().position(|&m| m == method)
    }

    pub fn position(&self, method: Method) -> Option<&[f64]> {
        self.index(method).map(|i| self.position_rmse[i].as_slice())
    }

    pub fn velocity(&self, method: Method) -> Option<&[f64]> {
        self.index(method).map(|i| self.velocity_rmse[i].as_slice())
    }

    /// Time-average of an RMSE curve after dropping the first `skip` steps.
    pub fn time_mean(curve: &[f64], skip: usize) -> f64 {
        let tail = &curve[skip.min(curve.len())..];
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// `RMSE_k = sqrt((1/R) Σ_r ‖e_{r,k}‖²)` for errors indexed `[run][step]`.
pub fn rmse_from_errors(errors: &[Vec<Vector>]) -> Result<Vec<f64>> {
    let Some(first) = errors.first() else {
        return Err(Error::InvalidArgument("no runs to average".into()));
    };
    let steps = first.len();
    if steps == 0 || errors.iter().any(|run| run.len() != steps) {
        return Err(Error::InvalidArgument(
            "error array must be rectangular and nonempty".into(),
        ));
    }
    let mut sums = vec![0.0; steps];
    for run in errors {
        for (acc, e) in sums.iter_mut().zip(run) {
            *acc += e.norm_squared();
        }
    }
    Ok(rmse_from_sums(&sums, errors.len()))
}

fn rmse_from_sums(sums: &[f64], runs: usize) -> Vec<f64> {
    sums.iter().map(|s| (s / runs as f64).sqrt()).collect()
}

pub fn run_monte_carlo(
    scenario: &CtScenario,
    runs: usize,
    methods: &[Method],
    base_seed: u64,
) -> Result<McResult> {
    run_monte_carlo_inspect(
        scenario,
        runs,
        methods,
        base_seed,
        FilterOptions::default(),
        |_| (),
    )
    .map(|(r, _)| r)
}

/// Run `runs` independent replications (run `r` uses seed `base_seed + r`),
/// in parallel, and reduce the squared errors in run order so the result is
/// bit-identical regardless of scheduling. `inspect` sees every run and its
/// outputs are returned in run order.
pub fn run_monte_carlo_inspect<T, F>(
    scenario: &CtScenario,
    runs: usize,
    methods: &[Method],
    base_seed: u64,
    options: FilterOptions,
    inspect: F,
) -> Result<(McResult, Vec<T>)>
where
    T: Send,
    F: Fn(&EstimationRun) -> T + Sync,
{
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods selected".into()));
    }
    scenario.validate()?;

    type RunErrors = Vec<(Vec<f64>, Vec<f64>)>;
    let per_run: Vec<(RunErrors, T)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let seed = base_seed.wrapping_add(r as u64);
            let run = simulate_run(scenario, seed, options).map_err(|e| Error::Run {
                run: r,
                source: Box::new(e),
            })?;
            let errors = methods.iter().map(|&m| run.squared_errors(m)).collect();
            Ok((errors, inspect(&run)))
        })
        .collect::<Result<_>>()?;

    let horizon = scenario.horizon;
    let mut pos = vec![vec![0.0; horizon]; methods.len()];
    let mut vel = vec![vec![0.0; horizon]; methods.len()];
    let mut inspected = Vec::with_capacity(runs);
    for (errors, extra) in per_run {
        for (i, (p, v)) in errors.iter().enumerate() {
            for k in 0..horizon {
                pos[i][k] += p[k];
                vel[i][k] += v[k];
            }
        }
        inspected.push(extra);
    }
    Ok((
        McResult {
            methods: methods.to_vec(),
            position_rmse: pos.iter().map(|s| rmse_from_sums(s, runs)).collect(),
            velocity_rmse: vel.iter().map(|s| rmse_from_sums(s, runs)).collect(),
            runs,
            base_seed,
            sample_time: scenario.sample_time,
        },
        inspected,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn small_turn_rate_approaches_constant_velocity() {
        let a = ct_transition(1.0, 1e-8);
        #[rustfmt::skip]
        let cv = Matrix::from_row_slice(4, 4, &[
            1.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, 1.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ]);
        assert!((a - cv).abs().max() < 1e-6);
    }

    #[test]
    fn paper_transition_entry() {
        let s = default_paper_scenario();
        let w = 3.0_f64.to_radians();
        assert!((s.turn_rate - 0.0523598775598).abs() < 1e-12);
        assert_eq!(s.model.a[(3, 3)], (w * 0.05).cos());
    }

    #[test]
    fn zero_turn_rate_is_rejected() {
        assert!(build_ct_model(0.05, 0.0, Matrix::identity(4, 4), Matrix::identity(2, 2)).is_err());
    }

    #[test]
    fn paper_scenario_values() {
        let s = default_paper_scenario();
        assert_eq!(s.horizon, 400);
        assert_eq!(s.attack.alpha_b, 0.7);
        assert_eq!(s.init_estimator.cov[(0, 0)], 100.0);
        assert!((s.attack.sigma_m_sq - 0.01).abs() < 1e-17);
        assert_eq!(s.transient_steps(), 40);
        s.validate().unwrap();
    }

    #[test]
    fn rmse_examples() {
        let zero = vec![vec![Vector::zeros(2); 3]; 4];
        assert_eq!(rmse_from_errors(&zero).unwrap(), vec![0.0; 3]);
        assert_eq!(rmse_from_errors(&[vec![v(&[3.0, 4.0])]]).unwrap(), vec![5.0]);
        let two = [vec![v(&[3.0, 0.0])], vec![v(&[0.0, 4.0])]];
        assert!((rmse_from_errors(&two).unwrap()[0] - 12.5_f64.sqrt()).abs() < 1e-15);
        assert!(rmse_from_errors(&[]).is_err());
        assert!(rmse_from_errors(&[vec![v(&[1.0])], vec![]]).is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("proposed-kf".parse::<Method>().unwrap(), Method::ProposedKf);
        assert_eq!("standard_rtss".parse::<Method>().unwrap(), Method::StandardRtss);
        assert!("ekf".parse::<Method>().is_err());
    }

    #[test]
    fn noiseless_clean_run_tracks_exactly() {
        let mut s = default_paper_scenario();
        s.model.q = Matrix::zeros(4, 4);
        s.model.r = Matrix::zeros(2, 2);
        s.attack = AttackParams::disabled(2);
        s.init_estimator = s.init_true.clone();
        let res = run_monte_carlo(&s, 1, &Method::ALL, 3).unwrap();
        for curve in res.position_rmse.iter().chain(&res.velocity_rmse) {
            assert!(curve.iter().all(|&e| e < 1e-9), "{:?}", &curve[..5]);
        }
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let mut s = default_paper_scenario();
        s.horizon = 50;
        let a = run_monte_carlo(&s, 8, &Method::ALL, 11).unwrap();
        let b = run_monte_carlo(&s, 8, &Method::ALL, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.horizon(), 50);
    }

    #[test]
    fn disabled_attacks_make_proposed_and_standard_coincide() {
        let mut s = default_paper_scenario();
        s.attack = AttackParams::disabled(2);
        s.horizon = 100;
        let res = run_monte_carlo(&s, 5, &[Method::ProposedKf, Method::StandardKf], 1).unwrap();
        for (a, b) in res.position_rmse[0].iter().zip(&res.position_rmse[1]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn rmse_is_permutation_invariant(
            errs in prop::collection::vec(prop::collection::vec(prop::array::uniform2(-50.0..50.0f64), 6), 1..12),
            rot in 0usize..12,
        ) {
            let runs: Vec<Vec<Vector>> = errs.iter().map(|r| r.iter().map(|e| v(e)).collect()).collect();
            let mut shuffled = runs.clone();
            let n = shuffled.len();
            shuffled.rotate_left(rot % n);
            shuffled.reverse();
            let a = rmse_from_errors(&runs).unwrap();
            let b = rmse_from_errors(&shuffled).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
            }
        }
    }
}
