//! TOML run configuration and its resolution into a [`CtScenario`].
//!
//! ```toml
//! [scenario]
//! preset = "paper-default"
//!
//! [attack]          # optional with a preset; individual fields override it
//! alpha_b = 1.0
//!
//! [execution]
//! runs = 100
//! base_seed = 0
//! methods = ["proposed_kf", "proposed_rtss", "standard_kf", "standard_rtss"]
//! out_dir = "out"   # relative paths are resolved against the config file
//! ```
//!
//! An explicit scenario replaces `preset` with `sample_time`, `turn_rate`,
//! `turn_rate_unit` (`"deg/s"` or `"rad/s"`), `q`, `r`, `x0`, optional
//! `x0_cov`, `init_mean`, `init_cov` and `horizon`, and must then give every
//! attack field. Matrices are row-major nested arrays.

use std::fmt;
use std::path::{Path, PathBuf};

use attackkf_core::linalg::{self, PSD_RTOL, SYMMETRY_RTOL};
use attackkf_core::model::validate_model_structure;
use attackkf_core::sim::{build_ct_model, default_paper_scenario};
use attackkf_core::{
    AttackParams, CtScenario, FilterOptions, GaussianBelief, Matrix, Method, MomentForm, Vector,
};
use serde::Deserialize;

pub const PAPER_PRESET: &str = "paper-default";
const STATE_DIM: usize = 4;
const MEAS_DIM: usize = 2;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<ScenarioSection>,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub execution: ExecutionSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub preset: Option<String>,
    pub sample_time: Option<f64>,
    pub turn_rate: Option<f64>,
    pub turn_rate_unit: Option<TurnRateUnit>,
    pub q: Option<Rows>,
    pub r: Option<Rows>,
    pub x0: Option<Vec<f64>>,
    pub x0_cov: Option<Rows>,
    pub init_mean: Option<Vec<f64>>,
    pub init_cov: Option<Rows>,
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum TurnRateUnit {
    #[serde(rename = "deg/s")]
    DegPerSec,
    #[serde(rename = "rad/s")]
    RadPerSec,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub alpha_a: Option<f64>,
    pub alpha_b: Option<f64>,
    pub alpha_c: Option<f64>,
    pub alpha_m: Option<f64>,
    pub mu_a: Option<Vec<f64>>,
    pub sigma_a: Option<Rows>,
    pub mu_m: Option<f64>,
    pub sigma_m_sq: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionSection {
    pub runs: Option<usize>,
    pub base_seed: Option<u64>,
    pub methods: Option<Vec<String>>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub full_cov: Option<bool>,
    pub joseph: Option<bool>,
    pub moment_form: Option<MomentFormKey>,
    pub measurements: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentFormKey {
    Exact,
    WithoutCoupling,
}

/// One problem found in a configuration, addressed by its dotted key.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl Issue {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Issue {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// A fully checked configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: CtScenario,
    pub runs: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    pub full_cov: bool,
    pub options: FilterOptions,
    pub measurements: Option<PathBuf>,
}

pub fn parse(text: &str) -> Result<RunConfig, toml::de::Error> {
    toml::from_str(text)
}

impl RunConfig {
    /// Check every section and build the scenario. All problems are reported,
    /// not just the first. `base_dir` anchors relative paths.
    pub fn resolve(&self, base_dir: &Path) -> Result<Resolved, Vec<Issue>> {
        let mut issues = Vec::new();
        let scenario = self.resolve_scenario(&mut issues);
        let exec = &self.execution;

        let runs = exec.runs.unwrap_or(100);
        if runs == 0 {
            issues.push(Issue::new("execution.runs", "must be at least 1"));
        }
        let methods = match &exec.methods {
            None => Method::ALL.to_vec(),
            Some(names) => parse_methods(names.iter().map(String::as_str), &mut issues),
        };
        let measurements = exec.measurements.as_ref().map(|p| base_dir.join(p));
        if let Some(path) = &measurements {
            if !path.is_file() {
                issues.push(Issue::new(
                    "execution.measurements",
                    format!("file {} does not exist", path.display()),
                ));
            }
        }
        let options = FilterOptions {
            joseph: exec.joseph.unwrap_or(false),
            moment_form: match exec.moment_form {
                Some(MomentFormKey::WithoutCoupling) => MomentForm::WithoutCoupling,
                _ => MomentForm::Exact,
            },
        };

        match scenario {
            Some(scenario) if issues.is_empty() => Ok(Resolved {
                scenario,
                runs,
                base_seed: exec.base_seed.unwrap_or(0),
                methods,
                out_dir: base_dir.join(exec.out_dir.clone().unwrap_or_else(|| "out".into())),
                format: exec.format.unwrap_or_default(),
                full_cov: exec.full_cov.unwrap_or(false),
                options,
                measurements,
            }),
            _ => Err(issues),
        }
    }

    fn resolve_scenario(&self, issues: &mut Vec<Issue>) -> Option<CtScenario> {
        let Some(section) = &self.scenario else {
            issues.push(Issue::new(
                "scenario",
                "missing; give `preset` or explicit parameters",
            ));
            return None;
        };
        let explicit = section.explicit_keys();
        let base = match &section.preset {
            Some(name) if name == PAPER_PRESET => {
                if !explicit.is_empty() {
                    issues.push(Issue::new(
                        "scenario",
                        format!("`preset` cannot be combined with {}", explicit.join(", ")),
                    ));
                    return None;
                }
                default_paper_scenario()
            }
            Some(name) => {
                issues.push(Issue::new(
                    "scenario.preset",
                    format!("unknown preset {name:?} (available: {PAPER_PRESET:?})"),
                ));
                return None;
            }
            None => {
                let start = issues.len();
                let scenario = section.build_explicit(issues);
                // Without a preset there is no attack to fall back on.
                let attack = self.attack.merge(None, issues);
                return match (scenario, attack) {
                    (Some(mut s), Some(a)) if issues.len() == start => {
                        s.attack = a;
                        check_attack(&s.attack, issues).then_some(s)
                    }
                    _ => None,
                };
            }
        };
        let attack = self.attack.merge(Some(&base.attack), issues)?;
        check_attack(&attack, issues).then_some(CtScenario { attack, ..base })
    }
}

pub fn parse_methods<'a>(names: impl IntoIterator<Item = &'a str>, issues: &mut Vec<Issue>) -> Vec<Method> {
    let mut out = Vec::new();
    for name in names {
        match name.parse::<Method>() {
            Ok(m) if out.contains(&m) => {
                issues.push(Issue::new("execution.methods", format!("{m} listed twice")));
            }
            Ok(m) => out.push(m),
            Err(_) => issues.push(Issue::new(
                "execution.methods",
                format!(
                    "unknown method {name:?} (expected one of {})",
                    Method::ALL.map(Method::label).join(", ")
                ),
            )),
        }
    }
    if out.is_empty() && issues.is_empty() {
        issues.push(Issue::new("execution.methods", "no methods selected"));
    }
    out
}

impl ScenarioSection {
    fn explicit_keys(&self) -> Vec<&'static str> {
        let present = [
            ("sample_time", self.sample_time.is_some()),
            ("turn_rate", self.turn_rate.is_some()),
            ("turn_rate_unit", self.turn_rate_unit.is_some()),
            ("q", self.q.is_some()),
            ("r", self.r.is_some()),
            ("x0", self.x0.is_some()),
            ("x0_cov", self.x0_cov.is_some()),
            ("init_mean", self.init_mean.is_some()),
            ("init_cov", self.init_cov.is_some()),
            ("horizon", self.horizon.is_some()),
        ];
        present.iter().filter(|(_, p)| *p).map(|(k, _)| *k).collect()
    }

    fn build_explicit(&self, issues: &mut Vec<Issue>) -> Option<CtScenario> {
        let sample_time = required(self.sample_time, "scenario.sample_time", issues);
        let turn_rate = required(self.turn_rate, "scenario.turn_rate", issues);
        let unit = required(self.turn_rate_unit, "scenario.turn_rate_unit", issues);
        let horizon = required(self.horizon, "scenario.horizon", issues);
        let q = matrix(self.q.as_ref(), "scenario.q", STATE_DIM, issues);
        let r = matrix(self.r.as_ref(), "scenario.r", MEAS_DIM, issues);
        let x0 = vector(self.x0.as_ref(), "scenario.x0", STATE_DIM, issues);
        let x0_cov = match &self.x0_cov {
            None => Some(Matrix::zeros(STATE_DIM, STATE_DIM)),
            some => matrix(some.as_ref(), "scenario.x0_cov", STATE_DIM, issues),
        };
        let init_mean = vector(self.init_mean.as_ref(), "scenario.init_mean", STATE_DIM, issues);
        let init_cov = matrix(self.init_cov.as_ref(), "scenario.init_cov", STATE_DIM, issues);

        if let Some(t) = sample_time {
            if !(t > 0.0 && t.is_finite()) {
                issues.push(Issue::new(
                    "scenario.sample_time",
                    format!("must be positive, got {t}"),
                ));
            }
        }
        if let Some(w) = turn_rate {
            if w == 0.0 || !w.is_finite() {
                issues.push(Issue::new("scenario.turn_rate", "must be finite and nonzero"));
            }
        }
        if horizon == Some(0) {
            issues.push(Issue::new("scenario.horizon", "must be at least 1"));
        }
        for (name, m) in [
            ("scenario.q", &q),
            ("scenario.r", &r),
            ("scenario.x0_cov", &x0_cov),
            ("scenario.init_cov", &init_cov),
        ] {
            if let Some(m) = m {
                check_psd(name, m, issues);
            }
        }
        if !issues.is_empty() {
            return None;
        }

        let (t, w) = (sample_time?, turn_rate?);
        let turn_rate = match unit? {
            TurnRateUnit::DegPerSec => w.to_radians(),
            TurnRateUnit::RadPerSec => w,
        };
        let model = match build_ct_model(t, turn_rate, q?, r?) {
            Ok(m) => m,
            Err(e) => {
                issues.push(Issue::new("scenario", e.to_string()));
                return None;
            }
        };
        if let Err(vs) = validate_model_structure(&model) {
            issues.extend(vs.into_iter().map(|v| Issue::new("scenario", v.to_string())));
            return None;
        }
        Some(CtScenario {
            sample_time: t,
            turn_rate,
            model,
            init_true: GaussianBelief {
                mean: x0?,
                cov: x0_cov?,
            },
            init_estimator: GaussianBelief {
                mean: init_mean?,
                cov: init_cov?,
            },
            horizon: horizon?,
            attack: AttackParams::disabled(MEAS_DIM),
        })
    }
}

impl AttackSection {
    /// Overlay the given fields on `base`; with no base every field is required.
    fn merge(&self, base: Option<&AttackParams>, issues: &mut Vec<Issue>) -> Option<AttackParams> {
        let start = issues.len();
        let scalar = |v: Option<f64>, fallback: Option<f64>, key: &str, issues: &mut Vec<Issue>| {
            required(v.or(fallback), &format!("attack.{key}"), issues)
        };
        let alpha_a = scalar(self.alpha_a, base.map(|b| b.alpha_a), "alpha_a", issues);
        let alpha_b = scalar(self.alpha_b, base.map(|b| b.alpha_b), "alpha_b", issues);
        let alpha_c = scalar(self.alpha_c, base.map(|b| b.alpha_c), "alpha_c", issues);
        let alpha_m = scalar(self.alpha_m, base.map(|b| b.alpha_m), "alpha_m", issues);
        let mu_m = scalar(self.mu_m, base.map(|b| b.mu_m), "mu_m", issues);
        let sigma_m_sq = scalar(self.sigma_m_sq, base.map(|b| b.sigma_m_sq), "sigma_m_sq", issues);
        let mu_a = match (&self.mu_a, base) {
            (Some(v), _) => vector(Some(v), "attack.mu_a", MEAS_DIM, issues),
            (None, Some(b)) => Some(b.mu_a.clone()),
            (None, None) => required(None::<Vector>, "attack.mu_a", issues),
        };
        let sigma_a = match (&self.sigma_a, base) {
            (Some(m), _) => matrix(Some(m), "attack.sigma_a", MEAS_DIM, issues),
            (None, Some(b)) => Some(b.sigma_a.clone()),
            (None, None) => required(None::<Matrix>, "attack.sigma_a", issues),
        };
        if issues.len() != start {
            return None;
        }
        Some(AttackParams {
            alpha_a: alpha_a?,
            alpha_b: alpha_b?,
            alpha_c: alpha_c?,
            alpha_m: alpha_m?,
            mu_a: mu_a?,
            sigma_a: sigma_a?,
            mu_m: mu_m?,
            sigma_m_sq: sigma_m_sq?,
        })
    }
}

fn check_attack(attack: &AttackParams, issues: &mut Vec<Issue>) -> bool {
    match attack.validate() {
        Ok(()) => true,
        Err(vs) => {
            issues.extend(vs.into_iter().map(|v| Issue::new("attack", v.to_string())));
            false
        }
    }
}

fn required<T>(v: Option<T>, key: &str, issues: &mut Vec<Issue>) -> Option<T> {
    if v.is_none() {
        issues.push(Issue::new(key, "required field is missing"));
    }
    v
}

fn vector(v: Option<&Vec<f64>>, key: &str, dim: usize, issues: &mut Vec<Issue>) -> Option<Vector> {
    let v = required(v, key, issues)?;
    if v.len() != dim {
        issues.push(Issue::new(
            key,
            format!("expected {dim} entries, found {}", v.len()),
        ));
        return None;
    }
    if v.iter().any(|x| !x.is_finite()) {
        issues.push(Issue::new(key, "contains non-finite values"));
        return None;
    }
    Some(Vector::from_row_slice(v))
}

fn matrix(rows: Option<&Rows>, key: &str, dim: usize, issues: &mut Vec<Issue>) -> Option<Matrix> {
    let rows = required(rows, key, issues)?;
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        let widths: Vec<_> = rows.iter().map(Vec::len).collect();
        issues.push(Issue::new(
            key,
            format!(
                "expected a {dim}x{dim} matrix, found {} rows of widths {widths:?}",
                rows.len()
            ),
        ));
        return None;
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        issues.push(Issue::new(key, "contains non-finite values"));
        return None;
    }
    Some(Matrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn check_psd(key: &str, m: &Matrix, issues: &mut Vec<Issue>) {
    if !linalg::is_symmetric(m, SYMMETRY_RTOL) {
        issues.push(Issue::new(key, "not symmetric"));
    } else if !linalg::is_psd(m, PSD_RTOL) {
        let (lo, _) = linalg::eig_range(m);
        issues.push(Issue::new(
            key,
            format!("not positive semidefinite (smallest eigenvalue {lo})"),
        ));
    }
}
