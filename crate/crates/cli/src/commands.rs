use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use attackkf_core::filter::{proposed_kf_rtss, standard_kf_rtss};
use attackkf_core::sim::{run_monte_carlo_inspect, simulate_measurements, TRANSIENT_SECONDS};
use attackkf_core::{classify_attack, GaussianBelief, KfsOutput, Matrix, McResult, Vector};
use serde::Serialize;

use crate::config::{self, Issue, OutputFormat, Resolved};
use crate::error::{CliError, Kind};
use crate::table::{self, Cell, Table};

/// Which estimator family `estimate` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Estimator {
    /// Attack-aware filter and smoother.
    Proposed,
    /// Plain Kalman filter and RTS smoother that ignore the attack.
    Standard,
}

/// Read and resolve a config, collecting every issue.
pub fn load_config(path: &Path) -> Result<Result<Resolved, Vec<Issue>>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::io("cannot read config", path, e, Kind::Config))?;
    let parsed = match config::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() as u64 + 1);
            let issue = Issue {
                field: line.map_or_else(|| "toml".into(), |l| format!("toml line {l}")),
                message: e.message().to_string(),
            };
            return Ok(Err(vec![issue]));
        }
    };
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(parsed.resolve(base))
}

pub fn validate(path: &Path) -> Result<bool, CliError> {
    let report = load_config(path)?;
    let issues = report.as_ref().err().cloned().unwrap_or_default();
    let value = serde_json::json!({
        "valid": issues.is_empty(),
        "violations": issues
            .iter()
            .map(|i| serde_json::json!({ "field": i.field, "message": i.message }))
            .collect::<Vec<_>>(),
    });
    table::write_json(std::io::stdout().lock(), &value)
        .map_err(|e| CliError::config(format!("cannot write report: {e}")))?;
    Ok(issues.is_empty())
}

fn state_header(prefix: &[&str]) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((1..=4).map(|i| format!("x{i}")))
        .collect()
}

fn reals(v: &Vector) -> impl Iterator<Item = Cell> + '_ {
    v.iter().map(|&x| Cell::Real(x))
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io("cannot create output directory", dir, e, Kind::Config))
}

fn save(t: &Table, dir: &Path, stem: &str, format: OutputFormat) -> Result<PathBuf, CliError> {
    t.save(dir, stem, format)
        .map_err(|e| CliError::io("cannot write", &dir.join(stem), e, Kind::Config))
}

fn save_json(path: PathBuf, value: &impl Serialize) -> Result<PathBuf, CliError> {
    let mut buf = Vec::new();
    table::write_json(&mut buf, value).expect("serializing to memory");
    fs::write(&path, buf).map_err(|e| CliError::io("cannot write", &path, e, Kind::Config))?;
    Ok(path)
}

/// Truth, attacked measurements and the attack log of one seeded run.
pub fn simulate(cfg: &Resolved, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    let data = simulate_measurements(&cfg.scenario, seed)?;

    let mut truth = Table::new(state_header(&["step"]));
    for (k, x) in data.trajectory.states.iter().enumerate() {
        truth.push(std::iter::once(Cell::Int(k as u64 + 1)).chain(reals(x)).collect());
    }
    let mut meas = Table::new(["step", "y1", "y2"]);
    for (k, y) in data.measurements.iter().enumerate() {
        meas.push(std::iter::once(Cell::Int(k as u64 + 1)).chain(reals(y)).collect());
    }
    let mut log = Table::new(["step", "xi_b", "xi_c", "xi_a", "xi_m", "attack_type"]);
    for (k, r) in data.realizations.iter().enumerate() {
        let bit = |b: bool| Cell::Int(u64::from(b));
        log.push(vec![
            Cell::Int(k as u64 + 1),
            bit(r.xi_b),
            bit(r.xi_c),
            bit(r.xi_a),
            bit(r.xi_m),
            Cell::Text(classify_attack(r).label()),
        ]);
    }

    prepare_dir(&cfg.out_dir)?;
    Ok(vec![
        save(&truth, &cfg.out_dir, "truth", cfg.format)?,
        save(&meas, &cfg.out_dir, "measurements", cfg.format)?,
        save(&log, &cfg.out_dir, "attack_log", cfg.format)?,
    ])
}

fn belief_table(beliefs: &[&GaussianBelief], skipped: Option<&[bool]>) -> Table {
    let mut header = state_header(&["step"]);
    header.extend((1..=4).map(|i| format!("p{i}{i}")));
    if skipped.is_some() {
        header.push("update_skipped".into());
    }
    let mut t = Table::new(header);
    for (k, b) in beliefs.iter().enumerate() {
        let mut row: Vec<Cell> = std::iter::once(Cell::Int(k as u64 + 1))
            .chain(reals(&b.mean))
            .chain(b.cov.diagonal().iter().map(|&x| Cell::Real(x)))
            .collect();
        if let Some(s) = skipped {
            row.push(Cell::Int(u64::from(s[k])));
        }
        t.push(row);
    }
    t
}

#[derive(Serialize)]
struct CovEntry {
    step: usize,
    cov: Vec<Vec<f64>>,
}

fn cov_entries(beliefs: &[&GaussianBelief]) -> Vec<CovEntry> {
    let rows = |m: &Matrix| m.row_iter().map(|r| r.iter().copied().collect()).collect();
    beliefs
        .iter()
        .enumerate()
        .map(|(k, b)| CovEntry {
            step: k + 1,
            cov: rows(&b.cov),
        })
        .collect()
}

/// Filter and smooth a recorded measurement file.
pub fn estimate(cfg: &Resolved, input: &Path, estimator: Estimator) -> Result<Vec<PathBuf>, CliError> {
    let file =
        fs::File::open(input).map_err(|e| CliError::io("cannot read measurements", input, e, Kind::Data))?;
    let nz = cfg.scenario.model.measurement_dim();
    let ys = table::read_measurements(std::io::BufReader::new(file), nz)?;

    let out: KfsOutput = match estimator {
        Estimator::Proposed => proposed_kf_rtss(
            &cfg.scenario.init_estimator,
            &ys,
            &cfg.scenario.theta()?,
            cfg.options,
        )?,
        Estimator::Standard => standard_kf_rtss(&cfg.scenario.init_estimator, &ys, &cfg.scenario.model)?,
    };
    let filtered: Vec<&GaussianBelief> = out.filtered.iter().map(|r| &r.posterior).collect();
    let skipped: Vec<bool> = out.filtered.iter().map(|r| r.skipped_update).collect();
    let smoothed: Vec<&GaussianBelief> = out.smoothed.smoothed.iter().collect();

    prepare_dir(&cfg.out_dir)?;
    let mut written = vec![
        save(
            &belief_table(&filtered, Some(&skipped)),
            &cfg.out_dir,
            "filtered",
            cfg.format,
        )?,
        save(
            &belief_table(&smoothed, None),
            &cfg.out_dir,
            "smoothed",
            cfg.format,
        )?,
    ];
    if cfg.full_cov {
        #[derive(Serialize)]
        struct Full {
            filtered: Vec<CovEntry>,
            smoothed: Vec<CovEntry>,
        }
        let full = Full {
            filtered: cov_entries(&filtered),
            smoothed: cov_entries(&smoothed),
        };
        written.push(save_json(cfg.out_dir.join("covariances.json"), &full)?);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
struct MethodSummary {
    method: &'static str,
    position_rmse_mean: f64,
    position_rmse_mean_trimmed: f64,
    velocity_rmse_mean: f64,
    velocity_rmse_mean_trimmed: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    runs: usize,
    base_seed: u64,
    horizon: usize,
    sample_time: f64,
    trimmed_seconds: f64,
    trimmed_steps: usize,
    methods: Vec<MethodSummary>,
}

/// Monte Carlo RMSE curves and their time averages.
pub fn benchmark(cfg: &Resolved) -> Result<Vec<PathBuf>, CliError> {
    let started = Instant::now();
    let (result, _) = run_monte_carlo_inspect(
        &cfg.scenario,
        cfg.runs,
        &cfg.methods,
        cfg.base_seed,
        cfg.options,
        |_| (),
    )?;
    let wall_time = started.elapsed().as_secs_f64();

    let mut header = vec!["step".to_string(), "time_s".to_string()];
    for m in &result.methods {
        header.push(format!("{m}_position_rmse"));
        header.push(format!("{m}_velocity_rmse"));
    }
    let mut rmse = Table::new(header);
    for k in 0..result.horizon() {
        let mut row = vec![
            Cell::Int(k as u64 + 1),
            Cell::Real((k + 1) as f64 * result.sample_time),
        ];
        for i in 0..result.methods.len() {
            row.push(Cell::Real(result.position_rmse[i][k]));
            row.push(Cell::Real(result.velocity_rmse[i][k]));
        }
        rmse.push(row);
    }

    let skip = cfg.scenario.transient_steps();
    let summary = Summary {
        runs: result.runs,
        base_seed: result.base_seed,
        horizon: result.horizon(),
        sample_time: result.sample_time,
        trimmed_seconds: TRANSIENT_SECONDS,
        trimmed_steps: skip,
        methods: result
            .methods
            .iter()
            .enumerate()
            .map(|(i, m)| MethodSummary {
                method: m.label(),
                position_rmse_mean: McResult::time_mean(&result.position_rmse[i], 0),
                position_rmse_mean_trimmed: McResult::time_mean(&result.position_rmse[i], skip),
                velocity_rmse_mean: McResult::time_mean(&result.velocity_rmse[i], 0),
                velocity_rmse_mean_trimmed: McResult::time_mean(&result.velocity_rmse[i], skip),
            })
            .collect(),
    };

    prepare_dir(&cfg.out_dir)?;
    Ok(vec![
        save(&rmse, &cfg.out_dir, "rmse", cfg.format)?,
        save_json(cfg.out_dir.join("summary.json"), &summary)?,
        save_json(
            cfg.out_dir.join("timing.json"),
            &serde_json::json!({ "wall_time_s": wall_time }),
        )?,
    ])
}
