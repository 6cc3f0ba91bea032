use std::path::{Path, PathBuf};

use serde::Serialize;

use seqcv::crossval::run_schedule;
use seqcv::detection::{average_run_length, calibrate_control_limit, trace, Calibration};
use seqcv::limit_oracle::{limit_curve, separation_report, SeparationReport};
use seqcv::simulation::{run_experiment, Scenario};
use seqcv::smoothing::{loo_predictions, normed_path};
use seqcv::{DetectorSpec, LimitMode, LimitSpec, Series};

use crate::config::{resolve_bandwidth, Config};
use crate::error::CliError;
use crate::io::{csv_bytes, json_bytes, num, opt_num, read_series, write_atomic};

pub struct Run {
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
}

fn input_series(input: Option<&Path>) -> Result<Series, CliError> {
    let path = input.ok_or_else(|| CliError::Config("--input is required".into()))?;
    Ok(Series::complete(read_series(path)?)?)
}

pub fn smooth(run: &Run, input: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let series = input_series(input)?;
    let kernel = run.config.kernel()?;
    let b = run
        .config
        .bandwidth
        .ok_or_else(|| CliError::Config("smooth needs `bandwidth` ({\"h\": ..} or {\"xi\": ..})".into()))?;
    let h = resolve_bandwidth(b, series.horizon())?;
    let n = series.len();
    if n < 2 {
        return Err(CliError::Data("smooth needs at least two observations".into()));
    }
    let loo = loo_predictions(&series, &kernel, h, n)?;
    let normed = normed_path(&series, &kernel, h, n)?;
    let y = series.values();
    let rows = (2..=n).map(|i| vec![i.to_string(), num(y[i - 1]), num(loo[i - 2]), num(normed[i - 1])]);
    let bytes = csv_bytes(&["i", "y", "loo_prediction", "smoother"], rows)?;
    Ok(vec![write_atomic(&run.out, "smooth.csv", &bytes)?])
}

#[derive(Serialize)]
struct CvRow {
    checkpoint: f64,
    index: usize,
    xi_star: f64,
    h_star: f64,
    tie: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    notice: Option<String>,
}

#[derive(Serialize)]
struct CvReport {
    kernel: String,
    horizon: usize,
    xi_grid: Vec<f64>,
    results: Vec<CvRow>,
    path_starts: Vec<usize>,
    path_bandwidths: Vec<f64>,
}

pub fn cv(run: &Run, input: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let series = input_series(input)?;
    let kernel = run.config.kernel()?;
    let plan = run.config.plan(series.horizon())?;
    let sched = run_schedule(&series, &kernel, &plan)?;
    let mut rows = Vec::new();
    for res in &sched.results {
        for (xi, c) in plan.xi_grid().iter().zip(&res.objective) {
            rows.push(vec![num(res.checkpoint), res.index.to_string(), num(*xi), num(*c)]);
        }
    }
    let surface = csv_bytes(&["s", "index", "xi", "objective"], rows)?;
    let report = CvReport {
        kernel: kernel.name().to_string(),
        horizon: series.horizon(),
        xi_grid: plan.xi_grid().to_vec(),
        results: sched
            .results
            .iter()
            .map(|r| CvRow {
                checkpoint: r.checkpoint,
                index: r.index,
                xi_star: r.xi_star,
                h_star: r.h_star,
                tie: r.tie,
                notice: r
                    .tie
                    .then(|| "objective tied across ξ; the smallest tied ξ was chosen".to_string()),
            })
            .collect(),
        path_starts: sched.path.starts().to_vec(),
        path_bandwidths: sched.path.bandwidths().to_vec(),
    };
    Ok(vec![
        write_atomic(&run.out, "cv_surface.csv", &surface)?,
        write_atomic(&run.out, "cv.json", &json_bytes(&report)?)?,
    ])
}

#[derive(Serialize)]
struct LimitReport {
    kernel: String,
    mode: LimitMode,
    tolerance: f64,
    argmins: Vec<(f64, SeparationReport)>,
}

pub fn limit(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let cfg = run
        .config
        .limit
        .as_ref()
        .ok_or_else(|| CliError::Config("a `limit` block is required".into()))?;
    let kernel = run.config.kernel()?;
    let grid = run.config.xi_grid()?;
    let spec = LimitSpec::new(kernel.clone(), cfg.mean.function(), cfg.mode, cfg.tolerance)?;
    let mut rows = Vec::new();
    let mut argmins = Vec::new();
    for &s in &cfg.s {
        let values = limit_curve(&spec, &grid, s)?;
        for (xi, v) in grid.iter().zip(&values) {
            rows.push(vec![num(s), num(*xi), num(*v)]);
        }
        argmins.push((s, separation_report(&grid, &values, cfg.tolerance)?));
    }
    let report = LimitReport {
        kernel: kernel.name().to_string(),
        mode: cfg.mode,
        tolerance: cfg.tolerance,
        argmins,
    };
    Ok(vec![
        write_atomic(&run.out, "limit_curve.csv", &csv_bytes(&["s", "xi", "value"], rows)?)?,
        write_atomic(&run.out, "limit.json", &json_bytes(&report)?)?,
    ])
}

fn scenario(run: &Run) -> Result<Scenario, CliError> {
    Ok(Scenario::new(run.config.scenario()?, run.config.errors()?)?)
}

#[derive(Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum CalibrationReport {
    Bisection {
        target_arl: f64,
        replications: usize,
        seed: u64,
        #[serde(flatten)]
        result: Calibration,
    },
    Evaluation {
        control_limit: f64,
        replications: usize,
        seed: u64,
        achieved_arl: f64,
        standard_error: f64,
        censored_frac: f64,
    },
}

/// Calibrates on the null version of `scenario` (jump set to zero).
fn run_calibration(run: &Run, scenario: &Scenario, spec: &DetectorSpec) -> Result<CalibrationReport, CliError> {
    let d = run.config.detector_config()?;
    let null = Scenario::new(scenario.params.with_jump(0.0), scenario.errors.clone())?;
    let scenario = &null;
    let reps = d.replications;
    match (d.target_arl, d.control_limit) {
        (Some(target), _) => {
            let result = calibrate_control_limit(scenario, spec, target, reps, run.seed, d.bracket)?;
            Ok(CalibrationReport::Bisection {
                target_arl: target,
                replications: reps,
                seed: run.seed,
                result,
            })
        }
        (None, Some(c)) => {
            if reps == 0 {
                return Err(CliError::Config("replications must be positive".into()));
            }
            let est = average_run_length(scenario, &spec.with_limit(c), reps, run.seed)?;
            Ok(CalibrationReport::Evaluation {
                control_limit: c,
                replications: reps,
                seed: run.seed,
                achieved_arl: est.arl,
                standard_error: est.se,
                censored_frac: est.censored_frac,
            })
        }
        (None, None) => Err(CliError::Config(
            "detector needs `target_arl` or `control_limit`".into(),
        )),
    }
}

pub fn calibrate(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let scenario = scenario(run)?;
    let spec = run.config.detector(scenario.params.horizon)?;
    let report = run_calibration(run, &scenario, &spec)?;
    Ok(vec![write_atomic(&run.out, "calibration.json", &json_bytes(&report)?)?])
}

#[derive(Serialize)]
struct MonitorReport {
    seed: u64,
    horizon: usize,
    control_limit: f64,
    start_index: usize,
    signal_index: Option<usize>,
    path_starts: Vec<usize>,
    path_bandwidths: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration: Option<CalibrationReport>,
}

pub fn monitor(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let scenario = scenario(run)?;
    let mut spec = run.config.detector(scenario.params.horizon)?;
    let mut calibration = None;
    if spec.control_limit.is_nan() {
        let report = run_calibration(run, &scenario, &spec)?;
        if let CalibrationReport::Bisection { result, .. } = &report {
            spec = spec.with_limit(result.control_limit);
        }
        calibration = Some(report);
    }
    let series = scenario.simulate(run.seed, 0)?;
    let t = trace(&series, &spec)?;
    let signal = t.signal(spec.direction, spec.control_limit);
    let mean = scenario.mean();
    let y = series.values();
    let rows = (1..=series.len()).map(|i| {
        let smoother = (i >= t.start_index).then(|| t.values[i - t.start_index]);
        vec![
            i.to_string(),
            num(mean[i - 1]),
            num(y[i - 1]),
            opt_num(smoother),
            num(t.bandwidth_path.at(i)),
            num(spec.control_limit),
        ]
    });
    let csv = csv_bytes(&["i", "mean", "y", "smoother", "bandwidth", "control_limit"], rows)?;
    let report = MonitorReport {
        seed: run.seed,
        horizon: series.horizon(),
        control_limit: spec.control_limit,
        start_index: t.start_index,
        signal_index: signal,
        path_starts: t.bandwidth_path.starts().to_vec(),
        path_bandwidths: t.bandwidth_path.bandwidths().to_vec(),
        calibration,
    };
    Ok(vec![
        write_atomic(&run.out, "monitor.csv", &csv)?,
        write_atomic(&run.out, "monitor.json", &json_bytes(&report)?)?,
    ])
}

pub fn simulate(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let scenario = scenario(run)?;
    let sim = run.config.simulate.clone().unwrap_or(crate::config::SimulateConfig {
        replications: 1,
        deltas: Vec::new(),
    });
    if sim.replications == 0 {
        return Err(CliError::Config("simulate.replications must be positive".into()));
    }
    let mean = scenario.mean();
    let mut rows = Vec::new();
    let series: Vec<Series> = seqcv::simulation::replicate(sim.replications, |r| scenario.simulate(run.seed, r))?;
    for (r, s) in series.iter().enumerate() {
        for (k, v) in s.values().iter().enumerate() {
            rows.push(vec![r.to_string(), (k + 1).to_string(), num(mean[k]), num(*v)]);
        }
    }
    let mut written = vec![write_atomic(
        &run.out,
        "series.csv",
        &csv_bytes(&["replication", "i", "mean", "y"], rows)?,
    )?];
    if !sim.deltas.is_empty() {
        let spec = run.config.detector(scenario.params.horizon)?;
        if spec.control_limit.is_nan() {
            return Err(CliError::Config("a delay table needs detector.control_limit".into()));
        }
        let table = run_experiment(
            &sim.deltas,
            &scenario.params,
            &scenario.errors,
            &spec,
            sim.replications,
            run.seed,
        )?;
        let rows = table
            .iter()
            .map(|r| vec![num(r.delta), num(r.mean_delay), num(r.se), num(r.censored_frac)]);
        written.push(write_atomic(
            &run.out,
            "delays.csv",
            &csv_bytes(&["delta", "mean_delay", "se", "censored_frac"], rows)?,
        )?);
    }
    Ok(written)
}
