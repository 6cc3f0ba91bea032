//! One-sided stopping rules on the normalized smoother, Monte Carlo
//! control-limit calibration and mean-delay estimation.
//!
//! Run lengths are censored at the horizon: a run without a signal counts
//! as `T`, and a delay is then `T - q2`. Every estimate reports the fraction
//! of censored runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossval::{self, BandwidthPath, CvError, CvPlan};
use crate::kernels::Kernel;
use crate::simulation::{self, Scenario, SimError};
use crate::smoothing::{LagWeights, Series, SmoothError};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("invalid detector: {0}")]
    Config(String),
    #[error("series of length {len} ends before monitoring starts at {start}")]
    TooShort { len: usize, start: usize },
    #[error(
        "control-limit bracket [{lo}, {hi}] does not straddle target ARL {target}: ARL(lo) = {arl_lo:.3}, ARL(hi) = {arl_hi:.3}"
    )]
    Bracket {
        lo: f64,
        hi: f64,
        target: f64,
        arl_lo: f64,
        arl_hi: f64,
    },
    #[error(transparent)]
    Smooth(#[from] SmoothError),
    #[error(transparent)]
    Cv(#[from] CvError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Which side of the control limit raises the alarm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Signal when `m̂_i > c`.
    UpperCrossing,
    /// Signal when `m̂_i < c`.
    LowerCrossing,
}

impl Direction {
    #[inline]
    pub fn crossed(self, value: f64, limit: f64) -> bool {
        match self {
            Direction::UpperCrossing => value > limit,
            Direction::LowerCrossing => value < limit,
        }
    }

    /// `+1` if a larger mean moves toward an alarm, `-1` otherwise.
    pub fn toward_alarm(self) -> f64 {
        match self {
            Direction::UpperCrossing => 1.0,
            Direction::LowerCrossing => -1.0,
        }
    }
}

/// How the smoother's bandwidth is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthSource {
    Fixed(f64),
    /// Cross-validated at the plan's checkpoints.
    CrossValidated(CvPlan),
}

/// First monitored index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StartRule {
    Fixed {
        index: usize,
    },
    /// `min(cap, h*)` with `h*` the first bandwidth of the path, floored and
    /// at least 2.
    CappedBandwidth {
        cap: usize,
    },
}

impl StartRule {
    pub fn resolve(&self, path: &BandwidthPath) -> usize {
        match *self {
            StartRule::Fixed { index } => index,
            StartRule::CappedBandwidth { cap } => {
                let h = path.bandwidths()[0];
                (cap as f64).min(h).floor().max(2.0) as usize
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectorSpec {
    pub direction: Direction,
    pub control_limit: f64,
    pub start: StartRule,
    pub kernel: Kernel,
    pub bandwidth: BandwidthSource,
}

impl DetectorSpec {
    pub fn with_limit(&self, c: f64) -> Self {
        Self {
            control_limit: c,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<(), DetectError> {
        if let StartRule::Fixed { index } = self.start {
            if index < 2 {
                return Err(DetectError::Config(format!("start index must be >= 2, got {index}")));
            }
        }
        if let BandwidthSource::Fixed(h) = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(DetectError::Config(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// Smoother path from the start index on, before comparing with any limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub start_index: usize,
    /// `m̂_i` for `i = start_index..=len`.
    pub values: Vec<f64>,
    pub bandwidth_path: BandwidthPath,
    pub horizon: usize,
}

impl Trace {
    /// First `i >= start_index` with a crossing.
    pub fn signal(&self, direction: Direction, c: f64) -> Option<usize> {
        self.values
            .iter()
            .position(|&v| direction.crossed(v, c))
            .map(|k| k + self.start_index)
    }

    /// Signal index, or the horizon when there is none.
    pub fn run_length(&self, direction: Direction, c: f64) -> (usize, bool) {
        match self.signal(direction, c) {
            Some(i) => (i, false),
            None => (self.horizon, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub signal_index: Option<usize>,
    pub start_index: usize,
    /// `m̂_i` for `i = start_index..=len`.
    pub path: Vec<f64>,
    pub bandwidth_path: BandwidthPath,
}

/// Normalized smoother with a time-varying bandwidth, `i = start..=len`.
fn normed_with_path(
    series: &Series,
    kernel: &Kernel,
    path: &BandwidthPath,
    start: usize,
) -> Result<Vec<f64>, SmoothError> {
    let values = series.values();
    let n = values.len();
    let anchor = values[0];
    let z: Vec<f64> = values.iter().map(|y| y - anchor).collect();
    let mut out = Vec::with_capacity(n + 1 - start);
    let mut i = start;
    while i <= n {
        let h = path.at(i);
        let next = path
            .starts()
            .iter()
            .copied()
            .find(|&s| s > i)
            .unwrap_or(n + 1)
            .min(n + 1);
        let weights = LagWeights::new(kernel, h, next - 2);
        for idx in i..next {
            let (num, den) = weights.inclusive_sums(&z, idx - 1);
            if !(den > 0.0) {
                return Err(SmoothError::DegenerateWindow { index: idx });
            }
            out.push(anchor + num / den);
        }
        i = next;
    }
    Ok(out)
}

/// Computes the smoother path the detector would compare with its limit.
pub fn trace(series: &Series, spec: &DetectorSpec) -> Result<Trace, DetectError> {
    spec.validate()?;
    let path = match &spec.bandwidth {
        BandwidthSource::Fixed(h) => BandwidthPath::constant(*h)?,
        BandwidthSource::CrossValidated(plan) => crossval::run_schedule(series, &spec.kernel, plan)?.path,
    };
    let start = spec.start.resolve(&path);
    if start < 2 {
        return Err(DetectError::Config(format!("start index must be >= 2, got {start}")));
    }
    if series.len() < start {
        return Err(DetectError::TooShort {
            len: series.len(),
            start,
        });
    }
    let values = normed_with_path(series, &spec.kernel, &path, start)?;
    Ok(Trace {
        start_index: start,
        values,
        bandwidth_path: path,
        horizon: series.horizon(),
    })
}

/// `inf { start <= i <= len : m̂_i crosses c }`.
pub fn run_detector(series: &Series, spec: &DetectorSpec) -> Result<RunResult, DetectError> {
    let t = trace(series, spec)?;
    Ok(RunResult {
        signal_index: t.signal(spec.direction, spec.control_limit),
        start_index: t.start_index,
        path: t.values,
        bandwidth_path: t.bandwidth_path,
    })
}

/// Monte Carlo ARL summary at one control limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArlEstimate {
    pub arl: f64,
    pub se: f64,
    pub censored_frac: f64,
}

fn arl_at(traces: &[Trace], direction: Direction, c: f64) -> ArlEstimate {
    let mut censored = 0usize;
    let lengths: Vec<f64> = traces
        .iter()
        .map(|t| {
            let (rl, cens) = t.run_length(direction, c);
            censored += cens as usize;
            rl as f64
        })
        .collect();
    let (arl, se) = simulation::mean_and_se(&lengths);
    ArlEstimate {
        arl,
        se: if se.is_nan() { 0.0 } else { se },
        censored_frac: censored as f64 / traces.len() as f64,
    }
}

/// Smoother traces for `replications` runs of `scenario`.
pub fn simulate_traces(
    scenario: &Scenario,
    spec: &DetectorSpec,
    replications: usize,
    seed: u64,
) -> Result<Vec<Trace>, DetectError> {
    simulation::replicate(replications, |r| {
        let series = scenario.simulate(seed, r)?;
        trace(&series, spec)
    })
}

/// Result of control-limit calibration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub control_limit: f64,
    pub achieved_arl: f64,
    pub standard_error: f64,
    pub censored_frac: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
}

pub const BRACKET_WIDTH_TOL: f64 = 1e-3;
const MAX_BISECTIONS: usize = 200;

/// Finds `c` with in-control ARL close to `target_arl0` by bisection.
///
/// All candidate limits are evaluated on the same simulated null paths, so
/// the estimated ARL is exactly monotone in `c`. Bisection stops once the
/// estimate is within two standard errors of the target or the bracket is
/// narrower than [`BRACKET_WIDTH_TOL`]. Without an explicit bracket the
/// range of all simulated smoother values (widened by one) is used.
pub fn calibrate_control_limit(
    null_model: &Scenario,
    template: &DetectorSpec,
    target_arl0: f64,
    replications: usize,
    seed: u64,
    bracket: Option<(f64, f64)>,
) -> Result<Calibration, DetectError> {
    if !(target_arl0.is_finite() && target_arl0 > 0.0) {
        return Err(DetectError::Config(format!(
            "target ARL must be positive, got {target_arl0}"
        )));
    }
    if replications < 2 {
        return Err(DetectError::Config("calibration needs at least 2 replications".into()));
    }
    let traces = simulate_traces(null_model, template, replications, seed)?;
    calibrate_on_traces(&traces, template.direction, target_arl0, bracket)
}

/// Bisection on precomputed null traces.
pub fn calibrate_on_traces(
    traces: &[Trace],
    direction: Direction,
    target: f64,
    bracket: Option<(f64, f64)>,
) -> Result<Calibration, DetectError> {
    let (lo, hi) = match bracket {
        Some(b) => b,
        None => {
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in traces.iter().flat_map(|t| &t.values) {
                min = min.min(*v);
                max = max.max(*v);
            }
            (min - 1.0, max + 1.0)
        }
    };
    if !(lo < hi) {
        return Err(DetectError::Config(format!("empty bracket [{lo}, {hi}]")));
    }
    // `quiet` is the end of the bracket with the longer run lengths.
    let (mut quiet, mut loud) = match direction {
        Direction::LowerCrossing => (lo, hi),
        Direction::UpperCrossing => (hi, lo),
    };
    let at_quiet = arl_at(traces, direction, quiet);
    let at_loud = arl_at(traces, direction, loud);
    if !(at_quiet.arl >= target && at_loud.arl <= target) {
        let (arl_lo, arl_hi) = match direction {
            Direction::LowerCrossing => (at_quiet.arl, at_loud.arl),
            Direction::UpperCrossing => (at_loud.arl, at_quiet.arl),
        };
        return Err(DetectError::Bracket {
            lo,
            hi,
            target,
            arl_lo,
            arl_hi,
        });
    }
    let mut iterations = 0;
    let mut best = (quiet, at_quiet);
    while iterations < MAX_BISECTIONS {
        iterations += 1;
        let mid = 0.5 * (quiet + loud);
        let est = arl_at(traces, direction, mid);
        best = (mid, est);
        if (est.arl - target).abs() <= 2.0 * est.se || (quiet - loud).abs() < BRACKET_WIDTH_TOL {
            break;
        }
        if est.arl > target {
            quiet = mid;
        } else {
            loud = mid;
        }
    }
    let (c, est) = best;
    Ok(Calibration {
        control_limit: c,
        achieved_arl: est.arl,
        standard_error: est.se,
        censored_frac: est.censored_frac,
        bracket: (lo, hi),
        iterations,
    })
}

/// Monte Carlo ARL of a fixed detector.
pub fn average_run_length(
    scenario: &Scenario,
    spec: &DetectorSpec,
    replications: usize,
    seed: u64,
) -> Result<ArlEstimate, DetectError> {
    let traces = simulate_traces(scenario, spec, replications, seed)?;
    Ok(arl_at(&traces, spec.direction, spec.control_limit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayEstimate {
    pub mean: f64,
    pub se: f64,
    pub censored_frac: f64,
}

/// `E max(0, S - q2)` under `alternative`; censored runs count `T - q2`.
pub fn mean_delay(
    alternative: &Scenario,
    spec: &DetectorSpec,
    replications: usize,
    seed: u64,
) -> Result<DelayEstimate, DetectError> {
    if replications == 0 {
        return Err(DetectError::Config("need at least one replication".into()));
    }
    let traces = simulate_traces(alternative, spec, replications, seed)?;
    Ok(delay_on_traces(
        &traces,
        spec.direction,
        spec.control_limit,
        alternative.params.q2,
    ))
}

pub(crate) fn delay_on_traces(traces: &[Trace], direction: Direction, c: f64, q2: usize) -> DelayEstimate {
    let mut censored = 0usize;
    let delays: Vec<f64> = traces
        .iter()
        .map(|t| {
            let (rl, cens) = t.run_length(direction, c);
            censored += cens as usize;
            rl.saturating_sub(q2) as f64
        })
        .collect();
    let (mean, se) = simulation::mean_and_se(&delays);
    DelayEstimate {
        mean,
        se: if se.is_nan() { 0.0 } else { se },
        censored_frac: censored as f64 / traces.len() as f64,
    }
}
