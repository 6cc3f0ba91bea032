//! Sequential leave-one-out cross-validation and the checkpointed
//! bandwidth selector.
//!
//! The bandwidth is parameterized as `h = T/ξ` where `T` is the series
//! horizon. At each checkpoint `s_k` the selector minimizes
//! `C_{T,s}(ξ) = T⁻¹ Σ_{i=2}^{⌊Ts⌋} (m̂²_{h,-i} - 2 Y_i m̂_{h,-i})` over a
//! finite ξ-grid; the chosen bandwidth is then held until the next checkpoint.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::kernels::Kernel;
use crate::smoothing::{self, LagWeights, Series, SmoothError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CvError {
    #[error("invalid cross-validation plan: {0}")]
    Config(String),
    #[error("need at least two observations up to s = {s} (⌊Ts⌋ = {index})")]
    TooFewPoints { s: f64, index: usize },
    #[error("checkpoint s = {s} needs {needed} observations, series has {len}")]
    InsufficientData { s: f64, needed: usize, len: usize },
    #[error(transparent)]
    Smooth(#[from] SmoothError),
}

pub const DEFAULT_XI_MAX: f64 = 20.0;
pub const DEFAULT_GRID_SIZE: usize = 61;
pub const DEFAULT_S0: f64 = 0.1;

/// `⌊T s⌋`, robust to `s` having been formed as `n/T` in floating point.
pub fn checkpoint_index(horizon: usize, s: f64) -> usize {
    (horizon as f64 * s + 1e-9).floor().max(0.0) as usize
}

/// ξ-grid, monitoring start `s0` and checkpoints `s_1 < … < s_N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvPlan {
    xi_grid: Vec<f64>,
    s0: f64,
    checkpoints: Vec<f64>,
    refine: bool,
}

impl CvPlan {
    pub fn new(xi_grid: Vec<f64>, s0: f64, checkpoints: Vec<f64>) -> Result<Self, CvError> {
        if xi_grid.is_empty() {
            return Err(CvError::Config("empty ξ-grid".into()));
        }
        if xi_grid.iter().any(|x| !(x.is_finite() && *x >= 1.0)) {
            return Err(CvError::Config("ξ-grid values must be finite and >= 1".into()));
        }
        if xi_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CvError::Config("ξ-grid must be strictly increasing".into()));
        }
        if !(s0 > 0.0 && s0 < 1.0) {
            return Err(CvError::Config(format!("s0 must lie in (0, 1), got {s0}")));
        }
        if checkpoints.is_empty() {
            return Err(CvError::Config("no checkpoints".into()));
        }
        if let Some(s) = checkpoints.iter().find(|s| !(**s > s0 && **s <= 1.0)) {
            return Err(CvError::Config(format!("checkpoint {s} outside (s0 = {s0}, 1]")));
        }
        if checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CvError::Config("checkpoints must be strictly increasing".into()));
        }
        Ok(Self {
            xi_grid,
            s0,
            checkpoints,
            refine: false,
        })
    }

    /// `n` equispaced grid points on `[xi_min, xi_max]`.
    pub fn equispaced_grid(xi_min: f64, xi_max: f64, n: usize) -> Result<Vec<f64>, CvError> {
        if n == 0 {
            return Err(CvError::Config("empty ξ-grid".into()));
        }
        if n == 1 {
            return Ok(vec![xi_min]);
        }
        if !(xi_max > xi_min) {
            return Err(CvError::Config(format!("need Ξ > ξ_min, got {xi_max} <= {xi_min}")));
        }
        let step = (xi_max - xi_min) / (n - 1) as f64;
        Ok((0..n)
            .map(|k| if k + 1 == n { xi_max } else { xi_min + k as f64 * step })
            .collect())
    }

    /// Default 61-point grid on `[1, 20]`.
    pub fn default_grid() -> Vec<f64> {
        Self::equispaced_grid(1.0, DEFAULT_XI_MAX, DEFAULT_GRID_SIZE).expect("static grid")
    }

    /// Checkpoints given as observation counts `n_k` on horizon `T`.
    pub fn checkpoints_at(indices: &[usize], horizon: usize) -> Vec<f64> {
        indices.iter().map(|&n| n as f64 / horizon as f64).collect()
    }

    /// Turns on golden-section refinement inside the best grid cell.
    pub fn with_refinement(mut self, refine: bool) -> Self {
        self.refine = refine;
        self
    }

    pub fn xi_grid(&self) -> &[f64] {
        &self.xi_grid
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn checkpoints(&self) -> &[f64] {
        &self.checkpoints
    }

    pub fn refines(&self) -> bool {
        self.refine
    }
}

/// Outcome of the minimization at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub checkpoint: f64,
    /// `⌊T s⌋`, the last observation used.
    pub index: usize,
    /// `C_{T,s}(ξ)` for every grid point, in grid order.
    pub objective: Vec<f64>,
    pub xi_star: f64,
    pub h_star: f64,
    /// More than one grid point attains the minimum.
    pub tie: bool,
}

/// Piecewise-constant, right-continuous bandwidth path: `bandwidths[k]` is
/// used for `starts[k] <= i < starts[k+1]`. Indices before the first
/// checkpoint reuse the first selected bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthPath {
    starts: Vec<usize>,
    bandwidths: Vec<f64>,
}

impl BandwidthPath {
    pub fn new(starts: Vec<usize>, bandwidths: Vec<f64>) -> Result<Self, CvError> {
        if starts.is_empty() || starts.len() != bandwidths.len() {
            return Err(CvError::Config("bandwidth path needs one bandwidth per start".into()));
        }
        if starts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CvError::Config("bandwidth path starts must increase".into()));
        }
        for &h in &bandwidths {
            smoothing::check_bandwidth(h)?;
        }
        Ok(Self { starts, bandwidths })
    }

    pub fn constant(h: f64) -> Result<Self, CvError> {
        Self::new(vec![1], vec![h])
    }

    /// Bandwidth in force at time index `i`.
    pub fn at(&self, i: usize) -> f64 {
        let k = self.starts.partition_point(|&s| s <= i);
        self.bandwidths[k.saturating_sub(1)]
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }
}

/// All checkpoint results plus the bandwidth path they induce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub results: Vec<CvResult>,
    pub path: BandwidthPath,
}

fn last_index(series: &Series, s: f64) -> Result<usize, CvError> {
    let n = checkpoint_index(series.horizon(), s);
    if n < 2 {
        return Err(CvError::TooFewPoints { s, index: n });
    }
    if n > series.len() {
        return Err(CvError::InsufficientData {
            s,
            needed: n,
            len: series.len(),
        });
    }
    Ok(n)
}

/// `CV_s(h) = T⁻¹ Σ_{i=2}^{⌊Ts⌋} (Y_i - m̂_{h,-i})²`.
pub fn cv_criterion(series: &Series, kernel: &Kernel, h: f64, s: f64) -> Result<f64, CvError> {
    let n = last_index(series, s)?;
    let pred = smoothing::loo_predictions(series, kernel, h, n)?;
    let y = &series.values()[1..n];
    let sse: f64 = y.iter().zip(&pred).map(|(y, m)| (y - m) * (y - m)).sum();
    Ok(sse / series.horizon() as f64)
}

/// `C_{T,s}(ξ)` at `h = T/ξ`.
pub fn cv_objective(series: &Series, kernel: &Kernel, xi: f64, s: f64) -> Result<f64, CvError> {
    check_xi(xi)?;
    let n = last_index(series, s)?;
    let h = series.horizon() as f64 / xi;
    let pred = smoothing::loo_predictions(series, kernel, h, n)?;
    Ok(objective_terms(&series.values()[1..n], &pred) / series.horizon() as f64)
}

fn check_xi(xi: f64) -> Result<(), CvError> {
    if xi.is_finite() && xi > 0.0 {
        Ok(())
    } else {
        Err(CvError::Config(format!("ξ must be finite and positive, got {xi}")))
    }
}

/// `Σ (m̂² - 2 Y m̂)` over aligned slices.
#[inline]
fn objective_terms(y: &[f64], pred: &[f64]) -> f64 {
    y.iter().zip(pred).map(|(y, m)| m * (m - 2.0 * y)).sum()
}

/// `C_{T,s_k}(ξ)` for every checkpoint, carrying partial sums forward.
fn objective_over_checkpoints(
    z: &[f64],
    values: &[f64],
    anchor: f64,
    kernel: &Kernel,
    horizon: usize,
    xi: f64,
    ends: &[usize],
) -> Result<Vec<f64>, SmoothError> {
    let last = *ends.last().expect("nonempty checkpoints");
    let h = horizon as f64 / xi;
    let weights = LagWeights::new(kernel, h, last - 1);
    let pred = smoothing::loo_with_weights(z, anchor, &weights, last)?;
    let mut out = Vec::with_capacity(ends.len());
    let mut acc = 0.0;
    let mut from = 1;
    for &n in ends {
        acc += objective_terms(&values[from..n], &pred[from - 1..n - 1]);
        from = n;
        out.push(acc / horizon as f64);
    }
    Ok(out)
}

/// Grid argmin; ties go to the smallest ξ. Returns `(index, tie)`.
pub fn argmin_smallest(values: &[f64]) -> Option<(usize, bool)> {
    let mut best: Option<usize> = None;
    for (k, v) in values.iter().enumerate() {
        match best {
            None => best = Some(k),
            Some(b) if *v < values[b] => best = Some(k),
            _ => {}
        }
    }
    best.map(|b| {
        let ties = values.iter().filter(|v| **v == values[b]).count();
        (b, ties > 1)
    })
}

fn surface(series: &Series, kernel: &Kernel, plan: &CvPlan, ends: &[usize]) -> Result<Vec<Vec<f64>>, CvError> {
    let values = series.values();
    let anchor = values[0];
    let z: Vec<f64> = values.iter().map(|y| y - anchor).collect();
    let horizon = series.horizon();
    let per_xi: Result<Vec<Vec<f64>>, SmoothError> = plan
        .xi_grid
        .par_iter()
        .map(|&xi| objective_over_checkpoints(&z, values, anchor, kernel, horizon, xi, ends))
        .collect();
    Ok(per_xi?)
}

fn build_result(
    series: &Series,
    kernel: &Kernel,
    plan: &CvPlan,
    s: f64,
    index: usize,
    objective: Vec<f64>,
) -> Result<CvResult, CvError> {
    let (k, tie) = argmin_smallest(&objective).ok_or_else(|| CvError::Config("empty ξ-grid".into()))?;
    let mut xi_star = plan.xi_grid[k];
    if plan.refine && plan.xi_grid.len() > 1 {
        let lo = plan.xi_grid[k.saturating_sub(1)];
        let hi = plan.xi_grid[(k + 1).min(plan.xi_grid.len() - 1)];
        let prefix = series.prefix(index);
        let mut failure = None;
        let (x, fx) = golden_section(
            |xi| match cv_objective(&prefix, kernel, xi, s) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            },
            lo,
            hi,
            1e-6,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        if fx < objective[k] {
            xi_star = x;
        }
    }
    Ok(CvResult {
        checkpoint: s,
        index,
        objective,
        xi_star,
        h_star: series.horizon() as f64 / xi_star,
        tie,
    })
}

/// `ξ*_T(s) = argmin_ξ C_{T,s}(ξ)` over the plan's grid. `s` must be one of
/// the plan's checkpoints; only `Y_1..Y_{⌊Ts⌋}` are used.
pub fn select_xi(series: &Series, kernel: &Kernel, plan: &CvPlan, s: f64) -> Result<CvResult, CvError> {
    if !plan.checkpoints.contains(&s) {
        return Err(CvError::Config(format!("{s} is not a checkpoint of the plan")));
    }
    let n = last_index(series, s)?;
    let objective = surface(series, kernel, plan, &[n])?.into_iter().map(|v| v[0]).collect();
    build_result(series, kernel, plan, s, n, objective)
}

/// Runs the selector at every checkpoint and assembles the bandwidth path.
pub fn run_schedule(series: &Series, kernel: &Kernel, plan: &CvPlan) -> Result<Schedule, CvError> {
    let ends = plan
        .checkpoints
        .iter()
        .map(|&s| last_index(series, s))
        .collect::<Result<Vec<_>, _>>()?;
    if ends.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CvError::Config(format!(
            "checkpoints collapse onto the same observation for T = {}",
            series.horizon()
        )));
    }
    let surf = surface(series, kernel, plan, &ends)?;
    let mut results = Vec::with_capacity(ends.len());
    for (c, (&s, &n)) in plan.checkpoints.iter().zip(&ends).enumerate() {
        let objective = surf.iter().map(|per_xi| per_xi[c]).collect();
        results.push(build_result(series, kernel, plan, s, n, objective)?);
    }
    let path = BandwidthPath::new(ends, results.iter().map(|r| r.h_star).collect())?;
    Ok(Schedule { results, path })
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a minimum of `f` on `[a, b]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(grid: Vec<f64>, cps: Vec<f64>) -> CvPlan {
        CvPlan::new(grid, 0.1, cps).unwrap()
    }

    #[test]
    fn plan_validation() {
        assert!(CvPlan::new(vec![], 0.1, vec![0.5]).is_err());
        assert!(CvPlan::new(vec![2.0, 1.0], 0.1, vec![0.5]).is_err());
        assert!(CvPlan::new(vec![0.5, 1.0], 0.1, vec![0.5]).is_err());
        assert!(CvPlan::new(vec![1.0], 0.1, vec![0.05]).is_err());
        assert!(CvPlan::new(vec![1.0], 0.1, vec![0.5, 0.4]).is_err());
        assert!(CvPlan::new(vec![1.0], 0.1, vec![1.2]).is_err());
        assert!(CvPlan::new(vec![1.0], 0.0, vec![0.5]).is_err());
        assert!(CvPlan::new(vec![1.0, 2.0], 0.1, vec![0.5, 1.0]).is_ok());
    }

    #[test]
    fn default_grid_shape() {
        let g = CvPlan::default_grid();
        assert_eq!(g.len(), 61);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[60], 20.0);
        assert!((g[1] - g[0] - 19.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn argmin_rules() {
        assert_eq!(argmin_smallest(&[3.0, 1.0, 2.0]), Some((1, false)));
        assert_eq!(argmin_smallest(&[4.0, 4.0, 4.0]), Some((0, true)));
        assert_eq!(argmin_smallest(&[5.0, 1.0, 1.0]), Some((1, true)));
        assert_eq!(argmin_smallest(&[]), None);
    }

    #[test]
    fn constant_series_zero_criterion_and_closed_form_objective() {
        let mu = 3.0;
        let t = 100;
        let s = Series::complete(vec![mu; t]).unwrap();
        for k in [
            Kernel::uniform(),
            Kernel::gaussian(),
            Kernel::epanechnikov(),
            Kernel::exponential(),
        ] {
            assert_eq!(cv_criterion(&s, &k, 10.0, 0.5).unwrap(), 0.0);
            let c = cv_objective(&s, &k, 4.0, 0.5).unwrap();
            let expected = -((50 - 1) as f64) * mu * mu / t as f64;
            assert!((c - expected).abs() < 1e-12, "{c} vs {expected}");
        }
    }

    #[test]
    fn constant_series_ties_to_smallest_xi() {
        let s = Series::complete(vec![2.5; 60]).unwrap();
        let p = plan(vec![1.0, 2.0, 4.0], vec![0.5]);
        let r = select_xi(&s, &Kernel::gaussian(), &p, 0.5).unwrap();
        assert!(r.tie);
        assert_eq!(r.xi_star, 1.0);
        assert_eq!(r.h_star, 60.0);
    }

    #[test]
    fn select_requires_known_checkpoint() {
        let s = Series::complete((0..50).map(|k| k as f64).collect()).unwrap();
        let p = plan(vec![1.0, 2.0], vec![0.5]);
        assert!(matches!(
            select_xi(&s, &Kernel::gaussian(), &p, 0.6),
            Err(CvError::Config(_))
        ));
    }

    #[test]
    fn too_few_and_missing_data() {
        let s = Series::new(vec![1.0, 2.0, 3.0], 100).unwrap();
        assert!(matches!(
            cv_objective(&s, &Kernel::gaussian(), 2.0, 0.01),
            Err(CvError::TooFewPoints { .. })
        ));
        assert!(matches!(
            cv_objective(&s, &Kernel::gaussian(), 2.0, 0.5),
            Err(CvError::InsufficientData { needed: 50, .. })
        ));
    }

    #[test]
    fn checkpoint_index_is_robust() {
        for t in [386usize, 1000, 97] {
            for n in 1..=t {
                assert_eq!(checkpoint_index(t, n as f64 / t as f64), n);
            }
        }
        assert_eq!(checkpoint_index(200, 0.75), 150);
    }

    #[test]
    fn single_checkpoint_gives_constant_path() {
        let s = Series::complete((0..80).map(|k| (k as f64 * 0.3).sin() + 2.0).collect()).unwrap();
        let p = plan(vec![1.0, 3.0, 9.0], vec![0.5]);
        let sch = run_schedule(&s, &Kernel::gaussian(), &p).unwrap();
        assert_eq!(sch.results.len(), 1);
        let h = sch.results[0].h_star;
        for i in 1..=80 {
            assert_eq!(sch.path.at(i), h);
        }
    }

    #[test]
    fn path_switches_at_checkpoints() {
        let p = BandwidthPath::new(vec![10, 20, 30], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.at(1), 1.0);
        assert_eq!(p.at(9), 1.0);
        assert_eq!(p.at(10), 1.0);
        assert_eq!(p.at(19), 1.0);
        assert_eq!(p.at(20), 2.0);
        assert_eq!(p.at(29), 2.0);
        assert_eq!(p.at(30), 3.0);
        assert_eq!(p.at(1000), 3.0);
        assert!(BandwidthPath::new(vec![3, 2], vec![1.0, 1.0]).is_err());
        assert!(BandwidthPath::new(vec![3], vec![0.0]).is_err());
    }

    #[test]
    fn schedule_matches_independent_selection() {
        let y: Vec<f64> = (1..=120)
            .map(|k| 1.0 + k as f64 / 120.0 + 0.3 * ((k * 7919) % 13) as f64 / 13.0)
            .collect();
        let s = Series::complete(y).unwrap();
        let p = plan(vec![1.0, 2.0, 5.0, 10.0], vec![0.25, 0.5, 1.0]);
        let sch = run_schedule(&s, &Kernel::gaussian(), &p).unwrap();
        for (r, &cp) in sch.results.iter().zip(p.checkpoints()) {
            let solo = select_xi(&s, &Kernel::gaussian(), &p, cp).unwrap();
            assert_eq!(r.xi_star, solo.xi_star);
            for (a, b) in r.objective.iter().zip(&solo.objective) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn golden_section_finds_parabola_min() {
        let (x, fx) = golden_section(|x| (x - 2.3) * (x - 2.3) + 1.0, 1.0, 4.0, 1e-8);
        assert!((x - 2.3).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-10);
    }

    #[test]
    fn refinement_never_worse_than_grid() {
        let y: Vec<f64> = (1..=200)
            .map(|k| 2.0 + (k as f64 / 30.0).sin() + 0.2 * ((k * 31) % 7) as f64 / 7.0)
            .collect();
        let s = Series::complete(y).unwrap();
        let p = plan(CvPlan::equispaced_grid(1.0, 20.0, 11).unwrap(), vec![0.8]);
        let coarse = select_xi(&s, &Kernel::gaussian(), &p, 0.8).unwrap();
        let fine = select_xi(&s, &Kernel::gaussian(), &p.clone().with_refinement(true), 0.8).unwrap();
        let at = |xi| cv_objective(&s, &Kernel::gaussian(), xi, 0.8).unwrap();
        assert!(at(fine.xi_star) <= at(coarse.xi_star));
    }
}
