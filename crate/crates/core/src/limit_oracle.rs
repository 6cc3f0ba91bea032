//! Quadrature evaluation of the deterministic limit of `E C_{T,s}(T/ξ)`.
//!
//! With `N_ξ(r) = ξ ∫_0^r K(ξ(r-u)) du` and
//! `P_ξ(r) = ξ ∫_0^r K(ξ(r-u)) m(u) du`, the limiting leave-one-out
//! prediction at time fraction `r` is `M̄_ξ(r) = P_ξ(r) / N_ξ(r)`.
//!
//! * [`LimitMode::SelfConsistent`] integrates the pointwise limit of the
//!   finite-`T` expectation: `∫_0^s (M̄_ξ² - 2 m M̄_ξ) dr`.
//! * [`LimitMode::AsPrinted`] evaluates the closed display
//!   `(-2 ∫_0^s P_ξ + ∫_0^s P_ξ²) / N_ξ(s)`, which normalizes once at `s`
//!   instead of per `r` and has no `m(r)` factor in the cross term.
//!
//! The substitution `t = ξ(r-u)` turns both inner integrals into integrals
//! over `t ∈ [0, min(ξr, b)]`, `b` the support bound, so compact kernels
//! never put their support edge inside an integration interval.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossval::{self, CvError};
use crate::kernels::{Kernel, Support};
use crate::quadrature::{adaptive_simpson, adaptive_simpson_split};
use crate::simulation::{self, ErrorModel, SimError};

#[derive(Debug, Error)]
pub enum LimitError {
    #[error("mean function must be finite and strictly one-signed on [0, 1]; fails at u = {0}")]
    NotOneSigned(f64),
    #[error("normalization N_ξ(r) = {value:.3e} at ξ = {xi}, r = {r} is below the quadrature tolerance")]
    Degenerate { xi: f64, r: f64, value: f64 },
    #[error("invalid limit query: {0}")]
    Config(String),
    #[error(transparent)]
    Cv(#[from] CvError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMode {
    AsPrinted,
    SelfConsistent,
}

impl LimitMode {
    pub fn name(self) -> &'static str {
        match self {
            LimitMode::AsPrinted => "as_printed",
            LimitMode::SelfConsistent => "self_consistent",
        }
    }
}

pub type MeanFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Kernel, mean function on `[0, 1]`, evaluation mode and tolerance.
#[derive(Clone)]
pub struct LimitSpec {
    kernel: Kernel,
    mean: MeanFn,
    mode: LimitMode,
    tol: f64,
}

impl std::fmt::Debug for LimitSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LimitSpec")
            .field("kernel", &self.kernel)
            .field("mode", &self.mode)
            .field("tol", &self.tol)
            .finish_non_exhaustive()
    }
}

/// A limit value with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitValue {
    pub value: f64,
    pub error: f64,
}

impl LimitSpec {
    pub fn new<F>(kernel: Kernel, mean: F, mode: LimitMode, tol: f64) -> Result<Self, LimitError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::from_arc(kernel, Arc::new(mean), mode, tol)
    }

    pub fn from_arc(kernel: Kernel, mean: MeanFn, mode: LimitMode, tol: f64) -> Result<Self, LimitError> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(LimitError::Config(format!("tolerance must be positive, got {tol}")));
        }
        let first = mean(0.0);
        let sign = first.signum();
        for k in 0..1000 {
            let u = k as f64 / 999.0;
            let v = mean(u);
            if !v.is_finite() || v == 0.0 || v.signum() != sign {
                return Err(LimitError::NotOneSigned(u));
            }
        }
        Ok(Self {
            kernel,
            mean,
            mode,
            tol,
        })
    }

    pub fn with_mode(&self, mode: LimitMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn with_tolerance(&self, tol: f64) -> Self {
        Self { tol, ..self.clone() }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn mean(&self) -> &MeanFn {
        &self.mean
    }

    pub fn mode(&self) -> LimitMode {
        self.mode
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    fn reach(&self, xi: f64, r: f64) -> f64 {
        match self.kernel.support() {
            Support::Compact(b) => (xi * r).min(b),
            Support::Unbounded => xi * r,
        }
    }

    fn support_breaks(&self, xi: f64) -> Vec<f64> {
        match self.kernel.support() {
            Support::Compact(b) => vec![b / xi],
            Support::Unbounded => Vec::new(),
        }
    }

    fn k(&self, t: f64) -> f64 {
        self.kernel.scale() * self.kernel.shape_at(t)
    }

    /// `(P, N, err_P, err_N)` at `r`.
    fn inner(&self, xi: f64, r: f64, tol: f64) -> [f64; 4] {
        let m = &self.mean;
        let e = adaptive_simpson(
            |t| {
                let k = self.k(t);
                [k * m(r - t / xi), k]
            },
            0.0,
            self.reach(xi, r),
            tol,
        );
        [e.value[0], e.value[1], e.error[0], e.error[1]]
    }

    /// `M̄_ξ(r)` with its error estimate. At `r = 0` the limit `m(0)` is used.
    fn prediction(&self, xi: f64, r: f64, tol: f64) -> (f64, f64) {
        if r <= 0.0 {
            return ((self.mean)(0.0), 0.0);
        }
        let [p, n, ep, en] = self.inner(xi, r, tol);
        if !(n > 0.0) {
            return ((self.mean)(r), 0.0);
        }
        let mbar = p / n;
        (mbar, (ep + mbar.abs() * en) / n)
    }
}

fn check_xi(xi: f64) -> Result<(), LimitError> {
    if xi.is_finite() && xi > 0.0 {
        Ok(())
    } else {
        Err(LimitError::Config(format!("ξ must be positive, got {xi}")))
    }
}

fn check_s(s: f64) -> Result<(), LimitError> {
    if s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(LimitError::Config(format!("s must lie in (0, 1], got {s}")))
    }
}

/// `N_ξ(r) = ξ ∫_0^r K(ξ(r-u)) du = ∫_0^{ξr} K(t) dt`.
pub fn norming(spec: &LimitSpec, xi: f64, r: f64) -> Result<f64, LimitError> {
    check_xi(xi)?;
    if !(r > 0.0) {
        return Err(LimitError::Config(format!("norming needs r > 0, got {r}")));
    }
    let e = adaptive_simpson(|t| [spec.k(t)], 0.0, spec.reach(xi, r), spec.tol);
    let n = e.value[0];
    if n <= spec.tol {
        return Err(LimitError::Degenerate { xi, r, value: n });
    }
    Ok(n)
}

/// `C_ξ(s)` in the spec's mode.
pub fn limit_objective(spec: &LimitSpec, xi: f64, s: f64) -> Result<f64, LimitError> {
    Ok(limit_objective_with_error(spec, xi, s)?.value)
}

/// `C_ξ(s)` together with an error estimate combining the outer quadrature
/// error and the propagated inner errors.
pub fn limit_objective_with_error(spec: &LimitSpec, xi: f64, s: f64) -> Result<LimitValue, LimitError> {
    check_xi(xi)?;
    check_s(s)?;
    let layer_tol = spec.tol / 2.0;
    let breaks = spec.support_breaks(xi);
    match spec.mode {
        LimitMode::SelfConsistent => {
            let mut worst = 0.0f64;
            let e = adaptive_simpson_split(
                |r| {
                    let m = (spec.mean)(r);
                    let (mbar, err) = spec.prediction(xi, r, layer_tol);
                    worst = worst.max(2.0 * (mbar - m).abs() * err + err * err);
                    [mbar * mbar - 2.0 * m * mbar]
                },
                0.0,
                s,
                &breaks,
                layer_tol,
            );
            Ok(LimitValue {
                value: e.value[0],
                error: e.error[0] + s * worst,
            })
        }
        LimitMode::AsPrinted => {
            let norm = norming(spec, xi, s)?;
            let mut worst_p = 0.0f64;
            let mut worst_p2 = 0.0f64;
            let e = adaptive_simpson_split(
                |r| {
                    if r <= 0.0 {
                        return [0.0, 0.0];
                    }
                    let [p, _, ep, _] = spec.inner(xi, r, layer_tol);
                    worst_p = worst_p.max(ep);
                    worst_p2 = worst_p2.max(2.0 * p.abs() * ep + ep * ep);
                    [p, p * p]
                },
                0.0,
                s,
                &breaks,
                layer_tol,
            );
            let num = -2.0 * e.value[0] + e.value[1];
            let num_err = 2.0 * (e.error[0] + s * worst_p) + e.error[1] + s * worst_p2;
            Ok(LimitValue {
                value: num / norm,
                error: num_err / norm + num.abs() * spec.tol / (norm * norm),
            })
        }
    }
}

/// `(∫_0^s (M̄_ξ - m)², ∫_0^s m²)`; in self-consistent mode
/// `C_ξ(s) = first - second`.
pub fn bias_decomposition(spec: &LimitSpec, xi: f64, s: f64) -> Result<(f64, f64), LimitError> {
    check_xi(xi)?;
    check_s(s)?;
    let layer_tol = spec.tol / 2.0;
    let breaks = spec.support_breaks(xi);
    let e = adaptive_simpson_split(
        |r| {
            let m = (spec.mean)(r);
            let (mbar, _) = spec.prediction(xi, r, layer_tol);
            [(mbar - m) * (mbar - m), m * m]
        },
        0.0,
        s,
        &breaks,
        layer_tol,
    );
    Ok((e.value[0], e.value[1]))
}

/// Margin `inf_{|ξ-ξ*| >= ε} C_ξ(s) - C_{ξ*}(s)` for one `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margin {
    pub epsilon: f64,
    /// `None` when no grid point is at least `ε` away from `ξ*`.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub xi_star: f64,
    pub value: f64,
    pub margins: Vec<Margin>,
    pub well_separated: bool,
    pub tolerance: f64,
}

pub const SEPARATION_EPSILONS: [f64; 3] = [0.5, 1.0, 2.0];

/// Grid argmin (ties to the smallest ξ) and its separation margins; well
/// separated when every defined margin exceeds `tol` and at least one is defined.
pub fn separation_report(grid: &[f64], values: &[f64], tol: f64) -> Result<SeparationReport, LimitError> {
    if grid.is_empty() || grid.len() != values.len() {
        return Err(LimitError::Config(
            "grid and values must be nonempty and aligned".into(),
        ));
    }
    let (k, _) = crossval::argmin_smallest(values).expect("nonempty");
    let (xi_star, best) = (grid[k], values[k]);
    let margins: Vec<Margin> = SEPARATION_EPSILONS
        .iter()
        .map(|&eps| {
            let margin = grid
                .iter()
                .zip(values)
                .filter(|(x, _)| (*x - xi_star).abs() >= eps)
                .map(|(_, v)| v - best)
                .reduce(f64::min);
            Margin { epsilon: eps, margin }
        })
        .collect();
    let defined: Vec<f64> = margins.iter().filter_map(|m| m.margin).collect();
    let well_separated = !defined.is_empty() && defined.iter().all(|m| *m > tol);
    Ok(SeparationReport {
        xi_star,
        value: best,
        margins,
        well_separated,
        tolerance: tol,
    })
}

/// `C_ξ(s)` over `grid`, evaluated in parallel, in grid order.
pub fn limit_curve(spec: &LimitSpec, grid: &[f64], s: f64) -> Result<Vec<f64>, LimitError> {
    grid.par_iter().map(|&xi| limit_objective(spec, xi, s)).collect()
}

/// `ξ*_s = argmin_ξ C_ξ(s)` over `grid` with separation diagnostics.
pub fn limit_argmin(spec: &LimitSpec, grid: &[f64], s: f64) -> Result<SeparationReport, LimitError> {
    if grid.is_empty() {
        return Err(LimitError::Config("empty ξ-grid".into()));
    }
    let values = limit_curve(spec, grid, s)?;
    separation_report(grid, &values, spec.tol)
}

/// Monte Carlo versus quadrature for one `(ξ, s, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitComparison {
    pub xi: f64,
    pub s: f64,
    pub horizon: usize,
    pub replications: usize,
    pub mc_mean: f64,
    pub mc_se: f64,
    pub self_consistent: f64,
    pub as_printed: f64,
    pub gap_self_consistent: f64,
    pub gap_as_printed: f64,
}

/// Per-replication `C_{T,s}(ξ)` for `Y_i = m(i/T) + ε_i`.
pub fn mc_objective_samples(
    spec: &LimitSpec,
    xi: f64,
    s: f64,
    horizon: usize,
    errors: &ErrorModel,
    replications: usize,
    seed: u64,
) -> Result<Vec<f64>, LimitError> {
    let mean = spec.mean.clone();
    simulation::replicate(replications, |r| {
        let series = simulation::simulate_mean_model(&*mean, horizon, errors, seed, r)?;
        Ok(crossval::cv_objective(&series, &spec.kernel, xi, s)?)
    })
}

/// Compares the Monte Carlo mean of `C_{T,s}(T/ξ)` under i.i.d. gaussian
/// errors with standard deviation `sigma` against both quadrature modes.
#[allow(clippy::too_many_arguments)]
pub fn limit_vs_montecarlo(
    spec: &LimitSpec,
    xi: f64,
    s: f64,
    horizon: usize,
    replications: usize,
    seed: u64,
    sigma: f64,
) -> Result<LimitComparison, LimitError> {
    if horizon < 100 {
        return Err(LimitError::Config(format!("need T >= 100, got {horizon}")));
    }
    if replications < 50 {
        return Err(LimitError::Config(format!(
            "need at least 50 replications, got {replications}"
        )));
    }
    let samples = mc_objective_samples(
        spec,
        xi,
        s,
        horizon,
        &ErrorModel::iid_gaussian(sigma),
        replications,
        seed,
    )?;
    let (mc_mean, mc_se) = simulation::mean_and_se(&samples);
    let self_consistent = limit_objective(&spec.with_mode(LimitMode::SelfConsistent), xi, s)?;
    let as_printed = limit_objective(&spec.with_mode(LimitMode::AsPrinted), xi, s)?;
    Ok(LimitComparison {
        xi,
        s,
        horizon,
        replications,
        mc_mean,
        mc_se,
        self_consistent,
        as_printed,
        gap_self_consistent: (mc_mean - self_consistent).abs(),
        gap_as_printed: (mc_mean - as_printed).abs(),
    })
}
