//! Scenario data: the drift-then-jump change-point mean plus independent or
//! weakly dependent errors, and batch delay experiments.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{self, DetectError, DetectorSpec};
use crate::rng::{stream_rng, StreamRole};
use crate::smoothing::{Series, SmoothError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("invalid error model: {0}")]
    Model(String),
    #[error("time index {t} outside 1..={horizon}")]
    OutOfRange { t: usize, horizon: usize },
    #[error("cannot read residuals from {path}: {reason}")]
    Residuals { path: String, reason: String },
    #[error(transparent)]
    Series(#[from] SmoothError),
}

/// Change-point mean: constant `mu0` before `q1`, linear drift `delta1` per
/// step on `[q1, q2)`, then constant with an extra jump from `q2` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub mu0: f64,
    pub delta1: f64,
    pub jump: f64,
    pub q1: usize,
    pub q2: usize,
    pub horizon: usize,
}

impl ScenarioParams {
    pub fn new(mu0: f64, delta1: f64, jump: f64, q1: usize, q2: usize, horizon: usize) -> Result<Self, SimError> {
        let p = Self {
            mu0,
            delta1,
            jump,
            q1,
            q2,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    /// The photovoltaic design: `T = 386`, `μ0 = 200`, `δ1 = -0.1`,
    /// `q1 = ⌊T/4⌋`, `q2 = ⌊T/2⌋`.
    pub fn photovoltaic(jump: f64) -> Self {
        let horizon = 386;
        Self {
            mu0: 200.0,
            delta1: -0.1,
            jump,
            q1: horizon / 4,
            q2: horizon / 2,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(1 <= self.q1 && self.q1 < self.q2 && self.q2 <= self.horizon) {
            return Err(SimError::Scenario(format!(
                "need 1 <= q1 < q2 <= T, got q1 = {}, q2 = {}, T = {}",
                self.q1, self.q2, self.horizon
            )));
        }
        if ![self.mu0, self.delta1, self.jump].iter().all(|v| v.is_finite()) {
            return Err(SimError::Scenario("non-finite mean parameter".into()));
        }
        Ok(())
    }

    pub fn with_jump(&self, jump: f64) -> Self {
        Self { jump, ..*self }
    }
}

/// `μ(t; θ)` for `1 <= t <= T`.
pub fn mean_path(params: &ScenarioParams, t: usize) -> Result<f64, SimError> {
    if t == 0 || t > params.horizon {
        return Err(SimError::OutOfRange {
            t,
            horizon: params.horizon,
        });
    }
    Ok(mean_unchecked(params, t))
}

fn mean_unchecked(p: &ScenarioParams, t: usize) -> f64 {
    if t < p.q1 {
        p.mu0
    } else if t < p.q2 {
        p.mu0 + (t - p.q1) as f64 * p.delta1
    } else {
        p.mu0 + (p.q2 - p.q1) as f64 * p.delta1 + p.jump
    }
}

/// Two-sided lag coefficients `θ_i`, `i ∈ ℤ`, of a linear process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LagCoefficients {
    /// `θ_i = scale · rate^{|i|}`.
    Geometric { scale: f64, rate: f64 },
    /// `θ_i = scale · (1 + |i|)^{-exponent}`; summable iff `exponent > 1`.
    PowerLaw { scale: f64, exponent: f64 },
}

impl LagCoefficients {
    pub fn at(&self, i: i64) -> f64 {
        let a = i.unsigned_abs() as f64;
        match *self {
            LagCoefficients::Geometric { scale, rate } => scale * rate.powf(a),
            LagCoefficients::PowerLaw { scale, exponent } => scale * (1.0 + a).powf(-exponent),
        }
    }

    /// Upper bound on `Σ_{|i|>L} |θ_i|`; infinite when the sequence is not summable.
    pub fn tail_bound(&self, truncation: usize) -> f64 {
        let l = truncation as f64;
        match *self {
            LagCoefficients::Geometric { scale, rate } => {
                let r = rate.abs();
                if r >= 1.0 {
                    f64::INFINITY
                } else {
                    2.0 * scale.abs() * r.powf(l + 1.0) / (1.0 - r)
                }
            }
            // Σ_{k >= L+2} k^{-p} <= ∫_{L+1}^∞ x^{-p} dx
            LagCoefficients::PowerLaw { scale, exponent } => {
                if exponent <= 1.0 {
                    f64::INFINITY
                } else {
                    2.0 * scale.abs() * (l + 1.0).powf(1.0 - exponent) / (exponent - 1.0)
                }
            }
        }
    }
}

/// Largest admissible ratio of the truncated tail to the retained `ℓ¹` mass.
pub const DEFAULT_MAX_TAIL_RATIO: f64 = 0.01;

/// Error process description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorModel {
    IidGaussian {
        sigma: f64,
    },
    /// Bootstrap from centered residuals.
    IidResample {
        #[serde(skip)]
        residuals: Arc<Vec<f64>>,
        #[serde(default)]
        file: Option<String>,
    },
    /// `ε_t = φ ε_{t-1} + σ z_t`, started from the stationary law.
    Ar1 {
        phi: f64,
        sigma: f64,
    },
    /// `ε_t = σ (z_t + Σ_k θ_k z_{t-k})`.
    Ma {
        coefficients: Vec<f64>,
        sigma: f64,
    },
    /// `ε_t = σ Σ_{|i| <= L} θ_i ξ_{t-i}` with i.i.d. standard normal `ξ`.
    LinearProcess {
        coefficients: LagCoefficients,
        truncation: usize,
        sigma: f64,
    },
}

impl ErrorModel {
    pub fn iid_gaussian(sigma: f64) -> Self {
        ErrorModel::IidGaussian { sigma }
    }

    pub fn ar1(phi: f64, sigma: f64) -> Self {
        ErrorModel::Ar1 { phi, sigma }
    }

    /// Centers `residuals` and resamples from them with replacement.
    pub fn resample(residuals: Vec<f64>) -> Result<Self, SimError> {
        if residuals.is_empty() {
            return Err(SimError::Model("no residuals to resample".into()));
        }
        if residuals.iter().any(|r| !r.is_finite()) {
            return Err(SimError::Model("non-finite residual".into()));
        }
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        Ok(ErrorModel::IidResample {
            residuals: Arc::new(residuals.into_iter().map(|r| r - mean).collect()),
            file: None,
        })
    }

    /// Reads one residual per line; a non-numeric first line is taken as a header.
    pub fn resample_from_file(path: &Path) -> Result<Self, SimError> {
        let err = |reason: String| SimError::Residuals {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut values = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            match line.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if n == 0 => continue,
                Err(e) => return Err(err(format!("line {}: {e}", n + 1))),
            }
        }
        match Self::resample(values)? {
            ErrorModel::IidResample { residuals, .. } => Ok(ErrorModel::IidResample {
                residuals,
                file: Some(path.display().to_string()),
            }),
            _ => unreachable!(),
        }
    }

    /// Loads residuals for a deserialized `iid_resample` model that only names its file.
    pub fn load_residuals(self) -> Result<Self, SimError> {
        match &self {
            ErrorModel::IidResample {
                residuals,
                file: Some(f),
            } if residuals.is_empty() => Self::resample_from_file(Path::new(f)),
            _ => Ok(self),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let check_sigma = |sigma: f64| {
            if sigma.is_finite() && sigma >= 0.0 {
                Ok(())
            } else {
                Err(SimError::Model(format!("sigma must be finite and >= 0, got {sigma}")))
            }
        };
        match self {
            ErrorModel::IidGaussian { sigma } => check_sigma(*sigma),
            ErrorModel::IidResample { residuals, .. } => {
                if residuals.is_empty() {
                    Err(SimError::Model("no residuals loaded".into()))
                } else {
                    Ok(())
                }
            }
            ErrorModel::Ar1 { phi, sigma } => {
                check_sigma(*sigma)?;
                if phi.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(SimError::Model(format!("AR(1) needs |phi| < 1, got {phi}")))
                }
            }
            ErrorModel::Ma { coefficients, sigma } => {
                check_sigma(*sigma)?;
                if coefficients.iter().all(|c| c.is_finite()) {
                    Ok(())
                } else {
                    Err(SimError::Model("non-finite MA coefficient".into()))
                }
            }
            ErrorModel::LinearProcess {
                coefficients,
                truncation,
                sigma,
            } => {
                check_sigma(*sigma)?;
                let tail = coefficients.tail_bound(*truncation);
                let kept: f64 = (-(*truncation as i64)..=*truncation as i64)
                    .map(|i| coefficients.at(i).abs())
                    .sum();
                if !tail.is_finite() || !(kept > 0.0) || tail > DEFAULT_MAX_TAIL_RATIO * kept {
                    Err(SimError::Model(format!(
                        "linear process coefficients not summable enough: tail bound {tail:.3e} vs retained mass {kept:.3e} at L = {truncation}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Stationary variance of the generated errors.
    pub fn variance(&self) -> f64 {
        match self {
            ErrorModel::IidGaussian { sigma } => sigma * sigma,
            ErrorModel::IidResample { residuals, .. } => {
                residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64
            }
            ErrorModel::Ar1 { phi, sigma } => sigma * sigma / (1.0 - phi * phi),
            ErrorModel::Ma { coefficients, sigma } => {
                sigma * sigma * (1.0 + coefficients.iter().map(|c| c * c).sum::<f64>())
            }
            ErrorModel::LinearProcess {
                coefficients,
                truncation,
                sigma,
            } => {
                let l = *truncation as i64;
                sigma * sigma * (-l..=l).map(|i| coefficients.at(i).powi(2)).sum::<f64>()
            }
        }
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draws `len` errors from `model` using `rng` (and a derived bootstrap stream
/// for resampling).
pub fn generate_errors_with(model: &ErrorModel, len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, SimError> {
    model.validate()?;
    Ok(match model {
        ErrorModel::IidGaussian { sigma } => normals(rng, len).into_iter().map(|z| sigma * z).collect(),
        ErrorModel::IidResample { residuals, .. } => (0..len)
            .map(|_| residuals[rng.random_range(0..residuals.len())])
            .collect(),
        ErrorModel::Ar1 { phi, sigma } => {
            let z = normals(rng, len);
            let mut out = Vec::with_capacity(len);
            let mut prev = 0.0;
            for (t, zt) in z.into_iter().enumerate() {
                let e = if t == 0 {
                    sigma / (1.0 - phi * phi).sqrt() * zt
                } else {
                    phi * prev + sigma * zt
                };
                out.push(e);
                prev = e;
            }
            out
        }
        ErrorModel::Ma { coefficients, sigma } => {
            let q = coefficients.len();
            let z = normals(rng, len + q);
            (0..len)
                .map(|t| {
                    let now = t + q;
                    let past: f64 = coefficients.iter().enumerate().map(|(k, c)| c * z[now - k - 1]).sum();
                    sigma * (z[now] + past)
                })
                .collect()
        }
        ErrorModel::LinearProcess {
            coefficients,
            truncation,
            sigma,
        } => {
            let l = *truncation;
            let theta: Vec<f64> = (-(l as i64)..=l as i64).map(|i| coefficients.at(i)).collect();
            let xi = normals(rng, len + 2 * l);
            // ε_t = Σ_{i=-L}^{L} θ_i ξ_{t-i}; ξ_{t-i} sits at offset t + L - i.
            (0..len)
                .map(|t| {
                    let acc: f64 = theta.iter().enumerate().map(|(k, th)| th * xi[t + 2 * l - k]).sum();
                    sigma * acc
                })
                .collect()
        }
    })
}

/// Errors for replication 0 of `seed`.
pub fn generate_errors(model: &ErrorModel, len: usize, seed: u64) -> Result<Vec<f64>, SimError> {
    let mut rng = error_rng(model, seed, 0);
    generate_errors_with(model, len, &mut rng)
}

pub(crate) fn error_rng(model: &ErrorModel, seed: u64, replication: u64) -> ChaCha8Rng {
    let role = match model {
        ErrorModel::IidResample { .. } => StreamRole::Bootstrap,
        _ => StreamRole::Errors,
    };
    stream_rng(seed, replication, role)
}

/// Mean parameters plus error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub errors: ErrorModel,
}

impl Scenario {
    pub fn new(params: ScenarioParams, errors: ErrorModel) -> Result<Self, SimError> {
        params.validate()?;
        errors.validate()?;
        Ok(Self { params, errors })
    }

    /// Series for one replication of `seed`.
    pub fn simulate(&self, seed: u64, replication: u64) -> Result<Series, SimError> {
        let mut rng = error_rng(&self.errors, seed, replication);
        let eps = generate_errors_with(&self.errors, self.params.horizon, &mut rng)?;
        let y = eps
            .into_iter()
            .enumerate()
            .map(|(k, e)| mean_unchecked(&self.params, k + 1) + e)
            .collect();
        Ok(Series::complete(y)?)
    }

    pub fn mean(&self) -> Vec<f64> {
        (1..=self.params.horizon)
            .map(|t| mean_unchecked(&self.params, t))
            .collect()
    }
}

/// `Y_t = μ(t; θ) + ε_t` for replication 0 of `seed`.
pub fn simulate_scenario(params: &ScenarioParams, model: &ErrorModel, seed: u64) -> Result<Series, SimError> {
    Scenario::new(*params, model.clone())?.simulate(seed, 0)
}

/// `Y_i = m(i/T) + ε_i`, `i = 1..=T`.
pub fn simulate_mean_model(
    mean: &(dyn Fn(f64) -> f64 + Sync),
    horizon: usize,
    model: &ErrorModel,
    seed: u64,
    replication: u64,
) -> Result<Series, SimError> {
    let mut rng = error_rng(model, seed, replication);
    let eps = generate_errors_with(model, horizon, &mut rng)?;
    let t = horizon as f64;
    let y = eps
        .into_iter()
        .enumerate()
        .map(|(k, e)| mean((k + 1) as f64 / t) + e)
        .collect();
    Ok(Series::complete(y)?)
}

/// One row of a delay table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayRow {
    pub delta: f64,
    pub mean_delay: f64,
    pub se: f64,
    pub censored_frac: f64,
}

/// Mean detection delay for each jump size in `deltas`.
///
/// Each `Δ` is applied toward the detector's alarm side (subtracted for a
/// lower-crossing rule, added for an upper-crossing rule) and every row uses
/// the same replication seeds.
pub fn run_experiment(
    deltas: &[f64],
    params: &ScenarioParams,
    model: &ErrorModel,
    spec: &DetectorSpec,
    replications: usize,
    seed: u64,
) -> Result<Vec<DelayRow>, DetectError> {
    deltas
        .iter()
        .map(|&delta| {
            let p = params.with_jump(spec.direction.toward_alarm() * delta.abs());
            let scenario = Scenario::new(p, model.clone())?;
            let est = detection::mean_delay(&scenario, spec, replications, seed)?;
            Ok(DelayRow {
                delta,
                mean_delay: est.mean,
                se: est.se,
                censored_frac: est.censored_frac,
            })
        })
        .collect()
}

/// Sample mean and standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `f` for replications `0..n` in parallel and returns results in
/// replication order.
pub fn replicate<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv() -> ScenarioParams {
        ScenarioParams::photovoltaic(0.0)
    }

    #[test]
    fn mean_path_examples() {
        let p = pv();
        assert_eq!(p.q1, 96);
        assert_eq!(p.q2, 193);
        assert_eq!(mean_path(&p, 1).unwrap(), 200.0);
        assert_eq!(mean_path(&p, 95).unwrap(), 200.0);
        assert_eq!(mean_path(&p, 96).unwrap(), 200.0);
        assert!((mean_path(&p, 193).unwrap() - 190.3).abs() < 1e-12);
        assert!((mean_path(&p, 386).unwrap() - 190.3).abs() < 1e-12);
        let p = p.with_jump(-4.3);
        assert!((mean_path(&p, 300).unwrap() - 186.0).abs() < 1e-12);
        assert!(matches!(mean_path(&p, 0), Err(SimError::OutOfRange { .. })));
        assert!(matches!(mean_path(&p, 387), Err(SimError::OutOfRange { .. })));
    }

    #[test]
    fn scenario_validation() {
        assert!(ScenarioParams::new(0.0, 0.0, 0.0, 5, 5, 10).is_err());
        assert!(ScenarioParams::new(0.0, 0.0, 0.0, 0, 5, 10).is_err());
        assert!(ScenarioParams::new(0.0, 0.0, 0.0, 2, 11, 10).is_err());
        assert!(ScenarioParams::new(0.0, 0.0, 0.0, 2, 10, 10).is_ok());
    }

    #[test]
    fn model_validation() {
        assert!(ErrorModel::ar1(1.0, 1.0).validate().is_err());
        assert!(ErrorModel::ar1(-0.99, 1.0).validate().is_ok());
        assert!(ErrorModel::iid_gaussian(-1.0).validate().is_err());
        let nonsummable = ErrorModel::LinearProcess {
            coefficients: LagCoefficients::PowerLaw {
                scale: 1.0,
                exponent: 1.0,
            },
            truncation: 1000,
            sigma: 1.0,
        };
        assert!(matches!(nonsummable.validate(), Err(SimError::Model(_))));
        assert!(generate_errors(&nonsummable, 10, 1).is_err());
        let short = ErrorModel::LinearProcess {
            coefficients: LagCoefficients::Geometric { scale: 1.0, rate: 0.9 },
            truncation: 3,
            sigma: 1.0,
        };
        assert!(short.validate().is_err());
        let ok = ErrorModel::LinearProcess {
            coefficients: LagCoefficients::Geometric { scale: 1.0, rate: 0.5 },
            truncation: 30,
            sigma: 1.0,
        };
        assert!(ok.validate().is_ok());
        assert!(ErrorModel::resample(vec![]).is_err());
    }

    #[test]
    fn tail_bounds() {
        let g = LagCoefficients::Geometric { scale: 1.0, rate: 0.5 };
        let exact: f64 = (31..200).map(|i| 2.0 * 0.5f64.powi(i)).sum();
        assert!((g.tail_bound(30) - exact).abs() < 1e-20);
        let p = LagCoefficients::PowerLaw {
            scale: 1.0,
            exponent: 3.0,
        };
        let brute: f64 = (11..200_000i64).map(|i| 2.0 * p.at(i)).sum();
        assert!(p.tail_bound(10) >= brute);
    }

    #[test]
    fn zero_noise_is_mean_path() {
        let p = pv().with_jump(-3.0);
        let s = simulate_scenario(&p, &ErrorModel::iid_gaussian(0.0), 42).unwrap();
        for t in 1..=p.horizon {
            assert_eq!(s.y(t).unwrap(), mean_path(&p, t).unwrap());
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let models = [
            ErrorModel::iid_gaussian(2.15),
            ErrorModel::ar1(0.4, 1.0),
            ErrorModel::Ma {
                coefficients: vec![0.5, -0.2],
                sigma: 1.0,
            },
            ErrorModel::resample(vec![1.0, -2.0, 4.0]).unwrap(),
        ];
        for m in &models {
            let a = simulate_scenario(&pv(), m, 9).unwrap();
            let b = simulate_scenario(&pv(), m, 9).unwrap();
            assert_eq!(a, b);
            let c = simulate_scenario(&pv(), m, 10).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn replication_parallelism_is_order_free() {
        let sc = Scenario::new(pv(), ErrorModel::iid_gaussian(1.0)).unwrap();
        let seq: Vec<Series> = (0..16).map(|r| sc.simulate(5, r).unwrap()).collect();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let par: Vec<Series> = pool.install(|| replicate(16, |r| sc.simulate(5, r))).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn resample_centers_and_draws_from_support() {
        let m = ErrorModel::resample(vec![1.0, 2.0, 6.0]).unwrap();
        let e = generate_errors(&m, 500, 3).unwrap();
        for v in e {
            assert!([-2.0, -1.0, 3.0].contains(&v));
        }
    }

    #[test]
    fn residual_file_parsing() {
        let dir = std::env::temp_dir().join(format!("seqcv-res-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let f = dir.join("res.csv");
        std::fs::write(&f, "residual\n1.5\n-0.5\n\n2.0\n").unwrap();
        let m = ErrorModel::resample_from_file(&f).unwrap();
        match &m {
            ErrorModel::IidResample { residuals, file } => {
                assert_eq!(residuals.len(), 3);
                assert!(residuals.iter().sum::<f64>().abs() < 1e-12);
                assert!(file.is_some());
            }
            _ => panic!(),
        }
        std::fs::write(&f, "1.0\nabc\n").unwrap();
        assert!(matches!(
            ErrorModel::resample_from_file(&f),
            Err(SimError::Residuals { .. })
        ));
        assert!(ErrorModel::resample_from_file(&dir.join("missing.csv")).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn mean_and_se_basic() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (1.666_666_666_666_666_7f64 / 4.0).sqrt()).abs() < 1e-15);
    }
}
