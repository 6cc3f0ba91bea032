//! Sequential kernel smoothers and the sequential leave-one-out predictor.
//!
//! Formulas use 1-based time indices `i = 1..=T`; storage is 0-based. The
//! kernel is always evaluated at the lag `(i - j)/h` with `j <= i`.
//!
//! Normalized quantities are computed around an anchor `a = Y_1`:
//! `m̂ = a + Σ w (Y_j - a) / Σ w`. This is algebraically the plain weighted
//! mean, returns a constant series unchanged to the last bit, and drops the
//! kernel scale, which cancels anyway.

use std::collections::VecDeque;

use thiserror::Error;

use crate::kernels::{Kernel, Support};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothError {
    #[error("index {index} outside 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("leave-one-out prediction needs i >= 2, got {0}")]
    NoPast(usize),
    #[error("bandwidth must be finite and positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("zero kernel weight sum at i = {index}")]
    DegenerateWindow { index: usize },
    #[error("series has {len} values but horizon {horizon}")]
    TooLong { len: usize, horizon: usize },
    #[error("series contains a non-finite value at i = {0}")]
    NonFinite(usize),
}

/// Observations `Y_1..Y_n` on a horizon `T >= n`; the design point of `Y_i` is `i/T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    values: Vec<f64>,
    horizon: usize,
}

impl Series {
    pub fn new(values: Vec<f64>, horizon: usize) -> Result<Self, SmoothError> {
        if values.len() > horizon {
            return Err(SmoothError::TooLong {
                len: values.len(),
                horizon,
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(SmoothError::NonFinite(k + 1));
        }
        Ok(Self { values, horizon })
    }

    /// A complete series: horizon equals the number of values.
    pub fn complete(values: Vec<f64>) -> Result<Self, SmoothError> {
        let n = values.len();
        Self::new(values, n)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `Y_i`, 1-based.
    pub fn y(&self, i: usize) -> Result<f64, SmoothError> {
        self.check_index(i)?;
        Ok(self.values[i - 1])
    }

    /// The first `n` observations, same horizon.
    pub fn prefix(&self, n: usize) -> Series {
        Series {
            values: self.values[..n.min(self.len())].to_vec(),
            horizon: self.horizon,
        }
    }

    fn check_index(&self, i: usize) -> Result<(), SmoothError> {
        if i == 0 || i > self.len() {
            return Err(SmoothError::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(())
    }

    fn anchor(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    fn centered(&self) -> Vec<f64> {
        let a = self.anchor();
        self.values.iter().map(|y| y - a).collect()
    }
}

pub(crate) fn check_bandwidth(h: f64) -> Result<(), SmoothError> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(SmoothError::InvalidBandwidth(h))
    }
}

/// Shape weights `K(d/h)` for lags `d = 0..=max_lag`, stored reversed so
/// that weights for lags `1..=L` line up with a contiguous slice of data.
#[derive(Debug, Clone)]
pub(crate) struct LagWeights {
    /// `rev[t] = K((max_lag - t)/h)`.
    rev: Vec<f64>,
    /// `cum[d] = Σ_{l=1}^{d} K(l/h)`.
    cum: Vec<f64>,
    max_lag: usize,
}

impl LagWeights {
    pub(crate) fn new(kernel: &Kernel, h: f64, longest_lag: usize) -> Self {
        let max_lag = kernel.max_lag(h, longest_lag);
        let w: Vec<f64> = (0..=max_lag).map(|d| kernel.shape_at(d as f64 / h)).collect();
        let mut cum = Vec::with_capacity(max_lag + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for &wd in &w[1..] {
            acc += wd;
            cum.push(acc);
        }
        let rev = w.into_iter().rev().collect();
        Self { rev, cum, max_lag }
    }

    pub(crate) fn max_lag(&self) -> usize {
        self.max_lag
    }

    #[inline]
    fn weight(&self, d: usize) -> f64 {
        self.rev[self.max_lag - d]
    }

    /// `(Σ_{d=1}^{L} w_d z_{k-d}, Σ_{d=1}^{L} w_d)` with `L = min(k, max_lag)`;
    /// `z` holds at least `k` past values and `k` is the 0-based target.
    #[inline]
    pub(crate) fn past_sums(&self, z: &[f64], k: usize) -> (f64, f64) {
        let lags = k.min(self.max_lag);
        if lags == 0 {
            return (0.0, 0.0);
        }
        let num = dot(&z[k - lags..k], &self.rev[self.max_lag - lags..self.max_lag]);
        (num, self.cum[lags])
    }

    /// Same as [`past_sums`](Self::past_sums) but including lag 0.
    #[inline]
    pub(crate) fn inclusive_sums(&self, z: &[f64], k: usize) -> (f64, f64) {
        let (num, den) = self.past_sums(z, k);
        let w0 = self.weight(0);
        (num + w0 * z[k], den + w0)
    }
}

/// Four-lane dot product; fixed summation order so results do not depend
/// on anything but the inputs.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `m̃_{i,h} = h⁻¹ Σ_{j=1}^{i} K((i-j)/h) Y_j`, including the kernel scale.
pub fn smoother_raw(series: &Series, kernel: &Kernel, h: f64, i: usize) -> Result<f64, SmoothError> {
    check_bandwidth(h)?;
    series.check_index(i)?;
    let scale = kernel.scale();
    let mut acc = 0.0;
    for (j, y) in series.values[..i].iter().enumerate() {
        let lag = (i - 1 - j) as f64;
        acc += scale * kernel.shape_at(lag / h) * y;
    }
    Ok(acc / h)
}

/// `m̂_{i,h}`: the raw smoother divided by `h⁻¹ Σ_{j=1}^{i} K((i-j)/h)`.
pub fn smoother_normed(series: &Series, kernel: &Kernel, h: f64, i: usize) -> Result<f64, SmoothError> {
    check_bandwidth(h)?;
    series.check_index(i)?;
    let weights = LagWeights::new(kernel, h, i - 1);
    let z = series.centered();
    let (num, den) = weights.inclusive_sums(&z, i - 1);
    if !(den > 0.0) {
        return Err(SmoothError::DegenerateWindow { index: i });
    }
    Ok(series.anchor() + num / den)
}

/// Sequential leave-one-out prediction `m̂_{h,-i}` of `Y_i` from `Y_1..Y_{i-1}`.
pub fn loo_predict(series: &Series, kernel: &Kernel, h: f64, i: usize) -> Result<f64, SmoothError> {
    check_bandwidth(h)?;
    if i < 2 {
        return Err(SmoothError::NoPast(i));
    }
    series.check_index(i)?;
    let weights = LagWeights::new(kernel, h, i - 1);
    let z = series.centered();
    let (num, den) = weights.past_sums(&z, i - 1);
    if !(den > 0.0) {
        return Err(SmoothError::DegenerateWindow { index: i });
    }
    Ok(series.anchor() + num / den)
}

/// All leave-one-out predictions for `i = 2..=upto`; element `k` is `m̂_{h,-(k+2)}`.
pub fn loo_predictions(series: &Series, kernel: &Kernel, h: f64, upto: usize) -> Result<Vec<f64>, SmoothError> {
    check_bandwidth(h)?;
    if upto < 2 {
        return Ok(Vec::new());
    }
    series.check_index(upto)?;
    let weights = LagWeights::new(kernel, h, upto - 1);
    let z = series.centered();
    loo_with_weights(&z, series.anchor(), &weights, upto)
}

pub(crate) fn loo_with_weights(
    z: &[f64],
    anchor: f64,
    weights: &LagWeights,
    upto: usize,
) -> Result<Vec<f64>, SmoothError> {
    (1..upto)
        .map(|k| {
            let (num, den) = weights.past_sums(z, k);
            if den > 0.0 {
                Ok(anchor + num / den)
            } else {
                Err(SmoothError::DegenerateWindow { index: k + 1 })
            }
        })
        .collect()
}

/// Normalized smoother `m̂_{i,h}` for every `i = 1..=upto`.
pub fn normed_path(series: &Series, kernel: &Kernel, h: f64, upto: usize) -> Result<Vec<f64>, SmoothError> {
    check_bandwidth(h)?;
    if upto == 0 {
        return Ok(Vec::new());
    }
    series.check_index(upto)?;
    let weights = LagWeights::new(kernel, h, upto - 1);
    let z = series.centered();
    let a = series.anchor();
    (0..upto)
        .map(|k| {
            let (num, den) = weights.inclusive_sums(&z, k);
            if den > 0.0 {
                Ok(a + num / den)
            } else {
                Err(SmoothError::DegenerateWindow { index: k + 1 })
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
enum Strategy {
    /// Compactly supported kernel: only the last `max_lag` observations matter.
    Window { weights: LagWeights, buf: VecDeque<f64> },
    /// Unbounded support: full history, weights grown on demand.
    History { history: Vec<f64>, weights: LagWeights },
    /// `K(z) = e^{-z}`: `num ← ρ (num + z_i)`, `den ← ρ (den + 1)`, `ρ = e^{-1/h}`.
    Exponential { decay: f64, num: f64, den: f64 },
}

/// Streaming form of the leave-one-out predictor.
///
/// Each call to [`loo_predict_stream`](Self::loo_predict_stream) emits the
/// prediction for the incoming index before the observation is folded in.
#[derive(Debug, Clone)]
pub struct SmootherState {
    kernel: Kernel,
    h: f64,
    index: usize,
    anchor: Option<f64>,
    strategy: Strategy,
}

impl SmootherState {
    pub fn new(kernel: &Kernel, h: f64) -> Result<Self, SmoothError> {
        check_bandwidth(h)?;
        let strategy = if kernel.is_exponential() {
            Strategy::Exponential {
                decay: (-1.0 / h).exp(),
                num: 0.0,
                den: 0.0,
            }
        } else {
            match kernel.support() {
                Support::Compact(_) => {
                    let weights = LagWeights::new(kernel, h, usize::MAX);
                    Strategy::Window {
                        buf: VecDeque::with_capacity(weights.max_lag()),
                        weights,
                    }
                }
                Support::Unbounded => Strategy::History {
                    history: Vec::new(),
                    weights: LagWeights::new(kernel, h, 64),
                },
            }
        };
        Ok(Self {
            kernel: kernel.clone(),
            h,
            index: 0,
            anchor: None,
            strategy,
        })
    }

    /// Number of observations folded in so far.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    /// Prediction for index `self.index() + 1`, `None` before any data.
    pub fn predict_next(&mut self) -> Result<Option<f64>, SmoothError> {
        let Some(a) = self.anchor else {
            return Ok(None);
        };
        let next = self.index + 1;
        let (num, den) = match &mut self.strategy {
            Strategy::Exponential { num, den, .. } => (*num, *den),
            Strategy::Window { weights, buf } => {
                let k = buf.len();
                weights.past_sums(buf.make_contiguous(), k)
            }
            Strategy::History { history, weights } => {
                let k = history.len();
                if weights.max_lag() < k {
                    *weights = LagWeights::new(&self.kernel, self.h, (2 * k).max(64));
                }
                weights.past_sums(history, k)
            }
        };
        if den > 0.0 {
            Ok(Some(a + num / den))
        } else {
            Err(SmoothError::DegenerateWindow { index: next })
        }
    }

    /// Emits `m̂_{h,-i}` for the incoming `Y_i`, then folds `Y_i` into the state.
    /// Returns `None` for `i = 1`.
    pub fn loo_predict_stream(&mut self, next: f64) -> Result<Option<f64>, SmoothError> {
        if !next.is_finite() {
            return Err(SmoothError::NonFinite(self.index + 1));
        }
        let prediction = self.predict_next()?;
        self.fold(next);
        Ok(prediction)
    }

    fn fold(&mut self, y: f64) {
        let a = *self.anchor.get_or_insert(y);
        let z = y - a;
        match &mut self.strategy {
            Strategy::Exponential { decay, num, den } => {
                *num = *decay * (*num + z);
                *den = *decay * (*den + 1.0);
            }
            Strategy::Window { weights, buf } => {
                if weights.max_lag() > 0 {
                    if buf.len() == weights.max_lag() {
                        buf.pop_front();
                    }
                    buf.push_back(z);
                }
            }
            Strategy::History { history, .. } => history.push(z),
        }
        self.index += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: &[f64]) -> Series {
        Series::complete(v.to_vec()).unwrap()
    }

    #[test]
    fn raw_uniform_all_weights_one() {
        let s = series(&[1.0, 2.0, 3.0]);
        let h = 5.0;
        assert_eq!(smoother_raw(&s, &Kernel::uniform(), h, 3).unwrap(), 6.0 / h);
    }

    #[test]
    fn raw_flat_is_cusum_over_h() {
        let x = [203.0, 199.5, 201.25, 196.0, 205.5];
        let (mu0, l) = (200.0, 0.5);
        let y: Vec<f64> = x.iter().map(|v| v - (mu0 + l)).collect();
        let s = series(&y);
        let mut cusum = 0.0;
        for i in 1..=y.len() {
            cusum += y[i - 1];
            assert_eq!(smoother_raw(&s, &Kernel::flat(), 1.0, i).unwrap(), cusum);
            assert_eq!(smoother_raw(&s, &Kernel::flat(), 3.0, i).unwrap(), cusum / 3.0);
        }
    }

    #[test]
    fn index_errors() {
        let s = series(&[1.0, 2.0]);
        let k = Kernel::gaussian();
        assert!(matches!(
            smoother_raw(&s, &k, 1.0, 0),
            Err(SmoothError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            smoother_raw(&s, &k, 1.0, 3),
            Err(SmoothError::IndexOutOfRange { .. })
        ));
        assert_eq!(loo_predict(&s, &k, 1.0, 1), Err(SmoothError::NoPast(1)));
        assert_eq!(smoother_raw(&s, &k, 0.0, 1), Err(SmoothError::InvalidBandwidth(0.0)));
        assert_eq!(smoother_raw(&s, &k, -2.0, 1), Err(SmoothError::InvalidBandwidth(-2.0)));
    }

    #[test]
    fn constant_series_is_returned_exactly() {
        let s = series(&[7.25; 40]);
        for k in [
            Kernel::uniform(),
            Kernel::epanechnikov(),
            Kernel::gaussian(),
            Kernel::exponential(),
        ] {
            for h in [2.0, 13.0, 400.0] {
                for i in 2..=40 {
                    assert_eq!(loo_predict(&s, &k, h, i).unwrap(), 7.25);
                    assert_eq!(smoother_normed(&s, &k, h, i).unwrap(), 7.25);
                }
            }
        }
    }

    #[test]
    fn uniform_loo_is_past_mean() {
        let s = series(&[1.0, 2.0, 3.0, 100.0]);
        assert_eq!(loo_predict(&s, &Kernel::uniform(), 10.0, 4).unwrap(), 2.0);
    }

    #[test]
    fn degenerate_window() {
        // Epanechnikov with h = 1 gives K(1) = 0 at the only past lag in reach.
        let s = series(&[1.0, 2.0, 3.0]);
        assert_eq!(
            loo_predict(&s, &Kernel::epanechnikov(), 1.0, 3),
            Err(SmoothError::DegenerateWindow { index: 3 })
        );
        assert_eq!(
            loo_predict(&s, &Kernel::uniform(), 0.5, 2),
            Err(SmoothError::DegenerateWindow { index: 2 })
        );
        // Including the current point the window is never empty.
        assert_eq!(smoother_normed(&s, &Kernel::uniform(), 0.5, 3).unwrap(), 3.0);
    }

    #[test]
    fn stream_constant_and_single_point() {
        let mut st = SmootherState::new(&Kernel::gaussian(), 3.0).unwrap();
        assert_eq!(st.loo_predict_stream(5.0).unwrap(), None);
        assert_eq!(st.loo_predict_stream(5.0).unwrap(), Some(5.0));
        assert_eq!(st.loo_predict_stream(5.0).unwrap(), Some(5.0));
        assert_eq!(st.index(), 3);

        for k in [
            Kernel::uniform(),
            Kernel::epanechnikov(),
            Kernel::gaussian(),
            Kernel::exponential(),
        ] {
            let mut st = SmootherState::new(&k, 4.0).unwrap();
            st.loo_predict_stream(-3.5).unwrap();
            assert_eq!(st.loo_predict_stream(99.0).unwrap(), Some(-3.5), "{}", k.name());
        }
    }

    #[test]
    fn stream_degenerate_window_surfaces() {
        let mut st = SmootherState::new(&Kernel::uniform(), 0.5).unwrap();
        st.loo_predict_stream(1.0).unwrap();
        assert_eq!(
            st.loo_predict_stream(2.0),
            Err(SmoothError::DegenerateWindow { index: 2 })
        );
    }

    #[test]
    fn series_validation() {
        assert!(matches!(Series::new(vec![1.0; 3], 2), Err(SmoothError::TooLong { .. })));
        assert_eq!(Series::new(vec![1.0, f64::NAN], 5), Err(SmoothError::NonFinite(2)));
        let s = Series::new(vec![1.0, 2.0, 3.0], 10).unwrap();
        assert_eq!(s.prefix(2).values(), &[1.0, 2.0]);
        assert_eq!(s.prefix(2).horizon(), 10);
        assert_eq!(s.y(3).unwrap(), 3.0);
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..23).map(|k| k as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..23).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
