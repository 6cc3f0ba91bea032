//! Smoothing kernels on the half line `[0, ∞)`.
//!
//! A [`Kernel`] is a shape (the function itself) times a positive scale.
//! Normalized smoothers never look at the scale since it cancels in the
//! ratio, so `K` and `cK` give bit-identical normalized output.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel argument must be a finite nonnegative number, got {0}")]
    NegativeArgument(f64),
    #[error("unknown kernel name `{0}` (expected uniform, epanechnikov, gaussian, exponential or flat)")]
    UnknownName(String),
    #[error("kernel scale must be finite and positive, got {0}")]
    InvalidScale(f64),
}

/// Where the kernel is allowed to be nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    /// `K(z) = 0` for every `z > bound`.
    Compact(f64),
    Unbounded,
}

impl Support {
    pub fn bound(&self) -> Option<f64> {
        match self {
            Support::Compact(b) => Some(*b),
            Support::Unbounded => None,
        }
    }
}

type CustomFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Uniform,
    Epanechnikov,
    Gaussian,
    Exponential,
    Flat,
    Custom(CustomFn),
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Uniform => write!(f, "Uniform"),
            Shape::Epanechnikov => write!(f, "Epanechnikov"),
            Shape::Gaussian => write!(f, "Gaussian"),
            Shape::Exponential => write!(f, "Exponential"),
            Shape::Flat => write!(f, "Flat"),
            Shape::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A nonnegative weight function with declared support and regularity.
#[derive(Clone, Debug)]
pub struct Kernel {
    name: String,
    shape: Shape,
    scale: f64,
    support: Support,
    lipschitz: bool,
    sup_norm: f64,
}

impl Kernel {
    /// Indicator of `[0, 1]`.
    pub fn uniform() -> Self {
        Self::builtin("uniform", Shape::Uniform, Support::Compact(1.0), false, 1.0)
    }

    /// `(3/4)(1 - z²)` on `[0, 1]`.
    pub fn epanechnikov() -> Self {
        Self::builtin("epanechnikov", Shape::Epanechnikov, Support::Compact(1.0), true, 0.75)
    }

    /// Standard normal density restricted to the half line.
    pub fn gaussian() -> Self {
        Self::builtin("gaussian", Shape::Gaussian, Support::Unbounded, true, INV_SQRT_2PI)
    }

    /// `e^{-z}`; with `h = -1/ln(1-λ)` the normalized smoother is an EWMA.
    pub fn exponential() -> Self {
        Self::builtin("exponential", Shape::Exponential, Support::Unbounded, true, 1.0)
    }

    /// `K ≡ 1`; the raw smoother is a CUSUM partial sum divided by `h`.
    pub fn flat() -> Self {
        Self::builtin("flat", Shape::Flat, Support::Unbounded, true, 1.0)
    }

    fn builtin(name: &str, shape: Shape, support: Support, lipschitz: bool, sup_norm: f64) -> Self {
        Self {
            name: name.to_string(),
            shape,
            scale: 1.0,
            support,
            lipschitz,
            sup_norm,
        }
    }

    /// A user-supplied kernel. `eval` is only ever called with `z >= 0`.
    pub fn custom<F>(name: impl Into<String>, eval: F, support: Support, lipschitz: bool, sup_norm: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            shape: Shape::Custom(Arc::new(eval)),
            scale: 1.0,
            support,
            lipschitz,
            sup_norm,
        }
    }

    /// Looks up a built-in kernel by its configuration name.
    pub fn by_name(name: &str) -> Result<Self, KernelError> {
        match name {
            "uniform" => Ok(Self::uniform()),
            "epanechnikov" => Ok(Self::epanechnikov()),
            "gaussian" => Ok(Self::gaussian()),
            "exponential" => Ok(Self::exponential()),
            "flat" => Ok(Self::flat()),
            other => Err(KernelError::UnknownName(other.to_string())),
        }
    }

    /// Returns `c·K`.
    pub fn scaled(&self, c: f64) -> Result<Self, KernelError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(KernelError::InvalidScale(c));
        }
        let mut k = self.clone();
        k.scale *= c;
        k.sup_norm *= c;
        Ok(k)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn is_lipschitz(&self) -> bool {
        self.lipschitz
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self.shape, Shape::Exponential)
    }

    /// `K(z)` for `z >= 0`.
    pub fn eval(&self, z: f64) -> Result<f64, KernelError> {
        if !(z >= 0.0) || z.is_infinite() {
            return Err(KernelError::NegativeArgument(z));
        }
        Ok(self.scale * self.shape_at(z))
    }

    /// The unscaled shape at `z >= 0`. Callers guarantee the domain.
    #[inline]
    pub(crate) fn shape_at(&self, z: f64) -> f64 {
        debug_assert!(z >= 0.0);
        if let Support::Compact(b) = self.support {
            if z > b {
                return 0.0;
            }
        }
        match &self.shape {
            Shape::Uniform => 1.0,
            Shape::Epanechnikov => 0.75 * (1.0 - z * z),
            Shape::Gaussian => INV_SQRT_2PI * (-0.5 * z * z).exp(),
            Shape::Exponential => (-z).exp(),
            Shape::Flat => 1.0,
            Shape::Custom(f) => f(z),
        }
    }

    /// Largest integer lag `d` with possibly nonzero weight `K(d/h)`.
    pub(crate) fn max_lag(&self, h: f64, horizon: usize) -> usize {
        match self.support {
            Support::Compact(b) => {
                let reach = (b * h).floor();
                if reach >= horizon as f64 {
                    horizon
                } else {
                    reach as usize
                }
            }
            Support::Unbounded => horizon,
        }
    }

    /// Checks the compact-support, positivity, boundedness and Lipschitz
    /// conditions on a sampling grid.
    pub fn validate_assumptions(&self) -> AssumptionReport {
        let grid_step = LIPSCHITZ_GRID_STEP;
        let upper = match self.support {
            Support::Compact(b) => (b + 1.0).max(2.0),
            Support::Unbounded => 10.0,
        };
        let n = (upper / grid_step).round() as usize;

        let mut bounded = true;
        let mut max_slope: f64 = 0.0;
        let mut prev = self.scale * self.shape_at(0.0);
        if !(prev.is_finite() && prev >= 0.0 && prev <= self.sup_norm) {
            bounded = false;
        }
        for k in 1..=n {
            let z = k as f64 * grid_step;
            let v = self.scale * self.shape_at(z);
            if !(v.is_finite() && v >= 0.0 && v <= self.sup_norm) {
                bounded = false;
            }
            max_slope = max_slope.max((v - prev).abs() / grid_step);
            prev = v;
        }
        let lipschitz_audit = max_slope <= LIPSCHITZ_SLOPE_FACTOR * self.sup_norm;

        let compact_support = match self.support {
            Support::Compact(b) if b <= 1.0 => (1..=2000)
                .map(|k| 1.0 + k as f64 * 1e-3)
                .chain([1.0 + 1e-9, 10.0, 1e6])
                .all(|z| self.shape_at(z) == 0.0),
            _ => false,
        };
        let positive_on_unit_interval = (1..1000)
            .map(|k| k as f64 / 1000.0)
            .chain([1e-9, 1.0 - 1e-9])
            .all(|z| self.shape_at(z) > 0.0);

        AssumptionReport {
            compact_support,
            positive_on_unit_interval,
            bounded,
            lipschitz_declared: self.lipschitz,
            lipschitz_audit,
            max_sampled_slope: max_slope,
        }
    }
}

const LIPSCHITZ_GRID_STEP: f64 = 1e-4;
const LIPSCHITZ_SLOPE_FACTOR: f64 = 10.0;

/// Which clauses of the standard kernel assumption hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport {
    /// `supp(K) ⊂ [0, 1]`, checked on samples beyond 1.
    pub compact_support: bool,
    /// `K > 0` on `(0, 1)`.
    pub positive_on_unit_interval: bool,
    /// Every sample lies in `[0, sup_norm]`.
    pub bounded: bool,
    pub lipschitz_declared: bool,
    /// Sampled finite differences stay below `10 · sup_norm`.
    pub lipschitz_audit: bool,
    pub max_sampled_slope: f64,
}

impl AssumptionReport {
    pub fn lipschitz(&self) -> bool {
        self.lipschitz_declared && self.lipschitz_audit
    }

    /// All clauses: Lipschitz, bounded, compact support in `[0,1]`, positive inside.
    pub fn all_hold(&self) -> bool {
        self.compact_support && self.positive_on_unit_interval && self.bounded && self.lipschitz()
    }

    /// The weaker bounded-kernel condition used for dependent errors.
    pub fn admissible_bounded(&self) -> bool {
        self.bounded
    }
}

/// Bandwidth giving the EWMA with smoothing parameter `lambda` for the
/// exponential kernel: `(1-λ)^d = exp(-d/h)`.
pub fn ewma_bandwidth(lambda: f64) -> f64 {
    -1.0 / (1.0 - lambda).ln()
}
