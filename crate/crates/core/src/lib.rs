//! Sequential bandwidth selection by cross-validation for kernel-weighted
//! smoothers, one-sided change-point detectors built on them, Monte Carlo
//! control-limit calibration, a quadrature evaluator for the asymptotic
//! cross-validation objective, and scenario simulation with independent or
//! weakly dependent errors.
//!
//! Time indices in the public API are 1-based (`Y_1..Y_T`) and the design
//! point of `Y_i` is `i/T`.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crossval;
pub mod detection;
pub mod kernels;
pub mod limit_oracle;
pub mod quadrature;
pub mod rng;
pub mod simulation;
pub mod smoothing;

pub use crossval::{
    cv_criterion, cv_objective, run_schedule, select_xi, BandwidthPath, CvError, CvPlan, CvResult, Schedule,
};
pub use detection::{
    calibrate_control_limit, mean_delay, run_detector, BandwidthSource, Calibration, DetectError, DetectorSpec,
    Direction, RunResult, StartRule,
};
pub use kernels::{AssumptionReport, Kernel, KernelError, Support};
pub use limit_oracle::{LimitError, LimitMode, LimitSpec};
pub use simulation::{ErrorModel, Scenario, ScenarioParams, SimError};
pub use smoothing::{loo_predict, smoother_normed, smoother_raw, Series, SmoothError, SmootherState};
