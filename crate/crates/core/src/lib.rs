//! Goodness-of-fit test for the drift of an ergodic scalar diffusion
//! `dX = S(X) dt + σ(X) dW`, based on the score-marked empirical process
//! `V_T(x) = T^{-1/2} Σ 1{X_i ≤ x} (X_{i+1} - X_i - S0(X_i) dt)`.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for typical use.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0)` deliberately rejects NaN.

pub mod exprlang;
pub mod gof;
pub mod harness;
pub mod model;
pub mod nulldist;
pub mod quadrature;
pub mod scalar;
pub mod simulate;
pub mod stationary;
pub mod statistic;

pub use exprlang::{FunctionExpr, ParseError, ParseErrorKind};
pub use gof::{run_test, GofError, GofTest, TestResult};
pub use harness::{
    consistency_trend, load_config, parse_config, run_study, screen, StudyConfig, StudyError,
    StudyOutcome, StudyResult,
};
pub use model::{DiffusionModel, EsReport, ModelError, RpReport};
pub use nulldist::{cdf_sup_abs_bm, critical_value, mc_oracle, NullLaw};
pub use scalar::{KahanSum, Scalar};
pub use simulate::{
    derive_seed, sample_stationary_start, simulate_path, simulate_stationary_path, EulerMaruyama,
    Path, SimulationError,
};
pub use stationary::{EngineOptions, StationaryEngine, StationaryError};
pub use statistic::{drift_gap_process, score_process, sup_statistic, ConditionC, StepProcess};

pub type Model64 = DiffusionModel<f64>;
pub type Model32 = DiffusionModel<f32>;
pub type Engine64 = StationaryEngine<f64>;
pub type Engine32 = StationaryEngine<f32>;
pub type Path64 = Path<f64>;
pub type Path32 = Path<f32>;
pub type StepProcess64 = StepProcess<f64>;
pub type StepProcess32 = StepProcess<f32>;
pub type GofTest64 = GofTest<f64>;
pub type GofTest32 = GofTest<f32>;
pub type TestResult64 = TestResult<f64>;
pub type TestResult32 = TestResult<f32>;
