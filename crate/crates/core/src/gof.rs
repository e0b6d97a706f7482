//! The decision rule: reject the null drift `S0` when
//! `sup_x |V_T(x)| / g_{S0}(∞) > c_ε`.

use thiserror::Error;

use crate::exprlang::FunctionExpr;
use crate::model::{DiffusionModel, ModelError};
use crate::nulldist::{NullDistError, NullLaw};
use crate::scalar::Scalar;
use crate::simulate::{format_g17, Path};
use crate::stationary::{EngineOptions, StationaryEngine};
use crate::statistic::{score_process, StatisticError, StepProcess};

/// Smallest admissible `g_{S0}(∞)`.
pub const MIN_NORMALIZATION: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GofError {
    #[error("null model not ergodic-screenable: {0}")]
    NotScreenable(String),
    #[error("degenerate normalization: g(∞) = {0:e}")]
    DegenerateNormalization(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Statistic(#[from] StatisticError),
    #[error(transparent)]
    NullDist(#[from] NullDistError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult<T = f64> {
    /// `sup_x |V_T(x)|`.
    pub statistic: T,
    /// `g_{S0}(∞)`.
    pub g_inf: T,
    pub normalized: T,
    pub eps: T,
    pub critical: T,
    pub reject: bool,
    /// Observed state where the supremum is attained.
    pub arg_sup: T,
    pub n_steps: usize,
    pub horizon: T,
}

impl<T: Scalar> TestResult<T> {
    pub const CSV_HEADER: &'static str =
        "statistic,g_inf,normalized,eps,critical,reject,arg_sup,n_steps,T";

    pub fn csv_row(&self) -> String {
        let g = |v: T| format_g17(v.to_f64_lossy());
        format!(
            "{},{},{},{},{},{},{},{},{}",
            g(self.statistic),
            g(self.g_inf),
            g(self.normalized),
            g(self.eps),
            g(self.critical),
            u8::from(self.reject),
            g(self.arg_sup),
            self.n_steps,
            g(self.horizon)
        )
    }
}

/// A screened null hypothesis `(S0, σ)` with its normalization cached, ready
/// to test any number of paths.
#[derive(Debug, Clone)]
pub struct GofTest<T: Scalar = f64> {
    engine: StationaryEngine<T>,
    law: NullLaw<T>,
    g_inf: T,
}

impl<T: Scalar> GofTest<T> {
    /// Screens the null model (linear growth on the default grid, recurrence)
    /// and computes `g_{S0}(∞)` from the hypothesized drift.
    pub fn new(
        s0: FunctionExpr,
        sigma: FunctionExpr,
        opts: EngineOptions<T>,
    ) -> Result<Self, GofError> {
        let model =
            DiffusionModel::new(s0, sigma).map_err(|e| GofError::NotScreenable(e.to_string()))?;
        Self::from_model(model, opts)
    }

    pub fn from_model(model: DiffusionModel<T>, opts: EngineOptions<T>) -> Result<Self, GofError> {
        let es = model
            .check_condition_es(
                T::lit(crate::model::DEFAULT_SCREEN_HALF_WIDTH),
                crate::model::DEFAULT_SCREEN_POINTS,
            )
            .expect("default grid is valid");
        if !es.ok {
            return Err(GofError::NotScreenable(format!(
                "growth condition fails at x = {}",
                es.violation_x.map_or(f64::NAN, |x| x.to_f64_lossy())
            )));
        }
        let engine = StationaryEngine::new(model, opts)
            .map_err(|e| GofError::NotScreenable(e.to_string()))?;
        let rp = engine.check_condition_rp();
        if !rp.ok {
            return Err(GofError::NotScreenable(
                rp.diagnostic
                    .unwrap_or_else(|| "recurrence screen failed".into()),
            ));
        }
        let g_inf = engine.g_inf_sq().sqrt();
        if !(g_inf >= T::lit(MIN_NORMALIZATION)) {
            return Err(GofError::DegenerateNormalization(g_inf.to_f64_lossy()));
        }
        Ok(Self {
            engine,
            law: NullLaw::default(),
            g_inf,
        })
    }

    pub fn engine(&self) -> &StationaryEngine<T> {
        &self.engine
    }

    pub fn null_drift(&self) -> &FunctionExpr {
        self.engine.model().drift()
    }

    pub fn g_inf(&self) -> T {
        self.g_inf
    }

    pub fn critical_value(&self, eps: T) -> Result<T, GofError> {
        Ok(self.law.critical_value(eps)?)
    }

    /// Score-marked process of `path` under the null drift.
    pub fn score_process(&self, path: &Path<T>) -> Result<StepProcess<T>, GofError> {
        Ok(score_process(path, self.null_drift())?)
    }

    pub fn run(&self, path: &Path<T>, eps: T) -> Result<TestResult<T>, GofError> {
        let critical = self.critical_value(eps)?;
        let v = self.score_process(path)?;
        Ok(self.decide(&v, path, eps, critical))
    }

    /// Decision for an already computed score process and critical value.
    pub fn decide(&self, v: &StepProcess<T>, path: &Path<T>, eps: T, critical: T) -> TestResult<T> {
        let (statistic, arg) = v.sup_abs_with_arg();
        let arg_sup = if arg.is_finite() {
            arg
        } else {
            v.jump_points.first().copied().unwrap_or(arg)
        };
        let normalized = statistic / self.g_inf;
        TestResult {
            statistic,
            g_inf: self.g_inf,
            normalized,
            eps,
            critical,
            reject: normalized > critical,
            arg_sup,
            n_steps: path.n_steps(),
            horizon: path.horizon(),
        }
    }
}

/// One-shot test of `path` against the null drift `s0` with diffusion `sigma`.
pub fn run_test<T: Scalar>(
    path: &Path<T>,
    s0: &FunctionExpr,
    sigma: &FunctionExpr,
    eps: T,
) -> Result<TestResult<T>, GofError> {
    GofTest::new(s0.clone(), sigma.clone(), EngineOptions::default())?.run(path, eps)
}
