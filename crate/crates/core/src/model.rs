//! Drift/diffusion pair and numerical screens for the regularity conditions
//! the test relies on: linear growth (existence of a weak solution) and
//! positive recurrence (scale function onto the line, finite speed measure).
//!
//! Both screens run on finite grids and cannot prove the analytic conditions;
//! they flag clear violations and make the assumption auditable.

use thiserror::Error;

use crate::exprlang::{FunctionExpr, ParseError};
use crate::scalar::Scalar;
use crate::stationary::{EngineOptions, StationaryEngine};

pub const DEFAULT_SCREEN_HALF_WIDTH: f64 = 20.0;
pub const DEFAULT_SCREEN_POINTS: usize = 4001;
/// `|p(±L)|` must exceed this for the scale function to count as divergent.
pub const SCALE_DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid expression: {0}")]
    Parse(#[from] ParseError),
    #[error("diffusion coefficient is not strictly positive at x = {x}")]
    NonPositiveDiffusion { x: f64 },
    #[error("diffusion coefficient is not finite at x = {x}")]
    NonFiniteDiffusion { x: f64 },
    #[error(
        "screening grid needs half width > 0 and at least 3 points (got {half_width}, {points})"
    )]
    InvalidGrid { half_width: f64, points: usize },
}

/// `dX = S(X) dt + σ(X) dW` with `S` = drift and `σ` = diffusion.
#[derive(Debug, Clone)]
pub struct DiffusionModel<T = f64> {
    drift: FunctionExpr,
    diffusion: FunctionExpr,
    sigma_sq_bound: T,
    growth_constant: Option<T>,
}

impl<T: Scalar> DiffusionModel<T> {
    /// Builds the model and runs the linear-growth screen on the default grid.
    /// Fails if `σ` is not finite and strictly positive on that grid.
    pub fn new(drift: FunctionExpr, diffusion: FunctionExpr) -> Result<Self, ModelError> {
        let grid = screening_grid(T::lit(DEFAULT_SCREEN_HALF_WIDTH), DEFAULT_SCREEN_POINTS);
        let mut bound = T::zero();
        for &x in &grid {
            let s: T = diffusion.eval(x);
            if !s.is_finite() {
                return Err(ModelError::NonFiniteDiffusion {
                    x: x.to_f64_lossy(),
                });
            }
            if s <= T::zero() {
                return Err(ModelError::NonPositiveDiffusion {
                    x: x.to_f64_lossy(),
                });
            }
            bound = bound.max(s * s);
        }
        let mut model = Self {
            drift,
            diffusion,
            sigma_sq_bound: bound,
            growth_constant: None,
        };
        let es = scan_es(&model, &grid);
        if es.ok {
            model.growth_constant = Some(es.witness_a);
        }
        Ok(model)
    }

    pub fn from_sources(drift: &str, diffusion: &str) -> Result<Self, ModelError> {
        Self::new(FunctionExpr::parse(drift)?, FunctionExpr::parse(diffusion)?)
    }

    pub fn drift(&self) -> &FunctionExpr {
        &self.drift
    }

    pub fn diffusion(&self) -> &FunctionExpr {
        &self.diffusion
    }

    /// Supremum of `σ²` over the default screening grid.
    pub fn sigma_sq_bound(&self) -> T {
        self.sigma_sq_bound
    }

    /// Growth constant `A` found by the default-grid screen, if it passed.
    pub fn growth_constant(&self) -> Option<T> {
        self.growth_constant
    }

    #[inline]
    pub fn drift_at(&self, x: T) -> T {
        self.drift.eval(x)
    }

    #[inline]
    pub fn sigma_at(&self, x: T) -> T {
        self.diffusion.eval(x)
    }

    #[inline]
    pub fn sigma_sq_at(&self, x: T) -> T {
        let s = self.diffusion.eval(x);
        s * s
    }

    /// Same diffusion, different drift.
    pub fn with_drift(&self, drift: FunctionExpr) -> Result<Self, ModelError> {
        Self::new(drift, self.diffusion.clone())
    }

    /// Linear-growth screen on a symmetric grid `[-L, L]`.
    pub fn check_condition_es(
        &self,
        grid_half_width: T,
        grid_points: usize,
    ) -> Result<EsReport<T>, ModelError> {
        if !(grid_half_width > T::zero()) || grid_points < 3 {
            return Err(ModelError::InvalidGrid {
                half_width: grid_half_width.to_f64_lossy(),
                points: grid_points,
            });
        }
        Ok(scan_es(self, &screening_grid(grid_half_width, grid_points)))
    }

    /// Recurrence screen; builds a stationary engine with `opts`.
    pub fn check_condition_rp(&self, opts: &EngineOptions<T>) -> RpReport<T> {
        match StationaryEngine::new(self.clone(), opts.clone()) {
            Ok(engine) => engine.check_condition_rp(),
            Err(e) => RpReport {
                ok: false,
                p_left: T::nan(),
                p_right: T::nan(),
                m_total: T::infinity(),
                diagnostic: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsReport<T> {
    pub ok: bool,
    /// Smallest `A ≥ 0` with `x S(x) + σ(x)² ≤ A (1 + x²)` at every node.
    pub witness_a: T,
    /// First node where `S` or `σ` failed to evaluate to a usable value.
    pub violation_x: Option<T>,
    /// The growth ratio increases toward the grid edge, so a larger grid
    /// would report a larger `A`.
    pub growth_warning: bool,
    pub sigma_sq_max: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpReport<T> {
    pub ok: bool,
    pub p_left: T,
    pub p_right: T,
    pub m_total: T,
    pub diagnostic: Option<String>,
}

pub(crate) fn screening_grid<T: Scalar>(half_width: T, points: usize) -> Vec<T> {
    let step = T::lit(2.0) * half_width / T::from_usize_lossy(points - 1);
    (0..points)
        .map(|i| {
            if 2 * i + 1 == points {
                T::zero()
            } else {
                -half_width + step * T::from_usize_lossy(i)
            }
        })
        .collect()
}

fn scan_es<T: Scalar>(model: &DiffusionModel<T>, grid: &[T]) -> EsReport<T> {
    let mut witness = T::zero();
    let mut sigma_sq_max = T::zero();
    let mut ratios = Vec::with_capacity(grid.len());
    for &x in grid {
        let s = model.drift_at(x);
        let sig = model.sigma_at(x);
        let sig_sq = sig * sig;
        if !s.is_finite() || !sig.is_finite() || !(sig_sq > T::zero()) {
            return EsReport {
                ok: false,
                witness_a: T::nan(),
                violation_x: Some(x),
                growth_warning: false,
                sigma_sq_max,
            };
        }
        sigma_sq_max = sigma_sq_max.max(sig_sq);
        let ratio = (x * s + sig_sq) / (T::one() + x * x);
        witness = witness.max(ratio);
        ratios.push(ratio);
    }
    let n = ratios.len();
    let growth_warning = ratios[n - 1] > ratios[n - 2] || ratios[0] > ratios[1];
    EsReport {
        ok: witness.is_finite() && sigma_sq_max.is_finite(),
        witness_a: witness,
        violation_x: None,
        growth_warning,
        sigma_sq_max,
    }
}
