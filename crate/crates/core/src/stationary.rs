//! Scale function, speed measure, invariant density and the variance
//! function `g²(z) = ∫_{y ≤ z} σ²(y) f(y) dy`, all by quadrature.
//!
//! The exponent `Φ(y) = 2 ∫₀ʸ S(v)/σ²(v) dv` is tabulated once on a uniform
//! grid over `[-L, L]` that contains 0 as a node. Between nodes it is
//! interpolated by cubic Hermite polynomials using the exact derivative
//! `Φ'(y) = 2 S(y)/σ²(y)`, so densities inside the outer integrals never
//! trigger nested quadrature. Every exponent is clamped at
//! [`Scalar::exp_clamp`] and clamping is reported.

use thiserror::Error;

use crate::model::{DiffusionModel, EsReport, RpReport, SCALE_DIVERGENCE_THRESHOLD};
use crate::quadrature::{adaptive_simpson, cumulative_cells, Tolerance};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationaryError {
    #[error("scale integrand diverges near x = {x}")]
    ScaleIntegrandDiverges { x: f64 },
    #[error(
        "speed measure does not converge: integrand at the truncation edge L = {trunc_l} is {boundary_integrand:e}"
    )]
    SpeedMeasureDiverges {
        trunc_l: f64,
        boundary_integrand: f64,
    },
    #[error("quadrature failed for {what}")]
    QuadratureFailed { what: &'static str },
    #[error("invalid engine options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions<T = f64> {
    /// Initial truncation half width.
    pub trunc_l: T,
    /// Absolute quadrature tolerance.
    pub tol: T,
    /// Grid nodes over the initial `[-L, L]`; forced odd.
    pub grid_nodes: usize,
    /// The speed-measure integrand at `±L` must fall below this.
    pub tail_threshold: T,
    /// Number of times `L` may be doubled while the tail is too heavy.
    pub max_doublings: u32,
}

impl<T: Scalar> Default for EngineOptions<T> {
    fn default() -> Self {
        Self {
            trunc_l: T::lit(20.0),
            tol: T::lit(1e-8),
            grid_nodes: 8001,
            tail_threshold: T::lit(1e-12),
            max_doublings: 4,
        }
    }
}

/// A value of `p` or `p'` together with whether an exponent hit the clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleValue<T> {
    pub value: T,
    pub clamped: bool,
}

/// Tabulated `Φ` on nodes `k·h`, `k = -left ..= right`.
#[derive(Debug, Clone)]
struct ExponentGrid<T> {
    h: T,
    left: usize,
    phi: Vec<T>,
    dphi: Vec<T>,
}

impl<T: Scalar> ExponentGrid<T> {
    fn build(
        model: &DiffusionModel<T>,
        left: usize,
        right: usize,
        h: T,
        tol: T,
    ) -> Result<Self, StationaryError> {
        let n = left + right + 1;
        let integrand = |v: T| T::lit(2.0) * model.drift_at(v) / model.sigma_sq_at(v);
        let span = h * T::from_usize_lossy(left.max(right).max(1));
        let cell_tol = Tolerance {
            min_depth: 1,
            ..Tolerance::absolute(tol * h / span)
        };
        let mut phi = vec![T::zero(); n];
        let mut dphi = vec![T::zero(); n];
        let node = |i: usize| h * (T::from_usize_lossy(i) - T::from_usize_lossy(left));
        for (i, d) in dphi.iter_mut().enumerate() {
            let x = node(i);
            *d = integrand(x);
            if !d.is_finite() {
                return Err(StationaryError::ScaleIntegrandDiverges {
                    x: x.to_f64_lossy(),
                });
            }
        }
        let step = |a: T, b: T| -> Result<T, StationaryError> {
            let q = adaptive_simpson(&integrand, a, b, cell_tol);
            if q.converged {
                Ok(q.value)
            } else {
                Err(StationaryError::ScaleIntegrandDiverges {
                    x: b.to_f64_lossy(),
                })
            }
        };
        for i in left + 1..n {
            phi[i] = phi[i - 1] + step(node(i - 1), node(i))?;
        }
        for i in (0..left).rev() {
            phi[i] = phi[i + 1] - step(node(i), node(i + 1))?;
        }
        Ok(Self { h, left, phi, dphi })
    }

    fn node(&self, i: usize) -> T {
        self.h * (T::from_usize_lossy(i) - T::from_usize_lossy(self.left))
    }

    fn lo(&self) -> T {
        self.node(0)
    }

    fn hi(&self) -> T {
        self.node(self.phi.len() - 1)
    }

    fn nodes(&self) -> Vec<T> {
        (0..self.phi.len()).map(|i| self.node(i)).collect()
    }

    fn contains(&self, y: T) -> bool {
        y >= self.lo() && y <= self.hi()
    }

    /// Index of the cell `[node(j), node(j+1)]` holding `y`.
    fn cell(&self, y: T) -> usize {
        let last = self.phi.len() - 2;
        let j = ((y - self.lo()) / self.h).floor();
        if j <= T::zero() {
            0
        } else {
            j.to_usize().unwrap_or(last).min(last)
        }
    }

    fn eval(&self, y: T) -> T {
        let j = self.cell(y);
        let y0 = self.node(j);
        let t = (y - y0) / self.h;
        let t2 = t * t;
        let t3 = t2 * t;
        let (two, three) = (T::lit(2.0), T::lit(3.0));
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = three * t2 - two * t3;
        let h11 = t3 - t2;
        h00 * self.phi[j]
            + h10 * self.h * self.dphi[j]
            + h01 * self.phi[j + 1]
            + h11 * self.h * self.dphi[j + 1]
    }
}

fn direct_exponent<T: Scalar>(
    model: &DiffusionModel<T>,
    x: T,
    tol: T,
) -> Result<T, StationaryError> {
    let integrand = |v: T| T::lit(2.0) * model.drift_at(v) / model.sigma_sq_at(v);
    let tol = Tolerance {
        min_depth: 4,
        ..Tolerance::absolute(tol)
    };
    let q = adaptive_simpson(&integrand, T::zero(), x, tol);
    if q.converged {
        Ok(q.value)
    } else {
        Err(StationaryError::ScaleIntegrandDiverges {
            x: x.to_f64_lossy(),
        })
    }
}

/// Derivative of the scale function, `p'(x) = exp(-2 ∫₀ˣ S/σ²)`. Does not
/// need a finite speed measure.
pub fn scale_density<T: Scalar>(
    model: &DiffusionModel<T>,
    x: T,
    opts: &EngineOptions<T>,
) -> Result<ScaleValue<T>, StationaryError> {
    let e = -direct_exponent(model, x, opts.tol)?;
    let clamp = T::exp_clamp();
    Ok(ScaleValue {
        value: e.min(clamp).exp(),
        clamped: e > clamp,
    })
}

/// Scale function `p(x) = ∫₀ˣ p'(y) dy` on a grid with the spacing implied
/// by `opts`. Does not need a finite speed measure.
pub fn scale_function<T: Scalar>(
    model: &DiffusionModel<T>,
    x: T,
    opts: &EngineOptions<T>,
) -> Result<ScaleValue<T>, StationaryError> {
    if x == T::zero() {
        return Ok(ScaleValue {
            value: T::zero(),
            clamped: false,
        });
    }
    let h = opts.trunc_l / T::from_usize_lossy((opts.grid_nodes / 2).max(1));
    let cells = (x.abs() / h).ceil().to_usize().unwrap_or(usize::MAX).max(1);
    let (left, right) = if x > T::zero() {
        (0, cells)
    } else {
        (cells, 0)
    };
    let grid = ExponentGrid::build(model, left, right, h, opts.tol)?;
    integrate_scale(&grid, x, opts.tol)
}

fn integrate_scale<T: Scalar>(
    grid: &ExponentGrid<T>,
    x: T,
    tol: T,
) -> Result<ScaleValue<T>, StationaryError> {
    if x == T::zero() {
        return Ok(ScaleValue {
            value: T::zero(),
            clamped: false,
        });
    }
    let h = grid.h;
    let cells = (x.abs() / h).ceil().to_usize().unwrap_or(usize::MAX).max(1);
    let clamp = T::exp_clamp();
    let clamped_any = std::cell::Cell::new(false);
    let integrand = |y: T| {
        let e = -grid.eval(y);
        if e > clamp {
            clamped_any.set(true);
        }
        e.min(clamp).exp()
    };
    let mut nodes: Vec<T> = (0..cells)
        .map(|k| h * T::from_usize_lossy(k) * x.signum())
        .collect();
    nodes.push(x);
    if x < T::zero() {
        nodes.reverse();
    }
    let tol = Tolerance {
        rel: T::lit(1e-10),
        ..Tolerance::absolute(tol)
    };
    let (_, q) = cumulative_cells(&integrand, &nodes, tol);
    let value = if x < T::zero() { -q.value } else { q.value };
    let overflow = value.is_infinite() || value.is_nan();
    if !q.converged && !overflow {
        return Err(StationaryError::QuadratureFailed {
            what: "scale function",
        });
    }
    let value = if overflow {
        T::infinity() * x.signum()
    } else {
        value
    };
    Ok(ScaleValue {
        value,
        clamped: clamped_any.get() || overflow,
    })
}

/// Stationary quantities of one diffusion model. Immutable after construction.
#[derive(Debug, Clone)]
pub struct StationaryEngine<T = f64> {
    model: DiffusionModel<T>,
    opts: EngineOptions<T>,
    trunc_l: T,
    grid: ExponentGrid<T>,
    nodes: Vec<T>,
    m_total: T,
    /// `∫_{-L}^{node} f`, at each node.
    cum_density: Vec<T>,
    /// `∫_{-L}^{node} σ² f`, at each node.
    cum_g: Vec<T>,
    g_inf_sq: T,
    clamped: bool,
}

impl<T: Scalar> StationaryEngine<T> {
    pub fn new(model: DiffusionModel<T>, opts: EngineOptions<T>) -> Result<Self, StationaryError> {
        if !(opts.trunc_l > T::zero()) || !(opts.tol > T::zero()) || opts.grid_nodes < 3 {
            return Err(StationaryError::InvalidOptions(format!(
                "trunc_l = {}, tol = {}, grid_nodes = {}",
                opts.trunc_l, opts.tol, opts.grid_nodes
            )));
        }
        let half_cells = opts.grid_nodes / 2;
        let h = opts.trunc_l / T::from_usize_lossy(half_cells);
        let clamp = T::exp_clamp();
        let mut trunc_l = opts.trunc_l;
        let mut cells = half_cells;
        let mut doublings = 0;
        let grid = loop {
            let grid = ExponentGrid::build(&model, cells, cells, h, opts.tol)?;
            let edge = |y: T, phi: T| phi.min(clamp).exp() / model.sigma_sq_at(y);
            let tail = edge(grid.lo(), grid.phi[0]).max(edge(grid.hi(), grid.phi[2 * cells]));
            if tail < opts.tail_threshold {
                break grid;
            }
            if doublings >= opts.max_doublings {
                return Err(StationaryError::SpeedMeasureDiverges {
                    trunc_l: trunc_l.to_f64_lossy(),
                    boundary_integrand: tail.to_f64_lossy(),
                });
            }
            doublings += 1;
            trunc_l = trunc_l * T::lit(2.0);
            cells *= 2;
        };
        let clamped = grid.phi.iter().any(|&p| p > clamp || -p > clamp);
        let nodes = grid.nodes();
        let tol = Tolerance::absolute(opts.tol);

        let speed = |y: T| grid.eval(y).min(clamp).exp() / model.sigma_sq_at(y);
        let (_, q) = cumulative_cells(&speed, &nodes, tol);
        if !q.converged || !(q.value > T::zero()) {
            return Err(StationaryError::QuadratureFailed {
                what: "speed measure",
            });
        }
        let m_total = q.value;

        let density = |y: T| grid.eval(y).min(clamp).exp() / (m_total * model.sigma_sq_at(y));
        let (cum_density, qd) = cumulative_cells(&density, &nodes, tol);
        let var_density = |y: T| model.sigma_sq_at(y) * density(y);
        let (cum_g, qg) = cumulative_cells(&var_density, &nodes, tol);
        if !qd.converged || !qg.converged {
            return Err(StationaryError::QuadratureFailed {
                what: "invariant density",
            });
        }
        let g_inf_sq = qg.value;
        Ok(Self {
            model,
            opts,
            trunc_l,
            grid,
            nodes,
            m_total,
            cum_density,
            cum_g,
            g_inf_sq,
            clamped,
        })
    }

    pub fn with_defaults(model: DiffusionModel<T>) -> Result<Self, StationaryError> {
        Self::new(model, EngineOptions::default())
    }

    pub fn model(&self) -> &DiffusionModel<T> {
        &self.model
    }

    pub fn options(&self) -> &EngineOptions<T> {
        &self.opts
    }

    /// Truncation half width actually used (after any doubling).
    pub fn trunc_l(&self) -> T {
        self.trunc_l
    }

    pub fn tol(&self) -> T {
        self.opts.tol
    }

    /// Total mass of the speed measure, `m_S(ℝ)`.
    pub fn m_total(&self) -> T {
        self.m_total
    }

    /// `g²(+∞) = ∫ σ² f`.
    pub fn g_inf_sq(&self) -> T {
        self.g_inf_sq
    }

    /// True if the tabulated exponent exceeded the overflow clamp anywhere.
    pub fn exponent_clamped(&self) -> bool {
        self.clamped
    }

    pub fn grid_nodes(&self) -> &[T] {
        &self.nodes
    }

    fn exponent(&self, y: T) -> Result<T, StationaryError> {
        if self.grid.contains(y) {
            Ok(self.grid.eval(y))
        } else {
            direct_exponent(&self.model, y, self.opts.tol)
        }
    }

    /// `p'(x) = exp(-2 ∫₀ˣ S/σ²)`, inner integral by adaptive quadrature.
    pub fn scale_density(&self, x: T) -> Result<ScaleValue<T>, StationaryError> {
        scale_density(&self.model, x, &self.opts)
    }

    /// `p(x) = ∫₀ˣ p'(y) dy`. Overflow yields `±∞` with `clamped` set.
    pub fn scale_function(&self, x: T) -> Result<ScaleValue<T>, StationaryError> {
        if self.grid.contains(x) {
            integrate_scale(&self.grid, x, self.opts.tol)
        } else {
            scale_function(&self.model, x, &self.opts)
        }
    }

    /// `f(y) = exp(Φ(y)) / (m_S(ℝ) σ²(y))`.
    pub fn invariant_density(&self, y: T) -> Result<T, StationaryError> {
        let e = self.exponent(y)?;
        Ok(e.min(T::exp_clamp()).exp() / (self.m_total * self.model.sigma_sq_at(y)))
    }

    fn density_on_grid(&self, y: T) -> T {
        self.grid.eval(y).min(T::exp_clamp()).exp() / (self.m_total * self.model.sigma_sq_at(y))
    }

    /// `∫_{-∞}^{z} w(y) f(y) dy`, from a precomputed node table plus the
    /// partial cell containing `z`.
    fn cumulative<F: Fn(T) -> T>(&self, table: &[T], weighted: &F, z: T) -> T {
        if z.is_nan() {
            return T::nan();
        }
        let last = table.len() - 1;
        if z <= self.nodes[0] {
            return T::zero();
        }
        if z >= self.nodes[last] {
            return table[last];
        }
        let j = self.grid.cell(z);
        let q = adaptive_simpson(
            weighted,
            self.nodes[j],
            z,
            Tolerance::absolute(self.opts.tol),
        );
        table[j] + q.value
    }

    /// `g²(z) = ∫_{y ≤ z} σ²(y) f(y) dy`; `g²(+∞)` is the cached total.
    pub fn g_squared(&self, z: T) -> T {
        let w = |y: T| self.model.sigma_sq_at(y) * self.density_on_grid(y);
        self.cumulative(&self.cum_g, &w, z)
    }

    /// Stationary distribution function `F(z) = ∫_{y ≤ z} f(y) dy`.
    pub fn stationary_cdf(&self, z: T) -> T {
        let w = |y: T| self.density_on_grid(y);
        self.cumulative(&self.cum_density, &w, z)
    }

    /// Inverse of the stationary distribution function by linear
    /// interpolation between tabulated nodes. `u` in `(0, 1)`.
    pub fn stationary_quantile(&self, u: T) -> T {
        let total = self.cum_density[self.cum_density.len() - 1];
        let target = u * total;
        let k = self.cum_density.partition_point(|&c| c < target);
        if k == 0 {
            return self.nodes[0];
        }
        if k >= self.nodes.len() {
            return self.nodes[self.nodes.len() - 1];
        }
        let (c0, c1) = (self.cum_density[k - 1], self.cum_density[k]);
        let (y0, y1) = (self.nodes[k - 1], self.nodes[k]);
        if c1 <= c0 {
            return y0;
        }
        y0 + (y1 - y0) * (target - c0) / (c1 - c0)
    }

    /// Table of `∫_{-L}^{node} w f` over the engine grid, for repeated
    /// evaluation of density-weighted integrals at many upper limits.
    pub fn weighted_cumulative<F: Fn(T) -> T>(&self, weight: F) -> WeightedCumulative<'_, T, F> {
        let integrand = |y: T| weight(y) * self.density_on_grid(y);
        let (table, q) =
            cumulative_cells(&integrand, &self.nodes, Tolerance::absolute(self.opts.tol));
        WeightedCumulative {
            engine: self,
            weight,
            table,
            converged: q.converged,
        }
    }

    /// Recurrence screen using this engine's speed measure and scale function.
    pub fn check_condition_rp(&self) -> RpReport<T> {
        let l = self.trunc_l;
        let threshold = T::lit(SCALE_DIVERGENCE_THRESHOLD);
        let eval = |x: T| self.scale_function(x).map(|v| v.value);
        let values = (|| -> Result<[T; 4], StationaryError> {
            Ok([eval(-l)?, eval(l)?, eval(-(l + l))?, eval(l + l)?])
        })();
        match values {
            Ok([pl, pr, pl2, pr2]) => {
                let left_ok = pl < -threshold && pl2 < pl;
                let right_ok = pr > threshold && pr2 > pr;
                let diagnostic = match (left_ok, right_ok) {
                    (true, true) => None,
                    (false, _) => Some(format!(
                        "scale function does not diverge at -∞ (p(-L) = {pl}, p(-2L) = {pl2})"
                    )),
                    (_, false) => Some(format!(
                        "scale function does not diverge at +∞ (p(L) = {pr}, p(2L) = {pr2})"
                    )),
                };
                RpReport {
                    ok: left_ok && right_ok,
                    p_left: pl,
                    p_right: pr,
                    m_total: self.m_total,
                    diagnostic,
                }
            }
            Err(e) => RpReport {
                ok: false,
                p_left: T::nan(),
                p_right: T::nan(),
                m_total: self.m_total,
                diagnostic: Some(e.to_string()),
            },
        }
    }

    /// Linear-growth screen on the default grid.
    pub fn check_condition_es(&self) -> EsReport<T> {
        self.model
            .check_condition_es(
                T::lit(crate::model::DEFAULT_SCREEN_HALF_WIDTH),
                crate::model::DEFAULT_SCREEN_POINTS,
            )
            .expect("default screening grid is valid")
    }
}

/// See [`StationaryEngine::weighted_cumulative`].
pub struct WeightedCumulative<'e, T, F> {
    engine: &'e StationaryEngine<T>,
    weight: F,
    table: Vec<T>,
    converged: bool,
}

impl<T: Scalar, F: Fn(T) -> T> WeightedCumulative<'_, T, F> {
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// `∫_{-∞}^{z} w(y) f(y) dy`.
    pub fn value(&self, z: T) -> T {
        let e = self.engine;
        let integrand = |y: T| (self.weight)(y) * e.density_on_grid(y);
        e.cumulative(&self.table, &integrand, z)
    }

    pub fn total(&self) -> T {
        self.table[self.table.len() - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn engine(s: &str, sigma: &str) -> StationaryEngine<f64> {
        StationaryEngine::with_defaults(DiffusionModel::from_sources(s, sigma).unwrap()).unwrap()
    }

    #[test]
    fn scale_density_examples() {
        let ou = engine("-x", "1");
        let v = ou.scale_density(1.0).unwrap();
        assert!((v.value - std::f64::consts::E).abs() < 1e-8);
        assert!(!v.clamped);
        assert_eq!(ou.scale_density(0.0).unwrap().value, 1.0);
        let flat = StationaryEngine::new(
            DiffusionModel::<f64>::from_sources("0", "1").unwrap(),
            EngineOptions {
                max_doublings: 0,
                ..Default::default()
            },
        );
        assert!(matches!(
            flat,
            Err(StationaryError::SpeedMeasureDiverges { .. })
        ));
    }

    #[test]
    fn scale_function_examples() {
        let ou = engine("-x", "1");
        assert_eq!(ou.scale_function(0.0).unwrap().value, 0.0);
        // Riemann oracle (midpoint, 10^6 nodes) for ∫₀¹ exp(y²) dy.
        let n = 1_000_000;
        let riemann: f64 = (0..n)
            .map(|i| {
                let y = (i as f64 + 0.5) / n as f64;
                (y * y).exp()
            })
            .sum::<f64>()
            / n as f64;
        let p1 = ou.scale_function(1.0).unwrap().value;
        assert!((p1 - riemann).abs() < 1e-9, "{p1} vs {riemann}");
        assert!((p1 - 1.462_651_745_907_181_6).abs() < 1e-9);
        let m1 = ou.scale_function(-1.0).unwrap().value;
        assert!((m1 + p1).abs() < 1e-12);
    }

    #[test]
    fn zero_drift_scale() {
        let m = DiffusionModel::<f64>::from_sources("0", "1").unwrap();
        let opts = EngineOptions::default();
        assert_eq!(scale_density(&m, 5.0, &opts).unwrap().value, 1.0);
        assert!((scale_function(&m, 3.0, &opts).unwrap().value - 3.0).abs() < 1e-12);
        let ou = DiffusionModel::<f64>::from_sources("-x", "1").unwrap();
        assert_eq!(scale_density(&ou, 0.0, &opts).unwrap().value, 1.0);
    }

    #[test]
    fn ou_density_and_normalizer() {
        let ou = engine("-x", "1");
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((ou.m_total() - sqrt_pi).abs() < 1e-9);
        assert!((ou.invariant_density(0.0).unwrap() - 1.0 / sqrt_pi).abs() < 1e-9);
        let ratio = ou.invariant_density(1.0).unwrap() / ou.invariant_density(0.0).unwrap();
        assert!((ratio - (-1f64).exp()).abs() < 1e-12);
        let ou2 = engine("-2*x", "1");
        assert!(
            (ou2.invariant_density(0.0).unwrap() - (2.0 / std::f64::consts::PI).sqrt()).abs()
                < 1e-9
        );
    }

    #[test]
    fn ou_g_squared() {
        let ou = engine("-x", "1");
        assert!((ou.g_squared(f64::INFINITY) - 1.0).abs() < 1e-9);
        assert_eq!(ou.g_squared(f64::INFINITY), ou.g_inf_sq());
        assert_eq!(ou.g_squared(f64::NEG_INFINITY), 0.0);
        assert!((ou.g_squared(0.0) - 0.5).abs() < 1e-9);
        let phi = Normal::new(0.0, 1.0).unwrap();
        let want = phi.cdf(std::f64::consts::SQRT_2);
        assert!((ou.g_squared(1.0) - want).abs() < 1e-9);
        assert!((want - 0.921_350).abs() < 1e-6);
        // Off-node evaluation.
        let z = 0.123_456_7;
        assert!((ou.g_squared(z) - phi.cdf(z * std::f64::consts::SQRT_2)).abs() < 1e-9);
    }

    #[test]
    fn g_squared_bounded_by_sigma_sq() {
        let e = engine("-x", "1 + 0.5*tanh(x)");
        assert!(e.g_inf_sq() <= e.model().sigma_sq_bound());
        let mut prev = 0.0;
        for i in -100..=100 {
            let g = e.g_squared(i as f64 * 0.07);
            assert!(g + e.tol() >= prev);
            prev = g;
        }
    }

    #[test]
    fn detailed_balance_constant() {
        let e = engine("-x^3 + x", "1 + 0.3*cos(x)");
        let want = 1.0 / e.m_total();
        for i in -20..=20 {
            let y = i as f64 * 0.1;
            let f = e.invariant_density(y).unwrap();
            let p = e.scale_density(y).unwrap().value;
            let s2 = e.model().sigma_sq_at(y);
            assert!((f * s2 * p - want).abs() < 1e-7 * want.max(1.0), "y = {y}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let e = engine("-2*x", "1");
        for u in [0.01, 0.25, 0.5, 0.9, 0.999] {
            let q = e.stationary_quantile(u);
            assert!((e.stationary_cdf(q) - u).abs() < 1e-5);
        }
    }

    #[test]
    fn overflow_is_flagged() {
        let e = engine("-x^3", "1");
        assert!(e.exponent_clamped());
        let p = e.scale_function(40.0).unwrap();
        assert!(p.clamped);
        assert!(p.value > 1e300);
        let d = e.scale_density(10.0).unwrap();
        assert!(d.clamped);
    }

    #[test]
    fn f32_engine() {
        let opts = EngineOptions::<f32> {
            tol: 1e-4,
            tail_threshold: 1e-12,
            ..Default::default()
        };
        let e = StationaryEngine::new(
            DiffusionModel::<f32>::from_sources("-x", "1").unwrap(),
            opts,
        )
        .unwrap();
        assert!((e.m_total() - std::f32::consts::PI.sqrt()).abs() < 1e-3);
        assert!((e.g_squared(0.0) - 0.5).abs() < 1e-3);
    }
}
