//! Score-marked empirical process and drift-gap process of a discretized path.
//!
//! Both are step functions of the mark level `x` of the form
//! `scale · Σ_i 1{X_{t_i} ≤ x} · mark_i`, evaluated exactly by sorting the
//! left-endpoint states and taking compensated prefix sums of the marks in
//! state order. Equal states are merged into one jump point.

use std::io::Write;

use thiserror::Error;

use crate::exprlang::FunctionExpr;
use crate::scalar::{KahanSum, Scalar};
use crate::simulate::{format_g17, Path};
use crate::stationary::StationaryEngine;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatisticError {
    #[error("path needs at least two nodes and a positive horizon")]
    DegeneratePath,
    #[error("drift is not finite at observed state {state}")]
    NonFiniteDrift { state: f64 },
    #[error("path contains a non-finite state at index {index}")]
    NonFiniteState { index: usize },
}

/// Right-continuous step function: `left_limit` below the first jump point,
/// `values[k]` on `[jump_points[k], jump_points[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepProcess<T = f64> {
    pub jump_points: Vec<T>,
    pub values: Vec<T>,
    pub left_limit: T,
}

impl<T: Scalar> StepProcess<T> {
    pub fn eval(&self, x: T) -> T {
        let k = self.jump_points.partition_point(|&p| p <= x);
        if k == 0 {
            self.left_limit
        } else {
            self.values[k - 1]
        }
    }

    /// `sup_x |V(x)|`, attained at a jump point (or the left limit).
    pub fn sup_abs(&self) -> T {
        self.sup_abs_with_arg().0
    }

    /// Supremum of `|V|` with a state where it is attained. The location is
    /// `-∞` when only the left limit attains it.
    pub fn sup_abs_with_arg(&self) -> (T, T) {
        let mut best = self.left_limit.abs();
        let mut arg = T::neg_infinity();
        for (&p, &v) in self.jump_points.iter().zip(&self.values) {
            if v.abs() > best {
                best = v.abs();
                arg = p;
            }
        }
        (best, arg)
    }

    /// Plot-ready `x,value` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,value")?;
        for (&p, &v) in self.jump_points.iter().zip(&self.values) {
            writeln!(
                w,
                "{},{}",
                format_g17(p.to_f64_lossy()),
                format_g17(v.to_f64_lossy())
            )?;
        }
        Ok(())
    }
}

/// `sup_x |V(x)|` of a step process.
pub fn sup_statistic<T: Scalar>(v: &StepProcess<T>) -> T {
    v.sup_abs()
}

/// Builds `scale · Σ_i 1{states[i] ≤ x} · marks[i]`.
pub fn marked_step_process<T: Scalar>(states: &[T], marks: &[T], scale: T) -> StepProcess<T> {
    debug_assert_eq!(states.len(), marks.len());
    let mut order: Vec<usize> = (0..states.len()).collect();
    // Stable: tied marks are summed in path order.
    order.sort_by(|&a, &b| states[a].partial_cmp(&states[b]).expect("finite states"));
    let mut jump_points = Vec::with_capacity(order.len());
    let mut values = Vec::with_capacity(order.len());
    let mut acc = KahanSum::new();
    let mut k = 0;
    while k < order.len() {
        let state = states[order[k]];
        while k < order.len() && states[order[k]] == state {
            acc.add(marks[order[k]]);
            k += 1;
        }
        jump_points.push(state);
        values.push(acc.value() * scale);
    }
    StepProcess {
        jump_points,
        values,
        left_limit: T::zero(),
    }
}

fn check_path<T: Scalar>(path: &Path<T>) -> Result<(usize, T), StatisticError> {
    let n = path.n_steps();
    let horizon = path.horizon();
    if n < 1 || !(horizon > T::zero()) {
        return Err(StatisticError::DegeneratePath);
    }
    if let Some(index) = path.values.iter().position(|v| !v.is_finite()) {
        return Err(StatisticError::NonFiniteState { index });
    }
    Ok((n, horizon))
}

fn drift_values<T: Scalar>(states: &[T], drift: &FunctionExpr) -> Result<Vec<T>, StatisticError> {
    states
        .iter()
        .map(|&x| {
            let s: T = drift.eval(x);
            if s.is_finite() {
                Ok(s)
            } else {
                Err(StatisticError::NonFiniteDrift {
                    state: x.to_f64_lossy(),
                })
            }
        })
        .collect()
}

/// Per-step marks `X_{t_{i+1}} - X_{t_i} - S0(X_{t_i}) dt` (Itô, left endpoint).
pub fn score_marks<T: Scalar>(path: &Path<T>, s0: &FunctionExpr) -> Result<Vec<T>, StatisticError> {
    let (n, _) = check_path(path)?;
    let states = &path.values[..n];
    let drift = drift_values(states, s0)?;
    Ok(path
        .values
        .windows(2)
        .zip(drift)
        .map(|(w, s)| (w[1] - w[0]) - s * path.dt)
        .collect())
}

/// `V_T(x) = T^{-1/2} Σ_i 1{X_{t_i} ≤ x} (X_{t_{i+1}} - X_{t_i} - S0(X_{t_i}) dt)`.
pub fn score_process<T: Scalar>(
    path: &Path<T>,
    s0: &FunctionExpr,
) -> Result<StepProcess<T>, StatisticError> {
    let marks = score_marks(path, s0)?;
    let (n, horizon) = check_path(path)?;
    Ok(marked_step_process(
        &path.values[..n],
        &marks,
        horizon.recip().sqrt(),
    ))
}

/// `A_T(x) = T^{-1} Σ_i 1{X_{t_i} ≤ x} (S0 - S1)(X_{t_i}) dt`.
pub fn drift_gap_process<T: Scalar>(
    path: &Path<T>,
    s0: &FunctionExpr,
    s1: &FunctionExpr,
) -> Result<StepProcess<T>, StatisticError> {
    let (n, horizon) = check_path(path)?;
    let states = &path.values[..n];
    let d0 = drift_values(states, s0)?;
    let d1 = drift_values(states, s1)?;
    let marks: Vec<T> = d0
        .iter()
        .zip(&d1)
        .map(|(&a, &b)| (a - b) * path.dt)
        .collect();
    Ok(marked_step_process(states, &marks, horizon.recip()))
}

/// Limit of the drift-gap process under the alternative:
/// `A(x) = ∫_{y ≤ x} (S0(y) - S1(y)) f_{S1}(y) dy`, with `f_{S1}` from
/// `engine_s1`. Tabulated once, so many `x` are cheap.
pub struct ConditionC<'e, T: Scalar, F> {
    inner: crate::stationary::WeightedCumulative<'e, T, F>,
}

impl<'e, T: Scalar> ConditionC<'e, T, Box<dyn Fn(T) -> T + 'e>> {
    pub fn new(engine_s1: &'e StationaryEngine<T>, s0: &'e FunctionExpr) -> Self {
        let model = engine_s1.model();
        let gap: Box<dyn Fn(T) -> T + 'e> =
            Box::new(move |y: T| s0.eval::<T>(y) - model.drift_at(y));
        Self {
            inner: engine_s1.weighted_cumulative(gap),
        }
    }

    pub fn value(&self, x: T) -> T {
        self.inner.value(x)
    }

    pub fn converged(&self) -> bool {
        self.inner.converged()
    }

    /// `sup |A(x)|` over `points` (with a location).
    pub fn sup_abs_on(&self, points: &[T]) -> (T, T) {
        let mut best = T::zero();
        let mut arg = T::nan();
        for &x in points {
            let v = self.value(x).abs();
            if v > best || arg.is_nan() {
                best = v;
                arg = x;
            }
        }
        (best, arg)
    }
}

/// `A(x)` at a single point.
pub fn condition_c_value<T: Scalar>(engine_s1: &StationaryEngine<T>, s0: &FunctionExpr, x: T) -> T {
    ConditionC::new(engine_s1, s0).value(x)
}
