//! Adaptive Simpson quadrature with absolute/relative stopping rules.

use crate::scalar::{KahanSum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance<T> {
    pub abs: T,
    pub rel: T,
    pub max_depth: u32,
    pub min_depth: u32,
}

impl<T: Scalar> Tolerance<T> {
    pub fn absolute(abs: T) -> Self {
        Self {
            abs,
            rel: T::lit(1e-12),
            max_depth: 48,
            min_depth: 2,
        }
    }

    fn scaled(self, factor: T) -> Self {
        Self {
            abs: self.abs * factor,
            ..self
        }
    }
}

/// Outcome of one integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<T> {
    pub value: T,
    /// Richardson error estimate accumulated over accepted panels.
    pub error: T,
    pub converged: bool,
    pub evals: usize,
}

struct Panel<T> {
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
}

struct Simpson<'f, T, F> {
    f: &'f F,
    tol: Tolerance<T>,
    sum: KahanSum<T>,
    error: T,
    converged: bool,
    evals: usize,
}

impl<T: Scalar, F: Fn(T) -> T> Simpson<'_, T, F> {
    fn eval(&mut self, x: T) -> T {
        self.evals += 1;
        (self.f)(x)
    }

    fn refine(&mut self, p: Panel<T>, tol: T, depth: u32) {
        let two = T::lit(2.0);
        let m = (p.a + p.b) / two;
        let lm = (p.a + m) / two;
        let rm = (m + p.b) / two;
        let flm = self.eval(lm);
        let frm = self.eval(rm);
        if !(flm.is_finite() && frm.is_finite()) {
            self.converged = false;
            self.sum.add(T::nan());
            return;
        }
        let six = T::lit(6.0);
        let left = (m - p.a) / six * (p.fa + T::lit(4.0) * flm + p.fm);
        let right = (p.b - m) / six * (p.fm + T::lit(4.0) * frm + p.fb);
        let both = left + right;
        let delta = both - p.whole;
        let fifteen = T::lit(15.0);
        let bound = tol.max(self.tol.rel * both.abs());
        let narrow = m <= p.a || m >= p.b;
        if depth >= self.tol.min_depth && (delta.abs() <= fifteen * bound || narrow) {
            self.sum.add(both + delta / fifteen);
            self.error = self.error + delta.abs() / fifteen;
            return;
        }
        if depth >= self.tol.max_depth {
            self.converged = false;
            self.sum.add(both + delta / fifteen);
            self.error = self.error + delta.abs() / fifteen;
            return;
        }
        let half = tol / two;
        self.refine(
            Panel {
                a: p.a,
                b: m,
                fa: p.fa,
                fm: flm,
                fb: p.fm,
                whole: left,
            },
            half,
            depth + 1,
        );
        self.refine(
            Panel {
                a: m,
                b: p.b,
                fa: p.fm,
                fm: frm,
                fb: p.fb,
                whole: right,
            },
            half,
            depth + 1,
        );
    }
}

/// Integrates `f` over `[a, b]`; `a > b` gives the negated integral.
pub fn adaptive_simpson<T: Scalar, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    tol: Tolerance<T>,
) -> Quadrature<T> {
    if a == b {
        return Quadrature {
            value: T::zero(),
            error: T::zero(),
            converged: true,
            evals: 0,
        };
    }
    if a > b {
        let q = adaptive_simpson(f, b, a, tol);
        return Quadrature {
            value: -q.value,
            ..q
        };
    }
    let mut s = Simpson {
        f,
        tol,
        sum: KahanSum::new(),
        error: T::zero(),
        converged: true,
        evals: 0,
    };
    let m = (a + b) / T::lit(2.0);
    let (fa, fm, fb) = (s.eval(a), s.eval(m), s.eval(b));
    if !(fa.is_finite() && fm.is_finite() && fb.is_finite()) {
        return Quadrature {
            value: T::nan(),
            error: T::infinity(),
            converged: false,
            evals: 3,
        };
    }
    let whole = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
    s.refine(
        Panel {
            a,
            b,
            fa,
            fm,
            fb,
            whole,
        },
        tol.abs,
        0,
    );
    let value = s.sum.value();
    Quadrature {
        value,
        error: s.error,
        converged: s.converged && value.is_finite(),
        evals: s.evals,
    }
}

/// Integrates `f` cell by cell over increasing `nodes` and returns the running
/// integral from `nodes[0]` to each node (first entry 0). The absolute
/// tolerance is split across cells in proportion to their width.
pub fn cumulative_cells<T: Scalar, F: Fn(T) -> T>(
    f: &F,
    nodes: &[T],
    tol: Tolerance<T>,
) -> (Vec<T>, Quadrature<T>) {
    let mut cum = Vec::with_capacity(nodes.len());
    let mut acc = KahanSum::new();
    let mut summary = Quadrature {
        value: T::zero(),
        error: T::zero(),
        converged: true,
        evals: 0,
    };
    if nodes.is_empty() {
        return (cum, summary);
    }
    let span = nodes[nodes.len() - 1] - nodes[0];
    cum.push(T::zero());
    for w in nodes.windows(2) {
        let share = if span > T::zero() {
            (w[1] - w[0]) / span
        } else {
            T::one()
        };
        let q = adaptive_simpson(f, w[0], w[1], tol.scaled(share));
        acc.add(q.value);
        summary.error = summary.error + q.error;
        summary.converged &= q.converged;
        summary.evals += q.evals;
        cum.push(acc.value());
    }
    summary.value = acc.value();
    summary.converged &= summary.value.is_finite();
    (cum, summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = adaptive_simpson(
            &|x: f64| x * x * x - 2.0 * x,
            0.0,
            2.0,
            Tolerance::absolute(1e-12),
        );
        assert!(q.converged);
        assert!((q.value - 0.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_integral() {
        let q = adaptive_simpson(
            &|x: f64| (-x * x).exp(),
            -10.0,
            10.0,
            Tolerance::absolute(1e-10),
        );
        assert!(q.converged);
        assert!((q.value - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn reversed_bounds_negate() {
        let f = |x: f64| x.exp();
        let fwd = adaptive_simpson(&f, 0.0, 1.0, Tolerance::absolute(1e-10));
        let bwd = adaptive_simpson(&f, 1.0, 0.0, Tolerance::absolute(1e-10));
        assert_eq!(fwd.value, -bwd.value);
        assert!((fwd.value - (1f64.exp() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn non_finite_integrand_is_not_converged() {
        let q = adaptive_simpson(&|x: f64| 1.0 / x, 0.0, 1.0, Tolerance::absolute(1e-8));
        assert!(!q.converged);
    }

    #[test]
    fn cells_match_whole() {
        let nodes: Vec<f64> = (0..=100).map(|i| -5.0 + 0.1 * i as f64).collect();
        let (cum, q) =
            cumulative_cells(&|x: f64| (-x * x).exp(), &nodes, Tolerance::absolute(1e-12));
        assert!(q.converged);
        assert_eq!(cum.len(), nodes.len());
        assert!((cum[50] - q.value / 2.0).abs() < 1e-12);
        assert!((q.value - 1.772_453_850_905_516).abs() < 1e-10);
    }

    #[test]
    fn f32_quadrature() {
        let q = adaptive_simpson(
            &|x: f32| x.cos(),
            0.0,
            1.0,
            Tolerance {
                abs: 1e-5,
                rel: 1e-6,
                max_depth: 20,
                min_depth: 2,
            },
        );
        assert!(q.converged);
        assert!((q.value - 1f32.sin()).abs() < 1e-5);
    }
}
