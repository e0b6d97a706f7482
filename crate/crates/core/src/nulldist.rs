//! Law of `sup_{0≤t≤1} |B(t)|` for a standard Brownian motion `B`.
//!
//! `P(sup|B| ≤ c) = (4/π) Σ_{k≥0} (-1)^k/(2k+1) · exp(-(2k+1)² π² / (8c²))`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::{KahanSum, Scalar};
use crate::simulate::{derive_seed, generator, PATH_STREAM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NullDistError {
    #[error("significance level must lie in (0, 1), got {0}")]
    EpsOutOfRange(f64),
    #[error("Monte Carlo oracle needs at least one path and one step")]
    EmptySample,
}

/// Below this the CDF is returned as 0 (true value < 1e-16).
pub const CDF_ZERO_BELOW: f64 = 0.2;
const BRACKET: (f64, f64) = (1e-6, 100.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullLaw<T = f64> {
    /// Upper bound on the number of series terms.
    pub series_terms: usize,
    /// Stop once the next term is below this.
    pub tol: T,
}

impl<T: Scalar> Default for NullLaw<T> {
    fn default() -> Self {
        Self {
            series_terms: 2000,
            tol: T::lit(1e-10),
        }
    }
}

impl<T: Scalar> NullLaw<T> {
    /// `P(sup_{[0,1]} |B| ≤ c)`.
    pub fn cdf(&self, c: T) -> T {
        if !(c >= T::lit(CDF_ZERO_BELOW)) {
            return if c.is_nan() { c } else { T::zero() };
        }
        if c.is_infinite() {
            return T::one();
        }
        let pi = T::PI();
        let a = pi * pi / (T::lit(8.0) * c * c);
        let mut sum = KahanSum::new();
        for k in 0..=self.series_terms {
            let odd = T::from_usize_lossy(2 * k + 1);
            let term = (-a * odd * odd).exp() / odd;
            sum.add(if k % 2 == 0 { term } else { -term });
            if term < self.tol {
                break;
            }
        }
        (T::lit(4.0) / pi * sum.value())
            .max(T::zero())
            .min(T::one())
    }

    /// Upper-tail probability `P(sup|B| > c)`.
    pub fn sf(&self, c: T) -> T {
        T::one() - self.cdf(c)
    }

    /// `c_ε` with `P(sup|B| > c_ε) = ε`, by bisection.
    pub fn critical_value(&self, eps: T) -> Result<T, NullDistError> {
        if !(eps > T::zero() && eps < T::one()) {
            return Err(NullDistError::EpsOutOfRange(eps.to_f64_lossy()));
        }
        let target = T::one() - eps;
        let (mut lo, mut hi) = (T::lit(BRACKET.0), T::lit(BRACKET.1));
        let width = T::lit(1e-12).max(T::epsilon() * T::lit(4.0));
        for _ in 0..200 {
            if hi - lo <= width {
                break;
            }
            let mid = (lo + hi) / T::lit(2.0);
            if self.cdf(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo + hi) / T::lit(2.0))
    }
}

/// `P(sup_{[0,1]} |B| ≤ c)` with default series settings.
pub fn cdf_sup_abs_bm(c: f64) -> f64 {
    NullLaw::default().cdf(c)
}

/// `c_ε` with default series settings.
pub fn critical_value(eps: f64) -> Result<f64, NullDistError> {
    NullLaw::default().critical_value(eps)
}

/// `max_{1≤i≤n_steps} |W_{i/n_steps}|` for `n_paths` independent random
/// walks with Gaussian steps, sorted ascending.
pub fn mc_sup_abs_sample(
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<f64>, NullDistError> {
    if n_paths == 0 || n_steps == 0 {
        return Err(NullDistError::EmptySample);
    }
    let scale = (1.0 / n_steps as f64).sqrt();
    let mut sample: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = generator(derive_seed(seed, i), PATH_STREAM);
            let mut w = 0.0f64;
            let mut max = 0.0f64;
            for _ in 0..n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                w += z;
                max = max.max(w.abs());
            }
            max * scale
        })
        .collect();
    sample.sort_by(f64::total_cmp);
    Ok(sample)
}

/// Smallest sample value whose empirical CDF reaches `p` (inverse ECDF).
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Empirical `(1 - ε)`-quantile of the discretized sup statistic.
pub fn mc_oracle(
    eps: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<f64, NullDistError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(NullDistError::EpsOutOfRange(eps));
    }
    let sample = mc_sup_abs_sample(n_paths, n_steps, seed)?;
    Ok(empirical_quantile(&sample, 1.0 - eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    /// Three-term hand evaluation of the series.
    fn three_terms(c: f64) -> f64 {
        let a = std::f64::consts::PI.powi(2) / (8.0 * c * c);
        4.0 / std::f64::consts::PI * ((-a).exp() - (-9.0 * a).exp() / 3.0 + (-25.0 * a).exp() / 5.0)
    }

    #[test]
    fn cdf_examples() {
        let law = NullLaw::<f64>::default();
        assert_eq!(law.cdf(0.0), 0.0);
        assert_eq!(law.cdf(0.1), 0.0);
        assert!((three_terms(2.2414) - 0.95).abs() < 5e-4);
        assert!((law.cdf(2.2414) - 0.95).abs() < 5e-4);
        assert!((law.cdf(1.96) - 0.9).abs() < 1e-3);
        assert!((law.cdf(1.96) - three_terms(1.96)).abs() < 1e-6);
        assert_eq!(law.cdf(f64::INFINITY), 1.0);
    }

    #[test]
    fn cdf_small_argument_is_negligible() {
        // Dominant term at the cutoff.
        let a = std::f64::consts::PI.powi(2) / (8.0 * 0.2 * 0.2);
        assert!(4.0 / std::f64::consts::PI * (-a).exp() < 1e-12);
        let law = NullLaw::<f64>::default();
        assert!(law.cdf(0.2) < 1e-12);
    }

    #[test]
    fn critical_values() {
        let law = NullLaw::<f64>::default();
        assert!((law.critical_value(0.05).unwrap() - 2.2414).abs() < 1e-3);
        assert!((law.critical_value(0.10).unwrap() - 1.9600).abs() < 1e-3);
        for eps in [0.01, 0.05, 0.1, 0.5] {
            let c = law.critical_value(eps).unwrap();
            assert!((law.cdf(c) - (1.0 - eps)).abs() < 1e-6);
        }
        // Median of sup|B| by independent bisection of the series.
        assert!((law.critical_value(0.5).unwrap() - 1.148973).abs() < 1e-5);
        assert!(law.critical_value(0.0).is_err());
        assert!(law.critical_value(1.0).is_err());
        assert!(law.critical_value(f64::NAN).is_err());
    }

    #[test]
    fn cdf_is_monotone() {
        let law = NullLaw::<f64>::default();
        let mut prev = 0.0;
        for i in 1..=1000 {
            let c = 5.0 * i as f64 / 1000.0;
            let v = law.cdf(c);
            assert!(v >= prev, "c = {c}");
            prev = v;
        }
        assert!(prev > 0.99999);
    }

    #[test]
    fn reflection_tail_bound() {
        let law = NullLaw::<f64>::default();
        let normal = Normal::new(0.0, 1.0).unwrap();
        for i in 0..=80 {
            let c = 1.0 + i as f64 * 0.05;
            // Nearly tight for large c; slack covers the series truncation.
            assert!(law.sf(c) <= 4.0 * normal.sf(c) + 1e-9, "c = {c}");
        }
    }

    #[test]
    fn f32_law() {
        let law = NullLaw::<f32> {
            tol: 1e-7,
            ..Default::default()
        };
        assert!((law.critical_value(0.05).unwrap() - 2.2414).abs() < 1e-3);
    }

    #[test]
    fn mc_oracle_small_run() {
        let a = mc_oracle(0.5, 2000, 500, 9).unwrap();
        let b = mc_oracle(0.5, 2000, 500, 9).unwrap();
        assert_eq!(a, b);
        assert!((a - 1.149).abs() < 0.08, "{a}");
        assert!(mc_oracle(0.5, 0, 10, 1).is_err());
    }

    #[test]
    fn quantile_definition() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_quantile(&s, 0.5), 2.0);
        assert_eq!(empirical_quantile(&s, 0.51), 3.0);
        assert_eq!(empirical_quantile(&s, 1.0), 4.0);
        assert_eq!(empirical_quantile(&s, 0.0), 1.0);
    }
}
