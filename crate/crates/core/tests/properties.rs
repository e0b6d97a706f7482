//! Cross-module examples and invariants that need simulation or several
//! engines at once.

use driftgof::simulate::{sample_stationary_start, simulate_path};
use driftgof::statistic::{drift_gap_process, marked_step_process, score_process};
use driftgof::{DiffusionModel, Engine64, EngineOptions, FunctionExpr, GofTest64, Path64};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn engine(drift: &str) -> Engine64 {
    Engine64::with_defaults(DiffusionModel::from_sources(drift, "1").unwrap()).unwrap()
}

fn expr(s: &str) -> FunctionExpr {
    FunctionExpr::parse(s).unwrap()
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[test]
fn warm_start_matches_ou_law() {
    let e = engine("-x");
    let mut draws: Vec<f64> = (0..100_000u64)
        .map(|s| sample_stationary_start(&e, s))
        .collect();
    assert_eq!(
        sample_stationary_start(&e, 42),
        sample_stationary_start(&e, 42)
    );
    draws.sort_by(f64::total_cmp);
    let law = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    let n = draws.len() as f64;
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "KS = {ks}");
}

#[test]
fn warm_start_variance_for_faster_reversion() {
    let e = engine("-2*x");
    let draws: Vec<f64> = (0..100_000u64)
        .map(|s| sample_stationary_start(&e, s))
        .collect();
    let v = sample_variance(&draws);
    assert!((v - 0.25).abs() < 0.01, "{v}");
}

#[test]
fn long_ou_path_variance_and_step_refinement() {
    let m = DiffusionModel::<f64>::from_sources("-x", "1").unwrap();
    let coarse = simulate_path(&m, 2000.0, 0.01, 0.0, 8).unwrap();
    let v = sample_variance(&coarse.values);
    assert!((v - 0.5).abs() < 0.03, "{v}");
    // Halving the step moves the estimate by less than the Monte Carlo band.
    let fine = simulate_path(&m, 2000.0, 0.005, 0.0, 8).unwrap();
    let vf = sample_variance(&fine.values);
    assert!((v - vf).abs() < 0.03, "{v} vs {vf}");
}

#[test]
fn drift_gap_approaches_condition_c() {
    let m = DiffusionModel::<f64>::from_sources("-2*x", "1").unwrap();
    let p = simulate_path(&m, 2000.0, 0.01, 0.0, 21).unwrap();
    let a = drift_gap_process(&p, &expr("-x"), &expr("-2*x")).unwrap();
    let (sup, at) = a.sup_abs_with_arg();
    let want = (2.0 / std::f64::consts::PI).sqrt() / 4.0;
    assert!((sup - want).abs() < 0.01, "{sup}");
    assert!(at.abs() < 0.3, "{at}");
}

#[test]
fn condition_c_vanishes_at_infinity_and_for_equal_drifts() {
    let e = engine("-2*x");
    let c = driftgof::ConditionC::new(&e, e.model().drift());
    for x in [-3.0, 0.0, 2.0] {
        assert_eq!(c.value(x), 0.0);
    }
    let s0 = expr("-x");
    let c = driftgof::ConditionC::new(&e, &s0);
    assert!(c.value(f64::INFINITY).abs() < 1e-9);
    assert!(c.value(30.0).abs() < 1e-9);
}

#[test]
fn shipped_models_are_normalized_and_stable() {
    for drift in ["-x", "-2*x", "-x^3", "tanh(x)-x"] {
        let e = engine(drift);
        let tol = e.tol();
        let mass = e.weighted_cumulative(|_| 1.0).total();
        assert!((mass - 1.0).abs() < 10.0 * tol, "{drift}: {mass}");
        let mut prev = 0.0;
        for i in 0..=200 {
            let g = e.g_squared(-10.0 + 0.1 * i as f64);
            assert!(g + tol >= prev, "{drift}: g2 not monotone");
            prev = g;
        }
        assert!(e.g_inf_sq() <= e.model().sigma_sq_bound() + tol);
        // Finer quadrature and grid agree within tolerance.
        let opts = EngineOptions {
            tol: tol / 10.0,
            grid_nodes: 16_001,
            ..EngineOptions::default()
        };
        let fine = Engine64::new(e.model().clone(), opts).unwrap();
        assert!(
            (fine.m_total() - e.m_total()).abs() < tol * e.m_total().max(1.0),
            "{drift}"
        );
        assert!((fine.g_inf_sq() - e.g_inf_sq()).abs() < tol, "{drift}");
    }
}

#[test]
fn null_centering() {
    let e = engine("-x");
    let s0 = expr("-x");
    let reps = 300;
    let probes = [-1.0, 0.0, 1.0];
    let mut values = vec![Vec::with_capacity(reps); probes.len()];
    for i in 0..reps as u64 {
        let p = driftgof::simulate_stationary_path(&e, 50.0, 0.01, driftgof::derive_seed(5, i))
            .unwrap();
        let v = score_process(&p, &s0).unwrap();
        for (k, &x) in probes.iter().enumerate() {
            values[k].push(v.eval(x));
        }
    }
    for (k, col) in values.iter().enumerate() {
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let se = (sample_variance(col) / n).sqrt();
        assert!(
            mean.abs() < 4.0 * se,
            "x = {}: mean {mean}, se {se}",
            probes[k]
        );
    }
}

#[test]
fn decision_ignores_common_rescaling() {
    let m = DiffusionModel::<f64>::from_sources("-x", "1").unwrap();
    let test = GofTest64::new(expr("-x"), expr("1"), EngineOptions::default()).unwrap();
    let p = simulate_path(&m, 100.0, 0.01, 0.0, 3).unwrap();
    let r = test.run(&p, 0.05).unwrap();
    for c in [1e-3, 0.5, 7.0, 1e4] {
        let rescaled = (c * r.statistic) / (c * r.g_inf);
        assert_eq!(rescaled > r.critical, r.reject);
    }
}

fn path_from(values: Vec<f64>, dt: f64) -> Path64 {
    Path64 {
        t0: 0.0,
        dt,
        values,
        seed: 0,
        model_tag: String::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marks_scale_linearly(
        states in prop::collection::vec(-5.0f64..5.0, 1..200),
        c in -10.0f64..10.0,
    ) {
        let marks: Vec<f64> = states.iter().map(|s| s.sin()).collect();
        let scaled: Vec<f64> = marks.iter().map(|m| c * m).collect();
        let v = marked_step_process(&states, &marks, 1.0);
        let w = marked_step_process(&states, &scaled, 1.0);
        prop_assert_eq!(&v.jump_points, &w.jump_points);
        for (a, b) in v.values.iter().zip(&w.values) {
            prop_assert!((c * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn tie_order_is_irrelevant(
        pairs in prop::collection::vec((0u8..6, -3.0f64..3.0), 2..60),
        seed in any::<u64>(),
    ) {
        // Few distinct states, so ties are frequent.
        let states: Vec<f64> = pairs.iter().map(|(s, _)| *s as f64 * 0.5).collect();
        let marks: Vec<f64> = pairs.iter().map(|(_, m)| *m).collect();
        let mut order: Vec<usize> = (0..states.len()).collect();
        let mut rng = seed;
        for i in (1..order.len()).rev() {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (rng >> 33) as usize % (i + 1));
        }
        let s2: Vec<f64> = order.iter().map(|&i| states[i]).collect();
        let m2: Vec<f64> = order.iter().map(|&i| marks[i]).collect();
        let a = marked_step_process(&states, &marks, 1.0);
        let b = marked_step_process(&s2, &m2, 1.0);
        prop_assert_eq!(&a.jump_points, &b.jump_points);
        let mut distinct = states.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        prop_assert_eq!(a.jump_points.len(), distinct.len());
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn telescoping_on_arbitrary_paths(
        values in prop::collection::vec(-50.0f64..50.0, 2..300),
        dt in 0.001f64..1.0,
    ) {
        let p = path_from(values, dt);
        let v = score_process(&p, &expr("-x")).unwrap();
        let n = p.n_steps();
        let drift: f64 = p.values[..n].iter().map(|&x| -x * dt).sum();
        let scale = p.horizon().sqrt();
        let want = (p.values[n] - p.values[0] - drift) / scale;
        let magnitude = (p.values[n].abs() + p.values[0].abs()
            + p.values[..n].iter().map(|x| x.abs() * dt).sum::<f64>()) / scale;
        prop_assert!((v.values.last().unwrap() - want).abs() <= 1e-12 * magnitude);
        prop_assert_eq!(v.left_limit, 0.0);
        prop_assert!(v.jump_points.windows(2).all(|w| w[0] < w[1]));
    }
}
