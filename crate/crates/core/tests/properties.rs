use proptest::prelude::*;

use spline_recovery::adaptive::{recover_adaptive, recover_linear, soft_select, BesovParams};
use spline_recovery::besov::{besov_seminorm_b1_with, difference_norm, SmoothnessProbe};
use spline_recovery::bspline::{eval_translate, level_index_bounds, BSplineOrder, DyadicIndex};
use spline_recovery::error::Error;
use spline_recovery::exponent::Exponent;
use spline_recovery::multilevel::{decompose, refine, SparseExpansion};
use spline_recovery::oracle::FunctionOracle;
use spline_recovery::quasi_interpolant::{a_coeffs, LevelCoefficients, QuasiInterpolantSpec};

fn sign(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum()
    }
}

/// Soft thresholding at the (n+1)-th largest magnitude, computed by a full sort.
fn soft_select_by_sort(x: &[f64], n: usize) -> Vec<f64> {
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let t = mags.get(n).copied().unwrap_or(0.0);
    x.iter().map(|&v| sign(v) * (v.abs() - t).max(0.0)).collect()
}

fn coefficients() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![Just(0.0), -10.0..10.0f64, (-3i32..=3).prop_map(f64::from)],
        1..40,
    )
}

fn cusp(beta: f64, xi: f64) -> FunctionOracle {
    FunctionOracle::from_fn("cusp", 1, move |x| (x[0] - xi).abs().powf(beta))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn soft_select_matches_sorted_threshold(x in coefficients(), n in 0usize..45) {
        let n = n.min(x.len());
        let got = soft_select(&x, n).unwrap();
        let want = soft_select_by_sort(&x, n);
        prop_assert_eq!(&got, &want);
        prop_assert!(got.iter().filter(|v| **v != 0.0).count() <= n);
        for (g, v) in got.iter().zip(&x) {
            prop_assert!(g.abs() <= v.abs());
            prop_assert!(*g == 0.0 || sign(*g) == sign(*v));
        }
    }

    #[test]
    fn soft_select_is_two_lipschitz(
        x in prop::collection::vec(-5.0..5.0f64, 1..30),
        noise in prop::collection::vec(-0.1..0.1f64, 30),
        n in 0usize..30,
    ) {
        let n = n.min(x.len());
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, e)| a + e).collect();
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let sx = soft_select(&x, n).unwrap();
        let sy = soft_select(&y, n).unwrap();
        for (a, b) in sx.iter().zip(&sy) {
            prop_assert!((a - b).abs() <= 2.0 * dist + 1e-12);
        }
    }

    #[test]
    fn soft_select_is_positively_homogeneous(x in coefficients(), n in 0usize..40, c in 0.01..100.0f64) {
        let n = n.min(x.len());
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let a = soft_select(&scaled, n).unwrap();
        let b = soft_select(&x, n).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - c * v).abs() <= 1e-12 * c * 10.0);
        }
    }

    #[test]
    fn partition_of_unity(r in 1u32..=3, k in 0u32..6, x in 0.0..=1.0f64) {
        let order = BSplineOrder::new(r).unwrap();
        let (lo, hi) = level_index_bounds(order, k);
        let sum: f64 = (lo..=hi)
            .map(|s| eval_translate(order, &DyadicIndex::new(k, vec![s]), &[x]))
            .sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_preserves_the_spline(
        r in 1u32..=2,
        k in 1u32..5,
        seed in prop::collection::vec(-1.0..1.0f64, 64),
        x in prop::collection::vec(0.0..=1.0f64, 2),
    ) {
        let order = BSplineOrder::new(r).unwrap();
        let len = (1usize << (k - 1)) + 2 * r as usize - 1;
        let values: Vec<f64> = (0..len * len).map(|i| seed[i % seed.len()] * (1.0 + i as f64).sqrt()).collect();
        let coarse = LevelCoefficients::from_values(order, k - 1, 2, values).unwrap();
        let fine = refine(&coarse);
        let a = SparseExpansion::from_level(&coarse).eval(&x);
        let b = SparseExpansion::from_level(&fine).eval(&x);
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adaptive_recovery_respects_the_budget(
        n in 8usize..4000,
        beta in 0.2..0.9f64,
        xi in 0.0..1.0f64,
    ) {
        let bp = BesovParams::new(beta + 1.0, Exponent::new(1.0).unwrap(), Exponent::INFINITY, Exponent::INFINITY, 1).unwrap();
        let oracle = cusp(beta, xi);
        match recover_adaptive(&oracle, &QuasiInterpolantSpec::cubic(), &bp, n) {
            Ok(res) => {
                prop_assert!(res.samples_used <= n);
                prop_assert_eq!(res.samples_used, oracle.samples_used());
                prop_assert!(res.term_count() <= n);
                for l in &res.levels {
                    prop_assert!(l.within_bound(), "level {} over its bound", l.k);
                }
            }
            Err(Error::InfeasibleBudget(_)) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn linear_recovery_respects_the_budget_and_reproduces_cubics(
        n in 5usize..5000,
        c in prop::collection::vec(-2.0..2.0f64, 4),
        x in 0.0..=1.0f64,
    ) {
        let coeffs = c.clone();
        let oracle = FunctionOracle::from_fn("cubic", 1, move |x| {
            coeffs.iter().rev().fold(0.0, |acc, ci| acc * x[0] + ci)
        });
        let res = recover_linear(&oracle, &QuasiInterpolantSpec::cubic(), n).unwrap();
        prop_assert!(res.samples_used <= n);
        let exact = c.iter().rev().fold(0.0, |acc, ci| acc * x + ci);
        prop_assert!((res.expansion.eval(&[x]) - exact).abs() < 1e-10);
    }

    #[test]
    fn differences_annihilate_low_degree_polynomials(
        l in 1usize..=4,
        c in prop::collection::vec(-3.0..3.0f64, 4),
        h in prop::collection::vec(-0.2..0.2f64, 2),
    ) {
        // degree l - 1 in each variable
        let coeffs = c.clone();
        let deg = l - 1;
        let f = FunctionOracle::from_fn("poly", 2, move |x| {
            (0..=deg).map(|j| coeffs[j] * x[0].powi(j as i32) * x[1].powi((deg - j) as i32)).sum::<f64>()
        });
        let p = Exponent::INFINITY;
        let v = difference_norm(&f, &h, l, p, 24).unwrap();
        prop_assert!(v < 1e-11, "{v}");
    }

    #[test]
    fn b1_is_absolutely_homogeneous(beta in 0.2..0.9f64, xi in 0.1..0.9f64, c in -20.0..20.0f64) {
        let bp = BesovParams::new(beta + 1.0, Exponent::new(1.0).unwrap(), Exponent::INFINITY, Exponent::INFINITY, 1).unwrap();
        let probe = SmoothnessProbe { resolution: 256, ..SmoothnessProbe::new(4, 6, bp.p, 1) };
        let f = besov_seminorm_b1_with(&cusp(beta, xi), &bp, &probe).unwrap();
        let scaled = FunctionOracle::from_fn("scaled", 1, move |x| c * (x[0] - xi).abs().powf(beta));
        let g = besov_seminorm_b1_with(&scaled, &bp, &probe).unwrap();
        prop_assert!((g.value - c.abs() * f.value).abs() <= 1e-9 * (1.0 + f.value * c.abs()));
    }

    #[test]
    fn decomposition_telescopes(
        beta in 0.3..2.5f64,
        xi in 0.0..1.0f64,
        base in 2u32..4,
        extra in 0u32..4,
        x in prop::collection::vec(0.0..=1.0f64, 2),
    ) {
        let f = move |p: &[f64]| (p[0] - xi).abs().powf(beta) + (p[1] * 3.0).sin();
        let top = base + extra;
        let spec = QuasiInterpolantSpec::cubic();
        let dec = decompose(&FunctionOracle::from_fn("f", 2, f), &spec, base, top).unwrap();
        let direct = SparseExpansion::from_level(&a_coeffs(&FunctionOracle::from_fn("f", 2, f), &spec, top).unwrap());
        let a = dec.to_expansion().eval(&x);
        let b = direct.eval(&x);
        prop_assert!((a - b).abs() < 1e-11, "{a} vs {b}");
    }

    #[test]
    fn ledger_counts_distinct_points_deterministically(
        idx in prop::collection::vec(0usize..20, 0..60),
    ) {
        let grid: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
        let points: Vec<Vec<f64>> = idx.iter().map(|&i| grid[i].clone()).collect();
        let mut distinct = Vec::new();
        for &i in &idx {
            if !distinct.contains(&i) {
                distinct.push(i);
            }
        }
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let o = FunctionOracle::from_fn("sq", 1, |x| x[0] * x[0]);
                let vals = o.sample_many(&points).unwrap();
                (o.samples_used(), o.ledger_points(), vals)
            })
            .collect();
        prop_assert_eq!(&runs[0], &runs[1]);
        let (used, ledger, vals) = &runs[0];
        prop_assert_eq!(*used, distinct.len());
        let first_seen: Vec<Vec<f64>> = distinct.iter().map(|&i| grid[i].clone()).collect();
        prop_assert_eq!(ledger, &first_seen);
        for (p, v) in points.iter().zip(vals) {
            prop_assert_eq!(*v, p[0] * p[0]);
        }
    }
}
