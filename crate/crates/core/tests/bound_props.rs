use prelog_core::bound::{
    capacity_lower_bound, conditional_entropy_term, db_grid, gaussian_entropy_bits, jacobian_logdet_expectation,
    least_squares_slope, prelog_sweep, SweepOptions,
};
use prelog_core::channel::{complex_normal_vec, dft_first_columns, fading_matrix, index_set_j, substream};
use prelog_core::jacobian::{build_jacobian, log_det_terms};
use prelog_core::matrix::{log2_abs_det, ComplexMatrix};
use prelog_core::recovery::PilotMode;
use prelog_core::C64;
use proptest::prelude::*;

/// `∫_0^∞ log2(1 + snr·u) e^{-u} du` by composite Simpson on `[0, 60]`.
fn exponential_log_oracle(snr: f64) -> f64 {
    let (hi, n) = (60.0, 200_000usize);
    let h = hi / n as f64;
    let f = |u: f64| (1.0 + snr * u).log2() * (-u).exp();
    let inner: f64 = (1..n).map(|k| f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(0.0) + inner + f(hi)) * h / 3.0
}

#[test]
fn scalar_channel_matches_quadrature() {
    let a = ComplexMatrix::<f64>::identity(1);
    for snr in [0.5, 10.0, 1e3] {
        let est = conditional_entropy_term(&a, 1, snr, 100_000, 17);
        let mc = est.value - gaussian_entropy_bits::<f64>();
        let oracle = exponential_log_oracle(snr);
        assert!((mc - oracle).abs() <= 3.0 * est.std_err, "snr={snr}: {mc} vs {oracle} (se {})", est.std_err);
    }
}

#[test]
fn single_rank_terms_cancel() {
    let a = dft_first_columns::<f64>(2, 1).unwrap();
    let mut m3 = None;
    for k in 0..200 {
        let mut rng = substream(5, 50, k);
        let x = complex_normal_vec::<f64, _>(&mut rng, 2);
        let s = fading_matrix(&complex_normal_vec(&mut rng, 1), 1);
        let terms = log_det_terms(&a, &x, &s).unwrap();
        assert_eq!(terms.boundary, 0.0);
        let (l1, l2) = (x[0].norm().log2(), x[1].norm().log2());
        assert!((terms.m1 - (l1 + l2)).abs() < 1e-12);
        assert!((terms.m5 + l2).abs() < 1e-12);
        assert!((terms.m1 + terms.m5 - l1).abs() < 1e-12);
        let ls = s[(0, 0)].norm().log2();
        assert!((terms.m2 - 2.0 * ls).abs() < 1e-12);
        assert!((terms.m4 + ls).abs() < 1e-12);
        let m3_ref = *m3.get_or_insert(terms.m3);
        assert!((terms.m3 - m3_ref).abs() < 1e-12);
        let direct = log2_abs_det(&build_jacobian(&a, &x, &s, &index_set_j(2, 1, 1)));
        assert!((direct - terms.total()).abs() < 1e-10);
    }
    let e = jacobian_logdet_expectation(&a, 4000, 6, PilotMode::Sampled).unwrap();
    assert!((e.direct.value - e.decomposed.value).abs() <= 3.0 * e.std_err);
}

#[test]
fn unit_inputs_give_exact_factored_sum() {
    for (t, q) in [(3, 2), (4, 2), (5, 3)] {
        let a = dft_first_columns::<f64>(t, q).unwrap();
        let x = vec![C64::new(1.0, 0.0); t];
        let s = ComplexMatrix::identity(q);
        let direct = log2_abs_det(&build_jacobian(&a, &x, &s, &index_set_j(t, q, q)));
        let factored = log_det_terms(&a, &x, &s).unwrap().total();
        assert!((direct - factored).abs() < 1e-12, "T={t} Q={q}: {direct} vs {factored}");
    }
}

#[test]
fn doubling_samples_shrinks_std_err() {
    let a = dft_first_columns::<f64>(3, 2).unwrap();
    let small = capacity_lower_bound(&a, 1e4, 8000, 3, PilotMode::Sampled).unwrap();
    let large = capacity_lower_bound(&a, 1e4, 16000, 3, PilotMode::Sampled).unwrap();
    let ratio = large.std_err / small.std_err;
    assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.07, "ratio {ratio}");
}

#[test]
fn high_snr_curve_is_monotone_with_bounded_residual() {
    let a = dft_first_columns::<f64>(3, 2).unwrap();
    let grid = db_grid(0.0, 80.0, 17);
    let curve = prelog_sweep(&a, &grid, 4000, 12, SweepOptions::default()).unwrap();
    let high: Vec<_> = curve.points.iter().filter(|p| p.snr >= 1e2).collect();
    assert!(high.windows(2).all(|w| w[1].bound >= w[0].bound));

    let top = curve.points.last().unwrap().snr;
    let residuals: Vec<f64> = curve
        .points
        .iter()
        .filter(|p| p.snr >= top / 100.0 * (1.0 - 1e-9))
        .map(|p| p.bound - (1.0 - 1.0 / 3.0) * p.snr.log2())
        .collect();
    let spread = residuals.iter().cloned().fold(f64::MIN, f64::max) - residuals.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.5, "residual spread {spread}");
}

#[test]
fn slope_targets_for_other_shapes() {
    for (t, q) in [(2, 1), (3, 1), (4, 2), (5, 3), (6, 2)] {
        let a = dft_first_columns::<f64>(t, q).unwrap();
        let curve = prelog_sweep(&a, &db_grid(40.0, 80.0, 9), 2000, 21, SweepOptions::default()).unwrap();
        let target = 1.0 - 1.0 / t as f64;
        assert!((curve.target_slope - target).abs() < 1e-15);
        assert!((curve.fitted_slope - target).abs() < 0.05, "T={t} Q={q}: {}", curve.fitted_slope);
    }
}

#[test]
fn fixed_pilot_keeps_the_slope() {
    let a = dft_first_columns::<f64>(3, 2).unwrap();
    let options = SweepOptions { pilot: PilotMode::unit(), ..SweepOptions::default() };
    let curve = prelog_sweep(&a, &db_grid(40.0, 80.0, 9), 4000, 8, options).unwrap();
    assert!((curve.fitted_slope - 2.0 / 3.0).abs() < 0.05);
}

#[test]
fn term_estimates_are_stable_across_seeds() {
    let a = dft_first_columns::<f64>(4, 2).unwrap();
    let runs: Vec<_> = (0..10).map(|seed| jacobian_logdet_expectation(&a, 2000, 100 + seed, PilotMode::Sampled).unwrap()).collect();
    // Boundary sums and the fading determinant term.
    for k in [0, 2] {
        let values: Vec<f64> = runs.iter().map(|r| r.terms[k].value).collect();
        assert!(values.iter().all(|v| v.is_finite()));
        let se = runs.iter().map(|r| r.terms[k].std_err).sum::<f64>() / runs.len() as f64;
        let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 5.0 * se, "term {k}: spread {spread}, se {se}");
    }
    assert!(runs.iter().all(|r| r.rejected == 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slope_ignores_constant_offsets(
        ys in prop::collection::vec(-50.0f64..50.0, 3..12),
        offset in -1e3f64..1e3,
    ) {
        let xs: Vec<f64> = (0..ys.len()).map(|k| 10.0 + 1.7 * k as f64).collect();
        let shifted: Vec<f64> = ys.iter().map(|y| y + offset).collect();
        let (a, b) = (least_squares_slope(&xs, &ys), least_squares_slope(&xs, &shifted));
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}
