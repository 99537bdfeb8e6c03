//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use itertools::Itertools;
use prelog_core::bound::{
    conditional_entropy_curve, db_grid, jacobian_logdet_expectation, least_squares_slope, prelog_fraction,
    prelog_sweep, SweepOptions,
};
use prelog_core::channel::{dft_covariance_factor, dft_first_columns, index_set_j};
use prelog_core::jacobian::{run_factorization_trials, run_rank_lemma_trials};
use prelog_core::matrix::DEFAULT_RANK_TOL;
use prelog_core::property_a::satisfies_property_a;
use prelog_core::recovery::{run_round_trips, PilotMode, TrialStatus};
use prelog_core::IndexSet;

const SEED: u64 = 20_240_601;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn round_trip() -> Outcome {
    let a = dft_first_columns::<f64>(3, 2).unwrap();
    let trials = run_round_trips(&a, PilotMode::unit(), 1000, SEED);
    let accurate = trials
        .iter()
        .filter(|t| t.status == TrialStatus::Ok && t.max_rel_err_x <= 1e-6 && t.max_rel_err_s <= 1e-6)
        .count();
    let flagged = trials.iter().filter(|t| t.status != TrialStatus::Ok).count();
    let silent = trials.len() - accurate - flagged;
    outcome(
        accurate >= 990 && silent == 0,
        format!("{accurate}/1000 accurate, {flagged} flagged, {silent} unflagged inaccurate"),
    )
}

fn factorization() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut bad = 0usize;
    for (t, q) in [(3, 2), (4, 2), (4, 3), (6, 2)] {
        let dft = dft_first_columns::<f64>(t, q).unwrap();
        for factor in [None, Some(&dft)] {
            for r in run_factorization_trials(t, q, factor, 1000, SEED).unwrap() {
                worst = worst.max(r.discrepancy);
                bad += usize::from(!(r.discrepancy <= 1e-9));
            }
        }
    }
    outcome(bad == 0, format!("8000 draws, worst relative error {worst:.2e}, {bad} above 1e-9"))
}

fn prime_dft() -> Outcome {
    let (mut cases, mut failures) = (0usize, 0usize);
    for t in [3usize, 5, 7] {
        for q in 2..t {
            for cols in (1..=t).combinations(q) {
                let a = dft_covariance_factor::<f64>(t, &IndexSet::new(cols, t).unwrap()).unwrap();
                cases += 1;
                failures += usize::from(!satisfies_property_a(&a.leading_block(), DEFAULT_RANK_TOL).satisfied);
            }
        }
    }
    outcome(failures == 0, format!("{} of {cases} column subsets satisfied", cases - failures))
}

fn rank_lemma() -> Outcome {
    let summaries: Vec<_> = (2..=4).map(|n| run_rank_lemma_trials(n, 1000, SEED, DEFAULT_RANK_TOL)).collect();
    let violations: u64 = summaries.iter().map(|s| s.violations).sum();
    let detail = summaries
        .iter()
        .map(|s| format!("N={}: hypothesis {}/{} full rank {}", s.n, s.hypothesis_holds, s.trials, s.mhat_full_rank))
        .join("; ");
    outcome(violations == 0, format!("{detail}; {violations} violations"))
}

fn prelog_slope() -> Outcome {
    let a = dft_first_columns::<f64>(3, 2).unwrap();
    let curve = prelog_sweep(&a, &db_grid(40.0, 80.0, 9), 10_000, SEED, SweepOptions::default()).unwrap();
    let slope = curve.fitted_slope;
    let ok = (slope - 2.0 / 3.0).abs() <= 0.05 && slope - curve.siso_reference >= 0.25;
    outcome(
        ok,
        format!("fitted {slope:.4}, target {:.4}, reference {:.4}", curve.target_slope, curve.siso_reference),
    )
}

fn two_estimators() -> Outcome {
    let a = dft_first_columns::<f64>(3, 2).unwrap();
    let e = jacobian_logdet_expectation(&a, 10_000, SEED, PilotMode::Sampled).unwrap();
    let gap = (e.direct.value - e.decomposed.value).abs();
    outcome(
        gap <= 3.0 * e.std_err,
        format!(
            "direct {:.4}, decomposed {:.4}, gap {gap:.4} vs 3 SE = {:.4}",
            e.direct.value,
            e.decomposed.value,
            3.0 * e.std_err
        ),
    )
}

fn conditional_entropy_slope() -> Outcome {
    let a = dft_first_columns::<f64>(3, 2).unwrap();
    let grid = db_grid(40.0, 80.0, 9);
    let curve = conditional_entropy_curve(a.matrix(), 2, &grid, 10_000, SEED);
    let xs: Vec<f64> = grid.iter().map(|s| s.log2()).collect();
    let ys: Vec<f64> = curve.iter().map(|e| e.value).collect();
    let slope = least_squares_slope(&xs, &ys);
    outcome((slope - 4.0).abs() <= 0.05, format!("slope {slope:.4}, target 4"))
}

fn integer_identity() -> Outcome {
    let mut checked = 0;
    let mut failures = Vec::new();
    for t in 2..=12usize {
        for q in 1..t {
            let observed = index_set_j(t, q, q).len();
            let (num, den) = prelog_fraction(t, q);
            // (|J| - Q²)/T = (T-1)/T by cross-multiplication.
            if (observed - q * q) * t != (t - 1) * t || (num, den) != (t - 1, t) {
                failures.push(format!("T={t} Q={q}"));
            }
            checked += 1;
        }
    }
    outcome(failures.is_empty(), format!("{checked} (T, Q) pairs, failures: [{}]", failures.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("round-trip recovery", Duration::from_secs(5), round_trip),
        ("jacobian factorization", Duration::from_secs(30), factorization),
        ("prime-length DFT row property", Duration::from_secs(60), prime_dft),
        ("rank lemma implication", Duration::from_secs(30), rank_lemma),
        ("pre-log slope", Duration::from_secs(300), prelog_slope),
        ("direct vs decomposed log-det", Duration::from_secs(60), two_estimators),
        ("conditional-entropy slope", Duration::from_secs(120), conditional_entropy_slope),
        ("integer pre-log identity", Duration::from_secs(5), integer_identity),
    ];
    let mut all = true;
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let passed = result.passed && elapsed <= *budget;
        all &= passed;
        println!(
            "{} criterion {} ({name}): {} [{:.2}s / {}s]",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
