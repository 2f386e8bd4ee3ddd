//! Acceptance suite: the nine frozen experiments, one PASS/FAIL line each.
//!
//! Run with `cargo test -p llab-core --test acceptance -- --nocapture` to see
//! the lines and the measured constants.

use llab_core::experiments::{Experiment, Outcome, Report};
use std::time::{Duration, Instant};

struct Run {
    outcomes: Vec<Outcome>,
    elapsed: Duration,
}

fn run(e: Experiment) -> Run {
    let start = Instant::now();
    let outcomes = e.configs().iter().map(|c| c.run().unwrap_or_else(|err| panic!("{}: {err}", e.id()))).collect();
    Run { outcomes, elapsed: start.elapsed() }
}

fn fingerprint(r: &Run) -> Vec<String> {
    r.outcomes
        .iter()
        .flat_map(|o| {
            std::iter::once(serde_json::to_string(o).expect("report serialises"))
                .chain(o.tables.iter().map(|t| format!("{}\n{}", t.name, t.body)))
        })
        .collect()
}

fn summary(r: &Run) -> String {
    r.outcomes
        .iter()
        .map(|o| match &o.report {
            Report::LeGrid(g) => {
                let per: Vec<String> = g
                    .summaries
                    .iter()
                    .map(|s| format!("{}:{:.3}", s.lambda, s.fitted_c0.unwrap_or(f64::NAN)))
                    .collect();
                format!("C0={:.3} per-lambda [{}] spread={:.3}", g.shared_c0, per.join(" "), g.c0_spread)
            }
            Report::Derivative(d) => format!("c={:.4} fd={:.2e}", d.fitted_c, d.max_fd_rel_error),
            Report::CriticalCount(c) => {
                format!("violations={} warnings={} n0-failures={}", c.violations, c.warnings, c.unique_root_failures)
            }
            Report::BadSet(b) => format!("C={:.3} violations={} per-delta={:?}", b.fitted_c, b.violations, b.max_ratio_per_delta),
            Report::Bracket(b) => format!(
                "max(lower-upper)={:.2e} min(lower-log lambda)={:.3} integral C={:.3}",
                b.max_excess, b.min_floor_margin, b.fitted_integral_c
            ),
            Report::Polar(p) => format!(
                "recon={:.2e} norm={:.2e} c-decreasing={}",
                p.max_reconstruction_error,
                p.max_norm_rel_error,
                p.c_convergence.iter().all(|c| c.strictly_decreasing)
            ),
            Report::AngleOracle(a) => format!("max error={:.2e}", a.max_error),
            Report::HermanConstant(h) => format!("cells={} failures={}", h.cells.len(), h.failures),
            Report::Submean(s) => format!("submean failures={} min margin={:.3}", s.failures, s.min_margin),
            Report::HermanFloor(f) => format!("flagged={:?} min={:?} floor={:.3}", f.flagged, f.min_le, f.floor),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

const CRITERIA: [&[Experiment]; 8] = [
    &[Experiment::MainAffine],
    &[Experiment::Derivative],
    &[Experiment::CriticalCount],
    &[Experiment::BadSet],
    &[Experiment::Bracket],
    &[Experiment::PolarIdentities],
    &[Experiment::HermanConstant, Experiment::HermanFloor],
    &[Experiment::AngleOracle],
];

#[test]
fn acceptance_suite() {
    let mut failed = Vec::new();
    let mut runs = Vec::new();
    for (i, group) in CRITERIA.iter().enumerate() {
        let mut ok = true;
        for &e in *group {
            let r = run(e);
            let pass = r.outcomes.iter().all(|o| o.passed);
            println!(
                "[{}] criterion {} {:<18} {:>7.1}s  {}",
                if pass { "PASS" } else { "FAIL" },
                i + 1,
                e.id(),
                r.elapsed.as_secs_f64(),
                summary(&r)
            );
            ok &= pass;
            runs.push((e, r));
        }
        if !ok {
            failed.push(i + 1);
        }
    }

    let start = Instant::now();
    let mismatched: Vec<&str> = runs
        .iter()
        .filter(|(e, first)| fingerprint(first) != fingerprint(&run(*e)))
        .map(|(e, _)| e.id())
        .collect();
    println!(
        "[{}] criterion 9 determinism        {:>7.1}s  mismatched={:?}",
        if mismatched.is_empty() { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        mismatched
    );
    if !mismatched.is_empty() {
        failed.push(9);
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
