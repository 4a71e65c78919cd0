//! Release gate: one line per criterion, nonzero exit on any gating failure.
//!
//! `JUNTAWALK_ACCEPT_ONLY=1,2,3` restricts the run; the determinism rerun
//! covers whatever was selected.

use std::process::ExitCode;

use juntawalk::verify::{self, *};

fn pinned() {
    assert_eq!((C1_CASES, C1_MAX_K, C1_MAX_DIM), (200, 5, 60));
    assert_eq!((C2_CASES, C2_MAX_K, C2_MAX_DIM, C2_TOL), (50, 5, 40, 1e-10));
    assert_eq!((C3_NETS, C3_FD_STEP, C3_REL_TOL), (20, 1e-4, 1e-4));
    assert_eq!((C4_DIM, C4_K, C4_HIDDEN, C4_SEEDS), (20, 3, 400, 50));
    assert_eq!((C4_EPSILON, C4_RESID_TOL, C4_MIN_FRACTION), (0.1, 1e-9, 0.9));
    assert_eq!((C5_DIM, C5_SEEDS, C5_MSE_TOL, C5_MIN_PASS), (30, 5, 0.05, 4));
    assert_eq!((C6_DIM, C6_SEEDS, C6_BUDGET, C6_ACC, C6_MIN_PASS), (30, 5, 500_000, 0.99, 3));
    assert_eq!(C6_BAND, (0.45, 0.55));
    assert_eq!((C7_ACC, C7_MIN_PASS), (0.9, 3));
    assert_eq!((C8_EXACT_MAX_K, C8_TOL, C8_MC_K, C8_Z), (6, 1e-10, 8, 3.0));
    assert_eq!((C9_DIM, C9_K, C9_FLIP_PROB, C9_BATCHES, C9_Z, C9_EXACT_TOL), (8, 2, 0.5, [4, 16, 64, 256], 3.0, 1e-12));
    assert_eq!((C10_K, C10_FLIP_PROB, C10_T, C10_REPLICAS, C10_CEILING), (2, 0.5, 10_000, 2000, 0.05));
    assert_eq!((C11_DIM, C11_K, C11_FLIP_PROB, C11_SEEDS, C11_FACTOR), (50, 5, 0.9, 100, 20.0));

    let budgets: Vec<(u8, Option<u64>, bool)> = criteria().iter().map(|c| (c.id, c.budget_secs, c.gating)).collect();
    assert_eq!(
        budgets,
        vec![
            (1, Some(10), true),
            (2, Some(10), true),
            (3, Some(30), true),
            (4, Some(120), true),
            (5, Some(300), true),
            (6, Some(1200), true),
            (7, None, false),
            (8, Some(60), true),
            (9, Some(60), true),
            (10, Some(120), true),
            (11, Some(10), true),
        ]
    );
}

fn main() -> ExitCode {
    pinned();
    println!("tolerances pinned");
    let only = std::env::var("JUNTAWALK_ACCEPT_ONLY")
        .ok()
        .map(|s| s.split(',').map(|t| t.trim().parse().expect("criterion number")).collect());
    let opts = SuiteOptions { only, determinism: true };
    let results = verify::run_suite(&opts, |r| println!("{}", r.line()));
    let failed: Vec<String> = results
        .iter()
        .filter(|r| r.gating && !r.pass)
        .map(|r| format!("C{:02}", r.id))
        .collect();
    if failed.is_empty() {
        println!("acceptance: all gating criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: gating failures {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
