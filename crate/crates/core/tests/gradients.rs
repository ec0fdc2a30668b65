mod common;

use common::grad_suite::{run_case, KINDS};

#[test]
fn every_op_and_loss_matches_central_differences() {
    let mut failures = Vec::new();
    for i in 0..200 {
        let (kind, err) = run_case(i);
        if !(err < 1e-4) {
            failures.push(format!("case {i} ({kind}): relative error {err:e}"));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn suite_visits_every_kind_at_least_five_times() {
    assert!(200 / KINDS.len() >= 5);
}
