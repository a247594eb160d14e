//! Reverse-mode gradients of every estimator's training loss against central
//! finite differences.

mod common;

use std::time::Instant;

use common::{cases, check, MAX_RELATIVE_ERROR};

#[test]
fn gradients_match_finite_differences() {
    let start = Instant::now();
    let cases = cases();
    assert!(cases.len() >= 20);
    let mut failures = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let err = check(case, i as u64);
        println!(
            "{:>10} {:<22} {:?} {:?}: max relative error {err:.2e}",
            case.kind.name(),
            case.name,
            case.outcome,
            case.mode
        );
        if !(err < MAX_RELATIVE_ERROR) {
            failures.push((case.kind, case.name, err));
        }
    }
    assert!(failures.is_empty(), "gradient mismatches: {failures:?}");
    assert!(
        start.elapsed().as_secs() < 60,
        "gradient checks took {:?}",
        start.elapsed()
    );
}
