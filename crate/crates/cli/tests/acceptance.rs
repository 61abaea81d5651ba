//! Acceptance gate: runs every criterion at its stated tolerance and fails
//! the build if any is violated. One line is printed per criterion by the
//! runner; run with `cargo test -p nurn-cli --test acceptance -- --nocapture`
//! to see them.

use nurn_cli::acceptance::run_acceptance;

#[test]
fn acceptance_suite_passes() {
    let dir = tempfile::tempdir().expect("scratch directory");
    let outcomes = run_acceptance(42, dir.path()).expect("suite runs to completion");
    assert_eq!(outcomes.len(), 9, "expected nine criteria");
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("C{} {}: {}", o.id, o.name, o.detail))
        .collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
