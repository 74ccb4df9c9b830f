// SPDX-License-Identifier: Apache-2.0

//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion.
//! Criteria listed in `KNOWN_FAILURES` are expected to fail; any other
//! verdict mismatch fails the test.

use std::io::Write;

use mqcspec::validation::{run_validation, ValidationConfig, KNOWN_FAILURES};

#[test]
fn test_acceptance_criteria() {
    let report = run_validation(&ValidationConfig::default()).expect("validation runs");
    // Written to the process stdout so the verdicts appear without --nocapture.
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", report.to_text()).unwrap();
    for c in &report.criteria {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        match (&c.known_failure, c.passed) {
            (Some(r), false) => writeln!(out, "{verdict} criterion {} {} (known: {r})", c.id, c.name).unwrap(),
            _ => writeln!(out, "{verdict} criterion {} {}", c.id, c.name).unwrap(),
        }
    }
    drop(out);
    assert_eq!(report.criteria.len(), 9);

    let by_id = |id: u8| report.criteria.iter().find(|c| c.id == id).expect("criterion present");
    let mc = by_id(7);
    assert!(
        mc.checks.iter().filter(|k| k.name.contains("window expectation")).all(|k| k.passed),
        "Monte-Carlo estimate disagrees with the exact window expectation"
    );
    let xs = by_id(8);
    assert!(xs.checks.iter().filter(|k| k.name.contains("resonant") || k.name.contains("Doppler")).all(|k| k.passed));

    let unexpected: Vec<String> = report.unexpected().iter().map(|c| c.to_string()).collect();
    assert!(unexpected.is_empty(), "unexpected verdicts: {unexpected:?}");
    assert_eq!(KNOWN_FAILURES.len(), report.criteria.iter().filter(|c| !c.passed).count());
}
