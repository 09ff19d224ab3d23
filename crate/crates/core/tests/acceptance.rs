use std::io::Write;

use castflow::verify::{run_suite, SuiteOptions};

#[test]
fn all_acceptance_criteria() {
    let report = run_suite(&SuiteOptions::default());
    // write to the real stdout so the lines show up without --nocapture
    let mut out = std::io::stdout().lock();
    for c in &report.criteria {
        writeln!(out, "{}", c.line()).unwrap();
    }
    writeln!(out, "suite finished in {:.1} s", report.elapsed.as_secs_f64()).unwrap();
    drop(out);
    assert_eq!(report.criteria.len(), 12);
    let failed: Vec<usize> = report.criteria.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
