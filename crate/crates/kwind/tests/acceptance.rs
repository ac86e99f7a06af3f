//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits 0 after printing every line; set KWIND_ACCEPTANCE_STRICT=1 to exit
//! nonzero when any criterion fails. KWIND_ACCEPTANCE_ONLY=1,5,9 restricts the
//! run.

use kwind::selftest::{run_selftest, SelftestOptions, CRITERIA};

fn main() {
    // libtest flags such as --nocapture may be passed through; ignore them.
    let dir = tempfile::tempdir().expect("scratch directory");
    let mut opts = SelftestOptions::new(dir.path().to_path_buf());
    if let Ok(list) = std::env::var("KWIND_ACCEPTANCE_ONLY") {
        opts.only = list
            .split(',')
            .filter_map(|s| s.trim().parse().ok())
            .filter(|id| (1..=CRITERIA).contains(id))
            .collect();
    }
    println!("acceptance: {} criteria", if opts.only.is_empty() { CRITERIA } else { opts.only.len() });
    let report = match run_selftest(&opts, |o| println!("{}", o.line())) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("acceptance: {e}");
            std::process::exit(3);
        }
    };
    println!(
        "acceptance: {}/{} passed in {:.1} s",
        report.passed(),
        report.outcomes.len(),
        report.seconds
    );
    let strict = std::env::var("KWIND_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !report.all_passed() {
        std::process::exit(1);
    }
}
