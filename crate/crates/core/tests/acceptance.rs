//! Acceptance suite: criteria 1-9 on the standard configuration. Prints one
//! PASS/FAIL line per criterion and exits nonzero if any criterion fails.
//! Runs without the libtest harness so the lines are never captured.

use std::process::ExitCode;

use fsi_core::config::RunConfig;
use fsi_core::verify::run_all;

fn main() -> ExitCode {
    let base = RunConfig::default();
    let results = run_all(&base, |r| println!("{}", r.line()));
    let failed: Vec<usize> = results.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failing criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
