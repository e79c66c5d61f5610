//! Runs every acceptance criterion and prints one PASS/FAIL line for each.
//! Numeric arguments select criteria: `cargo test --test acceptance -- 7 8`.

use std::process::ExitCode;

use ambiclt_core::acceptance::run_suite;

fn main() -> ExitCode {
    let ids: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let results = run_suite(&ids);
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
