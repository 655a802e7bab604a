//! The thirteen acceptance criteria, one line each.

use std::process::ExitCode;

fn main() -> ExitCode {
    let results = rls_exp::suites::acceptance();
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
