//! The fourteen acceptance criteria over the default matrix: four model
//! surfaces, 50 points each, seed 7. Runs without the libtest harness so
//! every criterion line is printed, passing or not.

use std::process::ExitCode;

use qclab::verify::accept::{run_acceptance, AcceptOptions};

fn main() -> ExitCode {
    let report = match run_acceptance(&AcceptOptions::default()) {
        Ok(r) => r,
        Err(e) => {
            println!("acceptance matrix failed to run: {e}");
            return ExitCode::FAILURE;
        }
    };
    for c in &report.criteria {
        println!("{}", c.line());
    }
    let mut ok = true;
    let numbers: Vec<usize> = report.criteria.iter().map(|c| c.number).collect();
    if numbers != (1..=14).collect::<Vec<_>>() {
        println!("expected criteria 1..=14, got {numbers:?}");
        ok = false;
    }
    for s in &report.suites {
        if !s.errors.is_empty() {
            println!("{}: pipeline errors {:?}", s.surface, s.errors);
            ok = false;
        }
    }
    ok &= report.criteria.iter().all(|c| c.pass);
    println!("acceptance: {}", if ok { "PASS" } else { "FAIL" });
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
