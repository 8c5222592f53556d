//! Runs every acceptance criterion and prints one PASS/FAIL line each.

use std::process::ExitCode;

use bpire_repro::*;

fn main() -> ExitCode {
    let mut verdicts = vec![criterion_1(), criterion_2(), criterion_3()];
    for v in &verdicts {
        println!("{}", v.line());
    }
    let shown = verdicts.len();
    match main_runs() {
        Ok(runs) => {
            verdicts.push(criterion_4(&runs));
            verdicts.push(criterion_5(&runs));
        }
        Err(e) => {
            for (id, title) in [(4, "exact-rate trend on reference env A"), (5, "decomposition identity at n = 256")] {
                verdicts.push(Verdict::error(id, title, e.to_string()));
            }
        }
    }
    for v in &verdicts[shown..] {
        println!("{}", v.line());
    }
    for check in [criterion_6, criterion_7, criterion_8, criterion_9, criterion_10] {
        let v = check();
        println!("{}", v.line());
        verdicts.push(v);
    }
    let passed = verdicts.iter().filter(|v| v.passed).count();
    println!("acceptance: {passed} of {} criteria passed", verdicts.len());
    if passed == verdicts.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
