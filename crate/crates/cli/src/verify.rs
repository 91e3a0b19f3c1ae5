use std::process::ExitCode;

use clap::Args;
use dsanet_core::verify::{run_suite, Fault, Group};
use dsanet_core::Result;

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Restrict to one group: gradients, attention, pipeline or metrics.
    #[arg(long)]
    only: Option<Group>,
    /// Corrupt a primitive to exercise failure detection.
    #[arg(long, hide = true)]
    inject_fault: Option<Fault>,
}

pub fn run(a: VerifyArgs) -> Result<ExitCode> {
    let outcomes = run_suite(a.only, a.inject_fault);
    for o in &outcomes {
        println!("{} {}/{}: {}", if o.passed { "PASS" } else { "FAIL" }, o.group.name(), o.name, o.detail);
    }
    match outcomes.iter().find(|o| !o.passed) {
        Some(o) => {
            eprintln!("verification failed: {}/{}", o.group.name(), o.name);
            Ok(ExitCode::from(1))
        }
        None => {
            println!("all {} checks passed", outcomes.len());
            Ok(ExitCode::SUCCESS)
        }
    }
}
