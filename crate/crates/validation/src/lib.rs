//! Runner for named acceptance criteria: each check runs in isolation, a
//! panic or an `Err` counts as a failure, and every outcome is printed as a
//! single `[PASS]`/`[FAIL]` line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {} {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )
    }
}

/// Runs `check`, converting a panic into a failed outcome, and prints its line.
pub fn run(id: &str, title: &str, check: impl FnOnce() -> Result<String, String>) -> Outcome {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(check));
    let (passed, detail) = match result {
        Ok(Ok(detail)) => (true, detail),
        Ok(Err(detail)) => (false, detail),
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            (false, format!("panicked: {msg}"))
        }
    };
    let outcome = Outcome {
        id: id.into(),
        title: title.into(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    };
    println!("{}", outcome.line());
    outcome
}

/// `Ok(detail)` when `cond` holds, otherwise `Err(detail)`.
pub fn verdict(cond: bool, detail: String) -> Result<String, String> {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Reprints every line and returns the ids that failed.
pub fn summarize(outcomes: &[Outcome]) -> Vec<String> {
    println!("acceptance summary:");
    for o in outcomes {
        println!("  {}", o.line());
    }
    outcomes.iter().filter(|o| !o.passed).map(|o| o.id.clone()).collect()
}
