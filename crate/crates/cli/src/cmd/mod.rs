pub mod dataset;
pub mod evaluate;
pub mod traffic;

use serde::Serialize;

use crate::Context;

/// Prints `summary` as JSON when `--json` is set, otherwise `human`.
pub fn emit<T: Serialize>(ctx: &Context, summary: &T, human: impl FnOnce() -> String) {
    if ctx.json {
        println!(
            "{}",
            serde_json::to_string_pretty(summary).expect("summary serializes")
        );
    } else {
        print!("{}", human());
    }
}
