// Verify backpropagation-through-time against central finite differences
// on randomly drawn micro-models.
//
// `cargo run --example gradcheck`

use amloda::experiment::{run_gradcheck, GradCheckConfig};
use amloda::nn::REL_TOL;

pub fn run_example() -> amloda::Result<()> {
    let outcome = run_gradcheck(&GradCheckConfig::default(), 7)?;
    for (i, case) in outcome.cases.iter().enumerate().take(5) {
        println!(
            "model {i}: H={} layers={} L={} label={} coords={} max rel err {:.2e} at {}",
            case.hidden,
            case.layers,
            case.window_len,
            case.label,
            case.report.coordinates,
            case.report.max_rel_error,
            case.report.worst
        );
    }
    println!(
        "{} models, worst relative error {:.2e} (tolerance {REL_TOL:e}): {}",
        outcome.cases.len(),
        outcome.max_rel_error,
        if outcome.passed { "ok" } else { "FAILED" }
    );
    Ok(())
}

fn main() -> amloda::Result<()> {
    run_example()
}
