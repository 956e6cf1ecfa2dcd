// Confusion-matrix metrics, MCC and ROC-AUC for a handful of scores.
//
// `cargo run --example evaluation_metrics`

use amloda::metrics::{render_table, EvalReport};

pub fn run_example() -> amloda::Result<()> {
    let labels = [1, 1, 1, 0, 0, 0, 1, 0];
    let sharp = [0.97, 0.88, 0.71, 0.12, 0.30, 0.05, 0.64, 0.41];
    let noisy = [0.62, 0.48, 0.55, 0.51, 0.47, 0.58, 0.49, 0.52];
    let constant = [0.9; 8];

    let rows = vec![
        ("sharp".to_string(), EvalReport::from_scores(&sharp, &labels)?),
        ("noisy".to_string(), EvalReport::from_scores(&noisy, &labels)?),
        ("constant".to_string(), EvalReport::from_scores(&constant, &labels)?),
    ];
    print!("{}", render_table(&rows));
    for (name, report) in &rows {
        println!("{name}: {}", serde_json::to_string(report)?);
    }
    Ok(())
}

fn main() -> amloda::Result<()> {
    run_example()
}
