// Train the LSTM occupancy attack on the synthetic household and report
// its metrics on the held-out tail of the day.
//
// `cargo run --release --example train_attack`

use amloda::experiment::{cmd_train, ExperimentConfig};
use amloda::metrics::render_table;

pub fn run_example() -> amloda::Result<()> {
    let mut config = ExperimentConfig::default();
    config.out = std::env::temp_dir().join("amloda-example-train");
    // A narrower, shorter run than the defaults; evaluate every 30th window.
    config.train.hidden_size = 8;
    config.train.epochs = 30;
    config.eval_stride = 30;

    let outcome = cmd_train(&config)?;
    println!(
        "{} training windows, test segment starts at sample {}",
        outcome.train_windows, outcome.test_start
    );
    println!("final training loss {:.4}", outcome.final_loss.unwrap_or(f64::NAN));
    println!("checkpoint sha256 {}", outcome.checkpoint_sha256);
    print!("{}", render_table(&[("test".to_string(), outcome.test)]));
    Ok(())
}

fn main() -> amloda::Result<()> {
    run_example()
}
