// Sweep the AMLODA penetration coefficient against a trained attack and
// print accuracy, MCC and AUC per epsilon.
//
// `cargo run --release --example epsilon_sweep`

use amloda::experiment::{cmd_sweep, cmd_train, ExperimentConfig};

pub fn run_example() -> amloda::Result<()> {
    let mut config = ExperimentConfig::default();
    config.out = std::env::temp_dir().join("amloda-example-sweep");
    config.train.hidden_size = 8;
    config.train.epochs = 30;
    config.eval_stride = 30;
    config.epsilon = vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1];

    cmd_train(&config)?;
    let sweep = cmd_sweep(&config)?;
    print!("{}", sweep.table());
    for row in &sweep.rows {
        println!(
            "eps={:<7} flipped {:.4} skipped pairs {} total delta {:+.3e} W",
            row.epsilon, row.constraints.flipped_fraction, row.constraints.skipped_pairs, row.constraints.total_delta_w
        );
    }
    println!("plot data in {}", config.out.join("sweep.csv").display());
    Ok(())
}

fn main() -> amloda::Result<()> {
    run_example()
}
