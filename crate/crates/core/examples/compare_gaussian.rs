// AMLODA against additive Gaussian noise of the same mean squared
// distortion. Only the paired scheme keeps the total consumption.
//
// `cargo run --release --example compare_gaussian`

use amloda::experiment::{cmd_compare, cmd_train, ExperimentConfig};

pub fn run_example() -> amloda::Result<()> {
    let mut config = ExperimentConfig::default();
    config.out = std::env::temp_dir().join("amloda-example-compare");
    config.train.hidden_size = 8;
    config.train.epochs = 30;
    config.eval_stride = 30;
    config.compare_epsilon = Some(1e-2);
    config.gaussian_seeds = 3;

    cmd_train(&config)?;
    let outcome = cmd_compare(&config)?;
    print!("{}", outcome.table());
    println!("matched variance {:.3} W^2", outcome.sigma2);
    println!("AMLODA total delta   {:+.3e} W", outcome.amloda_total_delta_w);
    for g in &outcome.gaussian {
        println!(
            "Gaussian seed {} total delta {:+.3} W ({} readings floored at 0)",
            g.noise.seed, g.noise.total_delta_w, g.noise.floored_count
        );
    }
    Ok(())
}

fn main() -> amloda::Result<()> {
    run_example()
}
