// Generate the deterministic synthetic household and summarize it.
//
// `cargo run --example synth_household`

use amloda::data::{synth_household, write_trace_csv, SynthConfig};

pub fn run_example() -> amloda::Result<()> {
    let config = SynthConfig::default();
    let (trace, labels) = synth_household(&config)?;

    let occupied = labels.values.iter().filter(|l| **l == 1).count();
    let mean = |want: u8| {
        let (sum, n) = trace
            .values
            .iter()
            .zip(&labels.values)
            .filter(|(_, l)| **l == want)
            .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
        sum / n.max(1) as f64
    };
    println!("{} samples at {} s, {occupied} occupied", trace.len(), trace.sample_period);
    println!("mean power: vacant {:.1} W, occupied {:.1} W", mean(0), mean(1));
    println!("daily energy {:.3} kWh", trace.total() * trace.sample_period / 3.6e6);

    let path = std::env::temp_dir().join("amloda-synth-household.csv");
    write_trace_csv(&path, &trace, Some(&labels))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> amloda::Result<()> {
    run_example()
}
