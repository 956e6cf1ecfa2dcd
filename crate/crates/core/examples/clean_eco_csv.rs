// Load a trace in the canonical ECO-style CSV, drop missing readings and
// carry the removals over to the occupancy labels.
//
// `cargo run --example clean_eco_csv`

use amloda::data::{clean_missing, load_eco_csv};
use amloda::Error;

const SAMPLE: &str = "\
timestamp,power_w,occupied
2012-11-01T00:00:00Z,120.5,0
2012-11-01T00:00:01Z,-1,0
2012-11-01T00:00:02Z,118.0,0
2012-11-01T00:00:05Z,640.2,1
2012-11-01T00:00:06Z,,1
2012-11-01T00:00:07Z,655.9,1
";

pub fn run_example() -> amloda::Result<()> {
    let path = std::env::temp_dir().join("amloda-clean-example.csv");
    std::fs::write(&path, SAMPLE).map_err(|e| Error::Io { path: path.clone(), source: e })?;

    let raw = load_eco_csv(&path)?;
    println!(
        "read {} slots at {} s (gaps filled as missing): {:?}",
        raw.values.len(),
        raw.sample_period,
        raw.values
    );
    let (trace, report) = clean_missing(&raw)?;
    let labels = report.apply_to_labels(raw.labels.as_deref().unwrap_or_default())?;
    println!("removed indices {}", serde_json::to_string(&report)?);
    println!("clean trace {:?}", trace.values);
    println!("labels      {:?}", labels.values);
    Ok(())
}

fn main() -> amloda::Result<()> {
    run_example()
}
