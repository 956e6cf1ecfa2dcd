use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use amloda::experiment::{self, ExperimentConfig};
use amloda::Error;

#[derive(Parser, Debug)]
#[command(
    name = "amloda",
    version,
    about = "Occupancy detection on smart-meter traces and billing-preserving adversarial noise",
    after_help = "Any config field can be overridden with its dotted name, e.g. --train.epochs 5 or --data.synth.seed 3."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated penetration coefficients, e.g. 0,1e-4,1e-3.
    #[arg(long, global = true, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    /// Gaussian variance in W^2 for `compare`.
    #[arg(long, global = true)]
    sigma2: Option<f64>,
    /// Tariff JSON file; repeat for several.
    #[arg(long, global = true)]
    tariff: Vec<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when unset.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Take noise gradients against ground-truth labels.
    #[arg(long, global = true)]
    use_true_labels: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Train the attack model and evaluate it on the test split.
    Train,
    /// Apply AMLODA at every epsilon and tabulate the attack metrics.
    Sweep,
    /// AMLODA versus Gaussian noise at matched distortion.
    Compare,
    /// Check that perturbed traces bill the same as the original.
    Bill,
    /// Write the synthetic household to CSV.
    Synth,
    /// Verify analytic gradients against finite differences.
    Gradcheck,
}

const FLAG_NAMES: [&str; 8] = [
    "config",
    "seed",
    "epsilon",
    "sigma2",
    "tariff",
    "out",
    "jobs",
    "use-true-labels",
];

/// Splits `--name value` / `--name=value` pairs that are not regular flags
/// off the argument list; they address config fields.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), Error> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if name.is_empty() || FLAG_NAMES.contains(&name.as_str()) || ["help", "version"].contains(&name.as_str()) {
            rest.push(arg);
            continue;
        }
        let value = match inline.or_else(|| iter.next()) {
            Some(v) => v,
            None => return Err(Error::Config(format!("--{name} needs a value"))),
        };
        overrides.push((name, value));
    }
    Ok((rest, overrides))
}

fn build_config(cli: &Cli, overrides: &[(String, String)]) -> Result<ExperimentConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config = config.with_overrides(overrides.iter().map(|(n, v)| (n.as_str(), v.as_str())))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(eps) = &cli.epsilon {
        config.epsilon = eps.clone();
    }
    if cli.sigma2.is_some() {
        config.sigma2 = cli.sigma2;
    }
    if !cli.tariff.is_empty() {
        config.tariff = cli.tariff.clone();
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    if cli.use_true_labels {
        config.use_true_labels = true;
    }
    config.validate()?;
    Ok(config)
}

fn run(command: Command, config: &ExperimentConfig) -> Result<(), Error> {
    match command {
        Command::Train => {
            let outcome = experiment::cmd_train(config)?;
            println!("checkpoint sha256 {}", outcome.checkpoint_sha256);
            print!("{}", amloda::metrics::render_table(&[("test".into(), outcome.test)]));
        }
        Command::Sweep => {
            let outcome = experiment::cmd_sweep(config)?;
            print!("{}", outcome.table());
            println!("best epsilon {}; degraded {}", outcome.best_epsilon, outcome.degraded);
        }
        Command::Compare => {
            let outcome = experiment::cmd_compare(config)?;
            print!("{}", outcome.table());
            println!(
                "sigma2 {} ({}); total delta W: amloda {}, gaussian {}",
                outcome.sigma2,
                if outcome.sigma2_matched { "matched" } else { "given" },
                outcome.amloda_total_delta_w,
                outcome.gaussian.first().map_or(0.0, |g| g.noise.total_delta_w)
            );
        }
        Command::Bill => {
            for row in experiment::cmd_bill(config)? {
                println!(
                    "{} {}: original {} perturbed {} delta {} invariant {}",
                    row.tariff.display(),
                    row.trace,
                    row.check.bill_original,
                    row.check.bill_perturbed,
                    row.check.delta,
                    row.check.invariant
                );
            }
        }
        Command::Synth => println!("{}", experiment::cmd_synth(config)?.display()),
        Command::Gradcheck => {
            let outcome = experiment::cmd_gradcheck(config)?;
            println!("{} models, max relative error {:e}", outcome.cases.len(), outcome.max_rel_error);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(split) => split,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let result = build_config(&cli, &overrides).and_then(|config| {
        if let Some(jobs) = config.jobs {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        run(cli.command, &config)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
