//! Config-driven workflows: train the attack, sweep the defence strength,
//! compare against Gaussian noise, check bills, emit data and verify
//! gradients. Every command writes plain CSV/JSON into `config.out`.

mod config;

pub use config::{DataConfig, ExperimentConfig, GradCheckConfig};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::billing::{billing_invariance_check, BillingCheck, Tariff};
use crate::data::{
    clean_missing, load_eco_csv, make_windows, normalize, split_train_test, synth_household, write_trace_csv,
    NormParams, OccupancyLabels, PowerTrace, WindowedDataset,
};
use crate::error::{Error, Result};
use crate::gaussian::{gaussian_perturb, gaussian_report, match_distortion, GaussianConfig, GaussianReport};
use crate::metrics::{render_table, EvalReport};
use crate::nn::{grad_check, train_from_scratch, Checkpoint, GradCheckReport, LstmModel, ModelSpec};
use crate::perturb::{generate_with_baseline, score_windows, window_labels, ConstraintReport, ObliviousRun};

pub const ORIGINAL_FILE: &str = "original.csv";

/// A labelled trace ready for the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trace: PowerTrace,
    pub labels: OccupancyLabels,
}

/// Loads the ECO CSV named by the config, or synthesizes a household.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let Some(path) = &config.data.eco_csv else {
        let (trace, labels) = synth_household(&config.data.synth)?;
        return Ok(Dataset { trace, labels });
    };
    if !path.exists() {
        return Err(Error::config(format!("data file not found: {}", path.display())));
    }
    let raw = load_eco_csv(path)?;
    let raw_labels = raw.labels.clone().ok_or(Error::MissingLabels)?;
    let (trace, report) = clean_missing(&raw)?;
    let labels = report.apply_to_labels(&raw_labels)?;
    Ok(Dataset { trace, labels })
}

/// Training windows and the held-out tail of the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub norm: NormParams,
    pub train_set: WindowedDataset,
    /// First sample of the test segment; a multiple of the pair period.
    pub test_start: usize,
    pub test_trace: PowerTrace,
    pub test_labels: OccupancyLabels,
}

/// Normalizes over the whole trace, cuts training windows from the first
/// `train_fraction` of the windows and keeps everything after the last
/// training window as the test segment.
pub fn split_dataset(config: &ExperimentConfig, data: &Dataset) -> Result<Split> {
    config.validate()?;
    let (normalized, norm) = normalize(&data.trace);
    let windows = make_windows(&normalized, &data.labels, config.window_len, config.train_stride)?;
    let (train_set, _) = split_train_test(windows, config.train_fraction)?;
    let last_end = train_set.windows.last().map_or(0, |w| w.start + config.window_len);
    let test_start = last_end.div_ceil(config.pair_period) * config.pair_period;
    if test_start + config.window_len > data.trace.len() {
        return Err(Error::config(format!(
            "test segment after sample {test_start} is shorter than one window"
        )));
    }
    Ok(Split {
        norm,
        train_set,
        test_start,
        test_trace: data.trace.slice(test_start, data.trace.len())?,
        test_labels: data.labels.slice(test_start, data.labels.len()),
    })
}

/// Scores every evaluation window of `values` and reports all metrics.
pub fn evaluate(
    model: &LstmModel,
    config: &ExperimentConfig,
    norm: &NormParams,
    values: &[f64],
    labels: &OccupancyLabels,
) -> Result<(Vec<f64>, EvalReport)> {
    let scores = score_windows(model, values, norm, config.window_len, config.eval_stride)?;
    let report = EvalReport::from_scores(&scores, &window_labels(labels, config.window_len, config.eval_stride))?;
    Ok((scores, report))
}

fn ensure_out(config: &ExperimentConfig) -> Result<&Path> {
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    Ok(&config.out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// The full trace with the test segment replaced by `test_values`.
fn splice(data: &Dataset, split: &Split, test_values: &[f64]) -> Result<PowerTrace> {
    let mut values = data.trace.values[..split.test_start].to_vec();
    values.extend_from_slice(test_values);
    data.trace.with_values(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub checkpoint_sha256: String,
    pub train_windows: usize,
    pub test_start: usize,
    pub final_loss: Option<f64>,
    pub test: EvalReport,
}

/// Trains the attack model and evaluates it on the test segment.
///
/// Writes `model.json`, `loss_history.csv` and `train_report.json`.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    let data = load_dataset(config)?;
    let split = split_dataset(config, &data)?;
    let train_config = config.train_config();
    let (model, history) = train_from_scratch(&split.train_set, &train_config)?;
    let (_, test) = evaluate(&model, config, &split.norm, &split.test_trace.values, &split.test_labels)?;

    let out = ensure_out(config)?;
    let checkpoint = Checkpoint::new(&model, &train_config, config.window_len, split.norm);
    let json = checkpoint.to_json()?;
    let model_path = config.model_path();
    write_text(&model_path, &json)?;
    let mut csv = String::from("epoch,loss\n");
    for (epoch, loss) in history.iter().enumerate() {
        let _ = writeln!(csv, "{epoch},{loss}");
    }
    write_text(&out.join("loss_history.csv"), &csv)?;
    let outcome = TrainOutcome {
        checkpoint_sha256: sha256_hex(json.as_bytes()),
        train_windows: split.train_set.len(),
        test_start: split.test_start,
        final_loss: history.last().copied(),
        test,
    };
    write_json(&out.join("train_report.json"), &outcome)?;
    Ok(outcome)
}

/// Loads the checkpoint named by the config and checks it matches the
/// configured window length.
pub fn load_model(config: &ExperimentConfig) -> Result<(LstmModel, NormParams)> {
    let path = config.model_path();
    if !path.exists() {
        return Err(Error::config(format!(
            "checkpoint not found: {} (run `train` first)",
            path.display()
        )));
    }
    let checkpoint = Checkpoint::load(&path)?;
    if checkpoint.window_len != config.window_len {
        return Err(Error::config(format!(
            "checkpoint window length {} differs from configured {}",
            checkpoint.window_len, config.window_len
        )));
    }
    Ok((checkpoint.model()?, checkpoint.norm))
}

/// Everything the defence commands share: data, split and attack model.
struct Session {
    data: Dataset,
    split: Split,
    model: LstmModel,
    norm: NormParams,
    clean_scores: Vec<f64>,
    clean: EvalReport,
}

impl Session {
    fn open(config: &ExperimentConfig) -> Result<Self> {
        let data = load_dataset(config)?;
        let split = split_dataset(config, &data)?;
        let (model, norm) = load_model(config)?;
        let (clean_scores, clean) = evaluate(&model, config, &norm, &split.test_trace.values, &split.test_labels)?;
        Ok(Self {
            data,
            split,
            model,
            norm,
            clean_scores,
            clean,
        })
    }

    fn amloda(&self, config: &ExperimentConfig, epsilon: f64) -> Result<(ObliviousRun, EvalReport)> {
        let run = generate_with_baseline(
            &self.model,
            &self.split.test_trace,
            &self.split.test_labels,
            &self.norm,
            &config.perturb_config(epsilon),
            &self.clean_scores,
        )?;
        let labels = window_labels(&self.split.test_labels, config.window_len, config.eval_stride);
        let report = EvalReport::from_scores(&run.perturbed_scores, &labels)?;
        Ok((run, report))
    }

    fn write_original(&self, out: &Path) -> Result<()> {
        write_trace_csv(out.join(ORIGINAL_FILE), &self.data.trace, Some(&self.data.labels))
    }

    fn write_perturbed(&self, path: &Path, test_values: &[f64]) -> Result<()> {
        write_trace_csv(path, &splice(&self.data, &self.split, test_values)?, None)
    }
}

fn amloda_file(epsilon: f64) -> String {
    format!("amloda_eps_{epsilon}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub report: EvalReport,
    pub constraints: ConstraintReport,
    /// Mean squared per-sample change in W^2.
    pub distortion_w2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Epsilon with the lowest attack accuracy.
    pub best_epsilon: f64,
    /// Accuracy at the largest epsilon does not exceed accuracy at epsilon 0.
    pub degraded: bool,
}

impl SweepOutcome {
    pub fn row(&self, epsilon: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.epsilon == epsilon)
    }

    pub fn to_csv(&self) -> String {
        let mut csv = String::from("epsilon,accuracy,mcc,auc\n");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        for r in &self.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                r.epsilon,
                opt(r.report.accuracy),
                r.report.mcc,
                opt(r.report.auc)
            );
        }
        csv
    }

    pub fn table(&self) -> String {
        let rows: Vec<(String, EvalReport)> = self
            .rows
            .iter()
            .map(|r| (format!("eps={}", r.epsilon), r.report.clone()))
            .collect();
        render_table(&rows)
    }
}

/// Runs AMLODA at every configured epsilon against the trained model.
///
/// Writes `sweep.csv`, `sweep.json`, `original.csv` and one
/// `amloda_eps_<epsilon>.csv` per nonzero epsilon.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    config.validate()?;
    if config.epsilon.is_empty() {
        return Err(Error::config("epsilon list is empty"));
    }
    let session = Session::open(config)?;
    let runs = config
        .epsilon
        .par_iter()
        .map(|&e| session.amloda(config, e))
        .collect::<Result<Vec<_>>>()?;

    let out = ensure_out(config)?;
    session.write_original(out)?;
    let mut rows = Vec::with_capacity(runs.len());
    for (&epsilon, (run, report)) in config.epsilon.iter().zip(runs) {
        if epsilon > 0.0 {
            session.write_perturbed(&out.join(amloda_file(epsilon)), &run.perturbed.values)?;
        }
        rows.push(SweepRow {
            epsilon,
            distortion_w2: match_distortion(&run.perturbed, &session.split.test_trace)?,
            report,
            constraints: run.report,
        });
    }
    let accuracy = |r: &SweepRow| r.report.accuracy.unwrap_or(f64::NAN);
    let best_epsilon = rows
        .iter()
        .min_by(|a, b| accuracy(a).total_cmp(&accuracy(b)))
        .map_or(0.0, |r| r.epsilon);
    let largest = rows.iter().max_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    let degraded = match (largest, rows.iter().find(|r| r.epsilon == 0.0)) {
        (Some(l), Some(z)) => accuracy(l) <= accuracy(z),
        (Some(l), None) => accuracy(l) <= session.clean.accuracy.unwrap_or(f64::NAN),
        _ => true,
    };
    let outcome = SweepOutcome {
        rows,
        best_epsilon,
        degraded,
    };
    write_text(&out.join("sweep.csv"), &outcome.to_csv())?;
    write_json(&out.join("sweep.json"), &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianRow {
    pub report: EvalReport,
    pub noise: GaussianReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareOutcome {
    pub epsilon: f64,
    pub sigma2: f64,
    /// Whether `sigma2` was derived from the AMLODA distortion.
    pub sigma2_matched: bool,
    pub clean: EvalReport,
    pub amloda: EvalReport,
    pub amloda_total_delta_w: f64,
    pub gaussian: Vec<GaussianRow>,
    pub gaussian_median_auc: Option<f64>,
    /// AMLODA AUC is at most the median Gaussian AUC.
    pub amloda_harder_to_detect: Option<bool>,
}

impl CompareOutcome {
    pub fn table(&self) -> String {
        let mut rows = vec![
            ("clean".to_string(), self.clean.clone()),
            (format!("amloda eps={}", self.epsilon), self.amloda.clone()),
        ];
        rows.extend(
            self.gaussian
                .iter()
                .map(|g| (format!("gaussian seed={}", g.noise.seed), g.report.clone())),
        );
        render_table(&rows)
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    })
}

/// AMLODA against Gaussian noise of equal mean squared distortion, one
/// Gaussian run per seed `seed, seed + 1, ...`.
///
/// Writes `compare.json`, `original.csv`, the AMLODA trace and
/// `gaussian_seed_<seed>.csv` for every Gaussian run.
pub fn cmd_compare(config: &ExperimentConfig) -> Result<CompareOutcome> {
    config.validate()?;
    let epsilon = match config.compare_epsilon {
        Some(e) => e,
        None => config.epsilon.iter().copied().fold(0.0, f64::max),
    };
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::config("compare needs a positive epsilon"));
    }
    let session = Session::open(config)?;
    let (run, amloda) = session.amloda(config, epsilon)?;
    let (sigma2, sigma2_matched) = match config.sigma2 {
        Some(s) => (s, false),
        None => {
            let s = match_distortion(&run.perturbed, &session.split.test_trace)?;
            if s <= 0.0 {
                return Err(Error::config(
                    "AMLODA left the trace unchanged; set sigma2 explicitly",
                ));
            }
            (s, true)
        }
    };
    let labels = window_labels(&session.split.test_labels, config.window_len, config.eval_stride);
    let gaussian_runs = (0..config.gaussian_seeds as u64)
        .into_par_iter()
        .map(|k| {
            let gcfg = GaussianConfig {
                variance: sigma2,
                seed: config.seed + k,
            };
            let perturbed = gaussian_perturb(&session.split.test_trace, &gcfg)?;
            let scores = score_windows(
                &session.model,
                &perturbed.values,
                &session.norm,
                config.window_len,
                config.eval_stride,
            )?;
            let row = GaussianRow {
                report: EvalReport::from_scores(&scores, &labels)?,
                noise: gaussian_report(&session.split.test_trace, &perturbed, &gcfg),
            };
            Ok((row, perturbed.values))
        })
        .collect::<Result<Vec<_>>>()?;

    let out = ensure_out(config)?;
    session.write_original(out)?;
    session.write_perturbed(&out.join(amloda_file(epsilon)), &run.perturbed.values)?;
    let mut gaussian = Vec::with_capacity(gaussian_runs.len());
    for (row, values) in gaussian_runs {
        session.write_perturbed(&out.join(format!("gaussian_seed_{}.csv", row.noise.seed)), &values)?;
        gaussian.push(row);
    }
    let mut aucs: Vec<f64> = gaussian.iter().filter_map(|g| g.report.auc).collect();
    let gaussian_median_auc = if aucs.len() == gaussian.len() {
        median(&mut aucs)
    } else {
        None
    };
    let amloda_harder_to_detect = amloda.auc.zip(gaussian_median_auc).map(|(a, g)| a <= g);
    let outcome = CompareOutcome {
        epsilon,
        sigma2,
        sigma2_matched,
        clean: session.clean,
        amloda,
        amloda_total_delta_w: run.report.total_delta_w,
        gaussian,
        gaussian_median_auc,
        amloda_harder_to_detect,
    };
    write_json(&out.join("compare.json"), &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BillRow {
    pub tariff: PathBuf,
    pub trace: String,
    #[serde(flatten)]
    pub check: BillingCheck,
}

fn read_trace(path: &Path) -> Result<PowerTrace> {
    Ok(clean_missing(&load_eco_csv(path)?)?.0)
}

/// Bills `original.csv` and every perturbed trace in the output directory
/// under each configured tariff. Writes `bills.json`.
pub fn cmd_bill(config: &ExperimentConfig) -> Result<Vec<BillRow>> {
    if config.tariff.is_empty() {
        return Err(Error::config("no tariff given (use --tariff PATH)"));
    }
    let original_path = config.out.join(ORIGINAL_FILE);
    if !original_path.exists() {
        return Err(Error::config(format!(
            "{} not found (run `sweep` or `compare` first)",
            original_path.display()
        )));
    }
    let original = read_trace(&original_path)?;
    let mut traces: Vec<String> = fs::read_dir(&config.out)
        .map_err(|e| Error::io(&config.out, e))?
        .filter_map(|entry| entry.ok()?.file_name().into_string().ok())
        .filter(|name| {
            name.ends_with(".csv") && (name.starts_with("amloda_eps_") || name.starts_with("gaussian_seed_"))
        })
        .collect();
    traces.sort();

    let mut rows = Vec::new();
    for tariff_path in &config.tariff {
        if !tariff_path.exists() {
            return Err(Error::config(format!("tariff file not found: {}", tariff_path.display())));
        }
        let tariff = Tariff::load(tariff_path)?;
        for name in &traces {
            let perturbed = read_trace(&config.out.join(name))?;
            rows.push(BillRow {
                tariff: tariff_path.clone(),
                trace: name.clone(),
                check: billing_invariance_check(&original, &perturbed.values, &tariff, config.pad_zero)?,
            });
        }
    }
    write_json(&config.out.join("bills.json"), &rows)?;
    Ok(rows)
}

/// Writes the configured synthetic household to `<out>/synth.csv`.
pub fn cmd_synth(config: &ExperimentConfig) -> Result<PathBuf> {
    let (trace, labels) = synth_household(&config.data.synth)?;
    let path = ensure_out(config)?.join("synth.csv");
    write_trace_csv(&path, &trace, Some(&labels))?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckCase {
    pub hidden: usize,
    pub layers: usize,
    pub window_len: usize,
    pub label: u8,
    pub report: GradCheckReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckOutcome {
    pub cases: Vec<GradCheckCase>,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Finite-difference verification on randomly drawn micro-models.
pub fn run_gradcheck(settings: &GradCheckConfig, seed: u64) -> Result<GradCheckOutcome> {
    if settings.models == 0 || settings.max_hidden == 0 || settings.max_window < 2 {
        return Err(Error::config("gradcheck needs models >= 1, max_hidden >= 1, max_window >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(settings.models);
    for _ in 0..settings.models {
        let hidden = rng.random_range(1..=settings.max_hidden);
        let layers = rng.random_range(1..=2);
        let window_len = rng.random_range(2..=settings.max_window);
        let label = rng.random_range(0..=1u8);
        let model = LstmModel::init(ModelSpec::stacked(hidden, layers), rng.random())?;
        let window: Vec<f64> = (0..window_len).map(|_| rng.random()).collect();
        cases.push(GradCheckCase {
            hidden,
            layers,
            window_len,
            label,
            report: grad_check(&model, &window, label)?,
        });
    }
    let max_rel_error = cases.iter().map(|c| c.report.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckOutcome {
        passed: cases.iter().all(|c| c.report.passed()),
        cases,
        max_rel_error,
    })
}

/// Runs [`run_gradcheck`], writes `gradcheck.json` and fails with a
/// numeric error when any case exceeds the tolerance.
pub fn cmd_gradcheck(config: &ExperimentConfig) -> Result<GradCheckOutcome> {
    let outcome = run_gradcheck(&config.gradcheck, config.seed)?;
    write_json(&ensure_out(config)?.join("gradcheck.json"), &outcome)?;
    if !outcome.passed {
        let worst = outcome
            .cases
            .iter()
            .max_by(|a, b| a.report.max_rel_error.total_cmp(&b.report.max_rel_error))
            .map(|c| c.report.worst.clone())
            .unwrap_or_default();
        return Err(Error::GradCheck {
            max_rel_error: outcome.max_rel_error,
            worst,
        });
    }
    Ok(outcome)
}
