use serde::Serialize;

use super::lstm::{backward, bce_loss, lstm_forward, GradientBundle};
use super::LstmModel;
use crate::error::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Relative tolerance used by the verification harness.
pub const REL_TOL: f64 = 1e-4;
/// Absolute differences below this count as agreement.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    /// Worst `|a - n| / max(|a|, |n|, ABS_FLOOR / REL_TOL)` over all coordinates.
    pub max_rel_error: f64,
    /// Name of the worst coordinate, e.g. `input[3]` or `layer0.cell.bias[1]`.
    pub worst: String,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < REL_TOL
    }
}

fn loss(model: &LstmModel, window: &[f64], label: u8) -> Result<f64> {
    Ok(bce_loss(lstm_forward(model, window)?.0, label))
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(ABS_FLOOR / REL_TOL)
}

/// Compares `analytic` against central differences of the loss for every
/// parameter and every input value.
pub fn compare_gradients(
    model: &LstmModel,
    window: &[f64],
    label: u8,
    analytic: &GradientBundle,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let mut record = |name: &dyn Fn() -> String, a: f64, n: f64| {
        report.coordinates += 1;
        let e = rel_error(a, n);
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = e;
            report.worst = name();
            report.analytic = a;
            report.numeric = n;
        }
    };

    let mut probe = model.clone();
    for i in 0..model.num_params() {
        let orig = model.params()[i];
        probe.params_mut()[i] = orig + FD_STEP;
        let up = loss(&probe, window, label)?;
        probe.params_mut()[i] = orig - FD_STEP;
        let down = loss(&probe, window, label)?;
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        record(&|| model.layout().describe(i), analytic.param_grads[i], numeric);
    }

    let mut x = window.to_vec();
    for t in 0..window.len() {
        x[t] = window[t] + FD_STEP;
        let up = loss(model, &x, label)?;
        x[t] = window[t] - FD_STEP;
        let down = loss(model, &x, label)?;
        x[t] = window[t];
        let numeric = (up - down) / (2.0 * FD_STEP);
        record(&|| format!("input[{t}]"), analytic.input_grad[t], numeric);
    }
    Ok(report)
}

/// Runs backpropagation and checks it against finite differences.
pub fn grad_check(model: &LstmModel, window: &[f64], label: u8) -> Result<GradCheckReport> {
    let (_, cache) = lstm_forward(model, window)?;
    let analytic = backward(model, &cache, window, label)?;
    compare_gradients(model, window, label, &analytic)
}
