// Bill a perturbed trace under time-of-use and peak-load tariffs and check
// the bills match the original.
//
// `cargo run --example billing_invariance`

use amloda::billing::{billing_invariance_check, rate_from_kwh_price, PlpSchedule, Tariff, TouFrame, TouSchedule};
use amloda::data::{synth_household, SynthConfig};
use amloda::gaussian::{gaussian_perturb, GaussianConfig};
use amloda::perturb::{apply_paired_perturbation, NoiseSeries};

pub fn run_example() -> amloda::Result<()> {
    let (trace, _) = synth_household(&SynthConfig::default())?;

    // Alternating +/-20 W pair noise stands in for model-derived noise.
    let mut noise = NoiseSeries::zeros(trace.len(), 2);
    for (k, t) in (0..trace.len() - 1).step_by(2).enumerate() {
        noise.values[t] = if k % 3 == 0 { -20.0 } else { 20.0 };
    }
    let paired = apply_paired_perturbation(&trace, &noise)?;
    let gaussian = gaussian_perturb(&trace, &GaussianConfig { variance: 400.0, seed: 1 })?;

    let off_peak = rate_from_kwh_price(0.18, trace.sample_period);
    let peak = rate_from_kwh_price(0.32, trace.sample_period);
    let tou = Tariff::Tou(TouSchedule {
        frames: vec![
            TouFrame { len: 7 * 3600, rate: off_peak },
            TouFrame { len: 13 * 3600, rate: peak },
            TouFrame { len: 4 * 3600, rate: off_peak },
        ],
    });
    let plp = Tariff::Plp(PlpSchedule {
        frame_len: 60,
        thresholds: vec![12_000.0, 30_000.0],
        rates: vec![off_peak, peak, 2.0 * peak],
    });

    for (name, tariff) in [("tou", &tou), ("plp/60s", &plp)] {
        for (label, values) in [("amloda", &paired.values), ("gaussian", &gaussian.values)] {
            let check = billing_invariance_check(&trace, values, tariff, false)?;
            println!(
                "{name:<8} {label:<9} original {:.6} perturbed {:.6} delta {:+.3e} invariant {}",
                check.bill_original, check.bill_perturbed, check.delta, check.invariant
            );
        }
    }
    Ok(())
}

fn main() -> amloda::Result<()> {
    run_example()
}
