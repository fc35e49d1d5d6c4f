//! Gain/tilt coordinate descent for a flat accumulated GSNR.

use serde::{Deserialize, Serialize};

use super::calibrate::CalibrationResult;
use super::MonitorError;
use crate::netmodel::{ChannelGrid, EdfaSetting, OpticalLink};
use crate::qot::{link_gsnr, QotError};
use crate::units::lin_to_db;

pub const LATTICE_DB: f64 = 0.1;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;
pub const DEFAULT_POWER_HEADROOM_DB: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Weight of the mean-GSNR drop penalty.
    pub lambda: f64,
    pub max_iterations: usize,
    /// Moves must keep every amplifier's modelled total output this far
    /// below its limit.
    pub power_headroom_db: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            power_headroom_db: DEFAULT_POWER_HEADROOM_DB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainTiltSetting {
    pub settings: Vec<EdfaSetting>,
    /// max − min accumulated GSNR at the final amplifier, dB.
    pub flatness_db: f64,
    pub mean_gsnr_db: f64,
    pub objective: f64,
    pub baseline_flatness_db: f64,
    pub baseline_mean_gsnr_db: f64,
    /// Objective after each accepted move, starting with the baseline.
    pub trace: Vec<f64>,
}

/// Flatness and mean of the accumulated GSNR (dB) at the last amplifier.
pub fn final_gsnr_stats(link: &OpticalLink, grid: &ChannelGrid, launch_dbm: &[f64]) -> Result<(f64, f64), QotError> {
    let r = link_gsnr(link, grid, launch_dbm)?;
    let g = r.per_edfa.last().map(|e| &e.gsnr).unwrap_or(&r.gsnr);
    let db: Vec<f64> = g.iter().map(|&x| lin_to_db(x)).collect();
    let max = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = db.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((max - min, db.iter().sum::<f64>() / db.len() as f64))
}

/// Lattice points of `[lo, hi]`, as integer multiples of the lattice step.
fn lattice(lo: f64, hi: f64) -> Option<(i64, i64)> {
    let a = (lo / LATTICE_DB - 1e-9).ceil() as i64;
    let b = (hi / LATTICE_DB + 1e-9).floor() as i64;
    (a <= b).then_some((a, b))
}

/// Coordinate descent over per-amplifier gain and tilt on a 0.1 dB lattice,
/// evaluated on the calibrated model of `design`.
pub fn optimize_gain_tilt(
    design: &OpticalLink,
    calib: &CalibrationResult,
    grid: &ChannelGrid,
    launch_dbm: &[f64],
    opts: OptimizeOptions,
) -> Result<GainTiltSetting, MonitorError> {
    for a in design.edfas() {
        if calib.edfa(&a.id).is_none() {
            return Err(MonitorError::InconsistentPriors(format!("no calibration for {}", a.id)));
        }
    }
    let model = calib.apply(design);
    let units: Vec<_> = model.edfas().cloned().collect();
    // coordinates: (gain, tilt) per amplifier as lattice indices
    let mut bounds = Vec::new();
    let mut x = Vec::new();
    for a in &units {
        for (range, v, what) in [(a.gain_range_db, a.gain_db, "gain"), (a.tilt_range_db, a.tilt_db, "tilt")] {
            let (lo, hi) = lattice(range[0], range[1])
                .ok_or_else(|| MonitorError::InfeasibleRanges(format!("{} {what} range {range:?}", a.id)))?;
            bounds.push((lo, hi));
            x.push(((v / LATTICE_DB).round() as i64).clamp(lo, hi));
        }
    }
    let settings_of = |x: &[i64]| -> Vec<EdfaSetting> {
        units
            .iter()
            .enumerate()
            .map(|(k, a)| EdfaSetting {
                id: a.id.clone(),
                gain_db: x[2 * k] as f64 * LATTICE_DB,
                tilt_db: x[2 * k + 1] as f64 * LATTICE_DB,
            })
            .collect()
    };
    let (base_flat, base_mean) = final_gsnr_stats(&model, grid, launch_dbm)?;
    let objective = |flat: f64, mean: f64| -flat - opts.lambda * (base_mean - mean).max(0.0);
    let mut guarded = model.clone();
    for id in units.iter().map(|a| a.id.clone()) {
        if let Some(a) = guarded.edfa_mut(&id) {
            a.max_total_out_dbm -= opts.power_headroom_db.max(0.0);
        }
    }
    let eval_on = |link: &OpticalLink, x: &[i64]| -> Option<(f64, f64, f64)> {
        let (f, m) = final_gsnr_stats(&link.with_settings(&settings_of(x)), grid, launch_dbm).ok()?;
        Some((objective(f, m), f, m))
    };
    let eval = |x: &[i64]| eval_on(&guarded, x);
    let (mut best, mut flat, mut mean) = eval_on(&model, &x).ok_or_else(|| {
        MonitorError::InfeasibleRanges("starting settings exceed an amplifier output limit".into())
    })?;
    let mut trace = vec![best];

    for _ in 0..opts.max_iterations {
        let mut step: Option<(usize, i64, (f64, f64, f64))> = None;
        for (c, &(lo, hi)) in bounds.iter().enumerate() {
            for d in [-1, 1] {
                let v = x[c] + d;
                if v < lo || v > hi {
                    continue;
                }
                let mut y = x.clone();
                y[c] = v;
                if let Some(r) = eval(&y) {
                    let cur = step.map(|s| s.2 .0).unwrap_or(best);
                    if r.0 > cur + 1e-12 {
                        step = Some((c, v, r));
                    }
                }
            }
        }
        let Some((c, v, r)) = step else { break };
        x[c] = v;
        (best, flat, mean) = r;
        trace.push(best);
    }

    Ok(GainTiltSetting {
        settings: settings_of(&x),
        flatness_db: flat,
        mean_gsnr_db: mean,
        objective: best,
        baseline_flatness_db: base_flat,
        baseline_mean_gsnr_db: base_mean,
        trace,
    })
}
