//! Noise-figure fault detection against a baseline calibration.

use serde::{Deserialize, Serialize};

use super::calibrate::{nominal_weights, osnr_residuals, CalibrationResult, NF_MAX_DB, NF_MIN_DB};
use super::MonitorError;
use crate::linetwin::TelemetrySnapshot;
use crate::netmodel::{ChannelGrid, OpticalLink};
use crate::units::{db_to_lin, lin_to_db};

pub const DEFAULT_OUTLIER_K: f64 = 3.0;
pub const DEFAULT_FLAG_THRESHOLD_DB: f64 = 1.0;
/// Floor on the baseline residual spread used for outlier tests.
pub const MIN_BASELINE_SIGMA_DB: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsnrErrorEntry {
    pub operating_point: String,
    pub channel: usize,
    /// Measured − predicted, dB.
    pub delta_db: f64,
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsnrErrorReport {
    pub entries: Vec<OsnrErrorEntry>,
    pub mean_db: f64,
    pub std_db: f64,
    pub max_abs_db: f64,
    pub outlier_count: usize,
    /// σ of the baseline residuals the outlier test used.
    pub baseline_sigma_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdfaRefit {
    pub id: String,
    pub baseline_nf_db: f64,
    pub refit_nf_db: f64,
    pub deviation_db: f64,
    /// RMS of measured − predicted OSNR with only this amplifier refitted.
    pub residual_rms_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfFaultReport {
    pub errors: OsnrErrorReport,
    pub refits: Vec<EdfaRefit>,
    pub flagged: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NfFaultOptions {
    pub outlier_k: f64,
    pub flag_threshold_db: f64,
}

impl Default for NfFaultOptions {
    fn default() -> Self {
        Self {
            outlier_k: DEFAULT_OUTLIER_K,
            flag_threshold_db: DEFAULT_FLAG_THRESHOLD_DB,
        }
    }
}

fn error_report(snaps: &[TelemetrySnapshot], deltas: &[Vec<f64>], sigma: f64, k: f64) -> OsnrErrorReport {
    let mut entries = Vec::new();
    for (s, row) in snaps.iter().zip(deltas) {
        for (ch, &d) in row.iter().enumerate() {
            entries.push(OsnrErrorEntry {
                operating_point: s.operating_point.clone(),
                channel: ch,
                delta_db: d,
                outlier: d.abs() > k * sigma,
            });
        }
    }
    let n = entries.len().max(1) as f64;
    let mean = entries.iter().map(|e| e.delta_db).sum::<f64>() / n;
    let std = (entries.iter().map(|e| (e.delta_db - mean).powi(2)).sum::<f64>() / n).sqrt();
    OsnrErrorReport {
        mean_db: mean,
        std_db: std,
        max_abs_db: entries.iter().map(|e| e.delta_db.abs()).fold(0.0, f64::max),
        outlier_count: entries.iter().filter(|e| e.outlier).count(),
        entries,
        baseline_sigma_db: sigma,
    }
}

/// Compares current edge OSNR with the baseline prediction and, when the
/// errors have outliers, refits each amplifier's NF on its own.
pub fn detect_nf_fault(
    design: &OpticalLink,
    baseline: Option<&CalibrationResult>,
    grid: &ChannelGrid,
    snapshots: &[TelemetrySnapshot],
    opts: NfFaultOptions,
) -> Result<NfFaultReport, MonitorError> {
    let baseline = baseline.ok_or(MonitorError::NoBaseline)?;
    if snapshots.len() < 2 {
        return Err(MonitorError::Underdetermined {
            edfa: None,
            reason: format!("{} operating points, 2 required", snapshots.len()),
        });
    }
    let sigma = baseline.osnr_residual_sigma_db.max(MIN_BASELINE_SIGMA_DB);
    let deltas = osnr_residuals(design, baseline, grid, snapshots)?;
    let errors = error_report(snapshots, &deltas, sigma, opts.outlier_k);
    if errors.outlier_count == 0 {
        return Ok(NfFaultReport {
            errors,
            refits: vec![],
            flagged: vec![],
        });
    }

    // linear 1/OSNR model: y = Σ c_k·w_k with c_k the baseline NF factors
    let mut w: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    for s in snapshots {
        let ws = nominal_weights(design, baseline, grid, s)?;
        for (i, row) in s.osa.iter().enumerate() {
            w.push(ws.iter().map(|wk| wk[i]).collect());
            y.push(db_to_lin(-row.osnr_db));
        }
    }
    let c: Vec<f64> = baseline.edfas.iter().map(|e| db_to_lin(e.nf_offset_db)).collect();

    let mut refits = Vec::new();
    for (k, (e, a)) in baseline.edfas.iter().zip(design.edfas()).enumerate() {
        // relative least squares in c_k alone
        let (mut num, mut den) = (0.0, 0.0);
        for (row, &yi) in w.iter().zip(&y) {
            let rest: f64 = row.iter().zip(&c).enumerate().filter(|(j, _)| *j != k).map(|(_, (wj, cj))| wj * cj).sum();
            let ai = rest / yi;
            let bi = row[k] / yi;
            num += bi * (1.0 - ai);
            den += bi * bi;
        }
        let nominal = a.nf_at(a.gain_db);
        let ck = (num / den).max(1e-12);
        let nf = (nominal + lin_to_db(ck)).clamp(NF_MIN_DB, NF_MAX_DB);
        let ck = db_to_lin(nf - nominal);
        let rms = (w
            .iter()
            .zip(&y)
            .map(|(row, &yi)| {
                let pred: f64 = row
                    .iter()
                    .zip(&c)
                    .enumerate()
                    .map(|(j, (wj, cj))| wj * if j == k { ck } else { *cj })
                    .sum();
                lin_to_db(pred / yi).powi(2)
            })
            .sum::<f64>()
            / y.len() as f64)
            .sqrt();
        refits.push(EdfaRefit {
            id: e.id.clone(),
            baseline_nf_db: e.nf_db,
            refit_nf_db: nf,
            deviation_db: nf - e.nf_db,
            residual_rms_db: rms,
        });
    }
    // single-fault localization: the refit that best explains the errors,
    // if it both moves far enough and brings the residuals back to noise
    let best = refits
        .iter()
        .map(|r| r.residual_rms_db)
        .fold(f64::INFINITY, f64::min);
    let flagged = refits
        .iter()
        .filter(|r| {
            r.residual_rms_db <= best + 1e-9
                && r.deviation_db.abs() > opts.flag_threshold_db
                && r.residual_rms_db <= opts.outlier_k * sigma
        })
        .map(|r| r.id.clone())
        .collect();
    Ok(NfFaultReport {
        errors,
        refits,
        flagged,
    })
}
