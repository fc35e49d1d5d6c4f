//! Quality-of-transmission engine.
//!
//! Noise terms combine as a sum of inverse SNRs:
//! `SNR⁻¹ = SNR_ASE⁻¹ + SNR_NLI⁻¹ + SNR_TRx'⁻¹ + (SNR_P·P_in)⁻¹`, where the
//! first two make up the GSNR. An absent term is carried as `f64::INFINITY`.

mod ber;
mod propagation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{from_inv, inv, lin_to_db};

pub use ber::{ber_from_q, ber_from_snr, q_from_ber, snr_from_ber, Modulation, ModulationConstants};
pub use propagation::{
    ase_power_mw, ase_snr, beta2_ps2_per_km, link_gsnr, link_stages, nli_psd_span, nli_snr,
    propagate_stages, ElementGsnr, LinkGsnr, Stage, StageKind, StageRecord,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QotError {
    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("EDFA {edfa} total output {total_dbm:.2} dBm exceeds {max_dbm:.2} dBm")]
    PowerOutOfRange {
        edfa: String,
        total_dbm: f64,
        max_dbm: f64,
    },
    #[error("|beta2| below 1e-6 ps^2/km makes the NLI closed form singular")]
    DegenerateDispersion,
    #[error("segment list is empty")]
    EmptyList,
    #[error("measured SNR is entirely explained by transceiver noise")]
    TrxDominated,
    #[error("need at least two distinct receive powers to fit the TRx model")]
    Underdetermined,
    #[error("fitted TRx model is non-physical (a={a:e}, b={b:e})")]
    NonPhysical { a: f64, b: f64 },
    #[error("launch vector has {got} channels, grid has {expected}")]
    LaunchMismatch { got: usize, expected: usize },
}

/// Transceiver noise: a constant term and an Rx-power dependent term whose
/// noise contribution is `1 / (snr_p_coeff · P_in[mW])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrxNoiseModel {
    pub snr_trx_const: f64,
    /// 1/mW.
    pub snr_p_coeff: f64,
}

impl TrxNoiseModel {
    /// A transceiver contributing no noise.
    pub const IDEAL: TrxNoiseModel = TrxNoiseModel {
        snr_trx_const: f64::INFINITY,
        snr_p_coeff: f64::INFINITY,
    };

    /// Total inverse SNR contributed by the transceiver at `p_in_mw`.
    pub fn noise_inv(&self, p_in_mw: f64) -> f64 {
        inv(self.snr_trx_const) + inv(self.snr_p_coeff * p_in_mw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrBudget {
    pub snr_ase: f64,
    pub snr_nli: f64,
    pub trx: TrxNoiseModel,
    pub p_in_mw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QotResult {
    pub gsnr: f64,
    pub gsnr_db: f64,
    pub snr_total: f64,
    pub snr_total_db: f64,
    pub ber: f64,
    pub q_db: f64,
}

/// Combines the four noise terms and derives BER and Q for `modulation`.
pub fn combine_snr(b: &SnrBudget, modulation: impl Into<ModulationConstants>) -> QotResult {
    let gsnr_inv = inv(b.snr_ase) + inv(b.snr_nli);
    let total_inv = gsnr_inv + b.trx.noise_inv(b.p_in_mw);
    let gsnr = from_inv(gsnr_inv);
    let snr_total = from_inv(total_inv);
    let ber = ber_from_snr(snr_total, modulation);
    let q_db = q_from_ber(ber).unwrap_or(if ber <= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY });
    QotResult {
        gsnr,
        gsnr_db: lin_to_db(gsnr),
        snr_total,
        snr_total_db: lin_to_db(snr_total),
        ber,
        q_db,
    }
}

/// Per-segment QoT from probing: measured SNR and the GSNR left after
/// removing transceiver noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentQot {
    pub segment_id: String,
    pub snr_meas: f64,
    pub gsnr: f64,
    pub probe_mode: String,
}

/// End-to-end GSNR from per-segment GSNRs: `1/GSNR = Σ 1/GSNR_n`.
pub fn concatenate_gsnr(gsnrs: &[f64]) -> Result<f64, QotError> {
    if gsnrs.is_empty() {
        return Err(QotError::EmptyList);
    }
    if let Some(&bad) = gsnrs.iter().find(|g| !(**g > 0.0)) {
        return Err(QotError::OutOfRange {
            what: "gsnr",
            value: bad,
        });
    }
    Ok(from_inv(gsnrs.iter().map(|&g| inv(g)).sum()))
}

/// Convenience over [`concatenate_gsnr`] for [`SegmentQot`] lists.
pub fn concatenate_segments(segments: &[SegmentQot]) -> Result<f64, QotError> {
    let g: Vec<f64> = segments.iter().map(|s| s.gsnr).collect();
    concatenate_gsnr(&g)
}

/// Removes transceiver noise from a measured SNR.
pub fn deduce_segment_gsnr(
    snr_meas: f64,
    trx: &TrxNoiseModel,
    p_in_mw: f64,
) -> Result<f64, QotError> {
    let rest = inv(snr_meas) - trx.noise_inv(p_in_mw);
    if !(rest > 0.0) {
        return Err(QotError::TrxDominated);
    }
    Ok(1.0 / rest)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrxFit {
    pub model: TrxNoiseModel,
    /// Euclidean norm of the residual in the inverse-SNR domain.
    pub residual_norm: f64,
}

/// Least-squares fit of `1/snr − 1/gsnr_known = a + b/P_in` over
/// `(p_in mW, snr_meas)` samples.
pub fn fit_trx_model(samples: &[(f64, f64)], gsnr_known: f64) -> Result<TrxFit, QotError> {
    let mut powers: Vec<f64> = samples.iter().map(|s| s.0).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    if powers.len() < 2 {
        return Err(QotError::Underdetermined);
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(p, snr)| (1.0 / p, inv(snr) - inv(gsnr_known)))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    if !(a > 0.0 && b > 0.0) {
        return Err(QotError::NonPhysical { a, b });
    }
    let residual_norm = pts
        .iter()
        .map(|p| (p.1 - a - b * p.0).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(TrxFit {
        model: TrxNoiseModel {
            snr_trx_const: 1.0 / a,
            snr_p_coeff: 1.0 / b,
        },
        residual_norm,
    })
}
