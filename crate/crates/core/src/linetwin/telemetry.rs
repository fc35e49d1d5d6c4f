//! Amplifier power monitors and edge spectrum readings.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{propagate, FaultSpec, LineState, TwinError};
use crate::netmodel::{ChannelGrid, EdfaSetting, OpticalLink};
use crate::qot::StageKind;
use crate::units::{lin_to_db, mw_to_dbm, OSNR_REF_BW_HZ};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdfaTelemetry {
    pub id: String,
    pub gain_target_db: f64,
    pub tilt_db: f64,
    pub total_in_dbm: Option<f64>,
    pub total_out_dbm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPower {
    pub channel: usize,
    pub freq_thz: f64,
    pub power_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsaRow {
    pub channel: usize,
    pub freq_thz: f64,
    /// Signal power, dBm.
    pub power_dbm: f64,
    /// OSNR in a 12.5 GHz reference bandwidth, dB.
    pub osnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    pub operating_point: String,
    pub timestamp: u64,
    pub edfas: Vec<EdfaTelemetry>,
    /// WDM source spectrum at the transmit edge.
    pub source: Vec<ChannelPower>,
    /// OSA spectrum at the receive edge.
    pub osa: Vec<OsaRow>,
}

impl TelemetrySnapshot {
    pub fn edfa(&self, id: &str) -> Option<&EdfaTelemetry> {
        self.edfas.iter().find(|e| e.id == id)
    }
}

/// Reads amplifier monitors and edge spectra from `state`.
pub fn snapshot_telemetry(state: &LineState, operating_point: &str, timestamp: u64) -> TelemetrySnapshot {
    let edfas = state
        .edfa_records()
        .into_iter()
        .map(|(st, rec)| {
            let StageKind::Edfa { unit, .. } = &st.kind else {
                unreachable!()
            };
            EdfaTelemetry {
                id: unit.id.clone(),
                gain_target_db: unit.gain_db,
                tilt_db: unit.tilt_db,
                total_in_dbm: unit.monitors.input.then_some(rec.total_in_dbm),
                total_out_dbm: unit.monitors.output.then_some(rec.total_out_dbm),
            }
        })
        .collect();
    let g = &state.grid;
    let source = state
        .launch_dbm
        .iter()
        .enumerate()
        .map(|(i, &p)| ChannelPower {
            channel: i,
            freq_thz: g.freq_hz(i) / 1e12,
            power_dbm: p,
        })
        .collect();
    let signal = state.output_signal_dbm();
    let ase = state.output_ase_mw();
    let ref_scale = OSNR_REF_BW_HZ / g.symbol_rate_hz();
    let osa = signal
        .iter()
        .zip(&ase)
        .enumerate()
        .map(|(i, (&p, &a))| OsaRow {
            channel: i,
            freq_thz: g.freq_hz(i) / 1e12,
            power_dbm: p,
            osnr_db: p - mw_to_dbm(a * ref_scale),
        })
        .collect();
    TelemetrySnapshot {
        operating_point: operating_point.to_owned(),
        timestamp,
        edfas,
        source,
        osa,
    }
}

/// Adds independent Gaussian noise of `sigma_db` to every monitor reading.
pub fn add_telemetry_noise<R: Rng>(snap: &mut TelemetrySnapshot, sigma_db: f64, rng: &mut R) {
    if sigma_db <= 0.0 {
        return;
    }
    let n = Normal::new(0.0, sigma_db).expect("finite sigma");
    for e in &mut snap.edfas {
        for v in [&mut e.total_in_dbm, &mut e.total_out_dbm].into_iter().flatten() {
            *v += n.sample(rng);
        }
    }
    for row in &mut snap.osa {
        row.power_dbm += n.sample(rng);
        row.osnr_db += n.sample(rng);
    }
}

/// Settings sweep used to gather calibration telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPlan {
    pub launch_dbm: Vec<f64>,
    pub operating_points: Vec<(String, Vec<EdfaSetting>)>,
    pub noise_sigma_db: f64,
    pub seed: u64,
}

/// One snapshot per operating point of `plan`, read from `link` with
/// `faults` active. Timestamps count operating points.
pub fn collect_telemetry(
    link: &OpticalLink,
    grid: &ChannelGrid,
    plan: &TelemetryPlan,
    faults: &[FaultSpec],
) -> Result<Vec<TelemetrySnapshot>, TwinError> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    plan.operating_points
        .iter()
        .enumerate()
        .map(|(k, (name, settings))| {
            let state = propagate(&link.with_settings(settings), grid, &plan.launch_dbm, faults)?;
            let mut snap = snapshot_telemetry(&state, name, k as u64);
            add_telemetry_noise(&mut snap, plan.noise_sigma_db, &mut rng);
            Ok(snap)
        })
        .collect()
}

/// OSNR (dB, 12.5 GHz reference) corresponding to a linear ASE-only SNR in
/// the signal bandwidth.
pub fn osnr_db_from_snr_ase(snr_ase: f64, symbol_rate_hz: f64) -> f64 {
    lin_to_db(snr_ase * symbol_rate_hz / OSNR_REF_BW_HZ)
}
