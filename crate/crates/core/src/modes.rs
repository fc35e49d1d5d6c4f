//! Transceiver mode catalogs, catalog intersection and mode selection.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::TrxId;
use crate::qot::{combine_snr, snr_from_ber, Modulation, QotError, SnrBudget, TrxNoiseModel};
use crate::units::{lin_to_db, mw_to_dbm};

pub const DEFAULT_MARGIN_DB: f64 = 1.0;
pub const DEFAULT_FEC_THRESHOLD_BER: f64 = 2.0e-2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModeError {
    #[error("no common mode satisfies the SNR margin and rx power window")]
    NoFeasibleMode,
    #[error("catalogs share no mode")]
    NoCommonMode,
    #[error("mode {id}: {source}")]
    Threshold { id: String, source: QotError },
}

/// Catalog document form of a mode. `required_snr` is never read from the
/// document; it is derived on conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub id: String,
    pub bitrate_gbps: f64,
    pub modulation: Modulation,
    pub symbol_rate_gbaud: f64,
    pub fec: String,
    #[serde(default = "default_fec_threshold")]
    pub fec_threshold_ber: f64,
    pub min_rx_dbm: f64,
    pub max_rx_dbm: f64,
}

fn default_fec_threshold() -> f64 {
    DEFAULT_FEC_THRESHOLD_BER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModeSpec", into = "ModeSpec")]
pub struct TrxMode {
    pub id: String,
    pub bitrate_gbps: f64,
    pub modulation: Modulation,
    pub symbol_rate_gbaud: f64,
    pub fec: String,
    pub fec_threshold_ber: f64,
    pub required_snr: f64,
    pub min_rx_dbm: f64,
    pub max_rx_dbm: f64,
}

impl TryFrom<ModeSpec> for TrxMode {
    type Error = ModeError;

    fn try_from(s: ModeSpec) -> Result<Self, ModeError> {
        let required_snr =
            snr_from_ber(s.fec_threshold_ber, s.modulation).map_err(|source| ModeError::Threshold {
                id: s.id.clone(),
                source,
            })?;
        Ok(TrxMode {
            id: s.id,
            bitrate_gbps: s.bitrate_gbps,
            modulation: s.modulation,
            symbol_rate_gbaud: s.symbol_rate_gbaud,
            fec: s.fec,
            fec_threshold_ber: s.fec_threshold_ber,
            required_snr,
            min_rx_dbm: s.min_rx_dbm,
            max_rx_dbm: s.max_rx_dbm,
        })
    }
}

impl From<TrxMode> for ModeSpec {
    fn from(m: TrxMode) -> Self {
        ModeSpec {
            id: m.id,
            bitrate_gbps: m.bitrate_gbps,
            modulation: m.modulation,
            symbol_rate_gbaud: m.symbol_rate_gbaud,
            fec: m.fec,
            fec_threshold_ber: m.fec_threshold_ber,
            min_rx_dbm: m.min_rx_dbm,
            max_rx_dbm: m.max_rx_dbm,
        }
    }
}

impl TrxMode {
    /// Builds a mode with the default FEC threshold.
    pub fn new(
        id: &str,
        bitrate_gbps: f64,
        modulation: Modulation,
        symbol_rate_gbaud: f64,
        fec: &str,
    ) -> TrxMode {
        TrxMode::try_from(ModeSpec {
            id: id.into(),
            bitrate_gbps,
            modulation,
            symbol_rate_gbaud,
            fec: fec.into(),
            fec_threshold_ber: DEFAULT_FEC_THRESHOLD_BER,
            min_rx_dbm: -20.0,
            max_rx_dbm: 5.0,
        })
        .expect("default threshold is valid for both modulations")
    }

    pub fn required_snr_db(&self) -> f64 {
        lin_to_db(self.required_snr)
    }

    /// Two modes interoperate when bitrate, modulation, symbol rate and FEC
    /// all agree; ids are vendor specific and ignored.
    pub fn same_mode(&self, other: &TrxMode) -> bool {
        self.bitrate_gbps == other.bitrate_gbps
            && self.modulation == other.modulation
            && self.symbol_rate_gbaud == other.symbol_rate_gbaud
            && self.fec == other.fec
    }

    pub fn rx_window_contains(&self, p_in_dbm: f64) -> bool {
        p_in_dbm >= self.min_rx_dbm && p_in_dbm <= self.max_rx_dbm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCatalog {
    pub trx_id: TrxId,
    pub modes: Vec<TrxMode>,
    pub probe_mode_id: String,
}

impl ModeCatalog {
    pub fn probe_mode(&self) -> Option<&TrxMode> {
        self.modes.iter().find(|m| m.id == self.probe_mode_id)
    }
}

fn mode_order(a: &TrxMode, b: &TrxMode) -> Ordering {
    b.bitrate_gbps
        .total_cmp(&a.bitrate_gbps)
        .then(a.required_snr.total_cmp(&b.required_snr))
        .then_with(|| a.id.cmp(&b.id))
}

/// Sorts modes by bitrate descending, required SNR ascending, then id.
pub fn sort_modes(modes: &mut [TrxMode]) {
    modes.sort_by(mode_order);
}

/// Modes of `a` that `b` also offers, in preference order.
pub fn intersect_catalogs(a: &ModeCatalog, b: &ModeCatalog) -> Vec<TrxMode> {
    let mut out: Vec<TrxMode> = a
        .modes
        .iter()
        .filter(|m| b.modes.iter().any(|n| m.same_mode(n)))
        .cloned()
        .collect();
    sort_modes(&mut out);
    out
}

/// First mode in preference order whose predicted SNR clears its threshold by
/// `margin_db` and whose rx window contains `p_in_mw`.
pub fn select_mode(
    common: &[TrxMode],
    gsnr_est: f64,
    trx: &TrxNoiseModel,
    p_in_mw: f64,
    margin_db: f64,
) -> Result<TrxMode, ModeError> {
    let mut sorted = common.to_vec();
    sort_modes(&mut sorted);
    let p_in_dbm = mw_to_dbm(p_in_mw);
    sorted
        .into_iter()
        .find(|m| {
            let budget = SnrBudget {
                snr_ase: gsnr_est,
                snr_nli: f64::INFINITY,
                trx: *trx,
                p_in_mw,
            };
            let predicted = combine_snr(&budget, m.modulation);
            predicted.snr_total_db - m.required_snr_db() >= margin_db && m.rx_window_contains(p_in_dbm)
        })
        .ok_or(ModeError::NoFeasibleMode)
}

/// Mode used for QoT probing between `a` and `b`.
pub fn probe_plan(a: &ModeCatalog, b: &ModeCatalog) -> Result<TrxMode, ModeError> {
    let common = intersect_catalogs(a, b);
    if common.is_empty() {
        return Err(ModeError::NoCommonMode);
    }
    if let (Some(pa), Some(pb)) = (a.probe_mode(), b.probe_mode()) {
        if pa.same_mode(pb) {
            if let Some(m) = common.iter().find(|m| m.same_mode(pa)) {
                return Ok(m.clone());
            }
        }
    }
    Ok(common
        .iter()
        .max_by(|x, y| x.required_snr.total_cmp(&y.required_snr).then_with(|| y.id.cmp(&x.id)))
        .cloned()
        .expect("non-empty"))
}
