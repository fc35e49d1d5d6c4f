//! Analysis and calibration over profiles and telemetry.

mod calibrate;
mod denoise;
mod nf_fault;
mod optimize;
mod steps;

use thiserror::Error;

use crate::qot::QotError;
use crate::units::C_KM_PER_S;

pub use calibrate::{
    calibrate_line, operating_points, osnr_residuals, predict_osnr, CalibrationResult, EdfaCalibration,
    IdentifiabilityNote, SpanLossEstimate, NF_MAX_DB, NF_MIN_DB, OPERATING_POINT_STEP_DB,
};
pub use denoise::{denoise_profile, DenoisedProfile, FittedSegment, MIN_DENOISE_SAMPLES};
pub use nf_fault::{
    detect_nf_fault, EdfaRefit, NfFaultOptions, NfFaultReport, OsnrErrorEntry, OsnrErrorReport,
    DEFAULT_FLAG_THRESHOLD_DB, DEFAULT_OUTLIER_K,
};
pub use optimize::{
    final_gsnr_stats, optimize_gain_tilt, GainTiltSetting, OptimizeOptions, DEFAULT_POWER_HEADROOM_DB, LATTICE_DB,
};
pub use steps::{detect_amplifier_positions, localize_step_loss, LossEvent, STEP_WINDOW};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("profiles do not share a sampling grid ({baseline} vs {current} samples)")]
    GridMismatch { baseline: usize, current: usize },
    #[error("profile has {0} samples, at least 20 needed")]
    TooFewSamples(usize),
    #[error("underdetermined{}: {reason}", edfa.as_ref().map(|e| format!(" at {e}")).unwrap_or_default())]
    Underdetermined { edfa: Option<String>, reason: String },
    #[error("inconsistent priors: {0}")]
    InconsistentPriors(String),
    #[error("infeasible actuator ranges: {0}")]
    InfeasibleRanges(String),
    #[error("no baseline calibration")]
    NoBaseline,
    #[error("round trip {rtt_us} µs does not exceed the processing offset {offset_us} µs")]
    NegativeLength { rtt_us: f64, offset_us: f64 },
    #[error(transparent)]
    Qot(#[from] QotError),
}

/// Fiber length from a frame round-trip time.
pub fn span_length_from_rtt(rtt_us: f64, processing_offset_us: f64, n_group: f64) -> Result<f64, MonitorError> {
    if rtt_us <= processing_offset_us {
        return Err(MonitorError::NegativeLength {
            rtt_us,
            offset_us: processing_offset_us,
        });
    }
    Ok((rtt_us - processing_offset_us) * 1e-6 * C_KM_PER_S / (2.0 * n_group))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linetwin::roundtrip_us;
    use proptest::prelude::*;

    #[test]
    fn rtt_examples() {
        assert!((span_length_from_rtt(979.34, 0.0, 1.468).unwrap() - 100.0).abs() < 0.01);
        assert!((span_length_from_rtt(268.34, 0.0, 1.468).unwrap() - 27.4).abs() < 0.01);
        assert!(matches!(span_length_from_rtt(5.0, 5.0, 1.468), Err(MonitorError::NegativeLength { .. })));
    }

    proptest! {
        #[test]
        fn rtt_round_trip(l in 0.1..2000.0_f64, off in 0.0..500.0_f64, n in 1.4..1.5_f64) {
            let back = span_length_from_rtt(roundtrip_us(l, off, n), off, n).unwrap();
            prop_assert!((back - l).abs() < 0.01);
        }
    }
}
