//! CSV tables behind the operator plots.

use std::fmt::Write;
use std::str::FromStr;

use dcx_core::monitor::NfFaultReport;
use dcx_core::qot::{combine_snr, link_gsnr, Modulation, SnrBudget, TrxNoiseModel};
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineError};

/// Launch power sweep for the Q plot, dBm.
pub const Q_SWEEP_DBM: (f64, f64, f64) = (-4.0, 6.0, 0.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Longitudinal power of a link.
    Profile,
    /// GSNR accumulated up to each amplifier of a link.
    AccumulatedGsnr,
    /// Centre-channel Q against per-channel launch power on a link.
    QVsPower,
    /// Measured − predicted OSNR entries of a calibration's check.
    OsnrErrorHist,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::Profile,
        PlotKind::AccumulatedGsnr,
        PlotKind::QVsPower,
        PlotKind::OsnrErrorHist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::Profile => "profile",
            PlotKind::AccumulatedGsnr => "accumulated_gsnr",
            PlotKind::QVsPower => "q_vs_power",
            PlotKind::OsnrErrorHist => "osnr_error_hist",
        }
    }
}

impl FromStr for PlotKind {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| EngineError::Invalid(format!("unknown plot kind {s}")))
    }
}

fn target_link(e: &Engine, target: &str) -> Result<(), EngineError> {
    e.link(target)
        .map(|_| ())
        .map_err(|_| EngineError::UnknownTarget(target.to_owned()))
}

/// The table for `kind` on `target`: a link id, or a calibration id for
/// the OSNR error plot.
pub fn plot_table(e: &Engine, kind: PlotKind, target: &str) -> Result<String, EngineError> {
    match kind {
        PlotKind::Profile => {
            target_link(e, target)?;
            let p = e.profile(target)?;
            let mut out = String::from("distance_km,power_db\n");
            for s in &p.samples {
                writeln!(out, "{:.6},{:.6}", s.distance_km, s.relative_power_db).unwrap();
            }
            Ok(out)
        }
        PlotKind::AccumulatedGsnr => {
            target_link(e, target)?;
            let v = e.gsnr(target)?;
            let mut out = String::from("edfa_id,channel,accumulated_gsnr_db\n");
            for a in &v.per_edfa {
                for (ch, g) in a.gsnr_db.iter().enumerate() {
                    writeln!(out, "{},{ch},{g:.6}", a.edfa_id).unwrap();
                }
            }
            Ok(out)
        }
        PlotKind::QVsPower => {
            target_link(e, target)?;
            let mut out = String::from("p_in_dbm,q_db\n");
            for (p, q) in q_vs_power(e, target)? {
                writeln!(out, "{p:.6},{q:.6}").unwrap();
            }
            Ok(out)
        }
        PlotKind::OsnrErrorHist => {
            let r = e
                .nf_check(target)
                .map_err(|err| match err {
                    EngineError::UnknownCalibration(id) => EngineError::UnknownTarget(id),
                    other => other,
                })?;
            Ok(osnr_error_table(&r))
        }
    }
}

/// `(launch dBm, Q dB)` for the centre channel of `link_id` under a flat
/// launch, 16QAM and an ideal receiver.
pub fn q_vs_power(e: &Engine, link_id: &str) -> Result<Vec<(f64, f64)>, EngineError> {
    let link = e.link(link_id)?;
    let g = &e.topology.grid;
    let mid = g.count / 2;
    let (lo, hi, step) = Q_SWEEP_DBM;
    let n = ((hi - lo) / step).round() as usize + 1;
    (0..n)
        .map(|k| {
            let p = lo + k as f64 * step;
            let r = link_gsnr(link, g, &vec![p; g.count]).map_err(|err| EngineError::Invalid(err.to_string()))?;
            let q = combine_snr(
                &SnrBudget {
                    snr_ase: r.gsnr[mid],
                    snr_nli: f64::INFINITY,
                    trx: TrxNoiseModel::IDEAL,
                    p_in_mw: 1.0,
                },
                Modulation::Qam16,
            );
            Ok((p, q.q_db))
        })
        .collect()
}

fn osnr_error_table(r: &NfFaultReport) -> String {
    let mut out = String::from("operating_point,channel,delta_db,outlier\n");
    for x in &r.errors.entries {
        writeln!(out, "{},{},{:.6},{}", x.operating_point, x.channel, x.delta_db, x.outlier).unwrap();
    }
    out
}

/// Peak of a sampled curve and whether it lies strictly inside the range.
pub fn interior_max(rows: &[(f64, f64)]) -> Option<(f64, f64, bool)> {
    let (i, &(x, y)) = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
    Some((x, y, i > 0 && i + 1 < rows.len()))
}

/// Data rows of a CSV table.
pub fn row_count(table: &str) -> usize {
    table.lines().count().saturating_sub(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{EngineConfig, Mutation};
    use dcx_core::fixtures;

    fn engine() -> Engine {
        Engine::init(fixtures::demo_topology(), EngineConfig::with_seed(11)).unwrap().0
    }

    #[test]
    fn profile_rows_follow_the_sampling_grid() {
        let t = plot_table(&engine(), PlotKind::Profile, "LINK-4x80").unwrap();
        assert_eq!(row_count(&t), 641);
        assert!(t.starts_with("distance_km,power_db\n0.000000,"));
        assert!(t.lines().last().unwrap().starts_with("320.000000,"));
    }

    #[test]
    fn q_sweep_peaks_inside_the_range() {
        let e = engine();
        let t = plot_table(&e, PlotKind::QVsPower, "LINK-4x80").unwrap();
        assert_eq!(row_count(&t), 21);
        let rows = q_vs_power(&e, "LINK-4x80").unwrap();
        let (_, _, interior) = interior_max(&rows).unwrap();
        assert!(interior, "{rows:?}");
    }

    #[test]
    fn accumulated_gsnr_has_a_row_per_edfa_and_channel() {
        let e = engine();
        let t = plot_table(&e, PlotKind::AccumulatedGsnr, "LINK-ILA").unwrap();
        assert_eq!(row_count(&t), 4 * e.topology.grid.count);
    }

    #[test]
    fn osnr_errors_cover_every_reading() {
        let e = engine();
        let (e, _, _) = e
            .submit(&Mutation::Calibrate {
                link_id: "LINK-4x80".into(),
            })
            .unwrap();
        let t = plot_table(&e, PlotKind::OsnrErrorHist, "C1").unwrap();
        let points = e.link("LINK-4x80").unwrap().edfas().count() + 1;
        assert_eq!(row_count(&t), points * e.topology.grid.count);
    }

    #[test]
    fn unknown_targets_are_reported() {
        let e = engine();
        for k in PlotKind::ALL {
            assert_eq!(
                plot_table(&e, k, "nope"),
                Err(EngineError::UnknownTarget("nope".into())),
                "{k:?}"
            );
        }
        assert!("bogus".parse::<PlotKind>().is_err());
        assert_eq!("q_vs_power".parse::<PlotKind>().unwrap(), PlotKind::QVsPower);
    }
}
