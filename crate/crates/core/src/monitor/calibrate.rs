//! Line calibration from amplifier power monitors and one edge OSA.
//!
//! Stage one solves the lumped extra loss of every monitored section from
//! total-power differences. Stage two fits one NF offset per amplifier by
//! relative least squares on the edge OSNR across channels and operating
//! points. The two stages alternate until the estimates settle.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::MonitorError;
use crate::linetwin::TelemetrySnapshot;
use crate::netmodel::{ChannelGrid, EdfaSetting, LineElement, OpticalLink};
use crate::qot::{ase_power_mw, link_stages, propagate_stages, StageKind, StageRecord};
use crate::units::{db_to_lin, dbm_to_mw, lin_to_db, mw_to_dbm, OSNR_REF_BW_HZ};

pub const NF_MIN_DB: f64 = 3.0;
pub const NF_MAX_DB: f64 = 15.0;
/// Gain step used for the extra operating points.
pub const OPERATING_POINT_STEP_DB: f64 = 2.0;
const MAX_ROUNDS: usize = 50;
const CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdfaCalibration {
    pub id: String,
    /// Estimated NF at the design gain, dB.
    pub nf_db: f64,
    /// Shift of the whole NF curve relative to the design curve, dB.
    pub nf_offset_db: f64,
    /// One-sigma uncertainty of the offset from the fit covariance.
    pub nf_std_err_db: f64,
}

/// Extra loss lumped on the spans between two monitor points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanLossEstimate {
    /// Element indices of the spans in the section.
    pub span_elements: Vec<usize>,
    /// Known fiber and ROADM loss of the section, dB.
    pub known_loss_db: f64,
    /// Estimated connector loss, placed at the first span input.
    pub connector_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityNote {
    pub parameter: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub link_id: String,
    pub edfas: Vec<EdfaCalibration>,
    pub spans: Vec<SpanLossEstimate>,
    /// Norm of the relative OSNR-fit residual vector.
    pub residual_norm: f64,
    /// Standard deviation of measured − predicted edge OSNR, dB.
    pub osnr_residual_sigma_db: f64,
    pub operating_points: Vec<String>,
    pub identifiability: Vec<IdentifiabilityNote>,
}

impl CalibrationResult {
    pub fn edfa(&self, id: &str) -> Option<&EdfaCalibration> {
        self.edfas.iter().find(|e| e.id == id)
    }

    /// `design` with the estimated connector losses and NF curves applied.
    pub fn apply(&self, design: &OpticalLink) -> OpticalLink {
        let mut link = with_section_losses(design, &self.spans);
        for e in &self.edfas {
            if let Some(a) = link.edfa_mut(&e.id) {
                for p in &mut a.nf_curve {
                    p[1] += e.nf_offset_db;
                }
            }
        }
        link
    }
}

/// Nominal settings, then each amplifier's gain moved by
/// [`OPERATING_POINT_STEP_DB`]. The step is downward, so no amplifier
/// output rises, unless that would leave the gain range.
pub fn operating_points(design: &OpticalLink) -> Vec<(String, Vec<EdfaSetting>)> {
    let nominal = design.settings();
    let mut out = vec![("nominal".to_owned(), nominal.clone())];
    for (k, a) in design.edfas().enumerate() {
        let mut s = nominal.clone();
        let down = a.gain_db - OPERATING_POINT_STEP_DB;
        s[k].gain_db = if down >= a.gain_range_db[0] {
            down
        } else {
            a.gain_db + OPERATING_POINT_STEP_DB
        };
        out.push((format!("{}{:+}dB", a.id, s[k].gain_db - a.gain_db), s));
    }
    out
}

/// Spans and known loss between consecutive monitor points: source, each
/// amplifier, edge.
struct Section {
    spans: Vec<usize>,
    known_loss_db: f64,
}

fn sections(link: &OpticalLink) -> Vec<Section> {
    let mut out = vec![Section {
        spans: vec![],
        known_loss_db: 0.0,
    }];
    for (i, el) in link.elements.iter().enumerate() {
        let cur = out.last_mut().unwrap();
        match el {
            LineElement::Span(s) => {
                cur.spans.push(i);
                cur.known_loss_db += s.fiber_loss_db();
            }
            LineElement::Roadm(r) => cur.known_loss_db += r.insertion_loss_db,
            LineElement::Edfa(_) => out.push(Section {
                spans: vec![],
                known_loss_db: 0.0,
            }),
        }
    }
    out
}

/// Replaces span connector losses so that every section carries its
/// estimate at the first span input.
fn with_section_losses(design: &OpticalLink, spans: &[SpanLossEstimate]) -> OpticalLink {
    let mut link = design.clone();
    for est in spans {
        for (k, &i) in est.span_elements.iter().enumerate() {
            if let LineElement::Span(s) = &mut link.elements[i] {
                s.conn_in_db = if k == 0 { est.connector_loss_db } else { 0.0 };
                s.conn_out_db = 0.0;
            }
        }
    }
    link
}

/// Totals at the monitor points `[source, in₁, out₁, …, edge]`, dBm.
fn monitor_totals(launch_dbm: &[f64], stages_recs: &[(StageKind, StageRecord)], edge: f64) -> Vec<f64> {
    let mut pts = vec![mw_to_dbm(launch_dbm.iter().map(|&p| dbm_to_mw(p)).sum())];
    for (k, r) in stages_recs {
        if matches!(k, StageKind::Edfa { .. }) {
            pts.push(r.total_in_dbm);
            pts.push(r.total_out_dbm);
        }
    }
    pts.push(edge);
    pts
}

fn launch_of(snap: &TelemetrySnapshot) -> Vec<f64> {
    snap.source.iter().map(|c| c.power_dbm).collect()
}

fn settings_of(snap: &TelemetrySnapshot) -> Vec<EdfaSetting> {
    snap.edfas
        .iter()
        .map(|e| EdfaSetting {
            id: e.id.clone(),
            gain_db: e.gain_target_db,
            tilt_db: e.tilt_db,
        })
        .collect()
}

/// Model run of `link` at the snapshot's settings and launch.
struct ModelRun {
    totals: Vec<f64>,
    /// Per amplifier, per channel: ASE added by that amplifier (12.5 GHz
    /// reference) over the signal at its output.
    weights: Vec<Vec<f64>>,
}

fn model_run(link: &OpticalLink, grid: &ChannelGrid, snap: &TelemetrySnapshot) -> Result<ModelRun, MonitorError> {
    let link = link.with_settings(&settings_of(snap));
    let launch = launch_of(snap);
    let stages = link_stages(&link);
    let recs = propagate_stages(&stages, grid, &launch)?;
    let freqs = grid.freqs_hz();
    let mut weights = Vec::new();
    for (st, r) in stages.iter().zip(&recs) {
        if let StageKind::Edfa { unit, nf_offset_db } = &st.kind {
            let nf = unit.nf_at(unit.gain_db) + nf_offset_db;
            weights.push(
                (0..grid.count)
                    .map(|i| {
                        let g = unit.gain_db + unit.tilt_db * grid.tilt_fraction(i);
                        ase_power_mw(freqs[i], nf, g, OSNR_REF_BW_HZ) / r.signal_mw[i]
                    })
                    .collect(),
            );
        }
    }
    let edge = recs
        .last()
        .map(|r| r.total_out_dbm)
        .unwrap_or_else(|| mw_to_dbm(launch.iter().map(|&p| dbm_to_mw(p)).sum()));
    let kinds: Vec<(StageKind, StageRecord)> = stages.into_iter().map(|s| s.kind).zip(recs).collect();
    Ok(ModelRun {
        totals: monitor_totals(&launch, &kinds, edge),
        weights,
    })
}

/// Measured monitor totals `[source, in₁, out₁, …, edge]`, dBm.
fn measured_totals(snap: &TelemetrySnapshot, grid: &ChannelGrid) -> Vec<f64> {
    let mut pts = vec![mw_to_dbm(snap.source.iter().map(|c| dbm_to_mw(c.power_dbm)).sum())];
    for e in &snap.edfas {
        pts.push(e.total_in_dbm.unwrap_or(f64::NAN));
        pts.push(e.total_out_dbm.unwrap_or(f64::NAN));
    }
    let to_rs = grid.symbol_rate_hz() / OSNR_REF_BW_HZ;
    let edge: f64 = snap
        .osa
        .iter()
        .map(|r| {
            let p = dbm_to_mw(r.power_dbm);
            p * (1.0 + to_rs / db_to_lin(r.osnr_db))
        })
        .sum();
    pts.push(mw_to_dbm(edge));
    pts
}

fn check_inputs(design: &OpticalLink, grid: &ChannelGrid, snaps: &[TelemetrySnapshot]) -> Result<(), MonitorError> {
    let ids: Vec<&str> = design.edfas().map(|a| a.id.as_str()).collect();
    for s in snaps {
        let got: Vec<&str> = s.edfas.iter().map(|e| e.id.as_str()).collect();
        if got != ids {
            return Err(MonitorError::InconsistentPriors(format!(
                "snapshot {} reports amplifiers {got:?}, priors list {ids:?}",
                s.operating_point
            )));
        }
        if s.osa.len() != grid.count || s.source.len() != grid.count {
            return Err(MonitorError::InconsistentPriors(format!(
                "snapshot {} has {} OSA rows and {} source channels for a {}-channel grid",
                s.operating_point,
                s.osa.len(),
                s.source.len(),
                grid.count
            )));
        }
    }
    for s in snaps {
        for e in &s.edfas {
            if e.total_in_dbm.is_none() || e.total_out_dbm.is_none() {
                return Err(MonitorError::Underdetermined {
                    edfa: Some(e.id.clone()),
                    reason: "total-power monitor reading missing".into(),
                });
            }
        }
    }
    let distinct: BTreeSet<Vec<i64>> = snaps
        .iter()
        .map(|s| s.edfas.iter().map(|e| (e.gain_target_db * 1e6).round() as i64).collect())
        .collect();
    let need = ids.len().max(2);
    if distinct.len() < need {
        return Err(MonitorError::Underdetermined {
            edfa: None,
            reason: format!("{} distinct gain operating points, {need} required", distinct.len()),
        });
    }
    Ok(())
}

/// Relative least-squares NF fit: `1/OSNR = Σ c_k·w_k`, one row per
/// (operating point, channel) scaled by the measurement.
struct NfFit {
    c: Vec<f64>,
    std_err: Vec<f64>,
    residual_norm: f64,
    notes: Vec<IdentifiabilityNote>,
}

fn fit_nf(rows: &[Vec<f64>], y: &[f64], ids: &[String]) -> NfFit {
    let k = ids.len();
    let m = rows.len();
    let a = DMatrix::from_fn(m, k, |r, c| rows[r][c] / y[r]);
    let b = DVector::from_element(m, 1.0);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let mut notes = Vec::new();
    let tol = smax / CONDITION_LIMIT;
    if let Some(vt) = &svd.v_t {
        for (j, &s) in svd.singular_values.iter().enumerate() {
            if s <= tol {
                let involved: Vec<&str> = (0..k)
                    .filter(|&c| vt[(j, c)].abs() > 0.1)
                    .map(|c| ids[c].as_str())
                    .collect();
                notes.push(IdentifiabilityNote {
                    parameter: format!("nf[{}]", involved.join(",")),
                    reason: "noise figures cannot be separated by the available operating points".into(),
                });
            }
        }
    }
    let c = svd.solve(&b, tol).expect("svd with both factors");
    let res = &a * &c - &b;
    let residual_norm = res.norm();
    let dof = m.saturating_sub(k).max(1) as f64;
    let s2 = res.norm_squared() / dof;
    let ata = a.transpose() * &a;
    let std_err = match ata.pseudo_inverse(tol * tol) {
        Ok(cov) => (0..k)
            .map(|j| {
                let se_c = (s2 * cov[(j, j)]).max(0.0).sqrt();
                10.0 / std::f64::consts::LN_10 * se_c / c[j].abs().max(1e-12)
            })
            .collect(),
        Err(_) => vec![f64::INFINITY; k],
    };
    NfFit {
        c: c.iter().copied().collect(),
        std_err,
        residual_norm,
        notes,
    }
}

/// Calibrates connector losses and NF offsets of `design` from telemetry.
pub fn calibrate_line(
    design: &OpticalLink,
    grid: &ChannelGrid,
    snapshots: &[TelemetrySnapshot],
) -> Result<CalibrationResult, MonitorError> {
    check_inputs(design, grid, snapshots)?;
    let ids: Vec<String> = design.edfas().map(|a| a.id.clone()).collect();
    let secs = sections(design);
    let measured: Vec<Vec<f64>> = snapshots.iter().map(|s| measured_totals(s, grid)).collect();

    let mut identifiability = Vec::new();
    for s in &secs {
        if s.spans.len() > 1 {
            identifiability.push(IdentifiabilityNote {
                parameter: format!("conn{:?}", s.spans),
                reason: "spans between the same two monitor points share one lumped loss".into(),
            });
        }
    }

    let mut spans: Vec<SpanLossEstimate> = secs
        .iter()
        .filter(|s| !s.spans.is_empty())
        .map(|s| SpanLossEstimate {
            span_elements: s.spans.clone(),
            known_loss_db: s.known_loss_db,
            connector_loss_db: 0.0,
        })
        .collect();
    let span_section: Vec<usize> = secs
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.spans.is_empty())
        .map(|(i, _)| i)
        .collect();
    let mut offsets = vec![0.0; ids.len()];
    let mut fit = None;

    for _ in 0..MAX_ROUNDS {
        // stage one: lumped losses at the current NF estimate
        let current = CalibrationResult {
            link_id: design.id.to_string(),
            edfas: ids
                .iter()
                .zip(&offsets)
                .map(|(id, &o)| EdfaCalibration {
                    id: id.clone(),
                    nf_db: 0.0,
                    nf_offset_db: o,
                    nf_std_err_db: 0.0,
                })
                .collect(),
            spans: spans.clone(),
            residual_norm: 0.0,
            osnr_residual_sigma_db: 0.0,
            operating_points: vec![],
            identifiability: vec![],
        };
        let model = current.apply(design);
        let mut shift = vec![0.0; spans.len()];
        for (snap, meas) in snapshots.iter().zip(&measured) {
            let run = model_run(&model, grid, snap)?;
            for (j, &sec) in span_section.iter().enumerate() {
                let m_loss = meas[2 * sec] - meas[2 * sec + 1];
                let p_loss = run.totals[2 * sec] - run.totals[2 * sec + 1];
                shift[j] += (m_loss - p_loss) / snapshots.len() as f64;
            }
        }
        let mut moved: f64 = 0.0;
        for (est, d) in spans.iter_mut().zip(&shift) {
            let new = (est.connector_loss_db + d).max(0.0);
            moved = moved.max((new - est.connector_loss_db).abs());
            est.connector_loss_db = new;
        }

        // stage two: NF offsets given the losses
        let losses_only = with_section_losses(design, &spans);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for snap in snapshots {
            let run = model_run(&losses_only, grid, snap)?;
            for (i, row) in snap.osa.iter().enumerate() {
                rows.push(run.weights.iter().map(|w| w[i]).collect::<Vec<f64>>());
                y.push(db_to_lin(-row.osnr_db));
            }
        }
        let f = fit_nf(&rows, &y, &ids);
        for (o, (c, a)) in offsets.iter_mut().zip(f.c.iter().zip(design.edfas())) {
            let nominal = a.nf_at(a.gain_db);
            let nf = (nominal + lin_to_db(c.max(1e-12))).clamp(NF_MIN_DB, NF_MAX_DB);
            let new = nf - nominal;
            moved = moved.max((new - *o).abs());
            *o = new;
        }
        fit = Some(f);
        if moved < 1e-12 {
            break;
        }
    }

    let fit = fit.expect("at least one round");
    identifiability.extend(fit.notes);
    let mut result = CalibrationResult {
        link_id: design.id.to_string(),
        edfas: design
            .edfas()
            .zip(&offsets)
            .zip(&fit.std_err)
            .map(|((a, &o), &se)| EdfaCalibration {
                id: a.id.clone(),
                nf_db: a.nf_at(a.gain_db) + o,
                nf_offset_db: o,
                nf_std_err_db: se,
            })
            .collect(),
        spans,
        residual_norm: fit.residual_norm,
        osnr_residual_sigma_db: 0.0,
        operating_points: snapshots.iter().map(|s| s.operating_point.clone()).collect(),
        identifiability,
    };
    let deltas = osnr_residuals(design, &result, grid, snapshots)?;
    let all: Vec<f64> = deltas.into_iter().flatten().collect();
    let dof = all.len().saturating_sub(ids.len() + result.spans.len()).max(1) as f64;
    result.osnr_residual_sigma_db = (all.iter().map(|d| d * d).sum::<f64>() / dof).sqrt();
    Ok(result)
}

/// Edge OSNR (dB, 12.5 GHz) predicted for each snapshot's settings and
/// launch from a calibrated design.
pub fn predict_osnr(
    design: &OpticalLink,
    calib: &CalibrationResult,
    grid: &ChannelGrid,
    snap: &TelemetrySnapshot,
) -> Result<Vec<f64>, MonitorError> {
    let run = model_run(&calib.apply(design), grid, snap)?;
    Ok((0..grid.count)
        .map(|i| -lin_to_db(run.weights.iter().map(|w| w[i]).sum()))
        .collect())
}

/// Measured − predicted OSNR per snapshot and channel, dB.
pub fn osnr_residuals(
    design: &OpticalLink,
    calib: &CalibrationResult,
    grid: &ChannelGrid,
    snapshots: &[TelemetrySnapshot],
) -> Result<Vec<Vec<f64>>, MonitorError> {
    snapshots
        .iter()
        .map(|s| {
            let p = predict_osnr(design, calib, grid, s)?;
            Ok(s.osa.iter().zip(&p).map(|(r, q)| r.osnr_db - q).collect())
        })
        .collect()
}

/// Per-amplifier ASE weights for one snapshot on a losses-only model: the
/// linear `1/OSNR` contribution of each amplifier at its design NF.
pub(crate) fn nominal_weights(
    design: &OpticalLink,
    calib: &CalibrationResult,
    grid: &ChannelGrid,
    snap: &TelemetrySnapshot,
) -> Result<Vec<Vec<f64>>, MonitorError> {
    Ok(model_run(&with_section_losses(design, &calib.spans), grid, snap)?.weights)
}
