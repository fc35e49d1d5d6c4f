//! Per-channel power propagation through a chain of line stages.
//!
//! Every channel carries three power components: signal, accumulated ASE and
//! accumulated NLI. Losses and gains scale all three; EDFAs add ASE and
//! fiber inputs add NLI. Because noise is scaled by exactly the same factors
//! as the signal, the inverse SNR accumulated over a chain is the sum of the
//! inverse SNRs of its parts.

use serde::{Deserialize, Serialize};

use super::QotError;
use crate::netmodel::{ChannelGrid, EdfaUnit, FiberSpan, LineElement, OpticalLink};
use crate::units::{db_to_lin, dbm_to_mw, from_inv, inv, mw_to_dbm, C_M_PER_S, PLANCK};

/// Speed of light in nm/ps.
const C_NM_PER_PS: f64 = 299_792.458;
const MIN_BETA2_PS2_PER_KM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StageKind {
    /// Flat lumped loss (connectors, ROADMs, injected faults).
    Loss { loss_db: f64 },
    /// Distributed fiber loss with NLI generated at the fiber input. The
    /// tail of a span split by a fault does not inject NLI again.
    Fiber { span: FiberSpan, inject_nli: bool },
    /// Amplifier with an additive NF degradation on top of its curve.
    Edfa { unit: EdfaUnit, nf_offset_db: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub label: String,
    /// Index of the originating element in the link, if any.
    pub element: Option<usize>,
    pub position_km: f64,
    pub kind: StageKind,
}

impl Stage {
    pub fn length_km(&self) -> f64 {
        match &self.kind {
            StageKind::Fiber { span, .. } => span.length_km,
            _ => 0.0,
        }
    }
}

/// Expands link elements into stages: each span becomes
/// `conn_in → fiber → conn_out`.
pub fn link_stages(link: &OpticalLink) -> Vec<Stage> {
    let mut out = Vec::new();
    let mut pos = 0.0;
    for (i, el) in link.elements.iter().enumerate() {
        match el {
            LineElement::Span(s) => {
                out.push(Stage {
                    label: format!("span{i}.conn_in"),
                    element: Some(i),
                    position_km: pos,
                    kind: StageKind::Loss {
                        loss_db: s.conn_in_db,
                    },
                });
                out.push(Stage {
                    label: format!("span{i}"),
                    element: Some(i),
                    position_km: pos,
                    kind: StageKind::Fiber {
                        span: s.clone(),
                        inject_nli: true,
                    },
                });
                pos += s.length_km;
                out.push(Stage {
                    label: format!("span{i}.conn_out"),
                    element: Some(i),
                    position_km: pos,
                    kind: StageKind::Loss {
                        loss_db: s.conn_out_db,
                    },
                });
            }
            LineElement::Edfa(a) => out.push(Stage {
                label: a.id.clone(),
                element: Some(i),
                position_km: pos,
                kind: StageKind::Edfa {
                    unit: a.clone(),
                    nf_offset_db: 0.0,
                },
            }),
            LineElement::Roadm(r) => out.push(Stage {
                label: r.id.clone(),
                element: Some(i),
                position_km: pos,
                kind: StageKind::Loss {
                    loss_db: r.insertion_loss_db,
                },
            }),
        }
    }
    out
}

/// Channel powers after a stage, mW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub label: String,
    pub element: Option<usize>,
    /// Position of the stage output, km from the link input.
    pub position_km: f64,
    pub signal_mw: Vec<f64>,
    pub ase_mw: Vec<f64>,
    pub nli_mw: Vec<f64>,
    /// Total (signal + ASE) at the stage input, dBm.
    pub total_in_dbm: f64,
    /// Total (signal + ASE) at the stage output, dBm.
    pub total_out_dbm: f64,
}

impl StageRecord {
    /// Per-channel GSNR at this point of the chain.
    pub fn gsnr(&self) -> Vec<f64> {
        self.signal_mw
            .iter()
            .zip(self.ase_mw.iter().zip(&self.nli_mw))
            .map(|(s, (a, n))| from_inv((a + n) / s))
            .collect()
    }
}

/// `β₂` in ps²/km for dispersion `D` (ps/nm/km) at `freq_hz`.
pub fn beta2_ps2_per_km(dispersion_ps_per_nm_km: f64, freq_hz: f64) -> f64 {
    let lambda_nm = C_M_PER_S / freq_hz * 1e9;
    -dispersion_ps_per_nm_km * lambda_nm * lambda_nm / (2.0 * std::f64::consts::PI * C_NM_PER_PS)
}

/// NLI power spectral density (W/Hz) generated by one span for a channel
/// with power `p_ch_w` at the span input.
pub fn nli_psd_span(
    span: &FiberSpan,
    p_ch_w: f64,
    freq_hz: f64,
    grid: &ChannelGrid,
) -> Result<f64, QotError> {
    if span.gamma_per_w_km == 0.0 || p_ch_w == 0.0 {
        return Ok(0.0);
    }
    let beta2 = beta2_ps2_per_km(span.dispersion_ps_per_nm_km, freq_hz).abs();
    if beta2 < MIN_BETA2_PS2_PER_KM {
        return Err(QotError::DegenerateDispersion);
    }
    let beta2_s2 = beta2 * 1e-24;
    let alpha = span.attenuation_db_per_km * std::f64::consts::LN_10 / 10.0;
    let (leff, leff_a) = if alpha > 0.0 {
        ((1.0 - (-alpha * span.length_km).exp()) / alpha, 1.0 / alpha)
    } else {
        (span.length_km, span.length_km)
    };
    let g = p_ch_w / grid.symbol_rate_hz();
    let bwdm = grid.wdm_bandwidth_hz();
    let pi = std::f64::consts::PI;
    let arg = pi * pi / 2.0 * beta2_s2 * leff_a * bwdm * bwdm;
    Ok(8.0 / 27.0 * span.gamma_per_w_km.powi(2) * g.powi(3) * leff * leff * arg.asinh()
        / (pi * beta2_s2 * leff_a))
}

/// ASE power (mW) added by an amplifier in `bandwidth_hz`.
pub fn ase_power_mw(freq_hz: f64, nf_db: f64, gain_db: f64, bandwidth_hz: f64) -> f64 {
    PLANCK * freq_hz * db_to_lin(nf_db) * (db_to_lin(gain_db) - 1.0) * bandwidth_hz * 1e3
}

fn total_dbm(signal: &[f64], ase: &[f64]) -> f64 {
    mw_to_dbm(signal.iter().zip(ase).map(|(s, a)| s + a).sum())
}

/// Propagates a per-channel launch (dBm) through `stages`. Returns one record
/// per stage.
pub fn propagate_stages(
    stages: &[Stage],
    grid: &ChannelGrid,
    launch_dbm: &[f64],
) -> Result<Vec<StageRecord>, QotError> {
    if launch_dbm.len() != grid.count {
        return Err(QotError::LaunchMismatch {
            got: launch_dbm.len(),
            expected: grid.count,
        });
    }
    let freqs = grid.freqs_hz();
    let rs = grid.symbol_rate_hz();
    let mut signal: Vec<f64> = launch_dbm.iter().map(|&p| dbm_to_mw(p)).collect();
    let mut ase = vec![0.0; grid.count];
    let mut nli = vec![0.0; grid.count];
    let mut out = Vec::with_capacity(stages.len());

    for st in stages {
        let total_in = total_dbm(&signal, &ase);
        let scale = |v: &mut [f64], loss_db: &dyn Fn(usize) -> f64| {
            for (i, x) in v.iter_mut().enumerate() {
                *x *= db_to_lin(-loss_db(i));
            }
        };
        match &st.kind {
            StageKind::Loss { loss_db } => {
                let f = |_: usize| *loss_db;
                scale(&mut signal, &f);
                scale(&mut ase, &f);
                scale(&mut nli, &f);
            }
            StageKind::Fiber { span, inject_nli } => {
                for i in (0..grid.count).filter(|_| *inject_nli) {
                    let psd = nli_psd_span(span, signal[i] * 1e-3, freqs[i], grid)?;
                    nli[i] += psd * rs * 1e3;
                }
                let f = |i: usize| span.fiber_loss_db() + span.loss_tilt_db * grid.tilt_fraction(i);
                scale(&mut signal, &f);
                scale(&mut ase, &f);
                scale(&mut nli, &f);
            }
            StageKind::Edfa { unit, nf_offset_db } => {
                let nf = unit.nf_at(unit.gain_db) + nf_offset_db;
                for i in 0..grid.count {
                    let g_db = unit.gain_db + unit.tilt_db * grid.tilt_fraction(i);
                    let g = db_to_lin(g_db);
                    signal[i] *= g;
                    ase[i] = ase[i] * g + ase_power_mw(freqs[i], nf, g_db, rs);
                    nli[i] *= g;
                }
                let total_out = total_dbm(&signal, &ase);
                if total_out > unit.max_total_out_dbm {
                    return Err(QotError::PowerOutOfRange {
                        edfa: unit.id.clone(),
                        total_dbm: total_out,
                        max_dbm: unit.max_total_out_dbm,
                    });
                }
            }
        }
        out.push(StageRecord {
            label: st.label.clone(),
            element: st.element,
            position_km: st.position_km + st.length_km(),
            signal_mw: signal.clone(),
            ase_mw: ase.clone(),
            nli_mw: nli.clone(),
            total_in_dbm: total_in,
            total_out_dbm: total_dbm(&signal, &ase),
        });
    }
    Ok(out)
}

fn output_state(
    link: &OpticalLink,
    grid: &ChannelGrid,
    launch_dbm: &[f64],
) -> Result<(Vec<StageRecord>, Vec<f64>), QotError> {
    let recs = propagate_stages(&link_stages(link), grid, launch_dbm)?;
    let launch_mw = launch_dbm.iter().map(|&p| dbm_to_mw(p)).collect();
    Ok((recs, launch_mw))
}

fn ratio_at_end(
    recs: &[StageRecord],
    launch_mw: Vec<f64>,
    noise: impl Fn(&StageRecord) -> &Vec<f64>,
) -> Vec<f64> {
    match recs.last() {
        Some(r) => r
            .signal_mw
            .iter()
            .zip(noise(r))
            .map(|(s, n)| from_inv(n / s))
            .collect(),
        None => vec![f64::INFINITY; launch_mw.len()],
    }
}

/// Per-channel linear SNR from ASE alone at the link output.
pub fn ase_snr(link: &OpticalLink, grid: &ChannelGrid, launch_dbm: &[f64]) -> Result<Vec<f64>, QotError> {
    let (recs, launch) = output_state(link, grid, launch_dbm)?;
    Ok(ratio_at_end(&recs, launch, |r| &r.ase_mw))
}

/// Per-channel linear SNR from NLI alone at the link output.
pub fn nli_snr(link: &OpticalLink, grid: &ChannelGrid, launch_dbm: &[f64]) -> Result<Vec<f64>, QotError> {
    let (recs, launch) = output_state(link, grid, launch_dbm)?;
    Ok(ratio_at_end(&recs, launch, |r| &r.nli_mw))
}

/// Accumulated GSNR at the output of one amplifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementGsnr {
    pub edfa_id: String,
    pub position_km: f64,
    pub gsnr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGsnr {
    pub gsnr: Vec<f64>,
    pub snr_ase: Vec<f64>,
    pub snr_nli: Vec<f64>,
    /// Signal power at the link output, dBm.
    pub signal_out_dbm: Vec<f64>,
    pub per_edfa: Vec<ElementGsnr>,
}

/// GSNR per channel at the link output plus the accumulated GSNR after each
/// amplifier.
pub fn link_gsnr(link: &OpticalLink, grid: &ChannelGrid, launch_dbm: &[f64]) -> Result<LinkGsnr, QotError> {
    let stages = link_stages(link);
    let recs = propagate_stages(&stages, grid, launch_dbm)?;
    let per_edfa = stages
        .iter()
        .zip(&recs)
        .filter(|(s, _)| matches!(s.kind, StageKind::Edfa { .. }))
        .map(|(s, r)| ElementGsnr {
            edfa_id: s.label.clone(),
            position_km: r.position_km,
            gsnr: r.gsnr(),
        })
        .collect();
    let Some(last) = recs.last() else {
        let n = grid.count;
        return Ok(LinkGsnr {
            gsnr: vec![f64::INFINITY; n],
            snr_ase: vec![f64::INFINITY; n],
            snr_nli: vec![f64::INFINITY; n],
            signal_out_dbm: launch_dbm.to_vec(),
            per_edfa,
        });
    };
    let ratio = |noise: &[f64]| -> Vec<f64> {
        last.signal_mw
            .iter()
            .zip(noise)
            .map(|(s, n)| from_inv(n / s))
            .collect()
    };
    let snr_ase = ratio(&last.ase_mw);
    let snr_nli = ratio(&last.nli_mw);
    let gsnr = snr_ase
        .iter()
        .zip(&snr_nli)
        .map(|(a, n)| from_inv(inv(*a) + inv(*n)))
        .collect();
    Ok(LinkGsnr {
        gsnr,
        snr_ase,
        snr_nli,
        signal_out_dbm: last.signal_mw.iter().map(|&p| mw_to_dbm(p)).collect(),
        per_edfa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::netmodel::{LinkId, LinkKind, Monitors, RoadmUnit, SiteId};
    use crate::units::{lin_to_db, OSNR_REF_BW_HZ};

    fn grid(count: usize) -> ChannelGrid {
        ChannelGrid {
            center_thz: 193.4,
            spacing_ghz: 75.0,
            count,
            symbol_rate_gbaud: 64.0,
        }
    }

    fn edfa(id: &str, gain: f64, nf: f64) -> EdfaUnit {
        EdfaUnit {
            id: id.into(),
            gain_db: gain,
            tilt_db: 0.0,
            nf_curve: vec![[gain, nf]],
            gain_range_db: [0.0, 40.0],
            tilt_range_db: [-3.0, 3.0],
            max_total_out_dbm: 40.0,
            monitors: Monitors::default(),
        }
    }

    fn link(elements: Vec<LineElement>) -> OpticalLink {
        OpticalLink {
            id: LinkId::from("t"),
            endpoints: [SiteId::from("X"), SiteId::from("Y")],
            kind: LinkKind::CarrierLink,
            elements,
            params_known: None,
        }
    }

    #[test]
    fn ase_single_amplifier_reference_bandwidth() {
        let p = ase_power_mw(193.4e12, 5.0, 20.0, OSNR_REF_BW_HZ);
        // h·ν·NF·(G−1)·B at 193.4 THz: −32.99742293 dBm
        assert!((mw_to_dbm(p) + 32.997_422_93).abs() < 1e-6);
        assert!((0.0 - mw_to_dbm(p) - 33.0).abs() < 0.01);
    }

    #[test]
    fn passive_link_has_no_ase() {
        let l = link(vec![LineElement::Span(FiberSpan::new(50.0))]);
        let s = ase_snr(&l, &grid(1), &[0.0]).unwrap();
        assert!(s[0].is_infinite());
        let g = link_gsnr(&l, &grid(1), &[0.0]).unwrap();
        assert_eq!(g.gsnr[0], g.snr_nli[0]);
    }

    #[test]
    fn two_amplifiers_halve_osnr() {
        let g = grid(1);
        let one = link(vec![
            LineElement::Span(FiberSpan::new(100.0)),
            LineElement::Edfa(edfa("a", 20.0, 5.0)),
        ]);
        let two = link(vec![
            LineElement::Span(FiberSpan::new(100.0)),
            LineElement::Edfa(edfa("a", 20.0, 5.0)),
            LineElement::Span(FiberSpan::new(100.0)),
            LineElement::Edfa(edfa("b", 20.0, 5.0)),
        ]);
        let s1 = lin_to_db(ase_snr(&one, &g, &[0.0]).unwrap()[0]);
        let s2 = lin_to_db(ase_snr(&two, &g, &[0.0]).unwrap()[0]);
        assert!((s1 - s2 - 10.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn nli_regression_constant() {
        // independent closed-form evaluation: channel 16 of 32 at 193.4375 THz
        let g = grid(32);
        let span = FiberSpan::new(80.0);
        let b2 = beta2_ps2_per_km(16.7, g.freq_hz(16));
        assert!((b2 + 21.294_917_62).abs() < 1e-6);
        let p = nli_psd_span(&span, 1e-3, g.freq_hz(16), &g).unwrap() * g.symbol_rate_hz();
        assert!((mw_to_dbm(p * 1e3) + 34.159_015_687).abs() < 1e-6);
    }

    #[test]
    fn nli_cubic_and_incoherent() {
        let g = grid(8);
        let one = link(vec![LineElement::Span(FiberSpan::new(80.0))]);
        let n1 = propagate_stages(&link_stages(&one), &g, &[0.0; 8]).unwrap();
        let n2 = propagate_stages(&link_stages(&one), &g, &[3.0103; 8]).unwrap();
        let scale = db_to_lin(3.0103);
        let a = n1.last().unwrap().nli_mw[3];
        let b = n2.last().unwrap().nli_mw[3];
        assert!((b / a / scale.powi(3) - 1.0).abs() < 1e-12);

        let amp = edfa("a", 16.0, 5.0);
        let two = link(vec![
            LineElement::Span(FiberSpan::new(80.0)),
            LineElement::Edfa(amp.clone()),
            LineElement::Span(FiberSpan::new(80.0)),
            LineElement::Edfa(amp),
        ]);
        let single = link(vec![
            LineElement::Span(FiberSpan::new(80.0)),
            LineElement::Edfa(edfa("a", 16.0, 5.0)),
        ]);
        let s1 = nli_snr(&single, &g, &[0.0; 8]).unwrap();
        let s2 = nli_snr(&two, &g, &[0.0; 8]).unwrap();
        assert!((s1[2] / s2[2] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_gamma_means_ase_only_and_degenerate_dispersion() {
        let g = grid(4);
        let mut span = FiberSpan::new(80.0);
        span.gamma_per_w_km = 0.0;
        let l = link(vec![LineElement::Span(span.clone()), LineElement::Edfa(edfa("a", 16.0, 5.0))]);
        let r = link_gsnr(&l, &g, &[0.0; 4]).unwrap();
        assert_eq!(r.gsnr, r.snr_ase);

        span.gamma_per_w_km = 1.3;
        span.dispersion_ps_per_nm_km = 0.0;
        let l = link(vec![LineElement::Span(span)]);
        assert_eq!(nli_snr(&l, &g, &[0.0; 4]), Err(QotError::DegenerateDispersion));
    }

    #[test]
    fn power_out_of_range_detected() {
        let mut a = edfa("hot", 20.0, 5.0);
        a.max_total_out_dbm = 10.0;
        let l = link(vec![LineElement::Edfa(a)]);
        match link_gsnr(&l, &grid(4), &[0.0; 4]) {
            Err(QotError::PowerOutOfRange { edfa, .. }) => assert_eq!(edfa, "hot"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn roadm_and_tilt_apply() {
        let g = grid(3);
        let mut a = edfa("a", 10.0, 5.0);
        a.tilt_db = 2.0;
        let l = link(vec![
            LineElement::Roadm(RoadmUnit {
                id: "r".into(),
                insertion_loss_db: 6.0,
            }),
            LineElement::Edfa(a),
        ]);
        let r = link_gsnr(&l, &g, &[0.0; 3]).unwrap();
        assert!((r.signal_out_dbm[0] - 3.0).abs() < 1e-9);
        assert!((r.signal_out_dbm[1] - 4.0).abs() < 1e-9);
        assert!((r.signal_out_dbm[2] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn launch_sweep_interior_optimum() {
        let l = fixtures::four_span_link();
        let g = fixtures::reference_grid();
        let mid = g.count / 2;
        let sweep: Vec<(f64, LinkGsnr)> = (0..=100)
            .map(|k| {
                let p = -4.0 + 0.1 * k as f64;
                (p, link_gsnr(&l, &g, &vec![p; g.count]).unwrap())
            })
            .collect();
        let (best, _) = sweep
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.gsnr[mid].total_cmp(&b.1 .1.gsnr[mid]))
            .unwrap();
        assert!(best > 0 && best < sweep.len() - 1, "optimum at sweep edge");

        // refine the argmax by golden-section, then check ASE = 2·NLI
        let f = |p: f64| link_gsnr(&l, &g, &vec![p; g.count]).unwrap().gsnr[mid];
        let (mut lo, mut hi) = (sweep[best - 1].0, sweep[best + 1].0);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let x1 = hi - phi * (hi - lo);
            let x2 = lo + phi * (hi - lo);
            if f(x1) > f(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        let r = link_gsnr(&l, &g, &vec![0.5 * (lo + hi); g.count]).unwrap();
        let ratio = inv(r.snr_ase[mid]) / inv(r.snr_nli[mid]);
        assert!((ratio - 2.0).abs() < 0.04, "ASE/NLI = {ratio}");
    }
}
