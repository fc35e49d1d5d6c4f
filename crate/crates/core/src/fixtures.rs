//! Reference topologies and lines used by tests, scenarios and the service.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::modes::TrxMode;
use crate::netmodel::{
    CatalogEntry, ChannelGrid, EdfaUnit, FiberSpan, LineElement, LinkId, LinkKind, Monitors,
    NoiseModelEntry, OpticalLink, Site, SiteId, SiteKind, Topology, TrxId, TrxUnit,
};
use crate::qot::Modulation;

/// 32 channels on a 75 GHz grid at 193.4 THz, 64 GBaud.
pub fn reference_grid() -> ChannelGrid {
    ChannelGrid {
        center_thz: 193.4,
        spacing_ghz: 75.0,
        count: 32,
        symbol_rate_gbaud: 64.0,
    }
}

/// Nominal NF curve shared by the fixture amplifiers.
pub fn nominal_nf_curve() -> Vec<[f64; 2]> {
    vec![[10.0, 6.5], [16.0, 5.5], [20.0, 5.0], [26.0, 4.8]]
}

pub fn edfa(id: &str, gain_db: f64) -> EdfaUnit {
    EdfaUnit {
        id: id.into(),
        gain_db,
        tilt_db: 0.0,
        nf_curve: nominal_nf_curve(),
        gain_range_db: [10.0, 26.0],
        tilt_range_db: [-3.0, 3.0],
        max_total_out_dbm: 25.0,
        monitors: Monitors::default(),
    }
}

fn site(id: &str, kind: SiteKind, trx: &[&str]) -> Site {
    Site {
        id: SiteId::from(id),
        kind,
        trx_ids: trx.iter().map(|&t| TrxId::from(t)).collect(),
        hosts_pop: false,
    }
}

fn link(id: &str, a: &str, b: &str, kind: LinkKind, elements: Vec<LineElement>) -> OpticalLink {
    OpticalLink {
        id: LinkId::from(id),
        endpoints: [SiteId::from(a), SiteId::from(b)],
        kind,
        elements,
        params_known: None,
    }
}

fn carrier_elements(tag: &str) -> Vec<LineElement> {
    vec![
        LineElement::Span(FiberSpan::new(60.0)),
        LineElement::Edfa(edfa(&format!("{tag}/EDFA#1"), 12.0)),
        LineElement::Span(FiberSpan::new(60.0)),
        LineElement::Edfa(edfa(&format!("{tag}/EDFA#2"), 12.0)),
    ]
}

fn aal_elements() -> Vec<LineElement> {
    vec![LineElement::Span(FiberSpan::new(20.0))]
}

pub fn mode_400g() -> TrxMode {
    TrxMode::new("400G-16QAM-64G-oFEC", 400.0, Modulation::Qam16, 64.0, "oFEC")
}

pub fn mode_200g() -> TrxMode {
    TrxMode::new("200G-QPSK-64G-oFEC", 200.0, Modulation::Qpsk, 64.0, "oFEC")
}

/// POPs `P1..Pm` fully meshed, user site `A` attached to `P1` and `B` to
/// `Pm`, each with one transceiver.
pub fn complete_pop_graph(m: usize) -> Topology {
    let mut sites = vec![
        site("A", SiteKind::Sdc, &["A-T1"]),
        site("B", SiteKind::Sdc, &["B-T1"]),
    ];
    for i in 1..=m {
        sites.push(site(&format!("P{i}"), SiteKind::Pop, &[]));
    }
    let mut links = vec![
        link("A-P1", "A", "P1", LinkKind::Aal, aal_elements()),
        link(&format!("B-P{m}"), "B", &format!("P{m}"), LinkKind::Aal, aal_elements()),
    ];
    for i in 1..=m {
        for j in i + 1..=m {
            let id = format!("P{i}-P{j}");
            links.push(link(
                &id,
                &format!("P{i}"),
                &format!("P{j}"),
                LinkKind::CarrierLink,
                carrier_elements(&id),
            ));
        }
    }
    let trx = |id: &str, site: &str, serial: &str| TrxUnit {
        id: TrxId::from(id),
        serial: serial.into(),
        site_id: SiteId::from(site),
        catalog_id: "cat-std".into(),
        noise_model_id: "nm-std".into(),
    };
    Topology {
        grid: reference_grid(),
        sites,
        trxs: vec![trx("A-T1", "A", "SN-A-0001"), trx("B-T1", "B", "SN-B-0001")],
        catalogs: vec![
            CatalogEntry {
                id: "cat-std".into(),
                probe_mode_id: mode_400g().id,
                modes: vec![mode_400g(), mode_200g()],
            },
            CatalogEntry {
                id: "cat-alt".into(),
                probe_mode_id: "200G-QPSK-64G-SCFEC".into(),
                modes: vec![TrxMode::new("200G-QPSK-64G-SCFEC", 200.0, Modulation::Qpsk, 64.0, "SC-FEC")],
            },
        ],
        noise_models: vec![NoiseModelEntry {
            id: "nm-std".into(),
            snr_trx_const: 1000.0,
            snr_p_coeff_per_mw: 1.0e4,
        }],
        links,
        allowlist: BTreeSet::from(["SN-A-0001".to_owned(), "SN-B-0001".to_owned()]),
    }
}

/// The five-POP full mesh with `A` on `P1` and `B` on `P5`.
pub fn five_pop_mesh() -> Topology {
    complete_pop_graph(5)
}

/// A small metro topology: one suburban DC, one urban DC hosting POP
/// equipment and two dedicated POPs.
pub fn metro_topology() -> Topology {
    let mut t = complete_pop_graph(2);
    let mut udc = site("U1", SiteKind::Udc, &[]);
    udc.hosts_pop = true;
    t.sites.push(udc);
    t.links.push(link("U1-P1", "U1", "P1", LinkKind::CarrierLink, carrier_elements("U1-P1")));
    t.links.push(link("S-U1", "A", "U1", LinkKind::Aal, aal_elements()));
    t
}

/// `n` POPs `P0..` with a carrier link per valid edge; out-of-range and
/// self-loop edges are skipped.
pub fn random_pop_graph(n: usize, edges: &[(usize, usize)]) -> Topology {
    let mut t = complete_pop_graph(2);
    t.sites.retain(|s| !s.is_pop());
    t.links.clear();
    for i in 0..n {
        t.sites.push(site(&format!("P{i}"), SiteKind::Pop, &[]));
    }
    for (k, &(a, b)) in edges.iter().enumerate() {
        if a < n && b < n && a != b {
            t.links.push(link(
                &format!("L{k}"),
                &format!("P{a}"),
                &format!("P{b}"),
                LinkKind::CarrierLink,
                carrier_elements("x"),
            ));
        }
    }
    t
}

/// Wraps a single carrier link into a topology of two POPs.
pub fn single_link_topology(l: OpticalLink) -> Topology {
    let mut t = complete_pop_graph(2);
    t.links.clear();
    t.sites = vec![
        site(l.endpoints[0].as_str(), SiteKind::Pop, &[]),
        site(l.endpoints[1].as_str(), SiteKind::Pop, &[]),
    ];
    t.trxs.clear();
    t.links.push(l);
    t
}

/// 4 × 80 km spans, each followed by a 16 dB amplifier `EDFA#k`.
pub fn four_span_link() -> OpticalLink {
    let mut elements = Vec::new();
    for k in 1..=4 {
        elements.push(LineElement::Span(FiberSpan::new(80.0)));
        elements.push(LineElement::Edfa(edfa(&format!("EDFA#{k}"), 16.0)));
    }
    link("LINK-4x80", "P1", "P2", LinkKind::CarrierLink, elements)
}

/// Design (prior) view of a two-amplifier line: connectors unknown (zero),
/// nominal NF curves.
pub fn calibration_link() -> OpticalLink {
    link(
        "LINK-CAL",
        "P1",
        "P2",
        LinkKind::CarrierLink,
        vec![
            LineElement::Span(FiberSpan::new(70.0)),
            LineElement::Edfa(edfa("EDFA-1", 16.0)),
            LineElement::Span(FiberSpan::new(80.0)),
            LineElement::Edfa(edfa("EDFA-2", 17.0)),
        ],
    )
}

/// Shifts the whole NF curve of `a` so that it reads `nf_db` at its gain.
pub fn set_nf_at_gain(a: &mut EdfaUnit, nf_db: f64) {
    let delta = nf_db - a.nf_at(a.gain_db);
    for p in &mut a.nf_curve {
        p[1] += delta;
    }
}

/// Ground truth behind [`calibration_link`]: NF 5.0 and 6.0 dB at the
/// operating gains, connector losses 0.5 and 1.0 dB.
pub fn calibration_truth() -> OpticalLink {
    let mut l = calibration_link();
    let mut conn = [0.5, 1.0].into_iter();
    let mut nf = [5.0, 6.0].into_iter();
    for el in &mut l.elements {
        match el {
            LineElement::Span(s) => s.conn_in_db = conn.next().unwrap(),
            LineElement::Edfa(a) => set_nf_at_gain(a, nf.next().unwrap()),
            LineElement::Roadm(_) => {}
        }
    }
    l
}

/// Four in-line amplifiers behind spans with a 1.5 dB spectral loss tilt
/// each, giving a strongly tilted accumulated GSNR at the last amplifier.
pub fn optimizer_link() -> OpticalLink {
    let mut elements = Vec::new();
    for k in 1..=4 {
        let mut s = FiberSpan::new(80.0);
        s.loss_tilt_db = 1.5;
        elements.push(LineElement::Span(s));
        elements.push(LineElement::Edfa(edfa(&format!("ILA#{k}"), 16.0)));
    }
    link("LINK-ILA", "P1", "P2", LinkKind::CarrierLink, elements)
}

/// The five-POP mesh plus the 4 × 80 km line between `P1` and `P2` and the
/// tilted ILA line between `P3` and `P4`. Used by the service and scenarios.
pub fn demo_topology() -> Topology {
    let mut t = five_pop_mesh();
    t.links.push(four_span_link());
    let mut ila = optimizer_link();
    ila.endpoints = [SiteId::from("P3"), SiteId::from("P4")];
    t.links.push(ila);
    t
}

/// A random 2–4 span line: returns `(truth, design)`. The truth carries
/// connector losses at span inputs and NF offsets the design does not know.
pub fn random_calibration_case(seed: u64) -> (OpticalLink, OpticalLink) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spans = rng.random_range(2..=4);
    let mut design = Vec::new();
    let mut truth = Vec::new();
    for k in 1..=spans {
        let len = rng.random_range(50.0..100.0_f64).round();
        let conn = rng.random_range(0.2..2.0_f64);
        let gain = (len * 0.2 + 1.0_f64).round().clamp(10.0, 26.0);
        let offset = rng.random_range(-1.0..1.5_f64);
        let span = FiberSpan::new(len);
        let amp = edfa(&format!("EDFA#{k}"), gain);
        design.push(LineElement::Span(span.clone()));
        design.push(LineElement::Edfa(amp.clone()));
        let mut span_t = span;
        span_t.conn_in_db = conn;
        let mut amp_t = amp;
        let nf = amp_t.nf_at(gain) + offset;
        set_nf_at_gain(&mut amp_t, nf);
        truth.push(LineElement::Span(span_t));
        truth.push(LineElement::Edfa(amp_t));
    }
    let id = format!("LINK-R{seed}");
    (
        link(&id, "P1", "P2", LinkKind::CarrierLink, truth),
        link(&id, "P1", "P2", LinkKind::CarrierLink, design),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::validate_topology;

    #[test]
    fn fixtures_validate() {
        for t in [
            five_pop_mesh(),
            demo_topology(),
            metro_topology(),
            single_link_topology(four_span_link()),
            single_link_topology(optimizer_link()),
            single_link_topology(calibration_truth()),
        ] {
            assert_eq!(validate_topology(&t), vec![]);
        }
        for seed in 0..20 {
            let (truth, design) = random_calibration_case(seed);
            assert_eq!(validate_topology(&single_link_topology(truth)), vec![]);
            assert_eq!(validate_topology(&single_link_topology(design)), vec![]);
        }
    }

    #[test]
    fn calibration_truth_values() {
        let t = calibration_truth();
        let nfs: Vec<f64> = t.edfas().map(|a| a.nf_at(a.gain_db)).collect();
        assert!((nfs[0] - 5.0).abs() < 1e-12 && (nfs[1] - 6.0).abs() < 1e-12);
    }
}
