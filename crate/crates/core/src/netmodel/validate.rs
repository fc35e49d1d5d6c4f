use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{LineElement, LinkKind, Topology};

/// A broken topology invariant: where, which entity, which rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub entity: String,
    pub rule: String,
}

impl Violation {
    fn new(path: impl Into<String>, entity: impl Into<String>, rule: &str) -> Self {
        Self {
            path: path.into(),
            entity: entity.into(),
            rule: rule.to_owned(),
        }
    }
}

/// Checks every topology invariant and returns the violations found (empty
/// when the topology is valid).
pub fn validate_topology(t: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();
    check_grid(t, &mut out);
    check_sites(t, &mut out);
    check_trxs(t, &mut out);
    check_catalogs(t, &mut out);
    check_links(t, &mut out);
    if !pop_graph_connected(t) {
        out.push(Violation::new("links", "pop-graph", "pop-graph-connectivity"));
    }
    out
}

fn check_grid(t: &Topology, out: &mut Vec<Violation>) {
    let g = &t.grid;
    if !(g.center_thz > 0.0 && g.spacing_ghz > 0.0 && g.symbol_rate_gbaud > 0.0) {
        out.push(Violation::new("grid", "grid", "grid-positive"));
    }
    if g.spacing_ghz < g.symbol_rate_gbaud {
        out.push(Violation::new("grid.spacing_ghz", "grid", "grid-overlap"));
    }
    if g.count == 0 || g.count > 128 {
        out.push(Violation::new("grid.count", "grid", "grid-count"));
    }
}

fn check_sites(t: &Topology, out: &mut Vec<Violation>) {
    let mut seen = HashSet::new();
    for (i, s) in t.sites.iter().enumerate() {
        if !seen.insert(s.id.as_str()) {
            out.push(Violation::new(format!("sites[{i}].id"), s.id.as_str(), "duplicate-id"));
        }
        if s.hosts_pop && s.kind != super::SiteKind::Udc {
            out.push(Violation::new(
                format!("sites[{i}].hosts_pop"),
                s.id.as_str(),
                "pop-flag-requires-udc",
            ));
        }
        // with a single POP there is nothing to connect to
        if s.is_pop()
            && t.pops().count() > 1
            && !t
                .carrier_links()
                .any(|l| l.endpoints.iter().any(|e| e == &s.id))
        {
            out.push(Violation::new(format!("sites[{i}]"), s.id.as_str(), "pop-carrier-link"));
        }
        for (j, trx_id) in s.trx_ids.iter().enumerate() {
            match t.trx(trx_id.as_str()) {
                None => out.push(Violation::new(
                    format!("sites[{i}].trx_ids[{j}]"),
                    trx_id.as_str(),
                    "unknown-trx",
                )),
                Some(trx) if trx.site_id != s.id => out.push(Violation::new(
                    format!("sites[{i}].trx_ids[{j}]"),
                    trx_id.as_str(),
                    "trx-site-mismatch",
                )),
                Some(_) => {}
            }
        }
    }
}

fn check_trxs(t: &Topology, out: &mut Vec<Violation>) {
    let mut seen = HashSet::new();
    for (i, x) in t.trxs.iter().enumerate() {
        let id = x.id.as_str();
        if !seen.insert(id) {
            out.push(Violation::new(format!("trxs[{i}].id"), id, "duplicate-id"));
        }
        if x.serial.trim().is_empty() {
            out.push(Violation::new(format!("trxs[{i}].serial"), id, "empty-serial"));
        }
        if t.site(x.site_id.as_str()).is_none() {
            out.push(Violation::new(format!("trxs[{i}].site_id"), id, "unknown-site"));
        }
        if !t.catalogs.iter().any(|c| c.id == x.catalog_id) {
            out.push(Violation::new(format!("trxs[{i}].catalog_id"), id, "unknown-catalog"));
        }
        if !t.noise_models.iter().any(|n| n.id == x.noise_model_id) {
            out.push(Violation::new(
                format!("trxs[{i}].noise_model_id"),
                id,
                "unknown-noise-model",
            ));
        }
    }
    for (i, n) in t.noise_models.iter().enumerate() {
        if !(n.snr_trx_const > 0.0 && n.snr_p_coeff_per_mw > 0.0) {
            out.push(Violation::new(format!("noise_models[{i}]"), &n.id, "non-positive"));
        }
    }
}

fn check_catalogs(t: &Topology, out: &mut Vec<Violation>) {
    for (i, c) in t.catalogs.iter().enumerate() {
        let mut seen = HashSet::new();
        for (j, m) in c.modes.iter().enumerate() {
            if !seen.insert(m.id.as_str()) {
                out.push(Violation::new(format!("catalogs[{i}].modes[{j}].id"), &m.id, "duplicate-id"));
            }
            if m.min_rx_dbm >= m.max_rx_dbm {
                out.push(Violation::new(format!("catalogs[{i}].modes[{j}]"), &m.id, "rx-window"));
            }
        }
        if !c.modes.iter().any(|m| m.id == c.probe_mode_id) {
            out.push(Violation::new(
                format!("catalogs[{i}].probe_mode_id"),
                &c.id,
                "unknown-probe-mode",
            ));
        }
    }
}

fn check_links(t: &Topology, out: &mut Vec<Violation>) {
    let mut seen = HashSet::new();
    for (i, l) in t.links.iter().enumerate() {
        let id = l.id.as_str();
        if !seen.insert(id) {
            out.push(Violation::new(format!("links[{i}].id"), id, "duplicate-id"));
        }
        let ends: Vec<_> = l.endpoints.iter().map(|e| t.site(e.as_str())).collect();
        if ends.iter().any(Option::is_none) {
            out.push(Violation::new(format!("links[{i}].endpoints"), id, "unknown-site"));
        } else if l.endpoints[0] == l.endpoints[1] {
            out.push(Violation::new(format!("links[{i}].endpoints"), id, "self-loop"));
        } else {
            let (a, b) = (ends[0].unwrap(), ends[1].unwrap());
            let ok = match l.kind {
                // one user end, one POP end
                LinkKind::Aal => {
                    (a.is_pop() && b.kind != super::SiteKind::Pop)
                        || (b.is_pop() && a.kind != super::SiteKind::Pop)
                }
                LinkKind::CarrierLink => a.is_pop() && b.is_pop(),
            };
            if !ok {
                let rule = match l.kind {
                    LinkKind::Aal => "aal-endpoints",
                    LinkKind::CarrierLink => "carrier-endpoints",
                };
                out.push(Violation::new(format!("links[{i}].kind"), id, rule));
            }
        }
        if l.elements.is_empty() {
            out.push(Violation::new(format!("links[{i}].elements"), id, "empty-link"));
        }
        for (j, e) in l.elements.iter().enumerate() {
            let path = format!("links[{i}].elements[{j}]");
            check_element(&path, id, e, out);
        }
    }
}

fn check_element(path: &str, link_id: &str, e: &LineElement, out: &mut Vec<Violation>) {
    match e {
        LineElement::Span(s) => {
            let entity = format!("{link_id}/span");
            if !(s.length_km > 0.0 && s.length_km <= 500.0) {
                out.push(Violation::new(format!("{path}.length_km"), &entity, "span-length"));
            }
            if !(0.1..=1.0).contains(&s.attenuation_db_per_km) {
                out.push(Violation::new(
                    format!("{path}.attenuation_db_per_km"),
                    &entity,
                    "span-attenuation",
                ));
            }
            if !(s.gamma_per_w_km >= 0.0) {
                out.push(Violation::new(format!("{path}.gamma_per_w_km"), &entity, "span-gamma"));
            }
            for (name, v) in [("conn_in_db", s.conn_in_db), ("conn_out_db", s.conn_out_db)] {
                if !(0.0..=5.0).contains(&v) {
                    out.push(Violation::new(format!("{path}.{name}"), &entity, "connector-loss"));
                }
            }
        }
        LineElement::Edfa(a) => {
            let [gmin, gmax] = a.gain_range_db;
            let [tmin, tmax] = a.tilt_range_db;
            if gmin > gmax || tmin > tmax {
                out.push(Violation::new(path, &a.id, "range-order"));
            } else if !(gmin..=gmax).contains(&a.gain_db) {
                out.push(Violation::new(format!("{path}.gain_db"), &a.id, "gain-out-of-range"));
            }
            let increasing = a.nf_curve.windows(2).all(|w| w[1][0] > w[0][0]);
            if a.nf_curve.len() < 2 || !increasing {
                out.push(Violation::new(format!("{path}.nf_curve"), &a.id, "nf-curve"));
            }
        }
        LineElement::Roadm(r) => {
            if !(0.0..=25.0).contains(&r.insertion_loss_db) {
                out.push(Violation::new(
                    format!("{path}.insertion_loss_db"),
                    &r.id,
                    "insertion-loss",
                ));
            }
        }
    }
}

/// Whether the POPs form one connected component over carrier links
/// (union-find).
pub fn pop_graph_connected(t: &Topology) -> bool {
    let pops: BTreeMap<&str, usize> = t
        .pops()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    if pops.len() <= 1 {
        return true;
    }
    let mut parent: Vec<usize> = (0..pops.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for l in t.carrier_links() {
        let idx: Option<Vec<usize>> = l
            .endpoints
            .iter()
            .map(|e| pops.get(e.as_str()).copied())
            .collect();
        if let Some(idx) = idx {
            let (ra, rb) = (find(&mut parent, idx[0]), find(&mut parent, idx[1]));
            parent[ra] = rb;
        }
    }
    let root = find(&mut parent, 0);
    (1..pops.len()).all(|i| find(&mut parent, i) == root)
}
