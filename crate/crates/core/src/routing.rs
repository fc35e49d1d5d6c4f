//! Route enumeration over the POP overlay, segment decomposition, first-fit
//! spectrum assignment and route ranking.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{LinkId, LinkKind, OpticalLink, SiteId, Topology};
use crate::qot::{concatenate_gsnr, QotError};

pub const DEFAULT_MAX_POPS: usize = 3;

/// Used channel indices per carrier link.
pub type Occupancy = BTreeMap<LinkId, BTreeSet<usize>>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error("site {0} has no alien access link")]
    NoAalAttachment(SiteId),
    #[error("unknown site {0}")]
    UnknownSite(SiteId),
    #[error("route endpoints must differ")]
    SameSite,
    #[error("max_pops must be at least 2")]
    MaxPopsTooSmall,
    #[error("no channel free on every carrier link of route {0}")]
    SpectrumExhausted(String),
    #[error("missing segment GSNR data for route {0}")]
    MissingSegmentData(String),
    #[error(transparent)]
    Qot(#[from] QotError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteCandidate {
    pub id: String,
    pub site_a: SiteId,
    pub site_b: SiteId,
    pub pop_sequence: Vec<SiteId>,
    /// AAL at `site_a`, the carrier links, then the AAL at `site_b`.
    pub link_sequence: Vec<LinkId>,
    pub hop_count: usize,
}

impl RouteCandidate {
    pub fn carrier_links(&self) -> &[LinkId] {
        let n = self.link_sequence.len();
        if n < 2 {
            &[]
        } else {
            &self.link_sequence[1..n - 1]
        }
    }

    /// Total fiber length of the route, km.
    pub fn length_km(&self, t: &Topology) -> f64 {
        self.link_sequence
            .iter()
            .filter_map(|l| t.link(l.as_str()))
            .map(OpticalLink::length_km)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub route_id: String,
    pub index: usize,
    pub links: Vec<LinkId>,
}

impl Segment {
    pub fn id(&self) -> String {
        format!("{}#{}", self.route_id, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentPolicy {
    /// One segment per link.
    #[default]
    PerLink,
    /// Access links as their own segments and the carrier section between
    /// the first and last POP as one segment.
    PerHop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumAssignment {
    pub route_id: String,
    pub channel_index: usize,
    /// Carrier link and whether the channel is confirmed free on it.
    pub links: Vec<(LinkId, bool)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRoute {
    pub route: RouteCandidate,
    pub e2e_gsnr: f64,
}

fn attach_pops(t: &Topology, site: &SiteId) -> Result<Vec<(SiteId, LinkId)>, RoutingError> {
    if t.site(site.as_str()).is_none() {
        return Err(RoutingError::UnknownSite(site.clone()));
    }
    let mut out: BTreeMap<SiteId, LinkId> = BTreeMap::new();
    for aal in t.aals_of(site) {
        if let Some(pop) = aal.other_end(site) {
            out.entry(pop.clone()).or_insert_with(|| aal.id.clone());
        }
    }
    if out.is_empty() {
        return Err(RoutingError::NoAalAttachment(site.clone()));
    }
    Ok(out.into_iter().collect())
}

/// Lowest-id carrier link between every pair of adjacent POPs.
fn carrier_adjacency(t: &Topology) -> BTreeMap<SiteId, BTreeMap<SiteId, LinkId>> {
    let mut adj: BTreeMap<SiteId, BTreeMap<SiteId, LinkId>> = BTreeMap::new();
    for l in t.links.iter().filter(|l| l.kind == LinkKind::CarrierLink) {
        let [x, y] = &l.endpoints;
        for (u, v) in [(x, y), (y, x)] {
            let slot = adj.entry(u.clone()).or_default().entry(v.clone());
            slot.and_modify(|cur| {
                if l.id < *cur {
                    *cur = l.id.clone();
                }
            })
            .or_insert_with(|| l.id.clone());
        }
    }
    adj
}

/// All simple POP sequences of 2..=`max_pops` POPs joining `a` to `b`,
/// ordered by length then POP ids.
pub fn enumerate_routes(
    t: &Topology,
    a: &SiteId,
    b: &SiteId,
    max_pops: usize,
) -> Result<Vec<RouteCandidate>, RoutingError> {
    if a == b {
        return Err(RoutingError::SameSite);
    }
    if max_pops < 2 {
        return Err(RoutingError::MaxPopsTooSmall);
    }
    let starts = attach_pops(t, a)?;
    let ends: BTreeMap<SiteId, LinkId> = attach_pops(t, b)?.into_iter().collect();
    let adj = carrier_adjacency(t);

    let mut out = Vec::new();
    let mut stack: Vec<SiteId> = Vec::new();
    for (p0, aal_a) in &starts {
        stack.clear();
        stack.push(p0.clone());
        extend(&adj, &ends, max_pops, &mut stack, &mut |pops| {
            let mut links = vec![aal_a.clone()];
            for w in pops.windows(2) {
                links.push(adj[&w[0]][&w[1]].clone());
            }
            links.push(ends[pops.last().unwrap()].clone());
            out.push(RouteCandidate {
                id: route_id(a, pops, b),
                site_a: a.clone(),
                site_b: b.clone(),
                pop_sequence: pops.to_vec(),
                link_sequence: links,
                hop_count: pops.len(),
            });
        });
    }
    out.sort_by(|x, y| {
        x.pop_sequence
            .len()
            .cmp(&y.pop_sequence.len())
            .then_with(|| x.pop_sequence.cmp(&y.pop_sequence))
            .then_with(|| x.id.cmp(&y.id))
    });
    Ok(out)
}

fn extend(
    adj: &BTreeMap<SiteId, BTreeMap<SiteId, LinkId>>,
    ends: &BTreeMap<SiteId, LinkId>,
    max_pops: usize,
    stack: &mut Vec<SiteId>,
    emit: &mut dyn FnMut(&[SiteId]),
) {
    let last = stack.last().unwrap().clone();
    if stack.len() >= 2 && ends.contains_key(&last) {
        emit(stack);
    }
    if stack.len() == max_pops {
        return;
    }
    if let Some(next) = adj.get(&last) {
        for n in next.keys() {
            if !stack.contains(n) {
                stack.push(n.clone());
                extend(adj, ends, max_pops, stack, emit);
                stack.pop();
            }
        }
    }
}

pub fn route_id(a: &SiteId, pops: &[SiteId], b: &SiteId) -> String {
    let mid: Vec<&str> = pops.iter().map(SiteId::as_str).collect();
    format!("{a}~{}~{b}", mid.join("-"))
}

pub fn decompose_segments(r: &RouteCandidate, policy: SegmentPolicy) -> Vec<Segment> {
    let groups: Vec<Vec<LinkId>> = match policy {
        SegmentPolicy::PerLink => r.link_sequence.iter().map(|l| vec![l.clone()]).collect(),
        SegmentPolicy::PerHop => {
            let n = r.link_sequence.len();
            let mut g = vec![vec![r.link_sequence[0].clone()]];
            if n > 2 {
                g.push(r.link_sequence[1..n - 1].to_vec());
            }
            if n > 1 {
                g.push(vec![r.link_sequence[n - 1].clone()]);
            }
            g
        }
    };
    groups
        .into_iter()
        .enumerate()
        .map(|(index, links)| Segment {
            route_id: r.id.clone(),
            index,
            links,
        })
        .collect()
}

/// Lowest channel index free on every carrier link of `r`.
pub fn assign_spectrum(
    t: &Topology,
    r: &RouteCandidate,
    occupancy: &Occupancy,
) -> Result<SpectrumAssignment, RoutingError> {
    let empty = BTreeSet::new();
    let used: Vec<&BTreeSet<usize>> = r
        .carrier_links()
        .iter()
        .map(|l| occupancy.get(l).unwrap_or(&empty))
        .collect();
    let ch = (0..t.grid.count)
        .find(|c| used.iter().all(|u| !u.contains(c)))
        .ok_or_else(|| RoutingError::SpectrumExhausted(r.id.clone()))?;
    Ok(SpectrumAssignment {
        route_id: r.id.clone(),
        channel_index: ch,
        links: r.carrier_links().iter().map(|l| (l.clone(), true)).collect(),
    })
}

/// Orders candidates by end-to-end GSNR descending, then fewer hops, then id.
/// `segment_gsnr` maps route id to its per-segment linear GSNRs.
pub fn rank_routes(
    candidates: &[RouteCandidate],
    segment_gsnr: &BTreeMap<String, Vec<f64>>,
) -> Result<Vec<RankedRoute>, RoutingError> {
    let mut out = Vec::with_capacity(candidates.len());
    for c in candidates {
        let g = segment_gsnr
            .get(&c.id)
            .filter(|g| !g.is_empty())
            .ok_or_else(|| RoutingError::MissingSegmentData(c.id.clone()))?;
        out.push(RankedRoute {
            route: c.clone(),
            e2e_gsnr: concatenate_gsnr(g)?,
        });
    }
    out.sort_by(|x, y| {
        y.e2e_gsnr
            .total_cmp(&x.e2e_gsnr)
            .then(x.route.hop_count.cmp(&y.route.hop_count))
            .then_with(|| x.route.id.cmp(&y.route.id))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::units::db_to_lin;
    use proptest::prelude::*;

    fn s(x: &str) -> SiteId {
        SiteId::from(x)
    }

    #[test]
    fn five_pop_mesh_has_four_routes() {
        let t = fixtures::five_pop_mesh();
        let r = enumerate_routes(&t, &s("A"), &s("B"), 3).unwrap();
        let ids: Vec<_> = r.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["A~P1-P5~B", "A~P1-P2-P5~B", "A~P1-P3-P5~B", "A~P1-P4-P5~B"]);
        assert_eq!(r[1].link_sequence.len(), 4);
        assert_eq!(enumerate_routes(&t, &s("A"), &s("B"), 2).unwrap().len(), 1);
    }

    #[test]
    fn missing_aal_is_an_error() {
        let mut t = fixtures::five_pop_mesh();
        t.links.retain(|l| !(l.kind == LinkKind::Aal && l.endpoints.contains(&s("B"))));
        assert_eq!(
            enumerate_routes(&t, &s("A"), &s("B"), 3),
            Err(RoutingError::NoAalAttachment(s("B")))
        );
    }

    #[test]
    fn segment_policies() {
        let t = fixtures::five_pop_mesh();
        let r = enumerate_routes(&t, &s("A"), &s("B"), 3).unwrap();
        assert_eq!(decompose_segments(&r[0], SegmentPolicy::PerLink).len(), 3);
        assert_eq!(decompose_segments(&r[0], SegmentPolicy::PerHop).len(), 3);
        let segs = decompose_segments(&r[1], SegmentPolicy::PerLink);
        assert_eq!(segs.len(), 4);
        let flat: Vec<_> = segs.iter().flat_map(|s| s.links.clone()).collect();
        assert_eq!(flat, r[1].link_sequence);
        let hop = decompose_segments(&r[1], SegmentPolicy::PerHop);
        assert_eq!(hop.len(), 3);
        assert_eq!(hop[1].links.len(), 2);
    }

    #[test]
    fn spectrum_first_fit() {
        let t = fixtures::five_pop_mesh();
        let r = enumerate_routes(&t, &s("A"), &s("B"), 3).unwrap();
        let route = &r[1];
        let mut occ = Occupancy::new();
        assert_eq!(assign_spectrum(&t, route, &occ).unwrap().channel_index, 0);
        let cl = route.carrier_links();
        occ.insert(cl[0].clone(), [0, 1].into());
        occ.insert(cl[1].clone(), [1, 2].into());
        assert_eq!(assign_spectrum(&t, route, &occ).unwrap().channel_index, 3);
        occ.insert(cl[0].clone(), (0..t.grid.count).collect());
        assert!(matches!(
            assign_spectrum(&t, route, &occ),
            Err(RoutingError::SpectrumExhausted(_))
        ));
    }

    #[test]
    fn ranking_rules() {
        let t = fixtures::five_pop_mesh();
        let r = enumerate_routes(&t, &s("A"), &s("B"), 3).unwrap();
        let mut g = BTreeMap::new();
        g.insert(r[0].id.clone(), vec![db_to_lin(12.0)]);
        g.insert(r[1].id.clone(), vec![db_to_lin(13.0)]);
        let ranked = rank_routes(&r[..2], &g).unwrap();
        assert_eq!(ranked[0].route.id, r[1].id);

        g.insert(r[1].id.clone(), vec![db_to_lin(12.0)]);
        let ranked = rank_routes(&r[..2], &g).unwrap();
        assert_eq!(ranked[0].route.id, r[0].id);

        assert!(matches!(
            rank_routes(&r, &g),
            Err(RoutingError::MissingSegmentData(_))
        ));
    }

    #[test]
    fn ranking_matches_brute_force() {
        let t = fixtures::five_pop_mesh();
        let r = enumerate_routes(&t, &s("A"), &s("B"), 3).unwrap();
        let segs = [
            vec![20.0, 18.0, 17.0],
            vec![20.0, 18.0, 17.0, 19.0],
            vec![22.0, 21.0, 15.0, 20.0],
            vec![19.0, 19.0, 19.0, 19.0],
        ];
        let mut g = BTreeMap::new();
        for (route, s) in r.iter().zip(&segs) {
            g.insert(route.id.clone(), s.iter().map(|&d| db_to_lin(d)).collect::<Vec<_>>());
        }
        let ranked = rank_routes(&r, &g).unwrap();
        // brute force: try every permutation and keep the one that is sorted
        let e2e = |i: usize| 1.0 / segs[i].iter().map(|&d| 1.0 / db_to_lin(d)).sum::<f64>();
        let mut best: Option<Vec<usize>> = None;
        permute(&mut vec![0, 1, 2, 3], 0, &mut |p| {
            let sorted = p.windows(2).all(|w| {
                let (a, b) = (e2e(w[0]), e2e(w[1]));
                a > b || (a == b && r[w[0]].hop_count <= r[w[1]].hop_count)
            });
            if sorted {
                best = Some(p.to_vec());
            }
        });
        let expect: Vec<_> = best.unwrap().iter().map(|&i| r[i].id.clone()).collect();
        let got: Vec<_> = ranked.iter().map(|x| x.route.id.clone()).collect();
        assert_eq!(got, expect);
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    /// Counts simple POP paths by brute force over all ordered subsets.
    fn brute_force_count(m: usize, max_pops: usize) -> usize {
        // POP 0 is attached to A, POP m-1 to B, graph is complete
        let mut count = 0;
        let inner: Vec<usize> = (1..m - 1).collect();
        for mask in 0u32..(1 << inner.len()) {
            let chosen: Vec<usize> = inner
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &p)| p)
                .collect();
            if chosen.len() + 2 > max_pops {
                continue;
            }
            let k = chosen.len();
            count += (1..=k).product::<usize>().max(1);
        }
        count
    }

    #[test]
    fn complete_graph_counts_match_exhaustive_search() {
        for m in 3..=8 {
            let t = fixtures::complete_pop_graph(m);
            let r = enumerate_routes(&t, &s("A"), &s("B"), 3).unwrap();
            assert_eq!(r.len(), 1 + (m - 2), "M={m}");
            assert_eq!(r.len(), brute_force_count(m, 3));
            for max in 2..=m.min(5) {
                let r = enumerate_routes(&t, &s("A"), &s("B"), max).unwrap();
                assert_eq!(r.len(), brute_force_count(m, max), "M={m} max={max}");
                for route in &r {
                    check_route_invariants(&t, route);
                }
            }
        }
    }

    fn check_route_invariants(t: &Topology, r: &RouteCandidate) {
        let set: BTreeSet<_> = r.pop_sequence.iter().collect();
        assert_eq!(set.len(), r.pop_sequence.len());
        assert_eq!(r.link_sequence.len(), r.pop_sequence.len() + 1);
        let first = t.link(r.link_sequence[0].as_str()).unwrap();
        assert!(first.connects(&r.site_a, &r.pop_sequence[0]));
        let last = t.link(r.link_sequence.last().unwrap().as_str()).unwrap();
        assert!(last.connects(&r.site_b, r.pop_sequence.last().unwrap()));
        for (w, l) in r.pop_sequence.windows(2).zip(r.carrier_links()) {
            assert!(t.link(l.as_str()).unwrap().connects(&w[0], &w[1]));
        }
    }

    proptest! {
        #[test]
        fn assignment_is_minimal_free_index(
            a in proptest::collection::btree_set(0usize..20, 0..15),
            b in proptest::collection::btree_set(0usize..20, 0..15)
        ) {
            let t = fixtures::five_pop_mesh();
            let r = enumerate_routes(&t, &s("A"), &s("B"), 3).unwrap();
            let route = &r[1];
            let cl = route.carrier_links();
            let mut occ = Occupancy::new();
            occ.insert(cl[0].clone(), a.clone());
            occ.insert(cl[1].clone(), b.clone());
            let ch = assign_spectrum(&t, route, &occ).unwrap().channel_index;
            prop_assert!(!a.contains(&ch) && !b.contains(&ch));
            prop_assert!((0..ch).all(|c| a.contains(&c) || b.contains(&c)));
        }

        #[test]
        fn ranking_is_permutation_stable(
            perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
            g in proptest::collection::vec(10.0f64..20.0, 4)
        ) {
            let t = fixtures::five_pop_mesh();
            let r = enumerate_routes(&t, &s("A"), &s("B"), 3).unwrap();
            let mut m = BTreeMap::new();
            for (route, d) in r.iter().zip(&g) {
                m.insert(route.id.clone(), vec![db_to_lin(*d)]);
            }
            let shuffled: Vec<_> = perm.iter().map(|&i| r[i].clone()).collect();
            let x = rank_routes(&r, &m).unwrap();
            let y = rank_routes(&shuffled, &m).unwrap();
            prop_assert_eq!(x, y);
        }
    }
}
