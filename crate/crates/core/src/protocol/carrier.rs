//! Carrier-side orchestration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::messages::{Endpoint, ErrorCode, MessageBody, Party, ProtocolMessage, Verdict};
use super::probe::segment_key;
use super::{ModeSelection, ProtocolError, SessionPolicy, State};
use crate::modes::{intersect_catalogs, probe_plan, select_mode, ModeCatalog, TrxMode};
use crate::netmodel::{LinkId, SiteId, Topology, TrxId};
use crate::qot::{deduce_segment_gsnr, SegmentQot};
use crate::routing::{
    assign_spectrum, decompose_segments, enumerate_routes, rank_routes, Occupancy, RankedRoute, RouteCandidate,
    SpectrumAssignment,
};
use crate::units::{db_to_lin, dbm_to_mw, lin_to_db};

/// Read-only world the carrier decides against.
#[derive(Debug, Clone, Copy)]
pub struct CarrierContext<'a> {
    pub topology: &'a Topology,
    pub occupancy: &'a Occupancy,
    pub policy: &'a SessionPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisteredTrx {
    pub site: SiteId,
    pub trx_id: TrxId,
}

/// One distinct segment to probe. Routes sharing links share the probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTask {
    pub segment_id: String,
    pub links: Vec<LinkId>,
    pub channel: usize,
}

/// Carrier view of a provisioning session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub state: State,
    /// Every state entered, starting with `Idle`.
    pub history: Vec<State>,
    pub site_a: Option<SiteId>,
    pub site_b: Option<SiteId>,
    pub registered: BTreeMap<Endpoint, RegisteredTrx>,
    pub path_requested: bool,
    pub catalogs: BTreeMap<Endpoint, ModeCatalog>,
    pub common_modes: Vec<TrxMode>,
    pub probe_mode: Option<String>,
    pub candidates: Vec<(RouteCandidate, SpectrumAssignment)>,
    pub probes: Vec<ProbeTask>,
    pub segments: Vec<SegmentQot>,
    pub probe_rx_dbm: BTreeMap<String, f64>,
    pub route: Option<RankedRoute>,
    pub e2e_gsnr_db: Option<f64>,
    pub rx_dbm: Option<f64>,
    pub mode: Option<TrxMode>,
    /// Each endpoint's own id for the selected mode.
    pub mode_ids: BTreeMap<Endpoint, String>,
    pub spectrum: Option<SpectrumAssignment>,
    pub acks: BTreeSet<Endpoint>,
    pub error: Option<ErrorCode>,
    pub error_detail: Option<String>,
    pub decision_reason: Option<String>,
}

impl SessionState {
    pub fn new(session_id: &str) -> Self {
        Self {
            session_id: session_id.to_owned(),
            state: State::Idle,
            history: vec![State::Idle],
            site_a: None,
            site_b: None,
            registered: BTreeMap::new(),
            path_requested: false,
            catalogs: BTreeMap::new(),
            common_modes: Vec::new(),
            probe_mode: None,
            candidates: Vec::new(),
            probes: Vec::new(),
            segments: Vec::new(),
            probe_rx_dbm: BTreeMap::new(),
            route: None,
            e2e_gsnr_db: None,
            rx_dbm: None,
            mode: None,
            mode_ids: BTreeMap::new(),
            spectrum: None,
            acks: BTreeSet::new(),
            error: None,
            error_detail: None,
            decision_reason: None,
        }
    }

    fn enter(&mut self, s: State) {
        self.state = s;
        self.history.push(s);
    }

    fn msg(&self, to: Party, body: MessageBody) -> ProtocolMessage {
        ProtocolMessage::new(&self.session_id, Party::Carrier, to, body)
    }

    /// Enters Errored and tells both users why.
    pub(crate) fn fail(&mut self, code: ErrorCode, detail: String) -> Vec<ProtocolMessage> {
        self.enter(State::Errored);
        self.error = Some(code);
        self.error_detail = Some(detail.clone());
        [Party::UserA, Party::UserB]
            .into_iter()
            .map(|p| {
                self.msg(
                    p,
                    MessageBody::Error {
                        code,
                        detail: detail.clone(),
                    },
                )
            })
            .collect()
    }

    fn next_probe(&self, ctx: &CarrierContext) -> ProtocolMessage {
        let p = &self.probes[self.segments.len()];
        self.msg(
            Party::UserA,
            MessageBody::ProbeRequest {
                segment_id: p.segment_id.clone(),
                links: p.links.clone(),
                probe_mode: self.probe_mode.clone().unwrap_or_default(),
                channel: p.channel,
                launch_dbm: ctx.policy.launch_dbm,
            },
        )
    }
}

fn register(
    mut s: SessionState,
    ctx: &CarrierContext,
    from: Party,
    endpoint: Endpoint,
    site: SiteId,
    trx_id: TrxId,
    serial: String,
) -> (SessionState, Vec<ProtocolMessage>) {
    let t = ctx.topology;
    let ok = from.endpoint() == Some(endpoint)
        && !s.registered.contains_key(&endpoint)
        && t.allowlist.contains(&serial)
        && t.trx(trx_id.as_str())
            .is_some_and(|x| x.serial == serial && x.site_id == site);
    if !ok {
        let mut out = vec![s.msg(from, MessageBody::AuthResult { endpoint, ok: false })];
        out.extend(s.fail(ErrorCode::AuthFailed, format!("transceiver {trx_id} serial {serial} rejected")));
        return (s, out);
    }
    s.registered.insert(endpoint, RegisteredTrx { site, trx_id });
    if s.state == State::Idle {
        s.enter(State::Registering);
    }
    let mut out = vec![s.msg(from, MessageBody::AuthResult { endpoint, ok: true })];
    if s.registered.len() == 2 {
        s.enter(State::Authenticated);
        if s.path_requested {
            out.extend(request_catalogs(&mut s));
        }
    }
    (s, out)
}

fn request_catalogs(s: &mut SessionState) -> Vec<ProtocolMessage> {
    [Endpoint::A, Endpoint::B]
        .into_iter()
        .map(|e| s.msg(e.party(), MessageBody::CatalogRequest { endpoint: e }))
        .collect()
}

/// Both catalogs are in: intersect, plan probes over every candidate route.
fn plan_probes(mut s: SessionState, ctx: &CarrierContext) -> (SessionState, Vec<ProtocolMessage>) {
    s.enter(State::CatalogExchanged);
    let (a, b) = (&s.catalogs[&Endpoint::A], &s.catalogs[&Endpoint::B]);
    s.common_modes = intersect_catalogs(a, b);
    if s.common_modes.is_empty() {
        let d = format!("catalogs of {} and {} share no mode", a.trx_id, b.trx_id);
        let out = s.fail(ErrorCode::NoInteroperableMode, d);
        return (s, out);
    }
    let probe = probe_plan(a, b).expect("non-empty intersection");
    s.probe_mode = Some(probe.id);

    let (site_a, site_b) = (s.site_a.clone().expect("set"), s.site_b.clone().expect("set"));
    let routes = match enumerate_routes(ctx.topology, &site_a, &site_b, ctx.policy.max_pops) {
        Ok(r) if !r.is_empty() => r,
        Ok(_) => {
            let out = s.fail(ErrorCode::NoRoute, format!("no route from {site_a} to {site_b}"));
            return (s, out);
        }
        Err(e) => {
            let out = s.fail(ErrorCode::NoRoute, e.to_string());
            return (s, out);
        }
    };
    s.candidates = routes
        .into_iter()
        .filter_map(|r| assign_spectrum(ctx.topology, &r, ctx.occupancy).ok().map(|a| (r, a)))
        .collect();
    if s.candidates.is_empty() {
        let out = s.fail(
            ErrorCode::SpectrumExhausted,
            format!("no free channel on any route from {site_a} to {site_b}"),
        );
        return (s, out);
    }
    let mut seen = BTreeSet::new();
    for (r, a) in &s.candidates {
        for seg in decompose_segments(r, ctx.policy.segment_policy) {
            let key = segment_key(&seg.links);
            if seen.insert(key.clone()) {
                s.probes.push(ProbeTask {
                    segment_id: key,
                    links: seg.links,
                    channel: a.channel_index,
                });
            }
        }
    }
    s.enter(State::Probing);
    let out = vec![s.next_probe(ctx)];
    (s, out)
}

/// All probes answered: rank routes and choose the mode.
fn estimate(mut s: SessionState, ctx: &CarrierContext) -> (SessionState, Vec<ProtocolMessage>) {
    let gsnr: BTreeMap<&str, f64> = s.segments.iter().map(|q| (q.segment_id.as_str(), q.gsnr)).collect();
    let per_route: BTreeMap<String, Vec<f64>> = s
        .candidates
        .iter()
        .map(|(r, _)| {
            let g = decompose_segments(r, ctx.policy.segment_policy)
                .iter()
                .map(|seg| gsnr[segment_key(&seg.links).as_str()])
                .collect();
            (r.id.clone(), g)
        })
        .collect();
    let routes: Vec<RouteCandidate> = s.candidates.iter().map(|(r, _)| r.clone()).collect();
    let ranked = match rank_routes(&routes, &per_route) {
        Ok(r) => r,
        Err(e) => {
            let out = s.fail(ErrorCode::ProbeFailed, e.to_string());
            return (s, out);
        }
    };
    let best = ranked.into_iter().next().expect("at least one candidate");
    let spectrum = s
        .candidates
        .iter()
        .find(|(r, _)| r.id == best.route.id)
        .map(|(_, a)| a.clone())
        .expect("ranked from candidates");
    let last = decompose_segments(&best.route, ctx.policy.segment_policy)
        .last()
        .map(|seg| segment_key(&seg.links))
        .expect("routes have segments");
    s.rx_dbm = Some(s.probe_rx_dbm[&last]);
    s.e2e_gsnr_db = Some(lin_to_db(best.e2e_gsnr));
    s.route = Some(best);
    s.spectrum = Some(spectrum);
    s.enter(State::QotEstimated);

    match ctx.policy.mode_selection {
        ModeSelection::Carrier => {
            let rx = &s.registered[&Endpoint::B].trx_id;
            let noise = ctx.topology.noise_model_for(rx);
            let chosen = noise.ok_or(()).and_then(|n| {
                select_mode(
                    &s.common_modes,
                    s.route.as_ref().expect("set").e2e_gsnr,
                    &n,
                    dbm_to_mw(s.rx_dbm.expect("set")),
                    ctx.policy.margin_db,
                )
                .map_err(|_| ())
            });
            match chosen {
                Ok(m) => configure(s, ctx, m),
                Err(()) => {
                    let d = format!("no common mode closes at {:.3} dB GSNR", s.e2e_gsnr_db.expect("set"));
                    let out = s.fail(ErrorCode::NoFeasibleMode, d);
                    (s, out)
                }
            }
        }
        ModeSelection::User => {
            let m = s.msg(
                Party::UserA,
                MessageBody::ModeProposal {
                    mode: None,
                    candidates: s.common_modes.iter().map(|m| m.id.clone()).collect(),
                    e2e_gsnr_db: s.e2e_gsnr_db.expect("set"),
                    p_in_dbm: s.rx_dbm.expect("set"),
                    channel: s.spectrum.as_ref().expect("set").channel_index,
                },
            );
            (s, vec![m])
        }
    }
}

/// Mode chosen: announce it and configure both transceivers.
fn configure(mut s: SessionState, ctx: &CarrierContext, mode: TrxMode) -> (SessionState, Vec<ProtocolMessage>) {
    for e in [Endpoint::A, Endpoint::B] {
        let own = s.catalogs[&e].modes.iter().find(|m| m.same_mode(&mode)).map(|m| m.id.clone());
        match own {
            Some(id) => {
                s.mode_ids.insert(e, id);
            }
            None => {
                let out = s.fail(ErrorCode::NoInteroperableMode, format!("{} not offered by {e:?}", mode.id));
                return (s, out);
            }
        }
    }
    s.mode = Some(mode);
    s.enter(State::ModeSelected);
    let channel = s.spectrum.as_ref().expect("set").channel_index;
    let mut out = Vec::new();
    for e in [Endpoint::A, Endpoint::B] {
        out.push(s.msg(
            e.party(),
            MessageBody::ModeProposal {
                mode: Some(s.mode_ids[&e].clone()),
                candidates: vec![],
                e2e_gsnr_db: s.e2e_gsnr_db.expect("set"),
                p_in_dbm: s.rx_dbm.expect("set"),
                channel,
            },
        ));
    }
    for e in [Endpoint::A, Endpoint::B] {
        out.push(s.msg(
            e.party(),
            MessageBody::ConfigureTrx {
                endpoint: e,
                mode: s.mode_ids[&e].clone(),
                channel,
                launch_dbm: ctx.policy.launch_dbm,
            },
        ));
    }
    (s, out)
}

/// One deterministic transition of the carrier.
pub fn carrier_step(
    mut s: SessionState,
    inbound: &ProtocolMessage,
    ctx: &CarrierContext,
) -> (SessionState, Vec<ProtocolMessage>) {
    if s.state.is_terminal() {
        return (s, vec![]);
    }
    if inbound.session_id != s.session_id || inbound.to != Party::Carrier {
        let out = s.fail(
            ErrorCode::ProtocolViolation,
            format!("message for {} {}", inbound.to.as_str(), inbound.session_id),
        );
        return (s, out);
    }
    let from = inbound.from;
    let state = s.state;
    match (state, inbound.body.clone()) {
        (_, MessageBody::Error { code, detail }) => {
            let out = s.fail(code, format!("{}: {detail}", from.as_str()));
            (s, out)
        }
        (
            State::Idle | State::Registering,
            MessageBody::RegisterTrx {
                endpoint,
                site,
                trx_id,
                serial,
            },
        ) => register(s, ctx, from, endpoint, site, trx_id, serial),
        (State::Registering | State::Authenticated, MessageBody::PathRequest { site_a, site_b })
            if from == Party::UserA
                && !s.path_requested
                && s.registered.get(&Endpoint::A).is_some_and(|r| r.site == site_a) =>
        {
            if ctx.topology.site(site_b.as_str()).is_none()
                || s.registered.get(&Endpoint::B).is_some_and(|r| r.site != site_b)
            {
                let out = s.fail(ErrorCode::NoRoute, format!("no user B at {site_b}"));
                return (s, out);
            }
            s.path_requested = true;
            s.site_a = Some(site_a);
            s.site_b = Some(site_b);
            let out = if s.state == State::Authenticated {
                request_catalogs(&mut s)
            } else {
                vec![]
            };
            (s, out)
        }
        (State::Authenticated, MessageBody::CatalogAdvert { endpoint, catalog })
            if s.path_requested
                && from.endpoint() == Some(endpoint)
                && !s.catalogs.contains_key(&endpoint)
                && s.registered[&endpoint].trx_id == catalog.trx_id =>
        {
            s.catalogs.insert(endpoint, catalog);
            if s.catalogs.len() == 2 {
                plan_probes(s, ctx)
            } else {
                (s, vec![])
            }
        }
        (
            State::Probing,
            MessageBody::ProbeResult {
                segment_id,
                snr_meas_db,
                p_in_dbm,
            },
        ) if from == Party::UserA && s.probes[s.segments.len()].segment_id == segment_id => {
            let tx = &s.registered[&Endpoint::A].trx_id;
            let deduced = ctx
                .topology
                .noise_model_for(tx)
                .ok_or_else(|| format!("no noise model for {tx}"))
                .and_then(|n| {
                    deduce_segment_gsnr(db_to_lin(snr_meas_db), &n, dbm_to_mw(p_in_dbm)).map_err(|e| e.to_string())
                });
            match deduced {
                Ok(gsnr) => {
                    s.segments.push(SegmentQot {
                        segment_id: segment_id.clone(),
                        snr_meas: db_to_lin(snr_meas_db),
                        gsnr,
                        probe_mode: s.probe_mode.clone().unwrap_or_default(),
                    });
                    s.probe_rx_dbm.insert(segment_id, p_in_dbm);
                    if s.segments.len() < s.probes.len() {
                        let m = s.next_probe(ctx);
                        (s, vec![m])
                    } else {
                        estimate(s, ctx)
                    }
                }
                Err(d) => {
                    let out = s.fail(ErrorCode::ProbeFailed, format!("{segment_id}: {d}"));
                    (s, out)
                }
            }
        }
        (State::QotEstimated, MessageBody::ModeProposal { mode: Some(id), .. })
            if from == Party::UserA && ctx.policy.mode_selection == ModeSelection::User =>
        {
            match s.common_modes.iter().find(|m| m.id == id).cloned() {
                Some(m) => configure(s, ctx, m),
                None => {
                    let out = s.fail(ErrorCode::ProtocolViolation, format!("{id} is not a common mode"));
                    (s, out)
                }
            }
        }
        (State::ModeSelected, MessageBody::ConfigureAck { endpoint, mode, channel })
            if from.endpoint() == Some(endpoint)
                && !s.acks.contains(&endpoint)
                && s.mode_ids[&endpoint] == mode
                && s.spectrum.as_ref().is_some_and(|a| a.channel_index == channel) =>
        {
            s.acks.insert(endpoint);
            if s.acks.len() < 2 {
                return (s, vec![]);
            }
            s.enter(State::Configured);
            let route_id = s.route.as_ref().expect("set").route.id.clone();
            let m = s.msg(
                Party::Operator,
                MessageBody::CommitRequest {
                    route_id,
                    mode: s.mode.as_ref().expect("set").id.clone(),
                    channel,
                },
            );
            s.enter(State::PendingApproval);
            (s, vec![m])
        }
        (st, body) => {
            let out = s.fail(
                ErrorCode::ProtocolViolation,
                format!("{} from {} not valid in {st:?}", body.kind(), from.as_str()),
            );
            (s, out)
        }
    }
}

/// Operator verdict on a pending session. Approval claims the channel on
/// every carrier link of the route; a conflicting claim made since the
/// assignment fails the session instead.
pub fn apply_decision(
    s: &mut SessionState,
    verdict: Verdict,
    reason: &str,
    occupancy: &mut Occupancy,
) -> Result<Vec<ProtocolMessage>, ProtocolError> {
    if s.state != State::PendingApproval {
        return Err(ProtocolError::NotPending(s.state));
    }
    s.decision_reason = Some(reason.to_owned());
    let decision = |s: &SessionState, p: Party| {
        s.msg(
            p,
            MessageBody::Decision {
                verdict,
                reason: reason.to_owned(),
            },
        )
    };
    match verdict {
        Verdict::Approve => {
            let a = s.spectrum.clone().expect("pending sessions hold an assignment");
            let ch = a.channel_index;
            if let Some((l, _)) = a.links.iter().find(|(l, _)| occupancy.get(l).is_some_and(|u| u.contains(&ch))) {
                return Ok(s.fail(ErrorCode::SpectrumExhausted, format!("channel {ch} taken on {l} since assignment")));
            }
            for (l, _) in &a.links {
                occupancy.entry(l.clone()).or_default().insert(ch);
            }
            s.enter(State::Committed);
        }
        Verdict::Rollback => s.enter(State::RolledBack),
    }
    Ok(vec![decision(s, Party::UserA), decision(s, Party::UserB)])
}
