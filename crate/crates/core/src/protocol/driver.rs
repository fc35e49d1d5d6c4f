//! In-memory driver connecting the carrier and both user agents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::carrier::{apply_decision, carrier_step, CarrierContext, SessionState};
use super::messages::{Endpoint, ErrorCode, MessageBody, Party, ProtocolMessage, Verdict};
use super::probe::ProbeOracle;
use super::user::{user_agent_step, TrxConfig, UserAgentState, UserEvent, UserProfile};
use super::{ProtocolError, SessionLogEntry, SessionPolicy, State};
use crate::netmodel::{SiteId, Topology};
use crate::routing::Occupancy;

/// Safety net against a non-terminating exchange.
const MAX_DELIVERIES: usize = 10_000;

/// Delivery order of in-flight messages.
#[derive(Debug, Clone)]
pub enum Scheduler {
    /// Oldest message first.
    Fifo,
    /// Any in-flight message, chosen uniformly at random.
    Random(ChaCha8Rng),
}

impl Scheduler {
    pub fn random(seed: u64) -> Self {
        Scheduler::Random(ChaCha8Rng::seed_from_u64(seed))
    }

    fn pick(&mut self, n: usize) -> usize {
        match self {
            Scheduler::Fifo => 0,
            Scheduler::Random(rng) => rng.random_range(0..n),
        }
    }
}

/// One provisioning session: the carrier, both user agents and the ordered
/// log of every delivered message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provisioning {
    pub policy: SessionPolicy,
    pub carrier: SessionState,
    pub user_a: UserAgentState,
    pub user_b: UserAgentState,
    pub log: Vec<SessionLogEntry>,
    pub clock: u64,
    /// Commit requests addressed to the operator.
    pub operator_inbox: Vec<ProtocolMessage>,
    in_flight: Vec<ProtocolMessage>,
}

fn profile(t: &Topology, endpoint: Endpoint, site: &SiteId, peer: &SiteId) -> Result<UserProfile, ProtocolError> {
    if t.site(site.as_str()).is_none() {
        return Err(ProtocolError::UnknownSite(site.clone()));
    }
    let trx = *t.trxs_at(site).first().ok_or_else(|| ProtocolError::NoTrx(site.clone()))?;
    let incomplete = || ProtocolError::IncompleteTrx(trx.id.clone());
    Ok(UserProfile {
        endpoint,
        site: site.clone(),
        trx_id: trx.id.clone(),
        serial: trx.serial.clone(),
        catalog: t.catalog_for(&trx.id).ok_or_else(incomplete)?,
        noise: t.noise_model_for(&trx.id).ok_or_else(incomplete)?,
        initiator: endpoint == Endpoint::A,
        peer_site: peer.clone(),
    })
}

impl Provisioning {
    /// A fresh session between the first transceivers at `site_a` and
    /// `site_b`, both starting from an idle configuration.
    pub fn new(
        session_id: &str,
        t: &Topology,
        site_a: &SiteId,
        site_b: &SiteId,
        policy: SessionPolicy,
    ) -> Result<Self, ProtocolError> {
        if site_a == site_b {
            return Err(ProtocolError::SameSite);
        }
        let pa = profile(t, Endpoint::A, site_a, site_b)?;
        let pb = profile(t, Endpoint::B, site_b, site_a)?;
        let (ca, cb) = (TrxConfig::idle(pa.trx_id.clone()), TrxConfig::idle(pb.trx_id.clone()));
        Ok(Self {
            policy,
            carrier: SessionState::new(session_id),
            user_a: UserAgentState::new(session_id, pa, ca),
            user_b: UserAgentState::new(session_id, pb, cb),
            log: Vec::new(),
            clock: 0,
            operator_inbox: Vec::new(),
            in_flight: Vec::new(),
        })
    }

    /// Replaces an endpoint's pre-session device configuration.
    pub fn with_config(mut self, endpoint: Endpoint, config: TrxConfig) -> Self {
        match endpoint {
            Endpoint::A => self.user_a.config = config,
            Endpoint::B => self.user_b.config = config,
        }
        self
    }

    pub fn session_id(&self) -> &str {
        &self.carrier.session_id
    }

    pub fn state(&self) -> State {
        self.carrier.state
    }

    pub fn user(&self, e: Endpoint) -> &UserAgentState {
        match e {
            Endpoint::A => &self.user_a,
            Endpoint::B => &self.user_b,
        }
    }

    /// Number of messages the carrier has handled.
    pub fn carrier_steps(&self) -> usize {
        self.log.iter().filter(|e| e.message.to == Party::Carrier).count()
    }

    fn start(&mut self, prober: &dyn ProbeOracle) {
        if self.user_a.state != State::Idle || self.user_b.state != State::Idle {
            return;
        }
        for e in [Endpoint::A, Endpoint::B] {
            let (next, out) = user_agent_step(self.user(e).clone(), UserEvent::Start, prober);
            self.set_user(e, next);
            self.in_flight.extend(out);
        }
    }

    fn set_user(&mut self, e: Endpoint, s: UserAgentState) {
        match e {
            Endpoint::A => self.user_a = s,
            Endpoint::B => self.user_b = s,
        }
    }

    /// Hands one message to its recipient and logs it. Returns the
    /// recipient's new state and its outbound messages.
    fn deliver(
        &mut self,
        msg: ProtocolMessage,
        t: &Topology,
        occupancy: &Occupancy,
        prober: &dyn ProbeOracle,
    ) -> (State, Vec<ProtocolMessage>) {
        let (state, out) = match msg.to {
            Party::Carrier => {
                let ctx = CarrierContext {
                    topology: t,
                    occupancy,
                    policy: &self.policy,
                };
                let (next, out) = carrier_step(self.carrier.clone(), &msg, &ctx);
                self.carrier = next;
                (self.carrier.state, out)
            }
            Party::UserA | Party::UserB => {
                let e = msg.to.endpoint().expect("user party");
                let (next, out) = user_agent_step(self.user(e).clone(), UserEvent::Message(msg.clone()), prober);
                let st = next.state;
                self.set_user(e, next);
                (st, out)
            }
            Party::Operator => {
                self.operator_inbox.push(msg.clone());
                (self.carrier.state, vec![])
            }
        };
        self.record(msg, state);
        (state, out)
    }

    fn record(&mut self, message: ProtocolMessage, resulting_state: State) {
        self.clock += 1;
        self.log.push(SessionLogEntry {
            seq: self.log.len() as u64,
            timestamp: self.clock,
            direction: format!("{}->{}", message.from.as_str(), message.to.as_str()),
            message,
            resulting_state,
        });
    }

    fn pump(&mut self, t: &Topology, occupancy: &Occupancy, prober: &dyn ProbeOracle, sched: &mut Scheduler) {
        let mut n = 0;
        while !self.in_flight.is_empty() && n < MAX_DELIVERIES {
            let i = sched.pick(self.in_flight.len());
            let msg = self.in_flight.remove(i);
            let (_, out) = self.deliver(msg, t, occupancy, prober);
            self.in_flight.extend(out);
            n += 1;
        }
    }

    /// Runs until no message is in flight. A carrier still waiting at that
    /// point times out. Auto-approval happens here when the policy asks.
    pub fn run(
        &mut self,
        t: &Topology,
        occupancy: &mut Occupancy,
        prober: &dyn ProbeOracle,
        sched: &mut Scheduler,
    ) -> State {
        self.start(prober);
        self.pump(t, occupancy, prober, sched);
        if !self.carrier.state.is_terminal() && self.carrier.state != State::PendingApproval {
            let timeout = ProtocolMessage::new(
                self.session_id(),
                Party::Carrier,
                Party::Carrier,
                MessageBody::Error {
                    code: ErrorCode::Timeout,
                    detail: format!("no message pending in {:?}", self.carrier.state),
                },
            );
            self.in_flight.push(timeout);
            self.pump(t, occupancy, prober, sched);
        }
        if self.carrier.state == State::PendingApproval && self.policy.auto_approve {
            self.decide(t, occupancy, Verdict::Approve, "auto-approve", prober)
                .expect("session is pending");
        }
        self.carrier.state
    }

    /// Applies an operator verdict and delivers the resulting messages.
    pub fn decide(
        &mut self,
        t: &Topology,
        occupancy: &mut Occupancy,
        verdict: Verdict,
        reason: &str,
        prober: &dyn ProbeOracle,
    ) -> Result<State, ProtocolError> {
        let out = apply_decision(&mut self.carrier, verdict, reason, occupancy)?;
        let m = ProtocolMessage::new(
            self.session_id(),
            Party::Operator,
            Party::Carrier,
            MessageBody::Decision {
                verdict,
                reason: reason.to_owned(),
            },
        );
        self.record(m, self.carrier.state);
        self.in_flight.extend(out);
        self.pump(t, occupancy, prober, &mut Scheduler::Fifo);
        Ok(self.carrier.state)
    }
}

/// Drives a session between `site_a` and `site_b` to a terminal state, or to
/// PendingApproval when the policy keeps the approval gate. `seed` selects a
/// random delivery order; `None` delivers in FIFO order.
pub fn run_provisioning(
    t: &Topology,
    occupancy: &mut Occupancy,
    site_a: &SiteId,
    site_b: &SiteId,
    policy: SessionPolicy,
    prober: &dyn ProbeOracle,
    seed: Option<u64>,
) -> Result<Provisioning, ProtocolError> {
    let id = format!("{site_a}-{site_b}");
    let mut p = Provisioning::new(&id, t, site_a, site_b, policy)?;
    let mut sched = seed.map_or(Scheduler::Fifo, Scheduler::random);
    p.run(t, occupancy, prober, &mut sched);
    Ok(p)
}

/// Re-delivers the messages of `log` to a fresh copy of `initial` and checks
/// every recipient lands in the recorded state.
pub fn replay_log(
    initial: &Provisioning,
    t: &Topology,
    occupancy: &mut Occupancy,
    prober: &dyn ProbeOracle,
    log: &[SessionLogEntry],
) -> Result<Provisioning, ProtocolError> {
    let mut p = initial.clone();
    p.start(prober);
    p.in_flight.clear();
    for e in log {
        if e.seq != p.log.len() as u64 {
            return Err(ProtocolError::ReplayMismatch {
                seq: e.seq,
                detail: format!("expected seq {}", p.log.len()),
            });
        }
        let state = match (&e.message.from, &e.message.body) {
            (Party::Operator, MessageBody::Decision { verdict, reason }) => {
                let reason = reason.clone();
                apply_decision(&mut p.carrier, *verdict, &reason, occupancy)?;
                p.record(e.message.clone(), p.carrier.state);
                p.carrier.state
            }
            _ => p.deliver(e.message.clone(), t, occupancy, prober).0,
        };
        if state != e.resulting_state {
            return Err(ProtocolError::ReplayMismatch {
                seq: e.seq,
                detail: format!("recorded {:?}, replayed {state:?}", e.resulting_state),
            });
        }
    }
    Ok(p)
}
