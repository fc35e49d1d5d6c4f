//! User-side agent: one per transceiver endpoint.

use serde::{Deserialize, Serialize};

use super::messages::{Endpoint, ErrorCode, MessageBody, Party, ProtocolMessage, Verdict};
use super::{ProbeOracle, State};
use crate::modes::{select_mode, ModeCatalog, DEFAULT_MARGIN_DB};
use crate::netmodel::{SiteId, TrxId};
use crate::qot::{combine_snr, SnrBudget, TrxNoiseModel};
use crate::units::{dbm_to_mw, lin_to_db};

/// Device configuration of a transceiver, as applied and as rolled back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrxConfig {
    pub trx_id: TrxId,
    pub enabled: bool,
    pub mode: Option<String>,
    pub channel: Option<usize>,
    pub launch_dbm: Option<f64>,
}

impl TrxConfig {
    pub fn idle(trx_id: TrxId) -> Self {
        Self {
            trx_id,
            enabled: false,
            mode: None,
            channel: None,
            launch_dbm: None,
        }
    }

    /// Canonical serialization used for snapshot comparison.
    pub fn serialize(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }
}

/// What a user agent knows about itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub endpoint: Endpoint,
    pub site: SiteId,
    pub trx_id: TrxId,
    pub serial: String,
    pub catalog: ModeCatalog,
    pub noise: TrxNoiseModel,
    /// Initiating user sends the path request and answers probes.
    pub initiator: bool,
    pub peer_site: SiteId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAgentState {
    pub session_id: String,
    pub state: State,
    pub profile: UserProfile,
    pub config: TrxConfig,
    /// Serialized configuration taken right before the first change.
    pub snapshot: Option<String>,
    pub selected_mode: Option<String>,
    pub error: Option<ErrorCode>,
}

impl UserAgentState {
    pub fn new(session_id: &str, profile: UserProfile, config: TrxConfig) -> Self {
        Self {
            session_id: session_id.to_owned(),
            state: State::Idle,
            profile,
            config,
            snapshot: None,
            selected_mode: None,
            error: None,
        }
    }

    fn me(&self) -> Party {
        self.profile.endpoint.party()
    }

    fn to_carrier(&self, body: MessageBody) -> ProtocolMessage {
        ProtocolMessage::new(&self.session_id, self.me(), Party::Carrier, body)
    }

    /// Puts the pre-session configuration back, if one was taken.
    fn restore(&mut self) {
        if let Some(s) = self.snapshot.take() {
            self.config = serde_json::from_str(&s).expect("snapshot written by this agent");
        }
    }

    fn violation(mut self, detail: String) -> (Self, Vec<ProtocolMessage>) {
        self.restore();
        self.state = State::Errored;
        self.error = Some(ErrorCode::ProtocolViolation);
        let m = self.to_carrier(MessageBody::Error {
            code: ErrorCode::ProtocolViolation,
            detail,
        });
        (self, vec![m])
    }
}

/// Inbound event for a user agent.
#[derive(Debug, Clone, PartialEq)]
pub enum UserEvent {
    Start,
    Message(ProtocolMessage),
}

/// One deterministic transition of a user agent.
pub fn user_agent_step(
    mut s: UserAgentState,
    inbound: UserEvent,
    prober: &dyn ProbeOracle,
) -> (UserAgentState, Vec<ProtocolMessage>) {
    if s.state.is_terminal() {
        return (s, vec![]);
    }
    let msg = match inbound {
        UserEvent::Start if s.state == State::Idle => {
            s.state = State::Registering;
            let p = &s.profile;
            let m = s.to_carrier(MessageBody::RegisterTrx {
                endpoint: p.endpoint,
                site: p.site.clone(),
                trx_id: p.trx_id.clone(),
                serial: p.serial.clone(),
            });
            return (s, vec![m]);
        }
        UserEvent::Start => return s.violation("start event outside Idle".into()),
        UserEvent::Message(m) => m,
    };
    if msg.session_id != s.session_id {
        return s.violation(format!("message for session {}", msg.session_id));
    }
    let state = s.state;
    let initiator = s.profile.initiator;
    match (state, msg.body) {
        (_, MessageBody::Error { code, .. }) => {
            s.restore();
            s.state = State::Errored;
            s.error = Some(code);
            (s, vec![])
        }
        (State::Registering, MessageBody::AuthResult { endpoint, ok }) if endpoint == s.profile.endpoint => {
            if !ok {
                s.state = State::Errored;
                s.error = Some(ErrorCode::AuthFailed);
                return (s, vec![]);
            }
            s.state = State::Authenticated;
            let out = if initiator {
                vec![s.to_carrier(MessageBody::PathRequest {
                    site_a: s.profile.site.clone(),
                    site_b: s.profile.peer_site.clone(),
                })]
            } else {
                vec![]
            };
            (s, out)
        }
        (State::Authenticated, MessageBody::CatalogRequest { endpoint }) if endpoint == s.profile.endpoint => {
            s.state = State::CatalogExchanged;
            let m = s.to_carrier(MessageBody::CatalogAdvert {
                endpoint,
                catalog: s.profile.catalog.clone(),
            });
            (s, vec![m])
        }
        (
            State::CatalogExchanged | State::Probing,
            MessageBody::ProbeRequest {
                segment_id,
                links,
                channel,
                launch_dbm,
                ..
            },
        ) if initiator => match prober.probe(&links, channel, launch_dbm) {
            Ok(r) => {
                s.state = State::Probing;
                let p_in_mw = dbm_to_mw(r.p_rx_dbm);
                let budget = SnrBudget {
                    snr_ase: r.gsnr,
                    snr_nli: f64::INFINITY,
                    trx: s.profile.noise,
                    p_in_mw,
                };
                let snr = combine_snr(&budget, crate::qot::Modulation::Qpsk).snr_total;
                let m = s.to_carrier(MessageBody::ProbeResult {
                    segment_id,
                    snr_meas_db: lin_to_db(snr),
                    p_in_dbm: r.p_rx_dbm,
                });
                (s, vec![m])
            }
            Err(e) => {
                s.state = State::Errored;
                s.error = Some(ErrorCode::ProbeFailed);
                let m = s.to_carrier(MessageBody::Error {
                    code: ErrorCode::ProbeFailed,
                    detail: e,
                });
                (s, vec![m])
            }
        },
        (
            State::Probing | State::CatalogExchanged,
            MessageBody::ModeProposal {
                mode: None,
                candidates,
                e2e_gsnr_db,
                p_in_dbm,
                channel,
            },
        ) if initiator => {
            let common: Vec<_> = s
                .profile
                .catalog
                .modes
                .iter()
                .filter(|m| candidates.contains(&m.id))
                .cloned()
                .collect();
            let gsnr = crate::units::db_to_lin(e2e_gsnr_db);
            match select_mode(&common, gsnr, &s.profile.noise, dbm_to_mw(p_in_dbm), DEFAULT_MARGIN_DB) {
                Ok(m) => {
                    s.state = State::QotEstimated;
                    let out = s.to_carrier(MessageBody::ModeProposal {
                        mode: Some(m.id),
                        candidates,
                        e2e_gsnr_db,
                        p_in_dbm,
                        channel,
                    });
                    (s, vec![out])
                }
                Err(e) => {
                    s.state = State::Errored;
                    s.error = Some(ErrorCode::NoFeasibleMode);
                    let out = s.to_carrier(MessageBody::Error {
                        code: ErrorCode::NoFeasibleMode,
                        detail: e.to_string(),
                    });
                    (s, vec![out])
                }
            }
        }
        (
            State::CatalogExchanged | State::Probing | State::QotEstimated,
            MessageBody::ModeProposal { mode: Some(m), .. },
        ) => {
            s.state = State::ModeSelected;
            s.selected_mode = Some(m);
            (s, vec![])
        }
        (
            State::ModeSelected,
            MessageBody::ConfigureTrx {
                endpoint,
                mode,
                channel,
                launch_dbm,
            },
        ) if endpoint == s.profile.endpoint && s.selected_mode.as_deref() == Some(mode.as_str()) => {
            s.snapshot = Some(s.config.serialize());
            s.config.enabled = true;
            s.config.mode = Some(mode.clone());
            s.config.channel = Some(channel);
            s.config.launch_dbm = Some(launch_dbm);
            s.state = State::Configured;
            let m = s.to_carrier(MessageBody::ConfigureAck { endpoint, mode, channel });
            (s, vec![m])
        }
        (State::Configured, MessageBody::Decision { verdict, .. }) => {
            match verdict {
                Verdict::Approve => {
                    s.snapshot = None;
                    s.state = State::Committed;
                }
                Verdict::Rollback => {
                    s.restore();
                    s.state = State::RolledBack;
                }
            }
            (s, vec![])
        }
        (st, body) => s.violation(format!("{} not valid in {st:?}", body.kind())),
    }
}
