//! User/carrier provisioning protocol.
//!
//! Two deterministic state machines exchange [`ProtocolMessage`]s: one user
//! agent per transceiver endpoint ([`user_agent_step`]) and the carrier
//! ([`carrier_step`]). The carrier authenticates both transceivers, compares
//! their catalogs, probes every candidate segment, ranks routes, selects a
//! mode and configures both ends. The session then waits for an operator
//! decision ([`apply_decision`]) unless the policy approves automatically.
//! [`Provisioning`] drives the machines through an in-memory channel.

mod carrier;
mod driver;
mod messages;
mod probe;
mod user;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{SiteId, TrxId};
use crate::routing::{SegmentPolicy, DEFAULT_MAX_POPS};

pub use carrier::{apply_decision, carrier_step, CarrierContext, ProbeTask, RegisteredTrx, SessionState};
pub use driver::{replay_log, run_provisioning, Provisioning, Scheduler};
pub use messages::{Endpoint, ErrorCode, MessageBody, Party, ProtocolMessage, Verdict};
pub use probe::{ProbeOracle, ProbeReading, SyntheticProber, TwinProber};
pub use user::{user_agent_step, TrxConfig, UserAgentState, UserEvent, UserProfile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("session is {0:?}, not PendingApproval")]
    NotPending(State),
    #[error("unknown site {0}")]
    UnknownSite(SiteId),
    #[error("site {0} has no transceiver")]
    NoTrx(SiteId),
    #[error("transceiver {0} has no catalog or noise model")]
    IncompleteTrx(TrxId),
    #[error("session endpoints must differ")]
    SameSite,
    #[error("log replay diverged at seq {seq}: {detail}")]
    ReplayMismatch { seq: u64, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    Idle,
    Registering,
    Authenticated,
    CatalogExchanged,
    Probing,
    QotEstimated,
    ModeSelected,
    Configured,
    PendingApproval,
    Committed,
    RolledBack,
    Errored,
}

impl State {
    pub fn is_terminal(self) -> bool {
        matches!(self, State::Committed | State::RolledBack | State::Errored)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    #[default]
    Carrier,
    User,
}

fn default_max_pops() -> usize {
    DEFAULT_MAX_POPS
}

fn default_margin() -> f64 {
    crate::modes::DEFAULT_MARGIN_DB
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionPolicy {
    pub auto_approve: bool,
    pub mode_selection: ModeSelection,
    pub segment_policy: SegmentPolicy,
    #[serde(default = "default_max_pops")]
    pub max_pops: usize,
    #[serde(default = "default_margin")]
    pub margin_db: f64,
    /// Per-channel launch power for probes and the configured channel, dBm.
    pub launch_dbm: f64,
}

impl Default for SessionPolicy {
    fn default() -> Self {
        Self {
            auto_approve: false,
            mode_selection: ModeSelection::Carrier,
            segment_policy: SegmentPolicy::PerLink,
            max_pops: DEFAULT_MAX_POPS,
            margin_db: default_margin(),
            launch_dbm: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLogEntry {
    pub seq: u64,
    /// Logical clock of the driver.
    pub timestamp: u64,
    /// `sender->recipient`, e.g. `user_a->carrier`.
    pub direction: String,
    pub message: ProtocolMessage,
    /// State of the recipient after handling the message.
    pub resulting_state: State,
}
