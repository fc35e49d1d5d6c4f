//! Wire messages between user agents, the carrier and the operator.

use serde::{Deserialize, Serialize};

use crate::modes::ModeCatalog;
use crate::netmodel::{LinkId, SiteId, TrxId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    A,
    B,
}

impl Endpoint {
    pub fn party(self) -> Party {
        match self {
            Endpoint::A => Party::UserA,
            Endpoint::B => Party::UserB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    UserA,
    UserB,
    Carrier,
    Operator,
}

impl Party {
    pub fn as_str(self) -> &'static str {
        match self {
            Party::UserA => "user_a",
            Party::UserB => "user_b",
            Party::Carrier => "carrier",
            Party::Operator => "operator",
        }
    }

    pub fn endpoint(self) -> Option<Endpoint> {
        match self {
            Party::UserA => Some(Endpoint::A),
            Party::UserB => Some(Endpoint::B),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approve,
    Rollback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    ProtocolViolation,
    AuthFailed,
    NoInteroperableMode,
    NoFeasibleMode,
    SpectrumExhausted,
    NoRoute,
    ProbeFailed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum MessageBody {
    RegisterTrx {
        endpoint: Endpoint,
        site: SiteId,
        trx_id: TrxId,
        serial: String,
    },
    AuthResult {
        endpoint: Endpoint,
        ok: bool,
    },
    PathRequest {
        site_a: SiteId,
        site_b: SiteId,
    },
    CatalogRequest {
        endpoint: Endpoint,
    },
    CatalogAdvert {
        endpoint: Endpoint,
        catalog: ModeCatalog,
    },
    ProbeRequest {
        segment_id: String,
        links: Vec<LinkId>,
        probe_mode: String,
        channel: usize,
        launch_dbm: f64,
    },
    ProbeResult {
        segment_id: String,
        snr_meas_db: f64,
        p_in_dbm: f64,
    },
    /// Carrier to users: the selected mode (`mode` set), or, with user-side
    /// selection, a request to choose among `candidates`. Initiator to
    /// carrier: the mode it chose.
    ModeProposal {
        mode: Option<String>,
        candidates: Vec<String>,
        e2e_gsnr_db: f64,
        p_in_dbm: f64,
        channel: usize,
    },
    ConfigureTrx {
        endpoint: Endpoint,
        mode: String,
        channel: usize,
        launch_dbm: f64,
    },
    ConfigureAck {
        endpoint: Endpoint,
        mode: String,
        channel: usize,
    },
    CommitRequest {
        route_id: String,
        mode: String,
        channel: usize,
    },
    Decision {
        verdict: Verdict,
        reason: String,
    },
    Error {
        code: ErrorCode,
        detail: String,
    },
}

impl MessageBody {
    pub fn kind(&self) -> &'static str {
        match self {
            MessageBody::RegisterTrx { .. } => "RegisterTrx",
            MessageBody::AuthResult { .. } => "AuthResult",
            MessageBody::PathRequest { .. } => "PathRequest",
            MessageBody::CatalogRequest { .. } => "CatalogRequest",
            MessageBody::CatalogAdvert { .. } => "CatalogAdvert",
            MessageBody::ProbeRequest { .. } => "ProbeRequest",
            MessageBody::ProbeResult { .. } => "ProbeResult",
            MessageBody::ModeProposal { .. } => "ModeProposal",
            MessageBody::ConfigureTrx { .. } => "ConfigureTrx",
            MessageBody::ConfigureAck { .. } => "ConfigureAck",
            MessageBody::CommitRequest { .. } => "CommitRequest",
            MessageBody::Decision { .. } => "Decision",
            MessageBody::Error { .. } => "Error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub session_id: String,
    pub from: Party,
    pub to: Party,
    #[serde(flatten)]
    pub body: MessageBody,
}

impl ProtocolMessage {
    pub fn new(session_id: &str, from: Party, to: Party, body: MessageBody) -> Self {
        Self {
            session_id: session_id.to_owned(),
            from,
            to,
            body,
        }
    }

    pub fn kind(&self) -> &'static str {
        self.body.kind()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_form_has_kind_and_payload() {
        let m = ProtocolMessage::new(
            "S1",
            Party::UserA,
            Party::Carrier,
            MessageBody::AuthResult {
                endpoint: Endpoint::A,
                ok: true,
            },
        );
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["kind"], "AuthResult");
        assert_eq!(v["session_id"], "S1");
        assert_eq!(v["from"], "user_a");
        assert_eq!(v["payload"]["endpoint"], "a");
        let back: ProtocolMessage = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn payload_must_match_kind() {
        let bad = r#"{"session_id":"S1","from":"carrier","to":"user_a","kind":"AuthResult","payload":{"verdict":"approve"}}"#;
        assert!(serde_json::from_str::<ProtocolMessage>(bad).is_err());
    }
}
