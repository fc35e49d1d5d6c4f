//! Deterministic service state. Every mutation becomes an [`Event`]; the
//! state is a fold of [`Engine::apply`] over the event sequence.

use std::collections::BTreeMap;

use dcx_core::linetwin::{
    collect_telemetry, propagate, synthesize_profile, FaultKind, FaultSet, LineState, PowerProfile, TelemetryPlan,
    TelemetrySnapshot,
};
use dcx_core::monitor::{
    calibrate_line, detect_nf_fault, localize_step_loss, operating_points, optimize_gain_tilt, CalibrationResult,
    GainTiltSetting, LossEvent, NfFaultOptions, NfFaultReport, OptimizeOptions,
};
use dcx_core::netmodel::{validate_topology, OpticalLink};
use dcx_core::protocol::{
    Endpoint, ErrorCode, Provisioning, ProtocolError, Scheduler, SessionLogEntry, SessionPolicy, State, TwinProber, Verdict,
};
use dcx_core::qot::{combine_snr, SnrBudget, TrxNoiseModel};
use dcx_core::routing::Occupancy;
use dcx_core::units::{dbm_to_mw, lin_to_db};
use dcx_core::{LinkId, SiteId, Topology};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown link {0}")]
    UnknownLink(String),
    #[error("unknown fault {0}")]
    UnknownFault(String),
    #[error("unknown calibration {0}")]
    UnknownCalibration(String),
    #[error("unknown plot target {0}")]
    UnknownTarget(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    /// The request is well formed but the target is in the wrong state.
    #[error("{0}")]
    Conflict(String),
    #[error("event does not fit the current state: {0}")]
    Inconsistent(String),
}

impl EngineError {
    pub fn is_not_found(&self) -> bool {
        matches!(
            self,
            EngineError::UnknownSession(_)
                | EngineError::UnknownLink(_)
                | EngineError::UnknownFault(_)
                | EngineError::UnknownCalibration(_)
                | EngineError::UnknownTarget(_)
        )
    }
}

fn default_resolution() -> f64 {
    0.5
}

fn default_noise() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub profile_resolution_km: f64,
    /// σ of DLM profile readings, dB.
    #[serde(default = "default_noise")]
    pub profile_noise_db: f64,
    /// σ of amplifier and OSA telemetry, dB.
    #[serde(default = "default_noise")]
    pub telemetry_noise_db: f64,
    /// Per-channel launch power into every line, dBm.
    #[serde(default)]
    pub launch_dbm: f64,
}

impl EngineConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            profile_resolution_km: default_resolution(),
            profile_noise_db: default_noise(),
            telemetry_noise_db: default_noise(),
            launch_dbm: 0.0,
        }
    }
}

/// Requested state change, before ids are assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    StartSession {
        site_a: SiteId,
        site_b: SiteId,
        #[serde(default)]
        policy: SessionPolicy,
    },
    Decide {
        session_id: String,
        verdict: Verdict,
        #[serde(default)]
        reason: String,
    },
    InjectFault {
        fault: FaultKind,
        magnitude_db: f64,
    },
    ClearFault {
        fault_id: String,
    },
    CaptureBaseline {
        link_id: LinkId,
    },
    Calibrate {
        link_id: LinkId,
    },
    Optimize {
        link_id: LinkId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Session,
    Fault,
    Calibration,
    Decision,
    Settings,
}

/// A state change as persisted in the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Init {
        topology: Topology,
        config: EngineConfig,
    },
    SessionStarted {
        session_id: String,
        site_a: SiteId,
        site_b: SiteId,
        policy: SessionPolicy,
    },
    DecisionApplied {
        session_id: String,
        verdict: Verdict,
        reason: String,
    },
    FaultInjected {
        fault_id: String,
        fault: FaultKind,
        magnitude_db: f64,
    },
    FaultCleared {
        fault_id: String,
    },
    BaselineCaptured {
        link_id: LinkId,
    },
    Calibrated {
        calibration_id: String,
        link_id: LinkId,
    },
    Optimized {
        optimization_id: String,
        link_id: LinkId,
        calibration_id: String,
    },
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::Init { .. } | Event::Optimized { .. } => EventKind::Settings,
            Event::SessionStarted { .. } => EventKind::Session,
            Event::DecisionApplied { .. } => EventKind::Decision,
            Event::FaultInjected { .. } | Event::FaultCleared { .. } => EventKind::Fault,
            Event::BaselineCaptured { .. } | Event::Calibrated { .. } => EventKind::Calibration,
        }
    }
}

/// Session as reported by the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub state: State,
    pub site_a: SiteId,
    pub site_b: SiteId,
    pub route_id: Option<String>,
    pub mode: Option<String>,
    pub channel: Option<usize>,
    pub e2e_gsnr_db: Option<f64>,
    pub error: Option<ErrorCode>,
    pub error_detail: Option<String>,
    pub log_len: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub log: Vec<SessionLogEntry>,
}

impl SessionView {
    pub fn new(p: &Provisioning, with_log: bool) -> Self {
        let c = &p.carrier;
        Self {
            session_id: c.session_id.clone(),
            state: c.state,
            site_a: p.user_a.profile.site.clone(),
            site_b: p.user_b.profile.site.clone(),
            route_id: c.route.as_ref().map(|r| r.route.id.clone()),
            mode: c.mode.as_ref().map(|m| m.id.clone()),
            channel: c.spectrum.as_ref().map(|s| s.channel_index),
            e2e_gsnr_db: c.e2e_gsnr_db,
            error: c.error,
            error_detail: c.error_detail.clone(),
            log_len: p.log.len(),
            log: if with_log { p.log.clone() } else { vec![] },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub calibration_id: String,
    pub link_id: LinkId,
    /// Event sequence number that produced it.
    pub seq: u64,
    pub result: CalibrationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRecord {
    pub optimization_id: String,
    pub link_id: LinkId,
    pub calibration_id: String,
    pub result: GainTiltSetting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGsnr {
    pub channel: usize,
    pub freq_thz: f64,
    pub gsnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdfaGsnr {
    pub edfa_id: String,
    pub position_km: f64,
    pub gsnr_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGsnrView {
    pub link_id: LinkId,
    pub channels: Vec<ChannelGsnr>,
    /// Accumulated GSNR after each amplifier.
    pub per_edfa: Vec<EdfaGsnr>,
}

/// Predicted margin of one common mode on a what-if route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOption {
    pub mode: String,
    pub predicted_snr_db: f64,
    pub required_snr_db: f64,
    pub margin_db: f64,
    pub rx_in_window: bool,
    pub feasible: bool,
}

/// Dry run of a provisioning session: nothing is logged or claimed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIf {
    pub session: SessionView,
    pub modes: Vec<ModeOption>,
}

/// What a mutation produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Initialized,
    Session(SessionView),
    FaultInjected { fault_id: String },
    FaultCleared { fault_id: String },
    BaselineCaptured { link_id: LinkId, samples: usize },
    Calibrated(CalibrationRecord),
    Optimized(OptimizationRecord),
}

/// Seed for one random draw, derived from the service seed, the event
/// position and what is being drawn.
pub fn derive_seed(seed: u64, seq: u64, salt: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(seq.to_le_bytes());
    h.update(salt.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("32-byte digest"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Engine {
    pub config: EngineConfig,
    pub topology: Topology,
    pub occupancy: Occupancy,
    pub faults: FaultSet,
    pub sessions: BTreeMap<String, Provisioning>,
    pub baselines: BTreeMap<LinkId, PowerProfile>,
    pub calibrations: BTreeMap<String, CalibrationRecord>,
    pub optimizations: BTreeMap<String, OptimizationRecord>,
    /// Number of events applied so far; the next event gets this seq.
    pub next_seq: u64,
}

fn numbered(prefix: &str, n: usize) -> String {
    format!("{prefix}{n}")
}

impl Engine {
    /// State after the initial event, and that event.
    pub fn init(topology: Topology, config: EngineConfig) -> Result<(Engine, Event), EngineError> {
        let v = validate_topology(&topology);
        if !v.is_empty() {
            return Err(EngineError::Invalid(format!("{v:?}")));
        }
        let ev = Event::Init { topology, config };
        let e = Engine::from_init(&ev)?;
        Ok((e, ev))
    }

    fn from_init(ev: &Event) -> Result<Engine, EngineError> {
        match ev {
            Event::Init { topology, config } => Ok(Engine {
                config: config.clone(),
                topology: topology.clone(),
                occupancy: Occupancy::new(),
                faults: FaultSet::default(),
                sessions: BTreeMap::new(),
                baselines: BTreeMap::new(),
                calibrations: BTreeMap::new(),
                optimizations: BTreeMap::new(),
                next_seq: 1,
            }),
            _ => Err(EngineError::Inconsistent("log must start with init".into())),
        }
    }

    /// Folds `events` from the initial state.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Option<Engine>, EngineError> {
        let mut it = events.into_iter();
        let Some(first) = it.next() else {
            return Ok(None);
        };
        let mut e = Engine::from_init(first)?;
        for ev in it {
            e.apply(ev)?;
        }
        Ok(Some(e))
    }

    /// SHA-256 over the canonical serialization of the state.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("engine state serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn link(&self, id: &str) -> Result<&OpticalLink, EngineError> {
        self.topology.link(id).ok_or_else(|| EngineError::UnknownLink(id.to_owned()))
    }

    fn launch(&self) -> Vec<f64> {
        vec![self.config.launch_dbm; self.topology.grid.count]
    }

    /// Twin state of `link_id` with the active faults.
    pub fn line_state(&self, link_id: &str) -> Result<LineState, EngineError> {
        let link = self.link(link_id)?;
        propagate(link, &self.topology.grid, &self.launch(), &self.faults.active())
            .map_err(|e| EngineError::Invalid(e.to_string()))
    }

    fn profile_at(&self, link_id: &str, seed: u64) -> Result<PowerProfile, EngineError> {
        let st = self.line_state(link_id)?;
        synthesize_profile(&st, self.config.profile_resolution_km, self.config.profile_noise_db, seed, None)
            .map_err(|e| EngineError::Invalid(e.to_string()))
    }

    /// Current longitudinal profile of `link_id`.
    pub fn profile(&self, link_id: &str) -> Result<PowerProfile, EngineError> {
        self.profile_at(link_id, derive_seed(self.config.seed, self.next_seq, &format!("profile:{link_id}")))
    }

    pub fn baseline(&self, link_id: &str) -> Result<&PowerProfile, EngineError> {
        self.link(link_id)?;
        self.baselines
            .get(link_id)
            .ok_or_else(|| EngineError::Conflict(format!("no baseline profile for {link_id}")))
    }

    /// Loss steps between the stored baseline and the current profile.
    pub fn localize(&self, link_id: &str, min_step_db: f64) -> Result<Vec<LossEvent>, EngineError> {
        let base = self.baseline(link_id)?;
        let cur = self.profile(link_id)?;
        localize_step_loss(base, &cur, min_step_db).map_err(|e| EngineError::Invalid(e.to_string()))
    }

    pub fn gsnr(&self, link_id: &str) -> Result<LinkGsnrView, EngineError> {
        let st = self.line_state(link_id)?;
        let g = &self.topology.grid;
        let out = st.output_record().map(|r| r.gsnr()).unwrap_or_else(|| vec![f64::INFINITY; g.count]);
        Ok(LinkGsnrView {
            link_id: LinkId::from(link_id),
            channels: out
                .iter()
                .enumerate()
                .map(|(i, &x)| ChannelGsnr {
                    channel: i,
                    freq_thz: g.freq_hz(i) / 1e12,
                    gsnr_db: lin_to_db(x),
                })
                .collect(),
            per_edfa: st
                .edfa_records()
                .into_iter()
                .map(|(s, r)| EdfaGsnr {
                    edfa_id: s.label.clone(),
                    position_km: r.position_km,
                    gsnr_db: r.gsnr().into_iter().map(lin_to_db).collect(),
                })
                .collect(),
        })
    }

    /// Telemetry sweep over the calibration operating points of `link_id`.
    pub fn telemetry(&self, link_id: &str, seed: u64) -> Result<Vec<TelemetrySnapshot>, EngineError> {
        let link = self.link(link_id)?;
        let plan = TelemetryPlan {
            launch_dbm: self.launch(),
            operating_points: operating_points(link),
            noise_sigma_db: self.config.telemetry_noise_db,
            seed,
        };
        collect_telemetry(link, &self.topology.grid, &plan, &self.faults.active())
            .map_err(|e| EngineError::Invalid(e.to_string()))
    }

    pub fn calibration(&self, id: &str) -> Result<&CalibrationRecord, EngineError> {
        self.calibrations
            .get(id)
            .ok_or_else(|| EngineError::UnknownCalibration(id.to_owned()))
    }

    /// Most recent calibration of `link_id`.
    pub fn latest_calibration(&self, link_id: &str) -> Option<&CalibrationRecord> {
        self.calibrations
            .values()
            .filter(|c| c.link_id.as_str() == link_id)
            .max_by_key(|c| c.seq)
    }

    /// NF fault check of fresh telemetry against calibration `id`.
    pub fn nf_check(&self, id: &str) -> Result<NfFaultReport, EngineError> {
        let c = self.calibration(id)?;
        let snaps = self.telemetry(c.link_id.as_str(), derive_seed(self.config.seed, self.next_seq, &format!("nf:{id}")))?;
        let link = self.link(c.link_id.as_str())?;
        detect_nf_fault(link, Some(&c.result), &self.topology.grid, &snaps, NfFaultOptions::default())
            .map_err(|e| EngineError::Conflict(e.to_string()))
    }

    pub fn session(&self, id: &str) -> Result<&Provisioning, EngineError> {
        self.sessions.get(id).ok_or_else(|| EngineError::UnknownSession(id.to_owned()))
    }

    /// Turns a request into the event that records it, validating it
    /// against the current state.
    pub fn plan(&self, m: &Mutation) -> Result<Event, EngineError> {
        Ok(match m {
            Mutation::StartSession { site_a, site_b, policy } => Event::SessionStarted {
                session_id: numbered("S", self.sessions.len() + 1),
                site_a: site_a.clone(),
                site_b: site_b.clone(),
                policy: policy.clone(),
            },
            Mutation::Decide {
                session_id,
                verdict,
                reason,
            } => {
                let s = self.session(session_id)?;
                if s.state() != State::PendingApproval {
                    return Err(EngineError::Conflict(ProtocolError::NotPending(s.state()).to_string()));
                }
                Event::DecisionApplied {
                    session_id: session_id.clone(),
                    verdict: *verdict,
                    reason: reason.clone(),
                }
            }
            Mutation::InjectFault { fault, magnitude_db } => {
                let mut trial = self.faults.clone();
                let fault_id = trial
                    .set_fault(&self.topology, fault.clone(), *magnitude_db)
                    .map_err(|e| EngineError::Invalid(e.to_string()))?;
                Event::FaultInjected {
                    fault_id,
                    fault: fault.clone(),
                    magnitude_db: *magnitude_db,
                }
            }
            Mutation::ClearFault { fault_id } => {
                if self.faults.get(fault_id).is_none() {
                    return Err(EngineError::UnknownFault(fault_id.clone()));
                }
                Event::FaultCleared {
                    fault_id: fault_id.clone(),
                }
            }
            Mutation::CaptureBaseline { link_id } => {
                self.link(link_id.as_str())?;
                Event::BaselineCaptured {
                    link_id: link_id.clone(),
                }
            }
            Mutation::Calibrate { link_id } => {
                self.link(link_id.as_str())?;
                Event::Calibrated {
                    calibration_id: numbered("C", self.calibrations.len() + 1),
                    link_id: link_id.clone(),
                }
            }
            Mutation::Optimize { link_id } => {
                self.link(link_id.as_str())?;
                let c = self.latest_calibration(link_id.as_str()).ok_or_else(|| {
                    EngineError::Conflict(format!("link {link_id} has no calibration to optimize against"))
                })?;
                Event::Optimized {
                    optimization_id: numbered("O", self.optimizations.len() + 1),
                    link_id: link_id.clone(),
                    calibration_id: c.calibration_id.clone(),
                }
            }
        })
    }

    /// Plans and applies `m` on a copy of the state.
    pub fn submit(&self, m: &Mutation) -> Result<(Engine, Event, Outcome), EngineError> {
        let ev = self.plan(m)?;
        let mut next = self.clone();
        let out = next.apply(&ev)?;
        Ok((next, ev, out))
    }

    /// Applies one event. Only deterministic work happens here; random
    /// draws are seeded from the event's position.
    pub fn apply(&mut self, ev: &Event) -> Result<Outcome, EngineError> {
        let seq = self.next_seq;
        let seed = self.config.seed;
        let out = match ev {
            Event::Init { .. } => return Err(EngineError::Inconsistent("init after start".into())),
            Event::SessionStarted {
                session_id,
                site_a,
                site_b,
                policy,
            } => {
                if self.sessions.contains_key(session_id) {
                    return Err(EngineError::Inconsistent(format!("session {session_id} exists")));
                }
                let mut p = Provisioning::new(session_id, &self.topology, site_a, site_b, policy.clone())
                    .map_err(|e| EngineError::Invalid(e.to_string()))?;
                let prober = TwinProber {
                    topology: &self.topology,
                    faults: self.faults.active(),
                };
                p.run(&self.topology, &mut self.occupancy, &prober, &mut Scheduler::Fifo);
                let view = SessionView::new(&p, true);
                self.sessions.insert(session_id.clone(), p);
                Outcome::Session(view)
            }
            Event::DecisionApplied {
                session_id,
                verdict,
                reason,
            } => {
                let mut p = self.session(session_id)?.clone();
                let prober = TwinProber {
                    topology: &self.topology,
                    faults: self.faults.active(),
                };
                p.decide(&self.topology, &mut self.occupancy, *verdict, reason, &prober)
                    .map_err(|e| EngineError::Conflict(e.to_string()))?;
                let view = SessionView::new(&p, true);
                self.sessions.insert(session_id.clone(), p);
                Outcome::Session(view)
            }
            Event::FaultInjected {
                fault_id,
                fault,
                magnitude_db,
            } => {
                let id = self
                    .faults
                    .set_fault(&self.topology, fault.clone(), *magnitude_db)
                    .map_err(|e| EngineError::Invalid(e.to_string()))?;
                if &id != fault_id {
                    return Err(EngineError::Inconsistent(format!("fault id {id}, recorded {fault_id}")));
                }
                Outcome::FaultInjected { fault_id: id }
            }
            Event::FaultCleared { fault_id } => {
                self.faults
                    .clear_fault(fault_id)
                    .map_err(|_| EngineError::UnknownFault(fault_id.clone()))?;
                Outcome::FaultCleared {
                    fault_id: fault_id.clone(),
                }
            }
            Event::BaselineCaptured { link_id } => {
                let p = self.profile_at(link_id.as_str(), derive_seed(seed, seq, &format!("baseline:{link_id}")))?;
                let samples = p.samples.len();
                self.baselines.insert(link_id.clone(), p);
                Outcome::BaselineCaptured {
                    link_id: link_id.clone(),
                    samples,
                }
            }
            Event::Calibrated {
                calibration_id,
                link_id,
            } => {
                let snaps = self.telemetry(link_id.as_str(), derive_seed(seed, seq, &format!("telemetry:{link_id}")))?;
                let link = self.link(link_id.as_str())?;
                let result = calibrate_line(link, &self.topology.grid, &snaps)
                    .map_err(|e| EngineError::Conflict(e.to_string()))?;
                let rec = CalibrationRecord {
                    calibration_id: calibration_id.clone(),
                    link_id: link_id.clone(),
                    seq,
                    result,
                };
                self.calibrations.insert(calibration_id.clone(), rec.clone());
                Outcome::Calibrated(rec)
            }
            Event::Optimized {
                optimization_id,
                link_id,
                calibration_id,
            } => {
                let c = self.calibration(calibration_id)?.result.clone();
                let link = self.link(link_id.as_str())?;
                let result =
                    optimize_gain_tilt(link, &c, &self.topology.grid, &self.launch(), OptimizeOptions::default())
                        .map_err(|e| EngineError::Conflict(e.to_string()))?;
                let tuned = link.with_settings(&result.settings);
                *self.topology.link_mut(link_id.as_str()).expect("checked above") = tuned;
                let rec = OptimizationRecord {
                    optimization_id: optimization_id.clone(),
                    link_id: link_id.clone(),
                    calibration_id: calibration_id.clone(),
                    result,
                };
                self.optimizations.insert(optimization_id.clone(), rec.clone());
                Outcome::Optimized(rec)
            }
        };
        self.next_seq += 1;
        Ok(out)
    }

    /// Runs a session between `site_a` and `site_b` on a scratch copy and
    /// reports the margin of every common mode on the chosen route.
    pub fn what_if(&self, site_a: &SiteId, site_b: &SiteId, policy: &SessionPolicy) -> Result<WhatIf, EngineError> {
        let policy = SessionPolicy {
            auto_approve: false,
            ..policy.clone()
        };
        let mut p = Provisioning::new("what-if", &self.topology, site_a, site_b, policy.clone())
            .map_err(|e| EngineError::Invalid(e.to_string()))?;
        let prober = TwinProber {
            topology: &self.topology,
            faults: self.faults.active(),
        };
        let mut occ = self.occupancy.clone();
        p.run(&self.topology, &mut occ, &prober, &mut Scheduler::Fifo);
        let c = &p.carrier;
        let mut modes = Vec::new();
        if let (Some(r), Some(rx), Some(trx)) = (&c.route, c.rx_dbm, c.registered.get(&Endpoint::B)) {
            let noise = self.topology.noise_model_for(&trx.trx_id).unwrap_or(TrxNoiseModel::IDEAL);
            for m in &c.common_modes {
                let q = combine_snr(
                    &SnrBudget {
                        snr_ase: r.e2e_gsnr,
                        snr_nli: f64::INFINITY,
                        trx: noise,
                        p_in_mw: dbm_to_mw(rx),
                    },
                    m.modulation,
                );
                let margin = q.snr_total_db - m.required_snr_db();
                let rx_in_window = m.rx_window_contains(rx);
                modes.push(ModeOption {
                    mode: m.id.clone(),
                    predicted_snr_db: q.snr_total_db,
                    required_snr_db: m.required_snr_db(),
                    margin_db: margin,
                    rx_in_window,
                    feasible: rx_in_window && margin >= policy.margin_db,
                });
            }
        }
        Ok(WhatIf {
            session: SessionView::new(&p, false),
            modes,
        })
    }

    /// Sessions in `state`, or all of them.
    pub fn sessions_in(&self, state: Option<State>) -> Vec<SessionView> {
        self.sessions
            .values()
            .filter(|p| state.map_or(true, |s| p.state() == s))
            .map(|p| SessionView::new(p, false))
            .collect()
    }
}
