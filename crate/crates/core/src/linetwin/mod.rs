//! Line twin: deterministic forward model of an optical line with fault
//! injection, longitudinal power profiles, amplifier telemetry and
//! round-trip delay.

mod profile;
mod telemetry;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{ChannelGrid, LinkId, OpticalLink, Topology};
use crate::qot::{link_stages, propagate_stages, QotError, Stage, StageKind, StageRecord};
use crate::routing::RouteCandidate;
use crate::units::{dbm_to_mw, mw_to_dbm, C_KM_PER_S};

pub use profile::{synthesize_profile, PowerProfile, ProfileSample};
pub use telemetry::{
    add_telemetry_noise, collect_telemetry, osnr_db_from_snr_ase, snapshot_telemetry, ChannelPower, EdfaTelemetry, OsaRow, TelemetryPlan,
    TelemetrySnapshot,
};

pub const DEFAULT_GROUP_INDEX: f64 = 1.468;
pub const DEFAULT_RESOLUTION_KM: f64 = 0.5;
pub const MAX_FAULT_DB: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TwinError {
    #[error(transparent)]
    Qot(#[from] QotError),
    #[error("unknown fault {0}")]
    UnknownFault(String),
    #[error("invalid fault: {0}")]
    InvalidFault(String),
    #[error("profile resolution {0} km outside [0.1, 5]")]
    InvalidResolution(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// Lumped loss at `distance_km` from the link input.
    StepLoss { link_id: LinkId, distance_km: f64 },
    /// NF raised by the fault magnitude on one amplifier.
    NfDegradation { edfa_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: FaultKind,
    pub magnitude_db: f64,
}

impl FaultSpec {
    fn applies_to(&self, link: &OpticalLink) -> bool {
        match &self.kind {
            FaultKind::StepLoss { link_id, .. } => link_id == &link.id,
            FaultKind::NfDegradation { edfa_id } => link.edfas().any(|a| &a.id == edfa_id),
        }
    }

    /// Checks the fault against the topology it is injected into.
    pub fn validate(&self, t: &Topology) -> Result<(), TwinError> {
        if !(self.magnitude_db > 0.0 && self.magnitude_db <= MAX_FAULT_DB) {
            return Err(TwinError::InvalidFault(format!(
                "magnitude {} dB outside (0, {MAX_FAULT_DB}]",
                self.magnitude_db
            )));
        }
        match &self.kind {
            FaultKind::StepLoss { link_id, distance_km } => {
                let link = t
                    .link(link_id.as_str())
                    .ok_or_else(|| TwinError::InvalidFault(format!("unknown link {link_id}")))?;
                if !(*distance_km >= 0.0 && *distance_km <= link.length_km()) {
                    return Err(TwinError::InvalidFault(format!(
                        "distance {distance_km} km outside link {link_id}"
                    )));
                }
            }
            FaultKind::NfDegradation { edfa_id } => {
                if !t.links.iter().any(|l| l.edfas().any(|a| &a.id == edfa_id)) {
                    return Err(TwinError::InvalidFault(format!("unknown EDFA {edfa_id}")));
                }
            }
        }
        Ok(())
    }
}

/// Active faults keyed by id. Ids are assigned in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultSet {
    faults: BTreeMap<String, FaultSpec>,
    next_id: u64,
}

impl FaultSet {
    pub fn set_fault(&mut self, t: &Topology, kind: FaultKind, magnitude_db: f64) -> Result<String, TwinError> {
        self.next_id += 1;
        let spec = FaultSpec {
            id: format!("fault-{}", self.next_id),
            kind,
            magnitude_db,
        };
        if let Err(e) = spec.validate(t) {
            self.next_id -= 1;
            return Err(e);
        }
        let id = spec.id.clone();
        self.faults.insert(id.clone(), spec);
        Ok(id)
    }

    pub fn clear_fault(&mut self, id: &str) -> Result<FaultSpec, TwinError> {
        self.faults
            .remove(id)
            .ok_or_else(|| TwinError::UnknownFault(id.to_owned()))
    }

    pub fn active(&self) -> Vec<FaultSpec> {
        self.faults.values().cloned().collect()
    }

    pub fn get(&self, id: &str) -> Option<&FaultSpec> {
        self.faults.get(id)
    }
}

/// Ground-truth state of a line for one launch and fault set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineState {
    pub link_id: LinkId,
    pub grid: ChannelGrid,
    pub launch_dbm: Vec<f64>,
    pub stages: Vec<Stage>,
    pub records: Vec<StageRecord>,
    pub length_km: f64,
}

impl LineState {
    /// Per-channel signal power at the line output, dBm.
    pub fn output_signal_dbm(&self) -> Vec<f64> {
        match self.records.last() {
            Some(r) => r.signal_mw.iter().map(|&p| mw_to_dbm(p)).collect(),
            None => self.launch_dbm.clone(),
        }
    }

    pub fn output_record(&self) -> Option<&StageRecord> {
        self.records.last()
    }

    /// Per-channel ASE power at the line output, mW in the signal bandwidth.
    pub fn output_ase_mw(&self) -> Vec<f64> {
        match self.records.last() {
            Some(r) => r.ase_mw.clone(),
            None => vec![0.0; self.grid.count],
        }
    }

    /// Input and output records of every amplifier, in line order.
    pub fn edfa_records(&self) -> Vec<(&Stage, &StageRecord)> {
        self.stages
            .iter()
            .zip(&self.records)
            .filter(|(s, _)| matches!(s.kind, StageKind::Edfa { .. }))
            .collect()
    }

    /// Launch aggregate power, mW.
    pub fn launch_total_mw(&self) -> f64 {
        self.launch_dbm.iter().map(|&p| dbm_to_mw(p)).sum()
    }
}

/// Builds the stage chain of `link` with the applicable faults folded in.
pub fn stages_with_faults(link: &OpticalLink, faults: &[FaultSpec]) -> Vec<Stage> {
    let mut stages = link_stages(link);
    for f in faults.iter().filter(|f| f.applies_to(link)) {
        match &f.kind {
            FaultKind::NfDegradation { edfa_id } => {
                for st in &mut stages {
                    if let StageKind::Edfa { unit, nf_offset_db } = &mut st.kind {
                        if &unit.id == edfa_id {
                            *nf_offset_db += f.magnitude_db;
                        }
                    }
                }
            }
            FaultKind::StepLoss { distance_km, .. } => {
                insert_step(&mut stages, &f.id, *distance_km, f.magnitude_db);
            }
        }
    }
    stages
}

fn insert_step(stages: &mut Vec<Stage>, id: &str, d: f64, loss_db: f64) {
    let fault = Stage {
        label: id.to_owned(),
        element: None,
        position_km: d,
        kind: StageKind::Loss { loss_db },
    };
    // a fault strictly inside a fiber splits it
    let inside = stages.iter().position(|s| {
        matches!(s.kind, StageKind::Fiber { .. }) && s.position_km < d && d < s.position_km + s.length_km()
    });
    if let Some(k) = inside {
        let StageKind::Fiber { span, inject_nli } = stages[k].kind.clone() else {
            unreachable!()
        };
        let head_len = d - stages[k].position_km;
        let frac = head_len / span.length_km;
        let mut head = span.clone();
        head.length_km = head_len;
        head.loss_tilt_db = span.loss_tilt_db * frac;
        let mut tail = span;
        tail.length_km -= head_len;
        tail.loss_tilt_db -= head.loss_tilt_db;
        let tail_stage = Stage {
            label: format!("{}.tail", stages[k].label),
            element: stages[k].element,
            position_km: d,
            kind: StageKind::Fiber {
                span: tail,
                inject_nli: false,
            },
        };
        stages[k].kind = StageKind::Fiber {
            span: head,
            inject_nli,
        };
        stages.insert(k + 1, fault);
        stages.insert(k + 2, tail_stage);
        return;
    }
    // at a boundary the fault sits after every lumped element at `d` and
    // before the next span
    let at = stages
        .iter()
        .position(|s| {
            let span_entry = matches!(s.kind, StageKind::Fiber { .. }) || s.label.ends_with(".conn_in");
            span_entry && s.position_km >= d
        })
        .unwrap_or(stages.len());
    stages.insert(at, fault);
}

/// Forward model of `link` for a per-channel launch with `faults` active.
pub fn propagate(
    link: &OpticalLink,
    grid: &ChannelGrid,
    launch_dbm: &[f64],
    faults: &[FaultSpec],
) -> Result<LineState, TwinError> {
    let stages = stages_with_faults(link, faults);
    let records = propagate_stages(&stages, grid, launch_dbm)?;
    Ok(LineState {
        link_id: link.id.clone(),
        grid: grid.clone(),
        launch_dbm: launch_dbm.to_vec(),
        stages,
        records,
        length_km: link.length_km(),
    })
}

/// Forward model over several links in sequence (a route or a segment), each
/// with its applicable faults.
pub fn propagate_chain(
    links: &[&OpticalLink],
    grid: &ChannelGrid,
    launch_dbm: &[f64],
    faults: &[FaultSpec],
) -> Result<LineState, TwinError> {
    let mut stages = Vec::new();
    let mut offset = 0.0;
    for l in links {
        for mut st in stages_with_faults(l, faults) {
            st.position_km += offset;
            stages.push(st);
        }
        offset += l.length_km();
    }
    let records = propagate_stages(&stages, grid, launch_dbm)?;
    let ids: Vec<&str> = links.iter().map(|l| l.id.as_str()).collect();
    Ok(LineState {
        link_id: LinkId::from(ids.join("+").as_str()),
        grid: grid.clone(),
        launch_dbm: launch_dbm.to_vec(),
        stages,
        records,
        length_km: offset,
    })
}

/// Round-trip time in µs over `length_km` of fiber.
pub fn roundtrip_us(length_km: f64, processing_offset_us: f64, n_group: f64) -> f64 {
    2.0 * length_km * n_group / C_KM_PER_S * 1e6 + processing_offset_us
}

/// Round-trip time over every link of `route`.
pub fn measure_roundtrip(t: &Topology, route: &RouteCandidate, processing_offset_us: f64, n_group: f64) -> f64 {
    roundtrip_us(route.length_km(t), processing_offset_us, n_group)
}
