//! Scripted runs against a local engine. Each run writes the event log,
//! the requested plot tables and a JSON summary.

use std::path::{Path, PathBuf};

use dcx_core::linetwin::FaultKind;
use dcx_core::monitor::{LossEvent, NfFaultReport};
use dcx_core::netmodel::load_topology;
use dcx_core::protocol::{SessionPolicy, State, Verdict};
use dcx_core::{fixtures, LinkId, SiteId, Topology};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::api::DEFAULT_MIN_STEP_DB;
use crate::coordinator::{Ledger, ServiceError};
use crate::engine::{EngineConfig, Mutation, OptimizationRecord, Outcome};
use crate::log::Clock;
use crate::plots::{plot_table, PlotKind};

pub const EVENTS_FILE: &str = "events.ndjson";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PLOTS_DIR: &str = "plots";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario {path}: {reason}")]
    Load { path: PathBuf, reason: String },
    #[error("topology {reference}: {reason}")]
    Topology { reference: String, reason: String },
    #[error("step {index} ({step}) failed: {reason}")]
    StepFailure { index: usize, step: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Service(#[from] ServiceError),
}

fn default_tol_km() -> f64 {
    1.0
}

fn default_tol_db() -> f64 {
    0.3
}

/// Predicate checked by an `assert` step against earlier step results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "that", rename_all = "snake_case")]
pub enum Check {
    /// The last localization reported a loss near `distance_km`.
    LossEvent {
        distance_km: f64,
        magnitude_db: f64,
        #[serde(default = "default_tol_km")]
        tolerance_km: f64,
        #[serde(default = "default_tol_db")]
        tolerance_db: f64,
    },
    NoLossEvents,
    /// The last NF check flagged exactly this amplifier.
    NfFlagged { edfa_id: String },
    NoNfFlags,
    SessionState { session: String, state: State },
    /// Flatness of the last optimization, dB.
    FlatnessAtMost { db: f64 },
    /// Mean GSNR lost by the last optimization, dB.
    MeanGsnrDropAtMost { db: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    Provision {
        site_a: SiteId,
        site_b: SiteId,
        #[serde(default)]
        policy: SessionPolicy,
    },
    Decide {
        session: String,
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
    Baseline {
        link_id: LinkId,
    },
    Localize {
        link_id: LinkId,
        #[serde(default)]
        min_step_db: Option<f64>,
    },
    Calibrate {
        link_id: LinkId,
    },
    /// NF check of the latest calibration of `link_id`.
    NfCheck {
        link_id: LinkId,
    },
    Optimize {
        link_id: LinkId,
    },
    Assert {
        check: Check,
    },
    Plot {
        kind: PlotKind,
        target: String,
    },
}

impl Step {
    pub fn name(&self) -> &'static str {
        match self {
            Step::Provision { .. } => "provision",
            Step::Decide { .. } => "decide",
            Step::InjectFault { .. } => "inject_fault",
            Step::ClearFault { .. } => "clear_fault",
            Step::Baseline { .. } => "baseline",
            Step::Localize { .. } => "localize",
            Step::Calibrate { .. } => "calibrate",
            Step::NfCheck { .. } => "nf_check",
            Step::Optimize { .. } => "optimize",
            Step::Assert { .. } => "assert",
            Step::Plot { .. } => "plot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// `fixture:<name>` or a topology file, relative to the scenario file.
    pub topology: String,
    pub seed: u64,
    #[serde(default)]
    pub config: Option<EngineConfig>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub index: usize,
    pub step: String,
    pub result: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub seed: u64,
    pub steps: Vec<StepSummary>,
    pub event_count: usize,
    pub final_digest: String,
    pub plots: Vec<String>,
}

/// Reads a scenario and returns it with the directory relative topology
/// paths resolve against.
pub fn load_scenario(path: &Path) -> Result<(Scenario, PathBuf), ScenarioError> {
    let load = |reason: String| ScenarioError::Load {
        path: path.to_owned(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| load(e.to_string()))?;
    let s: Scenario = serde_json::from_str(&text).map_err(|e| load(e.to_string()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((s, base))
}

/// Named fixture topologies.
pub fn fixture(name: &str) -> Option<Topology> {
    match name {
        "demo" => Some(fixtures::demo_topology()),
        "five_pop_mesh" => Some(fixtures::five_pop_mesh()),
        "metro" => Some(fixtures::metro_topology()),
        _ => None,
    }
}

/// Resolves a topology reference.
pub fn resolve_topology(reference: &str, base: &Path) -> Result<Topology, ScenarioError> {
    let err = |reason: String| ScenarioError::Topology {
        reference: reference.to_owned(),
        reason,
    };
    if let Some(name) = reference.strip_prefix("fixture:") {
        return fixture(name).ok_or_else(|| err("no such fixture".into()));
    }
    let path = base.join(reference);
    let text = std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
    load_topology(&text).map_err(|e| err(e.to_string()))
}

#[derive(Default)]
struct Results {
    localized: Option<Vec<LossEvent>>,
    nf: Option<NfFaultReport>,
    optimized: Option<OptimizationRecord>,
}

fn check(c: &Check, r: &Results, ledger: &Ledger) -> Result<Value, String> {
    let e = ledger.engine();
    match c {
        Check::LossEvent {
            distance_km,
            magnitude_db,
            tolerance_km,
            tolerance_db,
        } => {
            let evs = r.localized.as_ref().ok_or("no localization has run")?;
            evs.iter()
                .find(|x| {
                    (x.distance_km - distance_km).abs() <= *tolerance_km
                        && (x.magnitude_db - magnitude_db).abs() <= *tolerance_db
                })
                .map(|x| json!(x))
                .ok_or_else(|| format!("no loss of {magnitude_db} dB near {distance_km} km in {evs:?}"))
        }
        Check::NoLossEvents => {
            let evs = r.localized.as_ref().ok_or("no localization has run")?;
            if evs.is_empty() {
                Ok(json!(true))
            } else {
                Err(format!("unexpected losses {evs:?}"))
            }
        }
        Check::NfFlagged { edfa_id } => {
            let nf = r.nf.as_ref().ok_or("no NF check has run")?;
            if nf.flagged == [edfa_id.clone()] {
                Ok(json!(nf.flagged))
            } else {
                Err(format!("flagged {:?}, expected [{edfa_id}]", nf.flagged))
            }
        }
        Check::NoNfFlags => {
            let nf = r.nf.as_ref().ok_or("no NF check has run")?;
            if nf.flagged.is_empty() {
                Ok(json!(true))
            } else {
                Err(format!("unexpected flags {:?}", nf.flagged))
            }
        }
        Check::SessionState { session, state } => {
            let got = e.session(session).map_err(|x| x.to_string())?.state();
            if got == *state {
                Ok(json!(got))
            } else {
                Err(format!("session {session} is {got:?}, expected {state:?}"))
            }
        }
        Check::FlatnessAtMost { db } => {
            let o = r.optimized.as_ref().ok_or("no optimization has run")?;
            if o.result.flatness_db <= *db {
                Ok(json!(o.result.flatness_db))
            } else {
                Err(format!("flatness {:.3} dB above {db} dB", o.result.flatness_db))
            }
        }
        Check::MeanGsnrDropAtMost { db } => {
            let o = r.optimized.as_ref().ok_or("no optimization has run")?;
            let drop = o.result.baseline_mean_gsnr_db - o.result.mean_gsnr_db;
            if drop <= *db {
                Ok(json!(drop))
            } else {
                Err(format!("mean GSNR dropped {drop:.3} dB, above {db} dB"))
            }
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Executes `s` and writes its artifacts to `out_dir`, replacing any
/// earlier run there.
pub fn run_scenario(s: &Scenario, base: &Path, out_dir: &Path) -> Result<ScenarioSummary, ScenarioError> {
    let topology = resolve_topology(&s.topology, base)?;
    let config = EngineConfig {
        seed: s.seed,
        ..s.config.clone().unwrap_or_else(|| EngineConfig::with_seed(s.seed))
    };
    let plots_dir = out_dir.join(PLOTS_DIR);
    std::fs::create_dir_all(&plots_dir).map_err(io(&plots_dir))?;
    let log_path = out_dir.join(EVENTS_FILE);
    if log_path.exists() {
        std::fs::remove_file(&log_path).map_err(io(&log_path))?;
    }
    let mut ledger = Ledger::open(topology, config, Some(&log_path), Clock::Logical)?;
    let mut results = Results::default();
    let mut steps = Vec::new();
    let mut plots = Vec::new();

    for (index, step) in s.steps.iter().enumerate() {
        let fail = |reason: String| ScenarioError::StepFailure {
            index,
            step: step.name().to_owned(),
            reason,
        };
        let submit = |ledger: &mut Ledger, m: Mutation| -> Result<Outcome, ScenarioError> {
            ledger.submit(&m).map(|(o, _)| o).map_err(|e| fail(e.to_string()))
        };
        let result = match step {
            Step::Provision { site_a, site_b, policy } => json!(submit(&mut ledger, Mutation::StartSession {
                site_a: site_a.clone(),
                site_b: site_b.clone(),
                policy: policy.clone(),
            })?),
            Step::Decide {
                session,
                verdict,
                reason,
            } => json!(submit(&mut ledger, Mutation::Decide {
                session_id: session.clone(),
                verdict: *verdict,
                reason: reason.clone(),
            })?),
            Step::InjectFault { fault, magnitude_db } => json!(submit(&mut ledger, Mutation::InjectFault {
                fault: fault.clone(),
                magnitude_db: *magnitude_db,
            })?),
            Step::ClearFault { fault_id } => json!(submit(&mut ledger, Mutation::ClearFault {
                fault_id: fault_id.clone()
            })?),
            Step::Baseline { link_id } => json!(submit(&mut ledger, Mutation::CaptureBaseline {
                link_id: link_id.clone()
            })?),
            Step::Calibrate { link_id } => json!(submit(&mut ledger, Mutation::Calibrate {
                link_id: link_id.clone()
            })?),
            Step::Optimize { link_id } => {
                let out = submit(&mut ledger, Mutation::Optimize {
                    link_id: link_id.clone(),
                })?;
                if let Outcome::Optimized(o) = &out {
                    results.optimized = Some(o.clone());
                }
                json!(out)
            }
            Step::Localize { link_id, min_step_db } => {
                let evs = ledger
                    .engine()
                    .localize(link_id.as_str(), min_step_db.unwrap_or(DEFAULT_MIN_STEP_DB))
                    .map_err(|e| fail(e.to_string()))?;
                results.localized = Some(evs.clone());
                json!({ "link_id": link_id, "events": evs })
            }
            Step::NfCheck { link_id } => {
                let e = ledger.engine();
                let c = e
                    .latest_calibration(link_id.as_str())
                    .ok_or_else(|| fail(format!("link {link_id} has no calibration")))?;
                let r = e.nf_check(&c.calibration_id).map_err(|x| fail(x.to_string()))?;
                let v = json!({
                    "calibration_id": c.calibration_id,
                    "flagged": r.flagged,
                    "refits": r.refits,
                    "outlier_count": r.errors.outlier_count,
                });
                results.nf = Some(r);
                v
            }
            Step::Assert { check: c } => check(c, &results, &ledger).map_err(fail)?,
            Step::Plot { kind, target } => {
                let table = plot_table(ledger.engine(), *kind, target).map_err(|e| fail(e.to_string()))?;
                let file = format!("{}_{}.csv", kind.as_str(), target);
                let path = plots_dir.join(&file);
                std::fs::write(&path, &table).map_err(io(&path))?;
                plots.push(format!("{PLOTS_DIR}/{file}"));
                json!({ "file": format!("{PLOTS_DIR}/{file}"), "rows": table.lines().count() - 1 })
            }
        };
        steps.push(StepSummary {
            index,
            step: step.name().to_owned(),
            result,
        });
    }

    let summary = ScenarioSummary {
        name: s.name.clone(),
        seed: s.seed,
        steps,
        event_count: ledger.records().len(),
        final_digest: ledger.engine().digest(),
        plots,
    };
    let path = out_dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(io(&path))?;
    Ok(summary)
}
