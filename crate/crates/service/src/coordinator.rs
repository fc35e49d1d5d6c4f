//! Single-writer coordinator. One thread owns the state and the log file;
//! request handlers read immutable snapshots and queue mutations.

use std::path::Path;
use std::sync::{Arc, RwLock};

use thiserror::Error;
use tokio::sync::{mpsc, oneshot, watch};

use crate::engine::{Engine, EngineConfig, EngineError, Event, Mutation, Outcome};
use crate::log::{read_log, replay_events, Clock, EventLog, EventRecord, LogError};
use dcx_core::Topology;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("log was started with a different topology or config")]
    LogMismatch,
    #[error("coordinator stopped")]
    Closed,
}

/// State plus its event history, optionally mirrored to a log file.
pub struct Ledger {
    engine: Engine,
    records: Vec<EventRecord>,
    log: Option<EventLog>,
    clock: Clock,
}

impl Ledger {
    /// Starts from `topology`, or resumes the log at `log_path` when it
    /// already holds records for the same topology and config.
    pub fn open(
        topology: Topology,
        config: EngineConfig,
        log_path: Option<&Path>,
        clock: Clock,
    ) -> Result<Self, ServiceError> {
        let existing = match log_path {
            Some(p) => read_log(p)?,
            None => vec![],
        };
        let mut log = log_path.map(EventLog::open).transpose()?;
        if let Some(engine) = replay_events(&existing)? {
            match &existing[0].payload {
                Event::Init { topology: t, config: c } if *t == topology && *c == config => {}
                _ => return Err(ServiceError::LogMismatch),
            }
            return Ok(Self {
                engine,
                records: existing,
                log,
                clock,
            });
        }
        let (engine, init) = Engine::init(topology, config)?;
        let r = EventRecord {
            seq: 0,
            timestamp: clock.stamp(0),
            kind: init.kind(),
            payload: init,
            state_digest: engine.digest(),
        };
        if let Some(l) = log.as_mut() {
            l.append(&r)?;
        }
        Ok(Self {
            engine,
            records: vec![r],
            log,
            clock,
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    /// Applies `m` and appends its record. The state only advances once the
    /// record is on disk.
    pub fn submit(&mut self, m: &Mutation) -> Result<(Outcome, EventRecord), ServiceError> {
        let (next, ev, out) = self.engine.submit(m)?;
        let seq = self.records.len() as u64;
        let r = EventRecord {
            seq,
            timestamp: self.clock.stamp(seq),
            kind: ev.kind(),
            payload: ev,
            state_digest: next.digest(),
        };
        if let Some(l) = self.log.as_mut() {
            l.append(&r)?;
        }
        self.engine = next;
        self.records.push(r.clone());
        Ok((out, r))
    }
}

type Reply = oneshot::Sender<Result<(Outcome, EventRecord), ServiceError>>;

/// Handle shared by request handlers.
#[derive(Clone)]
pub struct Coordinator {
    jobs: mpsc::Sender<(Mutation, Reply)>,
    state: watch::Receiver<Arc<Engine>>,
    records: Arc<RwLock<Vec<EventRecord>>>,
}

impl Coordinator {
    /// Moves `ledger` onto a dedicated writer thread.
    pub fn start(mut ledger: Ledger) -> Self {
        let (jobs, mut rx) = mpsc::channel::<(Mutation, Reply)>(256);
        let (state_tx, state) = watch::channel(Arc::new(ledger.engine().clone()));
        let records = Arc::new(RwLock::new(ledger.records().to_vec()));
        let shared = records.clone();
        std::thread::Builder::new()
            .name("dcx-writer".into())
            .spawn(move || {
                while let Some((m, reply)) = rx.blocking_recv() {
                    let res = ledger.submit(&m);
                    if let Ok((_, r)) = &res {
                        shared.write().expect("records lock").push(r.clone());
                        state_tx.send_replace(Arc::new(ledger.engine().clone()));
                        tracing::debug!(seq = r.seq, kind = ?r.kind, "event appended");
                    }
                    let _ = reply.send(res);
                }
            })
            .expect("spawn writer thread");
        Self { jobs, state, records }
    }

    /// Queues `m` and waits until it is applied and logged.
    pub async fn submit(&self, m: Mutation) -> Result<(Outcome, EventRecord), ServiceError> {
        let (tx, rx) = oneshot::channel();
        self.jobs.send((m, tx)).await.map_err(|_| ServiceError::Closed)?;
        rx.await.map_err(|_| ServiceError::Closed)?
    }

    /// Latest committed state.
    pub fn snapshot(&self) -> Arc<Engine> {
        self.state.borrow().clone()
    }

    /// Records with `seq > since`, or all of them.
    pub fn events_since(&self, since: Option<u64>) -> Vec<EventRecord> {
        let rs = self.records.read().expect("records lock");
        let from = since.map_or(0, |s| (s + 1).min(rs.len() as u64) as usize);
        rs[from..].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dcx_core::fixtures;
    use dcx_core::protocol::SessionPolicy;

    fn start() -> Mutation {
        Mutation::StartSession {
            site_a: "A".into(),
            site_b: "B".into(),
            policy: SessionPolicy::default(),
        }
    }

    #[test]
    fn ledger_resumes_its_log() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.ndjson");
        let cfg = EngineConfig::with_seed(1);
        let mut l = Ledger::open(fixtures::demo_topology(), cfg.clone(), Some(&path), Clock::Logical).unwrap();
        l.submit(&start()).unwrap();
        let digest = l.engine().digest();
        drop(l);
        let l = Ledger::open(fixtures::demo_topology(), cfg, Some(&path), Clock::Logical).unwrap();
        assert_eq!(l.records().len(), 2);
        assert_eq!(l.engine().digest(), digest);
        let other = Ledger::open(
            fixtures::demo_topology(),
            EngineConfig::with_seed(2),
            Some(&path),
            Clock::Logical,
        );
        assert!(matches!(other, Err(ServiceError::LogMismatch)));
    }

    #[test]
    fn rejected_mutations_leave_no_trace() {
        let mut l = Ledger::open(fixtures::demo_topology(), EngineConfig::with_seed(1), None, Clock::Logical).unwrap();
        let before = l.engine().digest();
        let bad = Mutation::ClearFault {
            fault_id: "fault-9".into(),
        };
        assert!(l.submit(&bad).is_err());
        assert_eq!(l.records().len(), 1);
        assert_eq!(l.engine().digest(), before);
    }

    #[tokio::test]
    async fn concurrent_submissions_are_serialized() {
        let l = Ledger::open(fixtures::demo_topology(), EngineConfig::with_seed(1), None, Clock::Logical).unwrap();
        let c = Coordinator::start(l);
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let c = c.clone();
                tokio::spawn(async move { c.submit(start()).await.unwrap().1.seq })
            })
            .collect();
        let mut seqs = Vec::new();
        for h in handles {
            seqs.push(h.await.unwrap());
        }
        seqs.sort();
        assert_eq!(seqs, (1..=8).collect::<Vec<_>>());
        let snap = c.snapshot();
        assert_eq!(snap.sessions.len(), 8);
        assert_eq!(c.events_since(None).len(), 9);
        assert_eq!(c.events_since(Some(6)).iter().map(|r| r.seq).collect::<Vec<_>>(), vec![7, 8]);
        assert!(c.events_since(Some(99)).is_empty());
        let replayed = replay_events(&c.events_since(None)).unwrap().unwrap();
        assert_eq!(replayed.digest(), snap.digest());
    }
}
