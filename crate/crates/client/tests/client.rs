use dcx_client::{ClientError, DcxClient};
use dcx_core::fixtures;
use dcx_core::linetwin::FaultKind;
use dcx_core::protocol::{SessionPolicy, State, Verdict};
use dcx_service::api::{serve, ServerHandle};
use dcx_service::coordinator::{Coordinator, Ledger};
use dcx_service::engine::EngineConfig;
use dcx_service::log::Clock;

async fn server() -> (ServerHandle, DcxClient) {
    let ledger = Ledger::open(fixtures::demo_topology(), EngineConfig::with_seed(4), None, Clock::Logical).unwrap();
    let h = serve(Coordinator::start(ledger), "127.0.0.1:0".parse().unwrap(), true)
        .await
        .unwrap();
    let c = DcxClient::new(format!("{}/", h.base_url()));
    (h, c)
}

#[tokio::test]
async fn approval_queue_round_trip() {
    let (h, c) = server().await;
    assert!(c.health().await.unwrap());
    assert_eq!(c.topology().await.unwrap(), fixtures::demo_topology());
    let policy = SessionPolicy::default();
    let mut ids = Vec::new();
    for _ in 0..3 {
        ids.push(c.start_session("A", "B", &policy).await.unwrap().session_id);
    }
    let pending = c.sessions(Some("pending")).await.unwrap();
    assert_eq!(pending.iter().map(|s| s.session_id.clone()).collect::<Vec<_>>(), ids);

    let cursor = c.events(None).await.unwrap().last().unwrap().seq;
    assert!(c.events(Some(cursor)).await.unwrap().is_empty());

    let v = c.decide(&ids[0], Verdict::Approve, "ok").await.unwrap();
    assert_eq!(v.state, State::Committed);
    let v = c.decide(&ids[1], Verdict::Rollback, "no").await.unwrap();
    assert_eq!(v.state, State::RolledBack);
    let err = c.decide(&ids[0], Verdict::Approve, "again").await.unwrap_err();
    assert_eq!(err.status(), Some(409));
    assert_eq!(c.session(&ids[0]).await.unwrap().state, State::Committed);

    let new = c.events(Some(cursor)).await.unwrap();
    assert_eq!(new.len(), 2);
    assert!(new.iter().all(|e| e.kind == "decision" && e.event_type() == Some("decision_applied")));
    assert_eq!(c.sessions(Some("pending")).await.unwrap().len(), 1);

    match c.session("S404").await {
        Err(ClientError::Api { status: 404, error, .. }) => assert_eq!(error, "unknown_session"),
        other => panic!("{other:?}"),
    }
    let w = c.what_if("A", "B", &policy).await.unwrap();
    assert!(w.modes.iter().any(|m| m.feasible));
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn monitoring_round_trip() {
    let (h, c) = server().await;
    c.capture_baseline("LINK-4x80").await.unwrap();
    let fault = FaultKind::StepLoss {
        link_id: "LINK-4x80".into(),
        distance_km: 160.0,
    };
    let id = c.inject_fault(&fault, 2.0).await.unwrap();
    assert_eq!(c.faults().await.unwrap().len(), 1);
    let evs = c.loss_events("LINK-4x80", Some(1.0)).await.unwrap();
    assert_eq!(evs.len(), 1);
    assert!((evs[0].distance_km - 160.0).abs() <= 1.0);
    let p = c.profile("LINK-4x80").await.unwrap();
    assert!(p.baseline.is_some() && p.difference.is_some());
    assert_eq!(p.events.len(), 1);
    c.clear_fault(&id).await.unwrap();
    assert!(c.faults().await.unwrap().is_empty());

    let cal = c.calibrate("LINK-ILA").await.unwrap();
    assert_eq!(c.calibration(&cal.calibration_id).await.unwrap(), cal);
    assert!(c.nf_check(&cal.calibration_id).await.unwrap().flagged.is_empty());
    let opt = c.optimize("LINK-ILA").await.unwrap();
    assert_eq!(c.optimization(&opt.optimization_id).await.unwrap(), opt);
    assert!(opt.result.flatness_db <= 0.5);
    let g = c.gsnr("LINK-ILA").await.unwrap();
    assert_eq!(g.per_edfa.len(), 4);

    let csv = c.plot("profile", "LINK-4x80").await.unwrap();
    assert_eq!(csv.lines().count(), 642);
    assert_eq!(c.plot("profile", "NOPE").await.unwrap_err().status(), Some(404));
    h.shutdown().await.unwrap();
}

#[tokio::test]
async fn unreachable_servers_are_transport_errors() {
    let c = DcxClient::new("http://127.0.0.1:9");
    assert!(matches!(c.health().await, Err(ClientError::Transport(_))));
}
