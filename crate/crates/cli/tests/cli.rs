use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

fn dcx() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dcx"));
    c.env_remove("DCX_SEED").env_remove("DCX_SERVER");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"))
}

fn ok(o: Output) -> String {
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(o.status.success(), "{out}\n{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn json(o: Output) -> serde_json::Value {
    serde_json::from_str(&ok(o)).unwrap()
}

struct Server(Child, String);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn server(extra: &[&str]) -> Server {
    let mut child = dcx()
        .args(["serve", "--topology", "fixture:demo", "--port", "0", "--seed", "3"])
        .args(extra)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect(&line).to_owned();
    Server(child, url)
}

#[test]
fn scenario_runs_are_reproducible_and_replay() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let file = scenario("loss_localization");
    ok(dcx().arg("run-scenario").arg(&file).arg("--out").arg(a.path()).output().unwrap());
    ok(dcx().arg("run-scenario").arg(&file).arg("--out").arg(b.path()).output().unwrap());
    for f in ["events.ndjson", "summary.json", "plots/profile_LINK-4x80.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("summary.json")).unwrap()).unwrap();
    let r = json(dcx().arg("replay").arg(a.path().join("events.ndjson")).output().unwrap());
    assert_eq!(r["digest"], summary["final_digest"]);
    assert_eq!(r["events"], summary["event_count"]);
}

#[test]
fn seed_env_overrides_the_scenario_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let file = scenario("loss_localization");
    ok(dcx().arg("run-scenario").arg(&file).arg("--out").arg(a.path()).output().unwrap());
    ok(dcx()
        .env("DCX_SEED", "99")
        .arg("run-scenario")
        .arg(&file)
        .arg("--out")
        .arg(b.path())
        .output()
        .unwrap());
    let read = |d: &Path| -> serde_json::Value {
        serde_json::from_slice(&std::fs::read(d.join("summary.json")).unwrap()).unwrap()
    };
    assert_eq!(read(b.path())["seed"], 99);
    assert_ne!(read(a.path())["final_digest"], read(b.path())["final_digest"]);
}

#[test]
fn failing_assertions_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    let s = serde_json::json!({
        "name": "bad",
        "topology": "fixture:demo",
        "seed": 1,
        "steps": [
            {"step": "baseline", "link_id": "LINK-4x80"},
            {"step": "assert", "check": {"that": "loss_event", "distance_km": 100.0, "magnitude_db": 3.0}}
        ]
    });
    std::fs::write(&file, s.to_string()).unwrap();
    let o = dcx().arg("run-scenario").arg(&file).arg("--out").arg(dir.path().join("out")).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 1"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn corrupt_logs_fail_replay() {
    let dir = tempfile::tempdir().unwrap();
    ok(dcx().arg("run-scenario").arg(scenario("approval")).arg("--out").arg(dir.path()).output().unwrap());
    let path = dir.path().join("events.ndjson");
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().enumerate().filter(|(i, _)| *i != 1).map(|(_, l)| l).collect();
    std::fs::write(&path, kept.join("\n")).unwrap();
    let o = dcx().arg("replay").arg(&path).output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn operator_commands_drive_a_running_server() {
    let dir = tempfile::tempdir().unwrap();
    let s = server(&["--log", dir.path().join("ev.ndjson").to_str().unwrap()]);
    let provision = |extra: &[&str]| {
        json(dcx().args(["provision", "A", "B", "--server", &s.1]).args(extra).output().unwrap())
    };
    assert_eq!(provision(&["--auto-approve"])["state"], "Committed");
    let pending = provision(&[]);
    assert_eq!(pending["state"], "PendingApproval");
    let id = pending["session_id"].as_str().unwrap();

    let queue = json(dcx().args(["sessions", "--state", "pending", "--server", &s.1]).output().unwrap());
    assert_eq!(queue.as_array().unwrap().len(), 1);
    let v = json(dcx().args(["decide", id, "rollback", "--reason", "test", "--server", &s.1]).output().unwrap());
    assert_eq!(v["state"], "RolledBack");

    let csv = dir.path().join("plots/q.csv");
    ok(dcx()
        .args(["plot", "q_vs_power", "LINK-4x80", "--server", &s.1, "--out"])
        .arg(&csv)
        .output()
        .unwrap());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("p_in_dbm,q_db\n"));
    assert_eq!(text.lines().count(), 22);

    let o = dcx().args(["plot", "profile", "NOPE", "--server", &s.1, "--out"]).arg(&csv).output().unwrap();
    assert!(!o.status.success());
    drop(s);

    let r = json(dcx().arg("replay").arg(dir.path().join("ev.ndjson")).output().unwrap());
    assert_eq!(r["events"], 4);
}

#[test]
fn restarted_servers_resume_from_their_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("ev.ndjson");
    let log = log.to_str().unwrap();
    let s = server(&["--log", log]);
    let v = json(dcx().args(["provision", "A", "B", "--server", &s.1]).output().unwrap());
    drop(s);

    let s = server(&["--log", log]);
    let queue = json(dcx().args(["sessions", "--state", "pending", "--server", &s.1]).output().unwrap());
    assert_eq!(queue[0]["session_id"], v["session_id"]);
    drop(s);

    let o = dcx()
        .args(["serve", "--topology", "fixture:demo", "--port", "0", "--seed", "4", "--log", log])
        .output()
        .unwrap();
    assert!(!o.status.success());
}
