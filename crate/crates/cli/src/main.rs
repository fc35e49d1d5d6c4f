//! `dcx`: run the gateway, drive it over HTTP, and run scenarios offline.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dcx_client::DcxClient;
use dcx_core::protocol::{SessionPolicy, Verdict};
use dcx_service::api::serve;
use dcx_service::coordinator::{Coordinator, Ledger};
use dcx_service::engine::EngineConfig;
use dcx_service::log::{read_log, replay_events, Clock};
use dcx_service::scenario::{load_scenario, resolve_topology, run_scenario, ScenarioError};

#[derive(Parser)]
#[command(name = "dcx", version, about = "DCX optical control plane")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockArg {
    Wall,
    Logical,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP/JSON API.
    Serve {
        /// Topology file, or `fixture:<name>`.
        #[arg(long)]
        topology: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        #[arg(long, env = "DCX_SEED", default_value_t = 0)]
        seed: u64,
        /// Leave out the fault injection endpoints.
        #[arg(long)]
        no_chaos: bool,
        /// Event log; appended to before every acknowledgment and resumed
        /// from on restart.
        #[arg(long, default_value = "dcx-events.ndjson")]
        log: PathBuf,
        #[arg(long, value_enum, default_value = "wall")]
        clock: ClockArg,
    },
    /// Run a scenario file locally and write its artifacts.
    RunScenario {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Start a provisioning session on a running server.
    Provision {
        site_a: String,
        site_b: String,
        #[arg(long)]
        auto_approve: bool,
        #[arg(long, env = "DCX_SERVER", default_value = "http://127.0.0.1:8080")]
        server: String,
    },
    /// Approve or roll back a pending session.
    Decide {
        session: String,
        #[arg(value_enum)]
        verdict: VerdictArg,
        #[arg(long, default_value = "")]
        reason: String,
        #[arg(long, env = "DCX_SERVER", default_value = "http://127.0.0.1:8080")]
        server: String,
    },
    /// List sessions, optionally by state (`pending` for the approval queue).
    Sessions {
        #[arg(long)]
        state: Option<String>,
        #[arg(long, env = "DCX_SERVER", default_value = "http://127.0.0.1:8080")]
        server: String,
    },
    /// Fetch a plot table: profile, accumulated_gsnr, q_vs_power, osnr_error_hist.
    Plot {
        kind: String,
        target: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "DCX_SERVER", default_value = "http://127.0.0.1:8080")]
        server: String,
    },
    /// Rebuild the state from an event log and check every digest.
    Replay { log: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum VerdictArg {
    Approve,
    Rollback,
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

async fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Serve {
            topology: t,
            port,
            bind,
            seed,
            no_chaos,
            log,
            clock,
        } => {
            let clock = match clock {
                ClockArg::Wall => Clock::Wall,
                ClockArg::Logical => Clock::Logical,
            };
            let ledger = Ledger::open(resolve_topology(&t, Path::new("."))?, EngineConfig::with_seed(seed), Some(&log), clock)?;
            let h = serve(Coordinator::start(ledger), SocketAddr::new(bind, port), !no_chaos).await?;
            println!("listening on {}", h.base_url());
            tokio::signal::ctrl_c().await?;
            h.shutdown().await?;
        }
        Command::RunScenario { file, out } => {
            let (mut s, base) = load_scenario(&file)?;
            if let Ok(v) = std::env::var("DCX_SEED") {
                s.seed = v.parse().context("DCX_SEED must be an unsigned integer")?;
            }
            match run_scenario(&s, &base, &out) {
                Ok(summary) => {
                    println!(
                        "{}: {} steps, {} events, digest {}",
                        summary.name,
                        summary.steps.len(),
                        summary.event_count,
                        summary.final_digest
                    );
                }
                Err(e @ ScenarioError::StepFailure { .. }) => bail!("{}: {e}", s.name),
                Err(e) => return Err(e.into()),
            }
        }
        Command::Provision {
            site_a,
            site_b,
            auto_approve,
            server,
        } => {
            let policy = SessionPolicy {
                auto_approve,
                ..SessionPolicy::default()
            };
            let v = DcxClient::new(server).start_session(&site_a, &site_b, &policy).await?;
            print_json(&serde_json::to_value(&v)?);
        }
        Command::Decide {
            session,
            verdict,
            reason,
            server,
        } => {
            let verdict = match verdict {
                VerdictArg::Approve => Verdict::Approve,
                VerdictArg::Rollback => Verdict::Rollback,
            };
            let v = DcxClient::new(server).decide(&session, verdict, &reason).await?;
            print_json(&serde_json::to_value(&v)?);
        }
        Command::Sessions { state, server } => {
            let v = DcxClient::new(server).sessions(state.as_deref()).await?;
            print_json(&serde_json::to_value(&v)?);
        }
        Command::Plot {
            kind,
            target,
            out,
            server,
        } => {
            let csv = DcxClient::new(server).plot(&kind, &target).await?;
            write_file(&out, &csv)?;
            println!("{} rows -> {}", csv.lines().count().saturating_sub(1), out.display());
        }
        Command::Replay { log } => {
            let records = read_log(&log)?;
            let state = replay_events(&records)?;
            let summary = match state {
                None => serde_json::json!({ "events": 0 }),
                Some(e) => serde_json::json!({
                    "events": records.len(),
                    "digest": e.digest(),
                    "sessions": e.sessions_in(None).iter().map(|s| (s.session_id.clone(), s.state)).collect::<Vec<_>>(),
                    "active_faults": e.faults.active().len(),
                    "calibrations": e.calibrations.keys().collect::<Vec<_>>(),
                }),
            };
            print_json(&summary);
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    match rt.block_on(run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
