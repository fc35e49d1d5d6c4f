//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dcx_core::fixtures;
use dcx_core::linetwin::{
    collect_telemetry, propagate, roundtrip_us, synthesize_profile, FaultKind, FaultSet, LineState, TelemetryPlan,
};
use dcx_core::monitor::{
    calibrate_line, detect_nf_fault, localize_step_loss, operating_points, optimize_gain_tilt, span_length_from_rtt,
    NfFaultOptions, OptimizeOptions,
};
use dcx_core::netmodel::{ChannelGrid, FiberSpan, LineElement, LinkKind, OpticalLink, Topology};
use dcx_core::protocol::{
    run_provisioning, ErrorCode, Provisioning, Scheduler, SessionPolicy, State, SyntheticProber, TrxConfig, Verdict,
};
use dcx_core::qot::{
    ber_from_snr, combine_snr, concatenate_gsnr, link_gsnr, snr_from_ber, Modulation, SnrBudget, TrxNoiseModel,
};
use dcx_core::routing::{enumerate_routes, Occupancy};
use dcx_core::units::{db_to_lin, dbm_to_mw, lin_to_db};
use dcx_core::{LinkId, SiteId, TrxId};
use dcx_service::coordinator::Ledger;
use dcx_service::engine::{EngineConfig, Mutation, Outcome};
use dcx_service::log::Clock;
use dcx_service::plots::{plot_table, PlotKind};
use dcx_service::scenario::{load_scenario, run_scenario, EVENTS_FILE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type CriterionResult = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn grid() -> ChannelGrid {
    fixtures::reference_grid()
}

fn flat_launch() -> Vec<f64> {
    vec![0.0; grid().count]
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

// 1 ------------------------------------------------------------------------

/// Square-QAM and QPSK BER written out with libm's erfc.
fn oracle_ber(snr: f64, m: Modulation) -> f64 {
    match m {
        Modulation::Qpsk => 0.5 * libm::erfc((snr / 2.0).sqrt()),
        Modulation::Qam16 => 0.375 * libm::erfc((snr / 10.0).sqrt()),
    }
}

fn ber_engine() -> CriterionResult {
    let t0 = Instant::now();
    let b = ber_from_snr(10.0, Modulation::Qam16);
    ensure!((b - 0.0589872).abs() <= 1e-7, "ber(10, 16QAM) = {b}");
    let mut worst_oracle = 0.0_f64;
    for m in [Modulation::Qpsk, Modulation::Qam16] {
        for k in 0..=400 {
            let snr = db_to_lin(-5.0 + k as f64 * 0.05);
            worst_oracle = worst_oracle.max(rel(ber_from_snr(snr, m), oracle_ber(snr, m)));
        }
    }
    ensure!(worst_oracle <= 1e-9, "oracle disagreement {worst_oracle:e}");
    let mut worst_rt = 0.0_f64;
    let n = 2000;
    for m in [Modulation::Qpsk, Modulation::Qam16] {
        for k in 0..=n {
            // log-spaced over [1e-6, 0.374]
            let ber = 10f64.powf(-6.0 + (0.374f64.log10() + 6.0) * k as f64 / n as f64);
            let snr = snr_from_ber(ber, m).map_err(|e| format!("snr_from_ber({ber}): {e}"))?;
            worst_rt = worst_rt.max(rel(ber_from_snr(snr, m), ber));
        }
    }
    ensure!(worst_rt <= 1e-9, "round trip error {worst_rt:e}");
    let dt = t0.elapsed();
    ensure!(dt < Duration::from_secs(1), "took {dt:?}");
    Ok(format!(
        "ber={b:.7}, oracle err {worst_oracle:.1e}, round trip err {worst_rt:.1e}, {dt:.2?}"
    ))
}

// 2 ------------------------------------------------------------------------

fn random_segment(rng: &mut ChaCha8Rng, tag: &str) -> OpticalLink {
    let spans = rng.random_range(1..=4);
    let mut elements = Vec::new();
    for k in 0..spans {
        let mut s = FiberSpan::new(rng.random_range(50.0..110.0_f64).round());
        s.conn_in_db = rng.random_range(0.0..1.0);
        let gain = s.total_loss_db().clamp(10.0, 26.0);
        let mut a = fixtures::edfa(&format!("{tag}-A{k}"), gain);
        a.tilt_db = rng.random_range(-1.0..1.0);
        elements.push(LineElement::Span(s));
        elements.push(LineElement::Edfa(a));
    }
    OpticalLink {
        id: LinkId::from(tag),
        endpoints: [SiteId::from("X"), SiteId::from("Y")],
        kind: LinkKind::CarrierLink,
        elements,
        params_known: None,
    }
}

fn concatenation() -> CriterionResult {
    let g = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0_f64;
    for set in 0..1000 {
        let n = rng.random_range(2..=5);
        let segs: Vec<OpticalLink> = (0..n).map(|i| random_segment(&mut rng, &format!("S{set}.{i}"))).collect();
        // each segment sees the signal the previous one delivered
        let mut launch = flat_launch();
        let mut per_seg = Vec::new();
        for s in &segs {
            let r = link_gsnr(s, &g, &launch).map_err(|e| e.to_string())?;
            launch = r.signal_out_dbm.clone();
            per_seg.push(r.gsnr);
        }
        let refs: Vec<&OpticalLink> = segs.iter().collect();
        let whole = link_gsnr(&OpticalLink::concatenate("ALL", &refs), &g, &flat_launch()).map_err(|e| e.to_string())?;
        for ch in 0..g.count {
            let col: Vec<f64> = per_seg.iter().map(|s| s[ch]).collect();
            let e2e = concatenate_gsnr(&col).map_err(|e| e.to_string())?;
            worst = worst.max(rel(e2e, whole.gsnr[ch]));
        }
    }
    ensure!(worst <= 1e-9, "worst relative mismatch {worst:e}");
    let dbs = [20.0, 18.0, 17.0, 19.0];
    let lin: Vec<f64> = dbs.iter().map(|&d| db_to_lin(d)).collect();
    let e2e = lin_to_db(concatenate_gsnr(&lin).map_err(|e| e.to_string())?);
    ensure!((e2e - 12.337).abs() <= 0.001, "[20,18,17,19] -> {e2e}");
    Ok(format!("1000 sets, worst rel err {worst:.1e}; [20,18,17,19] dB -> {e2e:.3} dB"))
}

// 3 ------------------------------------------------------------------------

/// Every simple A→B path through POPs with at most `max_pops` POPs, by
/// depth-first search over the raw link list.
fn dfs_routes(t: &Topology, max_pops: usize) -> BTreeSet<Vec<String>> {
    let pops: BTreeSet<String> = t.pops().map(|s| s.id.to_string()).collect();
    let neighbours = |x: &str| -> Vec<String> {
        t.links
            .iter()
            .filter_map(|l| {
                let [a, b] = &l.endpoints;
                if a.as_str() == x {
                    Some(b.to_string())
                } else if b.as_str() == x {
                    Some(a.to_string())
                } else {
                    None
                }
            })
            .collect()
    };
    fn walk(
        path: &mut Vec<String>,
        out: &mut BTreeSet<Vec<String>>,
        pops: &BTreeSet<String>,
        nb: &dyn Fn(&str) -> Vec<String>,
        max: usize,
    ) {
        let here = path.last().unwrap().clone();
        for n in nb(&here) {
            if n == "B" {
                out.insert(path.clone());
            } else if pops.contains(&n) && !path.contains(&n) && path.len() < max {
                path.push(n);
                walk(path, out, pops, nb, max);
                path.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    for first in neighbours("A").into_iter().filter(|n| pops.contains(n)) {
        walk(&mut vec![first], &mut out, &pops, &neighbours, max_pops);
    }
    out
}

fn route_enumeration() -> CriterionResult {
    let (a, b) = (SiteId::from("A"), SiteId::from("B"));
    let t = fixtures::five_pop_mesh();
    let r = enumerate_routes(&t, &a, &b, 3).map_err(|e| e.to_string())?;
    let two = r.iter().filter(|x| x.pop_sequence.len() == 2).count();
    let three = r.iter().filter(|x| x.pop_sequence.len() == 3).count();
    ensure!(r.len() == 4 && two == 1 && three == 3, "{} routes ({two} two-POP, {three} three-POP)", r.len());
    let mut checked = 0;
    for m in 3..=8 {
        let t = fixtures::complete_pop_graph(m);
        for max_pops in 2..=m {
            let got: BTreeSet<Vec<String>> = enumerate_routes(&t, &a, &b, max_pops)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|x| x.pop_sequence.iter().map(|p| p.to_string()).collect())
                .collect();
            let want = dfs_routes(&t, max_pops);
            ensure!(got == want, "M={m} max_pops={max_pops}: {} vs {} routes", got.len(), want.len());
            checked += 1;
        }
    }
    Ok(format!("4 routes (1 two-POP, 3 three-POP); exhaustive agreement on {checked} (M, max_pops) pairs"))
}

// 4 ------------------------------------------------------------------------

const RX_TRX: TrxNoiseModel = TrxNoiseModel {
    snr_trx_const: 1000.0,
    snr_p_coeff: 1.0e4,
};

/// End-to-end 16QAM Q (dB) per channel over `link`.
fn q_per_channel(link: &OpticalLink, launch: &[f64]) -> Result<Vec<f64>, String> {
    let r = link_gsnr(link, &grid(), launch).map_err(|e| e.to_string())?;
    Ok((0..grid().count)
        .map(|ch| {
            let b = SnrBudget {
                snr_ase: r.snr_ase[ch],
                snr_nli: r.snr_nli[ch],
                trx: RX_TRX,
                p_in_mw: dbm_to_mw(r.signal_out_dbm[ch]),
            };
            combine_snr(&b, Modulation::Qam16).q_db
        })
        .collect())
}

fn worst_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst-channel Q error per case: (calibrated, uncalibrated).
fn q_errors(sigma: f64) -> Result<Vec<(f64, f64)>, String> {
    let g = grid();
    let launch = flat_launch();
    (0..50)
        .map(|seed| {
            let (truth, design) = fixtures::random_calibration_case(seed);
            let plan = TelemetryPlan {
                launch_dbm: launch.clone(),
                operating_points: operating_points(&design),
                noise_sigma_db: sigma,
                seed: 4_000 + seed,
            };
            let snaps = collect_telemetry(&truth, &g, &plan, &[]).map_err(|e| e.to_string())?;
            let cal = calibrate_line(&design, &g, &snaps).map_err(|e| format!("seed {seed}: {e}"))?;
            let measured = q_per_channel(&truth, &launch)?;
            let calibrated = q_per_channel(&cal.apply(&design), &launch)?;
            let uncalibrated = q_per_channel(&design, &launch)?;
            Ok((worst_gap(&calibrated, &measured), worst_gap(&uncalibrated, &measured)))
        })
        .collect()
}

fn q_budget() -> CriterionResult {
    let t0 = Instant::now();
    let noisy = q_errors(0.1)?;
    let within = noisy.iter().filter(|e| e.0 <= 0.3).count();
    ensure!(within * 100 >= 95 * noisy.len(), "{within}/50 within 0.3 dB at sigma 0.1");
    let clean = q_errors(0.0)?;
    let worst_clean = clean.iter().map(|e| e.0).fold(0.0, f64::max);
    ensure!(worst_clean <= 0.05, "noiseless worst error {worst_clean:.4} dB");
    let mean = |v: &[(f64, f64)], f: fn(&(f64, f64)) -> f64| v.iter().map(f).sum::<f64>() / v.len() as f64;
    let cal_mean = mean(&noisy, |e| e.0);
    let uncal_mean = mean(&noisy, |e| e.1);
    ensure!(
        uncal_mean >= 2.0 * cal_mean,
        "uncalibrated mean error {uncal_mean:.3} dB is not twice {cal_mean:.3} dB"
    );
    let dt = t0.elapsed();
    ensure!(dt < Duration::from_secs(60), "took {dt:?}");
    Ok(format!(
        "{within}/50 within 0.3 dB; noiseless worst {worst_clean:.4} dB; mean error {cal_mean:.3} vs {uncal_mean:.3} dB uncalibrated; {dt:.2?}"
    ))
}

// 5 ------------------------------------------------------------------------

fn line_state(link: &OpticalLink, fault: Option<(FaultKind, f64)>) -> Result<LineState, String> {
    let t = fixtures::single_link_topology(link.clone());
    let mut fs = FaultSet::default();
    if let Some((k, mag)) = fault {
        fs.set_fault(&t, k, mag).map_err(|e| e.to_string())?;
    }
    propagate(link, &grid(), &flat_launch(), &fs.active()).map_err(|e| e.to_string())
}

fn localization() -> CriterionResult {
    let link = fixtures::four_span_link();
    let d = link
        .elements
        .iter()
        .scan(0.0, |km, el| {
            if let LineElement::Span(s) = el {
                *km += s.length_km;
            }
            Some((*km, el))
        })
        .find_map(|(km, el)| matches!(el, LineElement::Edfa(a) if a.id == "EDFA#2").then_some(km))
        .ok_or("no EDFA#2")?;
    let step = FaultKind::StepLoss {
        link_id: link.id.clone(),
        distance_km: d,
    };
    let clean = line_state(&link, None)?;
    let faulty = line_state(&link, Some((step, 2.0)))?;
    let res = 0.5;

    let base = synthesize_profile(&clean, res, 0.0, 1, None).map_err(|e| e.to_string())?;
    let cur = synthesize_profile(&faulty, res, 0.0, 2, None).map_err(|e| e.to_string())?;
    let ev = localize_step_loss(&base, &cur, 1.0).map_err(|e| e.to_string())?;
    ensure!(ev.len() == 1, "noiseless: {ev:?}");
    ensure!(
        (ev[0].distance_km - d).abs() <= res && (ev[0].magnitude_db - 2.0).abs() <= 1e-6,
        "noiseless: {:?}",
        ev[0]
    );

    let mut ok = 0;
    for seed in 0..100 {
        let base = synthesize_profile(&clean, res, 0.1, 10_000 + seed, None).map_err(|e| e.to_string())?;
        let cur = synthesize_profile(&faulty, res, 0.1, 20_000 + seed, None).map_err(|e| e.to_string())?;
        let ev = localize_step_loss(&base, &cur, 1.0).map_err(|e| e.to_string())?;
        if ev.len() == 1 && (ev[0].distance_km - d).abs() <= 1.0 && (ev[0].magnitude_db - 2.0).abs() <= 0.3 {
            ok += 1;
        }
    }
    ensure!(ok >= 95, "{ok}/100 seeds localized");
    Ok(format!("step at {d} km: noiseless exact, {ok}/100 noisy seeds within 1 km / 0.3 dB"))
}

// 6 ------------------------------------------------------------------------

fn nf_flags(seed: u64, fault_db: f64) -> Result<Vec<String>, String> {
    let link = fixtures::four_span_link();
    let g = grid();
    let plan = |seed| TelemetryPlan {
        launch_dbm: flat_launch(),
        operating_points: operating_points(&link),
        noise_sigma_db: 0.1,
        seed,
    };
    let base = collect_telemetry(&link, &g, &plan(30_000 + seed), &[]).map_err(|e| e.to_string())?;
    let cal = calibrate_line(&link, &g, &base).map_err(|e| e.to_string())?;
    let mut fs = FaultSet::default();
    if fault_db > 0.0 {
        let t = fixtures::single_link_topology(link.clone());
        fs.set_fault(&t, FaultKind::NfDegradation { edfa_id: "EDFA#3".into() }, fault_db)
            .map_err(|e| e.to_string())?;
    }
    let now = collect_telemetry(&link, &g, &plan(40_000 + seed), &fs.active()).map_err(|e| e.to_string())?;
    let opts = NfFaultOptions {
        outlier_k: 3.0,
        ..NfFaultOptions::default()
    };
    Ok(detect_nf_fault(&link, Some(&cal), &g, &now, opts).map_err(|e| e.to_string())?.flagged)
}

fn nf_detection() -> CriterionResult {
    let mut hit = 0;
    let mut false_flags = 0;
    for seed in 0..100 {
        if nf_flags(seed, 8.0)? == ["EDFA#3"] {
            hit += 1;
        }
        if !nf_flags(seed, 0.0)?.is_empty() {
            false_flags += 1;
        }
    }
    ensure!(hit >= 95, "{hit}/100 seeds flagged EDFA#3");
    ensure!(false_flags == 0, "{false_flags} fault-free seeds raised flags");
    Ok(format!("{hit}/100 flagged EDFA#3, {false_flags}/100 false flags"))
}

// 7 ------------------------------------------------------------------------

fn optimization() -> CriterionResult {
    let link = fixtures::optimizer_link();
    let ilas = link.edfas().count();
    ensure!(ilas == 4, "{ilas} amplifiers");
    let g = grid();
    let plan = TelemetryPlan {
        launch_dbm: flat_launch(),
        operating_points: operating_points(&link),
        noise_sigma_db: 0.0,
        seed: 0,
    };
    let cal = calibrate_line(&link, &g, &collect_telemetry(&link, &g, &plan, &[]).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let r = optimize_gain_tilt(&link, &cal, &g, &flat_launch(), OptimizeOptions::default()).map_err(|e| e.to_string())?;
    ensure!(r.baseline_flatness_db >= 1.5, "initial spread {:.3} dB", r.baseline_flatness_db);
    ensure!(r.flatness_db <= 0.5, "final spread {:.3} dB", r.flatness_db);
    let drop = r.baseline_mean_gsnr_db - r.mean_gsnr_db;
    ensure!(drop <= 0.2, "mean GSNR drop {drop:.3} dB");
    ensure!(r.trace.windows(2).all(|w| w[1] >= w[0]), "objective not monotone: {:?}", r.trace);

    // the full pipeline through the service: calibrate, optimize, report
    let t0 = Instant::now();
    let mut ledger = Ledger::open(fixtures::demo_topology(), EngineConfig::with_seed(7), None, Clock::Logical)
        .map_err(|e| e.to_string())?;
    let lid = LinkId::from("LINK-ILA");
    ledger
        .submit(&Mutation::Calibrate { link_id: lid.clone() })
        .map_err(|e| e.to_string())?;
    let (out, _) = ledger
        .submit(&Mutation::Optimize { link_id: lid })
        .map_err(|e| e.to_string())?;
    let Outcome::Optimized(o) = out else {
        return Err(format!("unexpected outcome {out:?}"));
    };
    let report = plot_table(ledger.engine(), PlotKind::AccumulatedGsnr, "LINK-ILA").map_err(|e| e.to_string())?;
    let dt = t0.elapsed();
    ensure!(o.result.flatness_db <= 0.5, "service flatness {:.3} dB", o.result.flatness_db);
    ensure!(report.lines().count() > 1, "empty report");
    ensure!(dt < Duration::from_secs(60), "pipeline took {dt:?}");
    Ok(format!(
        "spread {:.2} -> {:.2} dB, mean drop {drop:.3} dB, {} monotone steps; pipeline {dt:.2?}",
        r.baseline_flatness_db,
        r.flatness_db,
        r.trace.len() - 1
    ))
}

// 8 ------------------------------------------------------------------------

fn golden_prober() -> SyntheticProber {
    SyntheticProber::new(10.0)
        .with("A-P1", 20.0)
        .with("P1-P2", 18.0)
        .with("P2-P5", 17.0)
        .with("B-P5", 19.0)
}

fn policy(auto_approve: bool) -> SessionPolicy {
    SessionPolicy {
        auto_approve,
        ..SessionPolicy::default()
    }
}

/// The five message phases a happy-path session goes through, in order.
fn phases_in_order(kinds: &[&str]) -> bool {
    let phase = |k: &str| match k {
        "RegisterTrx" | "AuthResult" => Some(0),
        "PathRequest" | "CatalogRequest" | "CatalogAdvert" => Some(1),
        "ProbeRequest" | "ProbeResult" => Some(2),
        "ModeProposal" => Some(3),
        "ConfigureTrx" | "ConfigureAck" | "CommitRequest" | "Decision" => Some(4),
        _ => None,
    };
    let seq: Vec<Option<u8>> = kinds.iter().map(|k| phase(k)).collect();
    seq.iter().all(Option::is_some)
        && seq.windows(2).all(|w| w[0] <= w[1])
        && (0..5).all(|p| seq.contains(&Some(p)))
}

fn protocol() -> CriterionResult {
    let (a, b) = (SiteId::from("A"), SiteId::from("B"));
    let t = fixtures::five_pop_mesh();
    let prober = golden_prober();

    let mut occ = Occupancy::new();
    let p = run_provisioning(&t, &mut occ, &a, &b, policy(true), &prober, None).map_err(|e| e.to_string())?;
    ensure!(p.state() == State::Committed, "happy path ended {:?}", p.state());
    let kinds: Vec<&str> = p.log.iter().map(|e| e.message.kind()).collect();
    ensure!(phases_in_order(&kinds), "message sequence {kinds:?}");
    let gsnr = p.carrier.e2e_gsnr_db.unwrap_or(f64::NAN);
    ensure!((gsnr - 12.337).abs() < 1e-3, "end-to-end GSNR {gsnr}");

    let mut alt = t.clone();
    alt.trxs
        .iter_mut()
        .find(|x| x.id.as_str() == "B-T1")
        .ok_or("no B-T1")?
        .catalog_id = "cat-alt".into();
    let p = run_provisioning(&alt, &mut Occupancy::new(), &a, &b, policy(true), &prober, None)
        .map_err(|e| e.to_string())?;
    ensure!(
        p.carrier.error == Some(ErrorCode::NoInteroperableMode)
            && p.user_a.error == Some(ErrorCode::NoInteroperableMode)
            && p.user_b.error == Some(ErrorCode::NoInteroperableMode),
        "disjoint catalogs: {:?}",
        p.carrier.error
    );

    let before = TrxConfig {
        trx_id: TrxId::from("A-T1"),
        enabled: true,
        mode: Some("legacy-100G".into()),
        channel: Some(7),
        launch_dbm: Some(-1.25),
    };
    let bytes = before.serialize();
    let mut occ = Occupancy::new();
    let mut p = Provisioning::new("S1", &t, &a, &b, policy(false))
        .map_err(|e| e.to_string())?
        .with_config(dcx_core::protocol::Endpoint::A, before);
    ensure!(p.run(&t, &mut occ, &prober, &mut Scheduler::Fifo) == State::PendingApproval, "not pending");
    p.decide(&t, &mut occ, Verdict::Rollback, "check", &prober)
        .map_err(|e| e.to_string())?;
    ensure!(p.user_a.config.serialize() == bytes, "rollback changed the configuration bytes");
    ensure!(occ.is_empty(), "rollback left spectrum claimed");

    let idle = TrxConfig::idle(TrxId::from("A-T1"));
    let mut committed = 0;
    for seed in 0..1000 {
        let mut occ = Occupancy::new();
        let p = run_provisioning(&t, &mut occ, &a, &b, policy(true), &prober, Some(seed)).map_err(|e| e.to_string())?;
        let users = [p.user_a.state, p.user_b.state];
        match p.state() {
            State::Committed => {
                committed += 1;
                ensure!(users == [State::Committed; 2] && occ.len() == 2, "seed {seed}: partial commit");
            }
            st => {
                ensure!(st.is_terminal(), "seed {seed}: stuck in {st:?}");
                ensure!(
                    !users.contains(&State::Committed) && occ.is_empty() && p.user_a.config == idle,
                    "seed {seed}: partial commit after {st:?}"
                );
            }
        }
    }
    Ok(format!(
        "golden path committed ({} messages), disjoint catalogs refused, rollback byte-identical, {committed}/1000 reorderings committed fully, none partially",
        kinds.len()
    ))
}

// 9 ------------------------------------------------------------------------

fn rtt_inversion() -> CriterionResult {
    const N: f64 = 1.468;
    const C_KM_PER_US: f64 = 0.299_792_458;
    let mut out = Vec::new();
    for (km, offset_us) in [(100.0, 0.0), (27.4, 0.0), (100.0, 3.5), (27.4, 12.0)] {
        let oracle_rtt = 2.0 * km * N / C_KM_PER_US + offset_us;
        let rtt = roundtrip_us(km, offset_us, N);
        ensure!(rel(rtt, oracle_rtt) <= 1e-12, "rtt({km}) = {rtt} vs {oracle_rtt}");
        let back = span_length_from_rtt(oracle_rtt, offset_us, N).map_err(|e| e.to_string())?;
        ensure!((back - km).abs() <= 0.01, "{km} km came back as {back}");
        out.push(format!("{km}->{back:.4}"));
    }
    Ok(out.join(", "))
}

// 10 -----------------------------------------------------------------------

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn determinism() -> CriterionResult {
    let mut files = 0;
    let mut names = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| !p.to_string_lossy().ends_with("topology.json"))
        .collect();
    entries.sort();
    for path in entries {
        let (s, base) = load_scenario(&path).map_err(|e| e.to_string())?;
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let sa = run_scenario(&s, &base, a.path()).map_err(|e| format!("{}: {e}", s.name))?;
        run_scenario(&s, &base, b.path()).map_err(|e| format!("{}: {e}", s.name))?;
        let mut compare = vec![PathBuf::from(EVENTS_FILE)];
        compare.extend(sa.plots.iter().map(PathBuf::from));
        for f in &compare {
            let x = std::fs::read(a.path().join(f)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.path().join(f)).map_err(|e| e.to_string())?;
            ensure!(x == y, "{}: {} differs between runs", s.name, f.display());
            files += 1;
        }
        names.push(s.name);
    }
    ensure!(names.len() >= 4, "only {} scenarios found", names.len());
    Ok(format!("{} scenarios ({}), {files} files byte-identical", names.len(), names.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> CriterionResult); 10] = [
        ("BER/SNR engine", ber_engine),
        ("GSNR concatenation", concatenation),
        ("route enumeration", route_enumeration),
        ("Q estimation budget", q_budget),
        ("fault localization", localization),
        ("NF fault detection", nf_detection),
        ("gain/tilt optimization", optimization),
        ("provisioning protocol", protocol),
        ("delay to length", rtt_inversion),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match r {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
