//! Acceptance gate: one PASS/FAIL line per criterion, with the measured
//! values underneath. Exits non-zero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::{Duration, Instant};

use common::Server;
use lrtrial_core::{
    directional_lr, lr_from_p, lr_from_z, max_sample_size, min_sample_size, one_sided_p, run_batch_with_threads,
    stop_boundary, sweep_mean_n, DesignParams, OutcomeCategory, Probability, SimulationConfig, StandardizedEffect,
    Substream, TrialDesign, TrialState,
};
use lrtrial_service::{SessionStore, StoreError};
use serde_json::{json, Value};

#[derive(Default)]
struct Checks {
    lines: Vec<(bool, String)>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.lines.push((ok, what.into()));
    }

    fn within(&mut self, what: &str, value: f64, lo: f64, hi: f64) {
        let show = |x: f64| (x * 1e9).round() / 1e9;
        self.check(
            (lo..=hi).contains(&value),
            format!("{what} = {value:.6} in [{}, {}]", show(lo), show(hi)),
        );
    }

    fn runtime(&mut self, started: Instant, limit: Duration) {
        let took = started.elapsed();
        self.check(took < limit, format!("runtime {took:.2?} < {limit:?}"));
    }
}

// ---------------------------------------------------------------------------
// Independent oracle for the stopping boundary.

/// erf by the all-positive series `2/√π · e^{-x²} · Σ 2ⁿ x^{2n+1} / (2n+1)!!`.
fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term > 1e-18 * sum {
        n += 1.0;
        term *= 2.0 * x * x / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
}

fn upper_tail_oracle(z: f64) -> f64 {
    0.5 * (1.0 - erf_series(z / std::f64::consts::SQRT_2))
}

/// Smaller root of `0.25 / (p - p²) = k`, in the cancellation-free form.
fn root_oracle(k: f64) -> f64 {
    (0.5 / k) / (1.0 + (1.0 - 1.0 / k).sqrt())
}

fn z_for_upper_tail(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if upper_tail_oracle(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn threshold_correspondence(c: &mut Checks) {
    let started = Instant::now();
    let b = stop_boundary(20.0).unwrap();
    c.runtime(started, Duration::from_millis(250));
    c.within("stop z", b.z, 2.2363 - 0.001, 2.2363 + 0.001);
    c.within("stop p", b.p, 0.01266 - 0.0001, 0.01266 + 0.0001);

    let p_star = root_oracle(20.0);
    let z_star = z_for_upper_tail(p_star);
    c.check(
        (b.p - p_star).abs() <= 1e-12,
        format!(
            "p matches quadratic-root oracle {p_star:.12} (diff {:.1e})",
            (b.p - p_star).abs()
        ),
    );
    c.check(
        (b.z - z_star).abs() <= 1e-9,
        format!(
            "z matches series-CDF oracle {z_star:.10} (diff {:.1e})",
            (b.z - z_star).abs()
        ),
    );
    c.check(
        (p_star - 0.012).abs() < 0.001 && (z_star - 2.25).abs() < 0.02,
        "consistent with the reported ~0.012 and ~2.25 standard errors",
    );
    let at_upper = directional_lr(0.5 + z_star * 0.25, 0.5, 0.25).unwrap();
    let at_lower = directional_lr(0.5 - z_star * 0.25, 0.5, 0.25).unwrap();
    c.check(
        (at_upper.log_value() - 20f64.ln()).abs() <= 1e-9 && (at_lower.log_value() - 0.05f64.ln()).abs() <= 1e-9,
        format!("LR at +/- boundary = {:.6} / {:.6}", at_upper.value(), at_lower.value()),
    );
}

fn sample_size_calibration(c: &mut Checks) {
    let started = Instant::now();
    for (z, want_min, want_max) in [(2.0, 16, 64), (1.96, 16, 62)] {
        let d = DesignParams::new(0.5).z_crit(z).build().unwrap();
        let oracle_min = ((z / 0.5_f64).powi(2)).ceil() as u64;
        let oracle_max = ((2.0 * z / 0.5_f64).powi(2)).ceil() as u64;
        c.check(
            d.n_min() == want_min && d.n_max() == want_max && (oracle_min, oracle_max) == (want_min, want_max),
            format!(
                "delta 0.5, z_crit {z}: n_min {} n_max {} (expected {want_min}/{want_max})",
                d.n_min(),
                d.n_max()
            ),
        );
        c.check(
            min_sample_size(0.5, z).unwrap() == d.n_min() && max_sample_size(0.5, z).unwrap() == d.n_max(),
            "free functions agree with the design",
        );
    }
    let preset = TrialDesign::reference_preset();
    c.check(
        (preset.n_min(), preset.n_max()) == (16, 64),
        format!("reference preset bounds {}/{}", preset.n_min(), preset.n_max()),
    );
    c.runtime(started, Duration::from_millis(250));
}

fn table_reproduction(c: &mut Checks) {
    let config = SimulationConfig::reference_preset(10_000, 1);
    let started = Instant::now();
    let s = run_batch_with_threads(&config, 1).unwrap();
    c.runtime(started, Duration::from_secs(10));
    let pct = |cat| 100.0 * s.incidence(cat);
    c.within("MisleadingEarly %", pct(OutcomeCategory::MisleadingEarly), 0.05, 1.5);
    c.within("CorrectEarly %", pct(OutcomeCategory::CorrectEarly), 53.0, 65.0);
    c.within("MisleadingMaxN %", pct(OutcomeCategory::MisleadingMaxN), 3.0, 6.5);
    c.within("CorrectMaxN %", pct(OutcomeCategory::CorrectMaxN), 30.0, 42.0);
    c.within("misleading_total %", 100.0 * s.misleading_total, 3.5, 6.5);
    c.within("mean_n", s.mean_n, 36.0, 42.0);
    c.within(
        "mean folded LR MisleadingMaxN",
        s.mean_folded_lr(OutcomeCategory::MisleadingMaxN).unwrap_or(f64::NAN),
        1.3,
        2.6,
    );
    c.within(
        "mean folded LR CorrectMaxN",
        s.mean_folded_lr(OutcomeCategory::CorrectMaxN).unwrap_or(f64::NAN),
        2.0,
        4.5,
    );
}

fn sample_size_curve_shape(c: &mut Checks) {
    let design = TrialDesign::reference_preset();
    let grid = [-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0];
    let started = Instant::now();
    let pts = sweep_mean_n(&grid, &design, 10_000, 1).unwrap();
    c.runtime(started, Duration::from_secs(60));
    let (n_min, n_max) = (design.n_min() as f64, design.n_max() as f64);
    let curve: Vec<String> = pts.iter().map(|p| format!("{}:{:.2}", p.theta_t, p.mean_n)).collect();
    c.check(true, format!("mean_n by theta_T {}", curve.join(" ")));

    let peak = pts.iter().max_by(|a, b| a.mean_n.total_cmp(&b.mean_n)).unwrap();
    c.check(
        peak.theta_t == 0.5 && peak.mean_n >= 0.9 * n_max,
        format!(
            "peak at theta_T {} with mean_n {:.2} (>= {:.1})",
            peak.theta_t,
            peak.mean_n,
            0.9 * n_max
        ),
    );
    for p in pts.iter().filter(|p| p.theta_t == -1.0 || p.theta_t == 2.0) {
        c.check(
            (p.mean_n - n_min).abs() <= 0.1 * n_min,
            format!("theta_T {}: mean_n {:.2} within 10% of {n_min}", p.theta_t, p.mean_n),
        );
    }
    let mut worst = f64::NEG_INFINITY;
    for a in &pts {
        for b in &pts {
            if (a.theta_t - 0.5).abs() < (b.theta_t - 0.5).abs() {
                worst = worst.max(b.mean_n - a.mean_n);
            }
        }
    }
    c.check(
        worst <= 2.0,
        format!("non-increasing in |theta_T - 0.5| (largest rise {worst:.2} <= 2)"),
    );
}

fn property_suites(c: &mut Checks) {
    let log_lr = |p: f64| lr_from_p(Probability::new(p).unwrap()).log_value();

    let mut reflect = 0.0f64;
    let mut floor_ok = true;
    for i in 0..1000 {
        let p = (f64::from(i) + 0.5) / 1000.0;
        let a = log_lr(p);
        reflect = reflect.max((a - lr_from_p(Probability::new(p).unwrap().flipped()).log_value()).abs());
        floor_ok &= a > 0.0;
    }
    floor_ok &= log_lr(0.5) == 0.0;
    c.check(
        reflect <= 1e-12,
        format!("reflection LR(p) = LR(1-p): max log diff {reflect:.1e}"),
    );
    c.check(floor_ok, "floor: LR >= 1 everywhere, = 1 only at p = 0.5");

    let mut recip = 0.0f64;
    for i in 0..1000 {
        let d = -5.0 + 0.01 * f64::from(i);
        let up = directional_lr(0.5 + d, 0.5, 0.3).unwrap().log_value();
        let down = directional_lr(0.5 - d, 0.5, 0.3).unwrap().log_value();
        recip = recip.max((up + down).abs());
    }
    c.check(
        recip <= 1e-12,
        format!("reciprocity about delta: max |log sum| {recip:.1e}"),
    );

    let mut ident = 0.0f64;
    for d in [-1.0, 0.0, 0.5, 2.0] {
        for i in 0..=1000 {
            let z = -6.0 + 0.012 * f64::from(i);
            let a = lr_from_z(StandardizedEffect::new(z).unwrap(), d).unwrap().log_value();
            let b = lr_from_p(one_sided_p(z, d, 1.0).unwrap()).log_value();
            ident = ident.max((a - b).abs());
        }
    }
    c.check(
        ident <= 1e-12,
        format!("standardized-effect and p-value forms agree: max diff {ident:.1e}"),
    );

    const DRAWS: u64 = 100_000;
    let mut s = Substream::new(1, 0);
    let mut lrs: Vec<f64> = (0..DRAWS)
        .map(|_| {
            let p = s.uniform();
            let lr = lr_from_p(Probability::new(p).unwrap());
            if p < 0.5 {
                lr.log_value()
            } else {
                -lr.log_value()
            }
        })
        .collect();
    let tail = lrs.iter().filter(|&&l| l >= 20f64.ln()).count() as f64 / DRAWS as f64;
    lrs.sort_by(f64::total_cmp);
    let median = (0.5 * (lrs[DRAWS as usize / 2 - 1] + lrs[DRAWS as usize / 2])).exp();
    c.within("median LR under uniform p", median, 0.97, 1.03);
    c.within("P(LR >= 20) under uniform p", tail, 0.0127 - 0.003, 0.0127 + 0.003);

    let design = TrialDesign::reference_preset();
    let mut replay_ok = true;
    for r in 0..300 {
        let mut s = Substream::new(2, r);
        let theta = -1.0 + 2.0 * s.uniform();
        let xs: Vec<f64> = (0..70).map(|_| theta + s.standard_normal()).collect();
        let mut a = TrialState::new(design.clone());
        for &x in &xs {
            if a.push(x).is_err() {
                break;
            }
        }
        let used = a.n() as usize;
        let b = TrialState::replay(design.clone(), xs[..used].iter().copied()).unwrap();
        replay_ok &= a == b && a.lr().map(|l| l.log_value().to_bits()) == b.lr().map(|l| l.log_value().to_bits());
    }
    c.check(replay_ok, "engine replay is bitwise deterministic (300 sequences)");

    let mut ci_ok = true;
    for d in [0.1, 0.25, 0.5, 0.75, 1.0, 1.5] {
        for z in [1.645, 1.96, 2.0, 2.576] {
            let design = DesignParams::new(d).z_crit(z).build().unwrap();
            let width = |n: u64| 2.0 * z / (n as f64).sqrt();
            ci_ok &= width(design.n_min()) <= 2.0 * d * (1.0 + 1e-12) && width(design.n_max()) <= d * (1.0 + 1e-12);
            ci_ok &= design.n_min() == 1 || width(design.n_min() - 1) > 2.0 * d;
            ci_ok &= width(design.n_max() - 1) > d;
        }
    }
    c.check(
        ci_ok,
        "CI width <= 2 delta at n_min and <= delta at n_max, and both sizes minimal",
    );

    let config = SimulationConfig::reference_preset(5_000, 1);
    let one = run_batch_with_threads(&config, 1).unwrap();
    let same = [2, 4, 7].iter().all(|&t| {
        let many = run_batch_with_threads(&config, t).unwrap();
        many == one
            && many.mean_n.to_bits() == one.mean_n.to_bits()
            && many
                .rows
                .iter()
                .zip(&one.rows)
                .all(|(a, b)| a.mean_folded_lr.map(f64::to_bits) == b.mean_folded_lr.map(f64::to_bits))
    });
    c.check(same, "simulation summaries bitwise equal on 1, 2, 4 and 7 threads");
}

fn service_contract(c: &mut Checks) {
    // crash safety against a real server process killed with SIGKILL
    let dir = tempfile::tempdir().unwrap();
    let mut server = Server::start(dir.path());
    let mut ids = Vec::new();
    for delta in [0.3, 0.5, 0.8] {
        let (status, v) = server.json("POST", "/sessions", Some(&json!({ "delta": delta, "z_crit": 2.0 })));
        assert_eq!(status, 201);
        ids.push(v["session_id"].as_str().unwrap().to_string());
    }
    let mut stream = Substream::new(7, 0);
    let mut kills_ok = true;
    let mut kills = 0;
    for round in 0..6 {
        let mut last: Vec<Option<Value>> = vec![None; ids.len()];
        for (k, id) in ids.iter().enumerate() {
            for _ in 0..(3 + round) {
                let (_, cur) = server.json("GET", &format!("/sessions/{id}"), None);
                if cur["status"].as_str().unwrap().starts_with("Stopped") {
                    break;
                }
                let x = 0.2 + stream.standard_normal();
                let body = json!({ "value": x, "expected_version": cur["version"] });
                let (status, v) = server.json("POST", &format!("/sessions/{id}/observations"), Some(&body));
                assert_eq!(status, 200, "{v}");
                last[k] = Some(v);
            }
        }
        server.kill();
        kills += 1;
        server = Server::start(dir.path());
        for (id, before) in ids.iter().zip(&last) {
            if let Some(before) = before {
                let (_, after) = server.json("GET", &format!("/sessions/{id}"), None);
                kills_ok &= &after == before;
            }
        }
    }
    c.check(
        kills_ok,
        format!("{kills} SIGKILL/restart cycles: every session identical after reload"),
    );

    // two clients racing over HTTP
    let port = server.port;
    let id = ids[0].clone();
    let mut http_race_ok = true;
    let mut rounds = 0;
    for _ in 0..20 {
        let (_, cur) = server.json("GET", &format!("/sessions/{id}"), None);
        if cur["status"].as_str().unwrap().starts_with("Stopped") {
            let (_, v) = server.json("POST", "/sessions", Some(&json!({ "delta": 0.5 })));
            let fresh = v["session_id"].as_str().unwrap().to_string();
            http_race_ok &= race_http(port, &fresh, 0);
        } else {
            http_race_ok &= race_http(port, &id, cur["version"].as_u64().unwrap());
        }
        rounds += 1;
    }
    c.check(
        http_race_ok,
        format!("HTTP 2-writer races: one 200 and one 409 in each of {rounds} rounds"),
    );
    drop(server);

    // recomputation identity on 100 random sessions
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path()).unwrap();
    let mut s = Substream::new(11, 0);
    let mut ids = Vec::new();
    for i in 0..100 {
        let delta = 0.2 + 0.8 * s.uniform();
        let z = if i % 2 == 0 { 2.0 } else { 1.96 };
        let id = store
            .create_session(DesignParams::new(delta).z_crit(z))
            .unwrap()
            .session_id;
        let theta = -1.0 + 3.0 * s.uniform();
        let k = (s.uniform() * 100.0) as u64;
        for _ in 0..k {
            let rec = store.get_session(id).unwrap();
            if rec.state.status().is_stopped() {
                break;
            }
            store
                .post_observation(id, theta + s.standard_normal(), rec.version())
                .unwrap();
        }
        ids.push(id);
    }
    let reloaded = SessionStore::open(dir.path()).unwrap();
    let identical = ids.iter().all(|&id| {
        let rec = store.get_session(id).unwrap();
        let again = reloaded.get_session(id).unwrap();
        let (state, trajectory) = rec.recompute().unwrap();
        let replayed = TrialState::replay(rec.design.clone(), rec.observations.iter().map(|o| o.value)).unwrap();
        state == rec.state
            && trajectory == rec.trajectory
            && replayed == rec.state
            && again.state == rec.state
            && again.trajectory == rec.trajectory
    });
    c.check(
        identical,
        "100 random sessions: derived state equals a fresh replay, in memory and after reload",
    );

    // in-process 2-writer races
    let store = Arc::new(store);
    let id = store.create_session(DesignParams::new(0.5)).unwrap().session_id;
    let mut race_ok = true;
    let mut rounds = 0;
    for round in 0..100u64 {
        if store.get_session(id).unwrap().state.status().is_stopped() {
            break;
        }
        let barrier = Arc::new(Barrier::new(2));
        let results: Vec<_> = [0.4, 0.6]
            .into_iter()
            .map(|x| {
                let (store, barrier) = (Arc::clone(&store), Arc::clone(&barrier));
                thread::spawn(move || {
                    barrier.wait();
                    store.post_observation(id, x, round)
                })
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(|h| h.join().unwrap())
            .collect();
        let wins = results.iter().filter(|r| r.is_ok()).count();
        let conflicts = results
            .iter()
            .filter(|r| matches!(r, Err(StoreError::VersionConflict { .. })))
            .count();
        race_ok &= wins == 1 && conflicts == 1;
        rounds += 1;
    }
    race_ok &= store.get_session(id).unwrap().version() == rounds;
    c.check(
        race_ok,
        format!("store 2-writer races: exactly one acceptance in each of {rounds} rounds"),
    );
}

fn race_http(port: u16, id: &str, version: u64) -> bool {
    let barrier = Arc::new(Barrier::new(2));
    let codes: Vec<u16> = [0.1, 0.9]
        .into_iter()
        .map(|x| {
            let barrier = Arc::clone(&barrier);
            let id = id.to_string();
            thread::spawn(move || {
                barrier.wait();
                let body = json!({ "value": x, "expected_version": version });
                common::http(port, "POST", &format!("/sessions/{id}/observations"), Some(&body)).0
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|h| h.join().unwrap())
        .collect();
    let mut codes = codes;
    codes.sort_unstable();
    codes == [200, 409]
}

type Criterion = fn(&mut Checks);

fn main() {
    let criteria: [(&str, Criterion); 6] = [
        ("threshold correspondence", threshold_correspondence),
        ("sample-size calibration", sample_size_calibration),
        ("outcome table reproduction (10^4 trials, seed 1)", table_reproduction),
        (
            "mean sample size curve shape (10^4 reps per point)",
            sample_size_curve_shape,
        ),
        ("property suites", property_suites),
        ("service contract", service_contract),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let mut checks = Checks::default();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| run(&mut checks)));
        if let Err(e) = &outcome {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            checks.check(false, format!("panicked: {msg}"));
        }
        let ok = checks.lines.iter().all(|(ok, _)| *ok);
        failed += usize::from(!ok);
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        for (ok, what) in &checks.lines {
            println!("     {} {what}", if *ok { "ok  " } else { "FAIL" });
        }
    }
    println!("\nacceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
