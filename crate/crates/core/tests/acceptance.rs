//! End-to-end acceptance suite. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion.

mod common;

use std::collections::HashSet;
use std::panic;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use volstream::abr::{self, ChunkDecisionInput, ExactOptions, Scheme};
use volstream::acuity::{AcuityModel, AcuityParams};
use volstream::io::{BandwidthTrace, BandwidthProfile, Config, MotionProfile, SessionTraces};
use volstream::ladder::QualityLadder;
use volstream::predictor::PredictionMode;
use volstream::qoe::QoEWeights;
use volstream::sim::{run_session, SessionCase, SessionConfig, SessionReport};
use volstream::voxelizer::{density_for_voxel, voxel_downsample, PointCloud};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn acuity_numerics() -> Outcome {
    let params = AcuityParams { d0: 1.0, theta_arcmin: 1.0, ..AcuityParams::default() };
    let model = AcuityModel::new(params, AcuityModel::reference().density).unwrap();
    let radians = (1.0f64 / 60.0).to_radians();
    let calculator = 1.0 / (2.0 * 1.0 * (radians / 2.0).tan());
    let ppi = model.ppi0();
    let mut problems = Vec::new();
    if (ppi - 3437.75).abs() > 0.01 || (ppi - calculator).abs() > 1e-9 {
        problems.push(format!("ppi0 {ppi} vs calculator {calculator}"));
    }

    let cap_distance = params.d0 * ppi / params.ppi_device;
    let rows: Vec<_> = (1..=400).map(|k| model.evaluate(0.0125 * k as f64).unwrap()).collect();
    let mut increases = 0;
    for w in rows.windows(2) {
        if w[0].distance >= params.d0 && w[1].eta_star > w[0].eta_star {
            increases += 1;
        }
    }
    let capped: Vec<f64> = rows.iter().filter(|r| r.distance <= cap_distance).map(|r| r.eta_star).collect();
    let flat = capped.windows(2).all(|w| w[0] == w[1]) && !capped.is_empty();
    if increases > 0 {
        problems.push(format!("{increases} increases beyond d0"));
    }
    if !flat {
        problems.push("eta* varies where the device cap binds".into());
    }
    check(
        problems.is_empty(),
        format!("ppi0 = {ppi:.4}, {} capped rows flat, {increases} violations {problems:?}", capped.len()),
    )
}

fn voxelizer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x70c5);
    let mut mismatches = 0;
    let mut violations = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=50_000);
        let extent = Vector3::new(rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0));
        let shift = Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let points: Vec<Vector3<f64>> = (0..n)
            .map(|_| {
                shift
                    + Vector3::new(
                        rng.gen_range(0.0..extent.x),
                        rng.gen_range(0.0..extent.y),
                        rng.gen_range(0.0..extent.z),
                    )
            })
            .collect();
        let cloud = PointCloud::new(points);
        let v0 = rng.gen_range(0.005..0.05);
        let min = cloud.bounds().unwrap().0;
        let mut last = f64::INFINITY;
        for k in 0..6 {
            let v = v0 * f64::from(1u32 << k);
            let oracle: HashSet<[i64; 3]> = cloud
                .points
                .iter()
                .map(|p| {
                    let r = (p - min) / v;
                    [r.x.floor() as i64, r.y.floor() as i64, r.z.floor() as i64]
                })
                .collect();
            if voxel_downsample(&cloud, v).unwrap().len() != oracle.len() {
                mismatches += 1;
            }
            let eta = density_for_voxel(&cloud, v, v0).unwrap();
            if eta > last {
                violations += 1;
            }
            last = eta;
        }
    }
    check(
        mismatches == 0 && violations == 0,
        format!("600 grids, {mismatches} count mismatches, {violations} density increases"),
    )
}

struct Instance {
    visible: Vec<bool>,
    distances: Vec<f64>,
    eta_star: f64,
    bw_mbps: f64,
    buffer: f64,
    prev_q1: Option<f64>,
}

fn instances(ladder: &QualityLadder, model: &AcuityModel) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xab12);
    let n = ladder.tile_count();
    (0..200)
        .map(|_| {
            let k = rng.gen_range(1..=8);
            let mut visible = vec![false; n];
            while visible.iter().filter(|&&v| v).count() < k {
                visible[rng.gen_range(0..n)] = true;
            }
            let d_t: f64 = rng.gen_range(0.5..3.5);
            let distances = (0..n).map(|_| d_t * rng.gen_range(0.8..1.2)).collect();
            Instance {
                visible,
                distances,
                eta_star: model.boundary_for_distance(d_t).unwrap().eta,
                bw_mbps: rng.gen_range(5.0..200.0),
                buffer: rng.gen_range(0.0..0.67),
                prev_q1: if rng.gen_bool(0.5) { Some(rng.gen_range(35.0..55.0)) } else { None },
            }
        })
        .collect()
}

fn solver_scores() -> Vec<(f64, f64, f64)> {
    let cfg = SessionConfig::reference();
    instances(&cfg.ladder, &cfg.acuity)
        .into_iter()
        .map(|inst| {
            let input = ChunkDecisionInput {
                visible: inst.visible,
                distances: inst.distances,
                eta_star: inst.eta_star,
                bw_mbps: inst.bw_mbps,
                buffer: inst.buffer,
                prev_q1: inst.prev_q1,
                startup: false,
                ladder: &cfg.ladder,
                weights: QoEWeights::default(),
                model: &cfg.quality,
            };
            let score = |sel| input.score(&sel).unwrap().qoe.total;
            let pruned = score(abr::select_exact(&input, ExactOptions::default()).unwrap());
            let full = score(abr::select_exact(&input, ExactOptions { prune: false, ..ExactOptions::default() }).unwrap());
            let greedy = score(abr::select_greedy(&input).unwrap());
            (pruned, full, greedy)
        })
        .collect()
}

fn pruning_lossless(scores: &[(f64, f64, f64)]) -> Outcome {
    let differ = scores.iter().filter(|s| s.0 != s.1).count();
    check(differ == 0, format!("{} instances, {differ} differ", scores.len()))
}

fn greedy_gap(scores: &[(f64, f64, f64)]) -> Outcome {
    let mut gaps: Vec<f64> = scores.iter().map(|&(_, exact, greedy)| (exact - greedy) / exact.abs()).collect();
    gaps.sort_by(f64::total_cmp);
    let worst = *gaps.last().unwrap();
    let median = gaps[gaps.len() / 2];
    let below = gaps.iter().filter(|&&g| g > 0.05).count();
    check(
        below == 0 && median <= 0.01,
        format!("worst gap {:.4}%, median gap {:.4}%, {below} below 95%", worst * 100.0, median * 100.0),
    )
}

fn qoe_fidelity() -> Outcome {
    let (cfg, traces) = common::crafted_session();
    let report = run_session(&cfg, &traces, common::ORACLE_SCHEME).unwrap();
    let oracle = common::hand_oracle();
    let mut worst = 0.0f64;
    for (c, o) in report.chunks.iter().zip(&oracle) {
        for (a, b) in [
            (c.qoe.q1, o.q1),
            (c.qoe.q2, o.q2),
            (c.qoe.q3, o.q3),
            (c.qoe.q4, o.q4),
            (c.qoe.total, o.total),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    check(
        report.chunks.len() == oracle.len() && worst <= 1e-6,
        format!("{} chunks, max deviation {worst:.3e}", report.chunks.len()),
    )
}

fn suite(motion: MotionProfile, users: usize) -> (Config, Vec<SessionCase>) {
    let mut config = Config::default();
    config.experiment.users = users;
    config.experiment.motions = vec![motion];
    config.experiment.bandwidth = BandwidthProfile::ALL.to_vec();
    let cases = config.sessions(Path::new("."), Some(1)).unwrap();
    (config, cases)
}

fn totals(cfg: &SessionConfig, cases: &[SessionCase], scheme: Scheme) -> Vec<f64> {
    cases.iter().map(|c| run_session(cfg, &c.traces, scheme).unwrap().summary.total_qoe).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn directional() -> Outcome {
    let (config, far) = suite(MotionProfile::FarOrbit, 20);
    let cfg = config.resolve(Path::new(".")).unwrap();
    let proposed = totals(&cfg, &far, Scheme::Proposed);
    let mut ok = true;
    let mut detail = Vec::new();
    for scheme in [Scheme::RateUtility, Scheme::ViewportUtility, Scheme::DistanceTile] {
        let other = totals(&cfg, &far, scheme);
        let wins = proposed.iter().zip(&other).filter(|(p, o)| p > o).count();
        let ties = proposed.iter().zip(&other).filter(|(p, o)| p == o).count();
        let share = wins as f64 / far.len() as f64;
        let gain = mean(&proposed) - mean(&other);
        ok &= share >= 0.8 && gain > 0.0;
        detail.push(format!("vs {}: wins {:.0}% ({ties} ties), mean {gain:+.1}", scheme.name(), share * 100.0));
    }
    let (config, close) = suite(MotionProfile::CloseIn, 20);
    let cfg = config.resolve(Path::new(".")).unwrap();
    let p = mean(&totals(&cfg, &close, Scheme::Proposed));
    let d = mean(&totals(&cfg, &close, Scheme::DistanceTile));
    ok &= p >= d - 0.05 * d.abs();
    detail.push(format!("close-in proposed {p:.1} vs distance_tile {d:.1}"));
    check(ok, format!("{} far sessions; {}", far.len(), detail.join("; ")))
}

fn bandwidth_savings() -> Outcome {
    let (config, far) = suite(MotionProfile::FarOrbit, 20);
    let mut cfg = config.resolve(Path::new(".")).unwrap();
    cfg.prediction = PredictionMode::Oracle;
    let mut fewer = 0;
    let mut q1_mismatch = 0;
    let mut saved = 0.0;
    for case in &far {
        let end = case.traces.poses.end() + 10.0;
        let traces = SessionTraces {
            bandwidth: BandwidthTrace::new(vec![(0.0, 10_000.0), (end, 10_000.0)]).unwrap(),
            ..case.traces.clone()
        };
        let p = run_session(&cfg, &traces, Scheme::Proposed).unwrap();
        let v = run_session(&cfg, &traces, Scheme::ViewportUtility).unwrap();
        if p.summary.total_bytes < v.summary.total_bytes {
            fewer += 1;
        }
        saved += 1.0 - p.summary.total_bytes as f64 / v.summary.total_bytes as f64;
        q1_mismatch += p.chunks.iter().zip(&v.chunks).filter(|(a, b)| a.qoe.q1 != b.qoe.q1).count();
    }
    check(
        fewer == far.len() && q1_mismatch == 0,
        format!(
            "{fewer}/{} sessions with fewer bytes (mean saving {:.1}%), {q1_mismatch} chunks with unequal Q1",
            far.len(),
            100.0 * saved / far.len() as f64
        ),
    )
}

fn invariant_violations(cfg: &SessionConfig, traces: &SessionTraces, report: &SessionReport) -> usize {
    let mut bad = 0;
    let mut bytes = 0u64;
    for c in &report.chunks {
        let in_range = |b: f64| (0.0..=cfg.buffer_cap + 1e-12).contains(&b);
        if !in_range(c.buffer_before) || !in_range(c.buffer_after) {
            bad += 1;
        }
        let sent: u64 = c.levels.iter().filter(|&&l| l >= 0).map(|&l| cfg.ladder.tile_size(l as usize)).sum();
        if sent != c.bytes {
            bad += 1;
        }
        match traces.bandwidth.download_time(c.request_time, c.bytes) {
            Some(t) if (t - c.tau).abs() <= 1e-9 * t.max(1.0) => {}
            _ => bad += 1,
        }
        bytes += c.bytes;
    }
    if bytes != report.summary.total_bytes {
        bad += 1;
    }
    bad
}

fn simulator_invariants() -> Outcome {
    let config = Config::default();
    let cfg = config.resolve(Path::new(".")).unwrap();
    let cases = config.sessions(Path::new("."), None).unwrap();
    let mut invariant = 0;
    let mut nondeterministic = 0;
    let mut rebuffer = [0usize; 4];
    let mut runs = 0;
    for case in &cases {
        let doubled = SessionTraces {
            bandwidth: case.traces.bandwidth.scaled(2.0).unwrap(),
            ..case.traces.clone()
        };
        for (k, scheme) in Scheme::ALL.into_iter().enumerate() {
            let a = run_session(&cfg, &case.traces, scheme).unwrap();
            let b = run_session(&cfg, &case.traces, scheme).unwrap();
            let fast = run_session(&cfg, &doubled, scheme).unwrap();
            invariant += invariant_violations(&cfg, &case.traces, &a);
            invariant += invariant_violations(&cfg, &doubled, &fast);
            let json = |r: &SessionReport| serde_json::to_string(&r.chunks).unwrap() + &serde_json::to_string(&r.summary).unwrap();
            if json(&a) != json(&b) {
                nondeterministic += 1;
            }
            if fast.summary.total_q2 > a.summary.total_q2 {
                rebuffer[k] += 1;
            }
            runs += 1;
        }
    }
    let more: Vec<String> = Scheme::ALL.iter().zip(rebuffer).map(|(s, n)| format!("{} {n}", s.name())).collect();
    check(
        invariant + nondeterministic + rebuffer.iter().sum::<usize>() == 0,
        format!(
            "{runs} runs, {invariant} buffer/byte violations, {nondeterministic} nondeterministic, more rebuffering at 2x: {}",
            more.join(", ")
        ),
    )
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = panic::catch_unwind(panic::AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (verdict, detail, pass) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{name}: {verdict} ({secs:.1} s) {detail}");
    pass
}

fn main() -> ExitCode {
    let mut pass = true;
    pass &= run("criterion 1 acuity numerics", acuity_numerics);
    pass &= run("criterion 2 voxelizer oracle", voxelizer_oracle);
    let scores = solver_scores();
    pass &= run("criterion 3 pruning losslessness", || pruning_lossless(&scores));
    pass &= run("criterion 4 greedy optimality gap", || greedy_gap(&scores));
    pass &= run("criterion 5 QoE fidelity", qoe_fidelity);
    pass &= run("criterion 6 far-viewer QoE gain", directional);
    pass &= run("criterion 7 bandwidth savings", bandwidth_savings);
    pass &= run("criterion 8 simulator invariants", simulator_invariants);
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
