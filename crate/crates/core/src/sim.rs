//! Trace-driven session loop.
//!
//! Each chunk: predict pose and bandwidth, cull and measure tiles, find the
//! boundary density, let the scheme choose levels, download against the
//! bandwidth trace, update the buffer, then score the choice against what
//! the viewer actually saw.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abr::{self, BaselineParams, ChunkDecisionInput, Scheme};
use crate::acuity::AcuityModel;
use crate::error::{Error, Result};
use crate::geometry::{self, ContentBox, Frustum, Pose, TileBox, ViewConfig};
use crate::io::SessionTraces;
use crate::ladder::{QualityLadder, TileSelection};
use crate::predictor::{self, History, PredictionMode};
use crate::qoe::{self, QoEBreakdown, QoEWeights, QualityModel};

/// Fully resolved parameters of a simulated session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub ladder: QualityLadder,
    pub acuity: AcuityModel,
    pub quality: QualityModel,
    pub weights: QoEWeights,
    pub view: ViewConfig,
    pub baselines: BaselineParams,
    /// Buffer capacity, seconds.
    pub buffer_cap: f64,
    pub prediction: PredictionMode,
    pub history_len: usize,
    pub bandwidth_window: usize,
    /// Stop after this many chunks; otherwise as many as the pose trace covers.
    pub max_chunks: Option<usize>,
}

impl SessionConfig {
    pub fn reference() -> Self {
        let ladder = QualityLadder::reference();
        Self {
            buffer_cap: 2.0 * ladder.gof_duration(),
            ladder,
            acuity: AcuityModel::reference(),
            quality: QualityModel::default(),
            weights: QoEWeights::default(),
            view: ViewConfig::default(),
            baselines: BaselineParams::default(),
            prediction: PredictionMode::History,
            history_len: predictor::DEFAULT_HISTORY,
            bandwidth_window: predictor::DEFAULT_BANDWIDTH_WINDOW,
            max_chunks: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.acuity.params.validate()?;
        Frustum::from_view(&Pose::identity(0.0, Vector3::zeros()), &self.view)?;
        if !(self.buffer_cap >= self.ladder.gof_duration()) {
            return Err(Error::invalid(format!(
                "buffer capacity {} s is shorter than one chunk",
                self.buffer_cap
            )));
        }
        if self.history_len < 2 || self.bandwidth_window == 0 {
            return Err(Error::invalid("predictor needs a history of at least 2 and a nonzero window"));
        }
        Ok(())
    }

    /// Number of chunks a session over `traces` runs.
    pub fn chunk_count(&self, traces: &SessionTraces) -> usize {
        let covered = (traces.poses.end() / self.ladder.gof_duration())
            .floor()
            .max(0.0) as usize;
        self.max_chunks.map_or(covered, |m| m.min(covered))
    }
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkReport {
    pub chunk: usize,
    pub scheme: Scheme,
    /// Wall-clock time the request was issued, seconds.
    pub request_time: f64,
    /// Chosen level per tile, `-1` where nothing was sent.
    pub levels: Vec<i32>,
    pub bytes: u64,
    pub tau: f64,
    pub buffer_before: f64,
    pub buffer_after: f64,
    /// Idle time after the download because the buffer was full.
    pub wait: f64,
    pub predicted_bw_mbps: f64,
    pub realized_bw_mbps: f64,
    pub d_t: f64,
    pub eta_star: f64,
    pub predicted_d_t: f64,
    pub predicted_eta_star: f64,
    pub pose_error_m: f64,
    pub visible_tiles: usize,
    pub predicted_visible_tiles: usize,
    /// Perceived quality the scheme expected under its own model.
    pub decision_q1: f64,
    pub qoe: QoEBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub scheme: Scheme,
    pub chunks: usize,
    pub truncated: bool,
    pub mean_q1: f64,
    pub total_q2: f64,
    pub mean_q3: f64,
    pub mean_q4: f64,
    /// Sum of per-chunk QoE.
    pub total_qoe: f64,
    pub mean_qoe: f64,
    pub total_bytes: u64,
    pub startup_delay: f64,
    pub stall_chunks: usize,
    pub mean_d_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub chunks: Vec<ChunkReport>,
    pub summary: SessionSummary,
}

/// Visibility and distances of every tile from one pose.
struct View {
    visible: Vec<bool>,
    distances: Vec<f64>,
    d_t: f64,
}

fn observe(pose: &Pose, view: &ViewConfig, boxes: &[TileBox], center: &Vector3<f64>) -> Result<View> {
    let frustum = Frustum::from_view(pose, view)?;
    Ok(View {
        visible: boxes.iter().map(|b| geometry::tile_visibility(&frustum, b)).collect(),
        distances: boxes.iter().map(|b| geometry::tile_distance(pose, b)).collect(),
        d_t: geometry::content_distance(pose, center),
    })
}

/// Boundary density at distance `d`; a viewer at the content centre sees
/// everything at full density.
fn eta_star(acuity: &AcuityModel, d: f64) -> Result<f64> {
    if d > 0.0 {
        Ok(acuity.boundary_for_distance(d)?.eta)
    } else {
        Ok(1.0)
    }
}

/// Replaces zero tile distances (viewer inside a tile centre) so the
/// distance-dependent PSNR stays finite.
fn guard_distances(distances: &mut [f64]) {
    for d in distances {
        if !(*d > 1e-6) {
            *d = 1e-6;
        }
    }
}

pub fn run_session(cfg: &SessionConfig, traces: &SessionTraces, scheme: Scheme) -> Result<SessionReport> {
    cfg.validate()?;
    let ladder = &cfg.ladder;
    let gof = ladder.gof_duration();
    let content: ContentBox = traces.content;
    let boxes = content.tile_boxes(ladder.grid());
    let center = content.center();
    let decision_model = scheme.decision_model(&cfg.quality);
    let n_chunks = cfg.chunk_count(traces);
    if n_chunks == 0 {
        return Err(Error::invalid("pose trace is shorter than one chunk"));
    }

    let pose_samples = traces.poses.poses();
    let bw_samples = traces.bandwidth.samples();
    let mut pose_hist: History<Pose> = History::new(cfg.history_len)?;
    let mut bw_hist: History<f64> = History::new(cfg.history_len.max(cfg.bandwidth_window))?;
    let (mut next_pose, mut next_bw) = (0usize, 0usize);

    let mut clock = 0.0;
    let mut buffer = 0.0;
    let mut prev_decision_q1: Option<f64> = None;
    let mut prev_q1: Option<f64> = None;
    let mut startup_delay = 0.0;
    let mut truncated = false;
    let mut reports = Vec::with_capacity(n_chunks);

    for t in 0..n_chunks {
        let target = (t as f64 + 0.5) * gof;
        let actual_pose = traces.poses.pose_at(target);
        let playhead = t as f64 * gof - buffer;

        let (pred_pose, pred_bw) = match cfg.prediction {
            PredictionMode::Oracle => (actual_pose, traces.bandwidth.average(clock, clock + gof)),
            PredictionMode::History => {
                while next_pose < pose_samples.len() && pose_samples[next_pose].t <= playhead {
                    let p = pose_samples[next_pose];
                    pose_hist.push(p.t, p)?;
                    next_pose += 1;
                }
                while next_bw < bw_samples.len() && bw_samples[next_bw].0 <= clock {
                    let (ts, b) = bw_samples[next_bw];
                    bw_hist.push(ts, b)?;
                    next_bw += 1;
                }
                let pose = match pose_hist.last() {
                    Some(&(last, _)) => predictor::predict_pose(&pose_hist, (target - last).max(0.0))?,
                    None => Pose { t: target, ..pose_samples[0] },
                };
                let bw = if bw_hist.is_empty() {
                    bw_samples[0].1
                } else {
                    predictor::predict_bandwidth(&bw_hist, cfg.bandwidth_window)?
                };
                (pose, bw)
            }
        };

        let mut predicted = observe(&pred_pose, &cfg.view, &boxes, &center)?;
        guard_distances(&mut predicted.distances);
        let pred_eta_star = eta_star(&cfg.acuity, predicted.d_t)?;
        let input = ChunkDecisionInput {
            visible: predicted.visible.clone(),
            distances: predicted.distances.clone(),
            eta_star: pred_eta_star,
            bw_mbps: pred_bw,
            buffer,
            prev_q1: prev_decision_q1,
            startup: t == 0,
            ladder,
            weights: cfg.weights,
            model: &decision_model,
        };
        let decision = abr::decide(scheme, &input, &cfg.baselines, cfg.acuity.params.d0)?;
        let decision_q1 = qoe::perceived_quality(&decision, ladder, pred_eta_star, &decision_model);

        let bytes = decision.transmitted_bytes(ladder);
        let Some(tau) = traces.bandwidth.download_time(clock, bytes) else {
            log::warn!(
                "bandwidth trace ends at {:.3} s during chunk {t}; session truncated after {t} chunks",
                traces.bandwidth.end()
            );
            truncated = true;
            break;
        };

        let mut actual = observe(&actual_pose, &cfg.view, &boxes, &center)?;
        guard_distances(&mut actual.distances);
        let actual_eta_star = eta_star(&cfg.acuity, actual.d_t)?;
        let realized = TileSelection {
            levels: decision.levels.clone(),
            visible: actual.visible.clone(),
            transmitted: decision.transmitted.clone(),
            distances: actual.distances.clone(),
        };
        let q1 = qoe::perceived_quality(&realized, ladder, actual_eta_star, &cfg.quality);
        let q4 = qoe::spatial_variation(&realized, ladder, actual_eta_star, &cfg.quality);
        let q1v = q1.unwrap_or(0.0);
        let q2 = if t == 0 {
            startup_delay = tau;
            0.0
        } else {
            qoe::rebuffer_time(tau, buffer)
        };
        let q3 = qoe::temporal_variation(q1v, prev_q1);
        let breakdown = QoEBreakdown::new(q1v, q2, q3, q4.unwrap_or(0.0), &cfg.weights);

        let buffer_before = buffer;
        let filled = (buffer - tau).max(0.0) + gof;
        let wait = (filled - cfg.buffer_cap).max(0.0);
        buffer = filled.min(cfg.buffer_cap);
        let request_time = clock;
        clock += tau + wait;
        if !(buffer >= 0.0 && buffer <= cfg.buffer_cap + 1e-12) {
            return Err(Error::Invariant(format!("buffer {buffer} outside [0, {}]", cfg.buffer_cap)));
        }

        reports.push(ChunkReport {
            chunk: t,
            scheme,
            request_time,
            levels: decision
                .levels
                .iter()
                .zip(&decision.transmitted)
                .map(|(&l, &sent)| if sent { l as i32 } else { -1 })
                .collect(),
            bytes,
            tau,
            buffer_before,
            buffer_after: buffer,
            wait,
            predicted_bw_mbps: pred_bw,
            realized_bw_mbps: if tau > 0.0 {
                bytes as f64 * 8.0 / (tau * 1e6)
            } else {
                traces.bandwidth.rate_at(request_time)
            },
            d_t: actual.d_t,
            eta_star: actual_eta_star,
            predicted_d_t: predicted.d_t,
            predicted_eta_star: pred_eta_star,
            pose_error_m: (pred_pose.position - actual_pose.position).norm(),
            visible_tiles: actual.visible.iter().filter(|&&v| v).count(),
            predicted_visible_tiles: predicted.visible.iter().filter(|&&v| v).count(),
            decision_q1: decision_q1.unwrap_or(0.0),
            qoe: breakdown,
        });
        prev_decision_q1 = Some(decision_q1.unwrap_or(0.0));
        prev_q1 = Some(q1v);
    }

    if reports.is_empty() {
        return Err(Error::invalid("bandwidth trace cannot deliver even the first chunk"));
    }
    let summary = summarize(scheme, &reports, startup_delay, truncated);
    Ok(SessionReport {
        chunks: reports,
        summary,
    })
}

fn summarize(scheme: Scheme, chunks: &[ChunkReport], startup_delay: f64, truncated: bool) -> SessionSummary {
    let n = chunks.len() as f64;
    let mean = |f: fn(&ChunkReport) -> f64| chunks.iter().map(f).sum::<f64>() / n;
    let total_qoe: f64 = chunks.iter().map(|c| c.qoe.total).sum();
    SessionSummary {
        scheme,
        chunks: chunks.len(),
        truncated,
        mean_q1: mean(|c| c.qoe.q1),
        total_q2: chunks.iter().map(|c| c.qoe.q2).sum(),
        mean_q3: mean(|c| c.qoe.q3),
        mean_q4: mean(|c| c.qoe.q4),
        total_qoe,
        mean_qoe: total_qoe / n,
        total_bytes: chunks.iter().map(|c| c.bytes).sum(),
        startup_delay,
        stall_chunks: chunks.iter().filter(|c| c.qoe.q2 > 0.0).count(),
        mean_d_t: mean(|c| c.d_t),
    }
}

/// One named session of an experiment.
#[derive(Debug, Clone)]
pub struct SessionCase {
    pub name: String,
    pub traces: SessionTraces,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub session: String,
    pub report: SessionReport,
    /// Session QoE over the best scheme's on the same session.
    pub normalized_qoe: f64,
}

/// Runs every scheme on every session. Rows come back ordered by session
/// then scheme regardless of how the work was scheduled.
pub fn run_experiment(cfg: &SessionConfig, cases: &[SessionCase], schemes: &[Scheme]) -> Result<Vec<ExperimentRow>> {
    let jobs: Vec<(usize, Scheme)> = (0..cases.len())
        .flat_map(|c| schemes.iter().map(move |&s| (c, s)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(c, s)| run_session(cfg, &cases[c].traces, s))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(reports.len());
    for (c, group) in reports.chunks(schemes.len().max(1)).enumerate() {
        let best = group
            .iter()
            .map(|r| r.summary.total_qoe)
            .fold(f64::NEG_INFINITY, f64::max);
        for r in group {
            rows.push(ExperimentRow {
                session: cases[c].name.clone(),
                normalized_qoe: if best > 0.0 { r.summary.total_qoe / best } else { f64::NAN },
                report: r.clone(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{
        generate_synthetic_traces, BandwidthProfile, BandwidthTrace, MotionProfile, PoseTrace, SyntheticParams,
    };

    fn static_traces(d: f64, bw: f64, secs: f64) -> SessionTraces {
        let content = crate::io::default_content();
        let c = content.center();
        let pos = c + Vector3::new(0.0, 0.0, d);
        let poses: Vec<Pose> = (0..=(secs * 30.0) as usize)
            .map(|k| Pose::looking_at(k as f64 / 30.0, pos, c))
            .collect();
        SessionTraces {
            bandwidth: BandwidthTrace::new(vec![(0.0, bw), (secs * 100.0, bw)]).unwrap(),
            poses: PoseTrace::new(poses).unwrap(),
            content,
        }
    }

    #[test]
    fn ample_bandwidth_static_user_is_steady() {
        let cfg = SessionConfig::reference();
        let tr = static_traces(1.0, 1e6, 4.0);
        for scheme in Scheme::ALL {
            let rep = run_session(&cfg, &tr, scheme).unwrap();
            assert_eq!(rep.summary.total_q2, 0.0, "{scheme}");
            assert_eq!(rep.chunks.len(), 12);
            for c in &rep.chunks[1..] {
                assert_eq!(c.qoe.q3, 0.0, "{scheme}");
                assert_eq!(c.levels, rep.chunks[0].levels);
                assert_eq!(c.qoe, rep.chunks[1].qoe);
            }
        }
    }

    #[test]
    fn starved_bandwidth_stalls_every_chunk() {
        let cfg = SessionConfig::reference();
        // a tenth of what the lowest level of every tile needs
        let need = cfg.ladder.tile_size(0) as f64 * 64.0 * 8.0 / cfg.ladder.gof_duration() / 1e6;
        let tr = static_traces(2.0, 0.1 * need, 4.0);
        let prop = run_session(&cfg, &tr, Scheme::Proposed).unwrap();
        let view = run_session(&cfg, &tr, Scheme::ViewportUtility).unwrap();
        for rep in [&prop, &view] {
            assert!(rep.chunks[1..].iter().all(|c| c.qoe.q2 > 0.0));
        }
        assert!(prop.summary.total_bytes <= view.summary.total_bytes);
    }

    #[test]
    fn far_viewer_saves_bytes_with_moderate_bandwidth() {
        let cfg = SessionConfig::reference();
        let tr = static_traces(2.0, 300.0, 4.0);
        let prop = run_session(&cfg, &tr, Scheme::Proposed).unwrap();
        let view = run_session(&cfg, &tr, Scheme::ViewportUtility).unwrap();
        assert!(prop.summary.mean_d_t > 1.0);
        assert!(prop.summary.total_bytes < view.summary.total_bytes);
    }

    #[test]
    fn conservation_and_buffer_bounds() {
        let cfg = SessionConfig::reference();
        for seed in 0..3 {
            let p = SyntheticParams::new(MotionProfile::Crossing, BandwidthProfile::Low, 10.0);
            let tr = generate_synthetic_traces(&p, seed).unwrap();
            for scheme in Scheme::ALL {
                let rep = run_session(&cfg, &tr, scheme).unwrap();
                let mut total = 0;
                for c in &rep.chunks {
                    let sum: u64 = c
                        .levels
                        .iter()
                        .filter(|&&l| l >= 0)
                        .map(|&l| cfg.ladder.tile_size(l as usize))
                        .sum();
                    assert_eq!(sum, c.bytes);
                    total += c.bytes;
                    assert!(c.buffer_after >= 0.0 && c.buffer_after <= cfg.buffer_cap);
                }
                assert_eq!(total, rep.summary.total_bytes);
            }
        }
    }

    #[test]
    fn trace_underrun_truncates() {
        let cfg = SessionConfig::reference();
        let mut tr = static_traces(1.0, 100.0, 4.0);
        tr.bandwidth = BandwidthTrace::new(vec![(0.0, 100.0), (1.0, 100.0)]).unwrap();
        let rep = run_session(&cfg, &tr, Scheme::DistanceTile).unwrap();
        assert!(rep.summary.truncated);
        assert!(rep.chunks.len() < 12);
    }

    proptest::proptest! {
        #[test]
        fn faster_network_never_delays_playback_of_fixed_requests(
            rates in proptest::collection::vec(20.0f64..400.0, 2..10),
            factor in 1.0f64..4.0,
        ) {
            let mut cfg = SessionConfig::reference();
            cfg.prediction = PredictionMode::Oracle;
            let mut tr = static_traces(2.0, 100.0, 3.0);
            let mut samples: Vec<(f64, f64)> = rates.iter().enumerate().map(|(k, &r)| (0.4 * k as f64, r)).collect();
            samples.push((1000.0, rates[0]));
            tr.bandwidth = BandwidthTrace::new(samples).unwrap();
            let slow = run_session(&cfg, &tr, Scheme::DistanceTile).unwrap();
            tr.bandwidth = tr.bandwidth.scaled(factor).unwrap();
            let fast = run_session(&cfg, &tr, Scheme::DistanceTile).unwrap();
            for (a, b) in slow.chunks.iter().zip(&fast.chunks) {
                proptest::prop_assert_eq!(&a.levels, &b.levels);
            }
            let late = |r: &SessionReport| r.summary.startup_delay + r.summary.total_q2;
            proptest::prop_assert!(late(&fast) <= late(&slow) + 1e-9);
        }
    }

    #[test]
    fn experiment_is_ordered_and_deterministic() {
        let cfg = SessionConfig::reference();
        let cases: Vec<SessionCase> = (0..3)
            .map(|s| SessionCase {
                name: format!("s{s}"),
                traces: generate_synthetic_traces(
                    &SyntheticParams::new(MotionProfile::FarOrbit, BandwidthProfile::Mid, 5.0),
                    s,
                )
                .unwrap(),
            })
            .collect();
        let a = run_experiment(&cfg, &cases, &Scheme::ALL).unwrap();
        let b = run_experiment(&cfg, &cases, &Scheme::ALL).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        for (k, row) in a.iter().enumerate() {
            assert_eq!(row.session, format!("s{}", k / 4));
            assert_eq!(row.report.summary.scheme, Scheme::ALL[k % 4]);
            assert!(row.normalized_qoe <= 1.0);
        }
        let single = run_experiment(&cfg, &cases[..1], &[Scheme::Proposed]).unwrap();
        assert_eq!(single.len(), 1);
    }
}
