//! Hand-stepped reference for a crafted 10-chunk session. Everything here
//! is recomputed from first principles: tile sizes from the top bitrate,
//! tile centres from grid arithmetic, download times by walking the
//! bandwidth steps, and the QoE terms straight from their definitions.

#![allow(dead_code)]

use nalgebra::Vector3;
use volstream::abr::Scheme;
use volstream::geometry::Pose;
use volstream::io::{default_content, BandwidthTrace, PoseTrace, SessionTraces};
use volstream::predictor::PredictionMode;
use volstream::sim::SessionConfig;

pub const GOF: f64 = 1.0 / 3.0;
pub const Z: [f64; 10] = [3.0, 2.5, 2.0, 1.8, 3.5, 4.0, 2.2, 2.8, 1.6, 3.0];
pub const BW: [(f64, f64); 7] = [
    (0.0, 200.0),
    (0.5, 50.0),
    (1.2, 400.0),
    (2.0, 30.0),
    (2.6, 120.0),
    (3.0, 300.0),
    (100.0, 300.0),
];

#[derive(Debug, Clone, Copy)]
pub struct OracleChunk {
    pub bytes: u64,
    pub tau: f64,
    pub buffer_before: f64,
    pub buffer_after: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    pub total: f64,
}

/// Viewer on the content's axis at `Z[k]` metres in front, facing it.
pub fn crafted_session() -> (SessionConfig, SessionTraces) {
    let content = default_content();
    let center = content.center();
    let mut poses: Vec<Pose> = Z
        .iter()
        .enumerate()
        .map(|(k, &z)| Pose::looking_at((k as f64 + 0.5) * GOF, center + Vector3::new(0.0, 0.0, z), center))
        .collect();
    poses.push(Pose::looking_at(10.0 * GOF + 1e-9, center + Vector3::new(0.0, 0.0, Z[9]), center));
    let traces = SessionTraces {
        bandwidth: BandwidthTrace::new(BW.to_vec()).unwrap(),
        poses: PoseTrace::new(poses).unwrap(),
        content,
    };
    let mut cfg = SessionConfig::reference();
    cfg.prediction = PredictionMode::Oracle;
    (cfg, traces)
}

fn tile_bytes(eta: f64) -> u64 {
    (651e6 / 8.0 * GOF / 64.0 * eta).round() as u64
}

fn band_level(d: f64) -> usize {
    match d {
        d if d < 1.0 => 5,
        d if d < 1.5 => 4,
        d if d < 2.0 => 3,
        d if d < 3.0 => 2,
        d if d < 4.5 => 1,
        _ => 0,
    }
}

fn download(start: f64, bytes: u64) -> f64 {
    let mut bits = bytes as f64 * 8.0;
    let mut now = start;
    let mut k = BW.iter().rposition(|s| s.0 <= start).unwrap();
    loop {
        let rate = BW[k].1 * 1e6;
        let until = BW[k + 1].0;
        if bits <= rate * (until - now) {
            return now + bits / rate - start;
        }
        bits -= rate * (until - now);
        now = until;
        k += 1;
    }
}

/// Expected reports for `scheme` = distance bands under the reference
/// models (d0 = 1 m, surface density, PSNR 55 + 4 ln eta - 3 ln d).
pub fn hand_oracle() -> Vec<OracleChunk> {
    let etas = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
    let centre = |i: usize| -0.5 + 0.125 + 0.25 * i as f64;
    let (mut clock, mut buffer, mut prev) = (0.0f64, 0.0f64, None::<f64>);
    let mut out = Vec::new();
    for (k, &z) in Z.iter().enumerate() {
        let viewer = [0.0, 0.9, z];
        let eta_star = (1.0 / z).powi(2).min(1.0);
        let mut values = Vec::new();
        let mut bytes = 0;
        for tz in 0..4 {
            for ty in 0..4 {
                for tx in 0..4 {
                    let c = [centre(tx), 0.225 + 0.45 * ty as f64, centre(tz)];
                    let d = ((c[0] - viewer[0]).powi(2) + (c[1] - viewer[1]).powi(2) + (c[2] - viewer[2]).powi(2)).sqrt();
                    let eta = etas[band_level(d)];
                    bytes += tile_bytes(eta);
                    let weight = if eta >= eta_star { 1.0 } else { eta / eta_star };
                    values.push((55.0 + 4.0 * eta.min(eta_star).ln() - 3.0 * d.ln()) * weight);
                }
            }
        }
        let n = values.len() as f64;
        let q1 = values.iter().sum::<f64>() / n;
        let q4 = (values.iter().map(|v| (v - q1).powi(2)).sum::<f64>() / n).sqrt();
        let tau = download(clock, bytes);
        let q2 = if k == 0 { 0.0 } else { (tau - buffer).max(0.0) };
        let q3 = prev.map_or(0.0, |p: f64| (q1 - p).abs());
        let before = buffer;
        let filled = (buffer - tau).max(0.0) + GOF;
        let after = filled.min(2.0 * GOF);
        clock += tau + (filled - after);
        buffer = after;
        prev = Some(q1);
        out.push(OracleChunk {
            bytes,
            tau,
            buffer_before: before,
            buffer_after: after,
            q1,
            q2,
            q3,
            q4,
            total: q1 - 50.0 * q2 - q3 - q4,
        });
    }
    out
}

pub const ORACLE_SCHEME: Scheme = Scheme::DistanceTile;
