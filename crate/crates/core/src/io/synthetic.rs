//! Seeded synthetic sessions: a viewer orbiting the content while facing
//! it, and a bounded random-walk bandwidth trace.

use std::f64::consts::TAU;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BandwidthTrace, PoseTrace, SessionTraces};
use crate::error::{Error, Result};
use crate::geometry::{ContentBox, Pose};
use crate::ladder::DEFAULT_BITRATES_MBPS;

pub const POSE_RATE_HZ: f64 = 30.0;
pub const BANDWIDTH_INTERVAL_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionProfile {
    /// Viewing distance within `[1.35, 3] d0`.
    FarOrbit,
    /// Viewing distance within `[0.6, 0.95] d0`.
    CloseIn,
    /// Viewing distance sweeping `0.6 d0` to `2.5 d0` and back.
    Crossing,
}

impl MotionProfile {
    pub const ALL: [MotionProfile; 3] = [
        MotionProfile::FarOrbit,
        MotionProfile::CloseIn,
        MotionProfile::Crossing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MotionProfile::FarOrbit => "far-orbit",
            MotionProfile::CloseIn => "close-in",
            MotionProfile::Crossing => "crossing",
        }
    }

    /// Distance band the orbit radius stays within, in units of `d0`.
    pub fn radius_range(self) -> (f64, f64) {
        match self {
            MotionProfile::FarOrbit => (1.35, 3.0),
            MotionProfile::CloseIn => (0.6, 0.95),
            MotionProfile::Crossing => (0.6, 2.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthProfile {
    Low,
    Mid,
    High,
}

impl BandwidthProfile {
    pub const ALL: [BandwidthProfile; 3] = [
        BandwidthProfile::Low,
        BandwidthProfile::Mid,
        BandwidthProfile::High,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BandwidthProfile::Low => "low",
            BandwidthProfile::Mid => "mid",
            BandwidthProfile::High => "high",
        }
    }

    /// Rate range in Mbps, as fractions of the top ladder bitrate.
    pub fn range_mbps(self) -> (f64, f64) {
        let top = DEFAULT_BITRATES_MBPS[DEFAULT_BITRATES_MBPS.len() - 1];
        let (lo, hi) = match self {
            BandwidthProfile::Low => (0.1, 0.3),
            BandwidthProfile::Mid => (0.3, 0.6),
            BandwidthProfile::High => (0.6, 1.0),
        };
        (lo * top, hi * top)
    }
}

impl std::str::FromStr for MotionProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MotionProfile::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown motion profile {s:?}")))
    }
}

impl std::str::FromStr for BandwidthProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BandwidthProfile::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown bandwidth profile {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub motion: MotionProfile,
    pub bandwidth: BandwidthProfile,
    /// Media duration covered by the pose trace, seconds.
    pub duration: f64,
    pub d0: f64,
    pub content: ContentBox,
}

impl SyntheticParams {
    pub fn new(motion: MotionProfile, bandwidth: BandwidthProfile, duration: f64) -> Self {
        Self {
            motion,
            bandwidth,
            duration,
            d0: 1.0,
            content: default_content(),
        }
    }
}

/// A 1 m x 1.8 m x 1 m standing figure on the floor at the origin.
pub fn default_content() -> ContentBox {
    ContentBox {
        min: Vector3::new(-0.5, 0.0, -0.5),
        max: Vector3::new(0.5, 1.8, 0.5),
    }
}

pub fn generate_synthetic_traces(params: &SyntheticParams, seed: u64) -> Result<SessionTraces> {
    if !(params.duration > 0.0 && params.duration.is_finite()) {
        return Err(Error::invalid(format!(
            "synthetic duration must be positive, got {}",
            params.duration
        )));
    }
    if !(params.d0 > 0.0) {
        return Err(Error::invalid("synthetic d0 must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses = orbit(params, &mut rng)?;
    let bw_len = (30.0 * params.duration).max(600.0);
    let bandwidth = random_walk(params.bandwidth, bw_len, &mut rng)?;
    Ok(SessionTraces {
        bandwidth,
        poses,
        content: params.content,
    })
}

fn orbit(params: &SyntheticParams, rng: &mut ChaCha8Rng) -> Result<PoseTrace> {
    let center = params.content.center();
    let (lo, hi) = params.motion.radius_range();
    let (lo, hi) = (lo * params.d0, hi * params.d0);
    let mid = 0.5 * (lo + hi);
    let amp = 0.5 * (hi - lo) * rng.gen_range(0.6..0.95);
    let (period, phase) = match params.motion {
        MotionProfile::Crossing => (rng.gen_range(16.0..24.0), 0.0),
        _ => (rng.gen_range(8.0..16.0), rng.gen_range(0.0..TAU)),
    };
    // Tangential speed kept well under the cap so radial motion fits too.
    let tangential = rng.gen_range(0.2..0.7) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let bob = rng.gen_range(0.0..0.25);
    let bob_period = rng.gen_range(5.0..9.0);
    let jitter = rng.gen_range(0.0..3.0f64).to_radians();
    let jitter_period = rng.gen_range(2.0..4.0);
    let mut azimuth = rng.gen_range(0.0..TAU);

    let dt = 1.0 / POSE_RATE_HZ;
    let n = (params.duration * POSE_RATE_HZ).ceil() as usize + 1;
    let mut poses = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let radius = match params.motion {
            MotionProfile::Crossing => mid + amp * (TAU * t / period).cos(),
            _ => mid + amp * (TAU * t / period + phase).sin(),
        };
        if k > 0 {
            azimuth += tangential / radius * dt;
        }
        let height = center.y + bob * (TAU * t / bob_period).sin();
        // horizontal offset chosen so the distance to the centre is `radius`
        let flat = (radius * radius - (height - center.y).powi(2)).max(0.0).sqrt();
        let position = Vector3::new(
            center.x + flat * azimuth.cos(),
            height,
            center.z + flat * azimuth.sin(),
        );
        let mut pose = Pose::looking_at(t, position, center);
        let yaw = jitter * (TAU * t / jitter_period).sin();
        pose.orientation = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw) * pose.orientation;
        poses.push(pose);
    }
    PoseTrace::new(poses)
}

fn random_walk(profile: BandwidthProfile, length: f64, rng: &mut ChaCha8Rng) -> Result<BandwidthTrace> {
    let (lo, hi) = profile.range_mbps();
    let step = 0.15 * (hi - lo);
    let mut bw = rng.gen_range(lo..hi);
    let n = (length / BANDWIDTH_INTERVAL_S).ceil() as usize;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        samples.push((k as f64 * BANDWIDTH_INTERVAL_S, bw));
        bw = (bw + rng.gen_range(-step..step)).clamp(lo, hi);
    }
    BandwidthTrace::new(samples)
}
