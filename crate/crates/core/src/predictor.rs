//! Short-horizon pose and bandwidth prediction.

use std::collections::VecDeque;

use nalgebra::UnitQuaternion;

use crate::error::{Error, Result};
use crate::geometry::Pose;

pub const DEFAULT_HISTORY: usize = 10;
pub const DEFAULT_BANDWIDTH_WINDOW: usize = 5;

/// Fixed-capacity window of timestamped samples, oldest first.
#[derive(Debug, Clone)]
pub struct History<T> {
    capacity: usize,
    samples: VecDeque<(f64, T)>,
}

impl<T> History<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("history capacity must be at least 1"));
        }
        Ok(Self {
            capacity,
            samples: VecDeque::with_capacity(capacity),
        })
    }

    /// Appends a sample, evicting the oldest when full. Timestamps must
    /// strictly increase.
    pub fn push(&mut self, t: f64, value: T) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::invalid(format!("non-finite timestamp {t}")));
        }
        if let Some(&(last, _)) = self.samples.back() {
            if t <= last {
                return Err(Error::invalid(format!(
                    "timestamp {t} does not follow {last}"
                )));
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((t, value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&(f64, T)> {
        self.samples.back()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &(f64, T)> + ExactSizeIterator {
        self.samples.iter()
    }
}

/// Harmonic mean of the most recent `window` throughput samples (Mbps).
pub fn predict_bandwidth(history: &History<f64>, window: usize) -> Result<f64> {
    if window == 0 {
        return Err(Error::invalid("bandwidth window must be at least 1"));
    }
    if history.is_empty() {
        return Err(Error::invalid("no bandwidth samples to predict from"));
    }
    let mut inv = 0.0;
    let mut n = 0usize;
    for &(_, bw) in history.iter().rev().take(window) {
        if !(bw > 0.0) {
            return Err(Error::invalid(format!(
                "bandwidth samples must be positive, got {bw}"
            )));
        }
        inv += 1.0 / bw;
        n += 1;
    }
    Ok(n as f64 / inv)
}

/// Extrapolates the pose `horizon` seconds past the newest sample at
/// constant linear and angular velocity, estimated from the two newest
/// samples. A single sample is held still.
pub fn predict_pose(history: &History<Pose>, horizon: f64) -> Result<Pose> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be nonnegative, got {horizon}")));
    }
    let mut newest = history.iter().rev();
    let Some((t1, p1)) = newest.next() else {
        return Err(Error::invalid("no pose samples to predict from"));
    };
    let Some((t0, p0)) = newest.next() else {
        return Ok(Pose {
            t: t1 + horizon,
            ..*p1
        });
    };
    let dt = t1 - t0;
    let k = horizon / dt;
    let position = p1.position + (p1.position - p0.position) * k;
    let step: UnitQuaternion<f64> = p1.orientation * p0.orientation.inverse();
    let orientation = match scale_rotation(step, k) {
        Some(turn) => turn * p1.orientation,
        None => p1.orientation,
    };
    Ok(Pose {
        t: t1 + horizon,
        position,
        orientation,
    })
}

/// `step^k` the short way round; `None` for a degenerate step.
fn scale_rotation(step: UnitQuaternion<f64>, k: f64) -> Option<UnitQuaternion<f64>> {
    let step = if step.w < 0.0 {
        UnitQuaternion::new_unchecked(-step.into_inner())
    } else {
        step
    };
    let out = step.powf(k);
    out.coords.iter().all(|c| c.is_finite()).then_some(out)
}

/// Where predictions come from during a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Extrapolate from past samples only.
    #[default]
    History,
    /// Use the true future pose and average bandwidth.
    Oracle,
}
