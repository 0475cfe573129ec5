//! Canonical trace formats, point clouds, lookup tables, configuration and
//! report files.
//!
//! Bandwidth traces are CSV with header `t_s,mbps`; each rate holds until
//! the next timestamp. Pose traces are CSV with header
//! `t_s,x,y,z,qw,qx,qy,qz` in media time.

mod config;
mod report;
mod synthetic;

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ContentBox, Pose};
use crate::qoe::PsnrTable;
use crate::voxelizer::{DensityMap, PointCloud};

pub use config::{Config, ContentSection, SessionSource, SyntheticSpec};
pub use report::{write_chunks_csv, write_comparison, write_json, write_summary_json, CHUNK_COLUMNS};
pub use synthetic::{default_content, generate_synthetic_traces, BandwidthProfile, MotionProfile, SyntheticParams};

/// Input quaternions within this distance of unit norm are renormalized.
pub const QUAT_INPUT_TOLERANCE: f64 = 1e-3;

/// Piecewise-constant bandwidth: each rate holds from its timestamp to the
/// next. The last rate holds for one more interval of the same length as
/// the one before it (forever, for a single sample).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthTrace {
    samples: Vec<(f64, f64)>,
}

impl BandwidthTrace {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("bandwidth trace is empty"));
        }
        for (i, &(t, bw)) in samples.iter().enumerate() {
            if !t.is_finite() || !(bw > 0.0 && bw.is_finite()) {
                return Err(Error::invalid(format!(
                    "bandwidth sample {i} ({t}, {bw}) is not a finite time with a positive rate"
                )));
            }
            if i > 0 && t <= samples[i - 1].0 {
                return Err(Error::invalid(format!(
                    "bandwidth sample {i} at {t} s does not follow {}",
                    samples[i - 1].0
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end(&self) -> f64 {
        match self.samples.as_slice() {
            [.., (a, _), (b, _)] => b + (b - a),
            _ => f64::INFINITY,
        }
    }

    /// Rate in effect at `t`; before the first sample the first rate.
    pub fn rate_at(&self, t: f64) -> f64 {
        let k = self.samples.partition_point(|s| s.0 <= t);
        self.samples[k.saturating_sub(1)].1
    }

    /// Time to move `bytes` starting at `start`, integrating across rate
    /// changes; `None` if the trace ends first.
    pub fn download_time(&self, start: f64, bytes: u64) -> Option<f64> {
        let mut bits = bytes as f64 * 8.0;
        if bits == 0.0 {
            return Some(0.0);
        }
        let end = self.end();
        let mut k = self.samples.partition_point(|s| s.0 <= start).saturating_sub(1);
        let mut now = start;
        loop {
            let rate = self.samples[k].1 * 1e6;
            let seg_end = self.samples.get(k + 1).map_or(end, |s| s.0);
            let span = seg_end - now;
            if bits <= rate * span {
                return Some(now + bits / rate - start);
            }
            bits -= rate * span;
            now = seg_end;
            k += 1;
            if k >= self.samples.len() {
                return None;
            }
        }
    }

    /// Mean rate over `[a, b]`, clipped to the trace.
    pub fn average(&self, a: f64, b: f64) -> f64 {
        let end = self.end().min(b);
        if !(end > a) {
            return self.rate_at(a);
        }
        let mut acc = 0.0;
        let mut k = self.samples.partition_point(|s| s.0 <= a).saturating_sub(1);
        let mut now = a;
        while now < end {
            let seg_end = self.samples.get(k + 1).map_or(end, |s| s.0).min(end);
            acc += self.samples[k].1 * (seg_end - now);
            now = seg_end;
            k += 1;
        }
        acc / (end - a)
    }

    /// Same trace with every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.samples.iter().map(|&(t, b)| (t, b * factor)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseTrace {
    poses: Vec<Pose>,
}

impl PoseTrace {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::invalid("pose trace is empty"));
        }
        if let Some(i) = (1..poses.len()).find(|&i| !(poses[i].t > poses[i - 1].t)) {
            return Err(Error::invalid(format!(
                "pose {i} at {} s does not follow {}",
                poses[i].t,
                poses[i - 1].t
            )));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn start(&self) -> f64 {
        self.poses[0].t
    }

    pub fn end(&self) -> f64 {
        self.poses[self.poses.len() - 1].t
    }

    /// Pose at `t`, interpolated between samples and held at the ends.
    pub fn pose_at(&self, t: f64) -> Pose {
        let k = self.poses.partition_point(|p| p.t <= t);
        if k == 0 {
            return Pose { t, ..self.poses[0] };
        }
        if k == self.poses.len() {
            return Pose {
                t,
                ..self.poses[k - 1]
            };
        }
        let (a, b) = (&self.poses[k - 1], &self.poses[k]);
        Pose::interpolate(a, b, (t - a.t) / (b.t - a.t))
    }
}

/// Everything one simulated session replays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTraces {
    pub bandwidth: BandwidthTrace,
    pub poses: PoseTrace,
    pub content: ContentBox,
}

impl SessionTraces {
    pub fn content_center(&self) -> Vector3<f64> {
        self.content.center()
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        msg: msg.into(),
    }
}

/// Reads a headed numeric CSV, returning each data row with its line.
fn read_numeric_csv(path: &Path, header: &[&str]) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(open(path)?);
    let found = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?;
    if found.is_empty() {
        return Err(parse_err(path, 1, "file is empty"));
    }
    if found.iter().collect::<Vec<_>>() != header {
        return Err(parse_err(
            path,
            1,
            format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let vals = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, line, format!("not a finite number: {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, vals));
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(rows)
}

pub fn parse_bandwidth_trace(path: &Path) -> Result<BandwidthTrace> {
    let rows = read_numeric_csv(path, &["t_s", "mbps"])?;
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    for (line, v) in rows {
        let (t, bw) = (v[0], v[1]);
        if let Some(&(prev, _)) = samples.last() {
            if t <= prev {
                return Err(parse_err(path, line, format!("timestamp {t} does not follow {prev}")));
            }
        }
        if !(bw > 0.0) {
            return Err(parse_err(path, line, format!("bandwidth must be positive, got {bw}")));
        }
        samples.push((t, bw));
    }
    BandwidthTrace::new(samples)
}

pub fn parse_pose_trace(path: &Path) -> Result<PoseTrace> {
    let rows = read_numeric_csv(path, &["t_s", "x", "y", "z", "qw", "qx", "qy", "qz"])?;
    let mut poses: Vec<Pose> = Vec::with_capacity(rows.len());
    for (line, v) in rows {
        let t = v[0];
        if let Some(prev) = poses.last() {
            if t <= prev.t {
                return Err(parse_err(path, line, format!("timestamp {t} does not follow {}", prev.t)));
            }
        }
        let q = Quaternion::new(v[4], v[5], v[6], v[7]);
        let norm = q.norm();
        if (norm - 1.0).abs() > QUAT_INPUT_TOLERANCE {
            return Err(parse_err(path, line, format!("quaternion norm {norm} is not within {QUAT_INPUT_TOLERANCE} of 1")));
        }
        poses.push(Pose {
            t,
            position: Vector3::new(v[1], v[2], v[3]),
            orientation: UnitQuaternion::new_normalize(q),
        });
    }
    PoseTrace::new(poses)
}

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_bandwidth_trace(path: &Path, trace: &BandwidthTrace) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "t_s,mbps").map_err(io)?;
    for (t, bw) in trace.samples() {
        writeln!(w, "{t},{bw}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_pose_trace(path: &Path, trace: &PoseTrace) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "t_s,x,y,z,qw,qx,qy,qz").map_err(io)?;
    for p in trace.poses() {
        let q = p.orientation.quaternion();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.t, p.position.x, p.position.y, p.position.z, q.w, q.i, q.j, q.k
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Whitespace-separated `x y z` per line; extra columns are ignored,
/// blank lines and `#` comments skipped.
pub fn read_xyz_cloud(path: &Path) -> Result<PointCloud> {
    let reader = BufReader::new(open(path)?);
    let mut points = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut xyz = [0.0; 3];
        let mut fields = body.split(|c: char| c.is_whitespace() || c == ',').filter(|f| !f.is_empty());
        for slot in &mut xyz {
            let f = fields
                .next()
                .ok_or_else(|| parse_err(path, i as u64 + 1, "expected three coordinates"))?;
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, i as u64 + 1, format!("not a finite number: {f:?}")))?;
        }
        points.push(Vector3::from(xyz));
    }
    if points.is_empty() {
        return Err(parse_err(path, 1, "point cloud has no points"));
    }
    Ok(PointCloud::new(points))
}

/// CSV `voxel_m,eta`; the first row is the reference voxel size.
pub fn read_density_map(path: &Path) -> Result<DensityMap> {
    let rows = read_numeric_csv(path, &["voxel_m", "eta"])?;
    let pairs: Vec<(f64, f64)> = rows.iter().map(|(_, v)| (v[0], v[1])).collect();
    DensityMap::new(pairs[0].0, pairs).map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn write_density_map(path: &Path, map: &DensityMap) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "voxel_m,eta").map_err(io)?;
    for (v, eta) in map.pairs() {
        writeln!(w, "{v},{eta}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// CSV `eta,distance_m,psnr_db` covering a full grid.
pub fn read_psnr_table(path: &Path) -> Result<PsnrTable> {
    let rows = read_numeric_csv(path, &["eta", "distance_m", "psnr_db"])?;
    let triples: Vec<(f64, f64, f64)> = rows.iter().map(|(_, v)| (v[0], v[1], v[2])).collect();
    PsnrTable::from_rows(&triples).map_err(|e| parse_err(path, 0, e.to_string()))
}
