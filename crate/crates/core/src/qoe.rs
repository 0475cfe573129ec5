//! Per-chunk QoE: perceived quality, rebuffering, temporal and spatial
//! quality variation, and their weighted total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ladder::{QualityLadder, TileSelection};

/// Rendered quality of a tile as a function of point density and viewing
/// distance, in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PsnrSurface {
    /// `c0 + c1 ln(eta) - c2 ln(d / d0)`.
    Parametric { c0: f64, c1: f64, c2: f64, d0: f64 },
    Table(PsnrTable),
}

impl PsnrSurface {
    pub fn value(&self, eta: f64, d: f64) -> f64 {
        match self {
            PsnrSurface::Parametric { c0, c1, c2, d0 } => c0 + c1 * eta.ln() - c2 * (d / d0).ln(),
            PsnrSurface::Table(t) => t.value(eta, d),
        }
    }
}

/// PSNR sampled on an `(eta, distance)` grid, bilinear in
/// `(ln eta, ln d)` and clamped at the grid edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsnrTable {
    etas: Vec<f64>,
    distances: Vec<f64>,
    /// Row-major, one row per eta.
    values: Vec<f64>,
}

impl PsnrTable {
    /// Builds a table from scattered `(eta, d, psnr_db)` rows that must
    /// cover a full rectangular grid exactly once.
    pub fn from_rows(rows: &[(f64, f64, f64)]) -> Result<Self> {
        let mut etas: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut distances: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for v in [&mut etas, &mut distances] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        if etas.is_empty() {
            return Err(Error::invalid("PSNR table is empty"));
        }
        if etas.iter().chain(&distances).any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::invalid("PSNR table densities and distances must be positive"));
        }
        if rows.len() != etas.len() * distances.len() {
            return Err(Error::invalid(format!(
                "PSNR table has {} rows, a full {}x{} grid needs {}",
                rows.len(),
                etas.len(),
                distances.len(),
                etas.len() * distances.len()
            )));
        }
        let mut values = vec![f64::NAN; rows.len()];
        for &(e, d, v) in rows {
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite PSNR at ({e}, {d})")));
            }
            let i = etas.partition_point(|&x| x < e);
            let j = distances.partition_point(|&x| x < d);
            let slot = &mut values[i * distances.len() + j];
            if !slot.is_nan() {
                return Err(Error::invalid(format!("duplicate PSNR entry at ({e}, {d})")));
            }
            *slot = v;
        }
        let table = Self {
            etas,
            distances,
            values,
        };
        table.check_monotone()?;
        Ok(table)
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.distances.len() + j]
    }

    fn check_monotone(&self) -> Result<()> {
        for i in 0..self.etas.len() {
            for j in 0..self.distances.len() {
                if i > 0 && self.at(i, j) < self.at(i - 1, j) {
                    return Err(Error::invalid(format!(
                        "PSNR decreases with density at eta={} d={}",
                        self.etas[i], self.distances[j]
                    )));
                }
                if j > 0 && self.at(i, j) > self.at(i, j - 1) {
                    return Err(Error::invalid(format!(
                        "PSNR increases with distance at eta={} d={}",
                        self.etas[i], self.distances[j]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.values.len());
        for (i, &e) in self.etas.iter().enumerate() {
            for (j, &d) in self.distances.iter().enumerate() {
                out.push((e, d, self.at(i, j)));
            }
        }
        out
    }

    fn bracket(axis: &[f64], x: f64) -> (usize, usize, f64) {
        if axis.len() == 1 || x <= axis[0] {
            return (0, 0, 0.0);
        }
        let last = axis.len() - 1;
        if x >= axis[last] {
            return (last, last, 0.0);
        }
        let hi = axis.partition_point(|&a| a <= x);
        let lo = hi - 1;
        let t = (x / axis[lo]).ln() / (axis[hi] / axis[lo]).ln();
        (lo, hi, t)
    }

    pub fn value(&self, eta: f64, d: f64) -> f64 {
        let (i0, i1, s) = Self::bracket(&self.etas, eta);
        let (j0, j1, t) = Self::bracket(&self.distances, d);
        let lo = self.at(i0, j0) * (1.0 - t) + self.at(i0, j1) * t;
        let hi = self.at(i1, j0) * (1.0 - t) + self.at(i1, j1) * t;
        lo * (1.0 - s) + hi * s
    }
}

/// PSNR surface plus the saturation switch.
///
/// With saturation on, densities above the viewer's boundary density render
/// exactly like the boundary density itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsnrModel {
    pub surface: PsnrSurface,
    pub saturate: bool,
}

impl PsnrModel {
    pub fn parametric(c0: f64, c1: f64, c2: f64, d0: f64) -> Result<Self> {
        if !(c0.is_finite() && c1 >= 0.0 && c2 >= 0.0 && d0 > 0.0) {
            return Err(Error::invalid(format!(
                "PSNR coefficients must satisfy c1, c2 >= 0 and d0 > 0, got {c0}, {c1}, {c2}, {d0}"
            )));
        }
        Ok(Self {
            surface: PsnrSurface::Parametric { c0, c1, c2, d0 },
            saturate: true,
        })
    }

    pub fn reference() -> Self {
        Self::parametric(55.0, 4.0, 3.0, 1.0).expect("valid")
    }

    pub fn table(table: PsnrTable) -> Self {
        Self {
            surface: PsnrSurface::Table(table),
            saturate: true,
        }
    }

    pub fn without_saturation(&self) -> Self {
        Self {
            saturate: false,
            ..self.clone()
        }
    }

    pub fn psnr(&self, eta: f64, d: f64, eta_star: f64) -> f64 {
        let eta = if self.saturate { eta.min(eta_star) } else { eta };
        self.surface.value(eta, d)
    }
}

impl Default for PsnrModel {
    fn default() -> Self {
        Self::reference()
    }
}

/// How a tile's contribution to perceived quality is valued: the PSNR
/// model, and whether the acuity indicator scales down tiles below the
/// boundary density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityModel {
    pub psnr: PsnrModel,
    pub use_indicator: bool,
}

impl QualityModel {
    pub fn new(psnr: PsnrModel) -> Self {
        Self {
            psnr,
            use_indicator: true,
        }
    }

    /// The same surface with neither saturation nor the acuity indicator.
    pub fn acuity_blind(&self) -> Self {
        Self {
            psnr: self.psnr.without_saturation(),
            use_indicator: false,
        }
    }

    pub fn tile_value(&self, eta: f64, d: f64, eta_star: f64) -> f64 {
        let weight = if self.use_indicator {
            indicator(eta, eta_star)
        } else {
            1.0
        };
        self.psnr.psnr(eta, d, eta_star) * weight
    }
}

impl Default for QualityModel {
    fn default() -> Self {
        Self::new(PsnrModel::reference())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QoEWeights {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl QoEWeights {
    pub fn new(p: f64, q: f64, r: f64) -> Result<Self> {
        if [p, q, r].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!(
                "QoE weights must be nonnegative, got ({p}, {q}, {r})"
            )));
        }
        Ok(Self { p, q, r })
    }
}

impl Default for QoEWeights {
    fn default() -> Self {
        Self {
            p: 50.0,
            q: 1.0,
            r: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QoEBreakdown {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    pub total: f64,
}

impl QoEBreakdown {
    pub fn new(q1: f64, q2: f64, q3: f64, q4: f64, weights: &QoEWeights) -> Self {
        Self {
            q1,
            q2,
            q3,
            q4,
            total: qoe_total(q1, q2, q3, q4, weights),
        }
    }
}

/// Weight of a tile at density `eta` given the boundary `eta_star`: full
/// credit at or above the boundary, proportional below it.
pub fn indicator(eta: f64, eta_star: f64) -> f64 {
    if eta >= eta_star {
        1.0
    } else {
        eta / eta_star
    }
}

/// Values of the visible tiles in index order; visible tiles that were not
/// transmitted are worth 0.
pub fn visible_tile_values<'a>(
    sel: &'a TileSelection,
    ladder: &'a QualityLadder,
    eta_star: f64,
    model: &'a QualityModel,
) -> impl Iterator<Item = f64> + 'a {
    sel.visible_indices().map(move |i| {
        if sel.transmitted[i] {
            model.tile_value(ladder.level(sel.levels[i]).eta, sel.distances[i], eta_star)
        } else {
            0.0
        }
    })
}

/// Mean value over visible tiles; `None` when nothing is visible.
pub fn perceived_quality(
    sel: &TileSelection,
    ladder: &QualityLadder,
    eta_star: f64,
    model: &QualityModel,
) -> Option<f64> {
    let (sum, n) = visible_tile_values(sel, ladder, eta_star, model)
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Download time of the transmitted tiles at `bw_mbps`.
pub fn transmission_time(sel: &TileSelection, ladder: &QualityLadder, bw_mbps: f64) -> Result<f64> {
    if !(bw_mbps > 0.0) {
        return Err(Error::invalid(format!(
            "bandwidth must be positive, got {bw_mbps}"
        )));
    }
    Ok(sel.transmitted_bytes(ladder) as f64 * 8.0 / (bw_mbps * 1e6))
}

pub fn rebuffer_time(tau: f64, buffer: f64) -> f64 {
    (tau - buffer).max(0.0)
}

/// Change of perceived quality since the previous chunk; zero for the
/// first chunk.
pub fn temporal_variation(q1_now: f64, q1_prev: Option<f64>) -> f64 {
    q1_prev.map_or(0.0, |prev| (q1_now - prev).abs())
}

/// Population standard deviation of visible tile values; `None` when
/// nothing is visible.
pub fn spatial_variation(
    sel: &TileSelection,
    ladder: &QualityLadder,
    eta_star: f64,
    model: &QualityModel,
) -> Option<f64> {
    let values: Vec<f64> = visible_tile_values(sel, ladder, eta_star, model).collect();
    population_std(&values)
}

pub(crate) fn population_std(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(var.sqrt())
}

pub fn qoe_total(q1: f64, q2: f64, q3: f64, q4: f64, weights: &QoEWeights) -> f64 {
    q1 - weights.p * q2 - weights.q * q3 - weights.r * q4
}

/// Everything outside the selection needed to score one chunk.
#[derive(Debug, Clone, Copy)]
pub struct ChunkContext<'a> {
    pub ladder: &'a QualityLadder,
    pub model: &'a QualityModel,
    pub weights: &'a QoEWeights,
    pub eta_star: f64,
    /// Average bandwidth over the chunk's download, Mbps.
    pub bw_mbps: f64,
    /// Buffer occupancy when the download starts, seconds.
    pub buffer: f64,
    pub prev_q1: Option<f64>,
    /// Startup chunks download before playback starts and never stall.
    pub startup: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkScore {
    pub qoe: QoEBreakdown,
    pub tau: f64,
    pub bytes: u64,
    pub all_invisible: bool,
}

pub fn evaluate_chunk(sel: &TileSelection, ctx: &ChunkContext<'_>) -> Result<ChunkScore> {
    let q1 = perceived_quality(sel, ctx.ladder, ctx.eta_star, ctx.model);
    let q4 = spatial_variation(sel, ctx.ladder, ctx.eta_star, ctx.model);
    let tau = transmission_time(sel, ctx.ladder, ctx.bw_mbps)?;
    let q2 = if ctx.startup {
        0.0
    } else {
        rebuffer_time(tau, ctx.buffer)
    };
    let q1v = q1.unwrap_or(0.0);
    let q3 = temporal_variation(q1v, ctx.prev_q1);
    Ok(ChunkScore {
        qoe: QoEBreakdown::new(q1v, q2, q3, q4.unwrap_or(0.0), ctx.weights),
        tau,
        bytes: sel.transmitted_bytes(ctx.ladder),
        all_invisible: q1.is_none(),
    })
}
