//! Quality ladder, tile grid and per-chunk tile selections.
//!
//! Tile sizes follow the linear point-count model: a tile at a level with
//! point density `eta` costs `eta` times the size of the same tile at full
//! density. Full density size is the top level's bitrate spread evenly over
//! the tiles of one GoF.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bitrates of the reference ladder, in Mbps.
pub const DEFAULT_BITRATES_MBPS: [f64; 6] = [87.5, 161.6, 296.4, 420.7, 565.2, 651.0];
/// Point densities of the reference ladder.
pub const DEFAULT_ETAS: [f64; 6] = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
/// Reference GoF duration: 10 frames at 30 fps.
pub const DEFAULT_GOF_DURATION: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityLevel {
    pub index: usize,
    /// Sampling factor.
    pub m: f64,
    /// Point density retained at this level.
    pub eta: f64,
    /// Full-content data rate at this level.
    pub bitrate_mbps: f64,
}

/// Number of tiles along each axis of the content bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl TileGrid {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid(format!(
                "tile grid {nx}x{ny}x{nz} has an empty axis"
            )));
        }
        Ok(Self { nx, ny, nz })
    }

    pub fn tile_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Linear tile index, x fastest.
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }
}

impl Default for TileGrid {
    fn default() -> Self {
        Self {
            nx: 4,
            ny: 4,
            nz: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityLadder {
    levels: Vec<QualityLevel>,
    gof_duration: f64,
    grid: TileGrid,
}

impl QualityLadder {
    /// Builds a ladder from `(m, eta, bitrate_mbps)` triples ordered from
    /// lowest to highest quality.
    pub fn new(levels: &[(f64, f64, f64)], gof_duration: f64, grid: TileGrid) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("quality ladder has no levels"));
        }
        if !(gof_duration.is_finite() && gof_duration > 0.0) {
            return Err(Error::invalid(format!(
                "GoF duration must be positive, got {gof_duration}"
            )));
        }
        if grid.nx == 0 || grid.ny == 0 || grid.nz == 0 {
            return Err(Error::invalid("tile grid has an empty axis"));
        }
        for (i, &(m, eta, rate)) in levels.iter().enumerate() {
            if !(m > 0.0 && m <= 1.0) {
                return Err(Error::invalid(format!("level {i}: m={m} outside (0, 1]")));
            }
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::invalid(format!("level {i}: eta={eta} outside (0, 1]")));
            }
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::invalid(format!("level {i}: bitrate {rate} not positive")));
            }
            if i > 0 {
                let (pm, pe, pr) = levels[i - 1];
                if eta <= pe || rate <= pr {
                    return Err(Error::invalid(format!(
                        "level {i}: eta and bitrate must strictly increase"
                    )));
                }
                if m < pm {
                    return Err(Error::invalid(format!(
                        "level {i}: sampling factor decreases while eta increases"
                    )));
                }
            }
        }
        let top_eta = levels[levels.len() - 1].1;
        if top_eta != 1.0 {
            return Err(Error::invalid(format!(
                "top level must carry full density, got eta={top_eta}"
            )));
        }
        let levels = levels
            .iter()
            .enumerate()
            .map(|(index, &(m, eta, bitrate_mbps))| QualityLevel {
                index,
                m,
                eta,
                bitrate_mbps,
            })
            .collect();
        Ok(Self {
            levels,
            gof_duration,
            grid,
        })
    }

    /// Six-level reference ladder (sampling factor equal to density) on a
    /// 4x4x4 grid with 1/3 s GoFs.
    pub fn reference() -> Self {
        let triples: Vec<_> = DEFAULT_ETAS
            .iter()
            .zip(DEFAULT_BITRATES_MBPS)
            .map(|(&eta, rate)| (eta, eta, rate))
            .collect();
        Self::new(&triples, DEFAULT_GOF_DURATION, TileGrid::default())
            .expect("reference ladder is valid")
    }

    pub fn levels(&self) -> &[QualityLevel] {
        &self.levels
    }

    pub fn level(&self, index: usize) -> &QualityLevel {
        &self.levels[index]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn gof_duration(&self) -> f64 {
        self.gof_duration
    }

    pub fn grid(&self) -> TileGrid {
        self.grid
    }

    pub fn tile_count(&self) -> usize {
        self.grid.tile_count()
    }

    pub fn with_gof_duration(mut self, gof_duration: f64) -> Result<Self> {
        if !(gof_duration.is_finite() && gof_duration > 0.0) {
            return Err(Error::invalid("GoF duration must be positive"));
        }
        self.gof_duration = gof_duration;
        Ok(self)
    }

    /// Unrounded bytes of one tile of one GoF holding density `eta`.
    pub fn tile_bytes_for_eta(&self, eta: f64) -> f64 {
        let top = &self.levels[self.top()];
        top.bitrate_mbps * 1e6 / 8.0 * self.gof_duration / self.tile_count() as f64 * eta
    }

    /// Bytes of one tile of one GoF at `level`, rounded once to whole bytes.
    pub fn tile_size(&self, level: usize) -> u64 {
        self.tile_bytes_for_eta(self.levels[level].eta).round() as u64
    }

    /// Size of a whole chunk with every tile at full density; the hard cap
    /// on transmitted bytes per chunk.
    pub fn full_chunk_size(&self) -> u64 {
        self.tile_count() as u64 * self.tile_size(self.top())
    }

    /// Lowest level whose density reaches `eta_star`, or the top level if
    /// none does.
    pub fn cap_level(&self, eta_star: f64) -> usize {
        self.levels
            .iter()
            .position(|l| l.eta >= eta_star)
            .unwrap_or(self.top())
    }
}

impl Default for QualityLadder {
    fn default() -> Self {
        Self::reference()
    }
}

/// Per-tile decision for one chunk.
///
/// `visible` is the frustum indicator used for QoE accounting and
/// `transmitted` marks tiles actually sent. A scheme's own output has both
/// equal; the simulator re-evaluates a decision against the realised pose,
/// where they can differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSelection {
    pub levels: Vec<usize>,
    pub visible: Vec<bool>,
    pub transmitted: Vec<bool>,
    pub distances: Vec<f64>,
}

impl TileSelection {
    /// All tiles at level 0, visible tiles marked for transmission.
    pub fn skeleton(visible: Vec<bool>, distances: Vec<f64>) -> Result<Self> {
        if visible.len() != distances.len() {
            return Err(Error::invalid(format!(
                "visibility ({}) and distance ({}) lengths differ",
                visible.len(),
                distances.len()
            )));
        }
        for (i, (&v, &d)) in visible.iter().zip(&distances).enumerate() {
            if v && !(d.is_finite() && d > 0.0) {
                return Err(Error::invalid(format!(
                    "visible tile {i} has non-positive distance {d}"
                )));
            }
        }
        Ok(Self {
            levels: vec![0; visible.len()],
            transmitted: visible.clone(),
            visible,
            distances,
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    pub fn visible_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.visible
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
    }

    pub fn transmitted_bytes(&self, ladder: &QualityLadder) -> u64 {
        self.levels
            .iter()
            .zip(&self.transmitted)
            .filter(|(_, &t)| t)
            .map(|(&l, _)| ladder.tile_size(l))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_tile_size_matches_hand_arithmetic() {
        let ladder = QualityLadder::reference();
        // 651e6 / 8 / 3 / 64 = 423828.125
        let exact = 651e6 / 8.0 * (1.0 / 3.0) / 64.0;
        assert!((ladder.tile_bytes_for_eta(1.0) - exact).abs() < 1e-6);
        assert_eq!(ladder.tile_size(5), 423_828);
    }

    #[test]
    fn zero_density_costs_nothing() {
        assert_eq!(QualityLadder::reference().tile_bytes_for_eta(0.0), 0.0);
    }

    #[test]
    fn tenth_density_is_tenth_of_top() {
        let ladder = QualityLadder::reference();
        let top = ladder.tile_bytes_for_eta(1.0);
        assert!((ladder.tile_bytes_for_eta(0.1) - 0.1 * top).abs() < 1e-9);
        assert!((ladder.tile_size(0) as f64 - 0.1 * top).abs() <= 0.5);
    }

    #[test]
    fn full_chunk_size_reference() {
        let ladder = QualityLadder::reference();
        assert_eq!(ladder.full_chunk_size(), 64 * 423_828);
        assert_eq!(ladder.full_chunk_size(), 27_124_992);
    }

    #[test]
    fn single_tile_single_level_chunk() {
        let ladder =
            QualityLadder::new(&[(1.0, 1.0, 24.0)], 1.0, TileGrid::new(1, 1, 1).unwrap()).unwrap();
        assert_eq!(ladder.full_chunk_size(), ladder.tile_size(0));
        assert_eq!(ladder.tile_size(0), 3_000_000);
    }

    #[test]
    fn doubling_gof_duration_doubles_chunk() {
        let ladder = QualityLadder::reference();
        let doubled = ladder.clone().with_gof_duration(2.0 / 3.0).unwrap();
        assert_eq!(doubled.full_chunk_size(), 2 * ladder.full_chunk_size());
    }

    #[test]
    fn tile_size_strictly_increasing() {
        let ladder = QualityLadder::reference();
        for w in (0..ladder.len()).collect::<Vec<_>>().windows(2) {
            assert!(ladder.tile_size(w[0]) < ladder.tile_size(w[1]));
        }
    }

    #[test]
    fn cap_level_picks_lowest_sufficient_density() {
        let ladder = QualityLadder::reference();
        assert_eq!(ladder.cap_level(0.05), 0);
        assert_eq!(ladder.cap_level(0.4), 2);
        assert_eq!(ladder.cap_level(0.41), 3);
        assert_eq!(ladder.cap_level(1.0), 5);
    }

    #[test]
    fn rejects_malformed_ladders() {
        let g = TileGrid::default();
        assert!(QualityLadder::new(&[], 1.0, g).is_err());
        assert!(QualityLadder::new(&[(0.5, 0.5, 10.0)], 1.0, g).is_err());
        assert!(QualityLadder::new(&[(0.5, 0.5, 10.0), (1.0, 1.0, 5.0)], 1.0, g).is_err());
        assert!(QualityLadder::new(&[(0.5, 0.5, 10.0), (1.0, 1.0, 20.0)], 0.0, g).is_err());
        assert!(TileGrid::new(4, 0, 4).is_err());
    }

    #[test]
    fn skeleton_rejects_bad_distance() {
        assert!(TileSelection::skeleton(vec![true], vec![0.0]).is_err());
        assert!(TileSelection::skeleton(vec![false], vec![0.0]).is_ok());
        assert!(TileSelection::skeleton(vec![true, false], vec![1.0]).is_err());
    }
}
