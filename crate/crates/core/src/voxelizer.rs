//! Octree voxel downsampling and the measured voxel-size to density map.
//!
//! Voxels are indexed by `floor((p - origin) / v)` where the origin is the
//! cloud's bounding-box minimum. The octree's root cube is anchored at the
//! same origin, so its depth-`k` cells coincide with that grid and every
//! coarser level is the grid at twice the previous edge.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::acuity::{BoundaryPld, Clamp};
use crate::error::{Error, Result};
use crate::geometry::ContentBox;
use crate::ladder::TileGrid;

/// Deepest octree the indexer accepts (cells per axis up to 2^40).
const MAX_DEPTH: u32 = 40;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Componentwise minimum and maximum, `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }
}

#[derive(Default)]
struct Node {
    children: [Option<Box<Node>>; 8],
    sum: Vector3<f64>,
    count: usize,
}

/// Point octree whose leaves are cubes of edge `leaf_size`.
pub struct Octree {
    origin: Vector3<f64>,
    leaf_size: f64,
    depth: u32,
    root: Node,
}

impl Octree {
    pub fn build(points: &[Vector3<f64>], origin: Vector3<f64>, leaf_size: f64) -> Result<Self> {
        if !(leaf_size.is_finite() && leaf_size > 0.0) {
            return Err(Error::invalid(format!(
                "voxel size must be positive, got {leaf_size}"
            )));
        }
        let mut cells = Vec::with_capacity(points.len());
        let mut max_index = 0u64;
        for p in points {
            let rel = (p - origin) / leaf_size;
            if rel.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::invalid(format!(
                    "point {p:?} lies below the octree origin or is not finite"
                )));
            }
            let idx = rel.map(|c| c.floor());
            if idx.max() >= (1u64 << MAX_DEPTH) as f64 {
                return Err(Error::invalid(format!(
                    "voxel size {leaf_size} too small for the cloud extent"
                )));
            }
            let idx = [idx.x as u64, idx.y as u64, idx.z as u64];
            max_index = max_index.max(idx[0]).max(idx[1]).max(idx[2]);
            cells.push(idx);
        }
        let depth = 64 - max_index.leading_zeros();
        let mut root = Node::default();
        for (p, idx) in points.iter().zip(cells) {
            let mut node = &mut root;
            node.sum += p;
            node.count += 1;
            for level in (0..depth).rev() {
                let child = ((idx[0] >> level) & 1)
                    | (((idx[1] >> level) & 1) << 1)
                    | (((idx[2] >> level) & 1) << 2);
                node = node.children[child as usize].get_or_insert_with(Default::default);
                node.sum += p;
                node.count += 1;
            }
        }
        Ok(Self {
            origin,
            leaf_size,
            depth,
            root,
        })
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn leaf_size(&self) -> f64 {
        self.leaf_size
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Occupied cell counts by coarsening step: entry `s` counts cells of
    /// edge `leaf_size * 2^s`, for `s` in `0..=depth`.
    pub fn occupied_per_level(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.depth as usize + 1];
        fn walk(node: &Node, level: usize, counts: &mut [usize]) {
            counts[level] += 1;
            if level > 0 {
                for child in node.children.iter().flatten() {
                    walk(child, level - 1, counts);
                }
            }
        }
        if self.root.count > 0 {
            walk(&self.root, self.depth as usize, &mut counts);
        }
        counts
    }

    /// Centroid of every occupied leaf, in octree traversal order.
    pub fn leaf_centroids(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::new();
        fn walk(node: &Node, level: u32, out: &mut Vec<Vector3<f64>>) {
            if level == 0 {
                out.push(node.sum / node.count as f64);
                return;
            }
            for child in node.children.iter().flatten() {
                walk(child, level - 1, out);
            }
        }
        if self.root.count > 0 {
            walk(&self.root, self.depth, &mut out);
        }
        out
    }
}

fn check_cloud(cloud: &PointCloud) -> Result<(Vector3<f64>, Vector3<f64>)> {
    cloud
        .bounds()
        .ok_or_else(|| Error::invalid("point cloud is empty"))
}

/// One centroid per occupied voxel of edge `v`.
pub fn voxel_downsample(cloud: &PointCloud, v: f64) -> Result<PointCloud> {
    let (min, _) = check_cloud(cloud)?;
    let tree = Octree::build(&cloud.points, min, v)?;
    Ok(PointCloud::new(tree.leaf_centroids()))
}

/// Number of occupied voxels of edge `v`.
pub fn occupied_voxels(cloud: &PointCloud, v: f64) -> Result<usize> {
    let (min, _) = check_cloud(cloud)?;
    Ok(Octree::build(&cloud.points, min, v)?.occupied_per_level()[0])
}

/// Fraction of the `v0` voxel count that survives at voxel edge `v`.
pub fn density_for_voxel(cloud: &PointCloud, v: f64, v0: f64) -> Result<f64> {
    if !(v0.is_finite() && v0 > 0.0) {
        return Err(Error::invalid(format!("v0 must be positive, got {v0}")));
    }
    if !(v >= v0) {
        return Err(Error::invalid(format!(
            "voxel size {v} is finer than the reference {v0}"
        )));
    }
    let fine = occupied_voxels(cloud, v0)?;
    let coarse = occupied_voxels(cloud, v)?;
    Ok(coarse as f64 / fine as f64)
}

/// Tabulated voxel size to density mapping, sorted by voxel size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMap {
    v0: f64,
    pairs: Vec<(f64, f64)>,
}

impl DensityMap {
    /// Validates `(voxel_size, eta)` pairs: strictly increasing voxel sizes
    /// starting at `v0` with density 1, densities in (0, 1] and
    /// nonincreasing.
    pub fn new(v0: f64, pairs: Vec<(f64, f64)>) -> Result<Self> {
        let Some(&(first_v, first_eta)) = pairs.first() else {
            return Err(Error::invalid("density map is empty"));
        };
        if !(v0.is_finite() && v0 > 0.0) {
            return Err(Error::invalid(format!("v0 must be positive, got {v0}")));
        }
        if (first_v - v0).abs() > 1e-12 * v0 || first_eta != 1.0 {
            return Err(Error::invalid(format!(
                "density map must start at ({v0}, 1), got ({first_v}, {first_eta})"
            )));
        }
        for w in pairs.windows(2) {
            let ((va, ea), (vb, eb)) = (w[0], w[1]);
            if !(vb > va) {
                return Err(Error::invalid(format!(
                    "voxel sizes must strictly increase ({va} then {vb})"
                )));
            }
            if eb > ea {
                return Err(Error::invalid(format!(
                    "density increases from {ea} to {eb} at voxel size {vb}"
                )));
            }
        }
        if let Some(&(v, e)) = pairs.iter().find(|&&(_, e)| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::invalid(format!(
                "density {e} at voxel size {v} outside (0, 1]"
            )));
        }
        Ok(Self { v0, pairs })
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    /// Density at voxel size `v`, interpolated piecewise-linearly in
    /// log-log space and clamped to the table's ends.
    pub fn eta_at(&self, v: f64) -> BoundaryPld {
        let (v_first, _) = self.pairs[0];
        let &(v_last, e_last) = self.pairs.last().expect("nonempty");
        if v <= v_first {
            return BoundaryPld {
                eta: 1.0,
                clamped: (v < v_first).then_some(Clamp::BelowDomain),
            };
        }
        if v >= v_last {
            return BoundaryPld {
                eta: e_last,
                clamped: (v > v_last).then_some(Clamp::AboveDomain),
            };
        }
        let i = self.pairs.partition_point(|&(pv, _)| pv <= v) - 1;
        let ((va, ea), (vb, eb)) = (self.pairs[i], self.pairs[i + 1]);
        let t = (v / va).ln() / (vb / va).ln();
        BoundaryPld {
            eta: (ea.ln() + t * (eb / ea).ln()).exp().min(ea),
            clamped: None,
        }
    }

    /// Smallest voxel size whose interpolated density equals `eta`, clamped
    /// to the table's ends.
    pub fn voxel_at(&self, eta: f64) -> f64 {
        if eta >= 1.0 {
            return self.pairs[0].0;
        }
        let &(v_last, e_last) = self.pairs.last().expect("nonempty");
        if eta <= e_last {
            return v_last;
        }
        let i = self.pairs.partition_point(|&(_, pe)| pe > eta);
        // pairs[i-1].eta > eta >= pairs[i].eta
        let ((va, ea), (vb, eb)) = (self.pairs[i - 1], self.pairs[i]);
        if eb == eta {
            return vb;
        }
        let t = (eta / ea).ln() / (eb / ea).ln();
        (va.ln() + t * (vb / va).ln()).exp()
    }
}

/// Measures density at each voxel size of `voxel_grid`, which must be
/// ascending and start at `v0`.
///
/// Grid entries that are power-of-two multiples of `v0` are read off the
/// coarser levels of the `v0` octree; others get their own tree. Any
/// increase between non-nested grid sizes is flattened with a running
/// minimum so the map is monotone.
pub fn build_density_map(cloud: &PointCloud, v0: f64, voxel_grid: &[f64]) -> Result<DensityMap> {
    let (min, _) = check_cloud(cloud)?;
    let Some(&first) = voxel_grid.first() else {
        return Err(Error::invalid("voxel grid is empty"));
    };
    if (first - v0).abs() > 1e-12 * v0 {
        return Err(Error::invalid(format!(
            "voxel grid must start at v0={v0}, starts at {first}"
        )));
    }
    if voxel_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("voxel grid must be strictly ascending"));
    }
    let base = Octree::build(&cloud.points, min, v0)?;
    let levels = base.occupied_per_level();
    let fine = levels[0] as f64;
    let mut pairs = Vec::with_capacity(voxel_grid.len());
    let mut running = 1.0f64;
    for (i, &v) in voxel_grid.iter().enumerate() {
        let count = if i == 0 {
            levels[0]
        } else {
            let ratio = v / v0;
            let s = ratio.log2().round();
            if s >= 0.0 && v0 * s.exp2() == v && (s as usize) < levels.len() {
                levels[s as usize]
            } else if s >= 0.0 && v0 * s.exp2() == v {
                1
            } else {
                Octree::build(&cloud.points, min, v)?.occupied_per_level()[0]
            }
        };
        running = running.min(count as f64 / fine);
        pairs.push((if i == 0 { v0 } else { v }, running));
    }
    DensityMap::new(v0, pairs)
}

/// Per-tile density maps: points are assigned to the tiles of `content`
/// and each nonempty tile gets its own map. Tiles without points yield
/// `None`.
pub fn build_tile_density_maps(
    cloud: &PointCloud,
    content: &ContentBox,
    grid: TileGrid,
    v0: f64,
    voxel_grid: &[f64],
) -> Result<Vec<Option<DensityMap>>> {
    check_cloud(cloud)?;
    let mut buckets = vec![Vec::new(); grid.tile_count()];
    for p in &cloud.points {
        if let Some(i) = content.tile_of(p, grid) {
            buckets[i].push(*p);
        }
    }
    buckets
        .into_iter()
        .map(|pts| {
            if pts.is_empty() {
                Ok(None)
            } else {
                build_density_map(&PointCloud::new(pts), v0, voxel_grid).map(Some)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn hash_grid_count(cloud: &PointCloud, v: f64) -> usize {
        let (min, _) = cloud.bounds().unwrap();
        cloud
            .points
            .iter()
            .map(|p| {
                let r = (p - min) / v;
                (
                    r.x.floor() as i64,
                    r.y.floor() as i64,
                    r.z.floor() as i64,
                )
            })
            .collect::<HashSet<_>>()
            .len()
    }

    /// One point per `spacing` cell of an `n x n` square, kept off the cell
    /// borders so float rounding cannot move points between cells. A corner
    /// point pins the grid origin.
    fn planar(n: usize, spacing: f64) -> PointCloud {
        let mut pts = vec![Vector3::new(0.0, 0.0, 0.25)];
        for i in 0..n {
            for j in 0..n {
                let jx = ((i * 7 + j * 13) % 10) as f64 / 25.0;
                let jy = ((i * 11 + j * 3) % 10) as f64 / 25.0;
                pts.push(Vector3::new(
                    (i as f64 + 0.3 + jx) * spacing,
                    (j as f64 + 0.3 + jy) * spacing,
                    0.25,
                ));
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn one_point_per_octant() {
        let v = 0.5;
        let mut pts = Vec::new();
        for x in [0.25, 0.75] {
            for y in [0.25, 0.75] {
                for z in [0.25, 0.75] {
                    pts.push(Vector3::new(x, y, z));
                }
            }
        }
        let out = voxel_downsample(&PointCloud::new(pts), v).unwrap();
        assert_eq!(out.len(), 8);
    }

    #[test]
    fn single_voxel_collapses_to_centroid() {
        let cloud = PointCloud::new(vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.1, 0.0, 0.0),
            Vector3::new(0.0, 0.2, 0.1),
        ]);
        let out = voxel_downsample(&cloud, 1.0).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.points[0] - Vector3::new(0.1 / 3.0, 0.2 / 3.0, 0.1 / 3.0)).norm() < 1e-12);
    }

    #[test]
    fn random_unit_cube_matches_hash_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cloud = PointCloud::new(
            (0..10_000)
                .map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen()))
                .collect(),
        );
        let out = voxel_downsample(&cloud, 0.1).unwrap();
        assert_eq!(out.len(), hash_grid_count(&cloud, 0.1));
    }

    #[test]
    fn rejects_empty_cloud_and_bad_voxel() {
        assert!(voxel_downsample(&PointCloud::default(), 0.1).is_err());
        let cloud = PointCloud::new(vec![Vector3::zeros()]);
        assert!(voxel_downsample(&cloud, 0.0).is_err());
        assert!(voxel_downsample(&cloud, -1.0).is_err());
        assert!(density_for_voxel(&cloud, 0.1, 0.2).is_err());
    }

    #[test]
    fn density_identities() {
        let cloud = planar(32, 0.01);
        assert_eq!(density_for_voxel(&cloud, 0.01, 0.01).unwrap(), 1.0);
        let huge = density_for_voxel(&cloud, 10.0, 0.01).unwrap();
        assert_eq!(huge, 1.0 / 1024.0);
        let half = density_for_voxel(&cloud, 0.02, 0.01).unwrap();
        assert!((half - 0.25).abs() <= 0.025, "{half}");
    }

    #[test]
    fn single_entry_grid() {
        let map = build_density_map(&planar(8, 0.01), 0.01, &[0.01]).unwrap();
        assert_eq!(map.pairs(), &[(0.01, 1.0)]);
    }

    #[test]
    fn planar_map_follows_inverse_square() {
        let v0 = 0.01;
        let map = build_density_map(&planar(64, v0), v0, &[v0, 2.0 * v0, 4.0 * v0]).unwrap();
        for (&(_, eta), expect) in map.pairs().iter().zip([1.0, 0.25, 0.0625]) {
            assert!((eta - expect).abs() <= 0.1 * expect, "{eta} vs {expect}");
        }
    }

    #[test]
    fn volumetric_map_follows_inverse_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v0 = 0.05;
        // dense enough that nearly every v0 cell is occupied
        let cloud = PointCloud::new(
            (0..60_000)
                .map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen()))
                .collect(),
        );
        let map = build_density_map(&cloud, v0, &[v0, 2.0 * v0, 4.0 * v0]).unwrap();
        for (&(_, eta), expect) in map.pairs().iter().zip([1.0, 0.125, 0.015625]) {
            assert!((eta - expect).abs() <= 0.25 * expect, "{eta} vs {expect}");
        }
    }

    #[test]
    fn hierarchical_levels_match_fresh_builds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cloud = PointCloud::new(
            (0..5_000)
                .map(|_| Vector3::new(rng.gen(), rng.gen::<f64>() * 2.0, rng.gen()))
                .collect(),
        );
        let (min, _) = cloud.bounds().unwrap();
        let tree = Octree::build(&cloud.points, min, 0.03).unwrap();
        let levels = tree.occupied_per_level();
        for (s, &count) in levels.iter().enumerate().take(5) {
            assert_eq!(count, hash_grid_count(&cloud, 0.03 * (1u64 << s) as f64));
        }
        assert_eq!(*levels.last().unwrap(), 1);
    }

    #[test]
    fn map_interpolates_and_clamps() {
        let map = DensityMap::new(1.0, vec![(1.0, 1.0), (2.0, 0.25), (4.0, 0.0625)]).unwrap();
        // log-log straight line of slope -2 between the knots
        let mid = map.eta_at(2f64.sqrt());
        assert!((mid.eta - 0.5).abs() < 1e-12);
        assert_eq!(mid.clamped, None);
        assert_eq!(map.eta_at(8.0).clamped, Some(Clamp::AboveDomain));
        assert_eq!(map.eta_at(8.0).eta, 0.0625);
        assert_eq!(map.eta_at(0.5).eta, 1.0);
        assert!((map.voxel_at(0.5) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(map.voxel_at(0.25), 2.0);
        assert_eq!(map.voxel_at(0.01), 4.0);
    }

    #[test]
    fn map_rejects_increasing_density() {
        assert!(DensityMap::new(1.0, vec![(1.0, 1.0), (2.0, 0.5), (3.0, 0.6)]).is_err());
        assert!(DensityMap::new(1.0, vec![(1.0, 0.9)]).is_err());
        assert!(DensityMap::new(1.0, vec![(1.0, 1.0), (1.0, 0.5)]).is_err());
    }

    #[test]
    fn per_tile_maps_cover_occupied_tiles() {
        let cloud = planar(32, 0.01);
        let content = ContentBox::new(Vector3::zeros(), Vector3::new(0.32, 0.32, 0.5)).unwrap();
        let grid = TileGrid::new(2, 2, 1).unwrap();
        let maps = build_tile_density_maps(&cloud, &content, grid, 0.01, &[0.01, 0.02]).unwrap();
        assert_eq!(maps.len(), 4);
        for m in &maps {
            let m = m.as_ref().expect("every quadrant holds points");
            assert!((m.pairs()[1].1 - 0.25).abs() < 0.03);
        }
    }
}
