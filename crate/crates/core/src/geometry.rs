//! Camera poses, view frustums and the spatial tile grid.
//!
//! Camera convention: in its local frame the camera looks down `-Z` with
//! `+Y` up and `+X` to the right. A pose's orientation rotates local into
//! world coordinates.

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ladder::TileGrid;

/// Accepted deviation of an input quaternion's norm from 1.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub t: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    /// Builds a pose from a raw `(w, x, y, z)` quaternion, which must
    /// already be unit length within [`QUAT_NORM_TOLERANCE`].
    pub fn new(t: f64, position: Vector3<f64>, q: Quaternion<f64>) -> Result<Self> {
        let norm = q.norm();
        if (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
            return Err(Error::invalid(format!(
                "orientation quaternion has norm {norm}, expected 1"
            )));
        }
        Ok(Self {
            t,
            position,
            orientation: UnitQuaternion::new_normalize(q),
        })
    }

    pub fn identity(t: f64, position: Vector3<f64>) -> Self {
        Self {
            t,
            position,
            orientation: UnitQuaternion::identity(),
        }
    }

    /// Camera at `position` looking at `target`.
    pub fn looking_at(t: f64, position: Vector3<f64>, target: Vector3<f64>) -> Self {
        let dir = target - position;
        let up = if dir.cross(&Vector3::y()).norm() < 1e-9 * dir.norm() {
            Vector3::z()
        } else {
            Vector3::y()
        };
        Self {
            t,
            position,
            orientation: UnitQuaternion::face_towards(&(-dir), &up),
        }
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.orientation * -Vector3::z()
    }

    pub fn up(&self) -> Vector3<f64> {
        self.orientation * Vector3::y()
    }

    pub fn right(&self) -> Vector3<f64> {
        self.orientation * Vector3::x()
    }

    /// World point expressed in the camera frame.
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse() * (p - self.position)
    }

    /// Linear position and spherical orientation interpolation; `s = 0`
    /// gives `a`, `s = 1` gives `b`.
    pub fn interpolate(a: &Pose, b: &Pose, s: f64) -> Pose {
        let orientation = a
            .orientation
            .try_slerp(&b.orientation, s, 1e-12)
            .unwrap_or(a.orientation);
        Pose {
            t: a.t + (b.t - a.t) * s,
            position: a.position.lerp(&b.position, s),
            orientation,
        }
    }
}

/// Plane `normal . p + offset = 0`; the inside is where the value is
/// nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    fn through(normal: Vector3<f64>, point: &Vector3<f64>) -> Self {
        let normal = normal.normalize();
        Self {
            offset: -normal.dot(point),
            normal,
        }
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }
}

/// Field of view and clip distances of the viewer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewConfig {
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            fov_h_deg: 110.0,
            fov_v_deg: 110.0,
            near: 0.01,
            far: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frustum {
    /// Left, right, bottom, top, near, far; normals point inward.
    pub planes: [Plane; 6],
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    pub near: f64,
    pub far: f64,
}

pub fn build_frustum(
    pose: &Pose,
    fov_h_deg: f64,
    fov_v_deg: f64,
    near: f64,
    far: f64,
) -> Result<Frustum> {
    for (name, fov) in [("horizontal", fov_h_deg), ("vertical", fov_v_deg)] {
        if !(fov > 0.0 && fov < 180.0) {
            return Err(Error::invalid(format!(
                "{name} field of view must be in (0, 180) degrees, got {fov}"
            )));
        }
    }
    if !(near > 0.0 && far > near && far.is_finite()) {
        return Err(Error::invalid(format!(
            "clip distances must satisfy 0 < near < far, got {near}, {far}"
        )));
    }
    let (sh, ch) = (fov_h_deg.to_radians() / 2.0).sin_cos();
    let (sv, cv) = (fov_v_deg.to_radians() / 2.0).sin_cos();
    let r = pose.orientation;
    let eye = pose.position;
    // Camera-frame inward normals of the side planes through the eye.
    let left = r * Vector3::new(ch, 0.0, -sh);
    let right = r * Vector3::new(-ch, 0.0, -sh);
    let bottom = r * Vector3::new(0.0, cv, -sv);
    let top = r * Vector3::new(0.0, -cv, -sv);
    let fwd = pose.forward();
    Ok(Frustum {
        planes: [
            Plane::through(left, &eye),
            Plane::through(right, &eye),
            Plane::through(bottom, &eye),
            Plane::through(top, &eye),
            Plane::through(fwd, &(eye + fwd * near)),
            Plane::through(-fwd, &(eye + fwd * far)),
        ],
        fov_h_deg,
        fov_v_deg,
        near,
        far,
    })
}

impl Frustum {
    pub fn from_view(pose: &Pose, view: &ViewConfig) -> Result<Self> {
        build_frustum(pose, view.fov_h_deg, view.fov_v_deg, view.near, view.far)
    }

    pub fn contains_point(&self, p: &Vector3<f64>) -> bool {
        self.planes.iter().all(|pl| pl.signed_distance(p) >= 0.0)
    }

    /// Plane rejection test: the box is culled only when it lies entirely
    /// outside one plane. Boxes straddling a frustum corner can pass.
    pub fn intersects_box(&self, b: &TileBox) -> bool {
        self.planes.iter().all(|pl| {
            let positive = Vector3::new(
                if pl.normal.x >= 0.0 { b.max.x } else { b.min.x },
                if pl.normal.y >= 0.0 { b.max.y } else { b.min.y },
                if pl.normal.z >= 0.0 { b.max.z } else { b.min.z },
            );
            pl.signed_distance(&positive) >= 0.0
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    pub center: Vector3<f64>,
}

impl TileBox {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self> {
        if (0..3).any(|k| !(min[k] < max[k])) {
            return Err(Error::invalid(format!(
                "box min {min:?} must be below max {max:?} on every axis"
            )));
        }
        Ok(Self {
            min,
            max,
            center: (min + max) / 2.0,
        })
    }
}

/// Axis-aligned bounding box of the volumetric content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl ContentBox {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self> {
        TileBox::new(min, max)?;
        Ok(Self { min, max })
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) / 2.0
    }

    /// The `grid` partition into equal boxes, in [`TileGrid::index`] order.
    /// Shared faces are computed from the same expression so neighbouring
    /// boxes meet exactly.
    pub fn tile_boxes(&self, grid: TileGrid) -> Vec<TileBox> {
        let edge = |k: usize, i: usize, n: usize| {
            if i == n {
                self.max[k]
            } else {
                self.min[k] + (self.max[k] - self.min[k]) * i as f64 / n as f64
            }
        };
        let mut out = Vec::with_capacity(grid.tile_count());
        for z in 0..grid.nz {
            for y in 0..grid.ny {
                for x in 0..grid.nx {
                    let min = Vector3::new(edge(0, x, grid.nx), edge(1, y, grid.ny), edge(2, z, grid.nz));
                    let max = Vector3::new(
                        edge(0, x + 1, grid.nx),
                        edge(1, y + 1, grid.ny),
                        edge(2, z + 1, grid.nz),
                    );
                    out.push(TileBox {
                        min,
                        max,
                        center: (min + max) / 2.0,
                    });
                }
            }
        }
        out
    }

    /// Tile holding `p`; the upper faces belong to the last tile. `None`
    /// for points outside the box.
    pub fn tile_of(&self, p: &Vector3<f64>, grid: TileGrid) -> Option<usize> {
        let dims = [grid.nx, grid.ny, grid.nz];
        let mut idx = [0usize; 3];
        for k in 0..3 {
            if p[k] < self.min[k] || p[k] > self.max[k] {
                return None;
            }
            let rel = (p[k] - self.min[k]) / (self.max[k] - self.min[k]);
            idx[k] = ((rel * dims[k] as f64).floor() as usize).min(dims[k] - 1);
        }
        Some(grid.index(idx[0], idx[1], idx[2]))
    }
}

/// Visibility indicator of one tile.
pub fn tile_visibility(frustum: &Frustum, b: &TileBox) -> bool {
    frustum.intersects_box(b)
}

/// Distance from the camera to the content's center.
pub fn content_distance(pose: &Pose, content_center: &Vector3<f64>) -> f64 {
    nalgebra::distance(
        &Point3::from(pose.position),
        &Point3::from(*content_center),
    )
}

/// Distance from the camera to a tile's center.
pub fn tile_distance(pose: &Pose, b: &TileBox) -> f64 {
    content_distance(pose, &b.center)
}
