//! Visual acuity model: from viewing distance to the smallest point density
//! the viewer can tell apart from the full-density content.
//!
//! Resolutions are pixels per meter throughout. Only ratios of resolutions
//! and voxel sizes enter the boundary density, so the length unit is
//! observable only in reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxelizer::DensityMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcuityParams {
    /// Default viewing distance, meters.
    pub d0: f64,
    /// Finest voxel size of the source at `d0`, meters.
    pub v0: f64,
    /// Device resolution cap, pixels per meter.
    pub ppi_device: f64,
    /// Minimum resolvable visual angle, arcminutes.
    pub theta_arcmin: f64,
}

impl Default for AcuityParams {
    fn default() -> Self {
        Self {
            d0: 1.0,
            v0: 0.002,
            ppi_device: 4000.0,
            theta_arcmin: 1.0,
        }
    }
}

impl AcuityParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {x}")))
            }
        };
        positive("d0", self.d0)?;
        positive("v0", self.v0)?;
        positive("ppi_device", self.ppi_device)?;
        positive("theta_arcmin", self.theta_arcmin)?;
        if self.theta_arcmin > 60.0 {
            return Err(Error::invalid(format!(
                "theta_arcmin must be at most 60, got {}",
                self.theta_arcmin
            )));
        }
        Ok(())
    }
}

/// Resolution the eye needs at the default distance:
/// `1 / (2 d0 tan(theta / 2))`.
pub fn ppi_initial(params: &AcuityParams) -> Result<f64> {
    params.validate()?;
    let theta = params.theta_arcmin / 60.0 * std::f64::consts::PI / 180.0;
    Ok(1.0 / (2.0 * params.d0 * (0.5 * theta).tan()))
}

/// Resolution the eye needs at distance `d_t`, scaled from `ppi0`.
pub fn ppi_at(d_t: f64, params: &AcuityParams, ppi0: f64) -> Result<f64> {
    if !(d_t.is_finite() && d_t > 0.0) {
        return Err(Error::invalid(format!(
            "viewing distance must be positive, got {d_t}"
        )));
    }
    Ok(params.d0 / d_t * ppi0)
}

/// Caps the required resolution at what the device can show.
pub fn effective_ppi(ppi_t: f64, params: &AcuityParams) -> f64 {
    ppi_t.min(params.ppi_device)
}

/// Voxel size that is just distinguishable at effective resolution `p_t`.
pub fn distinguishable_voxel(p_t: f64, params: &AcuityParams, ppi0: f64) -> Result<f64> {
    if !(p_t.is_finite() && p_t > 0.0) {
        return Err(Error::invalid(format!(
            "effective resolution must be positive, got {p_t}"
        )));
    }
    Ok(ppi0 * params.v0 / p_t)
}

/// Which side of the density map's measured domain a lookup fell off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clamp {
    BelowDomain,
    AboveDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPld {
    pub eta: f64,
    pub clamped: Option<Clamp>,
}

/// Mapping between voxel size and retained point density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DensityModel {
    /// `min(1, (v0 / v)^alpha)`.
    Parametric { v0: f64, alpha: f64 },
    /// Measured on a reference cloud.
    Table(DensityMap),
}

impl DensityModel {
    pub fn parametric(v0: f64, alpha: f64) -> Result<Self> {
        if !(v0.is_finite() && v0 > 0.0 && alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid(format!(
                "parametric density needs positive v0 and alpha, got {v0}, {alpha}"
            )));
        }
        Ok(DensityModel::Parametric { v0, alpha })
    }

    /// Density retained when voxelizing at edge `v`.
    pub fn eta_for_voxel(&self, v: f64) -> BoundaryPld {
        match self {
            DensityModel::Parametric { v0, alpha } => {
                if v <= *v0 {
                    BoundaryPld {
                        eta: 1.0,
                        clamped: (v < *v0).then_some(Clamp::BelowDomain),
                    }
                } else {
                    BoundaryPld {
                        eta: (v0 / v).powf(*alpha).min(1.0),
                        clamped: None,
                    }
                }
            }
            DensityModel::Table(map) => map.eta_at(v),
        }
    }

    /// Voxel edge at which the density drops to `eta`.
    pub fn voxel_for_eta(&self, eta: f64) -> f64 {
        match self {
            DensityModel::Parametric { v0, alpha } => {
                let eta = eta.clamp(f64::MIN_POSITIVE, 1.0);
                v0 * eta.powf(-1.0 / alpha)
            }
            DensityModel::Table(map) => map.voxel_at(eta),
        }
    }
}

/// Boundary density for a distinguishable voxel size `v_t`.
///
/// Lookups outside the density map's domain are clamped to its nearest
/// endpoint and flagged rather than extrapolated.
pub fn boundary_pld(v_t: f64, h: &DensityModel) -> BoundaryPld {
    h.eta_for_voxel(v_t)
}

/// Acuity parameters bundled with a density model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcuityModel {
    pub params: AcuityParams,
    pub density: DensityModel,
    ppi0: f64,
}

/// One row of a distance sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcuityRow {
    pub distance: f64,
    pub ppi_t: f64,
    pub p_t: f64,
    pub voxel: f64,
    pub eta_star: f64,
    pub clamped: Option<Clamp>,
}

impl AcuityModel {
    pub fn new(params: AcuityParams, density: DensityModel) -> Result<Self> {
        let ppi0 = ppi_initial(&params)?;
        Ok(Self {
            params,
            density,
            ppi0,
        })
    }

    /// Reference model: default parameters with the surface-like `alpha = 2`
    /// parametric density.
    pub fn reference() -> Self {
        let params = AcuityParams::default();
        let density = DensityModel::parametric(params.v0, 2.0).expect("valid");
        Self::new(params, density).expect("valid")
    }

    pub fn ppi0(&self) -> f64 {
        self.ppi0
    }

    pub fn evaluate(&self, d_t: f64) -> Result<AcuityRow> {
        let ppi_t = ppi_at(d_t, &self.params, self.ppi0)?;
        let p_t = effective_ppi(ppi_t, &self.params);
        let voxel = distinguishable_voxel(p_t, &self.params, self.ppi0)?;
        let b = boundary_pld(voxel, &self.density);
        Ok(AcuityRow {
            distance: d_t,
            ppi_t,
            p_t,
            voxel,
            eta_star: b.eta,
            clamped: b.clamped,
        })
    }

    /// Boundary density at viewing distance `d_t`.
    pub fn boundary_for_distance(&self, d_t: f64) -> Result<BoundaryPld> {
        let row = self.evaluate(d_t)?;
        Ok(BoundaryPld {
            eta: row.eta_star,
            clamped: row.clamped,
        })
    }
}
