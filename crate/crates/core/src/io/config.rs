//! TOML experiment configuration. Every key is optional; omitted keys take
//! the reference values. Relative paths resolve against the config file's
//! directory.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::synthetic::{BandwidthProfile, MotionProfile, SyntheticParams};
use super::{parse_bandwidth_trace, parse_pose_trace, read_density_map, read_psnr_table, SessionTraces};
use crate::abr::{BaselineParams, Scheme};
use crate::acuity::{AcuityModel, AcuityParams, DensityModel};
use crate::error::{Error, Result};
use crate::geometry::{ContentBox, ViewConfig};
use crate::ladder::{QualityLadder, TileGrid, DEFAULT_BITRATES_MBPS, DEFAULT_ETAS, DEFAULT_GOF_DURATION};
use crate::predictor::{PredictionMode, DEFAULT_BANDWIDTH_WINDOW, DEFAULT_HISTORY};
use crate::qoe::{PsnrModel, QoEWeights, QualityModel};
use crate::sim::{SessionCase, SessionConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Scheme for `run`; `compare` runs all of them.
    pub scheme: Option<Scheme>,
    pub chunks: Option<usize>,
    pub ladder: LadderSection,
    pub acuity: AcuitySection,
    pub psnr: PsnrSection,
    pub qoe: QoEWeights,
    pub view: ViewConfig,
    pub content: ContentSection,
    pub buffer: BufferSection,
    pub predictor: PredictorSection,
    pub baselines: BaselineParams,
    pub experiment: ExperimentSection,
    pub sessions: Vec<SessionSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSection {
    pub m: f64,
    pub eta: f64,
    pub bitrate_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderSection {
    pub gof_duration_s: f64,
    pub grid: [usize; 3],
    pub levels: Vec<LevelSection>,
}

impl Default for LadderSection {
    fn default() -> Self {
        Self {
            gof_duration_s: DEFAULT_GOF_DURATION,
            grid: [4, 4, 4],
            levels: DEFAULT_ETAS
                .iter()
                .zip(DEFAULT_BITRATES_MBPS)
                .map(|(&eta, bitrate_mbps)| LevelSection {
                    m: eta,
                    eta,
                    bitrate_mbps,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcuitySection {
    pub d0: f64,
    pub v0: f64,
    pub ppi_device: f64,
    pub theta_arcmin: f64,
    /// Exponent of the parametric density model.
    pub density_alpha: f64,
    /// Measured density map (`voxel_m,eta` CSV); overrides the exponent.
    pub density_table: Option<PathBuf>,
}

impl Default for AcuitySection {
    fn default() -> Self {
        let p = AcuityParams::default();
        Self {
            d0: p.d0,
            v0: p.v0,
            ppi_device: p.ppi_device,
            theta_arcmin: p.theta_arcmin,
            density_alpha: 2.0,
            density_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsnrSection {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub saturate: bool,
    /// Measured PSNR grid (`eta,distance_m,psnr_db` CSV); overrides the
    /// coefficients.
    pub table: Option<PathBuf>,
}

impl Default for PsnrSection {
    fn default() -> Self {
        Self {
            c0: 55.0,
            c1: 4.0,
            c2: 3.0,
            saturate: true,
            table: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContentSection {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for ContentSection {
    fn default() -> Self {
        let c = super::synthetic::default_content();
        Self {
            min: c.min.into(),
            max: c.max.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferSection {
    /// Defaults to two chunks.
    pub capacity_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSection {
    pub mode: PredictionMode,
    pub history: usize,
    pub bandwidth_window: usize,
}

impl Default for PredictorSection {
    fn default() -> Self {
        Self {
            mode: PredictionMode::History,
            history: DEFAULT_HISTORY,
            bandwidth_window: DEFAULT_BANDWIDTH_WINDOW,
        }
    }
}

/// Synthetic suite `compare` runs when no sessions are listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub users: usize,
    pub duration_s: f64,
    pub motions: Vec<MotionProfile>,
    pub bandwidth: Vec<BandwidthProfile>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            users: 5,
            duration_s: 20.0,
            motions: MotionProfile::ALL.to_vec(),
            bandwidth: BandwidthProfile::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub motion: MotionProfile,
    pub bandwidth: BandwidthProfile,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Defaults to the top-level seed.
    pub seed: Option<u64>,
}

fn default_duration() -> f64 {
    20.0
}

/// One session: either a pair of trace files or a synthetic profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSource {
    pub name: Option<String>,
    pub bandwidth: Option<PathBuf>,
    pub pose: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Parse {
                path: PathBuf::from("<config>"),
                line,
                msg: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn content_box(&self) -> Result<ContentBox> {
        ContentBox::new(Vector3::from(self.content.min), Vector3::from(self.content.max))
    }

    pub fn ladder(&self) -> Result<QualityLadder> {
        let [nx, ny, nz] = self.ladder.grid;
        let levels: Vec<(f64, f64, f64)> = self
            .ladder
            .levels
            .iter()
            .map(|l| (l.m, l.eta, l.bitrate_mbps))
            .collect();
        QualityLadder::new(&levels, self.ladder.gof_duration_s, TileGrid::new(nx, ny, nz)?)
    }

    /// Builds the runtime session configuration, loading any referenced
    /// tables relative to `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<SessionConfig> {
        let ladder = self.ladder()?;
        let a = &self.acuity;
        let params = AcuityParams {
            d0: a.d0,
            v0: a.v0,
            ppi_device: a.ppi_device,
            theta_arcmin: a.theta_arcmin,
        };
        params.validate()?;
        let density = match &a.density_table {
            Some(p) => DensityModel::Table(read_density_map(&resolve_path(base_dir, p))?),
            None => DensityModel::parametric(a.v0, a.density_alpha)?,
        };
        let acuity = AcuityModel::new(params, density)?;
        let mut psnr = match &self.psnr.table {
            Some(p) => PsnrModel::table(read_psnr_table(&resolve_path(base_dir, p))?),
            None => PsnrModel::parametric(self.psnr.c0, self.psnr.c1, self.psnr.c2, a.d0)?,
        };
        psnr.saturate = self.psnr.saturate;
        let weights = QoEWeights::new(self.qoe.p, self.qoe.q, self.qoe.r)?;
        let cfg = SessionConfig {
            buffer_cap: self.buffer.capacity_s.unwrap_or(2.0 * ladder.gof_duration()),
            ladder,
            acuity,
            quality: QualityModel::new(psnr),
            weights,
            view: self.view,
            baselines: self.baselines.clone(),
            prediction: self.predictor.mode,
            history_len: self.predictor.history,
            bandwidth_window: self.predictor.bandwidth_window,
            max_chunks: self.chunks,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sessions listed in the file or, when none are, the synthetic suite
    /// of the `experiment` section. `seed` overrides the file's seed.
    pub fn sessions(&self, base_dir: &Path, seed: Option<u64>) -> Result<Vec<SessionCase>> {
        let seed = seed.unwrap_or(self.seed);
        let content = self.content_box()?;
        let d0 = self.acuity.d0;
        let synth = |spec: &SyntheticSpec, seed: u64| {
            let mut p = SyntheticParams::new(spec.motion, spec.bandwidth, spec.duration_s);
            p.d0 = d0;
            p.content = content;
            super::generate_synthetic_traces(&p, seed)
        };
        if self.sessions.is_empty() {
            let e = &self.experiment;
            let mut out = Vec::new();
            for &motion in &e.motions {
                for &bandwidth in &e.bandwidth {
                    for user in 0..e.users {
                        let spec = SyntheticSpec {
                            motion,
                            bandwidth,
                            duration_s: e.duration_s,
                            seed: None,
                        };
                        out.push(SessionCase {
                            name: format!("{}/{}/u{user}", motion.name(), bandwidth.name()),
                            traces: synth(&spec, seed.wrapping_add(user as u64))?,
                        });
                    }
                }
            }
            return Ok(out);
        }
        self.sessions
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let traces = match (s, &s.synthetic) {
                    (SessionSource { bandwidth: Some(b), pose: Some(p), synthetic: None, .. }, _) => SessionTraces {
                        bandwidth: parse_bandwidth_trace(&resolve_path(base_dir, b))?,
                        poses: parse_pose_trace(&resolve_path(base_dir, p))?,
                        content,
                    },
                    (SessionSource { bandwidth: None, pose: None, .. }, Some(spec)) => {
                        synth(spec, spec.seed.unwrap_or(seed))?
                    }
                    _ => {
                        return Err(Error::invalid(format!(
                            "session {i} needs either both `bandwidth` and `pose` files or a `synthetic` table"
                        )))
                    }
                };
                Ok(SessionCase {
                    name: s.name.clone().unwrap_or_else(|| format!("session{i}")),
                    traces,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_reference() {
        let cfg = Config::from_toml_str("").unwrap();
        let s = cfg.resolve(Path::new(".")).unwrap();
        let r = SessionConfig::reference();
        assert_eq!(s.ladder, r.ladder);
        assert_eq!(s.weights, r.weights);
        assert_eq!(s.view, r.view);
        assert_eq!(s.buffer_cap, r.buffer_cap);
        assert_eq!(s.acuity, r.acuity);
        assert_eq!(s.quality, r.quality);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = Config::default();
        cfg.seed = 9;
        cfg.scheme = Some(Scheme::RateUtility);
        cfg.sessions.push(SessionSource {
            name: Some("a".into()),
            bandwidth: None,
            pose: None,
            synthetic: Some(SyntheticSpec {
                motion: MotionProfile::CloseIn,
                bandwidth: BandwidthProfile::High,
                duration_s: 3.0,
                seed: Some(4),
            }),
        });
        let text = cfg.to_toml_string();
        assert_eq!(Config::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_sections_and_errors() {
        let cfg = Config::from_toml_str("[qoe]\np = 10\n[view]\nfov_h_deg = 90\n").unwrap();
        assert_eq!(cfg.qoe, QoEWeights::new(10.0, 1.0, 1.0).unwrap());
        assert_eq!(cfg.view.fov_h_deg, 90.0);
        assert_eq!(cfg.view.fov_v_deg, 110.0);
        match Config::from_toml_str("seed = 1\n[qoe]\nbogus = 3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let neg = Config::from_toml_str("[qoe]\np = -1\n").unwrap();
        assert!(neg.resolve(Path::new(".")).is_err());
        let tiny = Config::from_toml_str("[buffer]\ncapacity_s = 0.1\n").unwrap();
        assert!(tiny.resolve(Path::new(".")).is_err());
    }

    #[test]
    fn default_suite_and_listed_sessions() {
        let mut cfg = Config::default();
        cfg.experiment.users = 2;
        cfg.experiment.duration_s = 2.0;
        let s = cfg.sessions(Path::new("."), Some(3)).unwrap();
        assert_eq!(s.len(), 18);
        assert_eq!(s[0].name, "far-orbit/low/u0");
        let bad = Config::from_toml_str("[[sessions]]\nname = \"x\"\nbandwidth = \"bw.csv\"\n").unwrap();
        assert!(bad.sessions(Path::new("."), None).is_err());
    }
}
