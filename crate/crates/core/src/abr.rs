//! Per-chunk tile quality selection.
//!
//! The proposed scheme caps every visible tile at the lowest level whose
//! density reaches the boundary density, then climbs the remaining levels
//! greedily. The exhaustive solver is the reference for small instances;
//! the three baselines reproduce the comparison schemes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ladder::{QualityLadder, TileSelection};
use crate::qoe::{self, QoEWeights, QualityModel};

/// Score differences this small are treated as ties.
const TIE_TOLERANCE: f64 = 1e-9;

/// Everything a scheme sees when deciding one chunk.
#[derive(Debug, Clone)]
pub struct ChunkDecisionInput<'a> {
    pub visible: Vec<bool>,
    pub distances: Vec<f64>,
    pub eta_star: f64,
    /// Predicted bandwidth, Mbps.
    pub bw_mbps: f64,
    /// Buffer occupancy at request time, seconds.
    pub buffer: f64,
    /// Perceived quality of the previous chunk under the scheme's own model.
    pub prev_q1: Option<f64>,
    /// First chunk of a session: downloaded before playback, no stall.
    pub startup: bool,
    pub ladder: &'a QualityLadder,
    pub weights: QoEWeights,
    pub model: &'a QualityModel,
}

impl ChunkDecisionInput<'_> {
    pub fn validate(&self) -> Result<()> {
        let n = self.ladder.tile_count();
        if self.visible.len() != n || self.distances.len() != n {
            return Err(Error::invalid(format!(
                "decision input has {} flags and {} distances for {n} tiles",
                self.visible.len(),
                self.distances.len()
            )));
        }
        if !(self.bw_mbps > 0.0) {
            return Err(Error::invalid(format!(
                "predicted bandwidth must be positive, got {}",
                self.bw_mbps
            )));
        }
        if !(self.buffer >= 0.0) {
            return Err(Error::invalid(format!(
                "buffer must be nonnegative, got {}",
                self.buffer
            )));
        }
        if !(self.eta_star > 0.0 && self.eta_star <= 1.0) {
            return Err(Error::invalid(format!(
                "boundary density {} outside (0, 1]",
                self.eta_star
            )));
        }
        Ok(())
    }

    fn skeleton(&self) -> Result<TileSelection> {
        self.validate()?;
        TileSelection::skeleton(self.visible.clone(), self.distances.clone())
    }

    /// Evaluates a selection under this input's model and prediction.
    pub fn score(&self, sel: &TileSelection) -> Result<qoe::ChunkScore> {
        qoe::evaluate_chunk(
            sel,
            &qoe::ChunkContext {
                ladder: self.ladder,
                model: self.model,
                weights: &self.weights,
                eta_star: self.eta_star,
                bw_mbps: self.bw_mbps,
                buffer: self.buffer,
                prev_q1: self.prev_q1,
                startup: self.startup,
            },
        )
    }
}

/// Chunk objective restricted to the visible tiles, with per-tile values
/// precomputed for every allowed level. Scores use the same arithmetic as
/// [`qoe::evaluate_chunk`].
struct Objective<'a> {
    input: &'a ChunkDecisionInput<'a>,
    tiles: Vec<usize>,
    /// `values[k][l]`: worth of visible tile `k` at level `l`.
    values: Vec<Vec<f64>>,
    caps: Vec<usize>,
    sizes: Vec<u64>,
    byte_cap: u64,
}

impl<'a> Objective<'a> {
    fn new(input: &'a ChunkDecisionInput<'a>, model: &QualityModel, prune: bool) -> Self {
        let ladder = input.ladder;
        let tiles: Vec<usize> = (0..input.visible.len())
            .filter(|&i| input.visible[i])
            .collect();
        let cap = if prune {
            ladder.cap_level(input.eta_star)
        } else {
            ladder.top()
        };
        let values = tiles
            .iter()
            .map(|&i| {
                ladder
                    .levels()
                    .iter()
                    .map(|l| model.tile_value(l.eta, input.distances[i], input.eta_star))
                    .collect()
            })
            .collect();
        Self {
            input,
            caps: vec![cap; tiles.len()],
            tiles,
            values,
            sizes: (0..ladder.len()).map(|l| ladder.tile_size(l)).collect(),
            byte_cap: ladder.full_chunk_size(),
        }
    }

    fn score(&self, values: &[f64], bytes: u64) -> f64 {
        let input = self.input;
        let (q1, q4) = if values.is_empty() {
            (0.0, 0.0)
        } else {
            let q1 = values.iter().fold(0.0, |s, v| s + v) / values.len() as f64;
            (q1, qoe::population_std(values).unwrap_or(0.0))
        };
        let tau = bytes as f64 * 8.0 / (input.bw_mbps * 1e6);
        let q2 = if input.startup {
            0.0
        } else {
            qoe::rebuffer_time(tau, input.buffer)
        };
        let q3 = qoe::temporal_variation(q1, input.prev_q1);
        qoe::qoe_total(q1, q2, q3, q4, &input.weights)
    }

    fn selection(&self, levels: &[usize]) -> Result<TileSelection> {
        let mut sel = self.input.skeleton()?;
        for (&tile, &level) in self.tiles.iter().zip(levels) {
            sel.levels[tile] = level;
        }
        Ok(sel)
    }

    /// Climbs one tile one level at a time from the all-lowest state.
    ///
    /// While some upgrade improves the score, the one with the largest gain
    /// per added byte is taken. Otherwise the least damaging upgrade is
    /// taken so the climb can cross dips (a lone upgraded tile raises the
    /// spatial deviation before its neighbours catch up). The best state on
    /// the path is returned, preferring the later one on ties. Ties between
    /// tiles go to the lowest index.
    fn climb(&self) -> Vec<usize> {
        let n = self.tiles.len();
        let mut levels = vec![0usize; n];
        if n == 0 {
            return levels;
        }
        let mut values: Vec<f64> = self.values.iter().map(|v| v[0]).collect();
        let mut bytes = self.sizes[0] * n as u64;
        let mut current = self.score(&values, bytes);
        let mut best_score = current;
        let mut best_levels = levels.clone();
        loop {
            let mut improving: Option<(usize, f64)> = None;
            let mut least_bad: Option<(usize, f64)> = None;
            for k in 0..n {
                let next = levels[k] + 1;
                if next > self.caps[k] {
                    continue;
                }
                let added = self.sizes[next] - self.sizes[levels[k]];
                if bytes + added > self.byte_cap {
                    continue;
                }
                let old = values[k];
                values[k] = self.values[k][next];
                let gain = self.score(&values, bytes + added) - current;
                values[k] = old;
                if gain > TIE_TOLERANCE {
                    let ratio = gain / added.max(1) as f64;
                    if improving.map_or(true, |(_, r)| ratio > r) {
                        improving = Some((k, ratio));
                    }
                }
                if least_bad.map_or(true, |(_, g)| gain > g) {
                    least_bad = Some((k, gain));
                }
            }
            let Some((k, _)) = improving.or(least_bad) else {
                break;
            };
            let next = levels[k] + 1;
            bytes += self.sizes[next] - self.sizes[levels[k]];
            levels[k] = next;
            values[k] = self.values[k][next];
            current = self.score(&values, bytes);
            if current >= best_score - TIE_TOLERANCE {
                best_score = best_score.max(current);
                best_levels.clone_from(&levels);
            }
        }
        best_levels
    }

    /// Exhaustive search in lexicographic level order; the first maximizer
    /// found is the lexicographically smallest.
    fn enumerate(&self) -> (Vec<usize>, f64) {
        let n = self.tiles.len();
        let mut levels = vec![0usize; n];
        let mut values: Vec<f64> = self.values.iter().map(|v| v[0]).collect();
        let mut best = (levels.clone(), f64::NEG_INFINITY);
        loop {
            let bytes: u64 = levels.iter().map(|&l| self.sizes[l]).sum();
            if bytes <= self.byte_cap {
                let s = self.score(&values, bytes);
                if s > best.1 {
                    best = (levels.clone(), s);
                }
            }
            // odometer increment, last tile fastest
            let mut k = n;
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                if levels[k] < self.caps[k] {
                    levels[k] += 1;
                    values[k] = self.values[k][levels[k]];
                    break;
                }
                levels[k] = 0;
                values[k] = self.values[k][0];
            }
        }
    }
}

/// Acuity-pruned greedy selection of the proposed scheme.
pub fn select_greedy(input: &ChunkDecisionInput<'_>) -> Result<TileSelection> {
    input.validate()?;
    let obj = Objective::new(input, input.model, true);
    obj.selection(&obj.climb())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactOptions {
    /// Restrict each tile to levels at or below the acuity cap.
    pub prune: bool,
    pub max_tiles: usize,
    pub max_levels: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            prune: true,
            max_tiles: 8,
            max_levels: 6,
        }
    }
}

/// Optimal selection by enumeration, for small instances.
pub fn select_exact(input: &ChunkDecisionInput<'_>, opts: ExactOptions) -> Result<TileSelection> {
    input.validate()?;
    let visible = input.visible.iter().filter(|&&v| v).count();
    if visible > opts.max_tiles || input.ladder.len() > opts.max_levels {
        return Err(Error::InstanceTooLarge {
            visible,
            levels: input.ladder.len(),
            max_tiles: opts.max_tiles,
            max_levels: opts.max_levels,
        });
    }
    let obj = Objective::new(input, input.model, opts.prune);
    let (levels, _) = obj.enumerate();
    obj.selection(&levels)
}

/// Baseline: frustum-aware QoE-driven greedy that knows nothing of acuity
/// (no indicator, no saturation, no level cap).
pub fn baseline_viewport_utility(input: &ChunkDecisionInput<'_>) -> Result<TileSelection> {
    input.validate()?;
    let blind = input.model.acuity_blind();
    let obj = Objective::new(input, &blind, false);
    obj.selection(&obj.climb())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateUtilityParams {
    pub in_frustum_weight: f64,
    pub out_of_frustum_weight: f64,
}

impl Default for RateUtilityParams {
    fn default() -> Self {
        Self {
            in_frustum_weight: 1.0,
            out_of_frustum_weight: 0.1,
        }
    }
}

/// Baseline: tiles ranked by `weight / distance`, each taking the highest
/// level the remaining per-chunk budget (`bandwidth x GoF duration`)
/// allows. Visible tiles are always sent at least at the lowest level.
/// Out-of-frustum tiles rank but are never transmitted.
pub fn baseline_rate_utility(
    input: &ChunkDecisionInput<'_>,
    params: &RateUtilityParams,
) -> Result<TileSelection> {
    let mut sel = input.skeleton()?;
    let ladder = input.ladder;
    let budget = (input.bw_mbps * 1e6 / 8.0 * ladder.gof_duration()).floor() as u64;
    let base = ladder.tile_size(0);
    let mut spent = base * sel.visible_count() as u64;
    let utility = |i: usize| {
        let w = if input.visible[i] {
            params.in_frustum_weight
        } else {
            params.out_of_frustum_weight
        };
        w / input.distances[i].max(f64::MIN_POSITIVE)
    };
    let mut order: Vec<usize> = (0..sel.len()).collect();
    order.sort_by(|&a, &b| utility(b).total_cmp(&utility(a)).then(a.cmp(&b)));
    for i in order {
        if !input.visible[i] {
            continue;
        }
        let level = (0..ladder.len())
            .rev()
            .find(|&l| spent - base + ladder.tile_size(l) <= budget)
            .unwrap_or(0);
        spent = spent - base + ladder.tile_size(level);
        sel.levels[i] = level;
    }
    Ok(sel)
}

/// Distance bands: a tile closer than `upper_bounds[k]` (first match)
/// takes `levels[k]`; tiles beyond every bound take the lowest level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBands {
    pub upper_bounds: Vec<f64>,
    pub levels: Vec<usize>,
}

/// Band splits as multiples of the default viewing distance.
pub const DEFAULT_BAND_SPLITS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, 4.5];

impl DistanceBands {
    pub fn new(upper_bounds: Vec<f64>, levels: Vec<usize>) -> Result<Self> {
        if upper_bounds.len() != levels.len() {
            return Err(Error::invalid("distance bands need one level per bound"));
        }
        if upper_bounds.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("distance band bounds must strictly increase"));
        }
        Ok(Self {
            upper_bounds,
            levels,
        })
    }

    /// Nearest band gets the top level, each farther band one level less,
    /// split at `d0 x` [`DEFAULT_BAND_SPLITS`].
    pub fn for_ladder(ladder: &QualityLadder, d0: f64) -> Self {
        let top = ladder.top();
        let (upper_bounds, levels) = DEFAULT_BAND_SPLITS
            .iter()
            .take(top)
            .enumerate()
            .map(|(k, s)| (d0 * s, top - k))
            .unzip();
        Self {
            upper_bounds,
            levels,
        }
    }

    pub fn level_for(&self, d: f64) -> usize {
        self.upper_bounds
            .iter()
            .position(|&b| d < b)
            .map_or(0, |k| self.levels[k])
    }
}

/// Baseline: visible tiles take the level of their distance band.
pub fn baseline_distance_tile(
    input: &ChunkDecisionInput<'_>,
    bands: &DistanceBands,
) -> Result<TileSelection> {
    let mut sel = input.skeleton()?;
    if let Some(&bad) = bands.levels.iter().find(|&&l| l >= input.ladder.len()) {
        return Err(Error::invalid(format!("distance band level {bad} not in ladder")));
    }
    for i in 0..sel.len() {
        if sel.visible[i] {
            sel.levels[i] = bands.level_for(sel.distances[i]);
        }
    }
    Ok(sel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    RateUtility,
    ViewportUtility,
    DistanceTile,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Proposed,
        Scheme::RateUtility,
        Scheme::ViewportUtility,
        Scheme::DistanceTile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::RateUtility => "rate_utility",
            Scheme::ViewportUtility => "viewport_utility",
            Scheme::DistanceTile => "distance_tile",
        }
    }

    /// Quality model the scheme believes in when it decides.
    pub fn decision_model(self, model: &QualityModel) -> QualityModel {
        match self {
            Scheme::Proposed => model.clone(),
            _ => model.acuity_blind(),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown scheme {s:?}; expected proposed, rate_utility, viewport_utility or distance_tile"
                ))
            })
    }
}

/// Tunables of the baseline schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub rate_utility: RateUtilityParams,
    /// `None` derives bands from the ladder and default viewing distance.
    pub distance_bands: Option<DistanceBands>,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            rate_utility: RateUtilityParams::default(),
            distance_bands: None,
        }
    }
}

/// Runs `scheme` on one chunk.
pub fn decide(
    scheme: Scheme,
    input: &ChunkDecisionInput<'_>,
    params: &BaselineParams,
    d0: f64,
) -> Result<TileSelection> {
    match scheme {
        Scheme::Proposed => select_greedy(input),
        Scheme::RateUtility => baseline_rate_utility(input, &params.rate_utility),
        Scheme::ViewportUtility => baseline_viewport_utility(input),
        Scheme::DistanceTile => match &params.distance_bands {
            Some(b) => baseline_distance_tile(input, b),
            None => baseline_distance_tile(input, &DistanceBands::for_ladder(input.ladder, d0)),
        },
    }
}
