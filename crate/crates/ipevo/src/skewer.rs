//! The skewer map and interval-partition evolutions.

use crate::clade::{grow_clade, initial_spindle, BlockSampler, CladeConfig, StopRule};
use crate::error::{Error, Result};
use crate::ip::{self, IntervalPartition};
use crate::par::{map_indices_with, ProcessingMode};
use crate::rng;
use crate::scaffold::{concat_pp, SpindlePointProcess, DEFAULT_N_GRID, DEFAULT_POINT_BUDGET};
use crate::spindle::DiffusionParams;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Blocks lighter than this are treated as interpolation noise at spindle ends.
pub const MIN_BLOCK_MASS: f64 = 1e-12;

/// The skewer of a point process at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewerSnapshot {
    pub level: f64,
    pub partition: IntervalPartition,
    /// Point time of the spindle behind each block.
    pub block_ids: Vec<f64>,
}

/// Sum over points up to time `t` of the spindle value at height `y - X(u-)`.
pub fn aggregate_mass(pp: &SpindlePointProcess, y: f64, t: f64) -> f64 {
    let slope = pp.drift();
    let mut cum = 0.0;
    let mut m = 0.0;
    for (i, p) in pp.points().iter().enumerate() {
        if p.t > t {
            break;
        }
        let pre = cum - slope * p.t;
        let z = p.lifetime();
        if pre <= y && y <= pre + z {
            m += pp.spindle(i).value(y - pre);
        }
        cum += z;
    }
    m
}

/// Skewer at level `y`.
pub fn skewer(pp: &SpindlePointProcess, y: f64) -> SkewerSnapshot {
    skewer_levels(pp, &[y]).pop().expect("one level")
}

/// Skewers at several levels in a single pass over the points. Diversity
/// marks are the scaffolding local times at the block's point time.
pub fn skewer_levels(pp: &SpindlePointProcess, levels: &[f64]) -> Vec<SkewerSnapshot> {
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));
    let ys: Vec<f64> = order.iter().map(|&i| levels[i]).collect();
    let slope = pp.drift();
    let inc = 1.0 / slope;
    let mut ell = vec![0.0; ys.len()];
    let mut blocks: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); ys.len()];

    // Levels in (v1, v0] are down-crossed by a segment from v0 to v1.
    let cross = |ell: &mut [f64], v0: f64, v1: f64| {
        let lo = ys.partition_point(|&y| y <= v1);
        let hi = ys.partition_point(|&y| y <= v0);
        for l in &mut ell[lo..hi.max(lo)] {
            *l += inc;
        }
    };

    let mut cum = 0.0;
    let mut post = 0.0;
    for (i, p) in pp.points().iter().enumerate() {
        let pre = cum - slope * p.t;
        cross(&mut ell, post, pre);
        let z = p.lifetime();
        let lo = ys.partition_point(|&y| y < pre);
        let hi = ys.partition_point(|&y| y <= pre + z);
        if hi > lo {
            let f = pp.spindle(i);
            for k in lo..hi {
                let m = f.value(ys[k] - pre);
                if m >= MIN_BLOCK_MASS {
                    blocks[k].push((m, ell[k], p.t));
                }
            }
        }
        cum += z;
        post = cum - slope * p.t;
    }
    cross(&mut ell, post, cum - slope * pp.length);

    let alpha_div = pp.params.alpha_div();
    let mut out: Vec<Option<SkewerSnapshot>> = vec![None; ys.len()];
    for (k, &orig) in order.iter().enumerate() {
        let bl = std::mem::take(&mut blocks[k]);
        let block_ids = bl.iter().map(|b| b.2).collect();
        let blocks = bl.iter().map(|b| ip::Block::new(b.0, Some(b.1))).collect();
        let partition = IntervalPartition::new(alpha_div, blocks, Some(ell[k])).expect("skewer blocks are valid");
        out[orig] = Some(SkewerSnapshot { level: ys[k], partition, block_ids });
    }
    out.into_iter().map(|s| s.expect("every level filled")).collect()
}

/// Settings of an interval-partition evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub eps: f64,
    pub block: BlockSampler,
    pub n_grid: usize,
    pub budget: usize,
    #[serde(skip)]
    pub mode: ProcessingMode,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            eps: 1e-3,
            block: BlockSampler::Euler { dt: 1e-3 },
            n_grid: DEFAULT_N_GRID,
            budget: DEFAULT_POINT_BUDGET,
            mode: ProcessingMode::Parallel,
        }
    }
}

impl EvolveConfig {
    fn clade(&self, cap: f64) -> CladeConfig {
        CladeConfig {
            eps: self.eps,
            block: self.block,
            n_grid: self.n_grid,
            cap: Some(cap),
            stop: StopRule::Exhaust,
            budget: self.budget,
        }
    }
}

/// Snapshots of an evolution on a level grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionPath {
    pub params: DiffusionParams,
    pub config: EvolveConfig,
    pub seed: Option<u64>,
    pub snapshots: Vec<SkewerSnapshot>,
}

/// Cap slightly above the top level so that spindles cut there still straddle it.
fn cap_for(top: f64) -> f64 {
    top * (1.0 + 1e-9) + 1e-12
}

/// Clades of every block, built on independent streams derived from `base`.
fn clades(
    beta: &IntervalPartition,
    params: &DiffusionParams,
    cap: f64,
    cfg: &EvolveConfig,
    base: u64,
) -> Result<Vec<SpindlePointProcess>> {
    let ccfg = cfg.clade(cap);
    let masses = beta.masses();
    map_indices_with(cfg.mode, masses.len(), |i| {
        let mut r = rng::stream(base, "clade", i as u64);
        let f = initial_spindle(params, masses[i], cfg.block, cfg.n_grid, &mut r)?;
        grow_clade(params, f, &ccfg, &mut r)
    })
    .into_iter()
    .collect()
}

/// The evolution from `beta`: one clade per block, concatenated in block
/// order and skewered at each level. Level 0 returns `beta` itself.
pub fn evolve<R: Rng + ?Sized>(
    beta: &IntervalPartition,
    params: &DiffusionParams,
    levels: &[f64],
    cfg: &EvolveConfig,
    rng: &mut R,
) -> Result<EvolutionPath> {
    let seed = rng.next_u64();
    evolve_seeded(beta, params, levels, cfg, seed)
}

pub fn evolve_seeded(
    beta: &IntervalPartition,
    params: &DiffusionParams,
    levels: &[f64],
    cfg: &EvolveConfig,
    seed: u64,
) -> Result<EvolutionPath> {
    check_initial(beta, params)?;
    if levels.iter().any(|y| !(*y >= 0.0 && y.is_finite())) {
        return Err(Error::param("levels must be finite and nonnegative"));
    }
    let top = levels.iter().copied().fold(0.0, f64::max);
    let positive: Vec<f64> = levels.iter().copied().filter(|&y| y > 0.0).collect();
    // Level-0 ids are the clade start times in the concatenation, which is
    // where each initial spindle sits, so ids persist across levels.
    let mut initial_ids: Vec<f64> = (0..beta.len()).map(|i| i as f64).collect();
    let mut snaps = if positive.is_empty() || beta.is_empty() {
        Vec::new()
    } else {
        let parts = clades(beta, params, cap_for(top), cfg, seed)?;
        let mut offset = 0.0;
        for (id, c) in initial_ids.iter_mut().zip(&parts) {
            *id = offset;
            offset += c.length;
        }
        // Clades that never reach the lowest positive level add neither
        // blocks nor local time there.
        let low = positive.iter().copied().fold(f64::INFINITY, f64::min);
        if parts.iter().any(|c| reaches(c, low)) {
            skewer_levels(&concat_pp(&parts)?, &positive)
        } else {
            Vec::new()
        }
    };
    let alpha_div = params.alpha_div();
    let mut it = snaps.drain(..);
    let snapshots = levels
        .iter()
        .map(|&y| {
            if y == 0.0 {
                SkewerSnapshot { level: 0.0, partition: beta.clone(), block_ids: initial_ids.clone() }
            } else {
                it.next().unwrap_or_else(|| SkewerSnapshot {
                    level: y,
                    partition: IntervalPartition::new(alpha_div, Vec::new(), Some(0.0)).expect("empty"),
                    block_ids: Vec::new(),
                })
            }
        })
        .collect();
    Ok(EvolutionPath { params: *params, config: *cfg, seed: Some(seed), snapshots })
}

fn reaches(pp: &SpindlePointProcess, y: f64) -> bool {
    let slope = pp.drift();
    let mut cum = 0.0;
    for p in pp.points() {
        cum += p.lifetime();
        if cum - slope * p.t >= y {
            return true;
        }
    }
    false
}

fn check_initial(beta: &IntervalPartition, params: &DiffusionParams) -> Result<()> {
    if beta.alpha_div() != params.alpha_div() && !beta.is_empty() {
        return Err(Error::param(format!(
            "initial partition has alpha_div {} but the model has {}",
            beta.alpha_div(),
            params.alpha_div()
        )));
    }
    Ok(())
}

/// One draw from the transition kernel at level `y`: independent
/// single-block evolutions read at `y`, concatenated in block order.
pub fn transition_sample<R: Rng + ?Sized>(
    beta: &IntervalPartition,
    y: f64,
    params: &DiffusionParams,
    cfg: &EvolveConfig,
    rng: &mut R,
) -> Result<IntervalPartition> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::param("transition level must be positive"));
    }
    check_initial(beta, params)?;
    let base = rng.next_u64();
    let ccfg = cfg.clade(cap_for(y));
    let masses = beta.masses();
    let parts: Vec<IntervalPartition> = map_indices_with(cfg.mode, masses.len(), |i| {
        let mut r = rng::stream(base, "transition", i as u64);
        let f = initial_spindle(params, masses[i], cfg.block, cfg.n_grid, &mut r)?;
        let clade = grow_clade(params, f, &ccfg, &mut r)?;
        Ok(skewer(&clade, y).partition)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    ip::concat(params.alpha_div(), &parts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathMetric {
    Alpha,
    Hausdorff,
}

/// Hölder exponent of a level path: slope of log mean increment against log
/// lag, over dyadic lags. Blocks below `cutoff` are ignored.
pub fn holder_exponent_estimate(path: &EvolutionPath, metric: PathMetric, cutoff: f64) -> Result<f64> {
    let s = &path.snapshots;
    if s.len() < 50 {
        return Err(Error::param(format!("need at least 50 levels, got {}", s.len())));
    }
    let parts: Vec<IntervalPartition> = s.iter().map(|x| x.partition.truncate(cutoff).0).collect();
    let dist = |a: &IntervalPartition, b: &IntervalPartition| -> Result<f64> {
        match metric {
            PathMetric::Hausdorff => Ok(ip::dist_hausdorff(a, b)),
            PathMetric::Alpha => ip::dist_alpha(a, b),
        }
    };
    let step = (s[s.len() - 1].level - s[0].level) / (s.len() - 1) as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lag = 1;
    while lag <= (s.len() - 1) / 4 {
        let mut tot = 0.0;
        let mut n = 0;
        for i in (0..s.len() - lag).step_by(lag) {
            tot += dist(&parts[i], &parts[i + lag])?;
            n += 1;
        }
        let mean = tot / n as f64;
        if mean > 0.0 {
            xs.push((lag as f64 * step).ln());
            ys.push(mean.ln());
        }
        lag *= 2;
    }
    if xs.len() < 2 {
        return Err(Error::Undefined("path is constant; Hölder exponent undefined".into()));
    }
    let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PathHeader {
    alpha: f64,
    q: f64,
    c: f64,
    cutoff: f64,
    block: BlockSampler,
    n_grid: usize,
    seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LevelRecord {
    y: f64,
    partition: IntervalPartition,
    block_ids: Vec<f64>,
}

impl EvolutionPath {
    pub fn levels(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.level).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let h = PathHeader {
            alpha: self.params.alpha,
            q: self.params.q,
            c: self.params.c,
            cutoff: self.config.eps,
            block: self.config.block,
            n_grid: self.config.n_grid,
            seed: self.seed,
        };
        serde_json::to_writer(&mut w, &h)?;
        w.write_all(b"\n")?;
        for s in &self.snapshots {
            let rec = LevelRecord { y: s.level, partition: s.partition.clone(), block_ids: s.block_ids.clone() };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf8 json")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let h: PathHeader = match lines.next() {
            Some(l) => serde_json::from_str(&l?)?,
            None => return Err(Error::format("empty evolution file")),
        };
        let params = DiffusionParams::new(h.alpha, h.q, h.c)?;
        let mut snapshots = Vec::new();
        for l in lines {
            let rec: LevelRecord = serde_json::from_str(&l?)?;
            if rec.block_ids.len() != rec.partition.len() {
                return Err(Error::format("block_ids and blocks differ in length"));
            }
            snapshots.push(SkewerSnapshot { level: rec.y, partition: rec.partition, block_ids: rec.block_ids });
        }
        let config = EvolveConfig { eps: h.cutoff, block: h.block, n_grid: h.n_grid, ..Default::default() };
        Ok(EvolutionPath { params, config, seed: h.seed, snapshots })
    }

    pub fn from_jsonl(s: &str) -> Result<Self> {
        Self::read_jsonl(s.as_bytes())
    }

    /// `y, total_mass, total_diversity, block_count` per level.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,total_mass,total_diversity,block_count\n");
        for s in &self.snapshots {
            let d = s.partition.total_diversity().map_or(String::new(), |d| d.to_string());
            out.push_str(&format!("{},{},{},{}\n", s.level, s.partition.total_mass(), d, s.partition.len()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaffold::{Mark, Point};
    use crate::spindle::Spindle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> DiffusionParams {
        DiffusionParams::besq(0.5).unwrap()
    }

    #[test]
    fn three_spindles_in_time_order() {
        // Values at the level are 0.4, 0.1, 0.3; each spindle peaks mid-life.
        let p = params();
        let eps = 1.0;
        let slope = crate::spindle::ExcursionMeasureTable::new(p).drift(eps);
        let mk = |t: f64, v: f64, z: f64| Point { t, mark: Mark::Stored(Spindle::from_samples(z, vec![0.0, 2.0 * v, 0.0]).unwrap()) };
        // Spindle i starts at X(t_i-) and is read at relative height z_i/4.
        let (z1, z2, z3) = (4.0, 4.0, 4.0);
        let t2 = z1 / slope;
        let t3 = t2 + z2 / slope;
        let pp = SpindlePointProcess::new(p, eps, t3 + z3 / slope, vec![mk(0.0, 0.4, z1), mk(t2, 0.1, z2), mk(t3, 0.3, z3)]).unwrap();
        let s = skewer(&pp, 1.0);
        let m = s.partition.masses();
        assert_eq!(m.len(), 3);
        for (a, b) in m.iter().zip([0.4, 0.1, 0.3]) {
            assert!((a - b).abs() < 1e-9, "{m:?}");
        }
        assert_eq!(s.block_ids, vec![0.0, t2, t3]);
        assert!((s.partition.total_mass() - aggregate_mass(&pp, 1.0, pp.length)).abs() < 1e-15);
        assert!(skewer(&pp, -1.0).partition.is_empty());
    }

    #[test]
    fn level_zero_is_initial_state() {
        let beta = IntervalPartition::from_masses(0.5, &[1.0, 0.3]).unwrap();
        let cfg = EvolveConfig { eps: 0.05, block: BlockSampler::Exact, n_grid: 32, ..Default::default() };
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let path = evolve(&beta, &params(), &[0.0, 0.2, 0.4], &cfg, &mut r).unwrap();
        assert_eq!(path.snapshots[0].partition, beta);
        assert!(path.snapshots[1].partition.has_diversity());
        let s = path.to_jsonl();
        assert_eq!(EvolutionPath::from_jsonl(&s).unwrap().to_jsonl(), s);
        let empty = evolve(&IntervalPartition::empty(0.5), &params(), &[0.0, 1.0], &cfg, &mut r).unwrap();
        assert!(empty.snapshots.iter().all(|s| s.partition.is_empty()));
    }

    #[test]
    fn rejects_q_below_alpha() {
        assert!(DiffusionParams::new(0.5, 0.4, 1.0).is_err());
    }
}
