//! Monte Carlo checks of closed-form laws, with standard-error tolerances.
//!
//! Each check is a function of a config and a master seed. Replicate `i` of
//! a check draws from `rng::stream(seed, label, i)`, so results do not depend
//! on the worker count. A cell passes iff `|statistic - reference| <= k·SE +
//! allowance`, where the allowance collects discretization terms estimated by
//! refinement, reported separately from `k·SE`.

use crate::clade::{decompose_biclades, grow_clade, initial_spindle, reassemble_process, split_biclade, BlockSampler, CladeConfig, StopRule};
use crate::error::{Error, Result};
use crate::ip::{self, IntervalPartition};
use crate::par::{map_indices_with, ProcessingMode};
use crate::rng::{self, StreamRng};
use crate::scaffold::{sample_prm, Scaffolding, DEFAULT_POINT_BUDGET};
use crate::skewer::{aggregate_mass, evolve_seeded, transition_sample, EvolveConfig};
use crate::spindle::{block_amplitude_capped, simulate_block_diffusion_coupled, DiffusionParams, ExcursionMeasureTable};
use crate::stats::{batch_means, bonferroni_k, inverse_gamma_cdf, kolmogorov_q, ks_one_sample, ks_two_sample, linear_fit, median};
use crate::sweep::{exit_coupled, level_zero_masses, ExitProcess, SweepConfig};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const BATCHES: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub label: String,
    pub statistic: f64,
    pub reference_value: f64,
    pub standard_error: f64,
    pub allowance: f64,
    pub pass: bool,
    /// Second reference computed by an independent route, when one exists.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cross_check: Option<f64>,
}

impl CellReport {
    fn new(label: impl Into<String>, statistic: f64, reference: f64, se: f64, allowance: f64, k: f64) -> Self {
        let pass = (statistic - reference).abs() <= k * se + allowance;
        CellReport { label: label.into(), statistic, reference_value: reference, standard_error: se, allowance, pass, cross_check: None }
    }

    fn slack(&self, k: f64) -> f64 {
        (self.statistic - self.reference_value).abs() - k * self.standard_error - self.allowance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub n_samples: usize,
    /// Values of the cell closest to failing (or the worst failing one).
    pub statistic: f64,
    pub reference_value: f64,
    pub standard_error: f64,
    pub k: f64,
    pub allowance: f64,
    pub pass: bool,
    pub seed: u64,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub runtime: f64,
    /// Checks a law the model is only claimed to satisfy; failure is reported, not fatal.
    pub cited_forward: bool,
    /// Deliberately misspecified run that is expected to fail.
    pub negative_control: bool,
    pub cells: Vec<CellReport>,
}

impl TestReport {
    fn from_cells(name: &str, n: usize, k: f64, seed: u64, started: Instant, cells: Vec<CellReport>) -> Self {
        let worst = cells
            .iter()
            .max_by(|a, b| a.slack(k).total_cmp(&b.slack(k)))
            .cloned()
            .unwrap_or_else(|| CellReport::new("empty", 0.0, 0.0, 0.0, 0.0, k));
        TestReport {
            name: name.to_string(),
            n_samples: n,
            statistic: worst.statistic,
            reference_value: worst.reference_value,
            standard_error: worst.standard_error,
            k,
            allowance: worst.allowance,
            pass: cells.iter().all(|c| c.pass),
            seed,
            runtime: started.elapsed().as_secs_f64(),
            cited_forward: false,
            negative_control: false,
            cells,
        }
    }

    /// Whether the outcome is the expected one.
    pub fn ok(&self) -> bool {
        if self.negative_control {
            !self.pass
        } else {
            self.pass || self.cited_forward
        }
    }

    pub fn summary(&self) -> String {
        let tag = match (self.negative_control, self.pass) {
            (false, true) => "PASS",
            (false, false) if self.cited_forward => "FAIL (cited-forward, non-blocking)",
            (false, false) => "FAIL",
            (true, false) => "PASS (control rejected)",
            (true, true) => "FAIL (control accepted)",
        };
        format!(
            "{tag} {}: statistic {:.6} reference {:.6} SE {:.2e} k {:.2} allowance {:.2e} n {} ({:.1}s)",
            self.name, self.statistic, self.reference_value, self.standard_error, self.k, self.allowance, self.n_samples, self.runtime
        )
    }
}

/// Bias of the fine estimate under an error term `∝ h^order`, from estimates at `h` and `ratio·h`.
pub fn richardson_allowance(fine: f64, coarse: f64, ratio: f64, order: f64) -> f64 {
    let r = ratio.powf(-order);
    (fine - coarse).abs() * r / (1.0 - r)
}

/// Two-sample KS distance at which the p-value equals `p`.
pub fn ks_critical(p: f64, n: usize, m: usize) -> f64 {
    let ne = (n * m) as f64 / (n + m) as f64;
    let sn = ne.sqrt();
    let (mut lo, mut hi) = (0.2, 5.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_q(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) / (sn + 0.12 + 0.11 / sn)
}

fn replicates<T: Send>(mode: ProcessingMode, n: usize, seed: u64, label: &str, f: impl Fn(&mut StreamRng) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    map_indices_with(mode, n, |i| f(&mut rng::stream(seed, label, i as u64))).into_iter().collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn cap_above(y: f64) -> f64 {
    y * (1.0 + 1e-9) + 1e-12
}

/// Dominant exponent of the cutoff bias of level statistics.
fn eps_order(alpha: f64) -> f64 {
    alpha.min(1.0 - alpha)
}

/// Survival of single-block evolutions against `1 - exp(-a/2y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeLaw {
    pub alpha: f64,
    pub a_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub n: usize,
    pub eps: f64,
    pub dt: f64,
    /// Added to `α` of the initial block diffusion only (negative control).
    pub block_shift: f64,
    pub mode: ProcessingMode,
}

impl Default for LifetimeLaw {
    fn default() -> Self {
        LifetimeLaw {
            alpha: 0.5,
            a_grid: vec![0.5, 1.0, 2.0],
            y_grid: vec![0.25, 0.5, 1.0, 2.0],
            n: 10_000,
            eps: 1e-3,
            dt: 1e-4,
            block_shift: 0.0,
            mode: ProcessingMode::Parallel,
        }
    }
}

pub fn test_lifetime_law(cfg: &LifetimeLaw, seed: u64) -> Result<TestReport> {
    let started = Instant::now();
    if cfg.n < 1000 {
        return Err(Error::param("lifetime law needs n >= 1000"));
    }
    let params = DiffusionParams::besq(cfg.alpha)?;
    let block = DiffusionParams::besq(cfg.alpha + cfg.block_shift)?;
    let ymax = cfg.y_grid.iter().copied().fold(0.0, f64::max);
    let cap = cap_above(ymax);
    let ccfg = CladeConfig {
        eps: cfg.eps,
        block: BlockSampler::Euler { dt: cfg.dt },
        n_grid: 16,
        cap: Some(cap),
        stop: StopRule::AtCap,
        budget: DEFAULT_POINT_BUDGET,
    };
    let k = bonferroni_k(cfg.a_grid.len() * cfg.y_grid.len());
    let mut cells = Vec::new();
    for (ia, &a) in cfg.a_grid.iter().enumerate() {
        let tops = replicates(cfg.mode, cfg.n, seed, &format!("lifetime/{ia}"), |r| {
            let f = initial_spindle(&block, a, ccfg.block, ccfg.n_grid, r)?;
            let pp = grow_clade(&params, f, &ccfg, r)?;
            Ok(Scaffolding::of(&pp).max())
        })?;
        // Coupled refinements on common randomness: (dt, 2dt) lifetimes and (ε, 4ε) cutoffs.
        let refine = replicates(cfg.mode, cfg.n, seed, &format!("lifetime-refine/{ia}"), |r| {
            let (fine, coarse) = simulate_block_diffusion_coupled(&block, a, cfg.dt, r)?;
            let procs = [
                ExitProcess { start: fine.lifetime, cutoff: cfg.eps },
                ExitProcess { start: coarse.lifetime, cutoff: cfg.eps },
                ExitProcess { start: fine.lifetime, cutoff: 4.0 * cfg.eps },
            ];
            let e = exit_coupled(&params, &procs, 0.0, cap, DEFAULT_POINT_BUDGET, r)?;
            Ok([e[0].max, e[1].max, e[2].max])
        })?;
        for &y in &cfg.y_grid {
            let ind: Vec<f64> = tops.iter().map(|&m| (m >= y) as u8 as f64).collect();
            let (p, se) = batch_means(&ind, BATCHES);
            let frac = |j: usize| refine.iter().filter(|m| m[j] >= y).count() as f64 / cfg.n as f64;
            let (pf, pc, pe) = (frac(0), frac(1), frac(2));
            let allow = richardson_allowance(pf, pc, 2.0, 0.5) + richardson_allowance(pf, pe, 4.0, eps_order(cfg.alpha));
            cells.push(CellReport::new(format!("a={a} y={y}"), p, params.clade_survival(a, y), se, allow, k));
        }
    }
    let mut rep = TestReport::from_cells("lifetime_law", cfg.n, k, seed, started, cells);
    rep.negative_control = cfg.block_shift != 0.0;
    Ok(rep)
}

/// Euler absorption times against `InverseGamma(1+α, z0/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionTime {
    pub alpha_grid: Vec<f64>,
    pub z0: f64,
    pub n: usize,
    pub dt: f64,
    /// Threshold on the KS distance before the discretization allowance.
    pub ks_max: f64,
    /// Added to `α` of the reference law (negative control).
    pub reference_shift: f64,
    pub mode: ProcessingMode,
}

impl Default for AbsorptionTime {
    fn default() -> Self {
        AbsorptionTime { alpha_grid: vec![0.3, 0.5, 0.7], z0: 1.0, n: 10_000, dt: 1e-4, ks_max: 0.02, reference_shift: 0.0, mode: ProcessingMode::Parallel }
    }
}

pub fn test_absorption_time(cfg: &AbsorptionTime, seed: u64) -> Result<TestReport> {
    let started = Instant::now();
    let mut cells = Vec::new();
    for (i, &alpha) in cfg.alpha_grid.iter().enumerate() {
        let params = DiffusionParams::besq(alpha)?;
        let a = params.mass(cfg.z0);
        let pairs = replicates(cfg.mode, cfg.n, seed, &format!("absorption/{i}"), |r| {
            let (f, c) = simulate_block_diffusion_coupled(&params, a, cfg.dt, r)?;
            Ok((f.lifetime, c.lifetime))
        })?;
        let fine: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let coarse: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let shape = 1.0 + alpha + cfg.reference_shift;
        let (d, _) = ks_one_sample(&fine, |t| inverse_gamma_cdf(shape, cfg.z0 / 2.0, t));
        let (dfc, _) = ks_two_sample(&fine, &coarse);
        let allow = cfg.ks_max + dfc / (2f64.sqrt() - 1.0);
        cells.push(CellReport::new(format!("alpha={alpha}"), d, 0.0, 0.0, allow, 0.0));
    }
    let mut rep = TestReport::from_cells("absorption_time", cfg.n, 0.0, seed, started, cells);
    rep.negative_control = cfg.reference_shift != 0.0;
    Ok(rep)
}

/// Laplace transform of the level-0 aggregate mass along inverse local time.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorLaw {
    pub alpha: f64,
    pub q_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub n: usize,
    /// Coarse and fine cutoffs for the extrapolation.
    pub eps: (f64, f64),
    pub teleport: f64,
    /// Added to `α` in the reference exponent (negative control).
    pub reference_shift: f64,
    pub mode: ProcessingMode,
}

impl Default for SubordinatorLaw {
    fn default() -> Self {
        SubordinatorLaw {
            alpha: 0.5,
            q_grid: vec![1.0, 2.0],
            s_grid: vec![0.5, 1.0],
            lambda_grid: vec![0.2, 0.5, 1.0, 2.0],
            n: 20_000,
            eps: (1e-2, 1e-3),
            teleport: 1000.0,
            reference_shift: 0.0,
            mode: ProcessingMode::Parallel,
        }
    }
}

/// `E[exp(-λ M)]` at local time `s` with its batch SE. The local time of a
/// truncated scaffolding moves in steps of `1/slope`, so the estimate is
/// interpolated geometrically between the two neighbouring lattice points.
fn lattice_laplace(runs: &[Vec<f64>], slope: f64, s: f64, lambda: f64) -> (f64, f64) {
    let x = s * slope;
    let n0 = x.floor() as usize;
    let f = x - n0 as f64;
    let est = |rs: &[Vec<f64>]| {
        let e0 = mean(&rs.iter().map(|m| (-lambda * m[..n0].iter().sum::<f64>()).exp()).collect::<Vec<_>>());
        let e1 = mean(&rs.iter().map(|m| (-lambda * m[..n0 + 1].iter().sum::<f64>()).exp()).collect::<Vec<_>>());
        e0.powf(1.0 - f) * e1.powf(f)
    };
    let per = runs.len() / BATCHES;
    let b: Vec<f64> = runs.chunks_exact(per.max(1)).take(BATCHES).map(est).collect();
    (est(runs), batch_means(&b, b.len()).1)
}

pub fn test_aggregate_mass_subordinator(cfg: &SubordinatorLaw, seed: u64) -> Result<TestReport> {
    let started = Instant::now();
    let smax = cfg.s_grid.iter().copied().fold(0.0, f64::max);
    let k = bonferroni_k(cfg.q_grid.len() * cfg.s_grid.len() * cfg.lambda_grid.len());
    let order = eps_order(cfg.alpha);
    let ratio = cfg.eps.0 / cfg.eps.1;
    let r = ratio.powf(-order);
    let mut cells = Vec::new();
    for (iq, &q) in cfg.q_grid.iter().enumerate() {
        let params = DiffusionParams::new(cfg.alpha, q, 1.0)?;
        let mut est = Vec::new();
        for (ie, &eps) in [cfg.eps.0, cfg.eps.1].iter().enumerate() {
            let sc = SweepConfig { eps, teleport: cfg.teleport, ..Default::default() };
            let slope = ExcursionMeasureTable::new(params).drift(eps);
            let visits = (smax * slope).floor() as usize + 1;
            let runs = replicates(cfg.mode, cfg.n, seed, &format!("subordinator/{iq}/{ie}"), |rr| {
                Ok(level_zero_masses(&params, &sc, visits, rr)?.masses)
            })?;
            let mut by_cell = Vec::new();
            for &s in &cfg.s_grid {
                for &lambda in &cfg.lambda_grid {
                    by_cell.push(lattice_laplace(&runs, slope, s, lambda));
                }
            }
            est.push(by_cell);
        }
        let mut j = 0;
        for &s in &cfg.s_grid {
            for &lambda in &cfg.lambda_grid {
                let (ea, sa) = est[0][j];
                let (eb, sb) = est[1][j];
                j += 1;
                let e0 = (eb - r * ea) / (1.0 - r);
                let se0 = (sb * sb + r * r * sa * sa).sqrt() / (1.0 - r);
                let reference = (-s * lambda.powf((cfg.alpha + cfg.reference_shift) / q)).exp();
                let mut c = CellReport::new(format!("q={q} s={s} lambda={lambda}"), e0, reference, se0, 0.0, k);
                c.cross_check = Some(eb);
                cells.push(c);
            }
        }
    }
    let mut rep = TestReport::from_cells("aggregate_mass_subordinator", cfg.n, k, seed, started, cells);
    rep.negative_control = cfg.reference_shift != 0.0;
    Ok(rep)
}

/// Two-sided exit of the scaffolding from `[0, y]` against `(1 - x/y)^α`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitProbability {
    pub alpha: f64,
    pub pairs: Vec<(f64, f64)>,
    pub n: usize,
    pub eps: f64,
    pub reference_shift: f64,
    pub mode: ProcessingMode,
}

impl Default for ExitProbability {
    fn default() -> Self {
        ExitProbability {
            alpha: 0.5,
            pairs: vec![(0.1, 1.0), (0.25, 1.0), (0.5, 1.0), (0.75, 1.0), (0.9, 1.0), (0.5, 2.0)],
            n: 10_000,
            eps: 1e-3,
            reference_shift: 0.0,
            mode: ProcessingMode::Parallel,
        }
    }
}

pub fn test_exit_probability(cfg: &ExitProbability, seed: u64) -> Result<TestReport> {
    let started = Instant::now();
    let params = DiffusionParams::besq(cfg.alpha)?;
    let k = bonferroni_k(cfg.pairs.len());
    let mut cells = Vec::new();
    for (i, &(x, y)) in cfg.pairs.iter().enumerate() {
        if !(0.0 < x && x < y) {
            return Err(Error::param(format!("need 0 < x < y, got x={x} y={y}")));
        }
        let procs = [ExitProcess { start: x, cutoff: cfg.eps }, ExitProcess { start: x, cutoff: 4.0 * cfg.eps }];
        let out = replicates(cfg.mode, cfg.n, seed, &format!("exit/{i}"), |r| {
            let e = exit_coupled(&params, &procs, 0.0, y, DEFAULT_POINT_BUDGET, r)?;
            Ok((e[0].below as u8 as f64, e[1].below as u8 as f64))
        })?;
        let fine: Vec<f64> = out.iter().map(|o| o.0).collect();
        let (p, se) = batch_means(&fine, BATCHES);
        let pc = mean(&out.iter().map(|o| o.1).collect::<Vec<_>>());
        let allow = richardson_allowance(p, pc, 4.0, eps_order(cfg.alpha));
        let reference = (1.0 - x / y).powf(cfg.alpha + cfg.reference_shift);
        cells.push(CellReport::new(format!("x={x} y={y}"), p, reference, se, allow, k));
    }
    let mut rep = TestReport::from_cells("exit_probability", cfg.n, k, seed, started, cells);
    rep.negative_control = cfg.reference_shift != 0.0;
    Ok(rep)
}

/// The diversity estimator on level-0 skewers against exact local-time marks.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityLocalTime {
    pub alpha: f64,
    pub q: f64,
    pub runs: usize,
    pub eps: f64,
    /// Local time at which each run stops.
    pub local_time: f64,
    /// Smallest bandwidth as a multiple of the cutoff.
    pub h_min_factor: f64,
    /// Bandwidth range `h_max / h_min`.
    pub h_range: f64,
    pub teleport: f64,
    pub max_median_error: f64,
    /// Pair each estimate with the exact value of another evaluation point (negative control).
    pub shuffle: bool,
    pub mode: ProcessingMode,
}

impl Default for DiversityLocalTime {
    fn default() -> Self {
        DiversityLocalTime {
            alpha: 0.5,
            q: 1.0,
            runs: 100,
            eps: 1e-4,
            local_time: 30.0,
            h_min_factor: 5.0,
            h_range: 1000.0,
            teleport: 1000.0,
            max_median_error: 0.05,
            shuffle: false,
            mode: ProcessingMode::Parallel,
        }
    }
}

pub fn test_diversity_localtime(cfg: &DiversityLocalTime, seed: u64) -> Result<TestReport> {
    let started = Instant::now();
    let params = DiffusionParams::new(cfg.alpha, cfg.q, 1.0)?;
    let sc = SweepConfig { eps: cfg.eps, teleport: cfg.teleport, ..Default::default() };
    let hmin = cfg.h_min_factor * cfg.eps;
    let grid = ip::log_grid(hmin * cfg.h_range, hmin, 25);
    let fractions = [0.5, 0.75, 1.0];
    let errs = replicates(cfg.mode, cfg.runs, seed, "diversity", |r| {
        let slope = ExcursionMeasureTable::new(params).drift(cfg.eps);
        let lz = level_zero_masses(&params, &sc, (cfg.local_time * slope).floor() as usize, r)?;
        let marks: Vec<f64> = (0..lz.masses.len()).map(|k| lz.mark(k)).collect();
        let beta = IntervalPartition::with_marks(params.alpha_div(), &lz.masses, &marks, lz.total_local_time())?;
        let mut pts = Vec::new();
        for f in fractions {
            // Mass coordinate of the left end of the first block past local time f·S.
            let kth = marks.partition_point(|&m| m <= f * cfg.local_time);
            let t: f64 = lz.masses[..kth].iter().sum();
            let exact = beta.diversity_at(t).unwrap_or(0.0);
            let est = ip::diversity_estimate(&beta, t, &grid)?.estimate;
            pts.push((est, exact));
        }
        if cfg.shuffle {
            let exact: Vec<f64> = pts.iter().map(|p| p.1).collect();
            for (i, p) in pts.iter_mut().enumerate() {
                p.1 = exact[(i + 1) % exact.len()];
            }
        }
        Ok(pts.iter().map(|&(e, x)| ((e - x) / x).abs()).collect::<Vec<f64>>())
    })?;
    let all: Vec<f64> = errs.into_iter().flatten().collect();
    let med = median(&all);
    let cell = CellReport::new("median relative error", med, 0.0, 0.0, cfg.max_median_error, 0.0);
    let mut rep = TestReport::from_cells("diversity_localtime", cfg.runs, 0.0, seed, started, vec![cell]);
    rep.negative_control = cfg.shuffle;
    Ok(rep)
}

/// Tail exponent of the block-diffusion amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeTail {
    pub alpha: f64,
    pub a: f64,
    pub n: usize,
    pub dt: f64,
    pub m_range: (f64, f64),
    pub tolerance: f64,
    pub mode: ProcessingMode,
}

impl Default for AmplitudeTail {
    fn default() -> Self {
        AmplitudeTail { alpha: 0.5, a: 1.0, n: 100_000, dt: 1e-4, m_range: (2.0, 20.0), tolerance: 0.05, mode: ProcessingMode::Parallel }
    }
}

pub fn test_amplitude_tail(cfg: &AmplitudeTail, seed: u64) -> Result<TestReport> {
    let started = Instant::now();
    let params = DiffusionParams::besq(cfg.alpha)?;
    let (m_lo, m_hi) = (cfg.m_range.0 * cfg.a, cfg.m_range.1 * cfg.a);
    let amps = replicates(cfg.mode, cfg.n, seed, "amplitude", |r| block_amplitude_capped(&params, cfg.a, cfg.dt, m_hi, r))?;
    let ms: Vec<f64> = ip::log_grid(m_hi, m_lo, 10);
    let fit = |xs: &[f64]| {
        let n = xs.len() as f64;
        let lx: Vec<f64> = ms.iter().map(|m| m.ln()).collect();
        let ly: Vec<f64> = ms.iter().map(|&m| (xs.iter().filter(|&&a| a >= m).count() as f64 / n).max(0.5 / n).ln()).collect();
        linear_fit(&lx, &ly).0
    };
    let slope = fit(&amps);
    let per = amps.len() / BATCHES;
    let bs: Vec<f64> = amps.chunks_exact(per.max(1)).take(BATCHES).map(fit).collect();
    let (_, se) = batch_means(&bs, bs.len());
    let cell = CellReport::new("log-log tail slope", slope, -(1.0 + cfg.alpha), se, cfg.tolerance, 0.0);
    Ok(TestReport::from_cells("amplitude_tail", cfg.n, 0.0, seed, started, vec![cell]))
}

/// `evolve` against `transition_sample` in law at fixed levels.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    pub alpha: f64,
    pub initial: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub n: usize,
    pub evolve: EvolveConfig,
    pub p_min: f64,
}

impl Default for TransitionKernel {
    fn default() -> Self {
        TransitionKernel {
            alpha: 0.5,
            initial: vec![0.6, 0.3, 0.1],
            y_grid: vec![0.5, 1.0],
            n: 10_000,
            evolve: EvolveConfig { eps: 2e-3, block: BlockSampler::Exact, n_grid: 32, ..Default::default() },
            p_min: 0.01,
        }
    }
}

pub fn test_transition_kernel(cfg: &TransitionKernel, seed: u64) -> Result<TestReport> {
    let started = Instant::now();
    let params = DiffusionParams::besq(cfg.alpha)?;
    let beta = IntervalPartition::from_masses(params.alpha_div(), &cfg.initial)?;
    // Replicates are the parallel unit; each one runs its blocks in order.
    let ecfg = EvolveConfig { mode: ProcessingMode::Sequential, ..cfg.evolve };
    let stat = |p: &IntervalPartition| (p.total_mass(), p.len() as f64);
    let evo = replicates(cfg.evolve.mode, cfg.n, seed, "kernel/evolve", |r| {
        let path = evolve_seeded(&beta, &params, &cfg.y_grid, &ecfg, r.random())?;
        Ok(path.snapshots.iter().map(|s| stat(&s.partition)).collect::<Vec<_>>())
    })?;
    let mut cells = Vec::new();
    let crit = ks_critical(cfg.p_min, cfg.n, cfg.n);
    for (j, &y) in cfg.y_grid.iter().enumerate() {
        let tr = replicates(cfg.evolve.mode, cfg.n, seed, &format!("kernel/transition/{j}"), |r| {
            Ok(stat(&transition_sample(&beta, y, &params, &ecfg, r)?))
        })?;
        let a_mass: Vec<f64> = evo.iter().map(|v| v[j].0).collect();
        let b_mass: Vec<f64> = tr.iter().map(|v| v.0).collect();
        let a_cnt: Vec<f64> = evo.iter().map(|v| v[j].1).collect();
        let b_cnt: Vec<f64> = tr.iter().map(|v| v.1).collect();
        let (d1, _) = ks_two_sample(&a_mass, &b_mass);
        let (d2, _) = ks_two_sample(&a_cnt, &b_cnt);
        cells.push(CellReport::new(format!("y={y} total mass KS"), d1, 0.0, 0.0, crit, 0.0));
        cells.push(CellReport::new(format!("y={y} block count KS"), d2, 0.0, 0.0, crit, 0.0));
    }
    Ok(TestReport::from_cells("transition_kernel", cfg.n, 0.0, seed, started, cells))
}

/// Bi-clade round trips and the aggregate-mass identity on sampled processes.
#[derive(Debug, Clone, PartialEq)]
pub struct CladeExactness {
    pub alpha: f64,
    pub processes: usize,
    pub eps: f64,
    pub horizon: f64,
    pub mode: ProcessingMode,
}

impl Default for CladeExactness {
    fn default() -> Self {
        CladeExactness { alpha: 0.5, processes: 100, eps: 1e-2, horizon: 1.0, mode: ProcessingMode::Parallel }
    }
}

pub fn test_clade_exactness(cfg: &CladeExactness, seed: u64) -> Result<TestReport> {
    let started = Instant::now();
    let params = DiffusionParams::besq(cfg.alpha)?;
    let out = replicates(cfg.mode, cfg.processes, seed, "clade-exact", |r| {
        let pp = sample_prm(&params, cfg.eps, cfg.horizon, DEFAULT_POINT_BUDGET, r)?.materialize();
        let x = Scaffolding::of(&pp);
        let y = x.min() + (x.max() - x.min()) * r.random::<f64>();
        let bcs = decompose_biclades(&pp, y);
        let mut parts = Vec::with_capacity(bcs.len());
        for b in &bcs {
            let (anti, clade) = split_biclade(b)?;
            parts.push(crate::clade::reassemble_biclade(&anti, &clade)?);
        }
        let round_trip = parts == bcs && reassemble_process(&pp, &parts)?.materialize() == pp;
        // Running sum of central masses against aggregate mass at each bi-clade end.
        let mut acc = 0.0;
        let mut worst: f64 = 0.0;
        for b in &bcs {
            acc += b.m0;
            let m = aggregate_mass(&pp, y, b.origin + b.length());
            worst = worst.max((acc - m).abs() / m.max(1e-300).max(acc));
        }
        Ok((round_trip, worst))
    })?;
    let failures = out.iter().filter(|o| !o.0).count() as f64;
    let worst = out.iter().map(|o| o.1).fold(0.0, f64::max);
    let cells = vec![
        CellReport::new("round-trip failures", failures, 0.0, 0.0, 0.0, 0.0),
        CellReport::new("aggregate mass relative error", worst, 0.0, 0.0, 1e-9, 0.0),
    ];
    Ok(TestReport::from_cells("clade_exactness", cfg.processes, 0.0, seed, started, cells))
}

/// Laplace transform of the total mass of single-block evolutions against
/// the BESQ(0) transition `exp(-λa/(1+2λy))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalMassBesq0 {
    pub alpha: f64,
    pub a: f64,
    pub y_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub n: usize,
    pub eps: (f64, f64),
    /// Step of the independent BESQ(0) Euler oracle.
    pub oracle_dt: f64,
    pub mode: ProcessingMode,
}

impl Default for TotalMassBesq0 {
    fn default() -> Self {
        TotalMassBesq0 {
            alpha: 0.5,
            a: 1.0,
            y_grid: vec![0.25, 0.5, 1.0],
            lambda_grid: vec![0.5, 1.0, 2.0],
            n: 10_000,
            eps: (1e-2, 1e-3),
            oracle_dt: 1e-3,
            mode: ProcessingMode::Parallel,
        }
    }
}

fn besq0_euler<R: Rng + ?Sized>(a: f64, levels: &[f64], dt: f64, rng: &mut R) -> Vec<f64> {
    let mut z = a;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(levels.len());
    for &y in levels {
        while t < y - 1e-12 {
            let h = dt.min(y - t);
            let db: f64 = h.sqrt() * rng.sample::<f64, _>(StandardNormal);
            z = (z + 2.0 * z.sqrt() * db).max(0.0);
            t += h;
        }
        out.push(z);
    }
    out
}

pub fn test_total_mass_besq0(cfg: &TotalMassBesq0, seed: u64) -> Result<TestReport> {
    let started = Instant::now();
    let params = DiffusionParams::besq(cfg.alpha)?;
    let beta = IntervalPartition::from_masses(params.alpha_div(), &[cfg.a])?;
    let mut levels = cfg.y_grid.clone();
    levels.sort_by(f64::total_cmp);
    let k = bonferroni_k(levels.len() * cfg.lambda_grid.len());
    let r = (cfg.eps.0 / cfg.eps.1).powf(-(1.0 - cfg.alpha));
    let mut masses = Vec::new();
    for (ie, &eps) in [cfg.eps.0, cfg.eps.1].iter().enumerate() {
        let ecfg = EvolveConfig { eps, block: BlockSampler::Exact, n_grid: 64, budget: DEFAULT_POINT_BUDGET, mode: ProcessingMode::Sequential };
        masses.push(replicates(cfg.mode, cfg.n, seed, &format!("besq0/{ie}"), |rr| {
            let path = evolve_seeded(&beta, &params, &levels, &ecfg, rr.random())?;
            Ok(path.snapshots.iter().map(|s| s.partition.total_mass()).collect::<Vec<f64>>())
        })?);
    }
    let oracle = replicates(cfg.mode, cfg.n, seed, "besq0/oracle", |rr| Ok(besq0_euler(cfg.a, &levels, cfg.oracle_dt, rr)))?;
    let mut cells = Vec::new();
    for (j, &y) in levels.iter().enumerate() {
        for &lambda in &cfg.lambda_grid {
            let lt = |v: &Vec<Vec<f64>>| batch_means(&v.iter().map(|m| (-lambda * m[j]).exp()).collect::<Vec<_>>(), BATCHES);
            let (ea, sa) = lt(&masses[0]);
            let (eb, sb) = lt(&masses[1]);
            let e0 = (eb - r * ea) / (1.0 - r);
            let se0 = (sb * sb + r * r * sa * sa).sqrt() / (1.0 - r);
            let reference = (-lambda * cfg.a / (1.0 + 2.0 * lambda * y)).exp();
            let mut c = CellReport::new(format!("y={y} lambda={lambda}"), e0, reference, se0, 0.0, k);
            c.cross_check = Some(lt(&oracle).0);
            cells.push(c);
        }
    }
    let mut rep = TestReport::from_cells("total_mass_besq0", cfg.n, k, seed, started, cells);
    rep.cited_forward = true;
    Ok(rep)
}

/// Which checks a suite runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Every law check, the exactness check and all negative controls.
    All,
    /// Law checks only.
    Laws,
    /// Negative controls only.
    Controls,
    /// The pathwise exactness check.
    Exact,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Suite::All),
            "laws" => Ok(Suite::Laws),
            "controls" => Ok(Suite::Controls),
            "exact" => Ok(Suite::Exact),
            _ => Err(Error::param(format!("unknown suite {s:?}; expected all, laws, controls or exact"))),
        }
    }
}

/// Shared knobs for a suite run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    /// Multiplies every sample size (floored at the minimum a check accepts).
    pub scale: f64,
    pub mode: ProcessingMode,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { scale: 1.0, mode: ProcessingMode::Parallel }
    }
}

fn scaled(n: usize, scale: f64, min: usize) -> usize {
    ((n as f64 * scale).round() as usize).max(min)
}

/// Run a suite. Each check derives its own streams from `seed`.
pub fn suite(which: Suite, seed: u64, opts: &SuiteOptions) -> Result<Vec<TestReport>> {
    let s = opts.scale;
    let mode = opts.mode;
    let lifetime = LifetimeLaw { n: scaled(10_000, s, 1000), mode, ..Default::default() };
    let absorption = AbsorptionTime { n: scaled(10_000, s, 100), mode, ..Default::default() };
    let subord = SubordinatorLaw { n: scaled(20_000, s, 300), mode, ..Default::default() };
    let exit = ExitProbability { n: scaled(10_000, s, 300), mode, ..Default::default() };
    let diversity = DiversityLocalTime { runs: scaled(100, s, 10), mode, ..Default::default() };
    let amplitude = AmplitudeTail { n: scaled(100_000, s, 3000), mode, ..Default::default() };
    let kernel = TransitionKernel { n: scaled(10_000, s, 300), evolve: EvolveConfig { mode, ..TransitionKernel::default().evolve }, ..Default::default() };
    let exact = CladeExactness { processes: scaled(100, s, 10), mode, ..Default::default() };
    let besq0 = TotalMassBesq0 { n: scaled(10_000, s, 300), mode, ..Default::default() };

    let laws = matches!(which, Suite::All | Suite::Laws);
    let controls = matches!(which, Suite::All | Suite::Controls);
    let mut out = Vec::new();
    if laws {
        out.push(test_lifetime_law(&lifetime, seed)?);
        out.push(test_absorption_time(&absorption, seed)?);
        out.push(test_aggregate_mass_subordinator(&subord, seed)?);
        out.push(test_exit_probability(&exit, seed)?);
        out.push(test_diversity_localtime(&diversity, seed)?);
        out.push(test_amplitude_tail(&amplitude, seed)?);
        out.push(test_transition_kernel(&kernel, seed)?);
    }
    if matches!(which, Suite::All | Suite::Exact) {
        out.push(test_clade_exactness(&exact, seed)?);
    }
    if laws {
        out.push(test_total_mass_besq0(&besq0, seed)?);
    }
    if controls {
        out.extend(negative_controls(seed, &lifetime, &absorption, &subord, &exit, &diversity)?);
    }
    Ok(out)
}

/// Misspecified variants of the law checks; each is expected to fail.
pub fn negative_controls(
    seed: u64,
    lifetime: &LifetimeLaw,
    absorption: &AbsorptionTime,
    subord: &SubordinatorLaw,
    exit: &ExitProbability,
    diversity: &DiversityLocalTime,
) -> Result<Vec<TestReport>> {
    let tag = |mut r: TestReport| {
        r.name.push_str("/control");
        r
    };
    Ok(vec![
        tag(test_lifetime_law(&LifetimeLaw { block_shift: 0.1, ..lifetime.clone() }, seed)?),
        tag(test_absorption_time(&AbsorptionTime { reference_shift: 0.1, ..absorption.clone() }, seed)?),
        tag(test_aggregate_mass_subordinator(&SubordinatorLaw { reference_shift: 0.1, ..subord.clone() }, seed)?),
        tag(test_exit_probability(&ExitProbability { reference_shift: 0.1, ..exit.clone() }, seed)?),
        tag(test_diversity_localtime(&DiversityLocalTime { shuffle: true, ..diversity.clone() }, seed)?),
    ])
}

/// Reports with the timing field cleared, for reproducibility comparisons.
pub fn without_timing(reports: &[TestReport]) -> Vec<TestReport> {
    reports.iter().cloned().map(|mut r| {
        r.runtime = 0.0;
        r
    }).collect()
}

/// Draw a master seed for a check from a caller's generator.
pub fn seed_from<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_half_order() {
        // Bias ∝ √h: fine 1 + √h, coarse 1 + √(4h) gives bias √h.
        let h: f64 = 0.01;
        let a = richardson_allowance(1.0 + h.sqrt(), 1.0 + (4.0 * h).sqrt(), 4.0, 0.5);
        assert!((a - h.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ks_critical_inverts_p_value() {
        let d = ks_critical(0.01, 1000, 1000);
        let ne: f64 = 500.0;
        let p = kolmogorov_q((ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d);
        assert!((p - 0.01).abs() < 1e-6);
    }

    #[test]
    fn small_suite_is_reproducible() {
        let exit = ExitProbability { n: 300, eps: 1e-3, pairs: vec![(0.5, 1.0)], ..Default::default() };
        let a = test_exit_probability(&exit, 11).unwrap();
        let b = test_exit_probability(&ExitProbability { mode: ProcessingMode::Sequential, ..exit.clone() }, 11).unwrap();
        assert_eq!(without_timing(&[a]), without_timing(&[b]));
    }

    #[test]
    fn clade_exactness_small() {
        let r = test_clade_exactness(&CladeExactness { processes: 5, eps: 0.05, ..Default::default() }, 2).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
