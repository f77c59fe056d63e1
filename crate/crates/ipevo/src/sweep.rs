//! Streaming scaffolding simulations that never store a point process.
//!
//! [`exit_coupled`] runs several truncated scaffoldings off one Poisson
//! random measure: process `j` keeps only jumps above its own cutoff and
//! compensates with its own drift, so cutoff and start-point effects are
//! measured on common randomness. [`level_zero_masses`] reads the level-0
//! skewer of a scaffolding started at 0, one excursion below 0 at a time.

use crate::error::{Error, Result};
use crate::scaffold::sample_truncated_lifetime;
use crate::spindle::{unit_excursion_marginal, DiffusionParams, ExcursionMeasureTable};
use rand::Rng;
use rand_distr::Exp1;

/// One member of a coupled family: start level and lifetime cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitProcess {
    pub start: f64,
    pub cutoff: f64,
}

/// How a process left `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exit {
    /// Reached `lo` by drifting down.
    pub below: bool,
    /// Largest value before exit, including the overshooting jump.
    pub max: f64,
}

/// Run every process until it drifts down to `lo` or jumps above `hi`.
/// Processes starting outside `(lo, hi)` exit at once.
pub fn exit_coupled<R: Rng + ?Sized>(
    params: &DiffusionParams,
    procs: &[ExitProcess],
    lo: f64,
    hi: f64,
    budget: usize,
    rng: &mut R,
) -> Result<Vec<Exit>> {
    if !(lo < hi) {
        return Err(Error::param(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    if procs.iter().any(|p| !(p.cutoff > 0.0 && p.cutoff.is_finite())) {
        return Err(Error::param("cutoffs must be positive and finite"));
    }
    let table = ExcursionMeasureTable::new(*params);
    let eps = procs.iter().map(|p| p.cutoff).fold(f64::INFINITY, f64::min);
    let rate = table.jump_rate(eps);
    let slopes: Vec<f64> = procs.iter().map(|p| table.drift(p.cutoff)).collect();
    let mut x: Vec<f64> = procs.iter().map(|p| p.start).collect();
    let mut out: Vec<Option<Exit>> = x
        .iter()
        .map(|&v| {
            if v <= lo {
                Some(Exit { below: true, max: v })
            } else if v >= hi {
                Some(Exit { below: false, max: v })
            } else {
                None
            }
        })
        .collect();
    let mut maxes = x.clone();
    let mut live = out.iter().filter(|o| o.is_none()).count();
    let mut n = 0usize;
    while live > 0 {
        let dt = rng.sample::<f64, _>(Exp1) / rate;
        let z = sample_truncated_lifetime(params.alpha, eps, rng);
        for j in 0..procs.len() {
            if out[j].is_some() {
                continue;
            }
            x[j] -= slopes[j] * dt;
            if x[j] <= lo {
                out[j] = Some(Exit { below: true, max: maxes[j] });
                live -= 1;
                continue;
            }
            if z > procs[j].cutoff {
                x[j] += z;
                maxes[j] = maxes[j].max(x[j]);
                if x[j] >= hi {
                    out[j] = Some(Exit { below: false, max: x[j] });
                    live -= 1;
                }
            }
        }
        n += 1;
        if n > budget {
            return Err(Error::Budget(format!("exit simulation exceeded {budget} jumps")));
        }
    }
    Ok(out.into_iter().map(|o| o.expect("all exited")).collect())
}

/// Undershoot ratio `w = y/x` at first passage of the untruncated
/// scaffolding over a level `x` above its start: density
/// `∝ (1 - (1-w)_+^α) w^{-1-α}` on `(0, ∞)`.
pub fn stable_undershoot<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    // Envelope w^{-α} on (0,1) and w^{-1-α} on (1,∞), masses 1/(1-α) and 1/α.
    let p_low = (1.0 / (1.0 - alpha)) / (1.0 / (1.0 - alpha) + 1.0 / alpha);
    loop {
        if rng.random::<f64>() < p_low {
            let w = (1.0 - rng.random::<f64>()).powf(1.0 / (1.0 - alpha));
            if rng.random::<f64>() * w < 1.0 - (1.0 - w).powf(alpha) {
                return w;
            }
        } else {
            return (1.0 - rng.random::<f64>()).powf(-1.0 / alpha);
        }
    }
}

/// Settings of the level-0 sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub eps: f64,
    /// Below `-teleport·eps` the path jumps straight to its first passage
    /// over half that depth, drawn from the untruncated law.
    pub teleport: f64,
    pub budget: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { eps: 1e-3, teleport: 1000.0, budget: 1_000_000_000 }
    }
}

/// Level-0 skewer of a scaffolding started at 0, as block masses in order.
/// Block `k` (from 0) has diversity mark `(k+1)/slope`: every visit to 0
/// adds `1/slope` of local time and is followed by one crossing of 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelZero {
    pub slope: f64,
    pub masses: Vec<f64>,
}

impl LevelZero {
    pub fn mark(&self, k: usize) -> f64 {
        (k + 1) as f64 / self.slope
    }

    /// Local time after the last block, once the path is back at 0.
    pub fn total_local_time(&self) -> f64 {
        self.mark(self.masses.len())
    }

    /// Aggregate mass of the blocks with mark at most `s`.
    pub fn mass_until(&self, s: f64) -> f64 {
        let n = self.visits_until(s).min(self.masses.len());
        self.masses[..n].iter().sum()
    }

    /// Number of crossings whose mark is at most `s`.
    pub fn visits_until(&self, s: f64) -> usize {
        (s * self.slope + 1e-9).floor().max(0.0) as usize
    }
}

/// Blocks read at level 0 over `n_visits` visits to 0.
pub fn level_zero_masses<R: Rng + ?Sized>(
    params: &DiffusionParams,
    cfg: &SweepConfig,
    n_visits: usize,
    rng: &mut R,
) -> Result<LevelZero> {
    if !(cfg.eps > 0.0 && cfg.eps.is_finite()) {
        return Err(Error::param(format!("cutoff must be positive, got {}", cfg.eps)));
    }
    if !(cfg.teleport >= 2.0) {
        return Err(Error::param("teleport depth must be at least 2 cutoffs"));
    }
    let table = ExcursionMeasureTable::new(*params);
    let slope = table.drift(cfg.eps);
    let rate = table.jump_rate(cfg.eps);
    let depth = cfg.teleport * cfg.eps;
    let a = params.alpha;
    let mut masses = Vec::with_capacity(n_visits);
    let mut jumps = 0usize;
    for _ in 0..n_visits {
        let mut x = 0.0f64;
        let (pre, z) = loop {
            if x < -depth {
                let target = 0.5 * x;
                let y = (target - x) * stable_undershoot(a, rng);
                let pre = target - y;
                let z = y * (1.0 - rng.random::<f64>()).powf(-1.0 / (1.0 + a));
                if pre + z > 0.0 {
                    break (pre, z);
                }
                x = pre + z;
                continue;
            }
            x -= slope * rng.sample::<f64, _>(Exp1) / rate;
            let z = sample_truncated_lifetime(a, cfg.eps, rng);
            if x + z > 0.0 {
                break (x, z);
            }
            x += z;
            jumps += 1;
            if jumps > cfg.budget {
                return Err(Error::Budget(format!("level-0 sweep exceeded {} jumps", cfg.budget)));
            }
        };
        let w = -pre / z;
        masses.push(params.mass(z * unit_excursion_marginal(a, w, rng)));
    }
    Ok(LevelZero { slope, masses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn undershoot_density(a: f64, w: f64) -> f64 {
        (1.0 - (1.0 - w).max(0.0).powf(a)) * w.powf(-1.0 - a)
    }

    // Midpoint rule after w = v^2 on (0,1) and w = 1/v^(1/a) on (1,∞).
    fn integrate(a: f64, f: impl Fn(f64) -> f64) -> f64 {
        let n = 200_000;
        let mut s = 0.0;
        for i in 0..n {
            let v = (i as f64 + 0.5) / n as f64;
            s += f(v * v) * undershoot_density(a, v * v) * 2.0 * v / n as f64;
            let w = v.powf(-1.0 / a);
            s += f(w) * undershoot_density(a, w) * w / (a * v) / n as f64;
        }
        s
    }

    #[test]
    fn undershoot_normalization() {
        for a in [0.3, 0.5, 0.7] {
            let z = integrate(a, |_| 1.0);
            assert!((z - PI / (PI * a).sin()).abs() < 2e-3 * z, "{a}: {z}");
        }
    }

    #[test]
    fn undershoot_sampler_matches_density() {
        let a = 0.5;
        let z = integrate(a, |_| 1.0);
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        for cut in [0.25, 1.0, 4.0] {
            let p = integrate(a, |w| if w <= cut { 1.0 } else { 0.0 }) / z;
            let emp = (0..n).filter(|_| stable_undershoot(a, &mut r) <= cut).count() as f64 / n as f64;
            assert!((emp - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 2e-3, "{cut}: {emp} vs {p}");
        }
    }

    #[test]
    fn coupled_exit_shares_randomness() {
        let p = DiffusionParams::besq(0.5).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let procs = [ExitProcess { start: 0.5, cutoff: 1e-3 }, ExitProcess { start: 0.5, cutoff: 1e-3 }, ExitProcess { start: 0.5, cutoff: 4e-3 }];
        let mut agree = 0;
        for _ in 0..400 {
            let e = exit_coupled(&p, &procs, 0.0, 1.0, 10_000_000, &mut r).unwrap();
            assert_eq!(e[0], e[1]);
            agree += (e[0].below == e[2].below) as usize;
        }
        assert!(agree > 300, "{agree}");
        let e = exit_coupled(&p, &[ExitProcess { start: 2.0, cutoff: 1e-3 }], 0.0, 1.0, 10, &mut r).unwrap();
        assert!(!e[0].below);
    }

    #[test]
    fn teleport_depth_insensitive() {
        // Mean per-visit Laplace functional with shallow vs deep teleporting.
        let p = DiffusionParams::besq(0.5).unwrap();
        let run = |k: f64, seed: u64| {
            let cfg = SweepConfig { eps: 1e-3, teleport: k, ..Default::default() };
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let lz = level_zero_masses(&p, &cfg, 100_000, &mut r).unwrap();
            lz.masses.iter().map(|m| (-m).exp()).sum::<f64>() / lz.masses.len() as f64
        };
        let (a, b) = (run(50.0, 7), run(2000.0, 8));
        // Per-visit exponent is about 1/slope, so compare the deficits.
        assert!(((1.0 - a) - (1.0 - b)).abs() < 0.1 * (1.0 - b), "{a} {b}");
    }
}
