//! Exact correspondence-distortion distances between finite partitions.
//!
//! For a fixed bound `c` on the two sup-type items (the diversity gaps on
//! matched pairs and the total-diversity gap), the remaining objective
//! `max(A, B)` is minimized by an alignment DP whose cells hold the Pareto
//! frontier of `(A, B)`, where `A = Σ|Δmass| + unmatched β mass` and `B` is the
//! same with unmatched γ mass. The sup items only take finitely many values, so
//! the search over `c` runs over the sorted candidate gaps. This reproduces the
//! infimum exactly, not merely to a bisection tolerance.

use super::IntervalPartition;
use crate::error::{Error, Result};

/// Strictly increasing sequence of matched block index pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Correspondence {
    pairs: Vec<(usize, usize)>,
}

impl Correspondence {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 <= w[0].1) {
            return Err(Error::param("correspondence must be strictly increasing in both coordinates"));
        }
        Ok(Correspondence { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// The four distortion items of this correspondence; items (iii) and (iv)
    /// are `None` unless both partitions carry diversity.
    pub fn distortion(&self, beta: &IntervalPartition, gamma: &IntervalPartition) -> Result<Distortion> {
        let (bb, gb) = (beta.blocks(), gamma.blocks());
        if self.pairs.iter().any(|&(i, j)| i >= bb.len() || j >= gb.len()) {
            return Err(Error::param("correspondence index out of range"));
        }
        let mut diff = 0.0;
        let mut matched_b = vec![false; bb.len()];
        let mut matched_g = vec![false; gb.len()];
        for &(i, j) in &self.pairs {
            diff += (bb[i].mass - gb[j].mass).abs();
            matched_b[i] = true;
            matched_g[j] = true;
        }
        let un_b: f64 = bb.iter().zip(&matched_b).filter(|(_, &m)| !m).map(|(b, _)| b.mass).sum();
        let un_g: f64 = gb.iter().zip(&matched_g).filter(|(_, &m)| !m).map(|(b, _)| b.mass).sum();
        let (sup_div, total_div) = if beta.has_diversity() && gamma.has_diversity() {
            let s = self
                .pairs
                .iter()
                .map(|&(i, j)| (bb[i].div.unwrap_or(0.0) - gb[j].div.unwrap_or(0.0)).abs())
                .fold(0.0, f64::max);
            let t = (beta.total_diversity().unwrap_or(0.0) - gamma.total_diversity().unwrap_or(0.0)).abs();
            (Some(s), Some(t))
        } else {
            (None, None)
        };
        Ok(Distortion { mass_beta: diff + un_b, mass_gamma: diff + un_g, sup_diversity: sup_div, total_diversity: total_div })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    pub mass_beta: f64,
    pub mass_gamma: f64,
    pub sup_diversity: Option<f64>,
    pub total_diversity: Option<f64>,
}

impl Distortion {
    pub fn hausdorff(&self) -> f64 {
        self.mass_beta.max(self.mass_gamma)
    }

    pub fn alpha(&self) -> Option<f64> {
        Some(self.hausdorff().max(self.sup_diversity?).max(self.total_diversity?))
    }
}

/// A distance computed after dropping small blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance {
    pub value: f64,
    /// Additive error bound: the larger of the two dropped tail masses.
    pub error_bound: f64,
}

type Frontier = Vec<(f64, f64)>;

/// Keep the points not dominated by another, sorted by first coordinate.
fn prune(mut pts: Frontier, bound: f64) -> Frontier {
    pts.retain(|&(a, b)| a <= bound && b <= bound);
    pts.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let mut out: Frontier = Vec::with_capacity(pts.len());
    for p in pts {
        match out.last() {
            Some(&(_, lb)) if p.1 >= lb => {}
            _ => out.push(p),
        }
    }
    out
}

/// Minimal `max(A, B)` over correspondences using only pairs with `eligible(i, j)`.
fn min_mass_distortion<F>(bm: &[f64], gm: &[f64], eligible: F, bound: f64) -> f64
where
    F: Fn(usize, usize) -> bool,
{
    let (n, m) = (bm.len(), gm.len());
    let mut prev: Vec<Frontier> = Vec::with_capacity(m + 1);
    let mut acc = 0.0;
    prev.push(vec![(0.0, 0.0)]);
    for &g in gm {
        acc += g;
        prev.push(prune(vec![(0.0, acc)], bound));
    }
    for i in 1..=n {
        let mut cur: Vec<Frontier> = Vec::with_capacity(m + 1);
        let bi = bm[i - 1];
        cur.push(prune(prev[0].iter().map(|&(a, b)| (a + bi, b)).collect(), bound));
        for j in 1..=m {
            let gj = gm[j - 1];
            let mut cand: Frontier = Vec::with_capacity(prev[j].len() + cur[j - 1].len() + prev[j - 1].len());
            cand.extend(prev[j].iter().map(|&(a, b)| (a + bi, b)));
            cand.extend(cur[j - 1].iter().map(|&(a, b)| (a, b + gj)));
            if eligible(i - 1, j - 1) {
                let d = (bi - gj).abs();
                cand.extend(prev[j - 1].iter().map(|&(a, b)| (a + d, b + d)));
            }
            cur.push(prune(cand, bound));
        }
        prev = cur;
    }
    prev[m].iter().map(|&(a, b)| a.max(b)).fold(f64::INFINITY, f64::min)
}

fn mass_bound(beta: &IntervalPartition, gamma: &IntervalPartition) -> f64 {
    // The empty correspondence always achieves max(‖β‖, ‖γ‖).
    let t = beta.total_mass().max(gamma.total_mass());
    t * (1.0 + 1e-12) + 1e-300
}

/// Hausdorff-type distance: items (i) and (ii) only.
pub fn dist_hausdorff(beta: &IntervalPartition, gamma: &IntervalPartition) -> f64 {
    let (bm, gm) = (beta.masses(), gamma.masses());
    min_mass_distortion(&bm, &gm, |_, _| true, mass_bound(beta, gamma))
}

/// Diversity-aware distance: the max of all four items.
pub fn dist_alpha(beta: &IntervalPartition, gamma: &IntervalPartition) -> Result<f64> {
    if !beta.has_diversity() || !gamma.has_diversity() {
        return Err(Error::Undefined("d_α undefined on I_H (no diversity marks); use dist_hausdorff (d_H′)".into()));
    }
    if beta.alpha_div() != gamma.alpha_div() {
        return Err(Error::param("partitions have different alpha_div"));
    }
    let (bm, gm) = (beta.masses(), gamma.masses());
    let bd: Vec<f64> = beta.blocks().iter().map(|b| b.div.unwrap_or(0.0)).collect();
    let gd: Vec<f64> = gamma.blocks().iter().map(|b| b.div.unwrap_or(0.0)).collect();
    let g_total = (beta.total_diversity().unwrap_or(0.0) - gamma.total_diversity().unwrap_or(0.0)).abs();

    let mut cands: Vec<f64> = vec![g_total];
    for &x in &bd {
        for &y in &gd {
            let d = (x - y).abs();
            if d > g_total {
                cands.push(d);
            }
        }
    }
    cands.sort_by(|a, b| a.total_cmp(b));
    cands.dedup();

    let bound = mass_bound(beta, gamma);
    let f = |c: f64| min_mass_distortion(&bm, &gm, |i, j| (bd[i] - gd[j]).abs() <= c, bound);

    // F is nonincreasing in c, so {k : F(c_k) <= c_k} is an upper set.
    let last = cands.len() - 1;
    let f_last = f(cands[last]);
    if f_last > cands[last] {
        return Ok(f_last);
    }
    if f(cands[0]) <= cands[0] {
        return Ok(cands[0]);
    }
    // Invariant: F(c_lo) > c_lo and F(c_hi) <= c_hi. The optimum is either c_hi
    // or F(c_lo), the smallest objective among the failing thresholds.
    let (mut lo, mut hi) = (0usize, last);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(cands[mid]) <= cands[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(cands[hi].min(f(cands[lo])))
}

/// `dist_alpha` after dropping blocks below `cutoff` from both sides.
pub fn dist_alpha_truncated(beta: &IntervalPartition, gamma: &IntervalPartition, cutoff: f64) -> Result<Distance> {
    let (b, db) = beta.truncate(cutoff);
    let (g, dg) = gamma.truncate(cutoff);
    Ok(Distance { value: dist_alpha(&b, &g)?, error_bound: db.max(dg) })
}

/// `dist_hausdorff` after dropping blocks below `cutoff` from both sides.
pub fn dist_hausdorff_truncated(beta: &IntervalPartition, gamma: &IntervalPartition, cutoff: f64) -> Distance {
    let (b, db) = beta.truncate(cutoff);
    let (g, dg) = gamma.truncate(cutoff);
    Distance { value: dist_hausdorff(&b, &g), error_bound: db.max(dg) }
}
