//! Interval partitions with diversity marks.
//!
//! A partition is stored as its ordered block masses; interval endpoints are
//! prefix sums. When the generating construction knows the diversity up to
//! each block (a local time), it is carried as an exact mark.

mod metric;

pub use metric::{dist_alpha, dist_alpha_truncated, dist_hausdorff, dist_hausdorff_truncated, Correspondence, Distance, Distortion};

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub mass: f64,
    /// Diversity of the partition strictly left of this block.
    pub div: Option<f64>,
}

impl Block {
    pub fn new(mass: f64, div: Option<f64>) -> Self {
        Block { mass, div }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPartition")]
pub struct IntervalPartition {
    alpha_div: f64,
    total_diversity: Option<f64>,
    blocks: Vec<Block>,
}

#[derive(Deserialize)]
struct RawPartition {
    alpha_div: f64,
    #[serde(default)]
    total_diversity: Option<f64>,
    blocks: Vec<Block>,
}

impl TryFrom<RawPartition> for IntervalPartition {
    type Error = Error;

    fn try_from(raw: RawPartition) -> Result<Self> {
        IntervalPartition::new(raw.alpha_div, raw.blocks, raw.total_diversity)
    }
}

fn check_alpha(alpha_div: f64) -> Result<()> {
    if alpha_div > 0.0 && alpha_div < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("alpha_div must lie in (0,1), got {alpha_div}")))
    }
}

impl IntervalPartition {
    /// Validating constructor. Marks must be present on every block or on none,
    /// nondecreasing, and bounded by `total_diversity`.
    pub fn new(alpha_div: f64, blocks: Vec<Block>, total_diversity: Option<f64>) -> Result<Self> {
        check_alpha(alpha_div)?;
        for b in &blocks {
            if !(b.mass > 0.0 && b.mass.is_finite()) {
                return Err(Error::param(format!("block mass must be positive and finite, got {}", b.mass)));
            }
        }
        let marked = blocks.iter().filter(|b| b.div.is_some()).count();
        if marked != 0 && marked != blocks.len() {
            return Err(Error::param("diversity marks must be present on all blocks or none"));
        }
        if marked > 0 {
            let total = total_diversity
                .ok_or_else(|| Error::param("diversity marks require total_diversity"))?;
            let mut prev = 0.0;
            for b in &blocks {
                let d = b.div.unwrap_or(0.0);
                if !(d >= 0.0 && d.is_finite()) || d < prev {
                    return Err(Error::param("diversity marks must be nonnegative and nondecreasing"));
                }
                prev = d;
            }
            if total < prev {
                return Err(Error::param("total_diversity is below the last mark"));
            }
        }
        if let Some(t) = total_diversity {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::param("total_diversity must be nonnegative"));
            }
        }
        Ok(IntervalPartition { alpha_div, total_diversity, blocks })
    }

    pub fn empty(alpha_div: f64) -> Self {
        IntervalPartition { alpha_div, total_diversity: None, blocks: Vec::new() }
    }

    /// A partition without diversity data.
    pub fn from_masses(alpha_div: f64, masses: &[f64]) -> Result<Self> {
        Self::new(alpha_div, masses.iter().map(|&m| Block::new(m, None)).collect(), None)
    }

    /// Masses with marks; `marks.len()` must equal `masses.len()`.
    pub fn with_marks(alpha_div: f64, masses: &[f64], marks: &[f64], total: f64) -> Result<Self> {
        if masses.len() != marks.len() {
            return Err(Error::param("masses and marks differ in length"));
        }
        let blocks = masses.iter().zip(marks).map(|(&m, &d)| Block::new(m, Some(d))).collect();
        Self::new(alpha_div, blocks, Some(total))
    }

    pub fn alpha_div(&self) -> f64 {
        self.alpha_div
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.blocks.iter().map(|b| b.mass).sum()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.mass).collect()
    }

    /// Block masses in decreasing order.
    pub fn ranked_masses(&self) -> Vec<f64> {
        let mut m = self.masses();
        m.sort_by(|a, b| b.total_cmp(a));
        m
    }

    pub fn total_diversity(&self) -> Option<f64> {
        self.total_diversity
    }

    /// True when the partition carries diversity data usable by `dist_alpha`.
    pub fn has_diversity(&self) -> bool {
        self.total_diversity.is_some() && self.blocks.iter().all(|b| b.div.is_some())
    }

    /// Drop all diversity data (the image in the Hausdorff space).
    pub fn without_diversity(&self) -> Self {
        IntervalPartition {
            alpha_div: self.alpha_div,
            total_diversity: None,
            blocks: self.blocks.iter().map(|b| Block::new(b.mass, None)).collect(),
        }
    }

    /// Left endpoints of the blocks.
    pub fn left_endpoints(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.blocks
            .iter()
            .map(|b| {
                let l = acc;
                acc += b.mass;
                l
            })
            .collect()
    }

    /// Exact diversity up to mass coordinate `t`, read from the marks.
    pub fn diversity_at(&self, t: f64) -> Option<f64> {
        let total = self.total_diversity?;
        let mut acc = 0.0;
        for b in &self.blocks {
            if t <= acc {
                return b.div;
            }
            acc += b.mass;
            if t < acc {
                return b.div;
            }
        }
        Some(total)
    }

    /// Drop blocks of mass below `cutoff`; returns the kept partition and the dropped mass.
    pub fn truncate(&self, cutoff: f64) -> (Self, f64) {
        let mut dropped = 0.0;
        let blocks = self
            .blocks
            .iter()
            .filter(|b| {
                if b.mass < cutoff {
                    dropped += b.mass;
                    false
                } else {
                    true
                }
            })
            .copied()
            .collect();
        (IntervalPartition { alpha_div: self.alpha_div, total_diversity: self.total_diversity, blocks }, dropped)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("partition serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Concatenate partitions left to right.
///
/// Diversity marks survive only if every part carries them; they are shifted by
/// the total diversity of the preceding parts.
pub fn concat(alpha_div: f64, parts: &[IntervalPartition]) -> Result<IntervalPartition> {
    check_alpha(alpha_div)?;
    if let Some(p) = parts.iter().find(|p| p.alpha_div != alpha_div) {
        return Err(Error::param(format!(
            "cannot concatenate partitions with alpha_div {} and {}",
            alpha_div, p.alpha_div
        )));
    }
    let keep = parts.iter().all(|p| p.is_empty() || p.has_diversity())
        && parts.iter().any(|p| p.total_diversity.is_some());
    let mut blocks = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    let mut shift = 0.0;
    for p in parts {
        for b in &p.blocks {
            let div = if keep { b.div.map(|d| d + shift) } else { None };
            blocks.push(Block::new(b.mass, div));
        }
        if keep {
            shift += p.total_diversity.unwrap_or(0.0);
        }
    }
    let total = if keep { Some(shift) } else { None };
    Ok(IntervalPartition { alpha_div, total_diversity: total, blocks })
}

/// Scale masses by `c` and diversity by `c^alpha_div`.
pub fn scale(c: f64, beta: &IntervalPartition) -> Result<IntervalPartition> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param(format!("scale factor must be positive, got {c}")));
    }
    let cd = c.powf(beta.alpha_div);
    Ok(IntervalPartition {
        alpha_div: beta.alpha_div,
        total_diversity: beta.total_diversity.map(|d| d * cd),
        blocks: beta.blocks.iter().map(|b| Block::new(b.mass * c, b.div.map(|d| d * cd))).collect(),
    })
}

/// Result of the diversity estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityEstimate {
    pub estimate: f64,
    /// Weighted RMS of the regression residuals, relative to the estimate.
    pub dispersion: f64,
    /// `(h, Γ(1-α) h^α #{blocks > h})` at each bandwidth.
    pub profile: Vec<(f64, f64)>,
}

/// Estimate the diversity of the blocks lying left of mass coordinate `t`.
///
/// Each bandwidth `h` gives `Γ(1-α) h^α N(h)`; the estimate is the intercept of a
/// weighted least-squares line in `h^α`, weights proportional to `h^{-α}`
/// (the inverse Poisson variance).
pub fn diversity_estimate(beta: &IntervalPartition, t: f64, h_grid: &[f64]) -> Result<DiversityEstimate> {
    if h_grid.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        return Err(Error::param("bandwidths must be positive"));
    }
    if h_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("bandwidths must be strictly decreasing"));
    }
    let (hmax, hmin) = match (h_grid.first(), h_grid.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::param("insufficient bandwidth range")),
    };
    if h_grid.len() < 2 || hmax / hmin < 100.0 {
        return Err(Error::param("insufficient bandwidth range"));
    }
    if beta.is_empty() {
        return Ok(DiversityEstimate { estimate: 0.0, dispersion: 0.0, profile: Vec::new() });
    }
    let a = beta.alpha_div;
    let g = gamma(1.0 - a);
    let mut sizes: Vec<f64> = Vec::new();
    let mut acc = 0.0;
    for b in &beta.blocks {
        acc += b.mass;
        if acc > t * (1.0 + 1e-12) + 1e-300 {
            break;
        }
        sizes.push(b.mass);
    }
    sizes.sort_by(|x, y| y.total_cmp(x));
    let profile: Vec<(f64, f64)> = h_grid
        .iter()
        .map(|&h| {
            let count = sizes.partition_point(|&m| m > h);
            (h, g * h.powf(a) * count as f64)
        })
        .collect();
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(h, y) in &profile {
        let x = h.powf(a);
        let w = 1.0 / x;
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = sw * sxx - sx * sx;
    let (intercept, slope) = if det.abs() > 1e-300 {
        ((sxx * sy - sx * sxy) / det, (sw * sxy - sx * sy) / det)
    } else {
        (sy / sw, 0.0)
    };
    let mut rss = 0.0;
    for &(h, y) in &profile {
        let x = h.powf(a);
        let r = y - intercept - slope * x;
        rss += r * r / x;
    }
    let rms = (rss / sw).sqrt();
    let dispersion = if intercept.abs() > 0.0 { rms / intercept.abs() } else { rms };
    Ok(DiversityEstimate { estimate: intercept, dispersion, profile })
}

/// Log-spaced decreasing bandwidths from `hmax` down to `hmin`.
pub fn log_grid(hmax: f64, hmin: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let (la, lb) = (hmax.ln(), hmin.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Jumps of a Stable(α) subordinator with Laplace exponent `λ^α`, run for local
/// time `t`, keeping jumps above `eps`. Marks are the exact jump times.
pub fn sample_stable_ip<R: Rng + ?Sized>(alpha: f64, t: f64, eps: f64, rng: &mut R) -> Result<IntervalPartition> {
    check_alpha(alpha)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("local time must be nonnegative"));
    }
    if !(eps > 0.0) {
        return Err(Error::param("cutoff must be positive"));
    }
    let mean = t * eps.powf(-alpha) / gamma(1.0 - alpha);
    if mean > 5e8 {
        return Err(Error::Budget(format!("expected {mean:.3e} blocks exceeds 5e8; raise the cutoff")));
    }
    let n = if mean > 0.0 { Poisson::new(mean).map_err(|e| Error::param(e.to_string()))?.sample(rng) as usize } else { 0 };
    let mut jumps: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let s = t * rng.random::<f64>();
            let u: f64 = 1.0 - rng.random::<f64>();
            (s, eps * u.powf(-1.0 / alpha))
        })
        .collect();
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let blocks = jumps.into_iter().map(|(s, x)| Block::new(x, Some(s))).collect();
    IntervalPartition::new(alpha, blocks, Some(t))
}
