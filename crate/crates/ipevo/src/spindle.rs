//! Block diffusions and spindles.
//!
//! A block diffusion is `c·Z^q` for a squared Bessel process `Z` of dimension
//! `-2α` absorbed at zero. Spindles are excursions of the same diffusion; given
//! its lifetime, a BESQ(-2α) excursion is a BESQ(4+2α) bridge from 0 to 0, which
//! is what the default sampler draws. The first-passage construction with
//! rejection is kept as the reference sampler.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::sync::Arc;

/// Parameters `(α, q, c)` of a block diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    pub alpha: f64,
    pub q: f64,
    pub c: f64,
}

impl DiffusionParams {
    pub fn new(alpha: f64, q: f64, c: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param(format!("alpha must lie in (0,1), got {alpha}")));
        }
        if !(q > alpha && q.is_finite()) {
            return Err(Error::param(format!("q must exceed alpha ({alpha}), got {q}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param(format!("c must be positive, got {c}")));
        }
        Ok(DiffusionParams { alpha, q, c })
    }

    /// The squared Bessel case `q = c = 1`.
    pub fn besq(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0, 1.0)
    }

    /// Diversity exponent of the partitions this model produces.
    pub fn alpha_div(&self) -> f64 {
        self.alpha / self.q
    }

    /// Starting height of the underlying BESQ for a block of mass `a`.
    pub fn besq_height(&self, a: f64) -> f64 {
        (a / self.c).powf(1.0 / self.q)
    }

    /// Block mass for BESQ height `x`.
    pub fn mass(&self, x: f64) -> f64 {
        self.c * x.powf(self.q)
    }

    /// Survival probability of the clade started from one block of mass `a`
    /// beyond level `y`.
    pub fn clade_survival(&self, a: f64, y: f64) -> f64 {
        -(-self.besq_height(a) / (2.0 * y)).exp_m1()
    }
}

/// Closed forms for the excursion measure `ν` of the `(α,q,c)` model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcursionMeasureTable {
    pub params: DiffusionParams,
    pub c_nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailKind {
    Lifetime,
    Amplitude,
}

impl ExcursionMeasureTable {
    pub fn new(params: DiffusionParams) -> Self {
        let DiffusionParams { alpha: a, q, c } = params;
        // α / (Γ(1-α/q) ∫₀¹ E[(c g^q)^{α/q}] dy) with g the unit BESQ(4+2α) bridge,
        // for which ∫₀¹ E[g(y)^α] dy = 2^α Γ(1+α)/(1+α).
        let integral = c.powf(a / q) * 2f64.powf(a) * gamma(1.0 + a) / (1.0 + a);
        let c_nu = a / (gamma(1.0 - a / q) * integral);
        ExcursionMeasureTable { params, c_nu }
    }

    /// `ν{ζ > x}` or `ν{A > x}`.
    pub fn nu_tail(&self, kind: TailKind, x: f64) -> f64 {
        let DiffusionParams { alpha: a, q, c } = self.params;
        match kind {
            TailKind::Lifetime => self.c_nu * x.powf(-1.0 - a) / (1.0 + a),
            TailKind::Amplitude => {
                // E[A(g)^{1+α}] = 2^{1+α} Γ(2+α) for the unit bridge.
                let moment = 2f64.powf(1.0 + a) * gamma(2.0 + a);
                self.c_nu / (1.0 + a) * (x / c).powf(-(1.0 + a) / q) * moment
            }
        }
    }

    /// Slope of the compensating drift for jumps above `eps`.
    pub fn drift(&self, eps: f64) -> f64 {
        self.c_nu * eps.powf(-self.params.alpha) / self.params.alpha
    }

    /// Rate of jumps above `eps`.
    pub fn jump_rate(&self, eps: f64) -> f64 {
        self.nu_tail(TailKind::Lifetime, eps)
    }

    /// Laplace exponent of the scaffolding: `E[exp(-λX_t)] = exp(tψ(λ))`.
    pub fn laplace_exponent(&self, lambda: f64) -> f64 {
        let a = self.params.alpha;
        self.c_nu * gamma(1.0 - a) / (a * (1.0 + a)) * lambda.powf(1.0 + a)
    }
}

/// A sampled excursion path.
///
/// The values live on a uniform grid over an underlying path of length `span`;
/// the spindle itself is the window `[lo, hi]` of that path, read forwards or
/// backwards. Splitting and reversal share the grid and are exact.
#[derive(Debug, Clone)]
pub struct Spindle {
    path: Arc<[f64]>,
    span: f64,
    lo: f64,
    hi: f64,
    reversed: bool,
}

impl PartialEq for Spindle {
    fn eq(&self, other: &Self) -> bool {
        self.span == other.span
            && self.lo == other.lo
            && self.hi == other.hi
            && self.reversed == other.reversed
            && (Arc::ptr_eq(&self.path, &other.path) || self.path[..] == other.path[..])
    }
}

impl Spindle {
    /// Spindle with samples on a uniform grid over `[0, lifetime]`.
    pub fn from_samples(lifetime: f64, samples: Vec<f64>) -> Result<Self> {
        if !(lifetime > 0.0 && lifetime.is_finite()) {
            return Err(Error::param("spindle lifetime must be positive"));
        }
        if samples.len() < 2 {
            return Err(Error::param("a spindle needs at least two samples"));
        }
        if samples.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::param("spindle samples must be nonnegative"));
        }
        Ok(Spindle { path: samples.into(), span: lifetime, lo: 0.0, hi: lifetime, reversed: false })
    }

    pub fn lifetime(&self) -> f64 {
        self.hi - self.lo
    }

    fn step(&self) -> f64 {
        self.span / (self.path.len() - 1) as f64
    }

    fn at_path(&self, x: f64) -> f64 {
        let n = self.path.len() - 1;
        let s = x / self.step();
        if s <= 0.0 {
            return self.path[0];
        }
        if s >= n as f64 {
            return self.path[n];
        }
        let k = s.floor() as usize;
        let w = s - k as f64;
        self.path[k] * (1.0 - w) + self.path[k + 1] * w
    }

    fn to_path(&self, h: f64) -> f64 {
        if self.reversed {
            self.hi - h
        } else {
            self.lo + h
        }
    }

    /// `max{f(h-), f(h)}`: the value at relative height `h` on the closed
    /// support, zero outside.
    pub fn value(&self, h: f64) -> f64 {
        let z = self.lifetime();
        if !(0.0..=z).contains(&h) {
            return 0.0;
        }
        if h == 0.0 {
            return self.birth_value();
        }
        if h == z {
            return self.death_value();
        }
        self.at_path(self.to_path(h))
    }

    pub fn birth_value(&self) -> f64 {
        self.at_path(if self.reversed { self.hi } else { self.lo })
    }

    pub fn death_value(&self) -> f64 {
        self.at_path(if self.reversed { self.lo } else { self.hi })
    }

    pub fn is_broken(&self) -> bool {
        self.birth_value() > 0.0 || self.death_value() > 0.0
    }

    /// Maximum over the grid points in the window, plus its endpoints.
    pub fn amplitude(&self) -> f64 {
        let st = self.step();
        let (a, b) = ((self.lo / st).ceil() as usize, (self.hi / st).floor() as usize);
        let mut m = self.at_path(self.lo).max(self.at_path(self.hi));
        for k in a..=b.min(self.path.len() - 1) {
            m = m.max(self.path[k]);
        }
        m
    }

    /// Values on `n + 1` equally spaced heights over `[0, ζ]`.
    pub fn samples(&self, n: usize) -> Vec<f64> {
        let z = self.lifetime();
        (0..=n).map(|k| self.value(z * k as f64 / n as f64)).collect()
    }

    /// Reversal `R(f)(y) = f((ζ-y)-)`.
    pub fn reverse(&self) -> Spindle {
        Spindle { reversed: !self.reversed, ..self.clone() }
    }

    /// Split at relative height `u ∈ (0, ζ)` into the part below (`check`,
    /// broken at death) and the part above (`hat`, broken at birth).
    pub fn split(&self, u: f64) -> Result<(Spindle, Spindle)> {
        if !(u > 0.0 && u < self.lifetime()) {
            return Err(Error::param(format!("split height {u} outside (0, {})", self.lifetime())));
        }
        let cut = self.to_path(u);
        let (mut check, mut hat) = (self.clone(), self.clone());
        if self.reversed {
            check.lo = cut;
            hat.hi = cut;
        } else {
            check.hi = cut;
            hat.lo = cut;
        }
        Ok((check, hat))
    }

    /// Inverse of `split` for two halves of the same spindle.
    pub fn rejoin(check: &Spindle, hat: &Spindle) -> Option<Spindle> {
        if !Arc::ptr_eq(&check.path, &hat.path) || check.reversed != hat.reversed {
            return None;
        }
        let mut s = check.clone();
        if check.reversed {
            if check.lo != hat.hi {
                return None;
            }
            s.lo = hat.lo;
        } else {
            if check.hi != hat.lo {
                return None;
            }
            s.hi = hat.hi;
        }
        Some(s)
    }

    /// `(a ⊛ f)(y) = a^q f(y/a)`: lifetime times `a`, values times `a^q`.
    pub fn scale(&self, a: f64, q: f64) -> Spindle {
        let aq = a.powf(q);
        Spindle {
            path: self.path.iter().map(|v| v * aq).collect::<Vec<_>>().into(),
            span: self.span * a,
            lo: self.lo * a,
            hi: self.hi * a,
            reversed: self.reversed,
        }
    }

    pub fn to_record(&self) -> SpindleRecord {
        let (mut samples, lo, hi) = if self.reversed {
            (self.path.iter().rev().copied().collect::<Vec<_>>(), self.span - self.hi, self.span - self.lo)
        } else {
            (self.path.to_vec(), self.lo, self.hi)
        };
        let whole = lo == 0.0 && hi == self.span;
        if whole {
            samples.shrink_to_fit();
        }
        SpindleRecord {
            zeta: self.lifetime(),
            birth: self.birth_value(),
            death: self.death_value(),
            samples,
            span: if whole { None } else { Some(self.span) },
            window: if whole { None } else { Some([lo, hi]) },
        }
    }

    pub fn from_record(r: &SpindleRecord) -> Result<Self> {
        let span = r.span.unwrap_or(r.zeta);
        let mut s = Spindle::from_samples(span, r.samples.clone())?;
        if let Some([lo, hi]) = r.window {
            if !(0.0 <= lo && lo < hi && hi <= span) {
                return Err(Error::format("spindle window outside its samples"));
            }
            s.lo = lo;
            s.hi = hi;
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        if !close(s.lifetime(), r.zeta) || !close(s.birth_value(), r.birth) || !close(s.death_value(), r.death) {
            return Err(Error::format("spindle record is inconsistent with its samples"));
        }
        Ok(s)
    }
}

/// JSON form of a spindle. `span`/`window` appear only for broken spindles,
/// whose samples cover the whole underlying path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpindleRecord {
    pub zeta: f64,
    pub birth: f64,
    pub death: f64,
    pub samples: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

/// Lifetime of the block diffusion started from mass `a`: `(z/2)/G` with
/// `G ~ Gamma(1+α, 1)` and `z` the BESQ starting height.
pub fn sample_lifetime<R: Rng + ?Sized>(params: &DiffusionParams, a: f64, rng: &mut R) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let g: f64 = Gamma::new(1.0 + params.alpha, 1.0).expect("valid shape").sample(rng);
    0.5 * params.besq_height(a) / g
}

/// Euler path of a block diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPath {
    pub dt: f64,
    /// Block masses at times `0, dt, 2dt, ...` up to the last positive step.
    pub values: Vec<f64>,
    /// Absorption time, interpolated inside the final step.
    pub lifetime: f64,
}

impl BlockPath {
    /// Amplitude over the grid.
    pub fn amplitude(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Resample onto a uniform grid over `[0, lifetime]` with the same step count.
    pub fn to_spindle(&self) -> Option<Spindle> {
        if self.lifetime <= 0.0 {
            return None;
        }
        let n = self.values.len();
        let step = self.lifetime / n as f64;
        let mut out = Vec::with_capacity(n + 1);
        for k in 0..n {
            let s = k as f64 * step / self.dt;
            let j = s.floor() as usize;
            let w = s - j as f64;
            let v = if j + 1 < n {
                self.values[j] * (1.0 - w) + self.values[j + 1] * w
            } else {
                // Last partial step decays linearly to zero at the absorption time.
                let rem = self.lifetime - (n - 1) as f64 * self.dt;
                let x = k as f64 * step - (n - 1) as f64 * self.dt;
                self.values[n - 1] * (1.0 - (x / rem).clamp(0.0, 1.0))
            };
            out.push(v);
        }
        out.push(0.0);
        Spindle::from_samples(self.lifetime, out).ok()
    }
}

fn check_dt(dt: f64, z: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param(format!("dt must be positive, got {dt}")));
    }
    if dt >= z {
        return Err(Error::param(format!("dt = {dt} is not below the starting height {z}; refine dt")));
    }
    Ok(())
}

const MAX_EULER_STEPS: usize = 200_000_000;

fn euler_step(z: f64, delta: f64, dt: f64, db: f64) -> f64 {
    z + delta * dt + 2.0 * z.max(0.0).sqrt() * db
}

fn absorb_time(k: usize, dt: f64, before: f64, after: f64) -> f64 {
    let w = if before > after { before / (before - after) } else { 1.0 };
    (k as f64 + w.clamp(0.0, 1.0)) * dt
}

/// Euler scheme with full truncation for BESQ(-2α) from `(a/c)^{1/q}`,
/// absorbed at the first nonpositive step; values mapped by `x ↦ c x^q`.
///
/// `dt` must be smaller than the starting BESQ height, which is the natural
/// time scale of the path.
pub fn simulate_block_diffusion<R: Rng + ?Sized>(params: &DiffusionParams, a: f64, dt: f64, rng: &mut R) -> Result<BlockPath> {
    if a <= 0.0 {
        return Ok(BlockPath { dt, values: Vec::new(), lifetime: 0.0 });
    }
    let z0 = params.besq_height(a);
    check_dt(dt, z0)?;
    let delta = -2.0 * params.alpha;
    let sq = dt.sqrt();
    let mut z = z0;
    let mut values = vec![params.mass(z0)];
    loop {
        let n: f64 = rng.sample(StandardNormal);
        let next = euler_step(z, delta, dt, sq * n);
        if next <= 0.0 {
            let lifetime = absorb_time(values.len() - 1, dt, z, next);
            return Ok(BlockPath { dt, values, lifetime });
        }
        z = next;
        values.push(params.mass(z));
        if values.len() > MAX_EULER_STEPS {
            return Err(Error::Budget(format!("block diffusion exceeded {MAX_EULER_STEPS} Euler steps")));
        }
    }
}

/// Amplitude (in mass units) of an Euler block diffusion from `a`, stopped
/// once the mass reaches `cap`. Returns `cap` if it gets there.
pub fn block_amplitude_capped<R: Rng + ?Sized>(params: &DiffusionParams, a: f64, dt: f64, cap: f64, rng: &mut R) -> Result<f64> {
    if a <= 0.0 {
        return Ok(0.0);
    }
    let z0 = params.besq_height(a);
    check_dt(dt, z0)?;
    let zcap = params.besq_height(cap);
    let delta = -2.0 * params.alpha;
    let sq = dt.sqrt();
    let mut z = z0;
    let mut top = z0;
    for _ in 0..MAX_EULER_STEPS {
        z = euler_step(z, delta, dt, sq * rng.sample::<f64, _>(StandardNormal));
        if z <= 0.0 {
            return Ok(params.mass(top));
        }
        if z >= zcap {
            return Ok(cap);
        }
        top = top.max(z);
    }
    Err(Error::Budget(format!("block diffusion exceeded {MAX_EULER_STEPS} Euler steps")))
}

/// Euler paths at `dt` and `2dt` driven by the same Brownian motion.
pub fn simulate_block_diffusion_coupled<R: Rng + ?Sized>(
    params: &DiffusionParams,
    a: f64,
    dt: f64,
    rng: &mut R,
) -> Result<(BlockPath, BlockPath)> {
    if a <= 0.0 {
        let e = BlockPath { dt, values: Vec::new(), lifetime: 0.0 };
        return Ok((e.clone(), BlockPath { dt: 2.0 * dt, ..e }));
    }
    let z0 = params.besq_height(a);
    check_dt(2.0 * dt, z0)?;
    let delta = -2.0 * params.alpha;
    let sq = dt.sqrt();
    let (mut zf, mut zc) = (z0, z0);
    let mut fine = vec![params.mass(z0)];
    let mut coarse = vec![params.mass(z0)];
    let (mut life_f, mut life_c) = (None, None);
    let mut k = 0usize;
    while life_f.is_none() || life_c.is_none() {
        let b1 = sq * rng.sample::<f64, _>(StandardNormal);
        let b2 = sq * rng.sample::<f64, _>(StandardNormal);
        if life_f.is_none() {
            for b in [b1, b2] {
                if life_f.is_some() {
                    break;
                }
                let next = euler_step(zf, delta, dt, b);
                if next <= 0.0 {
                    life_f = Some(absorb_time(fine.len() - 1, dt, zf, next));
                } else {
                    zf = next;
                    fine.push(params.mass(zf));
                }
            }
        }
        if life_c.is_none() {
            let next = euler_step(zc, delta, 2.0 * dt, b1 + b2);
            if next <= 0.0 {
                life_c = Some(absorb_time(coarse.len() - 1, 2.0 * dt, zc, next));
            } else {
                zc = next;
                coarse.push(params.mass(zc));
            }
        }
        k += 1;
        if k > MAX_EULER_STEPS {
            return Err(Error::Budget(format!("block diffusion exceeded {MAX_EULER_STEPS} Euler steps")));
        }
    }
    Ok((
        BlockPath { dt, values: fine, lifetime: life_f.unwrap_or(0.0) },
        BlockPath { dt: 2.0 * dt, values: coarse, lifetime: life_c.unwrap_or(0.0) },
    ))
}

/// One exact BESQ(d) transition over time `dt` from `y`: a Poisson mixture of
/// Gamma laws (the noncentral chi-square representation).
pub fn besq_transition<R: Rng + ?Sized>(d: f64, y: f64, dt: f64, rng: &mut R) -> f64 {
    let lam = y / (2.0 * dt);
    let k = if lam > 0.0 { Poisson::new(lam).expect("finite rate").sample(rng) } else { 0.0 };
    let g: f64 = Gamma::new(0.5 * d + k, 1.0).expect("positive shape").sample(rng);
    2.0 * dt * g
}

/// BESQ(d) bridge from `x` to 0 on `[0,1]` at `n + 1` equally spaced times,
/// via `Z_t = (1-t)^2 Y(t/(1-t))` with `Y` a BESQ(d) process from `x`.
pub fn besq_bridge_to_zero<R: Rng + ?Sized>(d: f64, x: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(x);
    let (mut y, mut u) = (x, 0.0f64);
    for k in 1..n {
        let t = k as f64 / n as f64;
        let un = t / (1.0 - t);
        y = besq_transition(d, y, un - u, rng);
        u = un;
        out.push((1.0 - t) * (1.0 - t) * y);
    }
    out.push(0.0);
    out
}

/// Marginal of the unit-lifetime excursion at time `u`: `2u(1-u) Gamma(2+α)`.
pub fn unit_excursion_marginal<R: Rng + ?Sized>(alpha: f64, u: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(2.0 + alpha, 1.0).expect("positive shape").sample(rng);
    2.0 * u * (1.0 - u) * g
}

/// How to draw from `ν(· | ζ = z)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SpindleSampler {
    /// Exact BESQ(4+2α) bridge from 0 to 0.
    #[default]
    Bridge,
    /// First-passage construction with size-bias rejection.
    Rejection(RejectionConfig),
}

/// Settings of the reference excursion sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionConfig {
    /// First-passage threshold of the BESQ(4+2α) phase.
    pub a0: f64,
    /// Euler step, as a fraction of `a0`.
    pub dt: f64,
    /// Relative resolution: the realized lifetime must span at least `1/tol` steps.
    pub tol: f64,
    /// Amplitude (of the unit-lifetime shape) below which the size-bias correction saturates.
    pub amp_floor: f64,
    pub max_tries: usize,
}

impl Default for RejectionConfig {
    fn default() -> Self {
        RejectionConfig { a0: 1.0, dt: 1e-4, tol: 0.02, amp_floor: 0.5, max_tries: 10_000 }
    }
}

/// A unit-lifetime BESQ(-2α) excursion shape on `n + 1` grid points.
pub fn sample_unit_shape<R: Rng + ?Sized>(alpha: f64, n: usize, sampler: SpindleSampler, rng: &mut R) -> Result<Vec<f64>> {
    match sampler {
        SpindleSampler::Bridge => Ok(besq_bridge_to_zero(4.0 + 2.0 * alpha, 0.0, n, rng)),
        SpindleSampler::Rejection(cfg) => rejection_shape(alpha, n, &cfg, rng),
    }
}

fn rejection_shape<R: Rng + ?Sized>(alpha: f64, n: usize, cfg: &RejectionConfig, rng: &mut R) -> Result<Vec<f64>> {
    let dt = cfg.dt * cfg.a0;
    let sq = dt.sqrt();
    let mut worst = 0.0f64;
    for _ in 0..cfg.max_tries {
        // Under ν(· | A > a0) the path runs as BESQ(4+2α) from 0 up to a0 and
        // then as BESQ(-2α) from a0 until it is absorbed.
        let mut z = 0.0f64;
        let mut path = vec![0.0];
        let mut delta = 4.0 + 2.0 * alpha;
        let life;
        loop {
            let n: f64 = rng.sample(StandardNormal);
            let next = euler_step(z, delta, dt, sq * n);
            if delta > 0.0 && next >= cfg.a0 {
                delta = -2.0 * alpha;
            }
            if delta < 0.0 && next <= 0.0 {
                life = absorb_time(path.len() - 1, dt, z, next);
                break;
            }
            z = next.max(0.0);
            path.push(z);
            if path.len() > MAX_EULER_STEPS {
                return Err(Error::Budget("rejection sampler path too long".into()));
            }
        }
        worst = worst.max(dt / life);
        if life / dt < 1.0 / cfg.tol {
            continue;
        }
        let bp = BlockPath { dt, values: path, lifetime: life };
        let sp = match bp.to_spindle() {
            Some(s) => s,
            None => continue,
        };
        // Rescale to unit lifetime and undo the A^{1+α} size bias.
        let shape: Vec<f64> = sp.samples(n).into_iter().map(|v| v / life).collect();
        let amp = shape.iter().copied().fold(0.0, f64::max);
        let accept = (cfg.amp_floor / amp).powf(1.0 + alpha).min(1.0);
        if rng.random::<f64>() < accept {
            return Ok(shape);
        }
    }
    Err(Error::Budget(format!(
        "rejection sampler failed {} times (coarsest resolution dt/ζ = {worst:.3e}, tol {})",
        cfg.max_tries, cfg.tol
    )))
}

/// Draw from `ν(· | ζ = z)` on `n_grid + 1` points: `z ⊛ (c g^q)` with `g` a
/// unit-lifetime BESQ(-2α) excursion.
pub fn sample_spindle_given_lifetime<R: Rng + ?Sized>(
    params: &DiffusionParams,
    z: f64,
    n_grid: usize,
    sampler: SpindleSampler,
    rng: &mut R,
) -> Result<Spindle> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::param(format!("lifetime must be positive, got {z}")));
    }
    let shape = sample_unit_shape(params.alpha, n_grid.max(2), sampler, rng)?;
    spindle_from_shape(params, z, shape)
}

/// `c (z g)^q` on the grid of `shape`, lifetime `z`.
pub fn spindle_from_shape(params: &DiffusionParams, z: f64, shape: Vec<f64>) -> Result<Spindle> {
    let vals = shape.into_iter().map(|g| params.mass(z * g)).collect();
    Spindle::from_samples(z, vals)
}

/// Exact block diffusion from mass `a`: an inverse-gamma lifetime and a
/// BESQ(4+2α) bridge to zero, on `n_grid + 1` points.
pub fn sample_block_diffusion_exact<R: Rng + ?Sized>(params: &DiffusionParams, a: f64, n_grid: usize, rng: &mut R) -> Result<Spindle> {
    if !(a > 0.0) {
        return Err(Error::param("initial mass must be positive"));
    }
    let z = params.besq_height(a);
    let life = sample_lifetime(params, a, rng);
    let unit = besq_bridge_to_zero(4.0 + 2.0 * params.alpha, z / life, n_grid.max(2), rng);
    let vals = unit.into_iter().map(|v| params.mass(life * v)).collect();
    Spindle::from_samples(life, vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn params_validation() {
        assert!(DiffusionParams::new(0.5, 0.4, 1.0).is_err());
        assert!(DiffusionParams::new(0.5, 0.5, 1.0).is_err());
        assert!(DiffusionParams::new(1.0, 2.0, 1.0).is_err());
        assert!(DiffusionParams::new(0.5, 1.0, 0.0).is_err());
        assert_eq!(DiffusionParams::new(0.5, 2.0, 1.0).unwrap().alpha_div(), 0.25);
    }

    #[test]
    fn closed_forms() {
        let t = ExcursionMeasureTable::new(DiffusionParams::besq(0.5).unwrap());
        assert!((t.c_nu - 0.337_618_6).abs() < 1e-6, "{}", t.c_nu);
        assert!((t.nu_tail(TailKind::Lifetime, 1.0) - 0.225_079_1).abs() < 1e-6);
        assert!((t.nu_tail(TailKind::Amplitude, 1.0) - 0.846_284_4).abs() < 1e-6);
        let r = t.nu_tail(TailKind::Lifetime, 1.0) / t.nu_tail(TailKind::Lifetime, 2.0);
        assert!((r - 2f64.powf(1.5)).abs() < 1e-12);
        assert!((t.laplace_exponent(1.0) - 0.797_884_6).abs() < 1e-6);
    }

    #[test]
    fn spindle_transforms() {
        let f = Spindle::from_samples(2.0, vec![0.0, 1.0, 3.0, 0.5, 0.0]).unwrap();
        assert_eq!(f.reverse().reverse(), f);
        assert_eq!(f.scale(1.0, 1.0), f);
        let g = f.scale(2.0, 1.0);
        assert_eq!(g.lifetime(), 4.0);
        assert_eq!(g.amplitude(), 6.0);
        assert_eq!(f.reverse().value(0.5), f.value(1.5));
        let (c, h) = f.split(0.75).unwrap();
        assert_eq!(c.lifetime() + h.lifetime(), 2.0);
        assert_eq!(c.death_value(), h.birth_value());
        assert_eq!(c.death_value(), f.value(0.75));
        assert_eq!(Spindle::rejoin(&c, &h).unwrap(), f);
        assert!(f.split(0.0).is_err() && f.split(2.0).is_err());
        let r = f.reverse();
        let (rc, rh) = r.split(0.5).unwrap();
        assert_eq!(rc.death_value(), f.value(1.5));
        assert_eq!(rh.value(0.25), f.value(1.25));
        assert_eq!(Spindle::rejoin(&rc, &rh).unwrap(), r);
    }

    #[test]
    fn record_round_trip() {
        let f = Spindle::from_samples(2.0, vec![0.0, 1.0, 3.0, 0.5, 0.0]).unwrap();
        let (c, h) = f.reverse().split(0.3).unwrap();
        for s in [f.clone(), c, h] {
            let rec = s.to_record();
            let back = Spindle::from_record(&rec).unwrap();
            assert_eq!(back.to_record(), rec);
            for k in 0..=10 {
                let y = s.lifetime() * k as f64 / 10.0;
                assert!((back.value(y) - s.value(y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_start_is_empty() {
        let p = DiffusionParams::besq(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = simulate_block_diffusion(&p, 0.0, 1e-3, &mut rng).unwrap();
        assert!(b.values.is_empty() && b.lifetime == 0.0);
        assert!(simulate_block_diffusion(&p, 1e-4, 1e-3, &mut rng).is_err());
    }

    #[test]
    fn qc_pathwise_consistency() {
        let p = DiffusionParams::new(0.5, 2.0, 3.0).unwrap();
        let b = DiffusionParams::besq(0.5).unwrap();
        let a = 1.7;
        let x = simulate_block_diffusion(&p, a, 1e-3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let y = simulate_block_diffusion(&b, p.besq_height(a), 1e-3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(x.lifetime, y.lifetime);
        for (u, v) in x.values.iter().zip(&y.values) {
            assert!((u - 3.0 * v * v).abs() <= 1e-12 * u.max(1.0));
        }
    }

    #[test]
    fn bridge_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = besq_bridge_to_zero(5.0, 0.0, 64, &mut rng);
        assert_eq!(g.len(), 65);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[64], 0.0);
        assert!(g[1..64].iter().all(|&v| v > 0.0));
        let s = sample_spindle_given_lifetime(&DiffusionParams::besq(0.5).unwrap(), 3.5, 32, SpindleSampler::Bridge, &mut rng).unwrap();
        assert_eq!(s.lifetime(), 3.5);
    }
}
