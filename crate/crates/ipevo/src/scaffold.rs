//! Point processes of spindles and their scaffolding paths.
//!
//! The scaffolding of a process truncated at jump size `ε` is a compensated
//! compound Poisson path: slope `-c_ν ε^{-α}/α` between jumps, an upward jump
//! of height `ζ(f)` at each point. All path queries below are exact segment
//! walks on that piecewise-linear path.

use crate::error::{Error, Result};
use crate::rng;
use crate::spindle::{
    sample_spindle_given_lifetime, DiffusionParams, ExcursionMeasureTable, Spindle, SpindleRecord,
    SpindleSampler,
};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Default grid size for sampled spindles.
pub const DEFAULT_N_GRID: usize = 256;

/// Default bound on the number of points a sampler may create.
pub const DEFAULT_POINT_BUDGET: usize = 50_000_000;

/// A spindle attached to a point: either drawn on demand from its own seed
/// (only the lifetime is known up front) or stored.
#[derive(Debug, Clone, PartialEq)]
pub enum Mark {
    Lazy { seed: u64, zeta: f64 },
    Stored(Spindle),
}

impl Mark {
    pub fn lifetime(&self) -> f64 {
        match self {
            Mark::Lazy { zeta, .. } => *zeta,
            Mark::Stored(s) => s.lifetime(),
        }
    }

    /// The spindle, sampling it from the seed if needed.
    pub fn spindle(&self, params: &DiffusionParams, n_grid: usize) -> Spindle {
        match self {
            Mark::Stored(s) => s.clone(),
            Mark::Lazy { seed, zeta } => {
                let mut r = rng::child(*seed);
                sample_spindle_given_lifetime(params, *zeta, n_grid, SpindleSampler::Bridge, &mut r)
                    .expect("positive lifetime")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub t: f64,
    pub mark: Mark,
}

impl Point {
    pub fn lifetime(&self) -> f64 {
        self.mark.lifetime()
    }
}

/// A finite, time-sorted point process of spindles.
#[derive(Debug, Clone, PartialEq)]
pub struct SpindlePointProcess {
    pub params: DiffusionParams,
    pub cutoff: f64,
    pub length: f64,
    pub n_grid: usize,
    pub seed: Option<u64>,
    points: Vec<Point>,
}

impl SpindlePointProcess {
    pub fn new(params: DiffusionParams, cutoff: f64, length: f64, points: Vec<Point>) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::param(format!("cutoff must be positive, got {cutoff}")));
        }
        if points.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::param("point times must be strictly increasing"));
        }
        if let Some(p) = points.first() {
            if !(p.t >= 0.0) {
                return Err(Error::param("point times must be nonnegative"));
            }
        }
        if let Some(p) = points.last() {
            if !(length >= p.t) {
                return Err(Error::param("length must be at least the last point time"));
            }
        }
        if !(length >= 0.0 && length.is_finite()) {
            return Err(Error::param("length must be finite and nonnegative"));
        }
        Ok(SpindlePointProcess { params, cutoff, length, n_grid: DEFAULT_N_GRID, seed: None, points })
    }

    pub fn empty(params: DiffusionParams, cutoff: f64) -> Self {
        SpindlePointProcess { params, cutoff, length: 0.0, n_grid: DEFAULT_N_GRID, seed: None, points: Vec::new() }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spindle(&self, i: usize) -> Spindle {
        self.points[i].mark.spindle(&self.params, self.n_grid)
    }

    /// Replace every lazy mark by its sampled spindle.
    pub fn materialize(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            if let Mark::Lazy { .. } = p.mark {
                p.mark = Mark::Stored(p.mark.spindle(&self.params, self.n_grid));
            }
        }
        out
    }

    pub fn drift(&self) -> f64 {
        ExcursionMeasureTable::new(self.params).drift(self.cutoff)
    }

    /// Points with `t ∈ [a, b]`, shifted to start at 0 when `shift` is set.
    pub fn restrict(&self, a: f64, b: f64, shift: bool) -> Result<Self> {
        if !(a <= b) {
            return Err(Error::param("restriction window needs a <= b"));
        }
        let pts = self
            .points
            .iter()
            .filter(|p| p.t >= a && p.t <= b)
            .map(|p| Point { t: if shift { p.t - a } else { p.t }, mark: p.mark.clone() })
            .collect();
        let hi = b.min(self.length.max(a));
        let length = if shift { hi - a } else { hi };
        Ok(SpindlePointProcess { points: pts, length, ..self.meta() })
    }

    pub fn with_length(mut self, length: f64) -> Self {
        self.length = length;
        self
    }

    /// Same parameters, no points.
    pub fn meta(&self) -> Self {
        SpindlePointProcess {
            params: self.params,
            cutoff: self.cutoff,
            length: self.length,
            n_grid: self.n_grid,
            seed: self.seed,
            points: Vec::new(),
        }
    }

    /// Write as JSONL: header record, then one record per point.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = PpHeader {
            alpha: self.params.alpha,
            q: self.params.q,
            c: self.params.c,
            cutoff: self.cutoff,
            horizon: self.length,
            seed: self.seed,
            n_grid: Some(self.n_grid),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for p in &self.points {
            let rec = PointRecord { t: p.t, spindle: p.mark.spindle(&self.params, self.n_grid).to_record() };
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
        let header: PpHeader = match lines.next() {
            Some(l) => serde_json::from_str(&l?)?,
            None => return Err(Error::format("empty point-process file")),
        };
        let params = DiffusionParams::new(header.alpha, header.q, header.c)?;
        let mut points = Vec::new();
        for l in lines {
            let rec: PointRecord = serde_json::from_str(&l?)?;
            points.push(Point { t: rec.t, mark: Mark::Stored(Spindle::from_record(&rec.spindle)?) });
        }
        if points.windows(2).any(|w: &[Point]| w[1].t == w[0].t) {
            return Err(Error::format("duplicate point times"));
        }
        let mut pp = SpindlePointProcess::new(params, header.cutoff, header.horizon, points)
            .map_err(|e| Error::format(e.to_string()))?;
        pp.seed = header.seed;
        if let Some(n) = header.n_grid {
            pp.n_grid = n;
        }
        Ok(pp)
    }

    pub fn from_jsonl(s: &str) -> Result<Self> {
        Self::read_jsonl(s.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpHeader {
    pub alpha: f64,
    pub q: f64,
    pub c: f64,
    pub cutoff: f64,
    pub horizon: f64,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub t: f64,
    pub spindle: SpindleRecord,
}

/// Sampled lifetime above the cutoff: density `∝ x^{-2-α}` on `(ε, ∞)`.
pub fn sample_truncated_lifetime<R: Rng + ?Sized>(alpha: f64, eps: f64, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    eps * u.powf(-1.0 / (1.0 + alpha))
}

/// Poisson random measure of spindles with lifetimes above `eps` on `[0, horizon]`.
pub fn sample_prm<R: Rng + ?Sized>(
    params: &DiffusionParams,
    eps: f64,
    horizon: f64,
    budget: usize,
    rng: &mut R,
) -> Result<SpindlePointProcess> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param(format!("cutoff must be positive and finite, got {eps}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::param(format!("horizon must be finite and nonnegative, got {horizon}")));
    }
    let mean = horizon * ExcursionMeasureTable::new(*params).jump_rate(eps);
    if mean > budget as f64 {
        return Err(Error::Budget(format!(
            "expected {mean:.3e} points exceeds the budget of {budget}; raise the cutoff or the budget"
        )));
    }
    let n = if mean > 0.0 { Poisson::new(mean).expect("finite rate").sample(rng) as usize } else { 0 };
    let mut times: Vec<f64> = (0..n).map(|_| horizon * rng.random::<f64>()).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let points = times
        .into_iter()
        .map(|t| {
            let zeta = sample_truncated_lifetime(params.alpha, eps, rng);
            Point { t, mark: Mark::Lazy { seed: rng.next_u64(), zeta } }
        })
        .collect();
    SpindlePointProcess::new(*params, eps, horizon, points)
}

/// One piece of a scaffolding: at `t` the path stands at `pre`, jumps by
/// `jump`, then drifts down with the global slope until the next segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t: f64,
    pub pre: f64,
    pub jump: f64,
}

/// Exact piecewise-linear path with upward jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaffolding {
    pub slope: f64,
    pub horizon: f64,
    segments: Vec<Segment>,
}

/// Local time at a fixed level as a step function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeProfile {
    pub level: f64,
    /// `(t, ℓ(t+))` at each down-crossing of the level.
    pub knots: Vec<(f64, f64)>,
}

impl LocalTimeProfile {
    /// `ℓ(t)`: local time accumulated strictly before `t`.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.knots.partition_point(|&(s, _)| s < t);
        if k == 0 {
            0.0
        } else {
            self.knots[k - 1].1
        }
    }

    pub fn total(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.1)
    }

    /// `τ(s) = inf{t : ℓ(t) > s}`; infinite if never reached.
    pub fn inverse(&self, s: f64) -> f64 {
        let k = self.knots.partition_point(|&(_, l)| l <= s);
        self.knots.get(k).map_or(f64::INFINITY, |k| k.0)
    }
}

impl Scaffolding {
    /// Path starting at `start` at time 0, with the given segments (sorted by time).
    pub fn from_segments(slope: f64, horizon: f64, start: f64, mut segments: Vec<Segment>) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::param("scaffolding slope must be positive"));
        }
        if segments.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(Error::param("segments must be sorted by time"));
        }
        if segments.first().is_none_or(|s| s.t > 0.0) {
            segments.insert(0, Segment { t: 0.0, pre: start, jump: 0.0 });
        }
        Ok(Scaffolding { slope, horizon, segments })
    }

    /// `ξ(N)`.
    pub fn of(pp: &SpindlePointProcess) -> Self {
        Self::of_with_start(pp, 0.0)
    }

    /// `x0 + ξ(N)`.
    pub fn of_with_start(pp: &SpindlePointProcess, x0: f64) -> Self {
        let slope = pp.drift();
        let mut cum = x0;
        let mut segs = Vec::with_capacity(pp.len() + 1);
        for p in pp.points() {
            let z = p.lifetime();
            segs.push(Segment { t: p.t, pre: cum - slope * p.t, jump: z });
            cum += z;
        }
        Scaffolding::from_segments(slope, pp.length, x0, segs).expect("positive drift")
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Left end of segment `i` after its jump, and its left limit at the end.
    fn seg_values(&self, i: usize) -> (f64, f64, f64) {
        let s = self.segments[i];
        let end = self.segments.get(i + 1).map_or(self.horizon.max(s.t), |n| n.t);
        let v0 = s.pre + s.jump;
        (v0, v0 - self.slope * (end - s.t), end)
    }

    fn seg_index(&self, t: f64) -> usize {
        self.segments.partition_point(|s| s.t <= t).saturating_sub(1)
    }

    /// `X(t)`.
    pub fn value(&self, t: f64) -> f64 {
        let s = self.segments[self.seg_index(t)];
        s.pre + s.jump - self.slope * (t - s.t)
    }

    /// `X(t-)`.
    pub fn value_left(&self, t: f64) -> f64 {
        let k = self.segments.partition_point(|s| s.t < t);
        if k == 0 {
            return self.segments[0].pre;
        }
        let s = self.segments[k - 1];
        let v = s.pre + s.jump - self.slope * (t - s.t);
        match self.segments.get(k) {
            Some(n) if n.t == t && n.jump == 0.0 => n.pre,
            _ => v,
        }
    }

    pub fn end_value(&self) -> f64 {
        self.seg_values(self.segments.len() - 1).1
    }

    pub fn max(&self) -> f64 {
        self.segments.iter().map(|s| s.pre + s.jump).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        (0..self.segments.len())
            .map(|i| self.seg_values(i).1.min(self.segments[i].pre))
            .fold(f64::INFINITY, f64::min)
    }

    /// Down-crossings of `y` as `(time, segment index)`.
    pub fn down_crossings(&self, y: f64) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        for i in 0..self.segments.len() {
            let (v0, v1, end) = self.seg_values(i);
            if v1 < y && y <= v0 {
                let t = (self.segments[i].t + (v0 - y) / self.slope).min(end);
                out.push((t, i));
            }
        }
        out
    }

    pub fn local_time_profile(&self, y: f64) -> LocalTimeProfile {
        let inc = 1.0 / self.slope;
        let mut l = 0.0;
        let knots = self
            .down_crossings(y)
            .into_iter()
            .map(|(t, _)| {
                l += inc;
                (t, l)
            })
            .collect();
        LocalTimeProfile { level: y, knots }
    }

    /// `ℓ^y(t)`: occupation density of the level `y` over `[0, t]`.
    pub fn local_time(&self, y: f64, t: f64) -> f64 {
        let inc = 1.0 / self.slope;
        let mut l = 0.0;
        for i in 0..self.segments.len() {
            let s = self.segments[i];
            if s.t > t {
                break;
            }
            let (v0, v1, end) = self.seg_values(i);
            let v_end = if t < end { s.pre + s.jump - self.slope * (t - s.t) } else { v1 };
            if v_end < y && y <= v0 {
                l += inc;
            }
        }
        l
    }

    /// `τ^y(s) = inf{t : ℓ^y(t) > s}`.
    pub fn inverse_local_time(&self, y: f64, s: f64) -> f64 {
        self.local_time_profile(y).inverse(s)
    }

    /// `T^y = inf{t : X(t) = y}`.
    pub fn hitting_time(&self, y: f64) -> f64 {
        for i in 0..self.segments.len() {
            let (v0, v1, end) = self.seg_values(i);
            let s = self.segments[i];
            if v0 == y {
                return s.t;
            }
            if v1 <= y && y < v0 {
                return (s.t + (v0 - y) / self.slope).min(end);
            }
        }
        f64::INFINITY
    }

    /// `T^{≥y} = inf{t : X(t) ≥ y}`.
    pub fn crossing_time(&self, y: f64) -> f64 {
        self.segments
            .iter()
            .find(|s| s.pre + s.jump >= y)
            .map_or(f64::INFINITY, |s| s.t)
    }

    /// CSV rows `t, X(t-), X(t)` at every event time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x_left,x\n");
        for s in &self.segments {
            out.push_str(&format!("{},{},{}\n", s.t, s.pre, s.pre + s.jump));
        }
        out
    }
}

/// Concatenation of point processes: each shifted by the total length before it.
pub fn concat_pp(parts: &[SpindlePointProcess]) -> Result<SpindlePointProcess> {
    let first = match parts.first() {
        Some(p) => p,
        None => return Err(Error::param("concatenation of an empty family needs parameters; use SpindlePointProcess::empty")),
    };
    let mut points = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    let mut off = 0.0;
    for p in parts {
        if p.params != first.params || p.cutoff != first.cutoff {
            return Err(Error::param("concatenated processes must share parameters and cutoff"));
        }
        for pt in p.points() {
            points.push(Point { t: off + pt.t, mark: pt.mark.clone() });
        }
        off += p.length;
    }
    let mut out = SpindlePointProcess::new(first.params, first.cutoff, off, points)?;
    out.n_grid = first.n_grid;
    Ok(out)
}

/// Concatenation of excursion scaffoldings, each starting and ending at 0.
pub fn concat_scaffolding(parts: &[Scaffolding], tol: f64) -> Result<Scaffolding> {
    let first = match parts.first() {
        Some(p) => p,
        None => return Err(Error::param("empty family")),
    };
    let mut segs = Vec::new();
    let mut off = 0.0;
    for p in parts {
        if p.slope != first.slope {
            return Err(Error::param("concatenated scaffoldings must share the drift"));
        }
        let scale = 1.0 + p.max().abs();
        if p.segments[0].pre != 0.0 || p.end_value().abs() > tol * scale {
            return Err(Error::param("scaffolding concatenation needs excursions from 0 back to 0"));
        }
        for (k, s) in p.segments.iter().enumerate() {
            let pre = if k == 0 { 0.0 } else { s.pre };
            segs.push(Segment { t: off + s.t, pre, jump: s.jump });
        }
        off += p.horizon;
    }
    // Two segments at the same time only if a part has zero length.
    segs.dedup_by(|b, a| b.t == a.t && b.jump == 0.0);
    Scaffolding::from_segments(first.slope, off, 0.0, segs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> DiffusionParams {
        DiffusionParams::besq(0.5).unwrap()
    }

    fn stored(z: f64) -> Mark {
        Mark::Stored(Spindle::from_samples(z, vec![0.0, z, 0.0]).unwrap())
    }

    #[test]
    fn single_jump_geometry() {
        let pp = SpindlePointProcess::new(params(), 1e-2, 10.0, vec![Point { t: 0.0, mark: stored(1.0) }]).unwrap();
        let x = Scaffolding::of(&pp);
        let s = x.slope;
        assert_eq!(x.value(0.0), 1.0);
        assert!((x.hitting_time(0.0) - 1.0 / s).abs() < 1e-12);
        assert_eq!(x.local_time(0.5, 10.0), 1.0 / s);
        assert_eq!(x.local_time(2.0, 10.0), 0.0);
        assert_eq!(x.crossing_time(0.5), 0.0);
        assert_eq!(x.inverse_local_time(0.5, 0.0), 0.5 / s);
        assert_eq!(x.inverse_local_time(0.5, 1.0 / s), f64::INFINITY);
    }

    #[test]
    fn crossing_before_hitting_when_jump_straddles() {
        let pts = vec![Point { t: 1.0, mark: stored(5.0) }];
        let pp = SpindlePointProcess::new(params(), 0.1, 100.0, pts).unwrap();
        let x = Scaffolding::of(&pp);
        let y = 1.0;
        assert!(x.value_left(1.0) < y && y < x.value(1.0));
        assert_eq!(x.crossing_time(y), 1.0);
        assert!(x.hitting_time(y) > 1.0);
    }

    #[test]
    fn prm_jsonl_round_trip() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let mut pp = sample_prm(&params(), 0.05, 2.0, 1_000_000, &mut r).unwrap();
        pp.n_grid = 16;
        let s = pp.to_jsonl();
        let back = SpindlePointProcess::from_jsonl(&s).unwrap();
        assert_eq!(back.to_jsonl(), s);
        assert_eq!(back.len(), pp.len());
    }

    #[test]
    fn duplicate_times_rejected() {
        let pp = SpindlePointProcess::new(params(), 0.1, 5.0, vec![Point { t: 1.0, mark: stored(1.0) }]).unwrap();
        let s = pp.to_jsonl();
        let line = s.lines().nth(1).unwrap();
        let dup = format!("{s}{line}\n");
        assert!(SpindlePointProcess::from_jsonl(&dup).is_err());
    }

    #[test]
    fn budget_error() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let e = sample_prm(&params(), 1e-9, 10.0, 1000, &mut r).unwrap_err();
        assert!(e.is_budget() && e.to_string().contains("1000"));
    }

    #[test]
    fn restriction_and_concat() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let pp = sample_prm(&params(), 0.05, 3.0, 1_000_000, &mut r).unwrap();
        assert_eq!(pp.restrict(0.0, 3.0, true).unwrap(), pp);
        let a = pp.restrict(0.0, 1.0, true).unwrap();
        let b = pp.restrict(1.0, 3.0, true).unwrap();
        let (na, nb) = (a.len(), b.len());
        let c = concat_pp(&[a, b]).unwrap();
        assert_eq!(c.length, 3.0);
        assert_eq!(c.len(), na + nb);
    }
}
