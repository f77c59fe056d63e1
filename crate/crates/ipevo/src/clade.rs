//! Excursion intervals, bi-clades, clade construction and cutoffs.

use crate::error::{Error, Result};
use crate::scaffold::{
    sample_truncated_lifetime, Mark, Point, PointRecord, PpHeader, Scaffolding, SpindlePointProcess,
    DEFAULT_N_GRID, DEFAULT_POINT_BUDGET,
};
use crate::spindle::{sample_block_diffusion_exact, simulate_block_diffusion, DiffusionParams, ExcursionMeasureTable, Spindle};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// How the initial block diffusion of a clade is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BlockSampler {
    /// Euler scheme with step `min(dt, 1e-3·z)`, `z` the BESQ starting height.
    Euler { dt: f64 },
    /// Inverse-gamma lifetime plus an exact bridge on the spindle grid.
    Exact,
}

/// When a clade construction may stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Run until the scaffolding returns to its starting level.
    Exhaust,
    /// Stop as soon as the scaffolding reaches the level cap.
    AtCap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CladeConfig {
    pub eps: f64,
    pub block: BlockSampler,
    pub n_grid: usize,
    /// Spindles crossing this level are replaced by their part below it and
    /// the path continues from the cap. Skewers at levels below the cap are
    /// unaffected.
    pub cap: Option<f64>,
    pub stop: StopRule,
    pub budget: usize,
}

impl Default for CladeConfig {
    fn default() -> Self {
        CladeConfig {
            eps: 1e-3,
            block: BlockSampler::Euler { dt: 1e-3 },
            n_grid: DEFAULT_N_GRID,
            cap: None,
            stop: StopRule::Exhaust,
            budget: DEFAULT_POINT_BUDGET,
        }
    }
}

/// A block diffusion from mass `a` as a spindle.
pub fn initial_spindle<R: Rng + ?Sized>(
    params: &DiffusionParams,
    a: f64,
    block: BlockSampler,
    n_grid: usize,
    rng: &mut R,
) -> Result<Spindle> {
    match block {
        BlockSampler::Exact => sample_block_diffusion_exact(params, a, n_grid, rng),
        BlockSampler::Euler { dt } => {
            let z = params.besq_height(a);
            let path = simulate_block_diffusion(params, a, dt.min(1e-3 * z), rng)?;
            path.to_spindle().ok_or_else(|| Error::param("initial mass must be positive"))
        }
    }
}

/// `δ(0, f) + N|[0, T]` with `N` a PRM of spindles and `T` the time its
/// scaffolding hits `-ζ(f)`, generated jump by jump.
pub fn grow_clade<R: Rng + ?Sized>(
    params: &DiffusionParams,
    f: Spindle,
    cfg: &CladeConfig,
    rng: &mut R,
) -> Result<SpindlePointProcess> {
    let table = ExcursionMeasureTable::new(*params);
    let slope = table.drift(cfg.eps);
    let rate = table.jump_rate(cfg.eps);
    let cap = cfg.cap.unwrap_or(f64::INFINITY);

    let mut points = Vec::new();
    let first = cap_mark(Mark::Stored(f), 0.0, cap, params, cfg.n_grid)?;
    let mut x = first.lifetime();
    points.push(Point { t: 0.0, mark: first });
    let mut t = 0.0f64;
    let length = loop {
        if cfg.stop == StopRule::AtCap && x >= cap {
            break t;
        }
        let dt = rng.sample::<f64, _>(Exp1) / rate;
        let pre = x - slope * dt;
        if pre <= 0.0 {
            break t + x / slope;
        }
        t += dt;
        let zeta = sample_truncated_lifetime(params.alpha, cfg.eps, rng);
        let mark = cap_mark(Mark::Lazy { seed: rng.next_u64(), zeta }, pre, cap, params, cfg.n_grid)?;
        x = pre + mark.lifetime();
        points.push(Point { t, mark });
        if points.len() > cfg.budget {
            return Err(Error::Budget(format!("clade exceeded the budget of {} points", cfg.budget)));
        }
    };
    let mut pp = SpindlePointProcess::new(*params, cfg.eps, length, points)?;
    pp.n_grid = cfg.n_grid;
    Ok(pp)
}

fn cap_mark(mark: Mark, pre: f64, cap: f64, params: &DiffusionParams, n_grid: usize) -> Result<Mark> {
    let z = mark.lifetime();
    if pre + z <= cap {
        return Ok(mark);
    }
    let (check, _) = mark.spindle(params, n_grid).split(cap - pre)?;
    Ok(Mark::Stored(check))
}

/// Endpoint type of an excursion interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcursionKind {
    Complete,
    FirstIncomplete,
    LastIncomplete,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcursionInterval {
    pub a: f64,
    pub b: f64,
    pub includes_a: bool,
    pub includes_b: bool,
    pub kind: ExcursionKind,
}

impl ExcursionInterval {
    pub fn contains(&self, t: f64) -> bool {
        (t > self.a || (t == self.a && self.includes_a)) && (t < self.b || (t == self.b && self.includes_b))
    }
}

#[derive(Debug, Clone, Copy)]
struct LevelTime {
    t: f64,
    left: f64,
    right: f64,
}

fn snap(v: f64, y: f64, tol: f64) -> f64 {
    if (v - y).abs() <= tol {
        y
    } else {
        v
    }
}

/// Times at which `X(t-) = y` or `X(t) = y`, with the snapped values there.
fn level_times(x: &Scaffolding, y: f64, tol: f64) -> Vec<LevelTime> {
    let segs = x.segments();
    let mut out: Vec<LevelTime> = Vec::new();
    for (i, s) in segs.iter().enumerate() {
        let end = segs.get(i + 1).map_or(x.horizon.max(s.t), |n| n.t);
        let pre = snap(s.pre, y, tol);
        let v0 = snap(s.pre + s.jump, y, tol);
        let v1 = snap(s.pre + s.jump - x.slope * (end - s.t), y, tol);
        if pre == y || v0 == y {
            out.push(LevelTime { t: s.t, left: pre, right: v0 });
        }
        if v1 < y && y < v0 {
            let t = (s.t + (v0 - y) / x.slope).min(end);
            out.push(LevelTime { t, left: y, right: y });
        }
        if i + 1 == segs.len() && v1 == y && end > s.t {
            out.push(LevelTime { t: end, left: y, right: y });
        }
    }
    out.dedup_by(|b, a| b.t == a.t);
    out
}

/// Excursion intervals of `X` about `y`, including incomplete first and last
/// ones, with endpoint inclusion per the degenerate-excursion rules.
pub fn excursion_intervals(x: &Scaffolding, y: f64, tol_level: f64) -> Vec<ExcursionInterval> {
    let lt = level_times(x, y, tol_level);
    let len = x.horizon;
    let at = |t: f64| -> (f64, f64) {
        match lt.iter().find(|l| l.t == t) {
            Some(l) => (l.left, l.right),
            None => (snap(x.value_left(t), y, tol_level), snap(x.value(t), y, tol_level)),
        }
    };
    let make = |a: f64, b: f64, kind| {
        let (la, ra) = at(a);
        let (lb, rb) = at(b);
        ExcursionInterval {
            a,
            b,
            includes_a: !(a < b && la < y && ra == y),
            includes_b: !(a < b && lb == y && y < rb),
            kind,
        }
    };
    let mut out = Vec::new();
    let first_t = lt.first().map_or(len, |l| l.t);
    let last_t = lt.last().map_or(0.0, |l| l.t);
    if y != 0.0 && first_t > 0.0 {
        out.push(make(0.0, first_t, ExcursionKind::FirstIncomplete));
    }
    for w in lt.windows(2) {
        out.push(make(w[0].t, w[1].t, ExcursionKind::Complete));
    }
    // If the last level time is the end of the path it also ends on the level.
    if !lt.is_empty() && last_t < len {
        out.push(make(last_t, len, ExcursionKind::LastIncomplete));
    }
    out
}

/// A point process whose scaffolding is one excursion about a level.
#[derive(Debug, Clone, PartialEq)]
pub struct BiClade {
    /// Spindles, shifted to start at time 0.
    pub process: SpindlePointProcess,
    /// Start time in the source process.
    pub origin: f64,
    pub level: f64,
    /// Starting value of the scaffolding relative to the level.
    pub start: f64,
    /// Index of the spindle crossing the level, if any.
    pub crossing: Option<usize>,
    pub m0: f64,
    pub zeta_plus: f64,
    pub zeta_minus: f64,
    /// Local time at the level accumulated before the excursion.
    pub s: f64,
    pub kind: ExcursionKind,
    source_times: Option<Vec<f64>>,
}

impl BiClade {
    fn build(
        process: SpindlePointProcess,
        origin: f64,
        level: f64,
        start: f64,
        s: f64,
        kind: ExcursionKind,
        source_times: Option<Vec<f64>>,
    ) -> Self {
        let x = Scaffolding::of_with_start(&process, start);
        let mut crossing = None;
        let mut m0 = 0.0;
        for seg in x.segments() {
            if seg.jump > 0.0 && seg.pre < 0.0 && seg.pre + seg.jump > 0.0 {
                let k = process.points().partition_point(|p| p.t < seg.t);
                if k < process.len() && process.points()[k].t == seg.t {
                    crossing = Some(k);
                    m0 = process.spindle(k).value(-seg.pre);
                }
                break;
            }
        }
        let (hi, lo) = (x.max(), x.min());
        BiClade {
            zeta_plus: hi.max(0.0),
            zeta_minus: (-lo).max(0.0),
            process,
            origin,
            level,
            start,
            crossing,
            m0,
            s,
            kind,
            source_times,
        }
    }

    /// Crossing time `T₀⁺` relative to the start.
    pub fn t0_plus(&self) -> Option<f64> {
        self.crossing.map(|k| self.process.points()[k].t)
    }

    pub fn length(&self) -> f64 {
        self.process.length
    }

    /// Scaffolding relative to the level.
    pub fn scaffolding(&self) -> Scaffolding {
        Scaffolding::of_with_start(&self.process, self.start)
    }

    fn absolute_times(&self) -> Vec<f64> {
        match &self.source_times {
            Some(t) => t.clone(),
            None => self.process.points().iter().map(|p| self.origin + p.t).collect(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let p = &self.process;
        let header = BiCladeHeader {
            pp: PpHeader {
                alpha: p.params.alpha,
                q: p.params.q,
                c: p.params.c,
                cutoff: p.cutoff,
                horizon: p.length,
                seed: p.seed,
                n_grid: Some(p.n_grid),
            },
            s: self.s,
            m0: self.m0,
            t0_plus: self.t0_plus(),
            zeta_plus: self.zeta_plus,
            zeta_minus: self.zeta_minus,
            level: self.level,
            origin: self.origin,
            start: self.start,
            kind: self.kind,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for (i, pt) in p.points().iter().enumerate() {
            let rec = PointRecord { t: pt.t, spindle: p.spindle(i).to_record() };
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
        let h: BiCladeHeader = match lines.next() {
            Some(l) => serde_json::from_str(&l?)?,
            None => return Err(Error::format("empty bi-clade file")),
        };
        let params = DiffusionParams::new(h.pp.alpha, h.pp.q, h.pp.c)?;
        let mut points = Vec::new();
        for l in lines {
            let rec: PointRecord = serde_json::from_str(&l?)?;
            points.push(Point { t: rec.t, mark: Mark::Stored(Spindle::from_record(&rec.spindle)?) });
        }
        if points.windows(2).any(|w: &[Point]| w[1].t == w[0].t) {
            return Err(Error::format("duplicate point times"));
        }
        let mut pp = SpindlePointProcess::new(params, h.pp.cutoff, h.pp.horizon, points).map_err(|e| Error::format(e.to_string()))?;
        pp.seed = h.pp.seed;
        pp.n_grid = h.pp.n_grid.unwrap_or(DEFAULT_N_GRID);
        let mut b = BiClade::build(pp, h.origin, h.level, h.start, h.s, h.kind, None);
        // Keep the recorded summaries; they may come from a finer source path.
        b.m0 = h.m0;
        b.zeta_plus = h.zeta_plus;
        b.zeta_minus = h.zeta_minus;
        Ok(b)
    }

    pub fn from_jsonl(s: &str) -> Result<Self> {
        Self::read_jsonl(s.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BiCladeHeader {
    #[serde(flatten)]
    pp: PpHeader,
    s: f64,
    m0: f64,
    #[serde(rename = "T0plus")]
    t0_plus: Option<f64>,
    zeta_plus: f64,
    zeta_minus: f64,
    level: f64,
    origin: f64,
    start: f64,
    kind: ExcursionKind,
}

/// The bi-clades of `N` about level `y`, in time order.
pub fn decompose_biclades(pp: &SpindlePointProcess, y: f64) -> Vec<BiClade> {
    let x = Scaffolding::of(pp);
    let profile = x.local_time_profile(y);
    let pts = pp.points();
    excursion_intervals(&x, y, 0.0)
        .into_iter()
        .map(|iv| {
            let lo = pts.partition_point(|p| p.t < iv.a);
            let hi = pts.partition_point(|p| p.t <= iv.b);
            let chosen: Vec<&Point> = pts[lo..hi].iter().filter(|p| iv.contains(p.t)).collect();
            let source: Vec<f64> = chosen.iter().map(|p| p.t).collect();
            let shifted = chosen.iter().map(|p| Point { t: p.t - iv.a, mark: p.mark.clone() }).collect();
            let mut sub = SpindlePointProcess::new(pp.params, pp.cutoff, iv.b - iv.a, shifted).expect("sorted subset");
            sub.n_grid = pp.n_grid;
            sub.seed = pp.seed;
            // Complete and last excursions start on the level; a point at `a`
            // sits after the jump, so the first excursion starts from X(a-).
            let start = match iv.kind {
                ExcursionKind::FirstIncomplete if chosen.first().is_some_and(|p| p.t == iv.a) => x.value_left(iv.a) - y,
                ExcursionKind::FirstIncomplete => x.value(iv.a) - y,
                _ => 0.0,
            };
            BiClade::build(sub, iv.a, y, start, profile.at(iv.a), iv.kind, Some(source))
        })
        .collect()
}

/// Split a bi-clade at its crossing spindle into the anti-clade (below the
/// level, ending with the lower half) and the clade (starting with the upper
/// half). Without a crossing the whole bi-clade goes to the side it lives on.
pub fn split_biclade(b: &BiClade) -> Result<(BiClade, BiClade)> {
    let empty = |origin: f64| BiClade::build(b.process.restrict(0.0, 0.0, true).expect("valid window").with_length(0.0), origin, b.level, 0.0, b.s, b.kind, Some(Vec::new()));
    let k = match b.crossing {
        Some(k) => k,
        None => {
            return Ok(if b.zeta_plus > 0.0 { (empty(b.origin), b.clone()) } else { (b.clone(), empty(b.origin + b.length())) });
        }
    };
    let pts = b.process.points();
    let tk = pts[k].t;
    let x = b.scaffolding();
    let pre = x.value_left(tk);
    let (check, hat) = b.process.spindle(k).split(-pre)?;
    let src = b.absolute_times();

    let mut anti_pts: Vec<Point> = pts[..k].to_vec();
    anti_pts.push(Point { t: tk, mark: Mark::Stored(check) });
    let mut anti_pp = SpindlePointProcess::new(b.process.params, b.process.cutoff, tk, anti_pts)?;
    anti_pp.n_grid = b.process.n_grid;
    let mut anti = BiClade::build(anti_pp, b.origin, b.level, b.start, b.s, b.kind, Some(src[..=k].to_vec()));
    anti.crossing = Some(k);
    anti.m0 = b.m0;

    let mut clade_pts = vec![Point { t: 0.0, mark: Mark::Stored(hat) }];
    clade_pts.extend(pts[k + 1..].iter().map(|p| Point { t: p.t - tk, mark: p.mark.clone() }));
    let mut clade_pp = SpindlePointProcess::new(b.process.params, b.process.cutoff, b.length() - tk, clade_pts)?;
    clade_pp.n_grid = b.process.n_grid;
    let mut clade = BiClade::build(clade_pp, src[k], b.level, 0.0, b.s, b.kind, Some(src[k..].to_vec()));
    clade.crossing = Some(0);
    clade.m0 = b.m0;
    Ok((anti, clade))
}

/// Inverse of `split_biclade`.
pub fn reassemble_biclade(anti: &BiClade, clade: &BiClade) -> Result<BiClade> {
    let (ka, kc) = match (anti.crossing, clade.crossing) {
        (Some(a), Some(c)) => (a, c),
        _ => {
            // One side is the empty placeholder; a drift-only bi-clade has no points but positive length.
            let placeholder = |b: &BiClade| b.process.is_empty() && b.length() == 0.0;
            return Ok(if placeholder(anti) { clade.clone() } else { anti.clone() });
        }
    };
    let (ap, cp) = (anti.process.points(), clade.process.points());
    let joined = match (&ap[ka].mark, &cp[kc].mark) {
        (Mark::Stored(c), Mark::Stored(h)) => Spindle::rejoin(c, h).ok_or_else(|| Error::param("halves do not come from one spindle"))?,
        _ => return Err(Error::param("split halves must be stored spindles")),
    };
    let src: Vec<f64> = anti.absolute_times().into_iter().chain(clade.absolute_times().into_iter().skip(1)).collect();
    let origin = anti.origin;
    let mut pts: Vec<Point> = ap[..ka].to_vec();
    pts.push(Point { t: ap[ka].t, mark: Mark::Stored(joined) });
    pts.extend(cp[kc + 1..].iter().map(|p| Point { t: p.t + ap[ka].t, mark: p.mark.clone() }));
    // Shifted times are recomputed from the source times to stay exact.
    for (p, &t) in pts.iter_mut().zip(&src) {
        p.t = t - origin;
    }
    let mut pp = SpindlePointProcess::new(anti.process.params, anti.process.cutoff, anti.length() + clade.length(), pts)?;
    pp.n_grid = anti.process.n_grid;
    pp.seed = anti.process.seed;
    Ok(BiClade::build(pp, origin, anti.level, anti.start, anti.s, anti.kind, Some(src)))
}

/// Reconstruct the source process from its bi-clades, using recorded source times.
pub fn reassemble_process(template: &SpindlePointProcess, parts: &[BiClade]) -> Result<SpindlePointProcess> {
    let mut pts = Vec::new();
    for b in parts {
        for (p, t) in b.process.points().iter().zip(b.absolute_times()) {
            pts.push(Point { t, mark: p.mark.clone() });
        }
    }
    let mut out = SpindlePointProcess::new(template.params, template.cutoff, template.length, pts)?;
    out.n_grid = template.n_grid;
    out.seed = template.seed;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

/// The process cut off below or above level `y`: the concatenation of the
/// anti-clades (resp. clades) of its bi-clades, in order. The result has no
/// start offset: for `y < 0` the part below `y` really starts at `y`, so its
/// skewers are those of the original shifted by `y`.
pub fn cutoff(pp: &SpindlePointProcess, y: f64, side: Side) -> Result<SpindlePointProcess> {
    let mut parts = Vec::new();
    for b in decompose_biclades(pp, y) {
        let (anti, clade) = split_biclade(&b)?;
        parts.push(match side {
            Side::Below => anti.process,
            Side::Above => clade.process,
        });
    }
    if parts.is_empty() {
        return Ok(pp.meta().with_length(0.0));
    }
    crate::scaffold::concat_pp(&parts)
}

/// Time reversal of a bi-clade: spindle order reversed, each spindle reversed.
pub fn reverse_biclade(b: &BiClade) -> BiClade {
    let len = b.length();
    let pts: Vec<Point> = b
        .process
        .points()
        .iter()
        .rev()
        .enumerate()
        .map(|(i, p)| Point { t: len - p.t, mark: Mark::Stored(b.process.spindle(b.process.len() - 1 - i).reverse()) })
        .collect();
    let mut pp = SpindlePointProcess::new(b.process.params, b.process.cutoff, len, pts).expect("reversed order");
    pp.n_grid = b.process.n_grid;
    pp.seed = b.process.seed;
    let end = b.scaffolding().end_value();
    let mut r = BiClade::build(pp, b.origin, b.level, -end, b.s, b.kind, None);
    // The crossing spindle may touch the level exactly (sampled clades), so
    // carry it over by index rather than re-detecting it.
    if let Some(k) = b.crossing {
        r.crossing = Some(b.process.len() - 1 - k);
        r.m0 = b.m0;
    }
    r
}

/// A clade with central mass `a`: the block diffusion from `a` followed by
/// the scaffolding until it returns to the level.
pub fn sample_clade_given_m0<R: Rng + ?Sized>(
    a: f64,
    params: &DiffusionParams,
    cfg: &CladeConfig,
    rng: &mut R,
) -> Result<BiClade> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param(format!("central mass must be positive, got {a}")));
    }
    let f = initial_spindle(params, a, cfg.block, cfg.n_grid, rng)?;
    let pp = grow_clade(params, f, cfg, rng)?;
    let mut b = BiClade::build(pp, 0.0, 0.0, 0.0, 0.0, ExcursionKind::Complete, None);
    b.crossing = Some(0);
    b.m0 = a;
    Ok(b)
}

/// Anti-clade with central mass `a`, the reversal of a sampled clade.
pub fn sample_anticlade_given_m0<R: Rng + ?Sized>(
    a: f64,
    params: &DiffusionParams,
    cfg: &CladeConfig,
    rng: &mut R,
) -> Result<BiClade> {
    Ok(reverse_biclade(&sample_clade_given_m0(a, params, cfg, rng)?))
}
