//! Standalone SVG figures.

use ipevo::scaffold::{Scaffolding, SpindlePointProcess};
use ipevo::skewer::SkewerSnapshot;
use std::fmt::Write;

const WIDTH: f64 = 900.0;
const MARGIN: f64 = 50.0;
/// Spindles drawn as shaded shapes; the rest only as jumps.
const MAX_BLOBS: usize = 400;
const BLOB_POINTS: usize = 64;

/// Fill colour for a block, fixed by its id so it is the same at every level.
pub fn color(id: f64) -> String {
    // splitmix64 finaliser on the bit pattern.
    let mut z = id.to_bits().wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    let h = (z >> 11) as f64 / (1u64 << 53) as f64 * 6.0;
    let (s, l) = (0.65, 0.55);
    let chroma = (1.0 - (2.0 * l - 1.0f64).abs()) * s;
    let x = chroma * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = l - chroma / 2.0;
    let byte = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    format!("#{:02x}{:02x}{:02x}", byte(r), byte(g), byte(b))
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    w: f64,
    h: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64, h: f64) -> Self {
        let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Frame { x0, x1, y0, y1, w: WIDTH, h }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (self.w - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        self.h - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (self.h - 2.0 * MARGIN)
    }

    fn open(&self, title: &str) -> String {
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
            w = self.w,
            h = self.h
        )
        .unwrap();
        writeln!(s, "<title>{title}</title>").unwrap();
        writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        s
    }

    fn axes(&self, s: &mut String, xlabel: &str, ylabel: &str) {
        let (l, r) = (MARGIN, self.w - MARGIN);
        let (t, b) = (MARGIN, self.h - MARGIN);
        writeln!(s, r#"<g class="axes" stroke="black" stroke-width="1">"#).unwrap();
        writeln!(s, r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}"/>"#).unwrap();
        writeln!(s, r#"<line x1="{l}" y1="{b}" x2="{l}" y2="{t}"/>"#).unwrap();
        writeln!(s, "</g>").unwrap();
        writeln!(s, r#"<g class="labels" fill="black">"#).unwrap();
        writeln!(s, r#"<text x="{l}" y="{:.1}" text-anchor="middle">{}</text>"#, b + 15.0, num(self.x0)).unwrap();
        writeln!(s, r#"<text x="{r}" y="{:.1}" text-anchor="middle">{}</text>"#, b + 15.0, num(self.x1)).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{b}" text-anchor="end">{}</text>"#, l - 4.0, num(self.y0)).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{t}" text-anchor="end">{}</text>"#, l - 4.0, num(self.y1)).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xlabel}</text>"#, (l + r) / 2.0, b + 30.0).unwrap();
        writeln!(s, r#"<text x="12" y="{:.1}" text-anchor="middle" transform="rotate(-90 12 {:.1})">{ylabel}</text>"#, (t + b) / 2.0, (t + b) / 2.0).unwrap();
        writeln!(s, "</g>").unwrap();
    }
}

fn num(x: f64) -> String {
    format!("{:.4}", x).trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Scaffolding path with each jump decorated by its spindle, drawn
/// symmetrically about the jump with half-width proportional to mass.
pub fn scaffolding(pp: &SpindlePointProcess) -> String {
    let x = Scaffolding::of(pp);
    let (lo, hi) = if pp.is_empty() { (0.0, 1.0) } else { (x.min().min(0.0), x.max().max(0.0)) };
    let f = Frame::new(0.0, pp.length, lo, hi, 600.0);
    let mut s = f.open("scaffolding and spindles");
    f.axes(&mut s, "time", "level");
    if pp.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }

    let mut order: Vec<usize> = (0..pp.len()).collect();
    order.sort_by(|&a, &b| pp.points()[b].lifetime().total_cmp(&pp.points()[a].lifetime()).then(a.cmp(&b)));
    order.truncate(MAX_BLOBS);
    order.sort_unstable();
    let spindles: Vec<_> = order.iter().map(|&i| (i, pp.spindle(i))).collect();
    let top = spindles.iter().map(|(_, g)| g.amplitude()).fold(0.0, f64::max);
    let half = if top > 0.0 { 0.04 * (f.w - 2.0 * MARGIN) / top } else { 0.0 };

    writeln!(s, r#"<g class="spindles" stroke="black" stroke-width="0.4" fill-opacity="0.6">"#).unwrap();
    for (i, g) in &spindles {
        let p = &pp.points()[*i];
        let seg = &x.segments()[*i];
        let z = g.lifetime();
        let cx = f.px(p.t);
        let hs: Vec<f64> = (0..=BLOB_POINTS).map(|k| z * k as f64 / BLOB_POINTS as f64).collect();
        let mut pts = String::new();
        for &h in &hs {
            write!(pts, "{:.2},{:.2} ", cx + half * g.value(h), f.py(seg.pre + h)).unwrap();
        }
        for &h in hs.iter().rev() {
            write!(pts, "{:.2},{:.2} ", cx - half * g.value(h), f.py(seg.pre + h)).unwrap();
        }
        writeln!(s, r#"<polygon class="spindle" fill="{}" points="{}"/>"#, color(p.t), pts.trim_end()).unwrap();
    }
    writeln!(s, "</g>").unwrap();

    let mut d = format!("M{:.2},{:.2}", f.px(0.0), f.py(0.0));
    for seg in x.segments() {
        write!(d, " L{:.2},{:.2} M{:.2},{:.2}", f.px(seg.t), f.py(seg.pre), f.px(seg.t), f.py(seg.pre + seg.jump)).unwrap();
    }
    write!(d, " L{:.2},{:.2}", f.px(pp.length), f.py(x.end_value())).unwrap();
    writeln!(s, r#"<path class="scaffolding" fill="none" stroke="black" stroke-width="0.8" d="{d}"/>"#).unwrap();

    let mut jumps = String::new();
    for seg in x.segments() {
        write!(jumps, "M{:.2},{:.2} V{:.2} ", f.px(seg.t), f.py(seg.pre), f.py(seg.pre + seg.jump)).unwrap();
    }
    writeln!(s, r#"<path class="jumps" fill="none" stroke="gray" stroke-width="0.5" stroke-dasharray="2,2" d="{}"/>"#, jumps.trim_end()).unwrap();
    s.push_str("</svg>\n");
    s
}

fn top_mass(snaps: &[SkewerSnapshot]) -> f64 {
    snaps.iter().map(|x| x.partition.total_mass()).fold(0.0, f64::max)
}

/// One horizontal strip per level (lowest at the bottom), blocks laid out left to right.
pub fn skewer_strips(snaps: &[SkewerSnapshot]) -> String {
    let n = snaps.len();
    let strip = if n == 0 { 10.0 } else { (600.0 / n as f64).clamp(2.0, 24.0) };
    let height = 2.0 * MARGIN + strip * n.max(1) as f64;
    let lo = snaps.first().map_or(0.0, |x| x.level);
    let hi = snaps.last().map_or(1.0, |x| x.level);
    let f = Frame::new(0.0, top_mass(snaps), lo, hi, height);
    let mut s = f.open("skewer strips");
    f.axes(&mut s, "mass", "level");
    let scale = (f.w - 2.0 * MARGIN) / (f.x1 - f.x0);
    for (k, snap) in snaps.iter().enumerate() {
        let y = height - MARGIN - strip * (k + 1) as f64;
        writeln!(s, r#"<g class="strip" data-level="{}">"#, snap.level).unwrap();
        let mut left = MARGIN;
        for (b, &id) in snap.partition.blocks().iter().zip(&snap.block_ids) {
            let w = b.mass * scale;
            writeln!(s, r#"<rect x="{left:.3}" y="{y:.3}" width="{w:.3}" height="{:.3}" fill="{}"/>"#, strip * 0.9, color(id)).unwrap();
            left += w;
        }
        writeln!(s, "</g>").unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Stacked block masses against level, one column per level.
pub fn massflow(snaps: &[SkewerSnapshot]) -> String {
    let lo = snaps.first().map_or(0.0, |x| x.level);
    let hi = snaps.last().map_or(1.0, |x| x.level);
    let f = Frame::new(lo, hi, 0.0, top_mass(snaps), 600.0);
    let mut s = f.open("mass flow");
    f.axes(&mut s, "level", "mass");
    let n = snaps.len().max(1) as f64;
    let col = (f.w - 2.0 * MARGIN) / n;
    let unit = (f.h - 2.0 * MARGIN) / (f.y1 - f.y0);
    for (k, snap) in snaps.iter().enumerate() {
        let x = MARGIN + col * k as f64;
        writeln!(s, r#"<g class="column" data-level="{}">"#, snap.level).unwrap();
        let mut base = f.h - MARGIN;
        for (b, &id) in snap.partition.blocks().iter().zip(&snap.block_ids) {
            let h = b.mass * unit;
            base -= h;
            writeln!(s, r#"<rect x="{x:.3}" y="{base:.3}" width="{col:.3}" height="{h:.3}" fill="{}"/>"#, color(id)).unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_is_stable_hex() {
        assert_eq!(color(0.25), color(0.25));
        assert_ne!(color(0.25), color(0.5));
        let c = color(1.0);
        assert!(c.len() == 7 && c.starts_with('#'));
    }
}
