use ipevo::clade::*;
use ipevo::scaffold::{sample_prm, Scaffolding, DEFAULT_POINT_BUDGET};
use ipevo::spindle::DiffusionParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn besq() -> DiffusionParams {
    DiffusionParams::besq(0.5).unwrap()
}

#[test]
fn every_spindle_in_one_biclade() {
    let mut r = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..30 {
        let pp = sample_prm(&besq(), 1e-2, 2.0, DEFAULT_POINT_BUDGET, &mut r).unwrap();
        let x = Scaffolding::of(&pp);
        let y = r.random_range(x.min()..x.max().max(x.min() + 1e-3));
        let parts = decompose_biclades(&pp, y);
        assert_eq!(parts.iter().map(|b| b.process.len()).sum::<usize>(), pp.len());
        let mut ends: Vec<(f64, f64)> = parts.iter().map(|b| (b.origin, b.origin + b.length())).collect();
        ends.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in ends.windows(2) {
            assert!(w[1].0 >= w[0].1 - 1e-9);
        }
        let back = reassemble_process(&pp, &parts).unwrap();
        assert_eq!(back.materialize(), pp.materialize());
    }
}

#[test]
fn cutoff_counts() {
    let mut r = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..30 {
        let pp = sample_prm(&besq(), 1e-2, 2.0, DEFAULT_POINT_BUDGET, &mut r).unwrap();
        let x = Scaffolding::of(&pp);
        let y = r.random_range(x.min()..x.max().max(x.min() + 1e-3));
        let straddle = decompose_biclades(&pp, y).iter().filter(|b| b.crossing.is_some()).count();
        let below = cutoff(&pp, y, Side::Below).unwrap().len();
        let above = cutoff(&pp, y, Side::Above).unwrap().len();
        assert_eq!(below + above - straddle, pp.len());
    }
    let pp = sample_prm(&besq(), 1e-2, 2.0, DEFAULT_POINT_BUDGET, &mut r).unwrap();
    let top = Scaffolding::of(&pp).max() + 1.0;
    assert_eq!(cutoff(&pp, top, Side::Below).unwrap().len(), pp.len());
}

#[test]
fn split_lifetimes_add_up() {
    let mut r = ChaCha8Rng::seed_from_u64(43);
    let pp = sample_prm(&besq(), 1e-2, 5.0, DEFAULT_POINT_BUDGET, &mut r).unwrap();
    for b in decompose_biclades(&pp, 0.0) {
        let Some(k) = b.crossing else { continue };
        let (anti, clade) = split_biclade(&b).unwrap();
        let whole = b.process.points()[k].lifetime();
        let check = anti.process.points().last().unwrap().lifetime();
        let hat = clade.process.points()[0].lifetime();
        assert!((check + hat - whole).abs() <= 1e-12 * whole);
        assert_eq!(reassemble_biclade(&anti, &clade).unwrap().process.materialize(), b.process.materialize());
    }
}

#[test]
fn reversal_is_involution_and_keeps_m0() {
    let mut r = ChaCha8Rng::seed_from_u64(44);
    let cfg = CladeConfig { eps: 1e-2, block: BlockSampler::Exact, n_grid: 32, ..Default::default() };
    for _ in 0..50 {
        let b = sample_clade_given_m0(0.7, &besq(), &cfg, &mut r).unwrap();
        assert_eq!(b.m0, 0.7);
        let rb = reverse_biclade(&b);
        assert_eq!(rb.m0, b.m0);
        assert!((rb.zeta_minus - b.zeta_plus).abs() <= 1e-9 * (1.0 + b.zeta_plus));
        let rr = reverse_biclade(&rb);
        assert_eq!(rr.process.len(), b.process.len());
        for (p, q) in rr.process.points().iter().zip(b.process.points()) {
            assert!((p.t - q.t).abs() <= 1e-9 * (1.0 + b.length()));
            assert!((p.lifetime() - q.lifetime()).abs() <= 1e-12 * p.lifetime());
        }
    }
}

#[test]
fn clade_height_law() {
    // P(ζ⁺ > y) = 1 - exp(-a/2y) for q = c = 1.
    let p = besq();
    let (a, y) = (1.0, 0.5);
    let cfg = CladeConfig {
        eps: 1e-3,
        block: BlockSampler::Exact,
        n_grid: 32,
        cap: Some(y * (1.0 + 1e-9)),
        stop: StopRule::AtCap,
        ..Default::default()
    };
    let mut r = ChaCha8Rng::seed_from_u64(45);
    let n = 4000;
    let hits = (0..n).filter(|_| sample_clade_given_m0(a, &p, &cfg, &mut r).unwrap().zeta_plus >= y).count();
    let reference = p.clade_survival(a, y);
    let emp = hits as f64 / n as f64;
    assert!((emp - reference).abs() <= 3.0 * (reference * (1.0 - reference) / n as f64).sqrt() + 0.01, "{emp} {reference}");
}

#[test]
fn anticlade_and_clade_independent() {
    // Given m⁰ the two halves are independent; both scale linearly in m⁰
    // (q = 1), so compare the heights relative to m⁰. The crossing spindle
    // must outlive the cutoff, which couples the halves when m⁰ is of order
    // ε, so only central masses well above ε enter.
    let mut r = ChaCha8Rng::seed_from_u64(46);
    let mut up = Vec::new();
    let mut down = Vec::new();
    for _ in 0..200 {
        let pp = sample_prm(&besq(), 1e-3, 5.0, DEFAULT_POINT_BUDGET, &mut r).unwrap();
        for b in decompose_biclades(&pp, 0.0) {
            if b.kind != ExcursionKind::Complete || b.crossing.is_none() || b.m0 < 0.05 {
                continue;
            }
            let (anti, clade) = split_biclade(&b).unwrap();
            up.push((clade.zeta_plus / b.m0).ln());
            down.push((anti.zeta_minus / b.m0).ln());
        }
    }
    let n = up.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mu, md) = (mean(&up), mean(&down));
    let cov: f64 = up.iter().zip(&down).map(|(a, b)| (a - mu) * (b - md)).sum::<f64>() / n;
    let sd = |v: &[f64], m: f64| (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    let corr = cov / (sd(&up, mu) * sd(&down, md));
    assert!(n > 300.0, "{n}");
    assert!(corr.abs() < 3.0 / n.sqrt(), "corr {corr} over {n}");
}
