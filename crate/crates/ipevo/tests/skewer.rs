use ipevo::clade::{cutoff, BlockSampler, Side};
use ipevo::ip::IntervalPartition;
use ipevo::scaffold::{sample_prm, Scaffolding, DEFAULT_POINT_BUDGET};
use ipevo::skewer::*;
use ipevo::spindle::DiffusionParams;
use ipevo::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn besq() -> DiffusionParams {
    DiffusionParams::besq(0.5).unwrap()
}

fn cfg() -> EvolveConfig {
    EvolveConfig { eps: 1e-2, block: BlockSampler::Exact, n_grid: 32, ..Default::default() }
}

#[test]
fn skewer_mass_is_aggregate_mass() {
    let mut r = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let pp = sample_prm(&besq(), 1e-2, 3.0, DEFAULT_POINT_BUDGET, &mut r).unwrap();
        let x = Scaffolding::of(&pp);
        for _ in 0..10 {
            let y = r.random_range(x.min()..x.max());
            let s = skewer(&pp, y);
            let m = aggregate_mass(&pp, y, pp.length);
            assert!((s.partition.total_mass() - m).abs() <= 1e-12 * (1.0 + m));
            // Marks are exact local times at the block times.
            for (b, &t) in s.partition.blocks().iter().zip(&s.block_ids) {
                assert!((b.div.unwrap() - x.local_time(y, t)).abs() < 1e-9);
            }
            assert!((s.partition.total_diversity().unwrap() - x.local_time(y, pp.length)).abs() < 1e-9);
        }
    }
}

#[test]
fn skewer_below_cutoff_level_is_unchanged() {
    let mut r = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        let pp = sample_prm(&besq(), 1e-2, 3.0, DEFAULT_POINT_BUDGET, &mut r).unwrap();
        let x = Scaffolding::of(&pp);
        if x.max() <= 0.0 {
            continue;
        }
        let z = r.random_range(0.0..x.max());
        let below = cutoff(&pp, z, Side::Below).unwrap();
        for _ in 0..5 {
            let u = r.random_range(x.min()..z);
            // Equal up to rounding: the cut process re-derives X(t-) from shifted times.
            let (a, b) = (skewer(&below, u).partition.masses(), skewer(&pp, u).partition.masses());
            assert_eq!(a.len(), b.len());
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + y)), "{a:?} {b:?}");
        }
    }
}

#[test]
fn block_ids_track_spindles_across_levels() {
    let beta = IntervalPartition::from_masses(0.5, &[1.0, 0.5]).unwrap();
    let levels: Vec<f64> = (0..=20).map(|k| 0.02 * k as f64).collect();
    let path = evolve_seeded(&beta, &besq(), &levels, &cfg(), 7).unwrap();
    let mut shared = 0;
    for w in path.snapshots[1..].windows(2) {
        for (i, id) in w[0].block_ids.iter().enumerate() {
            if let Some(j) = w[1].block_ids.iter().position(|x| x == id) {
                shared += 1;
                assert!(w[0].partition.blocks()[i].mass > 0.0 && w[1].partition.blocks()[j].mass > 0.0);
            }
        }
    }
    assert!(shared > 0);
    // Both initial blocks survive to 0.02 almost surely and keep their ids.
    assert_eq!(path.snapshots[0].block_ids.len(), 2);
    for id in &path.snapshots[0].block_ids {
        assert!(path.snapshots[1].block_ids.contains(id), "{id} {:?}", path.snapshots[1].block_ids);
    }
    // Hausdorff initial states gain marks above level 0 only.
    assert!(!path.snapshots[0].partition.has_diversity());
    assert!(path.snapshots[1..].iter().all(|s| s.partition.has_diversity() || s.partition.is_empty()));
}

#[test]
fn evolve_is_reproducible_and_round_trips() {
    let beta = IntervalPartition::from_masses(0.5, &[0.8, 0.2, 0.4]).unwrap();
    let levels = [0.0, 0.1, 0.3];
    let a = evolve_seeded(&beta, &besq(), &levels, &cfg(), 9).unwrap();
    let b = evolve_seeded(&beta, &besq(), &levels, &EvolveConfig { mode: ipevo::par::ProcessingMode::Sequential, ..cfg() }, 9).unwrap();
    assert_eq!(a.snapshots, b.snapshots);
    let text = a.to_jsonl();
    let back = EvolutionPath::from_jsonl(&text).unwrap();
    assert_eq!(back.snapshots, a.snapshots);
    assert_eq!(back.to_jsonl(), text);
    assert_eq!(a.to_csv().lines().count(), 4);
}

#[test]
fn survivor_count_bound() {
    let masses = [0.6, 0.3, 0.1];
    let mut r = ChaCha8Rng::seed_from_u64(33);
    let y = 0.5;
    let n = 3000;
    let mut survivors = 0usize;
    for _ in 0..n {
        for &a in &masses {
            let one = IntervalPartition::from_masses(0.5, &[a]).unwrap();
            survivors += !transition_sample(&one, y, &besq(), &cfg(), &mut r).unwrap().is_empty() as usize;
        }
    }
    let mean = survivors as f64 / n as f64;
    let bound: f64 = masses.iter().sum::<f64>() / (2.0 * y);
    let exact: f64 = masses.iter().map(|&a| 1.0 - (-a / (2.0 * y)).exp()).sum();
    let se = (masses.iter().map(|&a| {
        let p = 1.0 - (-a / (2.0 * y)).exp();
        p * (1.0 - p)
    }).sum::<f64>() / n as f64).sqrt();
    assert!(mean <= bound + 3.0 * se, "{mean} {bound}");
    assert!((mean - exact).abs() <= 3.0 * se + 0.01, "{mean} {exact}");
    let empty = transition_sample(&IntervalPartition::empty(0.5), y, &besq(), &cfg(), &mut r).unwrap();
    assert!(empty.is_empty());
}

#[test]
fn holder_exponent() {
    let beta = IntervalPartition::from_masses(0.5, &[1.0]).unwrap();
    let levels: Vec<f64> = (0..64).map(|k| 0.4 * k as f64 / 63.0).collect();
    let ecfg = EvolveConfig { eps: 1e-3, ..cfg() };
    let mut ok = 0;
    let seeds = 10;
    for seed in 0..seeds {
        let path = evolve_seeded(&beta, &besq(), &levels, &ecfg, seed).unwrap();
        match holder_exponent_estimate(&path, PathMetric::Hausdorff, 0.0) {
            Ok(h) if h >= 0.2 => ok += 1,
            _ => {}
        }
    }
    assert!(ok >= 9, "{ok}/{seeds}");
    let flat = EvolutionPath {
        snapshots: levels
            .iter()
            .map(|&y| SkewerSnapshot { level: y, partition: beta.clone(), block_ids: vec![0.0] })
            .collect(),
        ..evolve_seeded(&beta, &besq(), &[0.0], &ecfg, 0).unwrap()
    };
    assert!(matches!(holder_exponent_estimate(&flat, PathMetric::Hausdorff, 0.0), Err(Error::Undefined(_))));
}
