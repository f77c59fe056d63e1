use ipevo::ip::{self, dist_alpha, dist_hausdorff, IntervalPartition};
use proptest::prelude::*;

const A: f64 = 0.5;
const TOL: f64 = 1e-12;

fn marked() -> impl Strategy<Value = IntervalPartition> {
    prop::collection::vec((0.01f64..1.0, 0.0f64..1.0), 0..6).prop_flat_map(|blocks| {
        (Just(blocks), 0.0f64..1.0).prop_map(|(blocks, extra)| {
            let masses: Vec<f64> = blocks.iter().map(|b| b.0).collect();
            let mut marks: Vec<f64> = blocks.iter().map(|b| b.1).collect();
            marks.sort_by(f64::total_cmp);
            let total = marks.last().copied().unwrap_or(0.0) + extra;
            IntervalPartition::with_marks(A, &masses, &marks, total).unwrap()
        })
    })
}

fn unmarked() -> impl Strategy<Value = IntervalPartition> {
    prop::collection::vec(0.01f64..1.0, 0..6).prop_map(|m| IntervalPartition::from_masses(A, &m).unwrap())
}

fn da(b: &IntervalPartition, g: &IntervalPartition) -> f64 {
    dist_alpha(b, g).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn alpha_metric_axioms(b in marked(), g in marked(), h in marked()) {
        prop_assert_eq!(da(&b, &b), 0.0);
        prop_assert!(da(&b, &g) >= 0.0);
        prop_assert!((da(&b, &g) - da(&g, &b)).abs() <= TOL);
        prop_assert!(da(&b, &h) <= da(&b, &g) + da(&g, &h) + TOL);
    }

    #[test]
    fn hausdorff_metric_axioms(b in unmarked(), g in unmarked(), h in unmarked()) {
        prop_assert_eq!(dist_hausdorff(&b, &b), 0.0);
        prop_assert!((dist_hausdorff(&b, &g) - dist_hausdorff(&g, &b)).abs() <= TOL);
        prop_assert!(dist_hausdorff(&b, &h) <= dist_hausdorff(&b, &g) + dist_hausdorff(&g, &h) + TOL);
    }

    #[test]
    fn hausdorff_never_exceeds_alpha(b in marked(), g in marked()) {
        prop_assert!(dist_hausdorff(&b, &g) <= da(&b, &g) + TOL);
    }

    #[test]
    fn scaling_bounds(b in marked(), g in marked(), c in 0.1f64..10.0) {
        let cb = ip::scale(c, &b).unwrap();
        let cg = ip::scale(c, &g).unwrap();
        let (lo, hi) = (c.min(c.powf(A)), c.max(c.powf(A)));
        let d = da(&b, &g);
        let dc = da(&cb, &cg);
        prop_assert!(lo * d <= dc * (1.0 + 1e-12) + TOL, "{} {} {}", lo, d, dc);
        prop_assert!(dc <= hi * d * (1.0 + 1e-12) + TOL, "{} {} {}", hi, d, dc);
        let own = (c.powf(A) - 1.0).abs() * b.total_diversity().unwrap();
        let own = own.max((c - 1.0).abs() * b.total_mass());
        prop_assert!(da(&b, &cb) <= own * (1.0 + 1e-12) + TOL);
    }

    #[test]
    fn scale_round_trip(b in marked(), c in 0.1f64..10.0) {
        let back = ip::scale(1.0 / c, &ip::scale(c, &b).unwrap()).unwrap();
        prop_assert!(da(&b, &back) <= 1e-12);
    }

    #[test]
    fn concat_is_associative(b in marked(), g in marked(), h in marked()) {
        let left = ip::concat(A, &[ip::concat(A, &[b.clone(), g.clone()]).unwrap(), h.clone()]).unwrap();
        let right = ip::concat(A, &[b.clone(), ip::concat(A, &[g, h]).unwrap()]).unwrap();
        prop_assert_eq!(left.masses(), right.masses());
        prop_assert!(da(&left, &right) <= TOL);
    }

    #[test]
    fn json_round_trip(b in marked()) {
        let s = b.to_json();
        prop_assert_eq!(IntervalPartition::from_json(&s).unwrap(), b);
    }
}
