use std::f64::consts::PI;

use hardsphere::special::gegenbauer;
use hardsphere::sphere::{
    build_partition, default_candidate_budget, greedy_separated_set, sample_uniform, SpherePartition,
};
use hardsphere::{geodesic, SpherePoint};
use proptest::prelude::*;

fn point(d: usize) -> impl Strategy<Value = SpherePoint> {
    proptest::collection::vec(-1.0f64..1.0, d + 1)
        .prop_filter("non-degenerate", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| SpherePoint::normalized(v).unwrap())
}

fn partition(d: usize, w: f64, seed: u64) -> SpherePartition {
    build_partition(greedy_separated_set(d, w, default_candidate_budget(d, w), seed).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn geodesic_is_a_metric(a in point(2), b in point(2), c in point(2)) {
        let ab = geodesic(&a, &b);
        prop_assert!((0.0..=PI).contains(&ab));
        prop_assert!((ab - geodesic(&b, &a)).abs() < 1e-12);
        prop_assert!(ab <= geodesic(&a, &c) + geodesic(&c, &b) + 1e-9);
        prop_assert!((geodesic(&a, &b.antipode()) - (PI - ab)).abs() < 1e-7);
    }

    #[test]
    fn gegenbauer_parity(n in 0usize..60, eta in 0.1f64..4.0, t in -1.0f64..1.0) {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let a = gegenbauer(n, eta, t).unwrap();
        let b = gegenbauer(n, eta, -t).unwrap();
        let top = gegenbauer(n, eta, 1.0).unwrap();
        prop_assert!((b - sign * a).abs() <= 1e-10 * top.max(1.0));
        prop_assert!(a.abs() <= top * (1.0 + 1e-10));
    }

    #[test]
    fn packing_is_separated(d in 1usize..=2, w in 0.15f64..1.2, seed in any::<u64>()) {
        let set = greedy_separated_set(d, w, default_candidate_budget(d, w), seed).unwrap();
        prop_assert!(!set.is_empty());
        prop_assert!(set.min_pairwise_distance() > w);
        for c in &set.centers {
            prop_assert!(c.last() > (0.5 * w).sin());
        }
    }

    #[test]
    fn assignment_is_antipodally_symmetric(x in point(2), seed in 0u64..4) {
        let part = partition(2, 0.5, seed);
        let r = part.assign(&x);
        prop_assert!(r < part.len());
        prop_assert_eq!(r, part.assign(&x.antipode()));
    }
}

#[test]
fn partition_covers_the_sphere() {
    for d in 1..=2 {
        let part = partition(d, 0.3, 7);
        let mut hits = vec![0usize; part.len()];
        for x in sample_uniform(d, 100_000, 8) {
            let r = part.assign(&x);
            assert_eq!(r, part.assign(&x.antipode()));
            hits[r] += 1;
        }
        assert_eq!(hits.iter().sum::<usize>(), 100_000);
        assert!(hits.iter().all(|&h| h > 0), "every region is claimed: {hits:?}");
    }
}

#[test]
fn regions_contain_both_polar_balls() {
    for d in 1..=2 {
        let w = 0.3;
        let part = partition(d, w, 3);
        let samples = sample_uniform(d, 100_000, 4);
        for (k, z) in part.centers.centers.iter().enumerate() {
            for x in &samples {
                let near = geodesic(x, z) < 0.5 * w || geodesic(x, &z.antipode()) < 0.5 * w;
                if near {
                    assert_eq!(part.assign(x), k, "d={d}, center {k}");
                }
            }
        }
    }
}

#[test]
fn packing_count_scales_with_dimension() {
    let widths = [0.4, 0.2, 0.1, 0.05];
    for d in 1..=2usize {
        let pts: Vec<(f64, f64)> = widths
            .iter()
            .map(|&w| {
                let n = greedy_separated_set(d, w, default_candidate_budget(d, w), 1)
                    .unwrap()
                    .len();
                ((1.0 / w).ln(), (n as f64).ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        let df = d as f64;
        assert!(slope >= 0.8 * df && slope <= 1.2 * df, "d={d}: slope {slope}");
    }
}
