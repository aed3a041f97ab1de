//! Chart metrics against exhaustive reference implementations, plus their
//! invariances and a few hand-worked values.

mod support;

use chartjepa::evaluation::{
    continuity_trustworthiness, kruskal_stress, rajski_distance, rajski_from_distances,
    rajski_from_joint, MetricsReport, Point,
};
use proptest::prelude::*;
use support::{
    brute_ct_tw, brute_ks, brute_rd, pair_distances, quantised, random_points, similarity,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_exhaustive_oracles(
        n in 4usize..=12,
        k in 1usize..=3,
        seed in any::<u64>(),
        // Quantised coordinates produce ties in distance.
        quantise in any::<bool>(),
    ) {
        prop_assume!(n > 3 * k);
        let round = |x: Vec<Point>| if quantise { quantised(x) } else { x };
        let p = round(random_points(n, seed));
        let z = round(random_points(n, seed ^ 0xABCD));
        prop_assume!(pair_distances(&p).iter().any(|&v| v > 0.0));

        let (ct, tw) = continuity_trustworthiness(&p, &z, k).unwrap();
        let (bct, btw) = brute_ct_tw(&p, &z, k);
        prop_assert!((ct - bct).abs() < 1e-9, "ct {} vs {}", ct, bct);
        prop_assert!((tw - btw).abs() < 1e-9, "tw {} vs {}", tw, btw);
        prop_assert!((0.0..=1.0).contains(&ct) && (0.0..=1.0).contains(&tw));

        let ks = kruskal_stress(&p, &z).unwrap();
        if pair_distances(&z).iter().any(|&v| v > 0.0) {
            prop_assert!((ks - brute_ks(&p, &z)).abs() < 1e-9);
        } else {
            prop_assert_eq!(ks, 1.0);
        }
        prop_assert!((0.0..=1.0).contains(&ks));

        for bins in [2, 3, 4] {
            let rd = rajski_distance(&p, &z, bins).unwrap();
            prop_assert!((rd - brute_rd(&p, &z, bins)).abs() < 1e-9, "rd bins {}", bins);
            prop_assert!((0.0..=1.0).contains(&rd));
        }
    }

    #[test]
    fn rigid_motion_and_scaling_leave_metrics_unchanged(
        seed in any::<u64>(),
        angle in -3.0f64..3.0,
        scale in 0.1f64..10.0,
        shift in prop::array::uniform2(-20.0f64..20.0),
    ) {
        let p = random_points(40, seed);
        let z = random_points(40, seed.wrapping_add(1));
        let base = MetricsReport::compute(&p, &z).unwrap();
        let rigid = MetricsReport::compute(&p, &similarity(&z, angle, 1.0, shift)).unwrap();
        let scaled = MetricsReport::compute(&p, &similarity(&z, angle, scale, shift)).unwrap();
        for m in [rigid, scaled] {
            prop_assert!((m.ct - base.ct).abs() < 1e-12);
            prop_assert!((m.tw - base.tw).abs() < 1e-12);
            prop_assert!((m.ks - base.ks).abs() < 1e-9);
        }
        // Bin edges can move by rounding under a rigid motion; allow one pair per bin edge.
        prop_assert!((rigid.rd - base.rd).abs() < 0.02);
    }
}

#[test]
fn identity_embedding_is_perfect() {
    let p = random_points(120, 3);
    let m = MetricsReport::compute(&p, &p).unwrap();
    assert_eq!((m.ct, m.tw), (1.0, 1.0));
    assert!(m.ks < 1e-15);
    assert!(m.rd.abs() < 1e-12);
    assert!(rajski_distance(&p, &p, 8).unwrap().abs() < 1e-12);
}

#[test]
fn similarity_transform_has_no_stress() {
    let p = random_points(60, 4);
    let z = similarity(&p, 0.7, 3.3, [5.0, -2.0]);
    assert!(kruskal_stress(&p, &z).unwrap() < 1e-12);
}

#[test]
fn equilateral_against_collinear_stress() {
    let p = [[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]];
    let z = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
    // β = (1 + 2 + 1) / (1 + 4 + 1) = 2/3, residuals ±1/3, stress √(1/9).
    let ks = kruskal_stress(&p, &z).unwrap();
    assert!((ks - 1.0 / 3.0).abs() < 1e-12);
    // A coarse grid over β agrees.
    let grid = (0..=20000)
        .map(|i| {
            let b = i as f64 * 1e-4;
            ((1.0 - b).powi(2) + (1.0 - 2.0 * b).powi(2) + (1.0 - b).powi(2)) / 3.0
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt();
    assert!((ks - grid).abs() < 1e-6);
}

#[test]
fn hand_worked_joint_histograms() {
    let diag: Vec<Vec<u64>> = (0..4).map(|i| (0..4).map(|j| u64::from(i == j) * 2).collect()).collect();
    assert!(rajski_from_joint(&diag).abs() < 1e-15);
    // Two independent 2x2 blocks: I = ln 2, H(X,Y) = ln 8.
    let blocks = vec![
        vec![1, 1, 0, 0],
        vec![1, 1, 0, 0],
        vec![0, 0, 1, 1],
        vec![0, 0, 1, 1],
    ];
    assert!((rajski_from_joint(&blocks) - 2.0 / 3.0).abs() < 1e-12);
    // Product distribution: no shared information.
    let product = vec![vec![1, 2, 1, 0]; 4];
    assert!((rajski_from_joint(&product) - 1.0).abs() < 1e-12);
    // Degenerate single-bin cases.
    assert_eq!(rajski_from_joint(&[vec![5, 0], vec![0, 0]]), 0.0);
    assert_eq!(rajski_from_joint(&[vec![2, 3], vec![0, 0]]), 1.0);
}

#[test]
fn independent_charts_have_large_rajski_distance() {
    let p = random_points(500, 5);
    let z = random_points(500, 6);
    assert!(rajski_distance(&p, &z, 8).unwrap() > 0.9);
}

#[test]
fn rajski_ignores_monotone_distance_transforms() {
    let p = pair_distances(&random_points(80, 7));
    let z = pair_distances(&random_points(80, 8));
    let base = rajski_from_distances(&p, &z, 16).unwrap();
    let warped: Vec<f64> = z.iter().map(|x| x.powi(3) + x.exp()).collect();
    assert_eq!(rajski_from_distances(&p, &warped, 16).unwrap(), base);
    // Doubling every pair keeps the estimate within one bin's worth of mass.
    let (p2, z2): (Vec<f64>, Vec<f64>) = (p.repeat(2), z.repeat(2));
    assert!((rajski_from_distances(&p2, &z2, 16).unwrap() - base).abs() < 1.0 / 16.0);
}

#[test]
fn metrics_csv_layout() {
    let p = random_points(30, 9);
    let m = MetricsReport::compute(&p, &p).unwrap();
    let mut out = Vec::new();
    m.write_csv(&mut out, true).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "metric,value,k,n");
    assert_eq!(lines[1], "ct,1,5,30");
    assert!(lines[3].starts_with("ks,") && lines[3].ends_with(",,30"));
    assert_eq!(lines.len(), 5);
}
