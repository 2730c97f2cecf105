use std::collections::BTreeMap;

use l2h_core::assess::{
    area_misestimation, confusion, confusion_full, label_points, largest_remainder, metrics,
    parse_reference_csv, sample_points, ConfusionMatrix, SamplePoint, SampleStrategy,
};
use l2h_core::scheme::{CL, GL, TC, WT};
use l2h_core::{ClassScheme, Error, GeoRef, RasterGrid};
use proptest::prelude::*;

const TABLE1: &str = include_str!("../../../data/table1.csv");

fn grid(w: usize, h: usize, data: Vec<u8>) -> RasterGrid {
    RasterGrid::from_classes(w, h, GeoRef::north_up(h, 1.0), data).unwrap()
}

#[test]
fn table1_metrics() {
    let scheme = ClassScheme::default_scheme();
    let cm = ConfusionMatrix::from_csv(TABLE1, &scheme).unwrap();
    assert_eq!(cm.total(), 106_344);
    assert_eq!(cm.row_totals()[1], 26_038);
    assert_eq!(cm.col_totals()[1], 23_922);
    let m = metrics(&cm).unwrap();
    assert!((m.oa * 100.0 - 73.61).abs() <= 0.01, "OA {}", m.oa);
    assert!((m.kappa - 0.6595).abs() <= 0.0005, "kappa {}", m.kappa);
    let tc = m.class("TC").unwrap();
    assert!((tc.pa.unwrap() * 100.0 - 79.53).abs() <= 0.01);
    assert!((tc.ua.unwrap() * 100.0 - 86.56).abs() <= 0.01);
    // printed row-side accuracies
    for (code, pa) in [("TR", 29.52), ("GL", 72.13), ("WT", 86.10), ("M&L", 37.84)] {
        assert!(
            (m.class(code).unwrap().pa.unwrap() * 100.0 - pa).abs() <= 0.01,
            "{code}"
        );
    }
    assert_eq!(
        ConfusionMatrix::from_csv(&cm.to_csv(), &scheme).unwrap(),
        cm
    );
}

#[test]
fn identity_and_chance_matrices() {
    let scheme = ClassScheme::default_scheme();
    let l = scheme.len();
    let diag: Vec<Vec<u64>> = (0..l)
        .map(|i| {
            (0..l)
                .map(|j| if i == j { 3 + i as u64 } else { 0 })
                .collect()
        })
        .collect();
    let m = metrics(&ConfusionMatrix::from_counts(&scheme, &diag).unwrap()).unwrap();
    assert_eq!((m.oa, m.kappa), (1.0, 1.0));

    let a: Vec<u64> = (1..=l as u64).collect();
    let b: Vec<u64> = (0..l as u64).map(|k| 2 + k % 3).collect();
    let chance: Vec<Vec<u64>> = a
        .iter()
        .map(|&ai| b.iter().map(|&bj| ai * bj).collect())
        .collect();
    let m = metrics(&ConfusionMatrix::from_counts(&scheme, &chance).unwrap()).unwrap();
    assert!(m.kappa.abs() < 1e-12, "{}", m.kappa);

    assert!(matches!(
        metrics(&ConfusionMatrix::zeros(&scheme)),
        Err(Error::EmptyMatrix)
    ));
}

#[test]
fn undefined_marginals_are_not_available() {
    let scheme = ClassScheme::default_scheme();
    let mut cm = ConfusionMatrix::zeros(&scheme);
    cm.add(TC, TC).unwrap();
    let m = metrics(&cm).unwrap();
    assert_eq!(m.class("GL").unwrap().pa, None);
    assert_eq!(m.class("GL").unwrap().ua, None);
}

#[test]
fn confusion_marginals_match_tallies() {
    let scheme = ClassScheme::default_scheme();
    let pairs: Vec<(u8, u8)> = (0..500u32)
        .map(|i| ((i * 7 % 11 + 1) as u8, (i * 13 % 11 + 1) as u8))
        .collect();
    let points: Vec<SamplePoint> = pairs
        .iter()
        .map(|&(m, r)| SamplePoint {
            x: 0.0,
            y: 0.0,
            map_class: Some(m),
            reference_class: Some(r),
        })
        .collect();
    let cm = confusion(&points, &scheme).unwrap();
    assert_eq!(cm.total(), 500);
    for k in 1..=11u8 {
        let rows = pairs.iter().filter(|p| p.0 == k).count() as u64;
        let cols = pairs.iter().filter(|p| p.1 == k).count() as u64;
        assert_eq!(cm.row_totals()[usize::from(k) - 1], rows);
        assert_eq!(cm.col_totals()[usize::from(k) - 1], cols);
    }
    assert_eq!(confusion(&[], &scheme).unwrap().total(), 0);
    let bad = [SamplePoint {
        x: 0.0,
        y: 0.0,
        map_class: Some(40),
        reference_class: Some(1),
    }];
    assert!(matches!(
        confusion(&bad, &scheme),
        Err(Error::UnknownClass(40))
    ));
}

#[test]
fn largest_remainder_allocations() {
    assert_eq!(largest_remainder(10, &[50, 30, 20]), vec![5, 3, 2]);
    assert_eq!(largest_remainder(10, &[1, 1, 1]), vec![4, 3, 3]);
    assert_eq!(largest_remainder(7, &[10, 0, 5]), vec![5, 0, 2]);
}

#[test]
fn stratified_sampling_follows_class_areas() {
    let mut data = vec![TC; 50];
    data.extend(vec![GL; 30]);
    data.extend(vec![CL; 20]);
    let map = grid(10, 10, data);
    let mut points = sample_points(&map, 10, 3, SampleStrategy::StratifiedByClass).unwrap();
    label_points(&mut points, &map, &map).unwrap();
    let count = |c| points.iter().filter(|p| p.map_class == Some(c)).count();
    assert_eq!((count(TC), count(GL), count(CL)), (5, 3, 2));

    let single = grid(10, 10, vec![WT; 100]);
    let mut pts = sample_points(&single, 10, 0, SampleStrategy::StratifiedByClass).unwrap();
    label_points(&mut pts, &single, &single).unwrap();
    assert!(pts.iter().all(|p| p.map_class == Some(WT)));
}

#[test]
fn uniform_sampling_is_seeded() {
    let map = grid(20, 20, (0..400).map(|i| (i % 11 + 1) as u8).collect());
    let a = sample_points(&map, 10, 42, SampleStrategy::Uniform).unwrap();
    assert_eq!(
        a,
        sample_points(&map, 10, 42, SampleStrategy::Uniform).unwrap()
    );
    assert_ne!(
        a,
        sample_points(&map, 10, 43, SampleStrategy::Uniform).unwrap()
    );
    assert!(matches!(
        sample_points(&map, 401, 0, SampleStrategy::Uniform),
        Err(Error::Config(_))
    ));
}

#[test]
fn map_equal_to_truth_scores_perfectly() {
    let scheme = ClassScheme::default_scheme();
    let truth = grid(30, 30, (0..900).map(|i| ((i / 7) % 11 + 1) as u8).collect());
    let mut pts = sample_points(&truth, 200, 1, SampleStrategy::Uniform).unwrap();
    label_points(&mut pts, &truth, &truth).unwrap();
    assert_eq!(metrics(&confusion(&pts, &scheme).unwrap()).unwrap().oa, 1.0);
    assert_eq!(
        metrics(&confusion_full(&truth, &truth, &scheme).unwrap())
            .unwrap()
            .oa,
        1.0
    );
}

#[test]
fn misestimation_examples() {
    let scheme = ClassScheme::default_scheme();
    let mut data = vec![TC; 60];
    data.extend(vec![GL; 40]);
    let map = grid(10, 10, data);
    let regions = grid(10, 10, vec![1; 100]);
    let reference =
        parse_reference_csv("region,class,fraction\n1,TC,0.5\n1,GL,0.5\n", &scheme).unwrap();
    let stats = area_misestimation(&map, &regions, &reference).unwrap();
    assert_eq!(stats.len(), 1);
    let by_class: BTreeMap<u8, f64> = stats[0]
        .classes
        .iter()
        .map(|c| (c.class, c.delta.unwrap()))
        .collect();
    assert!((by_class[&TC] - 0.10).abs() < 1e-12);
    assert!((by_class[&GL] + 0.10).abs() < 1e-12);
    let sum: f64 = stats[0].classes.iter().map(|c| c.map_fraction).sum();
    assert!((sum - 1.0).abs() < 1e-9);

    let own = parse_reference_csv("1,TC,60\n1,GL,40\n", &scheme).unwrap();
    let stats = area_misestimation(&map, &regions, &own).unwrap();
    assert!(stats[0]
        .classes
        .iter()
        .all(|c| c.delta.unwrap().abs() < 1e-12));

    let stats = area_misestimation(&map, &grid(10, 10, vec![2; 100]), &reference).unwrap();
    assert!(!stats[0].reference_available);
    assert!(stats[0].classes.iter().all(|c| c.delta.is_none()));
}

fn arb_matrix() -> impl Strategy<Value = Vec<Vec<u64>>> {
    prop::collection::vec(prop::collection::vec(0u64..50, 11), 11)
}

proptest! {
    #[test]
    fn kappa_is_bounded(rows in arb_matrix()) {
        let scheme = ClassScheme::default_scheme();
        let cm = ConfusionMatrix::from_counts(&scheme, &rows).unwrap();
        prop_assume!(cm.total() > 0);
        let m = metrics(&cm).unwrap();
        prop_assert!((-1.0..=1.0).contains(&m.kappa));
        prop_assert!(m.kappa <= m.oa + 1e-12);
        let off: u64 = (0..11).flat_map(|i| (0..11).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| rows[i][j]).sum();
        prop_assert_eq!(m.kappa == 1.0, off == 0);
    }

    #[test]
    fn metrics_are_relabeling_invariant(rows in arb_matrix(), perm in Just((0..11usize).collect::<Vec<_>>()).prop_shuffle()) {
        let scheme = ClassScheme::default_scheme();
        let cm = ConfusionMatrix::from_counts(&scheme, &rows).unwrap();
        prop_assume!(cm.total() > 0);
        let permuted: Vec<Vec<u64>> = (0..11).map(|i| (0..11).map(|j| rows[perm[i]][perm[j]]).collect()).collect();
        let a = metrics(&cm).unwrap();
        let b = metrics(&ConfusionMatrix::from_counts(&scheme, &permuted).unwrap()).unwrap();
        prop_assert!((a.oa - b.oa).abs() < 1e-12);
        prop_assert!((a.kappa - b.kappa).abs() < 1e-12);
    }
}
