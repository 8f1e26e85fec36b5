use super::*;
use crate::fixtures::{self, courtyard_and_plaza, extreme_climate, hottest_day, paved};
use crate::meteo::Climate;
use crate::optimize::SearchConfig;
use crate::raster::{apply_placement, Cell, LandCover, TreeGeometry, TreePlacement};
use crate::shadow::ShadowConfig;
use crate::tmrt::{build_context, planted_area, refresh_svf, ContextOptions};
use proptest::prelude::*;

#[test]
fn identical_grids_give_zero_metrics() {
    let area = paved(8, 8);
    let g = Grid::filled(8, 8, 40.0);
    let m = compute_metrics(&g, &g, &area, 0.0, Some((3, 3))).unwrap();
    assert_eq!(m.delta_tmrt_mean, 0.0);
    assert_eq!(m.delta_per_area, 0.0);
    assert_eq!(m.delta_per_canopy_area, 0.0);
    assert_eq!(m.valid_cell_count, 64);
}

#[test]
fn per_canopy_area_arithmetic() {
    let area = paved(10, 10);
    let before = Grid::filled(10, 10, 40.0);
    let after = before.map(|v| v - 1.0);
    let p = TreePlacement::new(vec![Cell::default(); 50], TreeGeometry::default());
    let m = compute_metrics(&before, &after, &area, p.canopy_area(), None).unwrap();
    let expected = -1.0 / (50.0 * std::f64::consts::PI * 4.5 * 4.5);
    assert!((m.delta_per_canopy_area - expected).abs() < 1e-15);
    assert!((1.0 / m.delta_per_canopy_area + 3180.86).abs() < 0.01);
    assert!((m.delta_per_area + 0.01).abs() < 1e-15);
}

#[test]
fn metrics_exclude_buildings_and_water() {
    let area = fixtures::with_border(&paved(10, 10), 1, LandCover::Water).unwrap();
    let before = Grid::filled(10, 10, 40.0);
    let mut after = before.clone();
    after[Cell::new(0, 0)] = 0.0;
    let m = compute_metrics(&before, &after, &area, 0.0, None).unwrap();
    assert_eq!(m.delta_tmrt_mean, 0.0);
    assert_eq!(m.valid_cell_count, 64);
    assert!(compute_metrics(&before, &Grid::zeros(9, 10), &area, 0.0, None).is_err());
}

#[test]
fn heat_hours_count_and_monotonicity() {
    let mut area = paved(6, 6);
    refresh_svf(&mut area, &ShadowConfig::default(), &RadiationParams::default());
    let period = hottest_day(1, &extreme_climate());
    let p = RadiationParams::default();
    assert_eq!(heat_hours(&area, &period, &p, -1000.0).unwrap(), 36 * 24);
    let mut last = u64::MAX;
    for t in [0.0, 30.0, 45.0, 60.0, 75.0, 200.0] {
        let h = heat_hours(&area, &period, &p, t).unwrap();
        assert!(h <= last);
        last = h;
    }
    assert_eq!(last, 0);
}

#[test]
fn classifier_recovers_separable_threshold() {
    let ig = [0.0, 10.0, 50.0, 90.0, 100.0, 300.0, 800.0];
    let cools: Vec<bool> = ig.iter().map(|&g| g > 96.0).collect();
    let fit = fit_shortwave_classifier(&ig, &cools).unwrap();
    assert_eq!(fit.accuracy, 1.0);
    assert!(fit.threshold > 90.0 && fit.threshold < 100.0);
    assert_eq!(threshold_accuracy(&ig, &cools, SHORTWAVE_THRESHOLD), 1.0);
}

#[test]
fn classifier_on_uninformative_labels_reaches_majority_share() {
    let ig: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let cools: Vec<bool> = (0..100).map(|i| i % 4 == 0).collect();
    let fit = fit_shortwave_classifier(&ig, &cools).unwrap();
    assert!(fit.accuracy >= 0.75);
    assert!(fit.accuracy <= 0.78);
}

#[test]
fn classifier_single_class_is_flagged() {
    let fit = fit_shortwave_classifier(&[1.0, 2.0], &[true, true]).unwrap();
    assert!(fit.single_class);
    assert_eq!(fit.accuracy, 1.0);
    assert!(fit_shortwave_classifier(&[1.0], &[]).is_err());
}

#[test]
fn spearman_examples() {
    assert!((spearman(&[1.0, 2.0, 3.0], &[2.0, 5.0, 9.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap() - 0.6).abs() < 1e-12);
    // Ties: ranks of y are [1.5, 1.5, 3].
    let r = spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 7.0]).unwrap();
    assert!((r - 0.75f64.sqrt()).abs() < 1e-12);
    assert!(matches!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Undefined(_))));
    assert!(spearman(&[1.0], &[1.0]).is_err());
}

proptest! {
    #[test]
    fn swept_threshold_beats_fixed_threshold(
        data in prop::collection::vec((0.0f64..1000.0, any::<bool>()), 2..60),
    ) {
        let ig: Vec<f64> = data.iter().map(|d| d.0).collect();
        let cools: Vec<bool> = data.iter().map(|d| d.1).collect();
        let fit = fit_shortwave_classifier(&ig, &cools).unwrap();
        prop_assert!(fit.accuracy + 1e-12 >= threshold_accuracy(&ig, &cools, SHORTWAVE_THRESHOLD));
    }

    #[test]
    fn spearman_is_bounded_and_symmetric(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..40),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let (Ok(a), Ok(b)) = (spearman(&x, &y), spearman(&y, &x)) {
            prop_assert!((-1.0..=1.0).contains(&a));
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn profiles_of_an_empty_placement_are_zero() {
    let mut area = paved(12, 12);
    refresh_svf(&mut area, &ShadowConfig::default(), &RadiationParams::default());
    let period = hottest_day(2, &Climate::default());
    let prof = temporal_profiles(&area, &area, &period, &RadiationParams::default()).unwrap();
    assert!(prof.per_record.iter().all(|&d| d == 0.0));
    assert!(prof.hourly.iter().all(|b| b.mean_delta == 0.0));
    assert_eq!(prof.hourly.len(), 24);
}

#[test]
fn summer_day_profile_cools_by_day_and_warms_by_night() {
    let params = RadiationParams::default();
    let cfg = ShadowConfig::default();
    let mut area = paved(30, 30);
    refresh_svf(&mut area, &cfg, &params);
    let p = TreePlacement::new(vec![Cell::new(10, 10), Cell::new(20, 20)], TreeGeometry::default());
    let with = planted_area(&area, &p, &cfg, &params).unwrap();
    let period = hottest_day(3, &Climate::default());
    let prof = temporal_profiles(&area, &with, &period, &params).unwrap();
    for b in &prof.hourly {
        if b.mean_shortwave > SHORTWAVE_THRESHOLD {
            assert!(b.mean_delta <= 0.0, "hour {} {}", b.key, b.mean_delta);
        }
        if b.mean_shortwave == 0.0 {
            assert!(b.mean_delta >= 0.0, "hour {} {}", b.key, b.mean_delta);
        }
    }
    let weighted: f64 = prof.hourly.iter().map(|b| b.mean_delta * b.count as f64).sum::<f64>()
        / prof.per_record.len() as f64;
    assert!((weighted - prof.overall_mean()).abs() < 1e-9);
    assert_eq!(prof.monthly.len(), 1);
    assert!((prof.monthly[0].mean_delta - prof.overall_mean()).abs() < 1e-9);
}

#[test]
fn counterfactual_without_trees_is_a_no_op() {
    let area = paved(16, 16);
    let period = hottest_day(1, &Climate::default());
    let cf = counterfactual_relocate(
        &area,
        &period,
        &RadiationParams::default(),
        &ContextOptions::default(),
        &SearchConfig::new(1, 0),
    )
    .unwrap();
    assert!(cf.extracted.is_empty());
    assert!(cf.relocation.is_none());
}

#[test]
fn replacement_geometry_respects_the_budget() {
    let g = TreeGeometry::default();
    let tree = ExtractedTree {
        apex: Cell::new(5, 5),
        apex_height: 12.0,
        cells: vec![Cell::default(); g.crown_offsets().len()],
    };
    let r = replacement_geometry(&[tree.clone(), tree.clone()], 0.25).unwrap();
    assert_eq!(r.crown_diameter, 9.0);
    assert_eq!(r.height, 12.0);
    let small = ExtractedTree {
        cells: vec![Cell::default(); 60],
        ..tree
    };
    let r = replacement_geometry(&[small], 0.25).unwrap();
    assert!(r.crown_offsets().len() <= 60);
    assert!(replacement_geometry(&[], 0.25).is_none());
}

#[test]
fn clustered_courtyard_trees_are_relocated_to_the_plaza() {
    let area = courtyard_and_plaza();
    let period = hottest_day(4, &extreme_climate());
    let config = SearchConfig {
        ga_generations: 40,
        ..SearchConfig::new(1, 7)
    };
    let cf = counterfactual_relocate(
        &area,
        &period,
        &RadiationParams::default(),
        &ContextOptions::default(),
        &config,
    )
    .unwrap();
    assert_eq!(cf.extracted.len(), 3);
    let r = cf.relocation.unwrap();
    assert_eq!(r.geometry, fixtures::courtyard_tree());
    assert!(r.relocated_mean < r.factual_mean, "{} {}", r.relocated_mean, r.factual_mean);
    assert!(r.metrics.heat_hours_after < r.metrics.heat_hours_before);
    assert!(r.placement.positions.iter().any(|c| c.col >= 28));
}

#[test]
fn already_optimal_tree_stays_put() {
    let params = RadiationParams::default();
    let geom = TreeGeometry::new(10.0, 5.0, 0.25).unwrap();
    let base = fixtures::with_border(&paved(16, 16), 2, LandCover::Water).unwrap();
    let base = fixtures::with_blocks(&base, &[(2, 2, 6, 14, 8.0)]).unwrap();
    let period = hottest_day(5, &Climate::default());
    let options = ContextOptions {
        geometry: geom,
        ..ContextOptions::default()
    };
    let ctx = build_context(&base, &period, &params, &options).unwrap();
    let best = base
        .dem
        .cells()
        .filter(|&c| ctx.is_plantable(c))
        .min_by(|&a, &b| {
            let ea = ctx.evaluate_fast(&TreePlacement::new(vec![a], geom)).unwrap();
            let eb = ctx.evaluate_fast(&TreePlacement::new(vec![b], geom)).unwrap();
            ea.total_cmp(&eb)
        })
        .unwrap();
    let factual = apply_placement(&base, &TreePlacement::new(vec![best], geom)).unwrap();
    let cf = counterfactual_relocate(&factual, &period, &params, &options, &SearchConfig::new(1, 3)).unwrap();
    let r = cf.relocation.unwrap();
    assert_eq!(r.placement.positions, vec![best]);
    assert!((r.relocated_mean - r.factual_mean).abs() <= 1e-4);
    assert!(r.veg_diff.data().iter().all(|&d| d == 0.0));
}

#[test]
fn csv_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let m = compute_metrics(&Grid::zeros(4, 4), &Grid::zeros(4, 4), &paved(4, 4), 0.0, None).unwrap();
    write_metrics_csv(&dir.path().join("m.csv"), &m).unwrap();
    let text = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert!(text.starts_with("metric,value\ndelta_tmrt_mean_K,0\n"));
    let bins = [ProfileBin {
        key: 3,
        count: 2,
        mean_delta: 0.5,
        mean_shortwave: 0.0,
    }];
    write_profile_csv(&dir.path().join("h.csv"), "hour", &bins).unwrap();
    let text = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    assert_eq!(text, "hour,records,mean_delta_tmrt_K,mean_shortwave_W_m2\n3,2,0.5,0\n");
}
