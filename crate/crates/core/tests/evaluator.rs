use arbor_core::fixtures::{hottest_day, paved, with_blocks};
use arbor_core::meteo::Climate;
use arbor_core::raster::{Cell, TreeGeometry, TreePlacement};
use arbor_core::shadow::ShadowConfig;
use arbor_core::tmrt::{build_context, evaluate_reference, planted_area, refresh_svf, ContextOptions, RadiationParams};

#[test]
fn move_between_isolated_regions_is_remove_plus_add() {
    let area = paved(120, 40);
    let period = hottest_day(1, &Climate::default());
    let ctx = build_context(&area, &period, &RadiationParams::default(), &ContextOptions::default()).unwrap();
    let delta = ctx.delta_map();
    let (a, b, other) = (Cell::new(20, 12), Cell::new(20, 104), Cell::new(20, 58));
    let p = TreePlacement::new(vec![a, other], TreeGeometry::default());
    let before = ctx.evaluate_fast(&p).unwrap();
    let after = ctx.move_delta(&p, 0, b).unwrap();
    let expect = delta[b] - delta[a];
    assert!(((after - before) - expect).abs() < 1e-3, "{} vs {expect}", after - before);
}

#[test]
fn distant_trees_superpose_in_the_reference_model() {
    let area = paved(110, 36);
    let period = hottest_day(2, &Climate::default());
    let params = RadiationParams::default();
    let cfg = ShadowConfig::default();
    let geom = TreeGeometry::default();
    let mut bare = area.clone();
    refresh_svf(&mut bare, &cfg, &params);
    let valid = area.valid_mask();
    let mean = |cells: Vec<Cell>| {
        let a = planted_area(&area, &TreePlacement::new(cells, geom), &cfg, &params).unwrap();
        evaluate_reference(&a, &period, &params).unwrap().masked_mean(&valid).unwrap()
    };
    let base = evaluate_reference(&bare, &period, &params).unwrap().masked_mean(&valid).unwrap();
    let (x, y) = (Cell::new(18, 15), Cell::new(18, 95));
    let dx = mean(vec![x]) - base;
    let dy = mean(vec![y]) - base;
    let dxy = mean(vec![x, y]) - base;
    assert!(dx < 0.0 && dy < 0.0);
    assert!((dxy - (dx + dy)).abs() < 1e-3, "{dxy} vs {}", dx + dy);
}

#[test]
fn open_plaza_tree_cools_more_than_a_shaded_courtyard_tree() {
    let area = with_blocks(
        &paved(60, 40),
        &[(6, 4, 9, 28, 18.0), (27, 4, 30, 28, 18.0), (9, 4, 27, 7, 18.0), (9, 25, 27, 28, 18.0)],
    )
    .unwrap();
    let period = hottest_day(3, &Climate::default());
    let ctx = build_context(&area, &period, &RadiationParams::default(), &ContextOptions::default()).unwrap();
    let delta = ctx.delta_map();
    let courtyard = delta[Cell::new(23, 16)];
    let plaza = delta[Cell::new(20, 45)];
    assert!(plaza < courtyard, "plaza {plaza}, courtyard {courtyard}");
    assert!(delta[Cell::new(7, 10)].is_infinite());
}
