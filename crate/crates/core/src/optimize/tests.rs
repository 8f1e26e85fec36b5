use super::*;
use crate::meteo::{synth_meteo, PeriodLabel, TimePeriod};
use crate::raster::{synth_study_area, validate_placement, SynthSpec, TreeGeometry};
use crate::tmrt::{build_context, ContextOptions, RadiationParams};
use chrono::NaiveDate;

fn day() -> TimePeriod {
    let start = NaiveDate::from_ymd_opt(2020, 7, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    TimePeriod::new(PeriodLabel::Day, synth_meteo(3, start, 24, 48.0)).unwrap()
}

fn ctx(seed: u64, n: usize) -> EvalContext {
    let area = synth_study_area(seed, &SynthSpec::new(n, n)).unwrap();
    build_context(&area, &day(), &RadiationParams::default(), &ContextOptions::default()).unwrap()
}

fn quick(k: usize, seed: u64) -> SearchConfig {
    SearchConfig {
        ga_generations: 40,
        baseline_genetic_generations: 100,
        ..SearchConfig::new(k, seed)
    }
}

#[test]
fn config_validation() {
    assert!(SearchConfig::new(0, 1).validate().is_err());
    assert!(SearchConfig { ga_population: 1, ..SearchConfig::new(1, 1) }.validate().is_err());
    assert!(SearchConfig { softmax_temperature: 0.0, ..SearchConfig::new(1, 1) }.validate().is_err());
    assert!(SearchConfig::new(3, 1).validate().is_ok());
}

#[test]
fn buffer_keeps_best_distinct_sorted() {
    let mut b = OptimaBuffer::new(2);
    let a = vec![Cell::new(0, 0), Cell::new(5, 5)];
    assert!(b.insert(a.clone(), 3.0));
    assert!(!b.insert(vec![Cell::new(5, 5), Cell::new(0, 0)], 1.0));
    assert!(b.insert(vec![Cell::new(1, 1)], 2.0));
    assert!(!b.insert(vec![Cell::new(2, 2)], 4.0));
    assert!(b.insert(vec![Cell::new(3, 3)], 1.0));
    let objs: Vec<f64> = b.entries().iter().map(|e| e.1).collect();
    assert_eq!(objs, vec![1.0, 2.0]);
}

#[test]
fn greedy_k1_is_the_delta_argmin() {
    let ctx = ctx(1, 24);
    let delta = ctx.delta_map();
    let p = greedy_topk_init(&ctx, &delta, 1).unwrap();
    let min = delta.min_value();
    assert_eq!(delta[p.positions[0]], min);
    let first = delta.data().iter().position(|&v| v == min).unwrap();
    assert_eq!(p.positions[0], delta.cell_of(first));
}

#[test]
fn greedy_masks_overlapping_cells() {
    let ctx = ctx(2, 32);
    let mut delta = ctx.delta_map().map(|&v| if v.is_finite() { 0.0 } else { v });
    let cells: Vec<Cell> = delta.cells().filter(|&c| ctx.is_plantable(c)).collect();
    let a = cells[0];
    let b = cells
        .iter()
        .copied()
        .find(|&c| (a.distance_sq(c) - 25.0).abs() < 1e-9)
        .expect("a cell 5 m away");
    let far = cells.iter().copied().rev().find(|&c| a.distance_sq(c) >= 81.0).unwrap();
    delta[a] = -2.0;
    delta[b] = -2.0;
    delta[far] = -1.0;
    let p = greedy_topk_init(&ctx, &delta, 2).unwrap();
    assert_eq!(p.positions, vec![a.min(b), far]);
}

#[test]
fn greedy_capacity_error() {
    let ctx = ctx(3, 16);
    let delta = ctx.delta_map();
    assert!(matches!(
        greedy_topk_init(&ctx, &delta, 10_000),
        Err(Error::Capacity { .. })
    ));
}

/// Independent replay of the climbing rule on a single-tree delta map.
fn oracle_walk(ctx: &EvalContext, delta: &Grid, start: Cell) -> Cell {
    let mut p = start;
    loop {
        let next = NEIGHBORS.iter().find_map(|&(dr, dc)| {
            let q = p.offset(dr, dc, ctx.width(), ctx.height())?;
            (ctx.is_plantable(q) && delta[q] - delta[p] < -IMPROVEMENT_EPS).then_some(q)
        });
        match next {
            Some(q) => p = q,
            None => return p,
        }
    }
}

#[test]
fn single_tree_climb_follows_the_delta_map() {
    let ctx = ctx(4, 32);
    let delta = ctx.delta_map();
    let starts: Vec<Cell> = delta.cells().filter(|&c| ctx.is_plantable(c)).step_by(37).collect();
    for s in starts {
        let (got, obj) = hill_climb(&ctx, &[s]);
        assert_eq!(got[0], oracle_walk(&ctx, &delta, s), "start {s:?}");
        assert!(obj <= ctx.baseline() + delta[s] + 1e-9);
    }
}

#[test]
fn climb_is_monotone_and_has_fixed_points() {
    let ctx = ctx(5, 40);
    let sampler = CellSampler::for_context(&ctx, &ctx.delta_map(), 1.0).unwrap();
    let mut rng = stream(9, &[]);
    for _ in 0..4 {
        let start = sampler.sample_placement(&ctx, 4, &mut rng).unwrap();
        let before = Evaluator::new(&ctx).objective(&start);
        let (end, after) = hill_climb(&ctx, &start);
        assert!(after <= before + 1e-9);
        let (again, _) = hill_climb(&ctx, &end);
        assert_eq!(again, end);
        let p = TreePlacement::new(end, *ctx.geometry());
        assert!(validate_placement(ctx.area(), &p).is_ok());
    }
}

#[test]
fn ga_zero_generations_returns_best_seed() {
    let ctx = ctx(6, 24);
    let sampler = CellSampler::for_context(&ctx, &ctx.delta_map(), 1.0).unwrap();
    let mut buffer = OptimaBuffer::new(5);
    let mut rng = stream(1, &[]);
    for _ in 0..3 {
        let s = sampler.sample_placement(&ctx, 2, &mut rng).unwrap();
        let o = Evaluator::new(&ctx).objective(&s);
        buffer.insert(s, o);
    }
    let config = SearchConfig { ga_generations: 0, ..SearchConfig::new(2, 1) };
    let (p, o) = perturb_with_ga(&buffer, &ctx, &sampler, &config, 1).unwrap();
    assert_eq!(p, buffer.best().unwrap().0);
    assert_eq!(o, buffer.best().unwrap().1);
}

#[test]
fn ga_without_mutation_never_loses_the_incumbent() {
    let ctx = ctx(7, 24);
    let delta = ctx.delta_map();
    let sampler = CellSampler::for_context(&ctx, &delta, 1.0).unwrap();
    let greedy = greedy_topk_init(&ctx, &delta, 2).unwrap().positions;
    let best = Evaluator::new(&ctx).objective(&greedy);
    let config = SearchConfig { mutation_rate: 0.0, ga_population: 4, ..SearchConfig::new(2, 3) };
    let seeds = vec![greedy.clone(); 4];
    let (_, o) = run_ga(&ctx, &sampler, &seeds, &config, 50, 0).unwrap();
    assert!(o <= best);
}

#[test]
fn ga_usually_matches_or_beats_greedy() {
    let ctx = ctx(8, 16);
    let delta = ctx.delta_map();
    let sampler = CellSampler::for_context(&ctx, &delta, 1.0).unwrap();
    let greedy = greedy_topk_init(&ctx, &delta, 2).unwrap().positions;
    let g = Evaluator::new(&ctx).objective(&greedy);
    let mut buffer = OptimaBuffer::new(5);
    buffer.insert(greedy, g);
    let wins = (0..20)
        .filter(|&seed| {
            let config = SearchConfig::new(2, seed);
            perturb_with_ga(&buffer, &ctx, &sampler, &config, 1).unwrap().1 <= g
        })
        .count();
    assert!(wins >= 18, "{wins}");
}

fn exhaustive_single(ctx: &EvalContext) -> f64 {
    let mut eval = Evaluator::new(ctx);
    ctx.area()
        .dem
        .cells()
        .filter(|&c| ctx.is_plantable(c))
        .map(|c| eval.objective(&[c]))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn ils_k1_finds_the_exhaustive_optimum() {
    for seed in [11, 12] {
        let ctx = ctx(seed, 16);
        let r = iterated_local_search(&ctx, &quick(1, seed)).unwrap();
        assert!((r.objective - exhaustive_single(&ctx)).abs() < 1e-9);
    }
}

#[test]
fn ils_is_deterministic_feasible_and_monotone() {
    let ctx = ctx(13, 32);
    let a = iterated_local_search(&ctx, &quick(3, 5)).unwrap();
    let b = iterated_local_search(&ctx, &quick(3, 5)).unwrap();
    assert_eq!(a.placement, b.placement);
    assert_eq!(a.trace, b.trace);
    assert!(validate_placement(ctx.area(), &a.placement).is_ok());
    assert!(a.trace.windows(2).all(|w| w[1].1 <= w[0].1));
    assert_eq!(a.trace.len(), 6);
    assert!((a.objective - ctx.evaluate_fast(&a.placement).unwrap()).abs() < 1e-9);
}

#[test]
fn baselines_are_reproducible_and_feasible() {
    let ctx = ctx(14, 32);
    let config = quick(3, 2);
    for m in Method::ALL {
        let a = run_method(&ctx, &config, m).unwrap();
        let b = run_method(&ctx, &config, m).unwrap();
        assert_eq!(a.placement, b.placement, "{m}");
        assert!(validate_placement(ctx.area(), &a.placement).is_ok(), "{m}");
        assert_eq!(a.placement.geometry, TreeGeometry::default());
    }
    let greedy = run_method(&ctx, &config, Method::GreedyDelta).unwrap();
    assert_eq!(greedy.placement, greedy_topk_init(&ctx, &ctx.delta_map(), 3).unwrap());
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert_eq!("greedy_tmrt".parse::<Method>().unwrap(), Method::GreedyTmrt);
    assert!("annealing".parse::<Method>().is_err());
}

#[test]
fn ablation_rows_and_definitions() {
    let ctx = ctx(15, 24);
    let config = quick(2, 4);
    let rows = ablate(&ctx, &config).unwrap();
    assert_eq!(rows.len(), 6);
    let greedy = run_method(&ctx, &config, Method::GreedyDelta).unwrap();
    assert_eq!(rows[0].objective, greedy.objective);
    let single = search(&ctx, &config, Switches { iterate: false, ..Switches::ALL }).unwrap();
    assert_eq!(single.trace.len(), 2);
}

#[test]
fn csv_writers() {
    let dir = tempfile::tempdir().unwrap();
    let p = TreePlacement::new(vec![Cell::new(1, 2), Cell::new(3, 4)], TreeGeometry::default());
    write_placement_csv(&dir.path().join("p.csv"), &p).unwrap();
    write_trace_csv(&dir.path().join("t.csv"), &[(0, 1.5), (1, 1.25)]).unwrap();
    let text = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(text, "tree_id,row,col\n0,1,2\n1,3,4\n");
    assert_eq!(read_placement_csv(&dir.path().join("p.csv"), TreeGeometry::default()).unwrap(), p);
    std::fs::write(dir.path().join("bad.csv"), "tree_id,row\n0,1\n").unwrap();
    assert!(read_placement_csv(&dir.path().join("bad.csv"), TreeGeometry::default()).is_err());
    let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(text, "step,objective_K\n0,1.5\n1,1.25\n");
}
