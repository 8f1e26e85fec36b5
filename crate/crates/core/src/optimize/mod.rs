//! Iterated local search over tree positions, its components and baselines.

mod sampling;

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use sampling::{sample_probability, CellSampler};

use crate::error::{Error, Result};
use crate::raster::{Cell, Grid, TreeGeometry, TreePlacement};
use crate::tmrt::{EvalContext, Evaluator, MoveSession};

/// Hill-climbing neighborhood, clockwise from north.
pub const NEIGHBORS: [(i64, i64); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

/// Minimum objective decrease that counts as an improvement, K.
pub const IMPROVEMENT_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub k: usize,
    pub ils_iterations: usize,
    pub buffer_size: usize,
    pub ga_population: usize,
    pub ga_generations: usize,
    pub mutation_rate: f64,
    pub softmax_temperature: f64,
    pub seed: u64,
    pub baseline_genetic_generations: usize,
}

impl SearchConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        SearchConfig {
            k,
            seed,
            ..SearchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.ils_iterations == 0 {
            return bad("ILS iterations must be at least 1");
        }
        if self.buffer_size == 0 {
            return bad("buffer size must be at least 1");
        }
        if self.ga_population < 2 {
            return bad("GA population must be at least 2");
        }
        if !(self.softmax_temperature > 0.0) {
            return bad("softmax temperature must be positive");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation rate must lie in [0, 1]");
        }
        Ok(())
    }
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k: 1,
            ils_iterations: 5,
            buffer_size: 5,
            ga_population: 20,
            ga_generations: 200,
            mutation_rate: 0.1,
            softmax_temperature: 1.0,
            seed: 0,
            baseline_genetic_generations: 5000,
        }
    }
}

/// Deterministic RNG stream for a tuple of tags.
pub(crate) fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &t in tags {
        h = splitmix(h ^ splitmix(t.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn position_key(positions: &[Cell]) -> Vec<Cell> {
    let mut key = positions.to_vec();
    key.sort_unstable();
    key
}

/// Best distinct local optima, ascending by objective.
#[derive(Clone, Debug, Default)]
pub struct OptimaBuffer {
    capacity: usize,
    entries: Vec<(Vec<Cell>, f64)>,
}

impl OptimaBuffer {
    pub fn new(capacity: usize) -> Self {
        OptimaBuffer {
            capacity,
            entries: Vec::new(),
        }
    }

    /// Inserts unless an equal position set is already held; keeps the best `capacity`.
    pub fn insert(&mut self, positions: Vec<Cell>, objective: f64) -> bool {
        let key = position_key(&positions);
        if self.entries.iter().any(|(p, _)| position_key(p) == key) {
            return false;
        }
        self.entries.push((positions, objective));
        self.entries
            .sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| position_key(&a.0).cmp(&position_key(&b.0))));
        self.entries.truncate(self.capacity);
        self.entries.iter().any(|(p, _)| position_key(p) == key)
    }

    pub fn best(&self) -> Option<(&[Cell], f64)> {
        self.entries.first().map(|(p, o)| (p.as_slice(), *o))
    }

    pub fn entries(&self) -> &[(Vec<Cell>, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Outcome of a search: best placement, its objective and the best-so-far trace.
#[derive(Clone, Debug)]
pub struct SearchResult {
    pub placement: TreePlacement,
    pub objective: f64,
    pub buffer: OptimaBuffer,
    /// (step, best objective so far); step 0 is the initial solution.
    pub trace: Vec<(usize, f64)>,
}

/// Greedy selection of the `k` lowest-scoring cells with crown-overlap masking.
fn greedy_by_score(ctx: &EvalContext, score: &Grid, k: usize) -> Result<Vec<Cell>> {
    let mut order: Vec<usize> = (0..score.len())
        .filter(|&i| score.data()[i].is_finite() && ctx.is_plantable(score.cell_of(i)))
        .collect();
    order.sort_by(|&a, &b| score.data()[a].total_cmp(&score.data()[b]).then(a.cmp(&b)));
    let mut out = Vec::with_capacity(k);
    for i in order {
        if out.len() == k {
            break;
        }
        let c = score.cell_of(i);
        if ctx.compatible(c, &out, None) {
            out.push(c);
        }
    }
    if out.len() < k {
        return Err(Error::Capacity {
            requested: k,
            available: out.len(),
        });
    }
    Ok(out)
}

/// TopK initialization: most cooling cells first.
pub fn greedy_topk_init(ctx: &EvalContext, delta: &Grid, k: usize) -> Result<TreePlacement> {
    Ok(TreePlacement::new(greedy_by_score(ctx, delta, k)?, *ctx.geometry()))
}

/// Tree-cycling first-improvement hill climbing over the 8-neighborhood.
pub fn hill_climb(ctx: &EvalContext, positions: &[Cell]) -> (Vec<Cell>, f64) {
    let mut session = MoveSession::new(ctx, positions);
    loop {
        let mut improved = false;
        for i in 0..session.positions().len() {
            let p = session.positions()[i];
            for &(dr, dc) in &NEIGHBORS {
                let Some(to) = p.offset(dr, dc, ctx.width(), ctx.height()) else {
                    continue;
                };
                if !session.can_move(i, to) {
                    continue;
                }
                if session.try_move(i, to) < -IMPROVEMENT_EPS {
                    session.commit_move(i, to);
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            break;
        }
    }
    let out = session.positions().to_vec();
    let objective = Evaluator::new(ctx).objective(&out);
    (out, objective)
}

/// Memoized fitness over position sets.
struct Fitness<'a> {
    eval: Evaluator<'a>,
    memo: HashMap<Vec<Cell>, f64>,
}

impl<'a> Fitness<'a> {
    fn new(ctx: &'a EvalContext) -> Self {
        Fitness {
            eval: Evaluator::new(ctx),
            memo: HashMap::new(),
        }
    }

    fn of(&mut self, positions: &[Cell]) -> f64 {
        let key = position_key(positions);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        // Sorted order keeps the value independent of gene order.
        let v = self.eval.objective(&key);
        self.memo.insert(key, v);
        v
    }
}

/// Steady-state GA over ordered position lists. `seeds` enter the initial
/// population first; the rest is drawn from the sampler.
pub fn run_ga(
    ctx: &EvalContext,
    sampler: &CellSampler,
    seeds: &[Vec<Cell>],
    config: &SearchConfig,
    generations: usize,
    stream_tag: u64,
) -> Result<(Vec<Cell>, f64)> {
    let k = config.k;
    let mut fitness = Fitness::new(ctx);
    let mut population: Vec<(Vec<Cell>, f64)> = Vec::with_capacity(config.ga_population);
    for s in seeds.iter().take(config.ga_population) {
        let f = fitness.of(s);
        population.push((s.clone(), f));
    }
    let mut init_rng = stream(config.seed, &[stream_tag, u64::MAX]);
    while population.len() < config.ga_population {
        let s = sampler.sample_placement(ctx, k, &mut init_rng)?;
        let f = fitness.of(&s);
        population.push((s, f));
    }
    let rank = |pop: &mut Vec<(Vec<Cell>, f64)>| {
        pop.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| position_key(&a.0).cmp(&position_key(&b.0))));
    };
    rank(&mut population);
    for generation in 0..generations {
        let mut rng = stream(config.seed, &[stream_tag, generation as u64]);
        let top = population.len().div_ceil(2).max(1);
        let a = &population[rng.gen_range(0..top)].0;
        let b = &population[rng.gen_range(0..top)].0;
        let cut = if k > 1 { rng.gen_range(1..k) } else { 0 };
        let children = [
            [&a[..cut], &b[cut..]].concat(),
            [&b[..cut], &a[cut..]].concat(),
        ];
        for mut child in children {
            for g in 0..k {
                if rng.gen::<f64>() < config.mutation_rate {
                    if let Some(c) = sampler.sample_compatible(ctx, &child, Some(g), &mut rng) {
                        child[g] = c;
                    }
                }
            }
            repair(ctx, sampler, &mut child, &mut rng)?;
            let f = fitness.of(&child);
            let worst = population.len() - 1;
            if f < population[worst].1 {
                population[worst] = (child, f);
                rank(&mut population);
            }
        }
    }
    Ok(population.swap_remove(0))
}

/// Resamples genes that clash with earlier genes or sit on unplantable cells.
fn repair(ctx: &EvalContext, sampler: &CellSampler, genes: &mut [Cell], rng: &mut impl Rng) -> Result<()> {
    for g in 0..genes.len() {
        if !ctx.compatible(genes[g], &genes[..g], None) {
            genes[g] = sampler
                .sample_compatible(ctx, &genes[..g], None, rng)
                .ok_or(Error::Capacity {
                    requested: genes.len(),
                    available: g,
                })?;
        }
    }
    Ok(())
}

/// Perturbation step: a GA seeded with the buffer's optima.
pub fn perturb_with_ga(
    buffer: &OptimaBuffer,
    ctx: &EvalContext,
    sampler: &CellSampler,
    config: &SearchConfig,
    iteration: usize,
) -> Result<(Vec<Cell>, f64)> {
    let seeds: Vec<Vec<Cell>> = buffer.entries().iter().map(|(p, _)| p.clone()).collect();
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("perturbation needs a non-empty buffer".into()));
    }
    if config.ga_generations == 0 {
        let (p, o) = buffer.best().expect("non-empty");
        return Ok((p.to_vec(), o));
    }
    run_ga(ctx, sampler, &seeds, config, config.ga_generations, iteration as u64)
}

/// Components of the search that can be switched off.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Switches {
    pub greedy_init: bool,
    pub perturb: bool,
    pub climb: bool,
    pub iterate: bool,
}

impl Switches {
    pub const ALL: Switches = Switches {
        greedy_init: true,
        perturb: true,
        climb: true,
        iterate: true,
    };
}

/// Iterated local search with all components on.
pub fn iterated_local_search(ctx: &EvalContext, config: &SearchConfig) -> Result<SearchResult> {
    search(ctx, config, Switches::ALL)
}

/// Alg. 1 with optional components; disabled perturbation falls back to a
/// fresh softmax-sampled placement, disabled iteration runs one round.
pub fn search(ctx: &EvalContext, config: &SearchConfig, switches: Switches) -> Result<SearchResult> {
    config.validate()?;
    let delta = ctx.delta_map();
    let sampler = CellSampler::for_context(ctx, &delta, config.softmax_temperature)?;
    let geometry = *ctx.geometry();
    let init = if switches.greedy_init {
        greedy_by_score(ctx, &delta, config.k)?
    } else {
        random_positions(ctx, config.k, &mut stream(config.seed, &[u64::MAX - 1]))?
    };
    let (init, init_obj) = if switches.climb {
        hill_climb(ctx, &init)
    } else {
        let o = Evaluator::new(ctx).objective(&init);
        (init, o)
    };
    let mut buffer = OptimaBuffer::new(config.buffer_size);
    buffer.insert(init, init_obj);
    let mut trace = vec![(0, init_obj)];
    let rounds = if switches.iterate { config.ils_iterations } else { 1 };
    for it in 1..=rounds {
        let (candidate, obj) = if switches.perturb {
            perturb_with_ga(&buffer, ctx, &sampler, config, it)?
        } else {
            let s = sampler.sample_placement(ctx, config.k, &mut stream(config.seed, &[it as u64, 1 << 32]))?;
            let o = Evaluator::new(ctx).objective(&s);
            (s, o)
        };
        let (candidate, obj) = if switches.climb {
            hill_climb(ctx, &candidate)
        } else {
            (candidate, obj)
        };
        buffer.insert(candidate, obj);
        trace.push((it, buffer.best().expect("non-empty").1));
    }
    let (best, objective) = buffer.best().map(|(p, o)| (p.to_vec(), o)).expect("non-empty");
    Ok(SearchResult {
        placement: TreePlacement::new(best, geometry),
        objective,
        buffer,
        trace,
    })
}

fn random_positions(ctx: &EvalContext, k: usize, rng: &mut impl Rng) -> Result<Vec<Cell>> {
    let cells: Vec<Cell> = (0..ctx.height())
        .flat_map(|r| (0..ctx.width()).map(move |c| Cell::new(r, c)))
        .filter(|&c| ctx.is_plantable(c))
        .collect();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let mut pick = None;
        for _ in 0..1000 {
            if cells.is_empty() {
                break;
            }
            let c = cells[rng.gen_range(0..cells.len())];
            if ctx.compatible(c, &out, None) {
                pick = Some(c);
                break;
            }
        }
        if pick.is_none() {
            let open: Vec<Cell> = cells.iter().copied().filter(|&c| ctx.compatible(c, &out, None)).collect();
            if !open.is_empty() {
                pick = Some(open[rng.gen_range(0..open.len())]);
            }
        }
        match pick {
            Some(c) => out.push(c),
            None => {
                return Err(Error::Capacity {
                    requested: k,
                    available: out.len(),
                })
            }
        }
    }
    Ok(out)
}

/// Search methods exposed to callers: the ILS and the four baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Ils,
    Random,
    GreedyTmrt,
    GreedyDelta,
    Genetic,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ils,
        Method::Genetic,
        Method::GreedyDelta,
        Method::GreedyTmrt,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ils => "ils",
            Method::Random => "random",
            Method::GreedyTmrt => "greedy-tmrt",
            Method::GreedyDelta => "greedy-delta",
            Method::Genetic => "genetic",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s || m.name().replace('-', "_") == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

/// Runs a baseline (or the ILS) and returns its placement and objective.
pub fn run_method(ctx: &EvalContext, config: &SearchConfig, method: Method) -> Result<SearchResult> {
    config.validate()?;
    let geometry = *ctx.geometry();
    let single = |positions: Vec<Cell>| {
        let objective = Evaluator::new(ctx).objective(&positions);
        SearchResult {
            placement: TreePlacement::new(positions, geometry),
            objective,
            buffer: OptimaBuffer::new(1),
            trace: vec![(0, objective)],
        }
    };
    match method {
        Method::Ils => iterated_local_search(ctx, config),
        Method::Random => Ok(single(random_positions(
            ctx,
            config.k,
            &mut stream(config.seed, &[u64::MAX - 2]),
        )?)),
        Method::GreedyTmrt => {
            let hottest = ctx.baseline_grid().map(|&v| -v);
            Ok(single(greedy_by_score(ctx, &hottest, config.k)?))
        }
        Method::GreedyDelta => Ok(single(greedy_by_score(ctx, &ctx.delta_map(), config.k)?)),
        Method::Genetic => {
            let delta = ctx.delta_map();
            let sampler = CellSampler::for_context(ctx, &delta, config.softmax_temperature)?;
            let (p, o) = run_ga(ctx, &sampler, &[], config, config.baseline_genetic_generations, u64::MAX - 3)?;
            let mut r = single(p);
            r.objective = o;
            Ok(r)
        }
    }
}

/// One row of an ablation table.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub name: &'static str,
    pub switches: Switches,
    pub objective: f64,
}

/// Variants of the ablation table: init only, each component removed, all on.
pub fn ablation_variants() -> Vec<(&'static str, Option<Switches>)> {
    let all = Switches::ALL;
    vec![
        ("init-only", None),
        ("no-greedy-init", Some(Switches { greedy_init: false, ..all })),
        ("no-perturbation", Some(Switches { perturb: false, ..all })),
        ("no-hill-climbing", Some(Switches { climb: false, ..all })),
        ("no-iterations", Some(Switches { iterate: false, ..all })),
        ("full", Some(all)),
    ]
}

pub fn ablate(ctx: &EvalContext, config: &SearchConfig) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (name, switches) in ablation_variants() {
        let (switches, objective) = match switches {
            None => {
                let r = run_method(ctx, config, Method::GreedyDelta)?;
                (
                    Switches {
                        greedy_init: true,
                        perturb: false,
                        climb: false,
                        iterate: false,
                    },
                    r.objective,
                )
            }
            Some(s) => (s, search(ctx, config, s)?.objective),
        };
        rows.push(AblationRow {
            name,
            switches,
            objective,
        });
    }
    Ok(rows)
}

/// Writes `step,objective_K` rows.
pub fn write_trace_csv(path: &Path, trace: &[(usize, f64)]) -> Result<()> {
    let mut out = String::from("step,objective_K\n");
    for (step, obj) in trace {
        out.push_str(&format!("{step},{obj}\n"));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Writes `tree_id,row,col` rows.
pub fn write_placement_csv(path: &Path, placement: &TreePlacement) -> Result<()> {
    let mut out = String::from("tree_id,row,col\n");
    for (i, c) in placement.positions.iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", c.row, c.col));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Reads `tree_id,row,col` rows written by [`write_placement_csv`].
pub fn read_placement_csv(path: &Path, geometry: TreeGeometry) -> Result<TreePlacement> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MalformedData {
            file: path.display().to_string(),
            reason: format!("missing column `{name}`"),
        })
    };
    let (ri, ci) = (col("row")?, col("col")?);
    let mut positions = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| {
            rec.get(i).and_then(|v| v.parse::<usize>().ok()).ok_or_else(|| Error::MalformedData {
                file: path.display().to_string(),
                reason: format!("bad cell index on data line {}", line + 1),
            })
        };
        positions.push(Cell::new(parse(ri)?, parse(ci)?));
    }
    Ok(TreePlacement::new(positions, geometry))
}

#[cfg(test)]
mod tests;
