//! Fast and incremental objective evaluation on top of an [`EvalContext`].

use rayon::prelude::*;

use super::context::{interp, EvalContext, CLASS_BLOCKED, MAX_HIT_CLASS, SVF_SCALE};
use crate::error::{Error, Result};
use crate::raster::{Cell, Grid, TreePlacement};

const NO_SLOT: u32 = u32::MAX;

/// Scratch accumulators for the cells touched by a set of trees.
///
/// All accumulators are integers, so their state depends only on the set of
/// trees applied, never on the order of application.
pub struct Evaluator<'a> {
    ctx: &'a EvalContext,
    slot_of: Vec<u32>,
    cells: Vec<u32>,
    dsvf: Vec<i64>,
    hits: Vec<u16>,
    hit_bins: Vec<Vec<u16>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(ctx: &'a EvalContext) -> Self {
        Evaluator {
            ctx,
            slot_of: vec![NO_SLOT; ctx.width * ctx.height],
            cells: Vec::new(),
            dsvf: Vec::new(),
            hits: Vec::new(),
            hit_bins: Vec::new(),
        }
    }

    pub fn context(&self) -> &'a EvalContext {
        self.ctx
    }

    fn clear(&mut self) {
        for (slot, &c) in self.cells.iter().enumerate() {
            self.slot_of[c as usize] = NO_SLOT;
            self.hit_bins[slot].clear();
        }
        self.cells.clear();
        self.dsvf.clear();
        self.hits.clear();
    }

    #[inline]
    fn slot(&mut self, cell: u32) -> usize {
        let s = self.slot_of[cell as usize];
        if s != NO_SLOT {
            return s as usize;
        }
        let s = self.cells.len();
        self.slot_of[cell as usize] = s as u32;
        self.cells.push(cell);
        self.dsvf.push(0);
        let nb = self.ctx.bins.len();
        self.hits.resize((s + 1) * nb, 0);
        if self.hit_bins.len() <= s {
            self.hit_bins.push(Vec::new());
        }
        s
    }

    /// Adds (`sign = 1`) or removes (`sign = -1`) one tree's footprint,
    /// reporting every slot it touches to `touched`.
    fn stamp(&mut self, p: Cell, sign: i32, mut touched: impl FnMut(usize)) {
        let ctx = self.ctx;
        let nb = ctx.bins.len();
        for &(cell, q) in ctx.svf_stamp(p).iter() {
            let s = self.slot(cell);
            self.dsvf[s] += (sign * q) as i64;
            touched(s);
        }
        for b in 0..nb {
            for &(dr, dc, h) in &ctx.shade_templates[b] {
                let Some(c) = p.offset(dr as i64, dc as i64, ctx.width, ctx.height) else {
                    continue;
                };
                let ci = c.row * ctx.width + c.col;
                if !ctx.valid[ci] || ctx.static_class[ci * nb + b] == CLASS_BLOCKED {
                    continue;
                }
                let s = self.slot(ci as u32);
                let acc = &mut self.hits[s * nb + b];
                if sign > 0 {
                    if *acc == 0 {
                        self.hit_bins[s].push(b as u16);
                    }
                    *acc += h;
                } else {
                    *acc -= h;
                    if *acc == 0 {
                        let list = &mut self.hit_bins[s];
                        let at = list.iter().position(|&x| x == b as u16).expect("bin listed");
                        list.swap_remove(at);
                    }
                }
                touched(s);
            }
        }
    }

    /// Aggregated Tmrt of a touched valid cell under the current accumulators.
    fn value(&mut self, slot: usize) -> f64 {
        let ctx = self.ctx;
        let nb = ctx.bins.len();
        let c = self.cells[slot] as usize;
        let base_svf = ctx.svf_total[c];
        let svf = (base_svf - self.dsvf[slot] as f64 / SVF_SCALE).clamp(0.0, base_svf);
        let mut v = interp(ctx.cell_table(c), svf);
        let bins = &mut self.hit_bins[slot];
        bins.sort_unstable();
        for &b in bins.iter() {
            let b = b as usize;
            let old = ctx.static_class[c * nb + b];
            let new = (old as u16 + self.hits[slot * nb + b]).min(MAX_HIT_CLASS as u16) as u8;
            if new != old {
                v += interp(ctx.table(b, new), svf) - interp(ctx.table(b, old), svf);
            }
        }
        v
    }

    fn apply_all(&mut self, positions: &[Cell]) {
        self.clear();
        for &p in positions {
            self.stamp(p, 1, |_| {});
        }
    }

    /// Sum over touched cells of the change against the baseline, in cell order.
    fn delta_sum(&mut self) -> f64 {
        let mut order: Vec<usize> = (0..self.cells.len()).collect();
        order.sort_unstable_by_key(|&s| self.cells[s]);
        let mut sum = 0.0;
        for s in order {
            let c = self.cells[s] as usize;
            sum += self.value(s) - self.ctx.base[c];
        }
        sum
    }

    /// Objective of trees at `positions`; feasibility is the caller's concern.
    pub fn objective(&mut self, positions: &[Cell]) -> f64 {
        self.apply_all(positions);
        let total = self.ctx.base_total + self.delta_sum();
        total / self.ctx.n_valid.max(1) as f64
    }

    /// Aggregated Tmrt grid of trees at `positions`.
    pub fn grid(&mut self, positions: &[Cell]) -> Grid {
        self.apply_all(positions);
        let mut out = self.ctx.base.clone();
        for s in 0..self.cells.len() {
            let c = self.cells[s] as usize;
            out[c] = self.value(s);
        }
        Grid::from_vec(self.ctx.width, self.ctx.height, out).expect("dims")
    }
}

/// A placement held inside an evaluator for cheap single-tree moves.
pub struct MoveSession<'a> {
    eval: Evaluator<'a>,
    positions: Vec<Cell>,
    values: Vec<f64>,
    delta_total: f64,
    mark: Vec<u32>,
    epoch: u32,
    changed: Vec<usize>,
}

impl<'a> MoveSession<'a> {
    /// Starts from a placement assumed feasible.
    pub fn new(ctx: &'a EvalContext, positions: &[Cell]) -> Self {
        let mut eval = Evaluator::new(ctx);
        eval.apply_all(positions);
        let n = eval.cells.len();
        let mut values = vec![0.0; n];
        for (s, v) in values.iter_mut().enumerate() {
            *v = eval.value(s);
        }
        let delta_total = eval.delta_sum();
        MoveSession {
            eval,
            positions: positions.to_vec(),
            values,
            delta_total,
            mark: Vec::new(),
            epoch: 0,
            changed: Vec::new(),
        }
    }

    pub fn positions(&self) -> &[Cell] {
        &self.positions
    }

    pub fn objective(&self) -> f64 {
        let ctx = self.eval.ctx;
        (ctx.base_total + self.delta_total) / ctx.n_valid.max(1) as f64
    }

    /// Whether tree `i` may move to `to` without violating constraints.
    pub fn can_move(&self, i: usize, to: Cell) -> bool {
        self.eval.ctx.compatible(to, &self.positions, Some(i))
    }

    fn collect(&mut self, p: Cell, sign: i32) {
        let mark = &mut self.mark;
        let epoch = self.epoch;
        let changed = &mut self.changed;
        self.eval.stamp(p, sign, |s| {
            if mark.len() <= s {
                mark.resize(s + 1, 0);
            }
            if mark[s] != epoch {
                mark[s] = epoch;
                changed.push(s);
            }
        });
    }

    /// Objective change if tree `i` moved to `to`; the session is left unchanged.
    pub fn try_move(&mut self, i: usize, to: Cell) -> f64 {
        let (delta, _) = self.evaluate_move(i, to);
        let from = self.positions[i];
        self.eval.stamp(to, -1, |_| {});
        self.eval.stamp(from, 1, |_| {});
        delta / self.eval.ctx.n_valid.max(1) as f64
    }

    fn evaluate_move(&mut self, i: usize, to: Cell) -> (f64, Vec<(usize, f64)>) {
        let from = self.positions[i];
        self.epoch = self.epoch.wrapping_add(1).max(1);
        self.changed.clear();
        self.collect(from, -1);
        self.collect(to, 1);
        let mut changed = std::mem::take(&mut self.changed);
        changed.sort_unstable_by_key(|&s| self.eval.cells[s]);
        let mut delta = 0.0;
        let mut updates = Vec::with_capacity(changed.len());
        for &s in &changed {
            let v = self.eval.value(s);
            let old = self.values.get(s).copied().unwrap_or(self.eval.ctx.base[self.eval.cells[s] as usize]);
            delta += v - old;
            updates.push((s, v));
        }
        self.changed = changed;
        (delta, updates)
    }

    /// Moves tree `i` to `to` and returns the new objective.
    pub fn commit_move(&mut self, i: usize, to: Cell) -> f64 {
        let (delta, updates) = self.evaluate_move(i, to);
        if self.values.len() < self.eval.cells.len() {
            let ctx = self.eval.ctx;
            let cells = &self.eval.cells;
            let start = self.values.len();
            self.values
                .extend(cells[start..].iter().map(|&c| ctx.base[c as usize]));
        }
        for (s, v) in updates {
            self.values[s] = v;
        }
        self.delta_total += delta;
        self.positions[i] = to;
        self.objective()
    }
}

impl EvalContext {
    /// Objective of a feasible placement: mean aggregated Tmrt over valid cells.
    pub fn evaluate_fast(&self, placement: &TreePlacement) -> Result<f64> {
        self.check_placement(placement)?;
        Ok(Evaluator::new(self).objective(&placement.positions))
    }

    /// Objective and aggregated grid of a feasible placement.
    pub fn evaluate_fast_grid(&self, placement: &TreePlacement) -> Result<(f64, Grid)> {
        self.check_placement(placement)?;
        let mut e = Evaluator::new(self);
        let objective = e.objective(&placement.positions);
        Ok((objective, e.grid(&placement.positions)))
    }

    /// Objective after moving tree `tree` of `placement` to `to`.
    pub fn move_delta(&self, placement: &TreePlacement, tree: usize, to: Cell) -> Result<f64> {
        self.check_placement(placement)?;
        if tree >= placement.len() {
            return Err(Error::InvalidParameter(format!("no tree with index {tree}")));
        }
        if !self.compatible(to, &placement.positions, Some(tree)) {
            return Err(Error::Infeasible(format!(
                "tree {tree} cannot move to ({}, {})",
                to.row, to.col
            )));
        }
        let mut session = MoveSession::new(self, &placement.positions);
        Ok(session.commit_move(tree, to))
    }

    /// Change of the objective from a single tree at each cell; infeasible
    /// cells hold `+inf`.
    pub fn delta_map(&self) -> Grid {
        let baseline = self.baseline();
        let n = self.width * self.height;
        let values: Vec<f64> = (0..n)
            .into_par_iter()
            .map_init(
                || Evaluator::new(self),
                |eval, i| {
                    if !self.plantable[i] {
                        return f64::INFINITY;
                    }
                    let p = Cell::new(i / self.width, i % self.width);
                    eval.clear();
                    for &(cell, q) in self.compute_svf_stamp(p).iter() {
                        let s = eval.slot(cell);
                        eval.dsvf[s] += q as i64;
                    }
                    eval.stamp_shade_only(p);
                    let total = self.base_total + eval.delta_sum();
                    total / self.n_valid.max(1) as f64 - baseline
                },
            )
            .collect();
        Grid::from_vec(self.width, self.height, values).expect("dims")
    }
}

impl Evaluator<'_> {
    fn stamp_shade_only(&mut self, p: Cell) {
        let ctx = self.ctx;
        let nb = ctx.bins.len();
        for b in 0..nb {
            for &(dr, dc, h) in &ctx.shade_templates[b] {
                let Some(c) = p.offset(dr as i64, dc as i64, ctx.width, ctx.height) else {
                    continue;
                };
                let ci = c.row * ctx.width + c.col;
                if !ctx.valid[ci] || ctx.static_class[ci * nb + b] == CLASS_BLOCKED {
                    continue;
                }
                let s = self.slot(ci as u32);
                if self.hits[s * nb + b] == 0 {
                    self.hit_bins[s].push(b as u16);
                }
                self.hits[s * nb + b] += h;
            }
        }
    }
}
