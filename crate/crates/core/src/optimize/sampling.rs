//! Softmax sampling of tree positions from a single-tree delta map.

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::{Cell, Grid};
use crate::tmrt::EvalContext;

/// Softmax over `-delta / tau` on finite cells; non-finite cells get 0.
///
/// Weights are floored at the smallest normal float so that extreme maps
/// still give every finite cell a positive probability.
pub fn sample_probability(delta: &Grid, tau: f64) -> Result<Grid> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("softmax temperature must be > 0, got {tau}")));
    }
    let best = delta
        .data()
        .iter()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if !best.is_finite() {
        return Err(Error::Infeasible("no feasible cell to sample from".into()));
    }
    let weights: Vec<f64> = delta
        .data()
        .iter()
        .map(|&d| {
            if d.is_finite() {
                (-(d - best) / tau).exp().max(f64::MIN_POSITIVE)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let probs = weights.into_iter().map(|w| w / total).collect();
    Grid::from_vec(delta.width(), delta.height(), probs)
}

/// Inverse-CDF sampler over the cells with positive probability.
#[derive(Clone, Debug)]
pub struct CellSampler {
    width: usize,
    cells: Vec<usize>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl CellSampler {
    pub fn new(probabilities: &Grid) -> Result<Self> {
        let mut cells = Vec::new();
        let mut weights = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (i, &p) in probabilities.data().iter().enumerate() {
            if p > 0.0 {
                acc += p;
                cells.push(i);
                weights.push(p);
                cumulative.push(acc);
            }
        }
        if cells.is_empty() {
            return Err(Error::Infeasible("no feasible cell to sample from".into()));
        }
        Ok(CellSampler {
            width: probabilities.width(),
            cells,
            weights,
            cumulative,
        })
    }

    /// Sampler for the context's delta map rescaled to per-canopy-cell values.
    pub fn for_context(ctx: &EvalContext, delta: &Grid, tau: f64) -> Result<Self> {
        let scale = ctx.n_valid() as f64 / ctx.geometry().crown_offsets().len() as f64;
        let scaled = delta.map(|&d| if d.is_finite() { d * scale } else { d });
        CellSampler::new(&sample_probability(&scaled, tau)?)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn cell(&self, i: usize) -> Cell {
        Cell::new(self.cells[i] / self.width, self.cells[i] % self.width)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Cell {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.gen::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.cells.len() - 1);
        self.cell(i)
    }

    /// Draws a cell compatible with `others`, renormalizing over the
    /// compatible cells when rejection keeps failing.
    pub fn sample_compatible(
        &self,
        ctx: &EvalContext,
        others: &[Cell],
        skip: Option<usize>,
        rng: &mut impl Rng,
    ) -> Option<Cell> {
        for _ in 0..64 {
            let c = self.sample(rng);
            if ctx.compatible(c, others, skip) {
                return Some(c);
            }
        }
        let open: Vec<(usize, f64)> = (0..self.cells.len())
            .filter(|&i| ctx.compatible(self.cell(i), others, skip))
            .map(|i| (i, self.weights[i]))
            .collect();
        let total: f64 = open.iter().map(|(_, w)| w).sum();
        if open.is_empty() || total <= 0.0 {
            return None;
        }
        let mut u = rng.gen::<f64>() * total;
        for &(i, w) in &open {
            if u < w {
                return Some(self.cell(i));
            }
            u -= w;
        }
        open.last().map(|&(i, _)| self.cell(i))
    }

    /// A feasible placement of `k` trees drawn gene by gene.
    pub fn sample_placement(&self, ctx: &EvalContext, k: usize, rng: &mut impl Rng) -> Result<Vec<Cell>> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            match self.sample_compatible(ctx, &out, None, rng) {
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
}
