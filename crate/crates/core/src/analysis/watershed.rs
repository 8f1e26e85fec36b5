//! Crown delineation on a vegetation height model.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::raster::{Cell, Grid};

/// Trees with a lower apex are discarded, m.
pub const MIN_TREE_HEIGHT: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedTree {
    pub apex: Cell,
    pub apex_height: f64,
    /// Crown cells in row-major order.
    pub cells: Vec<Cell>,
}

impl ExtractedTree {
    /// Diameter of the disc with the crown's area, m.
    pub fn diameter(&self) -> f64 {
        2.0 * (self.cells.len() as f64 / std::f64::consts::PI).sqrt()
    }
}

const NEIGHBORS8: [(i64, i64); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

#[derive(PartialEq)]
struct Entry {
    height: f64,
    order: u64,
    index: usize,
    label: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.height
            .total_cmp(&other.height)
            .then_with(|| other.order.cmp(&self.order))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Connected equal-height plateaus with no strictly higher neighbor, each
/// as its row-major list of cells.
fn maxima(veg: &Grid) -> Vec<Vec<usize>> {
    let (w, h) = (veg.width(), veg.height());
    let v = veg.data();
    let mut seen = vec![false; v.len()];
    let mut out = Vec::new();
    for start in 0..v.len() {
        if seen[start] || !(v[start] > 0.0) {
            continue;
        }
        let mut plateau = vec![start];
        seen[start] = true;
        let mut is_max = true;
        let mut i = 0;
        while i < plateau.len() {
            let c = veg.cell_of(plateau[i]);
            for (dr, dc) in NEIGHBORS8 {
                let Some(q) = c.offset(dr, dc, w, h) else { continue };
                let qi = q.row * w + q.col;
                if v[qi] > v[start] {
                    is_max = false;
                } else if v[qi] == v[start] && !seen[qi] {
                    seen[qi] = true;
                    plateau.push(qi);
                }
            }
            i += 1;
        }
        if is_max {
            plateau.sort_unstable();
            out.push(plateau);
        }
    }
    out
}

/// Priority flood from every canopy maximum; crowns whose apex is below
/// `min_height` are dropped.
pub fn extract_trees_watershed(veg: &Grid, min_height: f64) -> Vec<ExtractedTree> {
    let (w, h) = (veg.width(), veg.height());
    let v = veg.data();
    let seeds = maxima(veg);
    let mut label = vec![usize::MAX; v.len()];
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    for (l, plateau) in seeds.iter().enumerate() {
        for &i in plateau {
            label[i] = l;
            heap.push(Entry {
                height: v[i],
                order,
                index: i,
                label: l,
            });
            order += 1;
        }
    }
    while let Some(e) = heap.pop() {
        let c = veg.cell_of(e.index);
        for (dr, dc) in NEIGHBORS8 {
            let Some(q) = c.offset(dr, dc, w, h) else { continue };
            let qi = q.row * w + q.col;
            if label[qi] == usize::MAX && v[qi] > 0.0 {
                label[qi] = e.label;
                heap.push(Entry {
                    height: v[qi],
                    order,
                    index: qi,
                    label: e.label,
                });
                order += 1;
            }
        }
    }
    let mut crowns: Vec<Vec<Cell>> = vec![Vec::new(); seeds.len()];
    for (i, &l) in label.iter().enumerate() {
        if l != usize::MAX {
            crowns[l].push(veg.cell_of(i));
        }
    }
    seeds
        .iter()
        .zip(crowns)
        .filter(|(p, _)| v[p[0]] >= min_height)
        .map(|(p, cells)| ExtractedTree {
            apex: veg.cell_of(p[0]),
            apex_height: v[p[0]],
            cells,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{rasterize_tree, TreeGeometry};

    fn stamp(g: &mut Grid, geom: &TreeGeometry, at: Cell) {
        let patch = rasterize_tree(geom, at, g.width(), g.height());
        for (c, z) in patch.cells {
            g[c] = g[c].max(z);
        }
    }

    /// Steepest-ascent walk to a maximum; the reference basin assignment.
    fn ascend(g: &Grid, mut c: Cell) -> Cell {
        loop {
            let mut best = c;
            for (dr, dc) in NEIGHBORS8 {
                if let Some(q) = c.offset(dr, dc, g.width(), g.height()) {
                    if g[q] > g[best] {
                        best = q;
                    }
                }
            }
            if best == c {
                return c;
            }
            c = best;
        }
    }

    #[test]
    fn disjoint_crowns_are_recovered_exactly() {
        let mut g = Grid::zeros(40, 30);
        let a = TreeGeometry::new(12.0, 9.0, 0.25).unwrap();
        let b = TreeGeometry::new(8.0, 7.0, 0.25).unwrap();
        stamp(&mut g, &a, Cell::new(10, 10));
        stamp(&mut g, &b, Cell::new(20, 28));
        let trees = extract_trees_watershed(&g, MIN_TREE_HEIGHT);
        assert_eq!(trees.len(), 2);
        assert_eq!(trees[0].apex, Cell::new(10, 10));
        assert_eq!(trees[0].apex_height, 12.0);
        assert_eq!(trees[0].cells.len(), a.crown_offsets().len());
        assert_eq!(trees[1].apex, Cell::new(20, 28));
        assert_eq!(trees[1].cells.len(), b.crown_offsets().len());
    }

    #[test]
    fn shrubs_are_ignored() {
        let mut g = Grid::zeros(12, 12);
        stamp(&mut g, &TreeGeometry::new(2.5, 3.0, 0.25).unwrap(), Cell::new(6, 6));
        assert!(extract_trees_watershed(&g, MIN_TREE_HEIGHT).is_empty());
    }

    #[test]
    fn merged_crowns_split_like_steepest_ascent() {
        let mut g = Grid::zeros(20, 20);
        let geom = TreeGeometry::new(12.0, 9.0, 0.25).unwrap();
        stamp(&mut g, &geom, Cell::new(9, 6));
        stamp(&mut g, &TreeGeometry::new(10.0, 9.0, 0.25).unwrap(), Cell::new(10, 13));
        let trees = extract_trees_watershed(&g, MIN_TREE_HEIGHT);
        assert_eq!(trees.len(), 2);
        assert_eq!(trees[0].apex, Cell::new(9, 6));
        assert_eq!(trees[1].apex, Cell::new(10, 13));
        let total: usize = trees.iter().map(|t| t.cells.len()).sum();
        let agree: usize = trees
            .iter()
            .map(|t| t.cells.iter().filter(|&&c| ascend(&g, c) == t.apex).count())
            .sum();
        assert_eq!(total, g.data().iter().filter(|&&v| v > 0.0).count());
        assert!(agree as f64 >= 0.95 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn plateau_maximum_is_one_tree() {
        let mut g = Grid::zeros(10, 10);
        for r in 3..6 {
            for c in 3..7 {
                g[Cell::new(r, c)] = 5.0;
            }
        }
        g[Cell::new(2, 4)] = 4.0;
        let trees = extract_trees_watershed(&g, MIN_TREE_HEIGHT);
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].apex, Cell::new(3, 3));
        assert_eq!(trees[0].cells.len(), 13);
    }
}
