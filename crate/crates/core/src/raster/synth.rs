//! Seeded synthetic study areas: street grid, building blocks, green patches
//! and scattered existing trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Cell, Grid, LandCover, Raster, StudyArea, TreeGeometry};
use crate::error::{Error, Result};

const GROUND_ELEVATION: f64 = 200.0;
const MIN_DIM: usize = 16;
const STREET_WIDTH: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreetPattern {
    /// Regular orthogonal streets.
    Grid,
    /// Orthogonal streets with jittered spacing.
    Irregular,
    /// No streets; the whole area is one block.
    Open,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    /// Approximate built fraction of each block, in [0, 1].
    pub building_density: f64,
    /// Approximate canopy-covered fraction of plantable cells, in [0, 1].
    pub vegetation_density: f64,
    pub street_pattern: StreetPattern,
    pub water_strip: bool,
    pub latitude: f64,
    pub longitude: f64,
}

impl SynthSpec {
    pub fn new(width: usize, height: usize) -> Self {
        SynthSpec {
            width,
            height,
            building_density: 0.3,
            vegetation_density: 0.1,
            street_pattern: StreetPattern::Grid,
            water_strip: false,
            latitude: 48.0,
            longitude: 7.85,
        }
    }

    pub fn densities(mut self, building: f64, vegetation: f64) -> Self {
        self.building_density = building;
        self.vegetation_density = vegetation;
        self
    }

    pub fn pattern(mut self, pattern: StreetPattern) -> Self {
        self.street_pattern = pattern;
        self
    }

    pub fn with_water(mut self, water: bool) -> Self {
        self.water_strip = water;
        self
    }
}

/// Builds a deterministic synthetic area for `seed`.
pub fn synth_study_area(seed: u64, spec: &SynthSpec) -> Result<StudyArea> {
    for (name, v) in [
        ("building density", spec.building_density),
        ("vegetation density", spec.vegetation_density),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} {v} outside [0, 1]")));
        }
    }
    if spec.width < MIN_DIM || spec.height < MIN_DIM {
        return Err(Error::InvalidParameter(format!(
            "synthetic areas need at least {MIN_DIM}x{MIN_DIM} cells"
        )));
    }
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let row_streets = street_lines(h, spec.street_pattern, &mut rng);
    let col_streets = street_lines(w, spec.street_pattern, &mut rng);
    let mut cover = Raster::filled(w, h, LandCover::Grass);
    let mut building_height = Grid::zeros(w, h);

    for cell in cover.cells().collect::<Vec<_>>() {
        if row_streets.contains(&cell.row) || col_streets.contains(&cell.col) {
            cover[cell] = LandCover::Paved;
        }
    }

    for (r0, r1) in spans(h, &row_streets) {
        for (c0, c1) in spans(w, &col_streets) {
            let surface = match rng.gen_range(0..10) {
                0..=4 => LandCover::Grass,
                5..=7 => LandCover::Paved,
                _ => LandCover::BareSoil,
            };
            for r in r0..r1 {
                for c in c0..c1 {
                    cover[Cell::new(r, c)] = surface;
                }
            }
            if spec.building_density <= 0.0 {
                continue;
            }
            let scale = spec.building_density.sqrt();
            let bh = ((r1 - r0) as f64 * scale).round() as usize;
            let bw = ((c1 - c0) as f64 * scale).round() as usize;
            if bh == 0 || bw == 0 {
                continue;
            }
            let top = r0 + rng.gen_range(0..=(r1 - r0 - bh));
            let left = c0 + rng.gen_range(0..=(c1 - c0 - bw));
            let height = rng.gen_range(6..=25) as f64;
            for r in top..top + bh {
                for c in left..left + bw {
                    cover[Cell::new(r, c)] = LandCover::Building;
                    building_height[Cell::new(r, c)] = height;
                }
            }
        }
    }

    if spec.water_strip {
        let start = h * 4 / 5;
        for r in start..(start + 3).min(h) {
            for c in 0..w {
                cover[Cell::new(r, c)] = LandCover::Water;
                building_height[Cell::new(r, c)] = 0.0;
            }
        }
    }

    let dem = Grid::filled(w, h, GROUND_ELEVATION);
    let dsm = dem.zip_map(&building_height, |g, b| g + b);
    let vegetation = scatter_trees(&cover, spec.vegetation_density, &mut rng);
    let (wall_height, wall_aspect) = derive_walls(&dsm, &cover);

    StudyArea::new(
        dem,
        dsm,
        vegetation,
        cover,
        wall_height,
        wall_aspect,
        spec.latitude,
        spec.longitude,
    )
}

/// Row or column indices covered by streets.
fn street_lines(extent: usize, pattern: StreetPattern, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut lines = Vec::new();
    if pattern == StreetPattern::Open {
        return lines;
    }
    let period = rng.gen_range(18..=26);
    let mut start = rng.gen_range(0..period / 2);
    while start < extent {
        lines.extend(start..(start + STREET_WIDTH).min(extent));
        let jitter = match pattern {
            StreetPattern::Irregular => rng.gen_range(0..=8),
            _ => 0,
        };
        start += period + jitter;
    }
    lines
}

/// Maximal runs of indices in `0..extent` not covered by `lines`.
fn spans(extent: usize, lines: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut begin = None;
    for i in 0..=extent {
        let free = i < extent && !lines.contains(&i);
        match (free, begin) {
            (true, None) => begin = Some(i),
            (false, Some(b)) => {
                out.push((b, i));
                begin = None;
            }
            _ => {}
        }
    }
    out
}

fn scatter_trees(cover: &Raster<LandCover>, density: f64, rng: &mut ChaCha8Rng) -> Grid {
    let (w, h) = (cover.width(), cover.height());
    let mut veg = Grid::zeros(w, h);
    let plantable = cover.data().iter().filter(|c| c.is_plantable()).count();
    let target = (density * plantable as f64).round() as usize;
    let mut covered = 0usize;
    let mut attempts = 0;
    while covered < target && attempts < 20_000 {
        attempts += 1;
        let center = Cell::new(rng.gen_range(0..h), rng.gen_range(0..w));
        let diameter = [3.0, 5.0, 7.0][rng.gen_range(0..3)];
        let height = rng.gen_range(6..=14) as f64;
        if !cover[center].is_plantable() {
            continue;
        }
        let geometry = TreeGeometry {
            height,
            crown_diameter: diameter,
            trunk_height_fraction: 0.25,
        };
        for (dr, dc, top) in geometry.crown_offsets() {
            if let Some(c) = center.offset(dr, dc, w, h) {
                if cover[c] == LandCover::Building {
                    continue;
                }
                if veg[c] == 0.0 {
                    covered += 1;
                }
                veg[c] = f64::max(veg[c], top);
            }
        }
    }
    veg
}

/// Walls on building edges: height of the largest drop to a 4-neighbor and
/// the compass direction that face points to.
pub fn derive_walls(dsm: &Grid, cover: &Raster<LandCover>) -> (Grid, Grid) {
    let (w, h) = (dsm.width(), dsm.height());
    let mut height = Grid::zeros(w, h);
    let mut aspect = Grid::zeros(w, h);
    const FACES: [(i64, i64, f64); 4] = [(-1, 0, 0.0), (0, 1, 90.0), (1, 0, 180.0), (0, -1, 270.0)];
    for cell in dsm.cells() {
        if cover[cell] != LandCover::Building {
            continue;
        }
        let mut best = (0.0, 0.0);
        for (dr, dc, face) in FACES {
            if let Some(n) = cell.offset(dr, dc, w, h) {
                let drop = dsm[cell] - dsm[n];
                if drop > best.0 {
                    best = (drop, face);
                }
            }
        }
        height[cell] = best.0;
        aspect[cell] = best.1;
    }
    (height, aspect)
}
