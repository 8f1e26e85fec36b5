//! Shadow casting and sky view factors by ray marching over the surface models.
//!
//! Rays leave each cell at pedestrian height and advance in 1 m horizontal
//! steps. Buildings and terrain block a ray outright; vegetation occupies the
//! column between trunk top and canopy top and attenuates the beam by the
//! canopy transmissivity once per distinct canopy cell traversed.

mod svf;

use rayon::prelude::*;

use crate::raster::{Cell, Grid, LandCover, StudyArea, TreeGeometry};

pub use svf::{compute_svf, compute_svf_with, svf_states, SkyDirections, SvfMaps};

/// Height of the evaluation point above the surface, m.
pub const PERSON_HEIGHT: f64 = 1.1;

/// Per-ray state stored in compact caches: canopy cell hits, or blocked.
pub const BLOCKED: u8 = u8::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct ShadowConfig {
    /// Fraction of the canopy-top height below which vegetation is transparent.
    pub trunk_fraction: f64,
    pub n_azimuth: usize,
    pub n_elevation: usize,
    /// Horizontal distance beyond which vegetation no longer obstructs sky
    /// view, m. Buildings are traced to the grid edge.
    pub svf_vegetation_reach: f64,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig {
            trunk_fraction: 0.25,
            n_azimuth: 36,
            n_elevation: 18,
            svf_vegetation_reach: 30.0,
        }
    }
}

/// A ray direction in grid coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub d_row: f64,
    pub d_col: f64,
    pub tan_elevation: f64,
}

impl Ray {
    /// Direction toward a point at the given azimuth (clockwise from north)
    /// and elevation, both in degrees.
    pub fn toward(azimuth: f64, elevation: f64) -> Self {
        let az = azimuth.to_radians();
        Ray {
            d_row: -az.cos(),
            d_col: az.sin(),
            tan_elevation: elevation.to_radians().tan(),
        }
    }
}

/// Outcome of one traced ray.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Trace {
    pub blocked: bool,
    /// Distinct canopy cells the ray passes through before any block.
    pub hits: u32,
}

impl Trace {
    pub fn state(self) -> u8 {
        if self.blocked {
            BLOCKED
        } else {
            self.hits.min(BLOCKED as u32 - 1) as u8
        }
    }
}

/// Absolute heights prepared for ray marching.
#[derive(Clone, Debug)]
pub struct Surface {
    width: usize,
    height: usize,
    solid: Vec<f64>,
    canopy_low: Vec<f64>,
    canopy_high: Vec<f64>,
    building: Vec<bool>,
    max_z: f64,
}

impl Surface {
    pub fn from_area(area: &StudyArea, trunk_fraction: f64) -> Self {
        let n = area.n_cells();
        let mut canopy_low = vec![f64::INFINITY; n];
        let mut canopy_high = vec![f64::NEG_INFINITY; n];
        for i in 0..n {
            let v = area.vegetation.data()[i];
            if v > 0.0 {
                let g = area.dem.data()[i];
                canopy_low[i] = g + trunk_fraction * v;
                canopy_high[i] = g + v;
            }
        }
        let solid = area.dsm.data().to_vec();
        let max_z = solid
            .iter()
            .chain(canopy_high.iter())
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Surface {
            width: area.width(),
            height: area.height(),
            solid,
            canopy_low,
            canopy_high,
            building: area
                .land_cover
                .data()
                .iter()
                .map(|&c| c == LandCover::Building)
                .collect(),
            max_z,
        }
    }

    /// Flat open ground at height zero carrying a single tree crown, used to
    /// derive translation-invariant tree footprints.
    pub fn single_tree(
        geometry: &TreeGeometry,
        trunk_fraction: f64,
        width: usize,
        height: usize,
        center: Cell,
    ) -> Self {
        let n = width * height;
        let mut canopy_low = vec![f64::INFINITY; n];
        let mut canopy_high = vec![f64::NEG_INFINITY; n];
        let mut max_z: f64 = 0.0;
        for (dr, dc, top) in geometry.crown_offsets() {
            if let Some(c) = center.offset(dr, dc, width, height) {
                let i = c.row * width + c.col;
                canopy_low[i] = trunk_fraction * top;
                canopy_high[i] = top;
                max_z = max_z.max(top);
            }
        }
        Surface {
            width,
            height,
            solid: vec![0.0; n],
            canopy_low,
            canopy_high,
            building: vec![false; n],
            max_z,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn is_building(&self, index: usize) -> bool {
        self.building[index]
    }

    pub fn diagonal(&self) -> f64 {
        ((self.width * self.width + self.height * self.height) as f64).sqrt()
    }

    /// Marches a ray from pedestrian height above `origin`.
    ///
    /// Sample `k` stands for the ray while its horizontal distance lies in
    /// `[k - 0.5, k + 0.5]`, rounded to the nearest cell. A solid surface
    /// above the lower ray height of a sample blocks; a canopy column
    /// overlapping the sample's height interval counts as a hit. Vegetation
    /// farther than `vegetation_reach` is ignored.
    pub fn trace(&self, origin: Cell, ray: &Ray, vegetation_reach: f64) -> Trace {
        let oi = origin.row * self.width + origin.col;
        let z0 = self.solid[oi] + PERSON_HEIGHT;
        let t = ray.tan_elevation;
        let (r0, c0) = (origin.row as f64, origin.col as f64);
        let building_reach = self.diagonal();
        let mut out = Trace::default();
        let mut last_hit = usize::MAX;
        let mut k = 0usize;
        loop {
            let kf = k as f64;
            let z_lo = if k == 0 { z0 } else { z0 + (kf - 0.5) * t };
            if z_lo > self.max_z || kf - 0.5 > building_reach {
                break;
            }
            let r = (r0 + kf * ray.d_row).round();
            let c = (c0 + kf * ray.d_col).round();
            if r < 0.0 || c < 0.0 || r >= self.height as f64 || c >= self.width as f64 {
                break;
            }
            let qi = r as usize * self.width + c as usize;
            if k > 0 && self.solid[qi] > z_lo {
                out.blocked = true;
                break;
            }
            if kf <= vegetation_reach && qi != last_hit {
                let z_hi = z0 + (kf + 0.5) * t;
                if self.canopy_high[qi] >= z_lo && self.canopy_low[qi] <= z_hi {
                    out.hits += 1;
                    last_hit = qi;
                }
            }
            k += 1;
        }
        out
    }
}

/// Shading of the direct beam for one sun position.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadowField {
    /// 1 where the sun is visible past buildings and terrain, else 0.
    pub building_shadow: Grid,
    /// Fraction of the beam transmitted through canopies.
    pub vegetation_shadow: Grid,
    pub sun_elevation: f64,
    pub sun_azimuth: f64,
}

impl ShadowField {
    pub fn night(width: usize, height: usize, elevation: f64, azimuth: f64) -> Self {
        ShadowField {
            building_shadow: Grid::zeros(width, height),
            vegetation_shadow: Grid::zeros(width, height),
            sun_elevation: elevation,
            sun_azimuth: azimuth,
        }
    }

    /// Combined direct-beam factor of one cell.
    pub fn sunlit(&self, index: usize) -> f64 {
        self.building_shadow.data()[index] * self.vegetation_shadow.data()[index]
    }
}

/// Per-cell sun-ray states (canopy hits or [`BLOCKED`]); building cells are blocked.
pub fn sun_states(surface: &Surface, elevation: f64, azimuth: f64) -> Vec<u8> {
    let ray = Ray::toward(azimuth, elevation);
    let w = surface.width;
    let mut out = vec![BLOCKED; surface.n_cells()];
    out.par_chunks_mut(w).enumerate().for_each(|(row, chunk)| {
        for (col, slot) in chunk.iter_mut().enumerate() {
            if !surface.building[row * w + col] {
                *slot = surface.trace(Cell::new(row, col), &ray, f64::INFINITY).state();
            }
        }
    });
    out
}

/// Shadow field of `area` for a sun position, default trunk zone.
pub fn cast_shadows(
    area: &StudyArea,
    sun_elevation: f64,
    sun_azimuth: f64,
    transmissivity: f64,
) -> ShadowField {
    let surface = Surface::from_area(area, ShadowConfig::default().trunk_fraction);
    cast_shadows_with(&surface, sun_elevation, sun_azimuth, transmissivity)
}

pub fn cast_shadows_with(
    surface: &Surface,
    sun_elevation: f64,
    sun_azimuth: f64,
    transmissivity: f64,
) -> ShadowField {
    let (w, h) = (surface.width, surface.height);
    if sun_elevation <= 0.0 {
        return ShadowField::night(w, h, sun_elevation, sun_azimuth);
    }
    let states = sun_states(surface, sun_elevation, sun_azimuth);
    let mut building = Grid::zeros(w, h);
    let mut vegetation = Grid::zeros(w, h);
    for (i, &s) in states.iter().enumerate() {
        if s != BLOCKED {
            building.data_mut()[i] = 1.0;
            vegetation.data_mut()[i] = transmissivity.powi(s as i32);
        } else if !surface.building[i] {
            // Blocked by buildings: the canopy factor is still meaningful but
            // irrelevant; report it as fully transmitted.
            vegetation.data_mut()[i] = 1.0;
        }
    }
    ShadowField {
        building_shadow: building,
        vegetation_shadow: vegetation,
        sun_elevation,
        sun_azimuth,
    }
}

/// Inclusive bounding box of cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl Region {
    pub fn around(center: Cell, radius: usize, width: usize, height: usize) -> Self {
        Region {
            row_min: center.row.saturating_sub(radius),
            row_max: (center.row + radius).min(height - 1),
            col_min: center.col.saturating_sub(radius),
            col_max: (center.col + radius).min(width - 1),
        }
    }

    pub fn contains(&self, cell: Cell) -> bool {
        (self.row_min..=self.row_max).contains(&cell.row)
            && (self.col_min..=self.col_max).contains(&cell.col)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.row_min..=self.row_max)
            .flat_map(move |r| (self.col_min..=self.col_max).map(move |c| Cell::new(r, c)))
    }
}

/// Radius in meters of the area whose direct shading a tree can change.
pub fn influence_radius(geometry: &TreeGeometry, min_sun_elevation: f64) -> f64 {
    let t = min_sun_elevation.to_radians().tan();
    let reach = if min_sun_elevation >= 90.0 { 0.0 } else { geometry.height / t };
    geometry.crown_radius() + reach
}

/// Bounding box of cells whose direct shading can change when a tree stands at
/// `position`, clipped to the grid.
pub fn influence_region(
    position: Cell,
    geometry: &TreeGeometry,
    min_sun_elevation: f64,
    width: usize,
    height: usize,
) -> Region {
    let r = influence_radius(geometry, min_sun_elevation).ceil();
    let r = if r.is_finite() { r.min((width + height) as f64) as usize } else { width + height };
    Region::around(position, r, width, height)
}

/// Radius in cells beyond which a tree cannot change sky view factors.
pub fn svf_influence_radius(geometry: &TreeGeometry, config: &ShadowConfig) -> usize {
    (config.svf_vegetation_reach + geometry.crown_radius()).ceil() as usize + 1
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::raster::{apply_placement, Raster, TreePlacement};
    use proptest::prelude::*;

    pub(crate) fn open_area(w: usize, h: usize) -> StudyArea {
        StudyArea::new(
            Grid::filled(w, h, 100.0),
            Grid::filled(w, h, 100.0),
            Grid::zeros(w, h),
            Raster::filled(w, h, LandCover::Paved),
            Grid::zeros(w, h),
            Grid::zeros(w, h),
            48.0,
            7.85,
        )
        .unwrap()
    }

    /// A building wall occupying whole columns `col..col+thick`.
    pub(crate) fn with_wall(area: &StudyArea, col: usize, thick: usize, height: f64) -> StudyArea {
        let mut dsm = area.dsm.clone();
        let mut lc = area.land_cover.clone();
        for r in 0..area.height() {
            for c in col..col + thick {
                dsm[Cell::new(r, c)] = area.dem[Cell::new(r, c)] + height;
                lc[Cell::new(r, c)] = LandCover::Building;
            }
        }
        StudyArea::new(
            area.dem.clone(),
            dsm,
            area.vegetation.clone(),
            lc,
            area.wall_height.clone(),
            area.wall_aspect.clone(),
            area.latitude,
            area.longitude,
        )
        .unwrap()
    }

    #[test]
    fn zenith_sun_marks_canopy_discs_only() {
        let area = open_area(30, 30);
        let p = TreePlacement::new(vec![Cell::new(15, 15)], TreeGeometry::default());
        let area = apply_placement(&area, &p).unwrap();
        let f = cast_shadows(&area, 90.0, 0.0, 0.03);
        for cell in area.dem.cells() {
            assert_eq!(f.building_shadow[cell], 1.0);
            let expect = if area.vegetation[cell] > 0.0 { 0.03 } else { 1.0 };
            assert_eq!(f.vegetation_shadow[cell], expect, "{cell:?}");
        }
    }

    #[test]
    fn below_horizon_is_fully_shaded() {
        let area = open_area(10, 10);
        let f = cast_shadows(&area, -5.0, 180.0, 0.03);
        assert!(f.building_shadow.data().iter().all(|&v| v == 0.0));
        assert!(f.vegetation_shadow.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn building_footprints_are_shaded() {
        let area = with_wall(&open_area(20, 20), 8, 3, 10.0);
        let f = cast_shadows(&area, 90.0, 0.0, 0.03);
        for cell in area.dem.cells() {
            let on_roof = (8..11).contains(&cell.col);
            assert_eq!(f.building_shadow[cell] == 0.0, on_roof);
        }
    }

    /// Shadow cast east of a north-south wall by a western sun.
    fn shadow_extent(height: f64, elevation: f64) -> usize {
        let area = with_wall(&open_area(160, 9), 2, 2, height);
        let f = cast_shadows(&area, elevation, 270.0, 0.03);
        (4..160)
            .take_while(|&c| f.building_shadow[Cell::new(4, c)] == 0.0)
            .count()
    }

    #[test]
    fn wall_shadow_length() {
        for height in [5.0, 10.0, 20.0] {
            for elevation in [10.0f64, 20.0, 30.0, 45.0, 60.0, 75.0] {
                let t = elevation.to_radians().tan();
                let got = shadow_extent(height, elevation) as f64;
                let eye_level = (height - PERSON_HEIGHT) / t;
                assert!((got - eye_level).abs() <= 1.5, "H={height} el={elevation} got {got}");
                if elevation >= 50.0 {
                    assert!((got - height / t).abs() <= 1.5, "H={height} el={elevation}");
                }
            }
        }
    }

    #[test]
    fn tree_shadow_is_displaced_away_from_sun() {
        let area = open_area(40, 40);
        let center = Cell::new(25, 20);
        let p = TreePlacement::new(vec![center], TreeGeometry::default());
        let area = apply_placement(&area, &p).unwrap();
        let f = cast_shadows(&area, 45.0, 180.0, 0.03);
        let shaded: Vec<Cell> = area
            .dem
            .cells()
            .filter(|&c| f.vegetation_shadow[c] < 1.0)
            .collect();
        let mean_row = shaded.iter().map(|c| c.row as f64).sum::<f64>() / shaded.len() as f64;
        let mean_col = shaded.iter().map(|c| c.col as f64).sum::<f64>() / shaded.len() as f64;
        // Continuous oracle: every ground point whose 45 deg ray toward the
        // south crosses a crown column [0.25 v, v].
        let g = TreeGeometry::default();
        let columns: Vec<(f64, f64, f64, f64)> = g
            .crown_offsets()
            .into_iter()
            .map(|(dr, dc, top)| (dr as f64, dc as f64, 0.25 * top, top))
            .collect();
        let (mut n, mut sum) = (0.0, 0.0);
        for iy in -250..80 {
            let y = iy as f64 * 0.1;
            for ix in -80..80 {
                let x = ix as f64 * 0.1;
                let hit = columns.iter().any(|&(dr, dc, lo, hi)| {
                    let (a, b) = ((dr - 0.5 - y).max(0.0), dr + 0.5 - y);
                    (x - dc).abs() <= 0.5 && b >= 0.0 && PERSON_HEIGHT + a <= hi && PERSON_HEIGHT + b >= lo
                });
                if hit {
                    n += 1.0;
                    sum += y;
                }
            }
        }
        let expected = -sum / n;
        let displacement = center.row as f64 - mean_row;
        assert!((displacement - expected).abs() < 0.5, "{displacement} vs {expected}");
        assert!((mean_col - 20.0).abs() < 1e-9);
        assert!(shaded.iter().all(|c| c.row <= center.row + 4));
    }

    #[test]
    fn influence_radius_arithmetic() {
        let g = TreeGeometry::default();
        assert!((influence_radius(&g, 45.0) - 16.5).abs() < 1e-9);
        assert_eq!(influence_radius(&g, 90.0), 4.5);
        let r = influence_region(Cell::new(50, 50), &g, 45.0, 200, 200);
        assert_eq!((r.row_min, r.row_max), (33, 67));
        let low = influence_radius(&g, 5.7);
        assert!((low - 124.5).abs() < 1.0, "{low}");
        let clipped = influence_region(Cell::new(3, 3), &g, 5.7, 40, 40);
        assert_eq!((clipped.row_min, clipped.row_max, clipped.col_max), (0, 39, 39));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn shadow_changes_stay_inside_influence_region(
            row in 0usize..48, col in 0usize..48,
            elevation in 8.0f64..89.0, azimuth in 0.0f64..360.0,
        ) {
            let base = crate::raster::synth_study_area(11, &crate::raster::SynthSpec::new(48, 48)).unwrap();
            let g = TreeGeometry::default();
            let p = TreePlacement::new(vec![Cell::new(row, col)], g);
            prop_assume!(crate::raster::validate_placement(&base, &p).is_ok());
            let with = apply_placement(&base, &p).unwrap();
            let a = cast_shadows(&base, elevation, azimuth, 0.03);
            let b = cast_shadows(&with, elevation, azimuth, 0.03);
            let region = influence_region(Cell::new(row, col), &g, elevation, 48, 48);
            for cell in base.dem.cells() {
                if !region.contains(cell) {
                    prop_assert_eq!(a.building_shadow[cell], b.building_shadow[cell]);
                    prop_assert_eq!(a.vegetation_shadow[cell], b.vegetation_shadow[cell]);
                }
            }
        }

        #[test]
        fn new_canopy_never_brightens(
            row in 0usize..40, col in 0usize..40,
            elevation in 5.0f64..90.0, azimuth in 0.0f64..360.0,
        ) {
            let base = crate::raster::synth_study_area(5, &crate::raster::SynthSpec::new(40, 40)).unwrap();
            let p = TreePlacement::new(vec![Cell::new(row, col)], TreeGeometry::default());
            prop_assume!(crate::raster::validate_placement(&base, &p).is_ok());
            let with = apply_placement(&base, &p).unwrap();
            // only additions onto previously bare cells
            let raised_existing = base.dem.cells().any(|c| base.vegetation[c] > 0.0 && with.vegetation[c] != base.vegetation[c]);
            prop_assume!(!raised_existing);
            let a = cast_shadows(&base, elevation, azimuth, 0.03);
            let b = cast_shadows(&with, elevation, azimuth, 0.03);
            for cell in base.dem.cells() {
                prop_assert!(b.sunlit(base.dem.index_of(cell)) <= a.sunlit(base.dem.index_of(cell)));
            }
        }
    }
}
