//! Spatial data model: rasters, land cover, study areas and tree canopies.
//!
//! All grids are single-band, row-major, 1 m resolution. Row 0 is the
//! northern edge and column 0 the western edge, matching ESRI ASCII grids.

mod ascii;
mod synth;

use std::ops::{Index, IndexMut};

pub use ascii::{
    load_study_area, read_ascii_grid, write_ascii_grid, write_study_area, AsciiHeader, AREA_FILES,
};
pub use synth::{derive_walls, synth_study_area, StreetPattern, SynthSpec};

use crate::error::{Error, Result};
use crate::shadow::SvfMaps;

/// Grid resolution in meters.
pub const CELL_SIZE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    pub fn offset(self, dr: i64, dc: i64, width: usize, height: usize) -> Option<Cell> {
        let r = self.row as i64 + dr;
        let c = self.col as i64 + dc;
        if r < 0 || c < 0 || r >= height as i64 || c >= width as i64 {
            None
        } else {
            Some(Cell::new(r as usize, c as usize))
        }
    }

    pub fn distance_sq(self, other: Cell) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        dr * dr + dc * dc
    }
}

/// A dense row-major raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// A scalar raster.
pub type Grid = Raster<f64>;

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(
                "raster dimensions must be positive".into(),
            ));
        }
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "raster of {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn map<U: Clone>(&self, f: impl Fn(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T> Raster<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index_of(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    #[inline]
    pub fn cell_of(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn same_dims<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| Cell::new(r, c)))
    }
}

impl<T> Index<Cell> for Raster<T> {
    type Output = T;

    #[inline]
    fn index(&self, cell: Cell) -> &T {
        &self.data[cell.row * self.width + cell.col]
    }
}

impl<T> IndexMut<Cell> for Raster<T> {
    #[inline]
    fn index_mut(&mut self, cell: Cell) -> &mut T {
        &mut self.data[cell.row * self.width + cell.col]
    }
}

impl Grid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Raster::filled(width, height, 0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Mean over cells where `mask` is true, `None` if the mask is empty.
    pub fn masked_mean(&self, mask: &[bool]) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (v, &m) in self.data.iter().zip(mask) {
            if m {
                sum += v;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Grid {
        assert!(self.same_dims(other));
        Raster {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Land-cover classes with their ASCII grid codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LandCover {
    Paved,
    Building,
    Grass,
    BareSoil,
    Water,
}

impl LandCover {
    pub const ALL: [LandCover; 5] = [
        LandCover::Paved,
        LandCover::Building,
        LandCover::Grass,
        LandCover::BareSoil,
        LandCover::Water,
    ];

    pub fn code(self) -> u8 {
        match self {
            LandCover::Paved => 0,
            LandCover::Building => 1,
            LandCover::Grass => 2,
            LandCover::BareSoil => 3,
            LandCover::Water => 4,
        }
    }

    pub fn from_code(code: f64) -> Option<LandCover> {
        if code.fract() != 0.0 {
            return None;
        }
        match code as i64 {
            0 => Some(LandCover::Paved),
            1 => Some(LandCover::Building),
            2 => Some(LandCover::Grass),
            3 => Some(LandCover::BareSoil),
            4 => Some(LandCover::Water),
            _ => None,
        }
    }

    /// Trees may stand anywhere except on buildings and open water.
    pub fn is_plantable(self) -> bool {
        !matches!(self, LandCover::Building | LandCover::Water)
    }

    /// Cells that count towards area-averaged metrics.
    pub fn is_evaluated(self) -> bool {
        self.is_plantable()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct GeoOrigin {
    pub xll: f64,
    pub yll: f64,
}

/// The bundle of spatial inputs for one study area.
#[derive(Clone, Debug)]
pub struct StudyArea {
    /// Terrain elevation, m a.s.l.
    pub dem: Grid,
    /// Ground plus buildings, m a.s.l.
    pub dsm: Grid,
    /// Canopy top above ground, 0 where there is no vegetation.
    pub vegetation: Grid,
    pub land_cover: Raster<LandCover>,
    pub wall_height: Grid,
    /// Degrees clockwise from north; a north-facing wall is 0.
    pub wall_aspect: Grid,
    pub latitude: f64,
    pub longitude: f64,
    pub origin: GeoOrigin,
    svf: Option<SvfMaps>,
    svf_fresh: bool,
}

impl StudyArea {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dem: Grid,
        dsm: Grid,
        vegetation: Grid,
        land_cover: Raster<LandCover>,
        wall_height: Grid,
        wall_aspect: Grid,
        latitude: f64,
        longitude: f64,
    ) -> Result<Self> {
        let (w, h) = (dem.width(), dem.height());
        let check = |name: &str, gw: usize, gh: usize| -> Result<()> {
            if gw != w || gh != h {
                Err(Error::DimensionMismatch {
                    what: name.to_string(),
                    got_w: gw,
                    got_h: gh,
                    want_w: w,
                    want_h: h,
                })
            } else {
                Ok(())
            }
        };
        check("dsm", dsm.width(), dsm.height())?;
        check("vegetation", vegetation.width(), vegetation.height())?;
        check("land_cover", land_cover.width(), land_cover.height())?;
        check("wall_height", wall_height.width(), wall_height.height())?;
        check("wall_aspect", wall_aspect.width(), wall_aspect.height())?;
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(Error::InvalidArea(format!("latitude {latitude} out of range")));
        }

        let mut vegetation = vegetation;
        for i in 0..vegetation.len() {
            let v = vegetation.data()[i];
            if !v.is_finite() || v < 0.0 {
                let cell = vegetation.cell_of(i);
                return Err(Error::InvalidArea(format!(
                    "negative or non-finite vegetation height {v} at {cell:?}"
                )));
            }
            // Canopies cannot stand on roofs.
            if land_cover.data()[i] == LandCover::Building {
                vegetation.data_mut()[i] = 0.0;
            }
        }
        for (i, (&wh, &wa)) in wall_height.data().iter().zip(wall_aspect.data()).enumerate() {
            if !(wh >= 0.0) || !(0.0..360.0).contains(&wa) {
                let cell = wall_height.cell_of(i);
                return Err(Error::InvalidArea(format!(
                    "wall height {wh} / aspect {wa} out of range at {cell:?}"
                )));
            }
        }
        if dem.data().iter().chain(dsm.data()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArea("non-finite elevation".into()));
        }

        Ok(StudyArea {
            dem,
            dsm,
            vegetation,
            land_cover,
            wall_height,
            wall_aspect,
            latitude,
            longitude,
            origin: GeoOrigin::default(),
            svf: None,
            svf_fresh: false,
        })
    }

    pub fn width(&self) -> usize {
        self.dem.width()
    }

    pub fn height(&self) -> usize {
        self.dem.height()
    }

    pub fn n_cells(&self) -> usize {
        self.dem.len()
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.dem.contains(cell)
    }

    pub fn is_plantable(&self, cell: Cell) -> bool {
        self.contains(cell) && self.land_cover[cell].is_plantable()
    }

    /// Cells included in area-averaged metrics (no buildings, no water).
    pub fn valid_mask(&self) -> Vec<bool> {
        self.land_cover.data().iter().map(|lc| lc.is_evaluated()).collect()
    }

    pub fn plantable_mask(&self) -> Vec<bool> {
        self.land_cover.data().iter().map(|lc| lc.is_plantable()).collect()
    }

    pub fn svf(&self) -> Option<&SvfMaps> {
        self.svf.as_ref()
    }

    /// SVF maps that are consistent with the current vegetation.
    pub fn fresh_svf(&self) -> Result<&SvfMaps> {
        match (&self.svf, self.svf_fresh) {
            (Some(maps), true) => Ok(maps),
            _ => Err(Error::StaleSvf),
        }
    }

    pub fn is_svf_fresh(&self) -> bool {
        self.svf.is_some() && self.svf_fresh
    }

    pub fn set_svf(&mut self, maps: SvfMaps) -> Result<()> {
        if maps.total.width() != self.width() || maps.total.height() != self.height() {
            return Err(Error::DimensionMismatch {
                what: "svf".into(),
                got_w: maps.total.width(),
                got_h: maps.total.height(),
                want_w: self.width(),
                want_h: self.height(),
            });
        }
        self.svf = Some(maps);
        self.svf_fresh = true;
        Ok(())
    }

    pub fn with_svf(mut self, maps: SvfMaps) -> Result<Self> {
        self.set_svf(maps)?;
        Ok(self)
    }

    pub fn mark_svf_stale(&mut self) {
        self.svf_fresh = false;
    }

    /// Replace the vegetation DSM; dependent SVF maps become stale.
    pub fn with_vegetation(&self, vegetation: Grid) -> Result<Self> {
        let mut area = StudyArea::new(
            self.dem.clone(),
            self.dsm.clone(),
            vegetation,
            self.land_cover.clone(),
            self.wall_height.clone(),
            self.wall_aspect.clone(),
            self.latitude,
            self.longitude,
        )?;
        area.origin = self.origin;
        area.svf = self.svf.clone();
        area.svf_fresh = false;
        Ok(area)
    }
}

/// Shape shared by all trees in a placement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeGeometry {
    pub height: f64,
    pub crown_diameter: f64,
    pub trunk_height_fraction: f64,
}

impl Default for TreeGeometry {
    /// 12 m tall, 9 m crown, trunk at a quarter of the height.
    fn default() -> Self {
        TreeGeometry {
            height: 12.0,
            crown_diameter: 9.0,
            trunk_height_fraction: 0.25,
        }
    }
}

impl TreeGeometry {
    pub fn new(height: f64, crown_diameter: f64, trunk_height_fraction: f64) -> Result<Self> {
        let g = TreeGeometry {
            height,
            crown_diameter,
            trunk_height_fraction,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.crown_diameter > 0.0 && self.crown_diameter.is_finite()) {
            return Err(Error::InvalidParameter("crown diameter must be positive".into()));
        }
        if !(self.trunk_height_fraction > 0.0 && self.trunk_height_fraction < 1.0) {
            return Err(Error::InvalidParameter(
                "trunk height fraction must lie in (0, 1)".into(),
            ));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::InvalidParameter("tree height must be positive".into()));
        }
        Ok(())
    }

    pub fn trunk_height(&self) -> f64 {
        self.trunk_height_fraction * self.height
    }

    pub fn crown_radius(&self) -> f64 {
        self.crown_diameter / 2.0
    }

    /// Nominal disc area of one crown, m².
    pub fn crown_area(&self) -> f64 {
        std::f64::consts::PI * self.crown_radius() * self.crown_radius()
    }

    /// Canopy-top heights of one crown relative to its center cell.
    ///
    /// Cells whose center lies inside the crown disc are covered. The crown is
    /// a spheroid between trunk top and tree top, so the center cell carries
    /// the full tree height.
    pub fn crown_offsets(&self) -> Vec<(i64, i64, f64)> {
        let radius = self.crown_radius();
        let trunk = self.trunk_height();
        let half_depth = (self.height - trunk) / 2.0;
        let center_z = trunk + half_depth;
        let reach = radius.floor() as i64;
        let mut out = Vec::new();
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let d2 = (dr * dr + dc * dc) as f64;
                if d2 <= radius * radius + 1e-9 {
                    let frac = (1.0 - d2 / (radius * radius)).max(0.0);
                    out.push((dr, dc, center_z + half_depth * frac.sqrt()));
                }
            }
        }
        out
    }
}

/// Canopy-top heights of one rasterized tree, clipped to the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CanopyPatch {
    pub center: Cell,
    pub cells: Vec<(Cell, f64)>,
}

impl CanopyPatch {
    pub fn max_height(&self) -> f64 {
        self.cells.iter().map(|&(_, h)| h).fold(0.0, f64::max)
    }
}

pub fn rasterize_tree(
    geometry: &TreeGeometry,
    position: Cell,
    width: usize,
    height: usize,
) -> CanopyPatch {
    let cells = geometry
        .crown_offsets()
        .into_iter()
        .filter_map(|(dr, dc, h)| position.offset(dr, dc, width, height).map(|c| (c, h)))
        .collect();
    CanopyPatch {
        center: position,
        cells,
    }
}

/// Positions of `k` trees sharing one geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct TreePlacement {
    pub positions: Vec<Cell>,
    pub geometry: TreeGeometry,
}

impl TreePlacement {
    pub fn new(positions: Vec<Cell>, geometry: TreeGeometry) -> Self {
        TreePlacement {
            positions,
            geometry,
        }
    }

    pub fn empty(geometry: TreeGeometry) -> Self {
        TreePlacement::new(Vec::new(), geometry)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Sum of nominal crown areas, m².
    pub fn canopy_area(&self) -> f64 {
        self.positions.len() as f64 * self.geometry.crown_area()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    InvalidGeometry(String),
    OutOfBounds { tree: usize, cell: Cell },
    OnBuilding { tree: usize, cell: Cell },
    OnWater { tree: usize, cell: Cell },
    Overlap { first: usize, second: usize, distance: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::InvalidGeometry(msg) => write!(f, "invalid geometry: {msg}"),
            Violation::OutOfBounds { tree, cell } => {
                write!(f, "tree {tree} at ({}, {}) is out of bounds", cell.row, cell.col)
            }
            Violation::OnBuilding { tree, cell } => {
                write!(f, "tree {tree} at ({}, {}) stands on a building", cell.row, cell.col)
            }
            Violation::OnWater { tree, cell } => {
                write!(f, "tree {tree} at ({}, {}) stands on water", cell.row, cell.col)
            }
            Violation::Overlap {
                first,
                second,
                distance,
            } => write!(
                f,
                "trees {first} and {second} are {distance:.3} m apart and their crowns overlap"
            ),
        }
    }
}

/// True when two crowns of the given diameter centered at `a` and `b` do not overlap.
#[inline]
pub fn crowns_disjoint(a: Cell, b: Cell, crown_diameter: f64) -> bool {
    a.distance_sq(b) >= crown_diameter * crown_diameter - 1e-9
}

/// Checks land cover under every crown center and pairwise crown overlap.
pub fn validate_placement(
    area: &StudyArea,
    placement: &TreePlacement,
) -> std::result::Result<(), Violation> {
    if let Err(e) = placement.geometry.validate() {
        return Err(Violation::InvalidGeometry(e.to_string()));
    }
    for (i, &cell) in placement.positions.iter().enumerate() {
        if !area.contains(cell) {
            return Err(Violation::OutOfBounds { tree: i, cell });
        }
        match area.land_cover[cell] {
            LandCover::Building => return Err(Violation::OnBuilding { tree: i, cell }),
            LandCover::Water => return Err(Violation::OnWater { tree: i, cell }),
            _ => {}
        }
    }
    let d = placement.geometry.crown_diameter;
    for (i, &a) in placement.positions.iter().enumerate() {
        for (j, &b) in placement.positions.iter().enumerate().skip(i + 1) {
            if !crowns_disjoint(a, b, d) {
                return Err(Violation::Overlap {
                    first: i,
                    second: j,
                    distance: a.distance_sq(b).sqrt(),
                });
            }
        }
    }
    Ok(())
}

/// Returns a copy of `area` whose vegetation DSM carries the placed crowns.
///
/// Crowns merge with existing vegetation by cellwise maximum and are never
/// drawn onto building cells. SVF maps of the result are stale.
pub fn apply_placement(area: &StudyArea, placement: &TreePlacement) -> Result<StudyArea> {
    validate_placement(area, placement).map_err(|v| Error::Infeasible(v.to_string()))?;
    let mut vegetation = area.vegetation.clone();
    let offsets = placement.geometry.crown_offsets();
    for &p in &placement.positions {
        for &(dr, dc, h) in &offsets {
            if let Some(c) = p.offset(dr, dc, area.width(), area.height()) {
                if area.land_cover[c] != LandCover::Building && vegetation[c] < h {
                    vegetation[c] = h;
                }
            }
        }
    }
    area.with_vegetation(vegetation)
}

/// Clears the crowns of `placement` from the vegetation DSM.
///
/// Inverse of [`apply_placement`] on a vegetation-free background.
pub fn remove_placement(area: &StudyArea, placement: &TreePlacement) -> Result<StudyArea> {
    let mut vegetation = area.vegetation.clone();
    let offsets = placement.geometry.crown_offsets();
    for &p in &placement.positions {
        for &(dr, dc, _) in &offsets {
            if let Some(c) = p.offset(dr, dc, area.width(), area.height()) {
                vegetation[c] = 0.0;
            }
        }
    }
    area.with_vegetation(vegetation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn flat_area(w: usize, h: usize) -> StudyArea {
        StudyArea::new(
            Grid::zeros(w, h),
            Grid::zeros(w, h),
            Grid::zeros(w, h),
            Raster::filled(w, h, LandCover::Paved),
            Grid::zeros(w, h),
            Grid::zeros(w, h),
            48.0,
            7.85,
        )
        .unwrap()
    }

    #[test]
    fn default_tree_center_is_full_height() {
        let g = TreeGeometry::default();
        let patch = rasterize_tree(&g, Cell::new(20, 20), 41, 41);
        let center = patch.cells.iter().find(|(c, _)| *c == Cell::new(20, 20)).unwrap();
        assert_eq!(center.1, 12.0);
        assert_eq!(patch.max_height(), 12.0);
        // every covered cell lies within 4.5 m of the center
        for (c, h) in &patch.cells {
            assert!(c.distance_sq(Cell::new(20, 20)) <= 20.25);
            assert!(*h >= 3.0 + 4.5 - 1e-12 && *h <= 12.0);
        }
        assert_eq!(patch.cells.len(), 69);
    }

    #[test]
    fn unit_crown_is_one_cell() {
        let g = TreeGeometry::new(8.0, 1.0, 0.25).unwrap();
        let patch = rasterize_tree(&g, Cell::new(3, 3), 8, 8);
        assert_eq!(patch.cells, vec![(Cell::new(3, 3), 8.0)]);
    }

    #[test]
    fn corner_tree_is_clipped_to_quarter_disc() {
        let g = TreeGeometry::default();
        let full = rasterize_tree(&g, Cell::new(10, 10), 21, 21).cells.len();
        let corner = rasterize_tree(&g, Cell::new(0, 0), 21, 21);
        assert!(corner.cells.iter().all(|(c, _)| c.row <= 4 && c.col <= 4));
        // quarter disc plus the two shared half-axes
        assert_eq!(corner.cells.len(), (full - 1) / 4 + 4 + 1);
    }

    #[test]
    fn geometry_rejects_bad_trunk_fraction() {
        assert!(TreeGeometry::new(12.0, 9.0, 1.0).is_err());
        assert!(TreeGeometry::new(12.0, 0.0, 0.25).is_err());
    }

    #[test]
    fn apply_on_empty_area_marks_exactly_the_disc() {
        let area = flat_area(30, 30);
        let g = TreeGeometry::default();
        let p = TreePlacement::new(vec![Cell::new(15, 15)], g);
        let with = apply_placement(&area, &p).unwrap();
        assert!(!with.is_svf_fresh());
        let patch = rasterize_tree(&g, Cell::new(15, 15), 30, 30);
        let nonzero: Vec<Cell> = with.vegetation.cells().filter(|&c| with.vegetation[c] > 0.0).collect();
        let mut disc: Vec<Cell> = patch.cells.iter().map(|(c, _)| *c).collect();
        disc.sort();
        assert_eq!(nonzero, disc);

        let removed = remove_placement(&with, &p).unwrap();
        assert_eq!(removed.vegetation, area.vegetation);
    }

    #[test]
    fn apply_keeps_taller_existing_vegetation() {
        let mut area = flat_area(30, 30);
        area.vegetation[Cell::new(15, 16)] = 20.0;
        let p = TreePlacement::new(vec![Cell::new(15, 15)], TreeGeometry::default());
        let with = apply_placement(&area, &p).unwrap();
        assert_eq!(with.vegetation[Cell::new(15, 16)], 20.0);
        assert_eq!(with.vegetation[Cell::new(15, 15)], 12.0);
    }

    #[test]
    fn apply_is_idempotent() {
        let area = flat_area(30, 30);
        let p = TreePlacement::new(vec![Cell::new(5, 5), Cell::new(20, 20)], TreeGeometry::default());
        let once = apply_placement(&area, &p).unwrap();
        let twice = apply_placement(&once, &p).unwrap();
        assert_eq!(once.vegetation, twice.vegetation);
    }

    #[test]
    fn overlap_boundary_is_inclusive() {
        let area = flat_area(30, 30);
        let g = TreeGeometry::default();
        let ok = TreePlacement::new(vec![Cell::new(10, 5), Cell::new(10, 14)], g);
        assert!(validate_placement(&area, &ok).is_ok());
        let bad = TreePlacement::new(vec![Cell::new(10, 5), Cell::new(10, 13)], g);
        assert!(matches!(
            validate_placement(&area, &bad),
            Err(Violation::Overlap { .. })
        ));
    }

    #[test]
    fn trees_cannot_stand_on_water_or_buildings() {
        let mut area = flat_area(20, 20);
        area.land_cover[Cell::new(3, 3)] = LandCover::Water;
        area.land_cover[Cell::new(12, 12)] = LandCover::Building;
        let g = TreeGeometry::default();
        let water = TreePlacement::new(vec![Cell::new(3, 3)], g);
        assert!(matches!(
            validate_placement(&area, &water),
            Err(Violation::OnWater { .. })
        ));
        let roof = TreePlacement::new(vec![Cell::new(12, 12)], g);
        assert!(matches!(
            validate_placement(&area, &roof),
            Err(Violation::OnBuilding { .. })
        ));
        assert!(apply_placement(&area, &roof).is_err());
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let err = StudyArea::new(
            Grid::zeros(10, 10),
            Grid::zeros(10, 10),
            Grid::zeros(11, 10),
            Raster::filled(10, 10, LandCover::Paved),
            Grid::zeros(10, 10),
            Grid::zeros(10, 10),
            48.0,
            7.8,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn land_cover_codes_round_trip() {
        for lc in LandCover::ALL {
            assert_eq!(LandCover::from_code(lc.code() as f64), Some(lc));
        }
        assert_eq!(LandCover::from_code(7.0), None);
        assert_eq!(LandCover::from_code(1.5), None);
    }

    proptest! {
        #[test]
        fn footprint_area_tracks_disc_area(d in 1u32..=31) {
            let g = TreeGeometry::new(d as f64 + 2.0, d as f64, 0.25).unwrap();
            let n = g.crown_offsets().len() as f64;
            let r = d as f64 / 2.0;
            let disc = std::f64::consts::PI * r * r;
            let perimeter = 2.0 * std::f64::consts::PI * r;
            prop_assert!((n - disc).abs() <= perimeter.max(1.0));
        }

        #[test]
        fn verdict_is_order_independent(
            pts in proptest::collection::vec((0usize..25, 0usize..25), 1..6),
            seed in any::<u64>(),
        ) {
            let mut area = flat_area(25, 25);
            area.land_cover[Cell::new(12, 12)] = LandCover::Water;
            let g = TreeGeometry::default();
            let cells: Vec<Cell> = pts.iter().map(|&(r, c)| Cell::new(r, c)).collect();
            let mut shuffled = cells.clone();
            // deterministic permutation from the seed
            let n = shuffled.len();
            for i in (1..n).rev() {
                let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let a = validate_placement(&area, &TreePlacement::new(cells, g)).is_ok();
            let b = validate_placement(&area, &TreePlacement::new(shuffled, g)).is_ok();
            prop_assert_eq!(a, b);
        }
    }
}
