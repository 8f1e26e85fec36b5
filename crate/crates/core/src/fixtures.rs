//! Small constructed study areas and forcing for demonstrations and tests.

use chrono::NaiveDate;

use crate::error::Result;
use crate::meteo::{select_period, synth_meteo_with, Climate, PeriodKind, TimePeriod};
use crate::raster::{
    apply_placement, derive_walls, Cell, Grid, LandCover, Raster, StudyArea, TreeGeometry, TreePlacement,
};

pub const LATITUDE: f64 = 48.0;
pub const LONGITUDE: f64 = 7.85;

/// Flat paved ground at 100 m with no buildings or vegetation.
pub fn paved(width: usize, height: usize) -> StudyArea {
    StudyArea::new(
        Grid::filled(width, height, 100.0),
        Grid::filled(width, height, 100.0),
        Grid::zeros(width, height),
        Raster::filled(width, height, LandCover::Paved),
        Grid::zeros(width, height),
        Grid::zeros(width, height),
        LATITUDE,
        LONGITUDE,
    )
    .expect("valid fixture")
}

/// Rectangular blocks `(row0, col0, row1, col1, height)`, half-open, with
/// walls derived from the new building DSM.
pub fn with_blocks(area: &StudyArea, blocks: &[(usize, usize, usize, usize, f64)]) -> Result<StudyArea> {
    let mut dsm = area.dsm.clone();
    let mut cover = area.land_cover.clone();
    let mut veg = area.vegetation.clone();
    for &(r0, c0, r1, c1, h) in blocks {
        for r in r0..r1.min(area.height()) {
            for c in c0..c1.min(area.width()) {
                let cell = Cell::new(r, c);
                dsm[cell] = area.dem[cell] + h;
                cover[cell] = LandCover::Building;
                veg[cell] = 0.0;
            }
        }
    }
    let (wall_height, wall_aspect) = derive_walls(&dsm, &cover);
    StudyArea::new(
        area.dem.clone(),
        dsm,
        veg,
        cover,
        wall_height,
        wall_aspect,
        area.latitude,
        area.longitude,
    )
}

/// Sets every cell with `row`/`col` within `margin` of the border to `cover`.
pub fn with_border(area: &StudyArea, margin: usize, cover: LandCover) -> Result<StudyArea> {
    let (w, h) = (area.width(), area.height());
    let mut lc = area.land_cover.clone();
    let mut veg = area.vegetation.clone();
    for cell in area.dem.cells() {
        if cell.row < margin || cell.col < margin || cell.row + margin >= h || cell.col + margin >= w {
            lc[cell] = cover;
            if cover == LandCover::Building {
                veg[cell] = 0.0;
            }
        }
    }
    StudyArea::new(
        area.dem.clone(),
        area.dsm.clone(),
        veg,
        lc,
        area.wall_height.clone(),
        area.wall_aspect.clone(),
        area.latitude,
        area.longitude,
    )
}

/// Geometry of the existing trees in [`courtyard_and_plaza`].
pub fn courtyard_tree() -> TreeGeometry {
    TreeGeometry::new(10.0, 5.0, 0.25).expect("valid geometry")
}

/// A walled courtyard in the west whose trees stand in the shade of its
/// southern wing, next to an open paved plaza in the east.
pub fn courtyard_and_plaza() -> StudyArea {
    let base = paved(60, 40);
    let area = with_blocks(
        &base,
        &[
            (6, 4, 9, 28, 18.0),
            (27, 4, 30, 28, 18.0),
            (9, 4, 27, 7, 18.0),
            (9, 25, 27, 28, 18.0),
        ],
    )
    .expect("valid fixture");
    let trees = TreePlacement::new(
        vec![Cell::new(23, 10), Cell::new(23, 16), Cell::new(23, 22)],
        courtyard_tree(),
    );
    apply_placement(&area, &trees).expect("feasible fixture")
}

/// Climate whose July days peak near 50 °C air temperature.
pub fn extreme_climate() -> Climate {
    Climate {
        mean_temperature: 36.0,
        seasonal_amplitude: 8.0,
        diurnal_amplitude: 6.0,
        transmittance: 0.8,
        mean_humidity: 25.0,
    }
}

/// Hottest complete day of a synthetic July.
pub fn hottest_day(seed: u64, climate: &Climate) -> TimePeriod {
    let start = NaiveDate::from_ymd_opt(2020, 7, 1)
        .expect("date")
        .and_hms_opt(0, 0, 0)
        .expect("time");
    let records = synth_meteo_with(seed, start, 24 * 31, LATITUDE, climate);
    select_period(&records, PeriodKind::HottestDay).expect("complete days")
}

/// Hottest week of a synthetic July.
pub fn hottest_week(seed: u64, climate: &Climate) -> TimePeriod {
    let start = NaiveDate::from_ymd_opt(2020, 7, 1)
        .expect("date")
        .and_hms_opt(0, 0, 0)
        .expect("time");
    let records = synth_meteo_with(seed, start, 24 * 31, LATITUDE, climate);
    select_period(&records, PeriodKind::HottestWeek).expect("complete weeks")
}
