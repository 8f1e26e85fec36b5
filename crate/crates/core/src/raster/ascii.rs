//! ESRI ASCII grid reading and writing, and study-area directories.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{GeoOrigin, Grid, LandCover, Raster, StudyArea};
use crate::error::{Error, Result};
use crate::shadow::SvfMaps;

/// Required rasters of a study-area directory.
pub const AREA_FILES: [&str; 6] = [
    "dem.asc",
    "dsm_build.asc",
    "dsm_veg.asc",
    "landcover.asc",
    "wall_height.asc",
    "wall_aspect.asc",
];

const SVF_FILES: [&str; 3] = ["svf_total.asc", "svf_build.asc", "svf_veg.asc"];
const LOCATION_FILE: &str = "location.txt";

/// Used when a study-area directory carries no `location.txt`.
const DEFAULT_LOCATION: (f64, f64) = (48.0, 7.85);

#[derive(Clone, Debug, PartialEq)]
pub struct AsciiHeader {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata: Option<f64>,
}

impl AsciiHeader {
    pub fn for_grid<T>(grid: &Raster<T>, origin: GeoOrigin) -> Self {
        AsciiHeader {
            ncols: grid.width(),
            nrows: grid.height(),
            xllcorner: origin.xll,
            yllcorner: origin.yll,
            cellsize: super::CELL_SIZE,
            nodata: Some(-9999.0),
        }
    }
}

/// Reads a grid; nodata cells come back as NaN.
pub fn read_ascii_grid(path: &Path) -> Result<(AsciiHeader, Grid)> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    parse_ascii_grid(&text, &path.display().to_string())
}

fn parse_ascii_grid(text: &str, file: &str) -> Result<(AsciiHeader, Grid)> {
    let bad_header = |reason: String| Error::MalformedHeader {
        file: file.to_string(),
        reason,
    };
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut cellsize = None;
    let mut nodata = None;

    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    while let Some(line) = lines.peek() {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or("").to_ascii_lowercase();
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let value = parts
            .next()
            .ok_or_else(|| bad_header(format!("no value for `{key}`")))?;
        let num: f64 = value
            .parse()
            .map_err(|_| bad_header(format!("`{key}` has non-numeric value `{value}`")))?;
        match key.as_str() {
            "ncols" => ncols = Some(num),
            "nrows" => nrows = Some(num),
            "xllcorner" | "xllcenter" => xll = Some(num),
            "yllcorner" | "yllcenter" => yll = Some(num),
            "cellsize" => cellsize = Some(num),
            "nodata_value" => nodata = Some(num),
            other => return Err(bad_header(format!("unknown key `{other}`"))),
        }
        lines.next();
    }

    let dim = |v: Option<f64>, name: &str| -> Result<usize> {
        let v = v.ok_or_else(|| bad_header(format!("missing `{name}`")))?;
        if v < 1.0 || v.fract() != 0.0 {
            return Err(bad_header(format!("`{name}` must be a positive integer")));
        }
        Ok(v as usize)
    };
    let ncols = dim(ncols, "ncols")?;
    let nrows = dim(nrows, "nrows")?;
    let cellsize = cellsize.ok_or_else(|| bad_header("missing `cellsize`".into()))?;
    if (cellsize - super::CELL_SIZE).abs() > 1e-9 {
        return Err(bad_header(format!("cellsize {cellsize} is not 1 m")));
    }
    let header = AsciiHeader {
        ncols,
        nrows,
        xllcorner: xll.unwrap_or(0.0),
        yllcorner: yll.unwrap_or(0.0),
        cellsize,
        nodata,
    };

    let mut data = Vec::with_capacity(ncols * nrows);
    for line in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::MalformedData {
                file: file.to_string(),
                reason: format!("non-numeric value `{tok}`"),
            })?;
            data.push(if Some(v) == nodata { f64::NAN } else { v });
        }
    }
    if data.len() != ncols * nrows {
        return Err(Error::MalformedData {
            file: file.to_string(),
            reason: format!("expected {} values, found {}", ncols * nrows, data.len()),
        });
    }
    Ok((header, Raster::from_vec(ncols, nrows, data)?))
}

/// Writes a grid; NaN cells are written as the header's nodata value.
pub fn write_ascii_grid(path: &Path, grid: &Grid, header: &AsciiHeader) -> Result<()> {
    let nodata = header.nodata.unwrap_or(-9999.0);
    let mut out = String::with_capacity(grid.len() * 6 + 128);
    let _ = writeln!(out, "ncols {}", grid.width());
    let _ = writeln!(out, "nrows {}", grid.height());
    let _ = writeln!(out, "xllcorner {}", header.xllcorner);
    let _ = writeln!(out, "yllcorner {}", header.yllcorner);
    let _ = writeln!(out, "cellsize {}", header.cellsize);
    let _ = writeln!(out, "NODATA_value {nodata}");
    for row in grid.data().chunks(grid.width()) {
        let mut first = true;
        for &v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let v = if v.is_nan() { nodata } else { v };
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads the six required rasters plus optional SVF maps and location.
pub fn load_study_area(dir: &Path) -> Result<StudyArea> {
    let mut grids = Vec::with_capacity(AREA_FILES.len());
    let mut origin = None;
    for name in AREA_FILES {
        let (header, grid) = read_ascii_grid(&dir.join(name))?;
        origin.get_or_insert(GeoOrigin {
            xll: header.xllcorner,
            yll: header.yllcorner,
        });
        grids.push((name, grid));
    }
    let (w, h) = (grids[0].1.width(), grids[0].1.height());
    for (name, g) in &grids {
        if g.width() != w || g.height() != h {
            return Err(Error::DimensionMismatch {
                what: name.to_string(),
                got_w: g.width(),
                got_h: g.height(),
                want_w: w,
                want_h: h,
            });
        }
    }
    let mut it = grids.into_iter().map(|(_, g)| g);
    let dem = it.next().unwrap();
    let dsm = it.next().unwrap();
    let veg = it.next().unwrap();
    let lc = it.next().unwrap();
    let wall_h = it.next().unwrap();
    let wall_a = it.next().unwrap();

    for (name, g) in [("dem.asc", &dem), ("dsm_build.asc", &dsm)] {
        if let Some(i) = g.data().iter().position(|v| v.is_nan()) {
            let c = g.cell_of(i);
            return Err(Error::MalformedData {
                file: name.to_string(),
                reason: format!("nodata at row {}, col {}", c.row, c.col),
            });
        }
    }
    let zero_nodata = |g: Grid| g.map(|&v| if v.is_nan() { 0.0 } else { v });

    let mut covers = Vec::with_capacity(lc.len());
    for (i, &code) in lc.data().iter().enumerate() {
        let class = LandCover::from_code(code).ok_or_else(|| {
            let c = lc.cell_of(i);
            Error::UnknownLandCover {
                code,
                row: c.row,
                col: c.col,
            }
        })?;
        covers.push(class);
    }
    let land_cover = Raster::from_vec(w, h, covers)?;

    let (lat, lon) = read_location(dir)?;
    let mut area = StudyArea::new(
        dem,
        dsm,
        zero_nodata(veg),
        land_cover,
        zero_nodata(wall_h),
        zero_nodata(wall_a),
        lat,
        lon,
    )?;
    area.origin = origin.unwrap_or_default();

    if SVF_FILES.iter().all(|f| dir.join(f).exists()) {
        let mut maps = Vec::with_capacity(3);
        for f in SVF_FILES {
            let (_, g) = read_ascii_grid(&dir.join(f))?;
            maps.push(g);
        }
        let mut it = maps.into_iter();
        area.set_svf(SvfMaps {
            total: it.next().unwrap(),
            buildings: it.next().unwrap(),
            vegetation: it.next().unwrap(),
        })?;
    }
    Ok(area)
}

fn read_location(dir: &Path) -> Result<(f64, f64)> {
    let path = dir.join(LOCATION_FILE);
    if !path.exists() {
        return Ok(DEFAULT_LOCATION);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lat = None;
    let mut lon = None;
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let value: f64 = value.trim().parse().map_err(|_| Error::MalformedData {
            file: LOCATION_FILE.into(),
            reason: format!("bad number in `{line}`"),
        })?;
        match key.trim() {
            "latitude" => lat = Some(value),
            "longitude" => lon = Some(value),
            _ => {}
        }
    }
    Ok((
        lat.unwrap_or(DEFAULT_LOCATION.0),
        lon.unwrap_or(DEFAULT_LOCATION.1),
    ))
}

/// Writes every raster of `area` into `dir`, plus SVF maps when present.
pub fn write_study_area(dir: &Path, area: &StudyArea) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = AsciiHeader::for_grid(&area.dem, area.origin);
    let lc = area.land_cover.map(|c| c.code() as f64);
    let grids: [(&str, &Grid); 6] = [
        ("dem.asc", &area.dem),
        ("dsm_build.asc", &area.dsm),
        ("dsm_veg.asc", &area.vegetation),
        ("landcover.asc", &lc),
        ("wall_height.asc", &area.wall_height),
        ("wall_aspect.asc", &area.wall_aspect),
    ];
    for (name, g) in grids {
        write_ascii_grid(&dir.join(name), g, &header)?;
    }
    if let Some(svf) = area.svf() {
        for (name, g) in SVF_FILES.iter().zip([&svf.total, &svf.buildings, &svf.vegetation]) {
            write_ascii_grid(&dir.join(name), g, &header)?;
        }
    }
    let loc = format!(
        "latitude = {}\nlongitude = {}\n",
        area.latitude, area.longitude
    );
    let path = dir.join(LOCATION_FILE);
    fs::write(&path, loc).map_err(|e| Error::io(&path, e))
}
