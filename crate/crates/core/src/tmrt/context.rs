//! Precomputed state of the fast evaluator.
//!
//! Daytime records are grouped into sun-position bins. Each bin keeps one
//! static shadow state per cell, traced at the bin's irradiance-weighted mean
//! sun position, plus lookup tables holding the bin's summed Tmrt contribution
//! as a function of sky view factor for each canopy-hit class. A tree then
//! changes a cell's aggregated Tmrt only through the classes it shifts and
//! the sky view it removes, both taken from translation-invariant footprints
//! traced once around a lone tree.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use super::{Forcing, RadiationParams};
use crate::error::{Error, Result};
use crate::meteo::TimePeriod;
use crate::raster::{crowns_disjoint, Cell, Grid, StudyArea, TreeGeometry, TreePlacement};
use crate::shadow::{
    sun_states, svf_influence_radius, svf_states, Ray, ShadowConfig, SkyDirections, Surface,
    SvfMaps, BLOCKED, PERSON_HEIGHT,
};

/// Hit classes 0 to 4 and "5 or more" canopy cells, then blocked.
pub(crate) const N_CLASSES: usize = 7;
pub(crate) const CLASS_BLOCKED: u8 = 6;
pub(crate) const MAX_HIT_CLASS: u8 = 5;

/// Fixed-point scale for sky-view-factor decrements.
pub(crate) const SVF_SCALE: f64 = (1u64 << 30) as f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinSpec {
    pub n_azimuth: usize,
    pub n_elevation: usize,
}

impl Default for BinSpec {
    fn default() -> Self {
        BinSpec {
            n_azimuth: 36,
            n_elevation: 9,
        }
    }
}

impl FromStr for BinSpec {
    type Err = Error;

    /// Parses `AxE`, e.g. `36x9`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("bin spec `{s}` is not of the form AxE"));
        let (a, e) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let n_azimuth: usize = a.trim().parse().map_err(|_| bad())?;
        let n_elevation: usize = e.trim().parse().map_err(|_| bad())?;
        if n_azimuth == 0 || n_elevation == 0 {
            return Err(bad());
        }
        Ok(BinSpec {
            n_azimuth,
            n_elevation,
        })
    }
}

/// How per-record Tmrt is aggregated over the period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Mean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextOptions {
    pub bins: BinSpec,
    pub shadow: ShadowConfig,
    /// Geometry of the trees to be placed.
    pub geometry: TreeGeometry,
    pub aggregation: Aggregation,
    /// Resolution of the sky-view-factor axis of the lookup tables.
    pub svf_points: usize,
    /// Upper bound on cached per-position sky-view footprints, in entries.
    pub stamp_cache_entries: usize,
}

impl Default for ContextOptions {
    fn default() -> Self {
        ContextOptions {
            bins: BinSpec::default(),
            shadow: ShadowConfig::default(),
            geometry: TreeGeometry::default(),
            aggregation: Aggregation::Mean,
            svf_points: 65,
            stamp_cache_entries: 8_000_000,
        }
    }
}

/// One occupied sun-position bin.
#[derive(Clone, Debug, PartialEq)]
pub struct SunBin {
    pub azimuth_index: usize,
    pub elevation_index: usize,
    pub count: usize,
    /// Summed direct horizontal irradiance of member records, W m⁻².
    pub direct_sum: f64,
    /// Representative sun position, degrees.
    pub elevation: f64,
    pub azimuth: f64,
}

type SvfStamp = Arc<Vec<(u32, i32)>>;

pub struct EvalContext {
    pub(crate) area: StudyArea,
    pub(crate) params: RadiationParams,
    pub(crate) options: ContextOptions,
    pub(crate) bins: Vec<SunBin>,
    pub(crate) night_count: usize,
    pub(crate) n_records: usize,
    pub(crate) width: usize,
    pub(crate) height: usize,
    /// `cell * n_bins + bin` → static hit class.
    pub(crate) static_class: Vec<u8>,
    /// `cell * n_dirs + dir` → static sky-ray state.
    pub(crate) svf_state: Vec<u8>,
    pub(crate) dirs: SkyDirections,
    pub(crate) svf_total: Vec<f64>,
    /// `(bin * N_CLASSES + class) * svf_points + g`.
    pub(crate) bin_tables: Vec<f64>,
    /// Per valid cell: night table plus every bin's table at its static class.
    pub(crate) cell_tables: Vec<f64>,
    pub(crate) valid: Vec<bool>,
    pub(crate) plantable: Vec<bool>,
    pub(crate) valid_index: Vec<u32>,
    pub(crate) n_valid: usize,
    pub(crate) base: Vec<f64>,
    pub(crate) base_total: f64,
    pub(crate) shade_templates: Vec<Vec<(i32, i32, u16)>>,
    pub(crate) svf_offsets: Vec<(i32, i32, u32, u32)>,
    pub(crate) svf_offset_dirs: Vec<(u16, u8)>,
    svf_stamps: Vec<OnceLock<SvfStamp>>,
    stamp_budget: AtomicUsize,
}

impl std::fmt::Debug for EvalContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EvalContext")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("bins", &self.bins.len())
            .field("records", &self.n_records)
            .field("valid_cells", &self.n_valid)
            .finish()
    }
}

#[inline]
/// Catmull-Rom interpolation on evenly spaced nodes over [0, 1]; the end
/// intervals use a quadratically extrapolated ghost node.
pub(crate) fn interp(t: &[f64], svf: f64) -> f64 {
    let last = t.len() - 1;
    let x = svf.clamp(0.0, 1.0) * last as f64;
    let i = (x.floor() as usize).min(last - 1);
    let f = x - i as f64;
    let p1 = t[i];
    let p2 = t[i + 1];
    let p0 = if i > 0 { t[i - 1] } else { 3.0 * t[0] - 3.0 * t[1] + t[2] };
    let p3 = if i + 2 <= last { t[i + 2] } else { 3.0 * t[last] - 3.0 * t[last - 1] + t[last - 2] };
    let a = -p0 + 3.0 * p1 - 3.0 * p2 + p3;
    let b = 2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3;
    let c = p2 - p0;
    p1 + 0.5 * f * (c + f * (b + f * a))
}

#[derive(Default)]
struct BinAcc {
    records: Vec<usize>,
    direct_sum: f64,
    weighted_el: f64,
    weighted_az: f64,
    plain_el: f64,
    plain_az: f64,
}

/// Builds the fast evaluator for `area` over `period`.
pub fn build_context(
    area: &StudyArea,
    period: &TimePeriod,
    params: &RadiationParams,
    options: &ContextOptions,
) -> Result<EvalContext> {
    params.validate()?;
    options.geometry.validate()?;
    if period.is_empty() {
        return Err(Error::EmptySelection("empty period".into()));
    }
    if options.svf_points < 3 {
        return Err(Error::InvalidParameter("need at least three svf table points".into()));
    }
    let spec = options.bins;
    let (w, h) = (area.width(), area.height());
    let n_cells = w * h;
    let records = period.records();
    let n_records = records.len();
    let forcings: Vec<Forcing> = records.iter().map(|r| Forcing::from_record(r, params)).collect();

    let az_width = 360.0 / spec.n_azimuth as f64;
    let el_width = 90.0 / spec.n_elevation as f64;
    let mut accs: BTreeMap<(usize, usize), BinAcc> = BTreeMap::new();
    let mut night = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if !r.is_day() {
            night.push(i);
            continue;
        }
        let ai = ((r.sun_azimuth / az_width) as usize).min(spec.n_azimuth - 1);
        let ei = ((r.sun_elevation / el_width) as usize).min(spec.n_elevation - 1);
        let acc = accs.entry((ei, ai)).or_default();
        let bh = forcings[i].direct_horizontal;
        acc.records.push(i);
        acc.direct_sum += bh;
        acc.weighted_el += bh * r.sun_elevation;
        acc.weighted_az += bh * r.sun_azimuth;
        acc.plain_el += r.sun_elevation;
        acc.plain_az += r.sun_azimuth;
    }
    let bins: Vec<SunBin> = accs
        .iter()
        .map(|(&(ei, ai), a)| {
            let n = a.records.len() as f64;
            let (elevation, azimuth) = if a.direct_sum > 0.0 {
                (a.weighted_el / a.direct_sum, a.weighted_az / a.direct_sum)
            } else {
                (a.plain_el / n, a.plain_az / n)
            };
            SunBin {
                azimuth_index: ai,
                elevation_index: ei,
                count: a.records.len(),
                direct_sum: a.direct_sum,
                elevation,
                azimuth,
            }
        })
        .collect();
    let nb = bins.len();
    let members: Vec<&Vec<usize>> = accs.values().map(|a| &a.records).collect();

    // Lookup tables over svf for every bin and hit class.
    let g_pts = options.svf_points;
    let svf_at = |g: usize| g as f64 / (g_pts - 1) as f64;
    let tau = params.transmissivity;
    let inv_n = 1.0 / n_records as f64;
    let bin_tables: Vec<f64> = (0..nb)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut out = vec![0.0; N_CLASSES * g_pts];
            for class in 0..N_CLASSES {
                let sunlit = if class as u8 == CLASS_BLOCKED { 0.0 } else { tau.powi(class as i32) };
                for g in 0..g_pts {
                    let svf = svf_at(g);
                    let sum: f64 = members[b]
                        .iter()
                        .map(|&r| forcings[r].tmrt(svf, sunlit, params))
                        .sum();
                    out[class * g_pts + g] = sum * inv_n;
                }
            }
            out
        })
        .collect();
    let night_table: Vec<f64> = (0..g_pts)
        .map(|g| {
            let svf = svf_at(g);
            night.iter().map(|&r| forcings[r].tmrt(svf, 0.0, params)).sum::<f64>() * inv_n
        })
        .collect();

    // Static shading and sky view of the unmodified area.
    let surface = Surface::from_area(area, options.shadow.trunk_fraction);
    let per_bin: Vec<Vec<u8>> = bins
        .iter()
        .map(|b| sun_states(&surface, b.elevation, b.azimuth))
        .collect();
    let mut static_class = vec![0u8; n_cells * nb];
    for (b, states) in per_bin.iter().enumerate() {
        for (c, &s) in states.iter().enumerate() {
            static_class[c * nb + b] = if s == BLOCKED { CLASS_BLOCKED } else { s.min(MAX_HIT_CLASS) };
        }
    }
    drop(per_bin);
    let dirs = SkyDirections::from_config(&options.shadow);
    let svf_state = svf_states(&surface, &dirs, options.shadow.svf_vegetation_reach);
    let maps = SvfMaps::from_states(&svf_state, &dirs, tau, w, h);
    let svf_total = maps.total.data().to_vec();

    let valid = area.valid_mask();
    let plantable = area.plantable_mask();
    let mut valid_index = vec![u32::MAX; n_cells];
    let mut valid_cells = Vec::new();
    for (i, &v) in valid.iter().enumerate() {
        if v {
            valid_index[i] = valid_cells.len() as u32;
            valid_cells.push(i);
        }
    }
    let n_valid = valid_cells.len();

    let mut cell_tables = vec![0.0; n_valid * g_pts];
    cell_tables
        .par_chunks_mut(g_pts)
        .zip(valid_cells.par_iter())
        .for_each(|(table, &c)| {
            table.copy_from_slice(&night_table);
            for b in 0..nb {
                let class = static_class[c * nb + b] as usize;
                let src = &bin_tables[(b * N_CLASSES + class) * g_pts..][..g_pts];
                for (t, s) in table.iter_mut().zip(src) {
                    *t += s;
                }
            }
        });

    let base: Vec<f64> = (0..n_cells)
        .map(|c| {
            if valid[c] {
                let vi = valid_index[c] as usize;
                interp(&cell_tables[vi * g_pts..][..g_pts], svf_total[c])
            } else {
                let mut v = interp(&night_table, svf_total[c]);
                for b in 0..nb {
                    let class = static_class[c * nb + b] as usize;
                    v += interp(&bin_tables[(b * N_CLASSES + class) * g_pts..][..g_pts], svf_total[c]);
                }
                v
            }
        })
        .collect();
    let base_total: f64 = valid_cells.iter().map(|&c| base[c]).sum();

    let shade_templates = bins
        .iter()
        .map(|b| shade_template(&options.geometry, &options.shadow, b, w, h))
        .collect();
    let (svf_offsets, svf_offset_dirs) = svf_template(&options.geometry, &options.shadow, &dirs);

    let mut area = area.clone();
    area.set_svf(maps)?;

    Ok(EvalContext {
        area,
        params: params.clone(),
        options: options.clone(),
        bins,
        night_count: night.len(),
        n_records,
        width: w,
        height: h,
        static_class,
        svf_state,
        dirs,
        svf_total,
        bin_tables,
        cell_tables,
        valid,
        plantable,
        valid_index,
        n_valid,
        base,
        base_total,
        shade_templates,
        svf_offsets,
        svf_offset_dirs,
        svf_stamps: (0..n_cells).map(|_| OnceLock::new()).collect(),
        stamp_budget: AtomicUsize::new(options.stamp_cache_entries),
    })
}

/// Cells whose sun ray passes through a lone tree's crown, with hit counts.
fn shade_template(
    geometry: &TreeGeometry,
    shadow: &ShadowConfig,
    bin: &SunBin,
    width: usize,
    height: usize,
) -> Vec<(i32, i32, u16)> {
    let t = bin.elevation.to_radians().tan();
    let reach = geometry.crown_radius() + (geometry.height - PERSON_HEIGHT).max(0.0) / t + 2.0;
    let cap = (width + height) as f64 + geometry.crown_radius() + 2.0;
    let r = reach.min(cap).ceil() as usize;
    let side = 2 * r + 1;
    let surface = Surface::single_tree(geometry, shadow.trunk_fraction, side, side, Cell::new(r, r));
    let ray = Ray::toward(bin.azimuth, bin.elevation);
    let band = geometry.crown_radius() + 1.5;
    let ri = r as i32;
    let rows: Vec<Vec<(i32, i32, u16)>> = (0..side)
        .into_par_iter()
        .map(|row| {
            let mut out = Vec::new();
            for col in 0..side {
                let (dr, dc) = (row as i32 - ri, col as i32 - ri);
                // Only cells in the corridor behind the crown, seen from the sun.
                let along = -(dr as f64 * ray.d_row + dc as f64 * ray.d_col);
                let across = dr as f64 * ray.d_col - dc as f64 * ray.d_row;
                if across.abs() > band || along < -band {
                    continue;
                }
                let tr = surface.trace(Cell::new(row, col), &ray, f64::INFINITY);
                if !tr.blocked && tr.hits > 0 {
                    out.push((dr, dc, tr.hits.min(u16::MAX as u32) as u16));
                }
            }
            out
        })
        .collect();
    rows.into_iter().flatten().collect()
}

/// Sky directions a lone tree obstructs from each nearby offset.
#[allow(clippy::type_complexity)]
fn svf_template(
    geometry: &TreeGeometry,
    shadow: &ShadowConfig,
    dirs: &SkyDirections,
) -> (Vec<(i32, i32, u32, u32)>, Vec<(u16, u8)>) {
    let r = svf_influence_radius(geometry, shadow);
    let side = 2 * r + 1;
    let surface = Surface::single_tree(geometry, shadow.trunk_fraction, side, side, Cell::new(r, r));
    let states = svf_states(&surface, dirs, shadow.svf_vegetation_reach);
    let nd = dirs.len();
    let mut offsets = Vec::new();
    let mut entries = Vec::new();
    for (i, cell_states) in states.chunks(nd).enumerate() {
        let start = entries.len() as u32;
        for (d, &s) in cell_states.iter().enumerate() {
            if s != BLOCKED && s > 0 {
                entries.push((d as u16, s));
            }
        }
        if entries.len() as u32 > start {
            offsets.push((
                (i / side) as i32 - r as i32,
                (i % side) as i32 - r as i32,
                start,
                entries.len() as u32,
            ));
        }
    }
    (offsets, entries)
}

impl EvalContext {
    pub fn area(&self) -> &StudyArea {
        &self.area
    }

    pub fn params(&self) -> &RadiationParams {
        &self.params
    }

    pub fn options(&self) -> &ContextOptions {
        &self.options
    }

    pub fn geometry(&self) -> &TreeGeometry {
        &self.options.geometry
    }

    pub fn bins(&self) -> &[SunBin] {
        &self.bins
    }

    pub fn night_records(&self) -> usize {
        self.night_count
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_valid(&self) -> usize {
        self.n_valid
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_plantable(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width && self.plantable[cell.row * self.width + cell.col]
    }

    /// Mean aggregated Tmrt over valid cells with no added trees.
    pub fn baseline(&self) -> f64 {
        self.base_total / self.n_valid.max(1) as f64
    }

    /// Aggregated Tmrt of the unmodified area, per cell.
    pub fn baseline_grid(&self) -> Grid {
        Grid::from_vec(self.width, self.height, self.base.clone()).expect("dims")
    }

    pub fn svf(&self) -> Result<&SvfMaps> {
        self.area.fresh_svf()
    }

    /// Feasibility of a whole placement for this context's tree geometry.
    pub fn check_placement(&self, placement: &TreePlacement) -> Result<()> {
        if placement.geometry != self.options.geometry {
            return Err(Error::InvalidParameter(
                "placement geometry differs from the context's tree geometry".into(),
            ));
        }
        crate::raster::validate_placement(&self.area, placement)
            .map_err(|v| Error::Infeasible(v.to_string()))
    }

    /// Whether `cell` can hold a tree next to `others` (skipping index `skip`).
    pub fn compatible(&self, cell: Cell, others: &[Cell], skip: Option<usize>) -> bool {
        let d = self.options.geometry.crown_diameter;
        self.is_plantable(cell)
            && others
                .iter()
                .enumerate()
                .all(|(j, &o)| Some(j) == skip || crowns_disjoint(cell, o, d))
    }

    #[inline]
    pub(crate) fn table(&self, bin: usize, class: u8) -> &[f64] {
        let g = self.options.svf_points;
        &self.bin_tables[(bin * N_CLASSES + class as usize) * g..][..g]
    }

    #[inline]
    pub(crate) fn cell_table(&self, cell: usize) -> &[f64] {
        let g = self.options.svf_points;
        &self.cell_tables[self.valid_index[cell] as usize * g..][..g]
    }

    /// Quantized sky-view decrements a tree at `p` causes on valid cells.
    pub(crate) fn compute_svf_stamp(&self, p: Cell) -> Vec<(u32, i32)> {
        let nd = self.dirs.len();
        let tau = self.params.transmissivity;
        let mut out = Vec::new();
        for &(dr, dc, start, end) in &self.svf_offsets {
            let Some(c) = p.offset(dr as i64, dc as i64, self.width, self.height) else {
                continue;
            };
            let ci = c.row * self.width + c.col;
            if !self.valid[ci] {
                continue;
            }
            let states = &self.svf_state[ci * nd..][..nd];
            let mut d_svf = 0.0;
            for &(d, hits) in &self.svf_offset_dirs[start as usize..end as usize] {
                let s = states[d as usize];
                if s != BLOCKED {
                    d_svf += self.dirs.weights[d as usize]
                        * tau.powi(s as i32)
                        * (1.0 - tau.powi(hits as i32));
                }
            }
            let q = (d_svf * SVF_SCALE).round() as i32;
            if q != 0 {
                out.push((ci as u32, q));
            }
        }
        out
    }

    pub(crate) fn svf_stamp(&self, p: Cell) -> SvfStamp {
        let slot = &self.svf_stamps[p.row * self.width + p.col];
        if let Some(s) = slot.get() {
            return s.clone();
        }
        let stamp = Arc::new(self.compute_svf_stamp(p));
        let n = stamp.len();
        let reserved = self
            .stamp_budget
            .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |b| b.checked_sub(n))
            .is_ok();
        if reserved && slot.set(stamp.clone()).is_err() {
            self.stamp_budget.fetch_add(n, Ordering::Relaxed);
        }
        stamp
    }
}
