//! Mean radiant temperature: the six-direction point model, the per-record
//! reference evaluator and the sun-binned fast evaluator.

mod context;
mod evaluator;

use crate::error::{Error, Result};
use crate::meteo::{MeteoRecord, TimePeriod};
use crate::raster::{apply_placement, Grid, StudyArea, TreePlacement};
use crate::shadow::{cast_shadows_with, compute_svf_with, ShadowConfig, ShadowField, Surface, SvfMaps};

pub use context::{build_context, Aggregation, BinSpec, ContextOptions, EvalContext, SunBin};
pub use evaluator::{Evaluator, MoveSession};

pub const STEFAN_BOLTZMANN: f64 = 5.670e-8;
pub const KELVIN: f64 = 273.15;

/// Directional weights for up/down, left/right and front/back.
const W_VERTICAL: f64 = 0.08;
const W_SIDE: f64 = 0.23;
const W_FRONT: f64 = 0.35;
const W_SUM: f64 = 2.0 * (W_VERTICAL + W_SIDE + W_FRONT);

#[derive(Clone, Debug, PartialEq)]
pub struct RadiationParams {
    pub albedo_ground: f64,
    pub albedo_walls: f64,
    pub emissivity_ground: f64,
    /// Carried for completeness; the simplified closure treats all emitting
    /// surfaces with the ground emissivity.
    pub emissivity_walls: f64,
    pub transmissivity: f64,
    pub absorption_shortwave: f64,
    pub emissivity_person: f64,
    pub diffuse_fraction: f64,
}

impl Default for RadiationParams {
    fn default() -> Self {
        RadiationParams {
            albedo_ground: 0.15,
            albedo_walls: 0.20,
            emissivity_ground: 0.95,
            emissivity_walls: 0.90,
            transmissivity: 0.03,
            absorption_shortwave: 0.70,
            emissivity_person: 0.97,
            diffuse_fraction: 0.30,
        }
    }
}

impl RadiationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fields() {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside (0, 1]")));
            }
        }
        Ok(())
    }

    pub fn fields(&self) -> [(&'static str, f64); 8] {
        [
            ("albedo_ground", self.albedo_ground),
            ("albedo_walls", self.albedo_walls),
            ("emissivity_ground", self.emissivity_ground),
            ("emissivity_walls", self.emissivity_walls),
            ("transmissivity", self.transmissivity),
            ("absorption_shortwave", self.absorption_shortwave),
            ("emissivity_person", self.emissivity_person),
            ("diffuse_fraction", self.diffuse_fraction),
        ]
    }

    /// Sets a field by name.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "albedo_ground" => &mut self.albedo_ground,
            "albedo_walls" => &mut self.albedo_walls,
            "emissivity_ground" => &mut self.emissivity_ground,
            "emissivity_walls" => &mut self.emissivity_walls,
            "transmissivity" => &mut self.transmissivity,
            "absorption_shortwave" => &mut self.absorption_shortwave,
            "emissivity_person" => &mut self.emissivity_person,
            "diffuse_fraction" => &mut self.diffuse_fraction,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown radiation parameter `{other}`"
                )))
            }
        };
        *slot = value;
        self.validate()
    }
}

/// Shortwave (K) and longwave (L) fluxes, W m⁻², received from six directions.
/// Lateral values stand for each of the four horizontal directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionalFluxes {
    pub k_up: f64,
    pub k_down: f64,
    pub k_lateral: f64,
    pub l_up: f64,
    pub l_down: f64,
    pub l_lateral: f64,
}

/// Cell-independent radiation quantities of one record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Forcing {
    pub diffuse: f64,
    pub direct_horizontal: f64,
    pub beam_normal: f64,
    pub cos_elevation: f64,
    pub air_kelvin: f64,
    pub sky_longwave: f64,
}

/// Saturation vapour pressure over water, hPa (Magnus).
pub fn saturation_vapour_pressure(temp_c: f64) -> f64 {
    6.112 * (17.62 * temp_c / (243.12 + temp_c)).exp()
}

/// Brutsaert clear-sky emissivity from vapour pressure (hPa) and air
/// temperature (K), capped at one.
pub fn sky_emissivity(vapour_hpa: f64, air_kelvin: f64) -> f64 {
    (1.24 * (vapour_hpa / air_kelvin).powf(1.0 / 7.0)).min(1.0)
}

impl Forcing {
    pub fn from_record(record: &MeteoRecord, params: &RadiationParams) -> Self {
        let ig = if record.is_day() { record.shortwave_global } else { 0.0 };
        let diffuse = params.diffuse_fraction * ig;
        let direct_horizontal = ig - diffuse;
        let sin_el = record.sun_elevation.to_radians().sin();
        let beam_normal = if record.is_day() {
            direct_horizontal / sin_el.max(0.035)
        } else {
            0.0
        };
        let air_kelvin = record.air_temperature + KELVIN;
        let vapour = saturation_vapour_pressure(record.air_temperature)
            * record.relative_humidity
            / 100.0;
        let sky_longwave = sky_emissivity(vapour, air_kelvin) * STEFAN_BOLTZMANN * air_kelvin.powi(4);
        Forcing {
            diffuse,
            direct_horizontal,
            beam_normal,
            cos_elevation: record.sun_elevation.to_radians().cos().max(0.0),
            air_kelvin,
            sky_longwave,
        }
    }

    /// Fluxes at a point with total sky view factor `svf` and direct-beam
    /// factor `sunlit` (building shadow times canopy transmission).
    pub fn fluxes(&self, svf: f64, sunlit: f64, params: &RadiationParams) -> DirectionalFluxes {
        let k_down = self.diffuse * svf + self.direct_horizontal * sunlit;
        let k_up = params.albedo_ground * k_down;
        let k_lateral = 0.5 * self.beam_normal * self.cos_elevation * sunlit
            + 0.5 * self.diffuse * (1.0 - svf) * params.albedo_walls;
        let surface_k = self.air_kelvin + 2.0 * k_down / 1000.0;
        let emitted = params.emissivity_ground * STEFAN_BOLTZMANN * surface_k.powi(4);
        let l_down = svf * self.sky_longwave + (1.0 - svf) * emitted;
        DirectionalFluxes {
            k_up,
            k_down,
            k_lateral,
            l_up: emitted,
            l_down,
            l_lateral: 0.5 * (l_down + emitted),
        }
    }

    /// Point Tmrt in °C.
    pub fn tmrt(&self, svf: f64, sunlit: f64, params: &RadiationParams) -> f64 {
        tmrt_from_fluxes(&self.fluxes(svf, sunlit, params), params)
    }
}

/// Fluxes of one cell for one record.
pub fn directional_fluxes(
    index: usize,
    record: &MeteoRecord,
    shadow: &ShadowField,
    svf: &SvfMaps,
    params: &RadiationParams,
) -> DirectionalFluxes {
    Forcing::from_record(record, params).fluxes(svf.total.data()[index], shadow.sunlit(index), params)
}

/// Radiant temperature (K) of one direction.
pub fn radiant_temperature(k: f64, l: f64, params: &RadiationParams) -> f64 {
    ((params.absorption_shortwave * k + params.emissivity_person * l)
        / (params.emissivity_person * STEFAN_BOLTZMANN))
        .powf(0.25)
}

/// Combines six directional radiant temperatures (K) in fourth-power form.
pub fn combine_directional(up: f64, down: f64, left: f64, right: f64, front: f64, back: f64) -> f64 {
    let q = |t: f64| t.powi(4);
    ((W_VERTICAL * (q(up) + q(down)) + W_SIDE * (q(left) + q(right)) + W_FRONT * (q(front) + q(back)))
        / W_SUM)
        .powf(0.25)
}

/// Tmrt in °C from directional fluxes.
pub fn tmrt_from_fluxes(f: &DirectionalFluxes, params: &RadiationParams) -> f64 {
    let absorbed = |k: f64, l: f64| params.absorption_shortwave * k + params.emissivity_person * l;
    let s_up = absorbed(f.k_up, f.l_up);
    let s_down = absorbed(f.k_down, f.l_down);
    let s_lat = absorbed(f.k_lateral, f.l_lateral);
    let weighted = W_VERTICAL * (s_up + s_down) + 2.0 * (W_SIDE + W_FRONT) * s_lat;
    (weighted / (W_SUM * params.emissivity_person * STEFAN_BOLTZMANN)).powf(0.25) - KELVIN
}

/// Recomputes SVF maps for the current vegetation.
pub fn refresh_svf(area: &mut StudyArea, config: &ShadowConfig, params: &RadiationParams) {
    let maps = compute_svf_with(area, config, params.transmissivity);
    area.set_svf(maps).expect("svf maps match the area");
}

fn tmrt_grid(
    area: &StudyArea,
    surface: &Surface,
    svf: &SvfMaps,
    record: &MeteoRecord,
    params: &RadiationParams,
) -> Grid {
    let shadow = cast_shadows_with(surface, record.sun_elevation, record.sun_azimuth, params.transmissivity);
    let forcing = Forcing::from_record(record, params);
    let data = (0..area.n_cells())
        .map(|i| forcing.tmrt(svf.total.data()[i], shadow.sunlit(i), params))
        .collect();
    Grid::from_vec(area.width(), area.height(), data).expect("dims")
}

/// Point-wise Tmrt (°C) of every cell for one record.
pub fn tmrt_pointwise(area: &StudyArea, record: &MeteoRecord, params: &RadiationParams) -> Result<Grid> {
    let svf = area.fresh_svf()?;
    let surface = Surface::from_area(area, ShadowConfig::default().trunk_fraction);
    Ok(tmrt_grid(area, &surface, svf, record, params))
}

/// Visits the point-wise Tmrt grid of every record in order.
pub fn for_each_record_tmrt(
    area: &StudyArea,
    period: &TimePeriod,
    params: &RadiationParams,
    mut visit: impl FnMut(usize, &MeteoRecord, &Grid),
) -> Result<()> {
    let svf = area.fresh_svf()?;
    let surface = Surface::from_area(area, ShadowConfig::default().trunk_fraction);
    for (i, record) in period.records().iter().enumerate() {
        let grid = tmrt_grid(area, &surface, svf, record, params);
        visit(i, record, &grid);
    }
    Ok(())
}

/// Mean over all records of the point-wise Tmrt, shadows recomputed per record.
pub fn evaluate_reference(area: &StudyArea, period: &TimePeriod, params: &RadiationParams) -> Result<Grid> {
    let mut sum = Grid::zeros(area.width(), area.height());
    for_each_record_tmrt(area, period, params, |_, _, g| {
        for (s, v) in sum.data_mut().iter_mut().zip(g.data()) {
            *s += v;
        }
    })?;
    let n = period.len() as f64;
    Ok(sum.map(|v| v / n))
}

/// Copy of `area` with `placement` applied and SVF recomputed.
pub fn planted_area(
    area: &StudyArea,
    placement: &TreePlacement,
    config: &ShadowConfig,
    params: &RadiationParams,
) -> Result<StudyArea> {
    let mut out = apply_placement(area, placement)?;
    refresh_svf(&mut out, config, params);
    Ok(out)
}
