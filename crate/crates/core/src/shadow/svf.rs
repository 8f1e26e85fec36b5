//! Hemispherical sky view factors.

use rayon::prelude::*;

use super::{Ray, ShadowConfig, Surface, BLOCKED};
use crate::raster::{Cell, Grid, StudyArea};

/// Cosine-weighted visible-sky fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct SvfMaps {
    pub total: Grid,
    pub buildings: Grid,
    pub vegetation: Grid,
}

/// Discrete hemisphere: bin-centered azimuths and elevations.
#[derive(Clone, Debug)]
pub struct SkyDirections {
    pub rays: Vec<Ray>,
    /// Normalized so that the weights sum to one.
    pub weights: Vec<f64>,
    pub n_azimuth: usize,
    pub n_elevation: usize,
}

impl SkyDirections {
    pub fn new(n_azimuth: usize, n_elevation: usize) -> Self {
        assert!(n_azimuth > 0 && n_elevation > 0);
        let d_az = 360.0 / n_azimuth as f64;
        let d_el = 90.0 / n_elevation as f64;
        let mut rays = Vec::with_capacity(n_azimuth * n_elevation);
        let mut weights = Vec::with_capacity(n_azimuth * n_elevation);
        for j in 0..n_azimuth {
            let az = (j as f64 + 0.5) * d_az;
            for i in 0..n_elevation {
                let el = (i as f64 + 0.5) * d_el;
                let th = el.to_radians();
                rays.push(Ray::toward(az, el));
                weights.push(th.sin() * th.cos() * d_el.to_radians() * d_az.to_radians());
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        SkyDirections {
            rays,
            weights,
            n_azimuth,
            n_elevation,
        }
    }

    pub fn from_config(config: &ShadowConfig) -> Self {
        SkyDirections::new(config.n_azimuth, config.n_elevation)
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// Per-cell, per-direction ray states, cell-major.
pub fn svf_states(surface: &Surface, dirs: &SkyDirections, vegetation_reach: f64) -> Vec<u8> {
    let nd = dirs.len();
    let w = surface.width();
    let mut out = vec![0u8; surface.n_cells() * nd];
    out.par_chunks_mut(nd * w).enumerate().for_each(|(row, chunk)| {
        for (col, cell_states) in chunk.chunks_mut(nd).enumerate() {
            let cell = Cell::new(row, col);
            for (slot, ray) in cell_states.iter_mut().zip(&dirs.rays) {
                *slot = surface.trace(cell, ray, vegetation_reach).state();
            }
        }
    });
    out
}

impl SvfMaps {
    pub fn from_states(
        states: &[u8],
        dirs: &SkyDirections,
        transmissivity: f64,
        width: usize,
        height: usize,
    ) -> Self {
        let nd = dirs.len();
        let n = width * height;
        let mut total = Vec::with_capacity(n);
        let mut buildings = Vec::with_capacity(n);
        let mut vegetation = Vec::with_capacity(n);
        for cell_states in states.chunks(nd) {
            let (mut t, mut b, mut v) = (0.0, 0.0, 0.0);
            for (&s, &w) in cell_states.iter().zip(&dirs.weights) {
                if s == BLOCKED {
                    v += w;
                    continue;
                }
                let trans = transmissivity.powi(s as i32);
                t += w * trans;
                b += w;
                v += w * trans;
            }
            total.push(t.clamp(0.0, 1.0));
            buildings.push(b.clamp(0.0, 1.0));
            vegetation.push(v.clamp(0.0, 1.0));
        }
        SvfMaps {
            total: Grid::from_vec(width, height, total).expect("dims"),
            buildings: Grid::from_vec(width, height, buildings).expect("dims"),
            vegetation: Grid::from_vec(width, height, vegetation).expect("dims"),
        }
    }
}

/// SVF maps with the default 36 x 18 hemisphere and 3 % transmissivity.
pub fn compute_svf(area: &StudyArea) -> SvfMaps {
    compute_svf_with(area, &ShadowConfig::default(), 0.03)
}

pub fn compute_svf_with(area: &StudyArea, config: &ShadowConfig, transmissivity: f64) -> SvfMaps {
    let surface = Surface::from_area(area, config.trunk_fraction);
    let dirs = SkyDirections::from_config(config);
    let states = svf_states(&surface, &dirs, config.svf_vegetation_reach);
    SvfMaps::from_states(&states, &dirs, transmissivity, area.width(), area.height())
}
