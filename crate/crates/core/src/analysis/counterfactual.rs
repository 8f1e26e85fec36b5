//! Retrospective relocation of existing trees under a canopy-area budget.

use super::{compute_metrics, extract_trees_watershed, heat_hours, ExtractedTree, MetricsReport, HEAT_THRESHOLD, MIN_TREE_HEIGHT};
use crate::error::Result;
use crate::meteo::TimePeriod;
use crate::optimize::{iterated_local_search, SearchConfig};
use crate::raster::{Grid, StudyArea, TreeGeometry, TreePlacement};
use crate::tmrt::{build_context, evaluate_reference, planted_area, refresh_svf, ContextOptions, RadiationParams};

/// Relocated placement and its comparison against the factual area.
#[derive(Clone, Debug)]
pub struct Relocation {
    pub geometry: TreeGeometry,
    pub placement: TreePlacement,
    /// Reference mean Tmrt over valid cells, °C.
    pub factual_mean: f64,
    pub relocated_mean: f64,
    pub factual_grid: Grid,
    pub relocated_grid: Grid,
    pub metrics: MetricsReport,
    /// Relocated minus factual vegetation height, m.
    pub veg_diff: Grid,
}

#[derive(Clone, Debug)]
pub struct Counterfactual {
    pub extracted: Vec<ExtractedTree>,
    /// `None` when no tree was extracted.
    pub relocation: Option<Relocation>,
}

/// Uniform geometry for `trees.len()` replacements whose rasterized crowns
/// together cover no more than the extracted crowns.
pub fn replacement_geometry(trees: &[ExtractedTree], trunk_fraction: f64) -> Option<TreeGeometry> {
    if trees.is_empty() {
        return None;
    }
    let n = trees.len();
    let budget: usize = trees.iter().map(|t| t.cells.len()).sum();
    let height = trees.iter().map(|t| t.apex_height).sum::<f64>() / n as f64;
    let mut d = (2.0 * (budget as f64 / n as f64 / std::f64::consts::PI).sqrt()).floor().max(1.0);
    loop {
        let g = TreeGeometry::new(height, d, trunk_fraction).ok()?;
        if d <= 1.0 || n * g.crown_offsets().len() <= budget {
            return Some(g);
        }
        d -= 1.0;
    }
}

pub fn counterfactual_relocate(
    area: &StudyArea,
    period: &TimePeriod,
    params: &RadiationParams,
    options: &ContextOptions,
    config: &SearchConfig,
) -> Result<Counterfactual> {
    let extracted = extract_trees_watershed(&area.vegetation, MIN_TREE_HEIGHT);
    let Some(geometry) = replacement_geometry(&extracted, options.shadow.trunk_fraction) else {
        return Ok(Counterfactual {
            extracted,
            relocation: None,
        });
    };
    let mut stripped_veg = area.vegetation.clone();
    for t in &extracted {
        for &c in &t.cells {
            stripped_veg[c] = 0.0;
        }
    }
    let stripped = area.with_vegetation(stripped_veg)?;
    let ctx_options = ContextOptions {
        geometry,
        ..options.clone()
    };
    let ctx = build_context(&stripped, period, params, &ctx_options)?;
    let search = SearchConfig {
        k: extracted.len(),
        ..config.clone()
    };
    let placement = iterated_local_search(&ctx, &search)?.placement;

    let mut factual = area.clone();
    refresh_svf(&mut factual, &options.shadow, params);
    let relocated = planted_area(&stripped, &placement, &options.shadow, params)?;
    let factual_grid = evaluate_reference(&factual, period, params)?;
    let relocated_grid = evaluate_reference(&relocated, period, params)?;
    let hours = (
        heat_hours(&factual, period, params, HEAT_THRESHOLD)?,
        heat_hours(&relocated, period, params, HEAT_THRESHOLD)?,
    );
    let valid = area.valid_mask();
    let factual_mean = factual_grid.masked_mean(&valid).unwrap_or(f64::NAN);
    let relocated_mean = relocated_grid.masked_mean(&valid).unwrap_or(f64::NAN);
    let metrics = compute_metrics(&factual_grid, &relocated_grid, area, placement.canopy_area(), Some(hours))?;
    let veg_diff = relocated.vegetation.zip_map(&area.vegetation, |a, b| a - b);
    Ok(Counterfactual {
        extracted,
        relocation: Some(Relocation {
            geometry,
            placement,
            factual_mean,
            relocated_mean,
            factual_grid,
            relocated_grid,
            metrics,
            veg_diff,
        }),
    })
}
