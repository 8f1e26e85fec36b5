//! Metrics, the shortwave threshold classifier, rank correlation, temporal
//! profiles, watershed crown extraction and counterfactual relocation.

mod counterfactual;
mod watershed;

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, Timelike};

pub use counterfactual::{counterfactual_relocate, replacement_geometry, Counterfactual};
pub use watershed::{extract_trees_watershed, ExtractedTree, MIN_TREE_HEIGHT};

use crate::error::{Error, Result};
use crate::meteo::TimePeriod;
use crate::raster::{Grid, StudyArea};
use crate::tmrt::{for_each_record_tmrt, RadiationParams};

/// Heat-stress threshold, °C.
pub const HEAT_THRESHOLD: f64 = 60.0;

/// Shortwave threshold separating cooling from warming records, W m⁻².
pub const SHORTWAVE_THRESHOLD: f64 = 96.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// Mean change over valid cells, K.
    pub delta_tmrt_mean: f64,
    /// Mean change divided by the valid area, K m⁻².
    pub delta_per_area: f64,
    /// Mean change divided by the added canopy area, K m⁻²; 0 without canopy.
    pub delta_per_canopy_area: f64,
    pub canopy_area: f64,
    pub heat_hours_before: Option<u64>,
    pub heat_hours_after: Option<u64>,
    pub valid_cell_count: usize,
}

/// Compares two aggregated grids over the valid cells of `area`.
pub fn compute_metrics(
    before: &Grid,
    after: &Grid,
    area: &StudyArea,
    canopy_area: f64,
    heat_hours: Option<(u64, u64)>,
) -> Result<MetricsReport> {
    if !before.same_dims(after) || before.width() != area.width() || before.height() != area.height() {
        return Err(Error::DimensionMismatch {
            what: "Tmrt grids".into(),
            got_w: after.width(),
            got_h: after.height(),
            want_w: area.width(),
            want_h: area.height(),
        });
    }
    let valid = area.valid_mask();
    let n = valid.iter().filter(|&&v| v).count();
    if n == 0 {
        return Err(Error::EmptySelection("no valid cells".into()));
    }
    let sum: f64 = before
        .data()
        .iter()
        .zip(after.data())
        .zip(&valid)
        .filter(|(_, &v)| v)
        .map(|((b, a), _)| a - b)
        .sum();
    let mean = sum / n as f64;
    Ok(MetricsReport {
        delta_tmrt_mean: mean,
        delta_per_area: mean / n as f64,
        delta_per_canopy_area: if canopy_area > 0.0 { mean / canopy_area } else { 0.0 },
        canopy_area,
        heat_hours_before: heat_hours.map(|h| h.0),
        heat_hours_after: heat_hours.map(|h| h.1),
        valid_cell_count: n,
    })
}

/// Valid cell-hours with point-wise Tmrt above `threshold`. Needs fresh SVF.
pub fn heat_hours(area: &StudyArea, period: &TimePeriod, params: &RadiationParams, threshold: f64) -> Result<u64> {
    let valid = area.valid_mask();
    let mut count = 0u64;
    for_each_record_tmrt(area, period, params, |_, _, g| {
        count += g
            .data()
            .iter()
            .zip(&valid)
            .filter(|(&t, &v)| v && t > threshold)
            .count() as u64;
    })?;
    Ok(count)
}

/// Threshold classifier on global shortwave: cooling predicted above it.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierFit {
    pub threshold: f64,
    pub accuracy: f64,
    /// Set when all labels agree and any threshold is trivially perfect.
    pub single_class: bool,
}

/// Share of records where `ig > threshold` agrees with `cools`.
pub fn threshold_accuracy(ig: &[f64], cools: &[bool], threshold: f64) -> f64 {
    let hits = ig
        .iter()
        .zip(cools)
        .filter(|(&g, &c)| (g > threshold) == c)
        .count();
    hits as f64 / ig.len().max(1) as f64
}

/// Sweeps every midpoint between sorted distinct shortwave values.
pub fn fit_shortwave_classifier(ig: &[f64], cools: &[bool]) -> Result<ClassifierFit> {
    if ig.len() != cools.len() || ig.is_empty() {
        return Err(Error::InvalidParameter(
            "classifier needs equally many, and at least one, values and labels".into(),
        ));
    }
    if cools.iter().all(|&c| c == cools[0]) {
        let threshold = if cools[0] { f64::NEG_INFINITY } else { f64::INFINITY };
        return Ok(ClassifierFit {
            threshold,
            accuracy: 1.0,
            single_class: true,
        });
    }
    let mut distinct: Vec<f64> = ig.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut candidates = vec![distinct[0] - 1.0];
    candidates.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(distinct[distinct.len() - 1] + 1.0);
    let mut best = ClassifierFit {
        threshold: candidates[0],
        accuracy: threshold_accuracy(ig, cools, candidates[0]),
        single_class: false,
    };
    for &t in &candidates[1..] {
        let a = threshold_accuracy(ig, cools, t);
        if a > best.accuracy {
            best.threshold = t;
            best.accuracy = a;
        }
    }
    Ok(best)
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter(
            "spearman needs two series of equal length >= 2".into(),
        ));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("rank correlation of a constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// One bin of a temporal profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileBin {
    /// Hour of day (0-23) or month (1-12).
    pub key: u32,
    pub count: usize,
    pub mean_delta: f64,
    pub mean_shortwave: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalProfiles {
    /// Per-record spatial mean change over valid cells, K.
    pub per_record: Vec<f64>,
    pub hourly: Vec<ProfileBin>,
    pub monthly: Vec<ProfileBin>,
}

impl TemporalProfiles {
    pub fn overall_mean(&self) -> f64 {
        self.per_record.iter().sum::<f64>() / self.per_record.len().max(1) as f64
    }
}

/// Per-record mean change between two areas (both with fresh SVF), folded
/// by hour of day and by month.
pub fn temporal_profiles(
    without: &StudyArea,
    with: &StudyArea,
    period: &TimePeriod,
    params: &RadiationParams,
) -> Result<TemporalProfiles> {
    let valid = without.valid_mask();
    let n_valid = valid.iter().filter(|&&v| v).count().max(1) as f64;
    let mut base = Vec::with_capacity(period.len());
    for_each_record_tmrt(without, period, params, |_, _, g| {
        base.push(masked_sum(g, &valid));
    })?;
    let mut per_record = Vec::with_capacity(period.len());
    for_each_record_tmrt(with, period, params, |i, _, g| {
        per_record.push((masked_sum(g, &valid) - base[i]) / n_valid);
    })?;
    let fold = |key: &dyn Fn(usize) -> u32| {
        let mut bins: std::collections::BTreeMap<u32, (usize, f64, f64)> = Default::default();
        for (i, d) in per_record.iter().enumerate() {
            let e = bins.entry(key(i)).or_default();
            e.0 += 1;
            e.1 += d;
            e.2 += period.records()[i].shortwave_global;
        }
        bins.into_iter()
            .map(|(key, (count, sd, sg))| ProfileBin {
                key,
                count,
                mean_delta: sd / count as f64,
                mean_shortwave: sg / count as f64,
            })
            .collect::<Vec<_>>()
    };
    let hourly = fold(&|i| period.records()[i].timestamp.hour());
    let monthly = fold(&|i| period.records()[i].timestamp.month());
    Ok(TemporalProfiles {
        per_record,
        hourly,
        monthly,
    })
}

fn masked_sum(g: &Grid, mask: &[bool]) -> f64 {
    g.data().iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v).sum()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_metrics_csv(path: &Path, m: &MetricsReport) -> Result<()> {
    let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::from("metric,value\n");
    let _ = writeln!(s, "delta_tmrt_mean_K,{}", m.delta_tmrt_mean);
    let _ = writeln!(s, "delta_per_area_K_m2,{}", m.delta_per_area);
    let _ = writeln!(s, "delta_per_canopy_area_K_m2,{}", m.delta_per_canopy_area);
    let _ = writeln!(s, "canopy_area_m2,{}", m.canopy_area);
    let _ = writeln!(s, "heat_hours_before,{}", opt(m.heat_hours_before));
    let _ = writeln!(s, "heat_hours_after,{}", opt(m.heat_hours_after));
    let _ = writeln!(s, "valid_cell_count,{}", m.valid_cell_count);
    write_text(path, &s)
}

pub fn write_profile_csv(path: &Path, key_name: &str, bins: &[ProfileBin]) -> Result<()> {
    let mut s = format!("{key_name},records,mean_delta_tmrt_K,mean_shortwave_W_m2\n");
    for b in bins {
        let _ = writeln!(s, "{},{},{},{}", b.key, b.count, b.mean_delta, b.mean_shortwave);
    }
    write_text(path, &s)
}

pub fn write_trees_csv(path: &Path, trees: &[ExtractedTree]) -> Result<()> {
    let mut s = String::from("id,row,col,apex_m,diameter_m\n");
    for (i, t) in trees.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{},{}", t.apex.row, t.apex.col, t.apex_height, t.diameter());
    }
    write_text(path, &s)
}

#[cfg(test)]
mod tests;
