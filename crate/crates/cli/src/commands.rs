use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use arbor_core::analysis::{
    compute_metrics, counterfactual_relocate, fit_shortwave_classifier, heat_hours, spearman, temporal_profiles,
    write_metrics_csv, write_profile_csv, write_trees_csv,
};
use arbor_core::meteo::{load_meteo_csv, select_period, synth_meteo, PeriodKind, TimePeriod};
use arbor_core::optimize::{read_placement_csv, run_method, write_placement_csv, write_trace_csv, SearchConfig};
use arbor_core::raster::{
    load_study_area, read_ascii_grid, synth_study_area, write_ascii_grid, write_study_area, AsciiHeader, Grid,
    StudyArea, SynthSpec, TreeGeometry,
};
use arbor_core::shadow::{compute_svf_with, ShadowConfig};
use arbor_core::tmrt::{build_context, evaluate_reference, planted_area, refresh_svf, ContextOptions, RadiationParams};
use arbor_core::{Error, Result};

use crate::{AnalyzeArgs, CounterfactualArgs, ModelArgs, OptimizeArgs, SearchArgs, SimulateArgs, SvfArgs, SynthArgs};

/// `key = value` lines echoed into `config.txt`. The output directory and
/// thread count are left out so bundles compare byte for byte.
struct RunConfig {
    text: String,
}

impl RunConfig {
    fn new(command: &str) -> Self {
        RunConfig {
            text: format!("command = {command}\n"),
        }
    }

    fn set(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.text, "{key} = {value}");
        self
    }

    fn model(&mut self, m: &ModelArgs, params: &RadiationParams) -> &mut Self {
        self.set("area", m.area.display())
            .set("meteo", m.meteo.display())
            .set("period", period_name(m.period))
            .set("bins", format!("{}x{}", m.bins.n_azimuth, m.bins.n_elevation))
            .set("tree_height", m.tree_height)
            .set("crown_diameter", m.crown_diameter);
        for (k, v) in params.fields() {
            self.set(k, v);
        }
        self
    }

    fn search(&mut self, c: &SearchConfig) -> &mut Self {
        self.set("seed", c.seed)
            .set("ils_iterations", c.ils_iterations)
            .set("buffer_size", c.buffer_size)
            .set("ga_population", c.ga_population)
            .set("ga_generations", c.ga_generations)
            .set("mutation_rate", c.mutation_rate)
            .set("softmax_temperature", c.softmax_temperature)
            .set("baseline_genetic_generations", c.baseline_genetic_generations)
    }

    fn write(&self, out: &Path) -> Result<()> {
        write_file(&out.join("config.txt"), &self.text)
    }
}

fn period_name(p: PeriodKind) -> &'static str {
    match p {
        PeriodKind::HottestDay => "day",
        PeriodKind::HottestWeek => "week",
        PeriodKind::Year => "year",
        PeriodKind::Decade => "decade",
        PeriodKind::All => "all",
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })
}

fn parse_params(pairs: &[String]) -> Result<RadiationParams> {
    let mut params = RadiationParams::default();
    for pair in pairs {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("`{pair}` is not key=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("`{pair}` has a non-numeric value")))?;
        params.set(k.trim(), v)?;
    }
    Ok(params)
}

fn search_config(s: &SearchArgs, k: usize) -> Result<SearchConfig> {
    let config = SearchConfig {
        ils_iterations: s.iterations,
        buffer_size: s.buffer,
        ga_population: s.population,
        ga_generations: s.generations,
        mutation_rate: s.mutation,
        softmax_temperature: s.temperature,
        baseline_genetic_generations: s.genetic_generations,
        ..SearchConfig::new(k, s.seed)
    };
    config.validate()?;
    Ok(config)
}

/// Everything the Tmrt-evaluating commands load up front.
struct Model {
    area: StudyArea,
    period: TimePeriod,
    params: RadiationParams,
    options: ContextOptions,
}

impl Model {
    fn load(m: &ModelArgs) -> Result<Self> {
        let params = parse_params(&m.params)?;
        let geometry = TreeGeometry::new(m.tree_height, m.crown_diameter, ShadowConfig::default().trunk_fraction)?;
        let area = load_study_area(&m.area)?;
        let records = load_meteo_csv(&m.meteo)?.records;
        let period = select_period(&records, m.period)?;
        let options = ContextOptions {
            bins: m.bins,
            geometry,
            ..ContextOptions::default()
        };
        Ok(Model {
            area,
            period,
            params,
            options,
        })
    }

    /// The loaded area with SVF maps, computed when none were stored.
    fn area_with_svf(&self) -> StudyArea {
        let mut area = self.area.clone();
        if !area.is_svf_fresh() {
            refresh_svf(&mut area, &self.options.shadow, &self.params);
        }
        area
    }

    fn header(&self) -> AsciiHeader {
        AsciiHeader::for_grid(&self.area.dem, self.area.origin)
    }
}

fn masked_stats(a: &Grid, b: &Grid, mask: &[bool]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut n = 0usize;
    for ((x, y), &m) in a.data().iter().zip(b.data()).zip(mask) {
        if m {
            let d = (x - y).abs();
            sum += d;
            max = max.max(d);
            n += 1;
        }
    }
    (sum / n.max(1) as f64, max)
}

pub fn synth(a: SynthArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.building_density) || !(0.0..=1.0).contains(&a.vegetation_density) {
        return Err(Error::InvalidParameter("densities must lie in [0, 1]".into()));
    }
    let spec = SynthSpec::new(a.width, a.height)
        .densities(a.building_density, a.vegetation_density)
        .pattern(a.pattern.into())
        .with_water(a.water);
    let area = synth_study_area(a.seed, &spec)?;
    write_study_area(&a.out, &area)?;
    let start = a.start.and_hms_opt(0, 0, 0).expect("midnight exists");
    let records = synth_meteo(a.seed, start, a.days * 24, spec.latitude);
    arbor_core::meteo::write_meteo_csv(&a.out.join("meteo.csv"), &records)?;
    let mut cfg = RunConfig::new("synth");
    cfg.set("seed", a.seed)
        .set("width", a.width)
        .set("height", a.height)
        .set("building_density", a.building_density)
        .set("vegetation_density", a.vegetation_density)
        .set("pattern", format!("{:?}", a.pattern).to_lowercase())
        .set("water", a.water)
        .set("start", a.start)
        .set("days", a.days);
    cfg.write(&a.out)
}

pub fn svf(a: SvfArgs) -> Result<()> {
    let area = load_study_area(&a.area)?;
    let config = ShadowConfig::default();
    let maps = compute_svf_with(&area, &config, RadiationParams::default().transmissivity);
    create_dir(&a.out)?;
    let header = AsciiHeader::for_grid(&area.dem, area.origin);
    write_ascii_grid(&a.out.join("svf_total.asc"), &maps.total, &header)?;
    write_ascii_grid(&a.out.join("svf_build.asc"), &maps.buildings, &header)?;
    write_ascii_grid(&a.out.join("svf_veg.asc"), &maps.vegetation, &header)?;
    let mut cfg = RunConfig::new("svf");
    cfg.set("area", a.area.display())
        .set("n_azimuth", config.n_azimuth)
        .set("n_elevation", config.n_elevation)
        .set("svf_vegetation_reach", config.svf_vegetation_reach);
    cfg.write(&a.out)
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let ctx = build_context(&model.area, &model.period, &model.params, &model.options)?;
    let fast = ctx.baseline_grid();
    let reference = evaluate_reference(&model.area_with_svf(), &model.period, &model.params)?;
    let valid = model.area.valid_mask();
    let (mean_abs, max_abs) = masked_stats(&fast, &reference, &valid);
    create_dir(&a.out)?;
    let header = model.header();
    write_ascii_grid(&a.out.join("tmrt_fast.asc"), &fast, &header)?;
    write_ascii_grid(&a.out.join("tmrt_reference.asc"), &reference, &header)?;
    let mut s = String::from("metric,value\n");
    let _ = writeln!(s, "records,{}", model.period.len());
    let _ = writeln!(s, "valid_cells,{}", ctx.n_valid());
    let _ = writeln!(s, "mean_fast_C,{}", fast.masked_mean(&valid).unwrap_or(f64::NAN));
    let _ = writeln!(s, "mean_reference_C,{}", reference.masked_mean(&valid).unwrap_or(f64::NAN));
    let _ = writeln!(s, "mean_abs_diff_K,{mean_abs}");
    let _ = writeln!(s, "max_abs_diff_K,{max_abs}");
    write_file(&a.out.join("discrepancy.csv"), &s)?;
    let mut cfg = RunConfig::new("simulate");
    cfg.model(&a.model, &model.params);
    cfg.write(&a.out)
}

pub fn optimize(a: OptimizeArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let config = search_config(&a.search, a.k)?;
    let ctx = build_context(&model.area, &model.period, &model.params, &model.options)?;
    let result = run_method(&ctx, &config, a.method)?;
    let (objective, after) = ctx.evaluate_fast_grid(&result.placement)?;
    let before = ctx.baseline_grid();
    create_dir(&a.out)?;
    let header = model.header();
    write_placement_csv(&a.out.join("placement.csv"), &result.placement)?;
    write_trace_csv(&a.out.join("objective_trace.csv"), &result.trace)?;
    write_ascii_grid(&a.out.join("tmrt_before.asc"), &before, &header)?;
    write_ascii_grid(&a.out.join("tmrt_after.asc"), &after, &header)?;
    write_ascii_grid(&a.out.join("delta_tmrt.asc"), &after.zip_map(&before, |x, y| x - y), &header)?;
    let mut s = String::from("metric,value\n");
    let _ = writeln!(s, "baseline_objective_C,{}", ctx.baseline());
    let _ = writeln!(s, "objective_C,{objective}");
    let _ = writeln!(s, "delta_objective_K,{}", objective - ctx.baseline());
    let _ = writeln!(s, "canopy_area_m2,{}", result.placement.canopy_area());
    write_file(&a.out.join("summary.csv"), &s)?;
    let mut cfg = RunConfig::new("optimize");
    cfg.set("method", a.method).set("k", a.k).model(&a.model, &model.params).search(&config);
    cfg.write(&a.out)
}

pub fn counterfactual(a: CounterfactualArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let config = search_config(&a.search, 1)?;
    let cf = counterfactual_relocate(&model.area, &model.period, &model.params, &model.options, &config)?;
    create_dir(&a.out)?;
    let header = model.header();
    write_trees_csv(&a.out.join("trees_extracted.csv"), &cf.extracted)?;
    let mut s = String::from("metric,value\n");
    let _ = writeln!(s, "trees_extracted,{}", cf.extracted.len());
    if let Some(r) = &cf.relocation {
        write_placement_csv(&a.out.join("placement.csv"), &r.placement)?;
        write_ascii_grid(&a.out.join("veg_diff.asc"), &r.veg_diff, &header)?;
        write_ascii_grid(&a.out.join("tmrt_before.asc"), &r.factual_grid, &header)?;
        write_ascii_grid(&a.out.join("tmrt_after.asc"), &r.relocated_grid, &header)?;
        write_metrics_csv(&a.out.join("metrics.csv"), &r.metrics)?;
        let _ = writeln!(s, "replacement_height_m,{}", r.geometry.height);
        let _ = writeln!(s, "replacement_crown_diameter_m,{}", r.geometry.crown_diameter);
        let _ = writeln!(s, "factual_mean_C,{}", r.factual_mean);
        let _ = writeln!(s, "relocated_mean_C,{}", r.relocated_mean);
    } else {
        eprintln!("no trees taller than the extraction threshold; nothing to relocate");
    }
    write_file(&a.out.join("summary.csv"), &s)?;
    let mut cfg = RunConfig::new("counterfactual");
    cfg.model(&a.model, &model.params).search(&config);
    cfg.write(&a.out)
}

fn read_grid_like(path: &Path, area: &StudyArea) -> Result<Grid> {
    let (_, g) = read_ascii_grid(path)?;
    if g.width() != area.width() || g.height() != area.height() {
        return Err(Error::DimensionMismatch {
            what: path.display().to_string(),
            got_w: g.width(),
            got_h: g.height(),
            want_w: area.width(),
            want_h: area.height(),
        });
    }
    Ok(g)
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let placement = read_placement_csv(&a.placement, model.options.geometry)?;
    let without = model.area_with_svf();
    let with = planted_area(&model.area, &placement, &model.options.shadow, &model.params)?;
    let before = match &a.before {
        Some(p) => read_grid_like(p, &model.area)?,
        None => evaluate_reference(&without, &model.period, &model.params)?,
    };
    let after = match &a.after {
        Some(p) => read_grid_like(p, &model.area)?,
        None => evaluate_reference(&with, &model.period, &model.params)?,
    };
    let hours = (
        heat_hours(&without, &model.period, &model.params, a.threshold)?,
        heat_hours(&with, &model.period, &model.params, a.threshold)?,
    );
    let metrics = compute_metrics(&before, &after, &model.area, placement.canopy_area(), Some(hours))?;
    let profiles = temporal_profiles(&without, &with, &model.period, &model.params)?;

    create_dir(&a.out)?;
    write_metrics_csv(&a.out.join("metrics.csv"), &metrics)?;
    write_profile_csv(&a.out.join("profiles_hourly.csv"), "hour", &profiles.hourly)?;
    write_profile_csv(&a.out.join("profiles_monthly.csv"), "month", &profiles.monthly)?;

    let ig: Vec<f64> = model.period.records().iter().map(|r| r.shortwave_global).collect();
    let cools: Vec<bool> = profiles.per_record.iter().map(|&d| d < 0.0).collect();
    let mut s = String::from("timestamp,shortwave_W_m2,delta_tmrt_K\n");
    for (r, d) in model.period.records().iter().zip(&profiles.per_record) {
        let _ = writeln!(s, "{},{},{}", r.timestamp.format("%Y-%m-%d %H:%M"), r.shortwave_global, d);
    }
    write_file(&a.out.join("profiles_records.csv"), &s)?;

    let mut s = String::from("metric,value\n");
    let fit = fit_shortwave_classifier(&ig, &cools)?;
    let _ = writeln!(s, "shortwave_threshold_W_m2,{}", fit.threshold);
    let _ = writeln!(s, "accuracy,{}", fit.accuracy);
    let _ = writeln!(s, "single_class,{}", fit.single_class);
    match spearman(&ig, &profiles.per_record) {
        Ok(rho) => {
            let _ = writeln!(s, "spearman_shortwave_delta,{rho}");
        }
        Err(Error::Undefined(_)) => {
            let _ = writeln!(s, "spearman_shortwave_delta,");
        }
        Err(e) => return Err(e),
    }
    write_file(&a.out.join("classifier.csv"), &s)?;

    let mut cfg = RunConfig::new("analyze");
    cfg.set("placement", a.placement.display())
        .set("threshold", a.threshold)
        .set("before", a.before.as_ref().map(|p| p.display().to_string()).unwrap_or_default())
        .set("after", a.after.as_ref().map(|p| p.display().to_string()).unwrap_or_default())
        .model(&a.model, &model.params);
    cfg.write(&a.out)
}
