//! Hourly meteorological records, solar geometry and period selection.

mod solar;
mod synth;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};

pub use solar::{solar_position, SolarPosition};
pub use synth::{synth_meteo, synth_meteo_with, Climate};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 10] = [
    "datetime",
    "ta_c",
    "ws_ms",
    "wd_deg",
    "swin_wm2",
    "precip_mm",
    "rh_pct",
    "press_kpa",
    "sun_elev_deg",
    "sun_azim_deg",
];

#[derive(Clone, Debug, PartialEq)]
pub struct MeteoRecord {
    /// Hourly timestamp, UTC.
    pub timestamp: NaiveDateTime,
    /// °C
    pub air_temperature: f64,
    /// m s⁻¹
    pub wind_speed: f64,
    /// degrees
    pub wind_direction: f64,
    /// Global shortwave irradiance I_g, W m⁻².
    pub shortwave_global: f64,
    /// mm
    pub precipitation: f64,
    /// %
    pub relative_humidity: f64,
    pub pressure: f64,
    /// degrees
    pub sun_elevation: f64,
    /// degrees clockwise from north
    pub sun_azimuth: f64,
}

impl MeteoRecord {
    pub fn is_day(&self) -> bool {
        self.sun_elevation > 0.0
    }

    /// Checks field ranges; night rows must already carry zero shortwave.
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Meteo(format!("{}: {msg}", self.timestamp)));
        if !(0.0..=100.0).contains(&self.relative_humidity) {
            return err(format!("relative humidity {} outside [0, 100]", self.relative_humidity));
        }
        if !(self.shortwave_global >= 0.0) {
            return err(format!("negative shortwave {}", self.shortwave_global));
        }
        if !(-90.0..=90.0).contains(&self.sun_elevation) {
            return err(format!("sun elevation {} outside [-90, 90]", self.sun_elevation));
        }
        if !(0.0..360.0).contains(&self.sun_azimuth) {
            return err(format!("sun azimuth {} outside [0, 360)", self.sun_azimuth));
        }
        if !self.is_day() && self.shortwave_global != 0.0 {
            return err("shortwave at night".into());
        }
        if !self.air_temperature.is_finite() || self.air_temperature < -100.0 {
            return err(format!("air temperature {}", self.air_temperature));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeteoSeries {
    pub records: Vec<MeteoRecord>,
    /// Night rows whose shortwave was forced to zero.
    pub clamped_night_rows: usize,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim().trim_end_matches('Z');
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Reads a meteorology CSV with the ten named columns.
pub fn load_meteo_csv(path: &Path) -> Result<MeteoSeries> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    read_meteo(file)
}

pub fn read_meteo<R: std::io::Read>(reader: R) -> Result<MeteoSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut columns = [0usize; 10];
    for (slot, name) in columns.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Meteo(format!("missing column `{name}`")))?;
    }

    let mut records: Vec<MeteoRecord> = Vec::new();
    let mut clamped = 0;
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let field = |i: usize| row.get(columns[i]).unwrap_or("");
        let timestamp = parse_timestamp(field(0)).ok_or_else(|| {
            Error::Meteo(format!("row {}: unparsable timestamp `{}`", line + 1, field(0)))
        })?;
        let mut num = [0.0f64; 9];
        for (i, v) in num.iter_mut().enumerate() {
            let text = field(i + 1);
            *v = text.parse().map_err(|_| {
                Error::Meteo(format!(
                    "row {}: column `{}` has non-numeric value `{text}`",
                    line + 1,
                    CSV_HEADER[i + 1]
                ))
            })?;
        }
        let mut rec = MeteoRecord {
            timestamp,
            air_temperature: num[0],
            wind_speed: num[1],
            wind_direction: num[2],
            shortwave_global: num[3],
            precipitation: num[4],
            relative_humidity: num[5],
            pressure: num[6],
            sun_elevation: num[7],
            sun_azimuth: num[8].rem_euclid(360.0),
        };
        if !rec.is_day() && rec.shortwave_global != 0.0 {
            rec.shortwave_global = 0.0;
            clamped += 1;
        }
        rec.validate()?;
        if let Some(prev) = records.last() {
            if prev.timestamp >= rec.timestamp {
                return Err(Error::Meteo(format!(
                    "row {}: timestamps must strictly increase",
                    line + 1
                )));
            }
        }
        records.push(rec);
    }
    Ok(MeteoSeries {
        records,
        clamped_night_rows: clamped,
    })
}

pub fn write_meteo_csv(path: &Path, records: &[MeteoRecord]) -> Result<()> {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.timestamp.format("%Y-%m-%d %H:%M:%S"),
            r.air_temperature,
            r.wind_speed,
            r.wind_direction,
            r.shortwave_global,
            r.precipitation,
            r.relative_humidity,
            r.pressure,
            r.sun_elevation,
            r.sun_azimuth
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeriodLabel {
    Day,
    Week,
    Year,
    Decade,
    Custom,
}

/// A non-empty, strictly time-ordered run of records.
#[derive(Clone, Debug, PartialEq)]
pub struct TimePeriod {
    pub label: PeriodLabel,
    records: Vec<MeteoRecord>,
}

impl TimePeriod {
    pub fn new(label: PeriodLabel, records: Vec<MeteoRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptySelection("time period has no records".into()));
        }
        if records.windows(2).any(|w| w[0].timestamp >= w[1].timestamp) {
            return Err(Error::Meteo("records must strictly increase in time".into()));
        }
        for r in &records {
            r.validate()?;
        }
        Ok(TimePeriod { label, records })
    }

    pub fn records(&self) -> &[MeteoRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeriodKind {
    HottestDay,
    HottestWeek,
    Year,
    Decade,
    All,
}

impl std::str::FromStr for PeriodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "day" => Ok(PeriodKind::HottestDay),
            "week" => Ok(PeriodKind::HottestWeek),
            "year" => Ok(PeriodKind::Year),
            "decade" => Ok(PeriodKind::Decade),
            "all" => Ok(PeriodKind::All),
            other => Err(Error::InvalidParameter(format!("unknown period `{other}`"))),
        }
    }
}

/// Daily maximum temperature of every calendar day holding all 24 hours.
fn complete_day_maxima(records: &[MeteoRecord]) -> BTreeMap<NaiveDate, f64> {
    let mut days: BTreeMap<NaiveDate, (u32, f64)> = BTreeMap::new();
    for r in records {
        if r.timestamp.minute() != 0 || r.timestamp.second() != 0 {
            continue;
        }
        let e = days.entry(r.timestamp.date()).or_insert((0, f64::NEG_INFINITY));
        e.0 += 1;
        e.1 = e.1.max(r.air_temperature);
    }
    days.into_iter()
        .filter(|(_, (n, _))| *n == 24)
        .map(|(d, (_, m))| (d, m))
        .collect()
}

fn records_between(records: &[MeteoRecord], first: NaiveDate, last: NaiveDate) -> Vec<MeteoRecord> {
    records
        .iter()
        .filter(|r| (first..=last).contains(&r.timestamp.date()))
        .cloned()
        .collect()
}

/// Picks the hottest day or week, a year, a decade, or everything.
///
/// Days and weeks are whole calendar days built from complete 24-hour days;
/// ties go to the earliest candidate.
pub fn select_period(records: &[MeteoRecord], kind: PeriodKind) -> Result<TimePeriod> {
    if records.is_empty() {
        return Err(Error::EmptySelection("no meteorological records".into()));
    }
    match kind {
        PeriodKind::All => TimePeriod::new(PeriodLabel::Custom, records.to_vec()),
        PeriodKind::HottestDay => {
            let days = complete_day_maxima(records);
            let mut best: Option<(NaiveDate, f64)> = None;
            for (&d, &m) in &days {
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((d, m));
                }
            }
            let (day, _) =
                best.ok_or_else(|| Error::EmptySelection("no complete calendar day".into()))?;
            TimePeriod::new(PeriodLabel::Day, records_between(records, day, day))
        }
        PeriodKind::HottestWeek => {
            let days = complete_day_maxima(records);
            let mut best: Option<(NaiveDate, f64)> = None;
            for &start in days.keys() {
                let mut sum = 0.0;
                let mut complete = true;
                for offset in 0..7 {
                    match days.get(&(start + chrono::Days::new(offset))) {
                        Some(m) => sum += m,
                        None => {
                            complete = false;
                            break;
                        }
                    }
                }
                if complete && best.is_none_or(|(_, b)| sum > b) {
                    best = Some((start, sum));
                }
            }
            let (start, _) = best
                .ok_or_else(|| Error::EmptySelection("no run of 7 complete days".into()))?;
            let end = start + chrono::Days::new(6);
            TimePeriod::new(PeriodLabel::Week, records_between(records, start, end))
        }
        PeriodKind::Year => {
            let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
            for r in records {
                *counts.entry(r.timestamp.year()).or_default() += 1;
            }
            let mut best = (0, 0usize);
            for (&y, &n) in &counts {
                if n > best.1 {
                    best = (y, n);
                }
            }
            let picked = records
                .iter()
                .filter(|r| r.timestamp.year() == best.0)
                .cloned()
                .collect();
            TimePeriod::new(PeriodLabel::Year, picked)
        }
        PeriodKind::Decade => {
            let last = records.iter().map(|r| r.timestamp.year()).max().unwrap_or(0);
            let picked = records
                .iter()
                .filter(|r| r.timestamp.year() > last - 10)
                .cloned()
                .collect();
            TimePeriod::new(PeriodLabel::Decade, picked)
        }
    }
}
