//! Seeded synthetic hourly meteorology.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{solar_position, MeteoRecord};

/// Shape of the synthetic climate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Climate {
    /// Annual mean air temperature, °C.
    pub mean_temperature: f64,
    /// Half the summer-winter swing of daily means, K.
    pub seasonal_amplitude: f64,
    /// Half the day-night swing, K.
    pub diurnal_amplitude: f64,
    /// Clear-sky fraction of the 1000 W m⁻² beam reaching the ground.
    pub transmittance: f64,
    pub mean_humidity: f64,
}

impl Default for Climate {
    /// Roughly central European.
    fn default() -> Self {
        Climate {
            mean_temperature: 11.0,
            seasonal_amplitude: 9.0,
            diurnal_amplitude: 5.0,
            transmittance: 0.75,
            mean_humidity: 65.0,
        }
    }
}

/// [`synth_meteo_with`] under the default climate.
pub fn synth_meteo(seed: u64, start: NaiveDateTime, n_hours: usize, latitude: f64) -> Vec<MeteoRecord> {
    synth_meteo_with(seed, start, n_hours, latitude, &Climate::default())
}

/// Hourly records from `start` (UTC) at longitude 0, so clock time is close
/// to solar time.
pub fn synth_meteo_with(
    seed: u64,
    start: NaiveDateTime,
    n_hours: usize,
    latitude: f64,
    climate: &Climate,
) -> Vec<MeteoRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = start
        .with_minute(0)
        .and_then(|t| t.with_second(0))
        .and_then(|t| t.with_nanosecond(0))
        .unwrap_or(start);
    (0..n_hours)
        .map(|i| {
            let t = start + Duration::hours(i as i64);
            let sun = solar_position(t, latitude, 0.0);
            let doy = t.ordinal() as f64;
            // Warmest around late July, coolest in late January.
            let season = (2.0 * PI * (doy - 114.0) / 365.25).sin();
            let hour = t.hour() as f64;
            let diurnal = (2.0 * PI * (hour - 9.0) / 24.0).sin();
            let jitter: f64 = rng.gen_range(-0.3..0.3);
            let air_temperature = climate.mean_temperature
                + climate.seasonal_amplitude * season
                + climate.diurnal_amplitude * (1.0 + 0.3 * season) * diurnal
                + jitter;

            let atm = climate.transmittance + rng.gen_range(-0.05..0.05);
            let shortwave_global = if sun.elevation > 0.0 {
                (1000.0 * sun.elevation.to_radians().sin() * atm).max(0.0)
            } else {
                0.0
            };
            let relative_humidity =
                (climate.mean_humidity - 15.0 * diurnal + rng.gen_range(-3.0..3.0)).clamp(5.0, 100.0);

            MeteoRecord {
                timestamp: t,
                air_temperature,
                wind_speed: 2.0 + rng.gen_range(0.0..2.0),
                wind_direction: rng.gen_range(0.0..360.0),
                shortwave_global,
                precipitation: 0.0,
                relative_humidity,
                pressure: 98.0,
                sun_elevation: sun.elevation,
                sun_azimuth: sun.azimuth,
            }
        })
        .collect()
}
