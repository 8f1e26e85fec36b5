//! Solar position after the NOAA solar calculator equations.

use chrono::{Datelike, NaiveDateTime, Timelike};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolarPosition {
    /// Degrees above the horizon, refraction corrected.
    pub elevation: f64,
    /// Degrees clockwise from north, in [0, 360).
    pub azimuth: f64,
}

fn julian_day(t: NaiveDateTime) -> f64 {
    let days = t.date().num_days_from_ce() as f64;
    let secs = t.time().num_seconds_from_midnight() as f64;
    // 0001-01-01 is day 1 of the common era and JD 1721425.5.
    1721424.5 + days + secs / 86400.0
}

/// Sun position for a UTC timestamp at the given latitude and longitude
/// (degrees, east positive).
pub fn solar_position(utc: NaiveDateTime, latitude: f64, longitude: f64) -> SolarPosition {
    let jc = (julian_day(utc) - 2451545.0) / 36525.0;

    let mean_long = (280.46646 + jc * (36000.76983 + jc * 0.0003032)).rem_euclid(360.0);
    let mean_anom = 357.52911 + jc * (35999.05029 - 0.0001537 * jc);
    let ecc = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc);
    let m = mean_anom.to_radians();
    let center = m.sin() * (1.914602 - jc * (0.004817 + 0.000014 * jc))
        + (2.0 * m).sin() * (0.019993 - 0.000101 * jc)
        + (3.0 * m).sin() * 0.000289;
    let true_long = mean_long + center;
    let omega = (125.04 - 1934.136 * jc).to_radians();
    let app_long = true_long - 0.00569 - 0.00478 * omega.sin();
    let mean_obliq =
        23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0;
    let obliq = (mean_obliq + 0.00256 * omega.cos()).to_radians();
    let decl = (obliq.sin() * app_long.to_radians().sin()).asin();

    let y = (obliq / 2.0).tan().powi(2);
    let l0 = mean_long.to_radians();
    let eq_time = 4.0
        * (y * (2.0 * l0).sin() - 2.0 * ecc * m.sin()
            + 4.0 * ecc * y * m.sin() * (2.0 * l0).cos()
            - 0.5 * y * y * (4.0 * l0).sin()
            - 1.25 * ecc * ecc * (2.0 * m).sin())
        .to_degrees();

    let minutes = utc.time().num_seconds_from_midnight() as f64 / 60.0;
    let true_solar = (minutes + eq_time + 4.0 * longitude).rem_euclid(1440.0);
    let hour_angle = true_solar / 4.0 - 180.0;

    let lat = latitude.to_radians();
    let ha = hour_angle.to_radians();
    let cos_zen = (lat.sin() * decl.sin() + lat.cos() * decl.cos() * ha.cos()).clamp(-1.0, 1.0);
    let zenith = cos_zen.acos();
    let elevation = 90.0 - zenith.to_degrees();

    let denom = lat.cos() * zenith.sin();
    let azimuth = if denom.abs() < 1e-12 {
        // Sun at zenith or observer at a pole: azimuth is degenerate.
        if latitude >= 0.0 { 180.0 } else { 0.0 }
    } else {
        let a = ((lat.sin() * cos_zen - decl.sin()) / denom)
            .clamp(-1.0, 1.0)
            .acos()
            .to_degrees();
        if hour_angle > 0.0 {
            (a + 180.0).rem_euclid(360.0)
        } else {
            (540.0 - a).rem_euclid(360.0)
        }
    };

    SolarPosition {
        elevation: elevation + refraction(elevation),
        azimuth: azimuth.rem_euclid(360.0),
    }
}

/// Atmospheric refraction in degrees, NOAA approximation.
fn refraction(elevation: f64) -> f64 {
    if elevation > 85.0 {
        return 0.0;
    }
    let te = elevation.to_radians().tan();
    let arcsec = if elevation > 5.0 {
        58.1 / te - 0.07 / te.powi(3) + 0.000086 / te.powi(5)
    } else if elevation > -0.575 {
        1735.0
            + elevation * (-518.2 + elevation * (103.4 + elevation * (-12.79 + elevation * 0.711)))
    } else {
        -20.772 / te
    };
    arcsec / 3600.0
}
