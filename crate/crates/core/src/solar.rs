//! Sun position and shadow length from the low-precision solar ephemeris.
//!
//! The chain is day number -> orbital elements -> eccentric anomaly ->
//! ecliptic rectangular coordinates -> equatorial coordinates -> horizontal
//! coordinates (azimuth/altitude) -> shadow length. All public angles are in
//! degrees; conversion to radians happens at the trig call sites.

use crate::error::{Error, Result};

const DEG: f64 = std::f64::consts::PI / 180.0;

/// A UTC civil timestamp with decimal hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CivilInstant {
    pub year: i32,
    pub month: u32,
    pub day: u32,
    /// Decimal hours in [0, 24).
    pub hour_utc: f64,
}

impl CivilInstant {
    pub fn new(year: i32, month: u32, day: u32, hour_utc: f64) -> Result<Self> {
        if !(1..=12).contains(&month) || day < 1 || day > days_in_month(year, month) {
            return Err(Error::InvalidDate { year, month, day });
        }
        if !(0.0..24.0).contains(&hour_utc) || !hour_utc.is_finite() {
            return Err(Error::HourOutOfRange(hour_utc));
        }
        Ok(Self {
            year,
            month,
            day,
            hour_utc,
        })
    }
}

fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

/// Geographic observer, east-positive longitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observer {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

impl Observer {
    pub fn new(latitude_deg: f64, longitude_deg: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude_deg) {
            return Err(Error::CoordinateOutOfRange(format!(
                "latitude {latitude_deg}"
            )));
        }
        if !(-180.0..=180.0).contains(&longitude_deg) {
            return Err(Error::CoordinateOutOfRange(format!(
                "longitude {longitude_deg}"
            )));
        }
        Ok(Self {
            latitude_deg,
            longitude_deg,
        })
    }
}

/// Low-precision orbital elements of the sun at a given day number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalElements {
    /// Day number, including fractional day.
    pub d: f64,
    /// Mean anomaly, degrees in [0, 360).
    pub mean_anomaly_deg: f64,
    /// Orbital eccentricity.
    pub eccentricity: f64,
    /// Obliquity of the ecliptic, degrees.
    pub obliquity_deg: f64,
    /// Argument of perihelion, degrees in [0, 360).
    pub perihelion_deg: f64,
}

impl OrbitalElements {
    /// Mean longitude of the sun (mean anomaly + argument of perihelion).
    pub fn mean_longitude_deg(&self) -> f64 {
        normalize_deg(self.mean_anomaly_deg + self.perihelion_deg)
    }
}

/// Plane-of-orbit rectangular coordinates plus the derived true longitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EclipticCoords {
    pub x_au: f64,
    pub y_au: f64,
    pub r_au: f64,
    pub true_longitude_deg: f64,
}

/// Equatorial rectangular coordinates plus right ascension / declination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquatorialCoords {
    pub x_equat: f64,
    pub y_equat: f64,
    pub z_equat: f64,
    pub right_ascension_deg: f64,
    pub declination_deg: f64,
    pub r_au: f64,
}

/// Topocentric unit vector plus azimuth / altitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizontalCoords {
    pub x_hor: f64,
    pub y_hor: f64,
    pub z_hor: f64,
    /// Azimuth, degrees in [0, 360), measured from north through east.
    pub azimuth_deg: f64,
    /// Altitude above the horizon, degrees in [-90, 90].
    pub altitude_deg: f64,
}

/// A shadow-casting panel: mount height, panel length, tilt from vertical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccluderSpec {
    pub height_m: f64,
    pub length_m: f64,
    pub tilt_deg: f64,
}

impl OccluderSpec {
    pub fn new(height_m: f64, length_m: f64, tilt_deg: f64) -> Result<Self> {
        if height_m < 0.0 || length_m < 0.0 {
            return Err(Error::InvalidOccluder(
                "height and length must be non-negative".into(),
            ));
        }
        if height_m == 0.0 && length_m == 0.0 {
            return Err(Error::InvalidOccluder(
                "height and length cannot both be zero".into(),
            ));
        }
        if !(0.0..=90.0).contains(&tilt_deg) {
            return Err(Error::InvalidOccluder(format!(
                "tilt {tilt_deg} out of [0, 90]"
            )));
        }
        Ok(Self {
            height_m,
            length_m,
            tilt_deg,
        })
    }
}

/// Full sun state for one instant and observer: azimuth/altitude plus every
/// intermediate ephemeris quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarState {
    pub elements: OrbitalElements,
    pub ecliptic: EclipticCoords,
    pub equatorial: EquatorialCoords,
    pub horizontal: HorizontalCoords,
}

impl SolarState {
    pub fn azimuth_deg(&self) -> f64 {
        self.horizontal.azimuth_deg
    }
    pub fn altitude_deg(&self) -> f64 {
        self.horizontal.altitude_deg
    }
}

pub fn normalize_deg(angle: f64) -> f64 {
    angle.rem_euclid(360.0)
}

/// Day number since the 1999-12-31 epoch, with the fractional day appended.
pub fn day_number(t: CivilInstant) -> f64 {
    let y = t.year as i64;
    let m = t.month as i64;
    let day = t.day as i64;
    let whole = 367 * y - 7 * (y + (m + 9) / 12) / 4 + 275 * m / 9 + day - 730530;
    whole as f64 + t.hour_utc / 24.0
}

/// Low-precision orbital elements at day number `d`.
pub fn orbital_elements(d: f64) -> OrbitalElements {
    OrbitalElements {
        d,
        mean_anomaly_deg: normalize_deg(356.0470 + 0.9856002585 * d),
        eccentricity: 0.016709 - 1.151e-9 * d,
        obliquity_deg: 23.4393 - 3.563e-7 * d,
        perihelion_deg: normalize_deg(282.9404 + 4.70935e-5 * d),
    }
}

/// One-step eccentric anomaly (no Kepler iteration), degrees in, degrees out.
pub fn eccentric_anomaly(mean_anomaly_deg: f64, eccentricity: f64) -> f64 {
    let m = mean_anomaly_deg * DEG;
    mean_anomaly_deg
        + (eccentricity * m.sin() * (1.0 + eccentricity * m.cos())) / DEG
}

/// Rectangular coordinates in the orbital plane and the true longitude.
pub fn ecliptic_coords(
    eccentric_anomaly_deg: f64,
    eccentricity: f64,
    perihelion_deg: f64,
) -> EclipticCoords {
    let e_rad = eccentric_anomaly_deg * DEG;
    let x = e_rad.cos() - eccentricity;
    let y = e_rad.sin() * (1.0 - eccentricity * eccentricity).sqrt();
    let r = x.hypot(y);
    let true_anomaly_deg = y.atan2(x) / DEG;
    EclipticCoords {
        x_au: x,
        y_au: y,
        r_au: r,
        true_longitude_deg: normalize_deg(true_anomaly_deg + perihelion_deg),
    }
}

/// Rotate the ecliptic position of the sun into equatorial coordinates and
/// derive right ascension / declination (quadrant-correct atan2 throughout).
pub fn to_equatorial(ecl: &EclipticCoords, obliquity_deg: f64) -> EquatorialCoords {
    let lon = ecl.true_longitude_deg * DEG;
    let x = ecl.r_au * lon.cos();
    let y = ecl.r_au * lon.sin();
    let obl = obliquity_deg * DEG;
    let x_equat = x;
    let y_equat = y * obl.cos();
    let z_equat = y * obl.sin();
    EquatorialCoords {
        x_equat,
        y_equat,
        z_equat,
        right_ascension_deg: normalize_deg(y_equat.atan2(x_equat) / DEG),
        declination_deg: (z_equat / ecl.r_au).asin() / DEG,
        r_au: ecl.r_au,
    }
}

/// Hour-angle rotation into the local horizontal frame.
///
/// Sidereal time uses the sun's mean longitude (GMST0 = L/15 + 12h), the
/// standard companion of the low-precision element set. Azimuth follows the
/// atan2(y_hor, x_hor) + 180 deg convention, so 0 deg is north.
pub fn to_horizontal(
    eq: &EquatorialCoords,
    elements: &OrbitalElements,
    obs: Observer,
    t: CivilInstant,
) -> HorizontalCoords {
    let gmst0_hours = elements.mean_longitude_deg() / 15.0 + 12.0;
    let lst_hours = gmst0_hours + t.hour_utc + obs.longitude_deg / 15.0;
    let hour_angle = (normalize_deg(15.0 * lst_hours - eq.right_ascension_deg)) * DEG;
    let decl = eq.declination_deg * DEG;
    let x = hour_angle.cos() * decl.cos();
    let y = hour_angle.sin() * decl.cos();
    let z = decl.sin();
    let lat = obs.latitude_deg * DEG;
    let x_hor = x * lat.sin() - z * lat.cos();
    let y_hor = y;
    let z_hor = x * lat.cos() + z * lat.sin();
    HorizontalCoords {
        x_hor,
        y_hor,
        z_hor,
        azimuth_deg: normalize_deg(y_hor.atan2(x_hor) / DEG + 180.0),
        altitude_deg: z_hor.asin() / DEG,
    }
}

/// Sun azimuth/altitude for an instant and observer, with all intermediates.
pub fn sun_position(t: CivilInstant, obs: Observer) -> SolarState {
    let d = day_number(t);
    let elements = orbital_elements(d);
    let e_anom = eccentric_anomaly(elements.mean_anomaly_deg, elements.eccentricity);
    let ecliptic = ecliptic_coords(e_anom, elements.eccentricity, elements.perihelion_deg);
    let equatorial = to_equatorial(&ecliptic, elements.obliquity_deg);
    let horizontal = to_horizontal(&equatorial, &elements, obs, t);
    SolarState {
        elements,
        ecliptic,
        equatorial,
        horizontal,
    }
}

/// Shadow length of a tilted panel: SL = h/tan(ALT) + L sin(theta)/sin(ALT).
pub fn shadow_length(occ: &OccluderSpec, altitude_deg: f64) -> Result<f64> {
    if altitude_deg <= 0.0 {
        return Err(Error::SunBelowHorizon(altitude_deg));
    }
    let alt = altitude_deg * DEG;
    Ok(occ.height_m / alt.tan() + occ.length_m * (occ.tilt_deg * DEG).sin() / alt.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instant(y: i32, mo: u32, d: u32, h: f64) -> CivilInstant {
        CivilInstant::new(y, mo, d, h).unwrap()
    }

    #[test]
    fn day_number_reference_dates() {
        assert_eq!(day_number(instant(2000, 1, 1, 0.0)), 1.0);
        assert_eq!(day_number(instant(1999, 12, 31, 0.0)), 0.0);
        assert_eq!(day_number(instant(2024, 6, 21, 0.0)), 8939.0);
    }

    #[test]
    fn day_number_fractional_hours() {
        assert_eq!(day_number(instant(2000, 1, 1, 12.0)), 1.5);
    }

    #[test]
    fn invalid_dates_rejected() {
        assert!(CivilInstant::new(2023, 2, 29, 0.0).is_err());
        assert!(CivilInstant::new(2024, 2, 29, 0.0).is_ok());
        assert!(CivilInstant::new(2023, 13, 1, 0.0).is_err());
        assert!(CivilInstant::new(2023, 4, 31, 0.0).is_err());
        assert!(CivilInstant::new(2023, 1, 1, 24.0).is_err());
    }

    #[test]
    fn elements_at_epoch() {
        let el = orbital_elements(0.0);
        assert!((el.mean_anomaly_deg - 356.0470).abs() < 1e-12);
        assert!((el.eccentricity - 0.016709).abs() < 1e-12);
        assert!((el.obliquity_deg - 23.4393).abs() < 1e-12);
    }

    #[test]
    fn eccentricity_bounded_over_two_centuries() {
        for d in [-36525.0, -10000.0, 0.0, 10000.0, 36525.0] {
            let e = orbital_elements(d).eccentricity;
            assert!((0.016..0.017).contains(&e), "e = {e} at d = {d}");
        }
    }

    #[test]
    fn eccentric_anomaly_fixed_points() {
        assert!((eccentric_anomaly(0.0, 0.016709) - 0.0).abs() < 1e-12);
        assert!((eccentric_anomaly(180.0, 0.016709) - 180.0).abs() < 1e-9);
        let e90 = eccentric_anomaly(90.0, 0.016709);
        assert!((e90 - (90.0 + 0.016709 / DEG)).abs() < 1e-9);
        assert!((e90 - 90.957).abs() < 1e-3);
    }

    #[test]
    fn ecliptic_perihelion_and_quadrature() {
        let p = ecliptic_coords(0.0, 0.016709, 0.0);
        assert!((p.x_au - (1.0 - 0.016709)).abs() < 1e-12);
        assert_eq!(p.y_au, 0.0);
        let q = ecliptic_coords(90.0, 0.016709, 0.0);
        assert!((q.x_au - (-0.016709)).abs() < 1e-12);
        assert!((q.y_au - 0.99986).abs() < 1e-5);
    }

    #[test]
    fn radius_stays_on_ellipse() {
        for e_deg in (0..360).step_by(7) {
            let c = ecliptic_coords(e_deg as f64, 0.016709, 282.9);
            assert!(c.r_au > 0.9 && c.r_au < 1.1);
            assert!(c.r_au > 1.0 - 0.016709 - 1e-9 && c.r_au < 1.0 + 0.016709 + 1e-9);
        }
    }

    #[test]
    fn equatorial_identity_rotation() {
        let ecl = EclipticCoords {
            x_au: 0.3,
            y_au: 0.9,
            r_au: (0.3f64 * 0.3 + 0.9 * 0.9).sqrt(),
            true_longitude_deg: 71.565,
        };
        let eq = to_equatorial(&ecl, 0.0);
        assert!((eq.declination_deg).abs() < 1e-9);
        assert!((eq.z_equat).abs() < 1e-12);
    }

    #[test]
    fn equatorial_equinox_and_solstice_directions() {
        let vernal = EclipticCoords {
            x_au: 1.0,
            y_au: 0.0,
            r_au: 1.0,
            true_longitude_deg: 0.0,
        };
        let eq = to_equatorial(&vernal, 23.4393);
        assert!(eq.right_ascension_deg.abs() < 1e-9);
        assert!(eq.declination_deg.abs() < 1e-9);

        let solstice = EclipticCoords {
            x_au: 0.0,
            y_au: 1.0,
            r_au: 1.0,
            true_longitude_deg: 90.0,
        };
        let eq = to_equatorial(&solstice, 23.4393);
        assert!((eq.declination_deg - 23.4393).abs() < 1e-9);
    }

    #[test]
    fn altitude_at_culmination() {
        // Sun crossing the meridian: ALT = 90 - |lat - Decl|.
        let obs = Observer::new(34.0, 0.0).unwrap();
        let t = instant(2024, 3, 20, 12.0);
        // Find the culmination numerically and check the geometry there.
        let mut best = (0.0f64, -90.0f64);
        for step in 0..1440 {
            let h = step as f64 / 60.0;
            let s = sun_position(instant(2024, 3, 20, h), obs);
            if s.altitude_deg() > best.1 {
                best = (h, s.altitude_deg());
            }
        }
        let s = sun_position(instant(2024, 3, 20, best.0), obs);
        let expected = 90.0 - (34.0 - s.equatorial.declination_deg).abs();
        assert!(
            (best.1 - expected).abs() < 0.05,
            "culmination alt {} vs {expected}",
            best.1
        );
        let _ = t;
    }

    #[test]
    fn horizontal_vector_is_unit() {
        let obs = Observer::new(34.0, -82.0).unwrap();
        let s = sun_position(instant(2024, 6, 21, 17.0), obs);
        let n = s.horizontal.x_hor * s.horizontal.x_hor
            + s.horizontal.y_hor * s.horizontal.y_hor
            + s.horizontal.z_hor * s.horizontal.z_hor;
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn summer_noon_altitude_band() {
        // Local solar noon at 34N/82W in June is near 17:30 UTC; altitude
        // should be close to 90 - (34 - 23.44).
        let obs = Observer::new(34.0, -82.0).unwrap();
        let s = sun_position(instant(2024, 6, 21, 17.5), obs);
        assert!(
            (s.altitude_deg() - 79.4).abs() < 1.0,
            "alt = {}",
            s.altitude_deg()
        );
    }

    #[test]
    fn shadow_length_unit_cases() {
        let vertical = OccluderSpec::new(10.0, 0.0, 0.0).unwrap();
        assert!((shadow_length(&vertical, 45.0).unwrap() - 10.0).abs() < 1e-12);
        let horizontal = OccluderSpec::new(0.0, 10.0, 90.0).unwrap();
        assert!((shadow_length(&horizontal, 30.0).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn shadow_undefined_below_horizon() {
        let occ = OccluderSpec::new(10.0, 10.0, 90.0).unwrap();
        assert!(matches!(
            shadow_length(&occ, -3.0),
            Err(Error::SunBelowHorizon(_))
        ));
        assert!(shadow_length(&occ, 0.0).is_err());
    }

    #[test]
    fn shadow_length_decreasing_in_altitude() {
        let occ = OccluderSpec::new(10.0, 10.0, 45.0).unwrap();
        let mut prev = f64::INFINITY;
        for alt in 1..90 {
            let sl = shadow_length(&occ, alt as f64).unwrap();
            assert!(sl < prev, "not decreasing at alt {alt}");
            prev = sl;
        }
    }

    #[test]
    fn declination_bounded_by_obliquity() {
        let obs = Observer::new(0.0, 0.0).unwrap();
        for year in [1950, 1984, 2024, 2061, 2100] {
            for month in 1..=12 {
                let t = instant(year, month, 15, 6.0);
                let s = sun_position(t, obs);
                assert!(
                    s.equatorial.declination_deg.abs() <= s.elements.obliquity_deg,
                    "decl {} at {year}-{month}",
                    s.equatorial.declination_deg
                );
            }
        }
    }

    #[test]
    fn altitude_unimodal_over_a_day() {
        let obs = Observer::new(34.0, -82.0).unwrap();
        let raw: Vec<f64> = (0..288)
            .map(|i| sun_position(instant(2024, 3, 20, i as f64 / 12.0), obs).altitude_deg())
            .collect();
        // The day is circular: rotate so the series starts at local midnight
        // (the minimum), then it must rise to one peak and fall after it.
        let start = raw
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let alts: Vec<f64> = (0..raw.len()).map(|i| raw[(start + i) % raw.len()]).collect();
        let peak = alts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        for w in alts[..peak].windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        for w in alts[peak..].windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }
}
