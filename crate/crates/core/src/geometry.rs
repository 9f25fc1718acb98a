//! Circular-orbit propagation and LEO–UE link geometry.
//!
//! The Earth is a non-rotating sphere and the UE is fixed on its surface.
//! All positions are Earth-centred Cartesian coordinates in meters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Circular orbit plus the static UE site it serves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitConfig {
    /// Altitude above the spherical Earth (m). Not given by the paper; 600 km is a configuration choice.
    pub altitude: f64,
    /// Inclination of the orbital plane relative to the equator (rad).
    pub inclination: f64,
    /// Argument of latitude at slot 0 (rad).
    pub initial_phase: f64,
    pub earth_radius: f64,
    /// Gravitational parameter (m³/s²).
    pub mu: f64,
    /// Duration of one decision slot (s).
    pub slot_duration: f64,
    /// UE geodetic latitude on the sphere (rad).
    pub ue_latitude: f64,
    /// UE longitude (rad).
    pub ue_longitude: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            altitude: 600e3,
            inclination: 53f64.to_radians(),
            initial_phase: -0.3,
            earth_radius: 6_371e3,
            mu: 3.986e14,
            slot_duration: 0.01,
            ue_latitude: 0.0,
            ue_longitude: 0.05,
        }
    }
}

impl OrbitConfig {
    pub fn radius(&self) -> f64 {
        self.earth_radius + self.altitude
    }

    pub fn orbital_speed(&self) -> f64 {
        (self.mu / self.radius()).sqrt()
    }

    /// Mean motion (rad/s).
    pub fn angular_rate(&self) -> f64 {
        (self.mu / self.radius().powi(3)).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.angular_rate()
    }

    pub fn ue_position(&self) -> Vec3 {
        let (sl, cl) = self.ue_latitude.sin_cos();
        let (so, co) = self.ue_longitude.sin_cos();
        scale([cl * co, cl * so, sl], self.earth_radius)
    }

    /// Unit normal of the orbital plane (direction of angular momentum).
    pub fn orbit_normal(&self) -> Vec3 {
        let (si, ci) = self.inclination.sin_cos();
        [0.0, -si, ci]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.altitude > 0.0) || !(self.slot_duration > 0.0) || !(self.earth_radius > 0.0) {
            return Err(Error::InvalidArgument(
                "altitude, slot_duration and earth_radius must be positive".into(),
            ));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidArgument("mu must be positive".into()));
        }
        Ok(())
    }

    fn position_velocity(&self, time: f64) -> (Vec3, Vec3) {
        let r = self.radius();
        let u = self.initial_phase + self.angular_rate() * time;
        let (su, cu) = u.sin_cos();
        let (si, ci) = self.inclination.sin_cos();
        let v = self.orbital_speed();
        (
            [r * cu, r * su * ci, r * su * si],
            [-v * su, v * cu * ci, v * cu * si],
        )
    }
}

/// Satellite/UE geometry at one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySnapshot {
    pub sat_position: Vec3,
    pub sat_velocity: Vec3,
    pub ue_position: Vec3,
    pub distance: f64,
    pub elevation: f64,
    /// Range rate (m/s); positive while the satellite recedes.
    pub relative_speed: f64,
}

/// Position of the satellite at `slot * slot_duration` seconds.
pub fn propagate(config: &OrbitConfig, slot: u64) -> GeometrySnapshot {
    let (sat, vel) = config.position_velocity(slot as f64 * config.slot_duration);
    let ue = config.ue_position();
    let los = sub(sat, ue);
    let distance = norm(los);
    let elevation = (dot(los, normalize(ue)) / distance).clamp(-1.0, 1.0).asin();
    GeometrySnapshot {
        sat_position: sat,
        sat_velocity: vel,
        ue_position: ue,
        distance,
        elevation,
        relative_speed: dot(los, vel) / distance,
    }
}

/// Angle between the UE's local horizontal plane and the UE→satellite ray.
pub fn elevation_angle(sat: Vec3, ue: Vec3) -> Result<f64> {
    let los = sub(sat, ue);
    let d = norm(los);
    if d == 0.0 || norm(ue) == 0.0 {
        return Err(Error::Geometry("satellite and UE positions coincide".into()));
    }
    Ok((dot(los, ue) / (d * norm(ue))).clamp(-1.0, 1.0).asin())
}

/// Free-space pathloss as a linear power gain.
pub fn pathloss(distance: f64, carrier_freq: f64) -> f64 {
    let x = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * distance * carrier_freq);
    x * x
}

/// Doppler shift for a closing speed (positive while approaching).
pub fn doppler(relative_speed: f64, carrier_freq: f64) -> f64 {
    relative_speed * carrier_freq / SPEED_OF_LIGHT
}

/// Direction in a panel frame. Elevation is measured from the panel y-axis and
/// azimuth in the x–z plane from the x-axis, so that the unit vector is
/// `(sinφ cosθ, cosφ, sinφ sinθ)` and boresight (panel z) is `(π/2, π/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    pub const BORESIGHT: Direction = Direction {
        azimuth: std::f64::consts::FRAC_PI_2,
        elevation: std::f64::consts::FRAC_PI_2,
    };

    pub fn from_local(v: Vec3) -> Self {
        let v = normalize(v);
        let elevation = v[1].clamp(-1.0, 1.0).acos();
        let mut azimuth = v[2].atan2(v[0]);
        if azimuth < 0.0 {
            azimuth += 2.0 * std::f64::consts::PI;
        }
        if azimuth >= 2.0 * std::f64::consts::PI {
            azimuth = 0.0;
        }
        Self { azimuth, elevation }
    }

    pub fn to_local(self) -> Vec3 {
        let (st, ct) = self.azimuth.sin_cos();
        let (sp, cp) = self.elevation.sin_cos();
        [sp * ct, cp, sp * st]
    }
}

/// Orthonormal antenna-panel frame; `z` is the boresight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelFrame {
    pub x: Vec3,
    pub y: Vec3,
    pub z: Vec3,
}

impl PanelFrame {
    /// Builds a right-handed frame from a boresight and a hint for the y-axis.
    pub fn from_boresight(z: Vec3, y_hint: Vec3) -> Result<Self> {
        let z = normalize(z);
        let y = sub(y_hint, scale(z, dot(y_hint, z)));
        if norm(y) < 1e-12 {
            return Err(Error::Geometry("y-axis hint is parallel to boresight".into()));
        }
        let y = normalize(y);
        Ok(Self {
            x: cross(y, z),
            y,
            z,
        })
    }

    /// Nadir-pointing satellite panel with y along the velocity; x is then the orbit normal.
    pub fn satellite_nadir(snapshot: &GeometrySnapshot) -> Self {
        Self::from_boresight(scale(snapshot.sat_position, -1.0), snapshot.sat_velocity)
            .expect("circular-orbit velocity is orthogonal to the radius")
    }

    /// Zenith-pointing UE panel whose x-axis is the horizontal projection of the orbit normal.
    pub fn ue_zenith(ue_position: Vec3, orbit_normal: Vec3) -> Self {
        let z = normalize(ue_position);
        let xh = sub(orbit_normal, scale(z, dot(orbit_normal, z)));
        let x = if norm(xh) < 1e-9 {
            normalize(cross([0.0, 0.0, 1.0], z))
        } else {
            normalize(xh)
        };
        Self {
            x,
            y: cross(z, x),
            z,
        }
    }

    pub fn to_local(&self, v: Vec3) -> Vec3 {
        [dot(v, self.x), dot(v, self.y), dot(v, self.z)]
    }

    pub fn to_global(&self, v: Vec3) -> Vec3 {
        [
            self.x[0] * v[0] + self.y[0] * v[1] + self.z[0] * v[2],
            self.x[1] * v[0] + self.y[1] * v[1] + self.z[1] * v[2],
            self.x[2] * v[0] + self.y[2] * v[1] + self.z[2] * v[2],
        ]
    }
}

/// LOS departure and arrival directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkAngles {
    pub aod: Direction,
    pub aoa: Direction,
}

pub fn compute_angles(
    snapshot: &GeometrySnapshot,
    sat_panel: &PanelFrame,
    ue_panel: &PanelFrame,
) -> LinkAngles {
    let los = sub(snapshot.ue_position, snapshot.sat_position);
    LinkAngles {
        aod: Direction::from_local(sat_panel.to_local(los)),
        aoa: Direction::from_local(ue_panel.to_local(scale(los, -1.0))),
    }
}

/// Default panel frames for a snapshot: nadir satellite panel, zenith UE panel.
pub fn default_panels(config: &OrbitConfig, snapshot: &GeometrySnapshot) -> (PanelFrame, PanelFrame) {
    (
        PanelFrame::satellite_nadir(snapshot),
        PanelFrame::ue_zenith(snapshot.ue_position, config.orbit_normal()),
    )
}

/// Contiguous run of slots with elevation at or above a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassWindow {
    pub first_slot: u64,
    pub len: u64,
}

/// First visibility window starting at or after slot 0.
///
/// Visibility reduces to `ρ cos(u − ψ) ≥ cos λ`, where `u` is the argument of
/// latitude and `λ` the Earth central angle at the elevation threshold; the
/// closed-form window is then snapped to slots with exact elevation checks.
pub fn pass_window(config: &OrbitConfig, min_elevation: f64) -> Option<PassWindow> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = config.radius();
    let re = config.earth_radius;
    let lambda = (re * min_elevation.cos() / r).acos() - min_elevation;
    let ue = normalize(config.ue_position());
    let (si, ci) = config.inclination.sin_cos();
    let a = ue[0];
    let b = ci * ue[1] + si * ue[2];
    let rho = a.hypot(b);
    if rho < lambda.cos() {
        return None;
    }
    let psi = b.atan2(a);
    let half = (lambda.cos() / rho).clamp(-1.0, 1.0).acos();
    let omega = config.angular_rate();
    let dt = config.slot_duration;
    let visible = |slot: u64| propagate(config, slot).elevation >= min_elevation;

    let offset = (config.initial_phase - (psi - half)).rem_euclid(two_pi);
    let mut first = if offset <= 2.0 * half {
        0
    } else {
        ((two_pi - offset) / omega / dt).ceil() as u64
    };
    for _ in 0..4 {
        if first > 0 && visible(first - 1) {
            first -= 1;
        }
    }
    while !visible(first) {
        first += 1;
        if first as f64 * dt > config.period() * 2.0 {
            return None;
        }
    }
    if first > 0 {
        while visible(first - 1) {
            first -= 1;
            if first == 0 {
                break;
            }
        }
    }
    let start_u = config.initial_phase + omega * first as f64 * dt;
    let remaining = (psi + half - start_u).rem_euclid(two_pi);
    let mut len = ((remaining / omega / dt).floor() as u64).max(1);
    while len > 1 && !visible(first + len - 1) {
        len -= 1;
    }
    while visible(first + len) {
        len += 1;
    }
    Some(PassWindow { first_slot: first, len })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn orbital_speed_at_600_km() {
        let cfg = OrbitConfig {
            mu: 3.986e14,
            ..OrbitConfig::default()
        };
        assert_abs_diff_eq!(cfg.orbital_speed(), (3.986e14f64 / 6.971e6).sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(cfg.orbital_speed(), 7561.7, epsilon = 0.5);
        let equatorial = OrbitConfig {
            earth_radius: 6_378.137e3,
            ..cfg
        };
        assert_abs_diff_eq!(equatorial.orbital_speed(), 7557.8, epsilon = 0.5);
    }

    #[test]
    fn slot_zero_is_initial_phase_point() {
        let cfg = OrbitConfig::default();
        let s = propagate(&cfg, 0);
        let r = cfg.radius();
        let u = cfg.initial_phase;
        let (si, ci) = cfg.inclination.sin_cos();
        let expected = [r * u.cos(), r * u.sin() * ci, r * u.sin() * si];
        for k in 0..3 {
            assert_eq!(s.sat_position[k], expected[k]);
        }
    }

    #[test]
    fn fspl_reference_values() {
        let db = |g: f64| 10.0 * g.log10();
        assert_abs_diff_eq!(db(pathloss(1_000.0, 4e9)), -104.49, epsilon = 0.01);
        assert_abs_diff_eq!(db(pathloss(600e3, 4e9)), -160.05, epsilon = 0.01);
        let ratio = pathloss(2_000.0, 4e9) / pathloss(1_000.0, 4e9);
        assert_abs_diff_eq!(ratio, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn doppler_reference_values() {
        assert_eq!(doppler(0.0, 4e9), 0.0);
        assert_abs_diff_eq!(doppler(7_500.0, 4e9), 100.07e3, epsilon = 1.0);
        assert_eq!(doppler(-7_500.0, 4e9), -doppler(7_500.0, 4e9));
    }

    #[test]
    fn zenith_and_horizon_elevations() {
        let ue = [6_371e3, 0.0, 0.0];
        assert_abs_diff_eq!(
            elevation_angle([7_000e3, 0.0, 0.0], ue).unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            elevation_angle([6_371e3, 1_000e3, 0.0], ue).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert!(elevation_angle(ue, ue).is_err());
    }

    #[test]
    fn zenith_pass_gives_boresight_angles() {
        let cfg = OrbitConfig {
            inclination: 0.0,
            initial_phase: 0.0,
            ue_longitude: 0.0,
            ..OrbitConfig::default()
        };
        let s = propagate(&cfg, 0);
        let (sp, up) = default_panels(&cfg, &s);
        let a = compute_angles(&s, &sp, &up);
        assert_abs_diff_eq!(a.aod.elevation, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(a.aoa.elevation, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn direction_round_trip() {
        let d = Direction {
            azimuth: 1.1,
            elevation: 0.7,
        };
        let back = Direction::from_local(d.to_local());
        assert_abs_diff_eq!(back.azimuth, 1.1, epsilon = 1e-14);
        assert_abs_diff_eq!(back.elevation, 0.7, epsilon = 1e-14);
    }

    #[test]
    fn default_orbit_has_a_pass() {
        let cfg = OrbitConfig::default();
        let w = pass_window(&cfg, std::f64::consts::FRAC_PI_6).unwrap();
        assert!(w.len > 1_000);
    }
}
