use approx::assert_abs_diff_eq;
use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use proptest::prelude::*;

use ttdrl::geometry::{
    compute_angles, doppler, elevation_angle, norm, pathloss, propagate, sub, Direction, GeometrySnapshot, OrbitConfig,
    PanelFrame, Vec3, SPEED_OF_LIGHT,
};

fn v(a: Vec3) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

/// Two-body acceleration integrated with classical RK4.
fn rk4_orbit(mu: f64, pos: Vector3<f64>, vel: Vector3<f64>, t: f64, steps: usize) -> Vector3<f64> {
    let acc = |r: &Vector3<f64>| -mu * r / r.norm().powi(3);
    let h = t / steps as f64;
    let (mut r, mut u) = (pos, vel);
    for _ in 0..steps {
        let (k1r, k1v) = (u, acc(&r));
        let (k2r, k2v) = (u + 0.5 * h * k1v, acc(&(r + 0.5 * h * k1r)));
        let (k3r, k3v) = (u + 0.5 * h * k2v, acc(&(r + 0.5 * h * k2r)));
        let (k4r, k4v) = (u + h * k3v, acc(&(r + h * k3r)));
        r += h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
        u += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    r
}

#[test]
fn full_period_returns_to_start() {
    let cfg = OrbitConfig {
        slot_duration: 1.0,
        ..OrbitConfig::default()
    };
    let p = cfg.period();
    let r0 = propagate(&cfg, 0).sat_position;
    let timed = OrbitConfig {
        slot_duration: p,
        ..cfg
    };
    let r1 = propagate(&timed, 1).sat_position;
    assert!(norm(sub(r1, r0)) < 1e-6 * cfg.radius());
}

#[test]
fn propagator_matches_numeric_integration() {
    let cfg = OrbitConfig::default();
    let g0 = propagate(&cfg, 0);
    let t = cfg.period() / 2.0;
    let numeric = rk4_orbit(cfg.mu, v(g0.sat_position), v(g0.sat_velocity), t, 20_000);
    let closed = propagate(
        &OrbitConfig {
            slot_duration: t,
            ..cfg
        },
        1,
    );
    assert!((numeric - v(closed.sat_position)).norm() < 1e-6 * cfg.radius());
    let numeric_full = rk4_orbit(cfg.mu, v(g0.sat_position), v(g0.sat_velocity), cfg.period(), 40_000);
    assert!((numeric_full - v(g0.sat_position)).norm() < 1e-6 * cfg.radius());
}

#[test]
fn orbital_speed_range_for_leo_altitudes() {
    for alt in [500e3, 800e3, 1_200e3] {
        let s = OrbitConfig {
            altitude: alt,
            ..OrbitConfig::default()
        }
        .orbital_speed();
        assert!((7_000.0..=7_800.0).contains(&s), "{alt}: {s}");
    }
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[test]
fn free_space_pathloss_reference_points() {
    let oracle = |d: f64, f: f64| -(20.0 * d.log10() + 20.0 * f.log10() - 147.55);
    assert_abs_diff_eq!(db(pathloss(1_000.0, 4e9)), -104.49, epsilon = 0.01);
    assert_abs_diff_eq!(db(pathloss(1_000.0, 4e9)), oracle(1_000.0, 4e9), epsilon = 0.01);
    assert_abs_diff_eq!(db(pathloss(600e3, 4e9)), -160.05, epsilon = 0.01);
    let ratio = pathloss(2_000.0, 4e9) / pathloss(1_000.0, 4e9);
    assert_abs_diff_eq!(ratio, 0.25, epsilon = 1e-15);
}

#[test]
fn doppler_reference_points() {
    assert_eq!(doppler(0.0, 4e9), 0.0);
    assert_abs_diff_eq!(doppler(7_500.0, 4e9), 100.07e3, epsilon = 1.0);
}

#[test]
fn elevation_zenith_and_horizon() {
    let ue = [6_371e3, 0.0, 0.0];
    assert_abs_diff_eq!(elevation_angle([7_000e3, 0.0, 0.0], ue).unwrap(), std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    assert_abs_diff_eq!(elevation_angle([6_371e3, 1e6, 0.0], ue).unwrap(), 0.0, epsilon = 1e-12);
    assert!(elevation_angle(ue, ue).is_err());
}

fn unit3() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("nonzero", |(a, b, c)| a * a + b * b + c * c > 1e-2)
        .prop_map(|(a, b, c)| {
            let n = (a * a + b * b + c * c).sqrt();
            [a / n, b / n, c / n]
        })
}

fn rotate(r: &Rotation3<f64>, a: Vec3) -> Vec3 {
    let x = r * v(a);
    [x[0], x[1], x[2]]
}

proptest! {
    #[test]
    fn elevation_matches_acos_oracle(ue_dir in unit3(), off in unit3(), dist in 1e5f64..3e6) {
        let ue = ttdrl::geometry::scale(ue_dir, 6_371e3);
        let sat = [ue[0] + off[0] * dist, ue[1] + off[1] * dist, ue[2] + off[2] * dist];
        let los = v(sat) - v(ue);
        let zenith_angle = (los.dot(&v(ue)) / (los.norm() * v(ue).norm())).clamp(-1.0, 1.0).acos();
        let oracle = std::f64::consts::FRAC_PI_2 - zenith_angle;
        prop_assert!((elevation_angle(sat, ue).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn elevation_is_rotation_invariant(ue_dir in unit3(), off in unit3(), axis in unit3(), angle in -3.14f64..3.14) {
        let ue = ttdrl::geometry::scale(ue_dir, 6_371e3);
        let sat = [ue[0] + off[0] * 1e6, ue[1] + off[1] * 1e6, ue[2] + off[2] * 1e6];
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(v(axis)), angle);
        let a = elevation_angle(sat, ue).unwrap();
        let b = elevation_angle(rotate(&rot, sat), rotate(&rot, ue)).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn pathloss_decreases_in_distance_and_frequency(d in 1e3f64..2e6, f in 1e9f64..3e10, k in 1.001f64..4.0) {
        prop_assert!(pathloss(d * k, f) < pathloss(d, f));
        prop_assert!(pathloss(d, f * k) < pathloss(d, f));
    }

    #[test]
    fn doppler_is_bounded_by_speed(speed in -8e3f64..8e3, f in 1e9f64..3e10) {
        prop_assert!(doppler(speed, f).abs() <= speed.abs() * f / SPEED_OF_LIGHT * (1.0 + 1e-15));
    }

    #[test]
    fn propagate_is_deterministic(slot in 0u64..1_000_000) {
        let cfg = OrbitConfig::default();
        let a = propagate(&cfg, slot);
        let b = propagate(&cfg, slot);
        prop_assert_eq!(a.sat_position.map(f64::to_bits), b.sat_position.map(f64::to_bits));
        prop_assert_eq!(a.elevation.to_bits(), b.elevation.to_bits());
    }

    #[test]
    fn link_angles_match_rotation_matrix_oracle(slot in 18_641u64..42_224) {
        let cfg = OrbitConfig::default();
        let g = propagate(&cfg, slot);
        let sat = PanelFrame::satellite_nadir(&g);
        let ue = PanelFrame::ue_zenith(g.ue_position, cfg.orbit_normal());
        let angles = compute_angles(&g, &sat, &ue);
        for (frame, dir, los) in [
            (sat, angles.aod, v(g.ue_position) - v(g.sat_position)),
            (ue, angles.aoa, v(g.sat_position) - v(g.ue_position)),
        ] {
            let m = Matrix3::from_columns(&[v(frame.x), v(frame.y), v(frame.z)]);
            prop_assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-12);
            let local = m.transpose() * los.normalize();
            let el = local[1].clamp(-1.0, 1.0).acos();
            let az = local[2].atan2(local[0]).rem_euclid(2.0 * std::f64::consts::PI);
            prop_assert!((dir.elevation - el).abs() < 1e-10);
            prop_assert!((dir.azimuth - az).abs() < 1e-10);
            let back = m * v(dir.to_local());
            prop_assert!((back - los.normalize()).norm() < 1e-10);
        }
    }
}

#[test]
fn zenith_geometry_gives_boresight_on_both_panels() {
    let ue = [6_371e3, 0.0, 0.0];
    let g = GeometrySnapshot {
        sat_position: [6_971e3, 0.0, 0.0],
        sat_velocity: [0.0, 7_500.0, 0.0],
        ue_position: ue,
        distance: 600e3,
        elevation: std::f64::consts::FRAC_PI_2,
        relative_speed: 0.0,
    };
    let sat = PanelFrame::satellite_nadir(&g);
    let uep = PanelFrame::ue_zenith(ue, [0.0, 0.0, 1.0]);
    let a = compute_angles(&g, &sat, &uep);
    assert_abs_diff_eq!(a.aod.elevation, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    assert_abs_diff_eq!(a.aoa.elevation, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
}

#[test]
fn mirrored_ue_reflects_departure_azimuth() {
    let cfg = OrbitConfig::default();
    let n = v(cfg.orbit_normal());
    for slot in [20_000u64, 30_000, 40_000] {
        let g = propagate(&cfg, slot);
        let ue = v(g.ue_position);
        let m = ue - 2.0 * ue.dot(&n) * n;
        let mirrored = GeometrySnapshot {
            ue_position: [m[0], m[1], m[2]],
            ..g
        };
        let sat = PanelFrame::satellite_nadir(&g);
        let dummy = PanelFrame::ue_zenith(g.ue_position, cfg.orbit_normal());
        let a = compute_angles(&g, &sat, &dummy).aod;
        let b = compute_angles(&mirrored, &sat, &dummy).aod;
        assert_abs_diff_eq!(a.elevation, b.elevation, epsilon = 1e-12);
        let reflected = Direction {
            azimuth: (std::f64::consts::PI - a.azimuth).rem_euclid(2.0 * std::f64::consts::PI),
            elevation: a.elevation,
        };
        assert_abs_diff_eq!(b.azimuth, reflected.azimuth, epsilon = 1e-10);
    }
}
