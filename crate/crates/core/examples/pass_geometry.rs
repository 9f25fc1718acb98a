//! Prints the visibility window of the default pass and samples elevation,
//! range, Doppler and free-space pathloss along it.
//!
//! `cargo run --release --example pass_geometry -- [samples]`

use ttdrl::environment::EnvConfig;
use ttdrl::geometry::{doppler, pass_window, pathloss, propagate};

fn main() {
    let samples: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let cfg = EnvConfig::default();
    let Some(win) = pass_window(&cfg.orbit, cfg.min_elevation) else {
        println!("the UE never sees the satellite above {:.1}°", cfg.min_elevation.to_degrees());
        return;
    };
    println!(
        "pass: slots {}..{} ({} slots, {:.1} s), orbital period {:.1} min",
        win.first_slot,
        win.first_slot + win.len,
        win.len,
        win.len as f64 * cfg.orbit.slot_duration,
        cfg.orbit.period() / 60.0
    );
    println!("{:>10} {:>9} {:>11} {:>11} {:>10}", "slot", "elev°", "range km", "doppler kHz", "PL dB");
    for k in 0..=samples {
        let slot = win.first_slot + (win.len - 1) * k / samples.max(1);
        let g = propagate(&cfg.orbit, slot);
        println!(
            "{slot:>10} {:>9.2} {:>11.1} {:>11.2} {:>10.2}",
            g.elevation.to_degrees(),
            g.distance / 1e3,
            doppler(g.relative_speed, cfg.carrier_freq) / 1e3,
            10.0 * pathloss(g.distance, cfg.carrier_freq).log10()
        );
    }
}
