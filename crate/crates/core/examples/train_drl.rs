//! Trains one DRL variant at desk scale and prints moving-average progress.
//!
//! `cargo run --release --example train_drl -- [proposed|single_estimation|independent] [slots] [seed] [n_bar]`

use std::time::Instant;

use ttdrl::drl::{DrlConfig, Mode, Trainer};
use ttdrl::environment::EnvConfig;
use ttdrl::harness::moving_average;

fn main() -> ttdrl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = match args.first().map(String::as_str) {
        Some("single_estimation") => Mode::SingleEstimation,
        Some("independent") => Mode::Independent,
        _ => Mode::Proposed,
    };
    let slots: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let n_bar: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(8);

    let cfg = DrlConfig {
        mode,
        n_bar,
        ..DrlConfig::default()
    };
    let mut trainer = Trainer::new(EnvConfig::desk(), cfg, seed)?;
    let start = Instant::now();
    let log = trainer.run(slots)?;
    let elapsed = start.elapsed().as_secs_f64();

    let reward: Vec<f64> = log.iter().map(|r| r.reward_low).collect();
    let thr: Vec<f64> = log.iter().map(|r| r.throughput).collect();
    let ma_r = moving_average(&reward, 10_000)?;
    let ma_t = moving_average(&thr, 10)?;
    let step = (slots / 10).max(1) as usize;
    println!("mode={} seed={seed} n_bar={n_bar} slots={slots} wall={elapsed:.1}s", mode.name());
    for i in (step - 1..log.len()).step_by(step) {
        let groups: f64 = log[i + 1 - step..=i].iter().map(|r| r.rb_groups as f64).sum::<f64>() / step as f64;
        let met = log[i + 1 - step..=i].iter().filter(|r| r.satisfactory_error == 0.0).count() as f64 / step as f64;
        println!(
            "slot {:>8}  ma_reward {:>12.4e}  ma_thr {:>12.4e}  groups {:.2}  met {:.3}",
            i + 1,
            ma_r[i],
            ma_t[i],
            groups,
            met
        );
    }
    let s = &trainer.stats;
    println!(
        "trpo {}/{} accepted, max kl {:.3e}, violations {}, converged {:?}",
        s.trpo_accepted, s.trpo_updates, s.max_accepted_kl, s.contract_violations, s.converged_at_slot
    );
    Ok(())
}
