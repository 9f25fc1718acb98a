//! Runs the two-time-scale iterate on the default tabular instance, prints the
//! error against the equilibrium at each checkpoint next to the high-probability
//! bound, and reports the sample count each tier needs for a target error.
//!
//! `cargo run --release --example verify_theory -- [steps] [seed]`

use ttdrl::tabular::{
    corollary1_time, theorem2_bound, two_timescale_iterate, IterateConfig, TabularTTMDP, TierBoundParams,
};

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn main() -> ttdrl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let delta = 0.05;

    let mdp = TabularTTMDP::default_instance();
    let eq = mdp.unique_equilibrium()?;
    println!("equilibrium: high {:?}, low {:?}", eq.policy_high, eq.policy_low);
    let cfg = IterateConfig {
        steps,
        seed,
        checkpoint_every: (steps / 10).max(1),
        ..IterateConfig::default()
    };
    let trace = two_timescale_iterate(&mdp, &cfg)?;

    let (rh, rl) = mdp.reward_bounds();
    let (sah, sal) = mdp.state_action_counts();
    println!("{:>8} {:>11} {:>11} {:>11} {:>11}  policies", "n", "err high", "bound", "err low", "bound");
    for c in &trace.checkpoints {
        let matched = c.policy_high == eq.policy_high && c.policy_low == eq.policy_low;
        println!(
            "{:>8} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e}  {}",
            c.n,
            sup(&c.x, &eq.x_star),
            theorem2_bound(rh, mdp.gamma_high, sah, delta, c.n as f64),
            sup(&c.y, &eq.y_star),
            theorem2_bound(rl, mdp.gamma_low, sal, delta, c.n as f64),
            if matched { "equilibrium" } else { "-" }
        );
    }

    let high = TierBoundParams {
        r_max: rh,
        gamma: mdp.gamma_high,
        state_actions: sah,
    };
    let low = TierBoundParams {
        r_max: rl,
        gamma: mdp.gamma_low,
        state_actions: sal,
    };
    for eps in [1.0, 0.5, 0.25] {
        println!("samples for ε = {eps}: {:.3e}", corollary1_time(eps, delta, high, low)?);
    }
    Ok(())
}
