//! Runs the grid-sweep or geometric-pointing beam baseline with all three RB
//! allocators in lockstep and prints their throughput and RB usage.
//!
//! `cargo run --release --example baselines -- [bfs|pbu] [slots] [seed]`

use std::time::Instant;

use ttdrl::baselines::{BaselineConfig, BaselineGroup, BeamScheme, RbScheme};
use ttdrl::environment::EnvConfig;

fn main() -> ttdrl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let beam = match args.first().map(String::as_str) {
        Some("pbu") => BeamScheme::Pbu,
        _ => BeamScheme::Bfs,
    };
    let slots: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2_000);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let rbs = [RbScheme::Greedy, RbScheme::Fixed, RbScheme::Mab];
    let mut group = BaselineGroup::new(EnvConfig::desk(), beam, &rbs, BaselineConfig::default(), seed)?;

    let start = Instant::now();
    let mut thr = [0.0; 3];
    let mut groups = [0.0; 3];
    let mut met = [0usize; 3];
    for _ in 0..slots {
        for (i, r) in group.step()?.iter().enumerate() {
            thr[i] += r.throughput;
            groups[i] += r.rb_groups as f64;
            met[i] += usize::from(r.satisfactory_error == 0.0);
        }
    }
    println!("{beam:?} seed={seed} slots={slots} wall={:.1}s", start.elapsed().as_secs_f64());
    for (i, rb) in rbs.iter().enumerate() {
        println!(
            "{rb:?}: mean throughput {:.4e}  mean groups {:.2}  demand met {:.3}",
            thr[i] / slots as f64,
            groups[i] / slots as f64,
            met[i] as f64 / slots as f64
        );
    }
    Ok(())
}
