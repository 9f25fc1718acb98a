//! Runs every scheme on the desk setup for a short budget, writes the cell
//! files and aggregate (default `output/desk_sweep`), and prints the
//! utility table.
//!
//! `cargo run --release --example desk_sweep -- [slots] [out_dir]`

use std::path::PathBuf;

use ttdrl::harness::{run_sweep, ExperimentConfig, SchemeId, SweepConfig};

fn main() -> ttdrl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let slots: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(5_000);
    let out = args.get(1).map_or_else(|| PathBuf::from("output/desk_sweep"), PathBuf::from);
    let sweep = SweepConfig {
        base: ExperimentConfig {
            slots,
            ..ExperimentConfig::desk()
        },
        schemes: SchemeId::ALL.to_vec(),
        seeds: vec![0],
        extra_n_bar: vec![2],
    };
    let agg = run_sweep(&sweep, &out, |s, wall| {
        println!("{:<18} n̄={} done in {wall:.1}s", s.scheme.name(), s.n_bar);
    })?;
    println!("{:<22} {:>14} {:>14}", "scheme", "MA reward", "MA throughput");
    for s in &agg.schemes {
        println!(
            "{:<22} {:>14.4e} {:>14.4e}",
            format!("{} (n̄={})", s.scheme, s.n_bar),
            s.mean_final_ma_reward.unwrap_or(f64::NAN),
            s.mean_final_ma_throughput.unwrap_or(f64::NAN)
        );
    }
    for (w, row) in agg.utility.weights.iter().zip(&agg.utility.scores) {
        let best = row
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| agg.utility.schemes[i].as_str())
            .unwrap_or("-");
        println!("weights {w:.3?}: best utility {best}");
    }
    Ok(())
}
