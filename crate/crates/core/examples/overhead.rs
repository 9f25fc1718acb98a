//! Tabulates per-cycle exchanged elements and bytes for a range of cycle
//! lengths, RB pool sizes and rollout depths.
//!
//! `cargo run --example overhead`

use ttdrl::drl::{comm_overhead, comm_overhead_elements};

fn main() {
    println!("{:>4} {:>5} {:>4} {:>10} {:>10}", "T", "M", "n̄", "elements", "bytes");
    for t in [5, 10, 20] {
        for m in [20, 100] {
            for n_bar in [2, 8] {
                println!(
                    "{t:>4} {m:>5} {n_bar:>4} {:>10} {:>10}",
                    comm_overhead_elements(t, m, n_bar),
                    comm_overhead(t, m, n_bar, 4)
                );
            }
        }
    }
}
