//! Runs the two-user preset with prices exchanged over the message bus and
//! reports the signalling overhead.

use ris_dsca::netbus::NeighborSets;
use ris_dsca::{default_scenario, generate_channels, run_with, PriceSource};

fn main() -> ris_dsca::Result<()> {
    let mut cfg = default_scenario(2)?;
    cfg.elements = 4;
    let ch = generate_channels(&cfg, 3)?;
    let out = run_with(&cfg, &ch, PriceSource::Bus(NeighborSets::all_pairs(cfg.users)))?;
    let bytes = out.overhead_bytes.unwrap_or(0);
    println!("{} iterations, {bytes} bytes of prices ({:.1} per iteration)", out.iterations, bytes as f64 / out.iterations.max(1) as f64);
    println!("final sum rate {:.3} bps/Hz", out.final_sum_rate);
    Ok(())
}
