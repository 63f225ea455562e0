//! Draws one channel realization for the two-user preset and prints the
//! average gain of each direct link.

use ris_dsca::{default_scenario, generate_channels};

fn main() -> ris_dsca::Result<()> {
    let mut cfg = default_scenario(2)?;
    cfg.elements = 8;
    let ch = generate_channels(&cfg, 7)?;
    for j in 0..ch.users {
        for q in 0..ch.users {
            let gain: f64 = (0..ch.subcarriers).map(|k| ch.direct(j, q, k).norm_sqr()).sum::<f64>() / ch.subcarriers as f64;
            println!("BS{j} -> UE{q}: mean |h|^2 = {gain:.3e}");
        }
    }
    println!("direct-link hash {}", ch.direct_hash());
    Ok(())
}
