//! Runs the joint power and surface optimization on the two-user preset
//! with 8 elements per surface and prints the rate trajectory.

use ris_dsca::{default_scenario, generate_channels, run};

fn main() -> ris_dsca::Result<()> {
    let mut cfg = default_scenario(2)?;
    cfg.elements = 8;
    let ch = generate_channels(&cfg, cfg.seed)?;
    let out = run(&cfg, &ch)?;
    for r in out.history.iter().step_by(10) {
        println!("t={:3} sum rate {:.3} bps/Hz", r.t, r.sum_rate_bps);
    }
    println!(
        "converged {} after {} iterations; final {:.3} bps/Hz ({:?})",
        out.converged, out.iterations, out.final_sum_rate, out.surface
    );
    Ok(())
}
