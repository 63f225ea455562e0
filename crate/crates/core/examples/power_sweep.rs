//! A small power sweep with and without surfaces, printed as a table.

use ris_dsca::experiment::{cmd_sweep, SweepSpec, Variant};

fn main() -> ris_dsca::Result<()> {
    let spec = SweepSpec {
        power_grid_dbm: vec![0.0, 10.0, 20.0],
        num_realizations: 3,
        variants: vec![Variant { users: 2, ris: true }, Variant { users: 2, ris: false }],
        elements: 4,
        ..SweepSpec::default()
    };
    let result = cmd_sweep(&spec, 1)?;
    for s in &result.summary {
        println!("{:9} P={:4.1} dBm mean {:8.3} +- {:.3} bps/Hz", s.variant, s.p_dbm, s.mean_sum_rate_bps, s.stderr_sum_rate_bps);
    }
    Ok(())
}
