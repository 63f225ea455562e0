//! Prints the frequency response of one resonator on the subcarrier grid.

use ris_dsca::metasurface::{lorentzian_response, omega_grid};
use ris_dsca::{LorentzianParams, Resonator};

fn main() -> ris_dsca::Result<()> {
    let omega = omega_grid(16);
    let params = LorentzianParams::new(vec![Resonator::from_array([0.5, 1.2, 0.4])]);
    let phi = lorentzian_response(&params, &omega)?;
    for (k, w) in omega.iter().enumerate() {
        let z = phi.get(k, 0);
        println!("k={k:2} w={w:.3} |phi|={:.4} arg={:+.4}", z.norm(), z.arg());
    }
    Ok(())
}
