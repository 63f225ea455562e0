//! Fits Lorentzian parameters to a target profile produced by a known
//! resonator and reports the recovered parameters.

use ris_dsca::metasurface::{initial_params, lorentzian_response, omega_grid};
use ris_dsca::ris_opt::fit_lorentzian;
use ris_dsca::scenario::LorentzBounds;
use ris_dsca::{LorentzianParams, Resonator};

fn main() -> ris_dsca::Result<()> {
    let omega = omega_grid(16);
    let bounds = LorentzBounds::default();
    let truth = LorentzianParams::new(vec![Resonator::from_array([0.3, 2.0, 0.25])]);
    let target = lorentzian_response(&truth, &omega)?;
    let init = initial_params(1, &omega, &bounds);
    let fit = fit_lorentzian(&target, &omega, &init, &bounds, 200, 3);
    println!("true   {:?}", truth.elements[0].as_array());
    println!("fitted {:?}", fit.params.elements[0].as_array());
    println!("residual {:.3e} after {} iterations", fit.cost[0], fit.iterations);
    Ok(())
}
