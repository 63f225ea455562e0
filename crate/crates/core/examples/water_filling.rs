//! Solves a proximal power subproblem and shows how the water level shifts
//! when interference prices are added.

use ris_dsca::power_alloc::{solve_power, PowerSubproblem};

fn main() -> ris_dsca::Result<()> {
    let mut sub = PowerSubproblem {
        a: vec![2.0, 1.0, 0.5, 0.1],
        b: vec![1.0; 4],
        p_prev: vec![0.25; 4],
        prices: vec![0.0; 4],
        tau: 0.01,
        budget: 1.0,
    };
    let (p, mu) = solve_power(&sub, 1e-12)?;
    println!("no prices:   p = {p:.4?}, mu = {mu:.4}");
    sub.prices = vec![-0.5, 0.0, 0.0, 0.0];
    let (p, mu) = solve_power(&sub, 1e-12)?;
    println!("priced k=0:  p = {p:.4?}, mu = {mu:.4}");
    Ok(())
}
