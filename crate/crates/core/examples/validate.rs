//! Runs the small oracle suites and prints their verdicts.

use ris_dsca::validation::{gradient_suite, water_filling_suite, Hooks};

fn main() -> ris_dsca::Result<()> {
    for r in [gradient_suite(5, 2, 4, 3, 1, Hooks::default()), water_filling_suite(10, 8, 2)?] {
        println!("{:14} passed {} max error {:.2e} (tolerance {:.0e})", r.name, r.passed, r.max_error, r.tolerance);
    }
    Ok(())
}
