//! Per-user RIS best response: maximize a linearized rate gain with a
//! proximal term over Lorentzian-realizable profiles in the unit disk.
//!
//! The realizability constraint is handled by penalty dual decomposition
//! ([`pdd`]): closed-form profile updates alternate with Lorentzian fits
//! ([`lm`]).

pub mod lm;
pub mod pdd;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metasurface::{project_unit_disk, LorentzianParams, ReflectionProfile};

pub use lm::{fit_element, fit_lorentzian, ElementFit, FitOutcome};
pub use pdd::{pdd_solve, PddDiagnostics, PddOutcome};

/// `max Re{c^H phi} - tau/2 |phi - phi_prev|^2` subject to realizability and `|phi| <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisSubproblem {
    /// `c`: twice the Wirtinger gradient of own rate plus interference price.
    pub linear_term: ReflectionProfile,
    pub phi_prev: ReflectionProfile,
    pub tau: f64,
    /// Warm start for the Lorentzian fits.
    pub params_init: LorentzianParams,
}

impl RisSubproblem {
    pub fn subcarriers(&self) -> usize {
        self.linear_term.subcarriers
    }

    pub fn elements(&self) -> usize {
        self.linear_term.elements
    }

    pub fn validate(&self) -> Result<()> {
        let (k, m) = (self.subcarriers(), self.elements());
        if self.phi_prev.subcarriers != k || self.phi_prev.elements != m || self.params_init.len() != m {
            return Err(Error::Dimension(format!(
                "RIS subproblem: linear term {}x{}, previous profile {}x{}, {} parameter sets",
                k,
                m,
                self.phi_prev.subcarriers,
                self.phi_prev.elements,
                self.params_init.len()
            )));
        }
        let finite = |p: &ReflectionProfile| p.as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite(&self.linear_term) || !finite(&self.phi_prev) || !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument("non-finite RIS subproblem input".into()));
        }
        Ok(())
    }

    /// Objective in nats.
    pub fn objective(&self, phi: &ReflectionProfile) -> f64 {
        (0..self.elements()).map(|m| self.element_objective(m, &phi.column(m))).sum()
    }

    /// Contribution of element `m` with coefficients `col` across subcarriers.
    pub fn element_objective(&self, m: usize, col: &[Complex64]) -> f64 {
        col.iter()
            .enumerate()
            .map(|(k, z)| {
                let c = self.linear_term.get(k, m);
                (c.conj() * z).re - 0.5 * self.tau * (z - self.phi_prev.get(k, m)).norm_sqr()
            })
            .sum()
    }
}

/// Penalty and dual state of the decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PddState {
    pub rho: f64,
    pub lambda: ReflectionProfile,
    pub c: f64,
    pub viol_tol: f64,
    /// Response of the current Lorentzian parameters.
    pub d_current: ReflectionProfile,
}

/// Unconstrained minimizer of the augmented objective in `phi`, projected
/// entrywise onto the unit disk (exact, since the objective is isotropic per entry).
pub fn phi_closed_form(sub: &RisSubproblem, pdd: &PddState) -> ReflectionProfile {
    let inv_rho = 1.0 / pdd.rho;
    let denom = sub.tau + inv_rho;
    ReflectionProfile::from_fn(sub.subcarriers(), sub.elements(), |k, m| {
        let y = sub.phi_prev.get(k, m) * sub.tau
            + sub.linear_term.get(k, m)
            + (pdd.d_current.get(k, m) - pdd.lambda.get(k, m) * pdd.rho) * inv_rho;
        project_unit_disk(y / denom)
    })
}
