//! Two-layer penalty dual decomposition for the RIS subproblem.
//!
//! The profile update of the inner layer has a closed form, so the inner
//! layer is solved to its fixed point by eliminating the profile and fitting
//! the Lorentzian parameters to the reduced objective with projected LM.
//! The outer layer performs dual ascent when the realizability gap is below a
//! shrinking threshold and shrinks the penalty parameter otherwise. The
//! problem separates across elements, so each element runs its own
//! decomposition with its own penalty and threshold.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::lm::{lm_minimize, restart_points, ElementFit, NewtonSystem, NormalEquations};
use super::RisSubproblem;
use crate::error::Result;
use crate::metasurface::{limit_modulus, omega_grid, project_unit_disk, LorentzianParams, ReflectionProfile, Resonator};
use crate::scenario::{LorentzBounds, PddParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PddDiagnostics {
    /// Largest realizability gap `|phi_hat - d|` at exit, over all elements.
    pub final_violation: f64,
    /// Largest number of outer iterations used by any element.
    pub outer_iters: usize,
    /// Inner iterations summed over elements.
    pub inner_iters: usize,
    /// Final Lorentzian fit residual per element.
    pub element_residuals: Vec<f64>,
    /// Realizability gap after each outer iteration, per element.
    pub violation_history: Vec<Vec<f64>>,
    /// Subproblem objective of the returned profile, nats.
    pub objective: f64,
    /// Every element reached the final violation tolerance.
    pub converged: bool,
    /// Some Lorentzian fit made no progress from its start.
    pub no_progress: bool,
    /// Elements for which the warm start was returned instead.
    pub fallback_elements: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PddOutcome {
    /// Response of `params`: realizable, with on-grid modulus at most one.
    pub phi: ReflectionProfile,
    pub params: LorentzianParams,
    pub diagnostics: PddDiagnostics,
}

struct ElementRun {
    params: Resonator,
    residual: f64,
    violation: f64,
    outer: usize,
    inner: usize,
    history: Vec<f64>,
    no_progress: bool,
}

fn response(r: &Resonator, omega: &[f64]) -> Option<Vec<Complex64>> {
    omega.iter().map(|&w| r.response(w)).collect()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Inner augmented problem of one element for fixed penalty and duals,
/// with the profile minimized out:
///
/// `min_phi tau/2 |phi - z0|^2 + 1/(2 rho) |phi - d + rho lambda|^2`
/// `= k1/2 |d - rho lambda - z0|^2 + k2/2 dist(m, disk)^2`,
///
/// where `z0 = phi_prev + c / tau`, `k1 = tau / (1 + rho tau)`,
/// `k2 = tau + 1/rho` and `m` is the unprojected closed-form profile.
struct InnerProblem<'a> {
    z0: &'a [Complex64],
    lambda: &'a [Complex64],
    rho: f64,
    tau: f64,
    omega: &'a [f64],
}

impl InnerProblem<'_> {
    fn k1(&self) -> f64 {
        self.tau / (1.0 + self.rho * self.tau)
    }

    fn k2(&self) -> f64 {
        self.tau + 1.0 / self.rho
    }

    #[inline]
    fn unprojected(&self, k: usize, d: Complex64) -> Complex64 {
        (self.z0[k] * self.tau + (d - self.lambda[k] * self.rho) / self.rho) / self.k2()
    }

    fn phi_hat(&self, d: &[Complex64]) -> Vec<Complex64> {
        d.iter().enumerate().map(|(k, &v)| project_unit_disk(self.unprojected(k, v))).collect()
    }

    fn cost(&self, r: &Resonator) -> f64 {
        let (k1, k2) = (self.k1(), self.k2());
        let mut cost = 0.0;
        for (k, &w) in self.omega.iter().enumerate() {
            let Some(d) = r.response(w) else {
                return f64::INFINITY;
            };
            let excess = (self.unprojected(k, d).norm() - 1.0).max(0.0);
            cost += k1 * (d - self.lambda[k] * self.rho - self.z0[k]).norm_sqr() + k2 * excess * excess;
        }
        cost
    }

    fn normal(&self, r: &Resonator) -> NormalEquations {
        let k2 = self.k2();
        let mut sys = NewtonSystem::default();
        for (k, &w) in self.omega.iter().enumerate() {
            let (d, jac, hess) = r.response_with_hessian(w)?;
            sys.add(&jac, &hess, self.z0[k] + self.lambda[k] * self.rho - d, self.k1());
            let m = self.unprojected(k, d);
            let radius = m.norm();
            if radius > 1.0 {
                let dir = m / radius;
                let scale = 1.0 / (self.rho * k2);
                let grad = Vector3::from_fn(|a, _| (dir.conj() * jac[a]).re * scale);
                sys.add_real(&grad, radius - 1.0, k2);
            }
        }
        Some(sys.finish())
    }

    fn fit(&self, init: Resonator, bounds: &LorentzBounds, max_iter: usize) -> ElementFit {
        lm_minimize(init, bounds, max_iter, 0.0, |r| self.cost(r), |r| self.normal(r))
    }
}

fn solve_element(
    c: &[Complex64],
    prev: &[Complex64],
    tau: f64,
    init: Resonator,
    omega: &[f64],
    knobs: &PddParams,
    bounds: &LorentzBounds,
) -> ElementRun {
    let nk = omega.len();
    let z0: Vec<Complex64> = prev.iter().zip(c).map(|(p, c)| p + c / tau).collect();
    let mut params = init.clamped(bounds);
    let mut d = response(&params, omega).unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); nk]);
    let mut lambda = vec![Complex64::new(0.0, 0.0); nk];
    let mut rho = knobs.rho0;
    let mut eta = knobs.viol_tol;
    let mut run = ElementRun {
        params,
        residual: 0.0,
        violation: f64::INFINITY,
        outer: 0,
        inner: 0,
        history: Vec::new(),
        no_progress: false,
    };
    let mut first_fit = true;
    // state before the last dual update, restored if that update widened the gap
    let mut undo: Option<(Resonator, Vec<Complex64>, Vec<Complex64>, f64)> = None;
    for _ in 0..knobs.outer_iters {
        run.outer += 1;
        let inner = InnerProblem { z0: &z0, lambda: &lambda, rho, tau, omega };
        let mut phi_hat = inner.phi_hat(&d);
        let mut prev_cost = inner.cost(&params);
        for _ in 0..knobs.inner_iters.max(1) {
            run.inner += 1;
            let mut fit = inner.fit(params, bounds, knobs.fit_max_iter);
            if first_fit {
                first_fit = false;
                let target: Vec<Complex64> = z0.iter().map(|z| project_unit_disk(*z)).collect();
                for start in restart_points(&target, omega, bounds).into_iter().take(knobs.fit_restarts) {
                    let alt = inner.fit(start, bounds, knobs.fit_max_iter);
                    if alt.cost < fit.cost {
                        fit = alt;
                    }
                }
            }
            run.no_progress |= fit.no_progress;
            params = fit.params;
            let Some(d_new) = response(&params, omega) else {
                break;
            };
            let change = max_diff(&d_new, &d);
            d = d_new;
            phi_hat = inner.phi_hat(&d);
            let decrease = prev_cost - fit.cost;
            prev_cost = fit.cost;
            if change <= knobs.inner_tol || decrease <= knobs.inner_tol * fit.cost {
                break;
            }
        }
        run.residual = phi_hat.iter().zip(&lambda).zip(&d).map(|((p, l), d)| (p + l * rho - d).norm_sqr()).sum();
        let violation = max_diff(&phi_hat, &d);
        if let Some((p0, d0, l0, v0)) = undo.take() {
            if violation > v0 {
                params = p0;
                d = d0;
                lambda = l0;
                rho *= knobs.c;
                continue;
            }
        }
        run.history.push(violation);
        run.violation = violation;
        if violation <= knobs.final_tol {
            break;
        }
        if violation <= eta {
            undo = Some((params, d.clone(), lambda.clone(), violation));
            for k in 0..nk {
                lambda[k] += (phi_hat[k] - d[k]) / rho;
            }
            eta *= 0.5;
        } else {
            rho *= knobs.c;
        }
    }
    run.params = params;
    run
}

/// Solves the RIS subproblem. The returned profile is always the response of
/// the returned parameters, rescaled where needed so its on-grid modulus is at
/// most one; elements whose result is worse than the warm start keep the warm start.
pub fn pdd_solve(sub: &RisSubproblem, knobs: &PddParams, bounds: &LorentzBounds) -> Result<PddOutcome> {
    sub.validate()?;
    let (nk, nm) = (sub.subcarriers(), sub.elements());
    let omega = omega_grid(nk);
    let mut params = Vec::with_capacity(nm);
    let mut diag = PddDiagnostics {
        final_violation: 0.0,
        outer_iters: 0,
        inner_iters: 0,
        element_residuals: Vec::with_capacity(nm),
        violation_history: Vec::with_capacity(nm),
        objective: 0.0,
        converged: true,
        no_progress: false,
        fallback_elements: Vec::new(),
    };
    let mut phi = ReflectionProfile::zeros(nk, nm);
    for m in 0..nm {
        let c = sub.linear_term.column(m);
        let prev = sub.phi_prev.column(m);
        let init = sub.params_init.elements[m];
        let run = solve_element(&c, &prev, sub.tau, init, &omega, knobs, bounds);

        let mut out = run.params;
        let feasible = limit_modulus(&mut out, &omega, bounds);
        let candidate = response(&out, &omega).filter(|_| feasible);
        let mut warm = init.clamped(bounds);
        let warm_ok = limit_modulus(&mut warm, &omega, bounds);
        let warm_resp = response(&warm, &omega).filter(|_| warm_ok);
        let (chosen, resp) = match (candidate, warm_resp) {
            (Some(a), Some(b)) => {
                if sub.element_objective(m, &a) >= sub.element_objective(m, &b) {
                    (out, a)
                } else {
                    diag.fallback_elements.push(m);
                    (warm, b)
                }
            }
            (Some(a), None) => (out, a),
            (None, Some(b)) => {
                diag.fallback_elements.push(m);
                (warm, b)
            }
            (None, None) => {
                // the floor on F cannot tame a near-singular start; shrink to the floor
                let r = Resonator::new(bounds.f_min, bounds.omega_max, bounds.kappa_max);
                diag.fallback_elements.push(m);
                (r, response(&r, &omega).expect("nonzero damping is never singular"))
            }
        };
        phi.set_column(m, &resp);
        params.push(chosen);
        diag.final_violation = diag.final_violation.max(run.violation);
        diag.outer_iters = diag.outer_iters.max(run.outer);
        diag.inner_iters += run.inner;
        diag.element_residuals.push(run.residual);
        diag.violation_history.push(run.history);
        diag.converged &= run.violation <= knobs.final_tol;
        diag.no_progress |= run.no_progress;
    }
    diag.objective = sub.objective(&phi);
    Ok(PddOutcome { phi, params: LorentzianParams::new(params), diagnostics: diag })
}
