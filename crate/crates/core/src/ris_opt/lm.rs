//! Projected Levenberg-Marquardt fit of Lorentzian parameters to a target
//! reflection profile, one element at a time.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::metasurface::{LorentzianParams, ReflectionProfile, Resonator};
use crate::scenario::LorentzBounds;

const DAMPING_START: f64 = 1e-3;
const DAMPING_MAX: f64 = 1e10;
const DAMPING_MIN: f64 = 1e-12;

/// Result of fitting one element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementFit {
    pub params: Resonator,
    /// Squared residual `sum_k |s_k - phi(w_k)|^2`.
    pub cost: f64,
    pub iterations: usize,
    /// No step was accepted although the residual was not negligible.
    pub no_progress: bool,
}

/// Result of fitting every element of a surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub params: LorentzianParams,
    /// Per-element squared residual.
    pub cost: Vec<f64>,
    pub iterations: usize,
    pub no_progress: bool,
}

/// Squared residual of one element, infinite if the response is singular on the grid.
pub fn element_cost(r: &Resonator, target: &[Complex64], omega: &[f64]) -> f64 {
    let mut cost = 0.0;
    for (s, &w) in target.iter().zip(omega) {
        match r.response(w) {
            Some(d) => cost += (s - d).norm_sqr(),
            None => return f64::INFINITY,
        }
    }
    cost
}

/// Newton system of a least-squares cost at a point: half the Hessian, the
/// diagonal of `J^T J` used to scale the damping, and minus half the
/// gradient. `None` at a singularity.
pub(crate) type NormalEquations = Option<(Matrix3<f64>, Vector3<f64>, Vector3<f64>)>;

/// Projected Levenberg-Marquardt on the parameter box. `cost` must equal
/// the squared residual norm whose Gauss-Newton system `normal` returns.
/// Stops once the cost drops below `negligible`.
pub(crate) fn lm_minimize(
    init: Resonator,
    bounds: &LorentzBounds,
    max_iter: usize,
    negligible: f64,
    cost_fn: impl Fn(&Resonator) -> f64,
    normal: impl Fn(&Resonator) -> NormalEquations,
) -> ElementFit {
    let mut theta = init.clamped(bounds);
    let mut cost = cost_fn(&theta);
    let mut damping = DAMPING_START;
    let mut accepted_any = false;
    let mut iterations = 0;
    while iterations < max_iter && cost.is_finite() && cost > negligible {
        iterations += 1;
        let Some((mut n, mut diag, mut g)) = normal(&theta) else {
            break;
        };
        // freeze coordinates held at a bound by the descent direction
        let (lo, hi) = box_limits(bounds);
        let a = theta.as_array();
        for i in 0..3 {
            if (a[i] <= lo[i] && g[i] < 0.0) || (a[i] >= hi[i] && g[i] > 0.0) {
                for j in 0..3 {
                    n[(i, j)] = 0.0;
                    n[(j, i)] = 0.0;
                }
                n[(i, i)] = 1.0;
                diag[i] = 1.0;
                g[i] = 0.0;
            }
        }
        let diag_floor = 1e-12 * diag.max().max(1e-300);
        let mut improved = false;
        while damping <= DAMPING_MAX {
            let mut lhs = n;
            for a in 0..3 {
                lhs[(a, a)] += damping * diag[a].max(diag_floor);
            }
            let step = lhs.cholesky().map(|c| c.solve(&g));
            if let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) {
                let a = theta.as_array();
                let cand = Resonator::from_array([a[0] + step[0], a[1] + step[1], a[2] + step[2]]).clamped(bounds);
                let c = cost_fn(&cand);
                if c < cost {
                    let rel = (cost - c) / cost;
                    let moved = cand
                        .as_array()
                        .iter()
                        .zip(a)
                        .map(|(x, y)| (x - y).abs() / (1.0 + y.abs()))
                        .fold(0.0, f64::max);
                    theta = cand;
                    cost = c;
                    damping = (damping * 0.1).max(DAMPING_MIN);
                    improved = true;
                    accepted_any = true;
                    if rel < 1e-12 || moved < 1e-10 {
                        return ElementFit { params: theta, cost, iterations, no_progress: false };
                    }
                    break;
                }
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    ElementFit {
        params: theta,
        cost,
        iterations,
        no_progress: !accepted_any && cost.is_finite() && cost > negligible && iterations > 0,
    }
}

fn box_limits(b: &LorentzBounds) -> ([f64; 3], [f64; 3]) {
    ([b.f_min, b.omega_min, -b.kappa_max], [b.f_max, b.omega_max, b.kappa_max])
}

/// Projected LM fit of one element to `target`, starting from `init`
/// clamped to `bounds`. Never returns a point with a larger residual than
/// the clamped start.
pub fn fit_element(
    target: &[Complex64],
    omega: &[f64],
    init: Resonator,
    bounds: &LorentzBounds,
    max_iter: usize,
) -> ElementFit {
    let scale: f64 = target.iter().map(|s| s.norm_sqr()).sum::<f64>().max(1e-300);
    lm_minimize(
        init,
        bounds,
        max_iter,
        1e-30 * scale,
        |r| element_cost(r, target, omega),
        |theta| {
            let mut sys = NewtonSystem::default();
            for (s, &w) in target.iter().zip(omega) {
                let (d, jac, hess) = theta.response_with_hessian(w)?;
                sys.add(&jac, &hess, s - d, 1.0);
            }
            Some(sys.finish())
        },
    )
}

/// Accumulates `sum weight |r_k(theta)|^2` into a Newton system, where
/// `r = target - d(theta)` has Jacobian `-jac` and Hessian `-hess`.
#[derive(Default)]
pub(crate) struct NewtonSystem {
    n: Matrix3<f64>,
    diag: Vector3<f64>,
    g: Vector3<f64>,
}

impl NewtonSystem {
    #[inline]
    pub(crate) fn add(&mut self, jac: &[Complex64; 3], hess: &[[Complex64; 3]; 3], r: Complex64, weight: f64) {
        for a in 0..3 {
            self.g[a] += weight * (jac[a].conj() * r).re;
            self.diag[a] += weight * jac[a].norm_sqr();
            for b in a..3 {
                self.n[(a, b)] += weight * ((jac[a].conj() * jac[b]).re - (r.conj() * hess[a][b]).re);
            }
        }
    }

    /// Adds `weight e^2` for a real residual `e` with gradient `grad`
    /// (Gauss-Newton term only).
    #[inline]
    pub(crate) fn add_real(&mut self, grad: &Vector3<f64>, e: f64, weight: f64) {
        for a in 0..3 {
            self.g[a] -= weight * e * grad[a];
            self.diag[a] += weight * grad[a] * grad[a];
            for b in a..3 {
                self.n[(a, b)] += weight * grad[a] * grad[b];
            }
        }
    }

    pub(crate) fn finish(self) -> (Matrix3<f64>, Vector3<f64>, Vector3<f64>) {
        let mut n = self.n;
        for a in 0..3 {
            for b in 0..a {
                n[(a, b)] = n[(b, a)];
            }
        }
        (n, self.diag, self.g)
    }
}

/// Extra starting points derived from the target: a resonance at the bin of
/// largest magnitude with the damping that reproduces its height.
pub(crate) fn restart_points(target: &[Complex64], omega: &[f64], bounds: &LorentzBounds) -> Vec<Resonator> {
    let Some((k, peak)) = target
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(k, s)| (k, *s))
    else {
        return Vec::new();
    };
    let w0 = omega[k];
    let height = peak.norm().max(1e-6);
    // at resonance phi = -j F w0 / kappa
    let sign = if peak.im > 0.0 { -1.0 } else { 1.0 };
    let mut out = Vec::new();
    for f in [0.5, 1.0] {
        out.push(Resonator::new(f, w0, sign * f * w0 / height).clamped(bounds));
    }
    out.push(Resonator::new(0.5, 0.5 * (bounds.omega_min + bounds.omega_max), 1.0).clamped(bounds));
    out
}

/// Fits from `init` and then from up to `restarts` additional starting points,
/// keeping the best.
pub fn fit_element_multistart(
    target: &[Complex64],
    omega: &[f64],
    init: Resonator,
    bounds: &LorentzBounds,
    max_iter: usize,
    restarts: usize,
) -> ElementFit {
    let mut best = fit_element(target, omega, init, bounds, max_iter);
    for start in restart_points(target, omega, bounds).into_iter().take(restarts) {
        let f = fit_element(target, omega, start, bounds, max_iter);
        if f.cost < best.cost {
            best = ElementFit { no_progress: false, iterations: best.iterations + f.iterations, ..f };
        } else {
            best.iterations += f.iterations;
        }
    }
    best
}

/// Fits every element of `target` (one column per element) independently.
pub fn fit_lorentzian(
    target: &ReflectionProfile,
    omega: &[f64],
    init: &LorentzianParams,
    bounds: &LorentzBounds,
    max_iter: usize,
    restarts: usize,
) -> FitOutcome {
    let mut params = Vec::with_capacity(init.len());
    let mut cost = Vec::with_capacity(init.len());
    let mut iterations = 0;
    let mut no_progress = false;
    for (m, r) in init.elements.iter().enumerate() {
        let f = fit_element_multistart(&target.column(m), omega, *r, bounds, max_iter, restarts);
        params.push(f.params);
        cost.push(f.cost);
        iterations += f.iterations;
        no_progress |= f.no_progress;
    }
    FitOutcome { params: LorentzianParams::new(params), cost, iterations, no_progress }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metasurface::{lorentzian_response, omega_grid};
    use proptest::prelude::*;

    fn target_of(r: Resonator, omega: &[f64]) -> Vec<Complex64> {
        omega.iter().map(|&w| r.response(w).unwrap()).collect()
    }

    #[test]
    fn exact_start_is_a_fixed_point() {
        let omega = omega_grid(16);
        let truth = Resonator::new(0.4, 1.7, -3.0);
        let fit = fit_element(&target_of(truth, &omega), &omega, truth, &LorentzBounds::default(), 100);
        assert!(fit.cost <= 1e-12);
        for (a, b) in fit.params.as_array().iter().zip(truth.as_array()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn recovers_synthetic_resonator() {
        let omega = omega_grid(16);
        let truth = Resonator::new(0.8, 1.2, 5.0);
        let fit = fit_element_multistart(
            &target_of(truth, &omega),
            &omega,
            Resonator::new(0.5, 1.0, 1.0),
            &LorentzBounds::default(),
            100,
            3,
        );
        assert!(fit.cost <= 1e-8, "cost {} params {:?}", fit.cost, fit.params);
    }

    #[test]
    fn zero_target_drives_strength_to_floor() {
        let omega = omega_grid(16);
        let b = LorentzBounds::default();
        let fit = fit_element(&vec![Complex64::new(0.0, 0.0); 16], &omega, Resonator::new(0.5, 1.0, 1.0), &b, 100);
        assert!((fit.params.f - b.f_min).abs() <= 1e-9, "{:?}", fit.params);
    }

    #[test]
    fn whole_surface_fit_is_per_element() {
        let omega = omega_grid(8);
        let truth = LorentzianParams::new(vec![Resonator::new(0.3, 0.9, 2.0), Resonator::new(0.6, 2.2, -4.0)]);
        let target = lorentzian_response(&truth, &omega).unwrap();
        let out = fit_lorentzian(&target, &omega, &truth, &LorentzBounds::default(), 50, 0);
        assert!(out.cost.iter().all(|c| *c <= 1e-20));
        let swapped = LorentzianParams::new(vec![truth.elements[1], truth.elements[0]]);
        let mut t2 = target.clone();
        t2.set_column(0, &target.column(1));
        t2.set_column(1, &target.column(0));
        let out2 = fit_lorentzian(&t2, &omega, &swapped, &LorentzBounds::default(), 50, 0);
        assert_eq!(out.params.elements[0], out2.params.elements[1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn never_increases_residual(
            re in proptest::collection::vec(-1.0f64..1.0, 8),
            im in proptest::collection::vec(-1.0f64..1.0, 8),
            f in 0.01f64..1.0, w0 in 0.1f64..3.1, kappa in -100.0f64..100.0,
        ) {
            let omega = omega_grid(8);
            let target: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
            let init = Resonator::new(f, w0, kappa);
            let start = element_cost(&init, &target, &omega);
            let fit = fit_element_multistart(&target, &omega, init, &LorentzBounds::default(), 100, 3);
            prop_assert!(fit.cost <= start);
            prop_assert!(fit.params.in_bounds(&LorentzBounds::default()));
        }
    }
}
