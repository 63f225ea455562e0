//! Independent reference solvers and random instance generators.
//!
//! These are deliberately simple (finite differences, projected gradient,
//! brute-force grids) and share no code with the production solvers they
//! check, apart from the response model itself.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::ChannelSet;
use crate::metasurface::{project_unit_disk, ReflectionProfile, Resonator};
use crate::rate_model::UserState;
use crate::scenario::LorentzBounds;

/// Central finite-difference gradient of a real function of real variables.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            buf[i] = x[i] + h;
            let up = f(&buf);
            buf[i] = x[i] - h;
            let dn = f(&buf);
            buf[i] = x[i];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// Central finite-difference Wirtinger gradient `df/dz* = (df/dx + j df/dy) / 2`
/// of a real function of complex variables.
pub fn fd_wirtinger(f: impl Fn(&[Complex64]) -> f64, z: &[Complex64], h: f64) -> Vec<Complex64> {
    let mut buf = z.to_vec();
    let mut partial = |i: usize, d: Complex64| {
        buf[i] = z[i] + d;
        let up = f(&buf);
        buf[i] = z[i] - d;
        let dn = f(&buf);
        buf[i] = z[i];
        (up - dn) / (2.0 * h)
    };
    (0..z.len())
        .map(|i| {
            let dx = partial(i, Complex64::new(h, 0.0));
            let dy = partial(i, Complex64::new(0.0, h));
            Complex64::new(dx, dy) * 0.5
        })
        .collect()
}

/// Euclidean projection onto `{p >= 0, sum p <= budget}`.
pub fn project_capped_simplex(y: &[f64], budget: f64) -> Vec<f64> {
    let clipped: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= budget {
        return clipped;
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - budget) / (i + 1) as f64;
        if v - t > 0.0 {
            shift = t;
        }
    }
    y.iter().map(|v| (v - shift).max(0.0)).collect()
}

/// Projected-gradient maximizer of
/// `sum ln(1 + a p / b) + prices . p - tau/2 |p - p_prev|^2` over the capped simplex.
#[allow(clippy::too_many_arguments)]
pub fn power_pg_oracle(
    a: &[f64],
    b: &[f64],
    prices: &[f64],
    p_prev: &[f64],
    tau: f64,
    budget: f64,
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let lip = a.iter().zip(b).map(|(a, b)| (a / b).powi(2)).fold(0.0, f64::max) + tau;
    let step = 1.0 / lip;
    let mut p = project_capped_simplex(p_prev, budget);
    for _ in 0..max_iter {
        let y: Vec<f64> = (0..p.len())
            .map(|k| {
                let g = a[k] / (b[k] + a[k] * p[k]) + prices[k] - tau * (p[k] - p_prev[k]);
                p[k] + step * g
            })
            .collect();
        let next = project_capped_simplex(&y, budget);
        let moved = next.iter().zip(&p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        p = next;
        if moved <= tol {
            break;
        }
    }
    p
}

/// Brute-force maximum of `objective` over an `n^3` grid on the parameter box:
/// `F = i/n`, `omega0 = pi i/n` for `i = 1..=n` and `n` evenly spaced `kappa`
/// values in `[-kappa_max, kappa_max]`. Points where `objective` returns
/// `None` (e.g. infeasible) are skipped.
pub fn resonator_grid_search(
    objective: impl Fn(&Resonator) -> Option<f64>,
    n: usize,
    bounds: &LorentzBounds,
) -> Option<(Resonator, f64)> {
    let mut best: Option<(Resonator, f64)> = None;
    for i in 1..=n {
        let f = bounds.f_max * i as f64 / n as f64;
        for j in 1..=n {
            let w0 = bounds.omega_max * j as f64 / n as f64;
            for l in 0..n {
                let kappa = -bounds.kappa_max + 2.0 * bounds.kappa_max * l as f64 / (n - 1).max(1) as f64;
                let r = Resonator::new(f, w0, kappa);
                if let Some(v) = objective(&r) {
                    if best.as_ref().is_none_or(|(_, b)| v > *b) {
                        best = Some((r, v));
                    }
                }
            }
        }
    }
    best
}

/// Maximizer of a real function over the closed unit disk: polar grid,
/// then a shrinking pattern search from the best grid point.
pub fn disk_argmax(f: impl Fn(Complex64) -> f64, n: usize) -> Complex64 {
    let mut best = Complex64::new(0.0, 0.0);
    let mut best_v = f(best);
    for i in 1..=n {
        let r = i as f64 / n as f64;
        for j in 0..4 * n {
            let z = Complex64::from_polar(r, std::f64::consts::TAU * j as f64 / (4 * n) as f64);
            let v = f(z);
            if v > best_v {
                best = z;
                best_v = v;
            }
        }
    }
    let mut h = 2.0 / n as f64;
    while h > 1e-12 {
        let mut improved = false;
        for d in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (0.7, 0.7), (-0.7, 0.7), (0.7, -0.7), (-0.7, -0.7)] {
            let z = project_unit_disk(best + Complex64::new(d.0, d.1) * h);
            let v = f(z);
            if v > best_v {
                best = z;
                best_v = v;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    best
}

fn cn(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Unit-scale i.i.d. CN(0,1) channels, without pathloss.
pub fn random_channels(rng: &mut impl Rng, users: usize, subcarriers: usize, elements: usize) -> ChannelSet {
    let mut ch = ChannelSet::zeros(users, subcarriers, elements);
    for j in 0..users {
        for q in 0..users {
            for k in 0..subcarriers {
                *ch.direct_mut(j, q, k) = cn(rng);
                for m in 0..elements {
                    *ch.ris_to_ue_mut(j, q, k, m) = cn(rng);
                }
            }
        }
        for k in 0..subcarriers {
            for m in 0..elements {
                *ch.bs_to_ris_mut(j, k, m) = cn(rng);
            }
        }
    }
    ch
}

/// Random strictly positive powers in `(0, p_scale]` and coefficients in the unit disk.
pub fn random_state(
    rng: &mut impl Rng,
    users: usize,
    subcarriers: usize,
    elements: usize,
    p_scale: f64,
) -> Vec<UserState> {
    (0..users)
        .map(|_| {
            let p = (0..subcarriers).map(|_| p_scale * rng.gen_range(0.1..1.0)).collect();
            let phi = ReflectionProfile::from_fn(subcarriers, elements, |_, _| {
                Complex64::from_polar(rng.gen_range(0.0..0.95), rng.gen_range(0.0..std::f64::consts::TAU))
            });
            UserState::new(p, phi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_of_quadratic() {
        let g = fd_gradient(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, 1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn wirtinger_of_norm_squared() {
        // d|z|^2 / dz* = z
        let z = [Complex64::new(0.3, -1.2)];
        let g = fd_wirtinger(|v| v[0].norm_sqr(), &z, 1e-6);
        assert!((g[0] - z[0]).norm() < 1e-8);
    }

    #[test]
    fn capped_simplex_projection() {
        assert_eq!(project_capped_simplex(&[0.2, -1.0], 1.0), vec![0.2, 0.0]);
        let p = project_capped_simplex(&[3.0, 1.0, -2.0], 2.0);
        assert!((p[0] - 2.0).abs() < 1e-15 && p[1] == 0.0 && p[2] == 0.0);
        let p = project_capped_simplex(&[1.0, 1.0], 1.0);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn disk_argmax_finds_boundary_and_interior() {
        let target = Complex64::new(0.3, 0.4);
        let z = disk_argmax(|z| -(z - target).norm_sqr(), 50);
        assert!((z - target).norm() < 1e-9);
        let z = disk_argmax(|z| z.re, 50);
        assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-6);
    }
}
