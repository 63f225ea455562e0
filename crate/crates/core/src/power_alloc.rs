//! Per-user power best response: multi-level water-filling with a proximal
//! term, solved per subcarrier in closed form and by bisection on the
//! budget multiplier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_BISECTIONS: usize = 200;

/// Data of one user's power subproblem
/// `max sum_k ln(1 + a_k p_k / b_k) + prices . p - tau/2 |p - p_prev|^2`
/// over `{p >= 0, sum p <= budget}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSubproblem {
    /// Own-channel gain `|H_qq[k]|^2`.
    pub a: Vec<f64>,
    /// Frozen interference plus noise at the user's receiver.
    pub b: Vec<f64>,
    pub p_prev: Vec<f64>,
    /// Interference prices, nonpositive.
    pub prices: Vec<f64>,
    pub tau: f64,
    pub budget: f64,
}

impl PowerSubproblem {
    pub fn subcarriers(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.a.len();
        if self.b.len() != k || self.p_prev.len() != k || self.prices.len() != k {
            return Err(Error::Dimension(format!(
                "power subproblem lengths a={} b={} p_prev={} prices={}",
                k,
                self.b.len(),
                self.p_prev.len(),
                self.prices.len()
            )));
        }
        let all = self.a.iter().chain(&self.b).chain(&self.p_prev).chain(&self.prices);
        if !all.copied().chain([self.tau, self.budget]).all(f64::is_finite) {
            return Err(Error::InvalidArgument("non-finite power subproblem input".into()));
        }
        if self.a.iter().any(|&x| x < 0.0) || self.b.iter().any(|&x| x <= 0.0) {
            return Err(Error::InvalidArgument("gains must be >= 0 and interference > 0".into()));
        }
        if self.tau <= 0.0 || self.budget <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tau ({}) and budget ({}) must be positive",
                self.tau, self.budget
            )));
        }
        Ok(())
    }

    /// Surrogate objective in nats.
    pub fn objective(&self, p: &[f64]) -> f64 {
        (0..p.len())
            .map(|k| {
                let d = p[k] - self.p_prev[k];
                (self.a[k] * p[k] / self.b[k]).ln_1p() + self.prices[k] * p[k] - 0.5 * self.tau * d * d
            })
            .sum()
    }

    /// Stationary point of subcarrier k for budget multiplier `mu`, clamped at zero.
    pub fn component(&self, k: usize, mu: f64) -> f64 {
        let tau = self.tau;
        // stationarity: 1/(beta + p) = e + tau p, with e = mu - price - tau p_prev
        let e = mu - self.prices[k] - tau * self.p_prev[k];
        if self.a[k] == 0.0 {
            return (-e / tau).max(0.0);
        }
        let beta = self.b[k] / self.a[k];
        let c = beta * e - 1.0;
        if c >= 0.0 {
            return 0.0;
        }
        let bq = e + tau * beta;
        let s = ((e - tau * beta).powi(2) + 4.0 * tau).sqrt();
        // positive root of tau p^2 + bq p + c, in the cancellation-free branch
        if bq >= 0.0 {
            -2.0 * c / (s + bq)
        } else {
            (s - bq) / (2.0 * tau)
        }
    }

    pub fn allocation(&self, mu: f64) -> Vec<f64> {
        (0..self.subcarriers()).map(|k| self.component(k, mu)).collect()
    }

    /// Upper end of the multiplier bracket; every component vanishes there.
    pub fn mu_upper(&self) -> f64 {
        (0..self.subcarriers())
            .map(|k| {
                let slope = if self.a[k] == 0.0 { 0.0 } else { self.a[k] / self.b[k] };
                slope + self.prices[k] + self.tau * self.p_prev[k]
            })
            .fold(0.0, f64::max)
            + self.tau * self.budget
    }

    /// The water-filling expression written in terms of the previous SINR
    /// `snr_k = a_k p_prev_k / b_k` and the shifted multiplier
    /// `mu_tilde_k = mu - prices_k`. Requires `p_prev > 0` and `a > 0`.
    pub fn reference_form(&self, mu: f64) -> Vec<f64> {
        let tau = self.tau;
        (0..self.subcarriers())
            .map(|k| {
                let p0 = self.p_prev[k];
                let inv_snr = self.b[k] / (self.a[k] * p0);
                let mt = mu - self.prices[k];
                let root = ((mt - tau * p0 * (1.0 + inv_snr)).powi(2) + 4.0 * tau).sqrt();
                (0.5 * p0 * (1.0 - inv_snr) - (mt - root) / (2.0 * tau)).max(0.0)
            })
            .collect()
    }
}

/// Solves the power subproblem, returning the allocation and the budget multiplier.
///
/// `bisect_tol` bounds the budget residual relative to the budget.
pub fn solve_power(sub: &PowerSubproblem, bisect_tol: f64) -> Result<(Vec<f64>, f64)> {
    sub.validate()?;
    let p0 = sub.allocation(0.0);
    if p0.iter().sum::<f64>() <= sub.budget {
        return Ok((p0, 0.0));
    }
    let (mut lo, mut hi) = (0.0, sub.mu_upper());
    let mut p_hi = sub.allocation(hi);
    assert!(
        p_hi.iter().sum::<f64>() <= sub.budget,
        "multiplier bracket does not enclose the budget"
    );
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p = sub.allocation(mid);
        if p.iter().sum::<f64>() > sub.budget {
            lo = mid;
        } else {
            hi = mid;
            let slack = sub.budget - p.iter().sum::<f64>();
            p_hi = p;
            if slack <= bisect_tol * sub.budget {
                break;
            }
        }
    }
    Ok((p_hi, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{power_pg_oracle, project_capped_simplex};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sub(rng: &mut impl Rng, k: usize) -> PowerSubproblem {
        PowerSubproblem {
            a: (0..k).map(|_| rng.gen_range(0.05..4.0)).collect(),
            b: (0..k).map(|_| rng.gen_range(0.1..2.0)).collect(),
            p_prev: (0..k).map(|_| rng.gen_range(0.0..1.0)).collect(),
            prices: (0..k).map(|_| -rng.gen_range(0.0..0.5)).collect(),
            tau: rng.gen_range(0.05..1.0),
            budget: rng.gen_range(0.5..5.0),
        }
    }

    #[test]
    fn classic_water_filling_limit() {
        let sub = PowerSubproblem {
            a: vec![1.0, 0.25],
            b: vec![1.0, 1.0],
            p_prev: vec![0.0, 0.0],
            prices: vec![0.0, 0.0],
            tau: 1e-8,
            budget: 3.0,
        };
        let (p, mu) = solve_power(&sub, 1e-12).unwrap();
        assert!((p[0] - 3.0).abs() < 1e-4 && p[1].abs() < 1e-4, "{p:?}");
        assert!((mu - 0.25).abs() < 1e-4, "{mu}");
    }

    #[test]
    fn dead_channel_stays_at_proximal_center() {
        let sub = PowerSubproblem {
            a: vec![0.0, 0.0],
            b: vec![1.0, 1.0],
            p_prev: vec![0.3, 0.7],
            prices: vec![0.0, 0.0],
            tau: 0.5,
            budget: 10.0,
        };
        let (p, mu) = solve_power(&sub, 1e-12).unwrap();
        assert_eq!(mu, 0.0);
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] - 0.7).abs() < 1e-15);
        // with a binding budget the dead channel is pulled down by mu/tau
        let tight = PowerSubproblem { budget: 0.5, ..sub };
        let (p, mu) = solve_power(&tight, 1e-14).unwrap();
        assert!((p[0] - (0.3 - mu / 0.5).max(0.0)).abs() < 1e-9);
        assert!((p.iter().sum::<f64>() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn symmetric_inputs_give_uniform_power() {
        let sub = PowerSubproblem {
            a: vec![0.7; 5],
            b: vec![0.3; 5],
            p_prev: vec![0.1; 5],
            prices: vec![-0.05; 5],
            tau: 0.1,
            budget: 2.0,
        };
        let (p, _) = solve_power(&sub, 1e-12).unwrap();
        assert!(p.iter().all(|x| (x - p[0]).abs() < 1e-12));
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut sub = random_sub(&mut ChaCha8Rng::seed_from_u64(0), 3);
        sub.b[1] = f64::NAN;
        assert!(matches!(solve_power(&sub, 1e-12), Err(Error::InvalidArgument(_))));
        let mut sub = random_sub(&mut ChaCha8Rng::seed_from_u64(0), 3);
        sub.prices.pop();
        assert!(matches!(solve_power(&sub, 1e-12), Err(Error::Dimension(_))));
        let mut sub = random_sub(&mut ChaCha8Rng::seed_from_u64(0), 3);
        sub.tau = 0.0;
        assert!(solve_power(&sub, 1e-12).is_err());
    }

    #[test]
    fn matches_projected_gradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let sub = random_sub(&mut rng, 8);
            let (p, _) = solve_power(&sub, 1e-13).unwrap();
            let o = power_pg_oracle(&sub.a, &sub.b, &sub.prices, &sub.p_prev, sub.tau, sub.budget, 1e-13, 2_000_000);
            let d = p.iter().zip(&o).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(d <= 1e-6 * sub.budget, "delta {d}");
        }
    }

    #[test]
    fn reference_form_agrees_with_kkt_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let mut sub = random_sub(&mut rng, 6);
            for p in sub.p_prev.iter_mut() {
                *p += 0.05;
            }
            let mu = rng.gen_range(0.0..1.0);
            let lit = sub.reference_form(mu);
            for (k, l) in lit.iter().enumerate() {
                let c = sub.component(k, mu);
                assert!((c - l).abs() <= 1e-9 * (1.0 + c.abs()), "k={k} kkt={c} ref={l}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn feasible_and_complementary(seed in 0u64..100_000, k in 1usize..10) {
            let sub = random_sub(&mut ChaCha8Rng::seed_from_u64(seed), k);
            let tol = 1e-12;
            let (p, mu) = solve_power(&sub, tol).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            prop_assert!(total <= sub.budget * (1.0 + tol));
            prop_assert!(mu >= 0.0);
            prop_assert!(mu * (sub.budget - total) <= 1e-10 * sub.budget * mu.max(1.0));
        }

        #[test]
        fn improves_on_projected_previous_point(seed in 0u64..100_000, k in 1usize..10) {
            let sub = random_sub(&mut ChaCha8Rng::seed_from_u64(seed), k);
            let (p, _) = solve_power(&sub, 1e-12).unwrap();
            let base = project_capped_simplex(&sub.p_prev, sub.budget);
            prop_assert!(sub.objective(&p) >= sub.objective(&base) - 1e-12);
        }

        #[test]
        fn permutation_equivariant(seed in 0u64..100_000, k in 2usize..8, shift in 1usize..7) {
            let sub = random_sub(&mut ChaCha8Rng::seed_from_u64(seed), k);
            let rot = |v: &Vec<f64>| { let mut w = v.clone(); w.rotate_left(shift % k); w };
            let perm = PowerSubproblem {
                a: rot(&sub.a), b: rot(&sub.b), p_prev: rot(&sub.p_prev), prices: rot(&sub.prices),
                tau: sub.tau, budget: sub.budget,
            };
            let (p, _) = solve_power(&sub, 1e-13).unwrap();
            let (pp, _) = solve_power(&perm, 1e-13).unwrap();
            for (x, y) in rot(&p).iter().zip(&pp) {
                prop_assert!((x - y).abs() <= 1e-9 * sub.budget);
            }
        }

        #[test]
        fn continuous_in_inputs(seed in 0u64..100_000, k in 1usize..8) {
            let sub = random_sub(&mut ChaCha8Rng::seed_from_u64(seed), k);
            let delta = 1e-7;
            let mut pert = sub.clone();
            for x in pert.a.iter_mut() { *x += delta; }
            for x in pert.prices.iter_mut() { *x -= delta; }
            let (p, _) = solve_power(&sub, 1e-14).unwrap();
            let (pp, _) = solve_power(&pert, 1e-14).unwrap();
            let d = p.iter().zip(&pp).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            // Lipschitz constant of the solution map is at most ~ (1 + max a/b^2) / tau
            let lip = (1.0 + sub.a.iter().zip(&sub.b).map(|(a, b)| a / (b * b)).fold(0.0, f64::max)) / sub.tau;
            prop_assert!(d <= 10.0 * lip * delta + 1e-10, "d={d} lip={lip}");
        }
    }
}
