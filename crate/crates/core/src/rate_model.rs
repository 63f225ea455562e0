//! Equivalent channels, SINR and rates, and the analytic gradients that
//! drive the distributed optimizer.
//!
//! Everything here works in nats. Rates are divided by `ln 2` only by the
//! `*_bps` helpers used for reporting.
//!
//! Gradients with respect to reflection coefficients are Wirtinger
//! gradients `dR/dphi*`: the first-order change of `R` under a perturbation
//! `delta` is `2 Re <grad, delta>`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::metasurface::ReflectionProfile;

/// Variables of one user: per-subcarrier powers (watts) and its surface's
/// reflection coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub p: Vec<f64>,
    pub phi: ReflectionProfile,
}

impl UserState {
    pub fn new(p: Vec<f64>, phi: ReflectionProfile) -> Self {
        UserState { p, phi }
    }

    /// Membership in the user's feasible set: nonnegative powers within the
    /// budget and coefficients inside the unit disk.
    pub fn is_feasible(&self, budget: f64, power_tol: f64, modulus_tol: f64) -> bool {
        self.p.iter().all(|&x| x >= 0.0 && x.is_finite())
            && self.p.iter().sum::<f64>() <= budget + power_tol
            && self.phi.max_modulus() <= 1.0 + modulus_tol
    }
}

/// Cascaded BS-RIS-UE coefficients `v[j][q][k][m] = g[j][q][k][m] h[j][k][m]`,
/// so that `H_jq[k] = h_jq^d[k] + sum_m v[j][q][k][m] phi_j[k][m]`.
#[derive(Debug, Clone)]
pub struct LinkCoefficients {
    users: usize,
    subcarriers: usize,
    elements: usize,
    v: Vec<Complex64>,
}

impl LinkCoefficients {
    pub fn new(ch: &ChannelSet) -> Self {
        let (nq, nk, nm) = (ch.users, ch.subcarriers, ch.elements);
        let mut v = Vec::with_capacity(nq * nq * nk * nm);
        for j in 0..nq {
            for q in 0..nq {
                for k in 0..nk {
                    let g = ch.ris_to_ue_row(j, q, k);
                    let h = ch.bs_to_ris_row(j, k);
                    v.extend(g.iter().zip(h).map(|(a, b)| a * b));
                }
            }
        }
        LinkCoefficients { users: nq, subcarriers: nk, elements: nm, v }
    }

    #[inline]
    pub fn row(&self, j: usize, q: usize, k: usize) -> &[Complex64] {
        let s = ((j * self.users + q) * self.subcarriers + k) * self.elements;
        &self.v[s..s + self.elements]
    }

    /// The `M x M` matrix `conj(v) (h^d 1^T + v^T)` for one link and
    /// subcarrier. Only used for inspection; gradients use the rank-one
    /// factors directly.
    pub fn a_matrix(&self, ch: &ChannelSet, j: usize, q: usize, k: usize) -> Vec<Vec<Complex64>> {
        let v = self.row(j, q, k);
        let hd = ch.direct(j, q, k);
        v.iter()
            .map(|a| v.iter().map(|b| a.conj() * (hd + b)).collect())
            .collect()
    }
}

/// `H_jq(phi_j)` at subcarrier `k`: direct path plus the reflection through RIS j.
pub fn equivalent_channel(
    j: usize,
    q: usize,
    k: usize,
    channels: &ChannelSet,
    phi_j: &ReflectionProfile,
) -> Complex64 {
    let mut h = channels.direct(j, q, k);
    if channels.elements > 0 {
        let g = channels.ris_to_ue_row(j, q, k);
        let b = channels.bs_to_ris_row(j, k);
        for ((gm, bm), pm) in g.iter().zip(b).zip(phi_j.row(k)) {
            h += gm * bm * pm;
        }
    }
    h
}

/// Channel quantities of one network state, shared by every rate and
/// gradient computation at that state.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub users: usize,
    pub subcarriers: usize,
    /// `H_jq[k]`, indexed `[j][q][k]`.
    h: Vec<Complex64>,
    /// Interference plus noise at UE q, `[q][k]`.
    mui: Vec<f64>,
    /// Received useful power at UE q, `[q][k]`.
    signal: Vec<f64>,
}

impl Evaluation {
    #[inline]
    pub fn channel(&self, j: usize, q: usize, k: usize) -> Complex64 {
        self.h[(j * self.users + q) * self.subcarriers + k]
    }

    #[inline]
    pub fn mui(&self, q: usize, k: usize) -> f64 {
        self.mui[q * self.subcarriers + k]
    }

    #[inline]
    pub fn signal(&self, q: usize, k: usize) -> f64 {
        self.signal[q * self.subcarriers + k]
    }

    #[inline]
    pub fn snr(&self, q: usize, k: usize) -> f64 {
        self.signal(q, k) / self.mui(q, k)
    }

    /// Interference-plus-noise profile of UE q across subcarriers.
    pub fn mui_row(&self, q: usize) -> &[f64] {
        &self.mui[q * self.subcarriers..(q + 1) * self.subcarriers]
    }
}

/// Rate and gradient evaluator over one channel realization.
#[derive(Debug, Clone)]
pub struct RateModel<'a> {
    pub channels: &'a ChannelSet,
    pub coeffs: LinkCoefficients,
    /// Per-UE noise power in watts.
    pub noise: f64,
}

impl<'a> RateModel<'a> {
    pub fn new(channels: &'a ChannelSet, noise: f64) -> Self {
        RateModel {
            channels,
            coeffs: LinkCoefficients::new(channels),
            noise,
        }
    }

    pub fn users(&self) -> usize {
        self.channels.users
    }

    pub fn subcarriers(&self) -> usize {
        self.channels.subcarriers
    }

    pub fn elements(&self) -> usize {
        self.channels.elements
    }

    #[inline]
    fn link(&self, j: usize, q: usize, k: usize, phi_j: &ReflectionProfile) -> Complex64 {
        let mut h = self.channels.direct(j, q, k);
        for (v, p) in self.coeffs.row(j, q, k).iter().zip(phi_j.row(k)) {
            h += v * p;
        }
        h
    }

    pub fn evaluate(&self, state: &[UserState]) -> Evaluation {
        let (nq, nk) = (self.users(), self.subcarriers());
        assert_eq!(state.len(), nq, "state has {} users, channels {}", state.len(), nq);
        let mut h = Vec::with_capacity(nq * nq * nk);
        for (j, sj) in state.iter().enumerate() {
            for q in 0..nq {
                for k in 0..nk {
                    h.push(self.link(j, q, k, &sj.phi));
                }
            }
        }
        let mut mui = vec![self.noise; nq * nk];
        let mut signal = vec![0.0; nq * nk];
        for q in 0..nq {
            for k in 0..nk {
                for (j, sj) in state.iter().enumerate() {
                    let g = h[(j * nq + q) * nk + k].norm_sqr() * sj.p[k];
                    if j == q {
                        signal[q * nk + k] = g;
                    } else {
                        mui[q * nk + k] += g;
                    }
                }
            }
        }
        Evaluation { users: nq, subcarriers: nk, h, mui, signal }
    }

    /// Per-(user, subcarrier) SINR and interference-plus-noise.
    pub fn snr_and_mui(&self, state: &[UserState]) -> Vec<Vec<(f64, f64)>> {
        let ev = self.evaluate(state);
        (0..ev.users)
            .map(|q| (0..ev.subcarriers).map(|k| (ev.snr(q, k), ev.mui(q, k))).collect())
            .collect()
    }

    pub fn user_rate_nats(&self, q: usize, ev: &Evaluation) -> f64 {
        (0..ev.subcarriers).map(|k| ev.snr(q, k).ln_1p()).sum()
    }

    /// Achievable rate of user q in bps/Hz.
    pub fn user_rate(&self, q: usize, state: &[UserState]) -> f64 {
        self.user_rate_nats(q, &self.evaluate(state)) / std::f64::consts::LN_2
    }

    pub fn sum_rate_nats(&self, ev: &Evaluation) -> f64 {
        (0..ev.users).map(|q| self.user_rate_nats(q, ev)).sum()
    }

    /// Network sum rate in bps/Hz.
    pub fn sum_rate(&self, state: &[UserState]) -> f64 {
        self.sum_rate_nats(&self.evaluate(state)) / std::f64::consts::LN_2
    }

    /// Per-user rates in bps/Hz.
    pub fn user_rates(&self, state: &[UserState]) -> Vec<f64> {
        let ev = self.evaluate(state);
        (0..ev.users)
            .map(|q| self.user_rate_nats(q, &ev) / std::f64::consts::LN_2)
            .collect()
    }

    /// `dR_j / dp_qk` for one victim `j != q`: the marginal harm user q's
    /// power inflicts on user j.
    pub fn pair_power_price(&self, q: usize, j: usize, ev: &Evaluation) -> Vec<f64> {
        (0..ev.subcarriers)
            .map(|k| {
                let mui = ev.mui(j, k);
                let total = mui + ev.signal(j, k);
                // -|H_qj|^2 snr / ((1 + snr) MUI) = -|H_qj|^2 S / (MUI (MUI + S))
                -ev.channel(q, j, k).norm_sqr() * ev.signal(j, k) / (mui * total)
            })
            .collect()
    }

    /// Interference prices of user q's powers: `sum_{j != q} dR_j/dp_q`.
    pub fn power_prices(&self, q: usize, ev: &Evaluation) -> Vec<f64> {
        let mut acc = vec![0.0; ev.subcarriers];
        for j in (0..ev.users).filter(|&j| j != q) {
            for (a, x) in acc.iter_mut().zip(self.pair_power_price(q, j, ev)) {
                *a += x;
            }
        }
        acc
    }

    /// `dR_q / dp_qk`, the own-rate derivative.
    pub fn own_power_gradient(&self, q: usize, ev: &Evaluation) -> Vec<f64> {
        (0..ev.subcarriers)
            .map(|k| ev.channel(q, q, k).norm_sqr() / (ev.mui(q, k) + ev.signal(q, k)))
            .collect()
    }

    /// Wirtinger gradient of R_q with respect to user q's own coefficients.
    pub fn own_phi_gradient(&self, q: usize, state: &[UserState], ev: &Evaluation) -> ReflectionProfile {
        let (nk, nm) = (ev.subcarriers, self.elements());
        let p = &state[q].p;
        let mut out = ReflectionProfile::zeros(nk, nm);
        for k in 0..nk {
            let scale = p[k] / (ev.mui(q, k) + ev.signal(q, k));
            let h = ev.channel(q, q, k) * scale;
            for (m, v) in self.coeffs.row(q, q, k).iter().enumerate() {
                out.set(k, m, v.conj() * h);
            }
        }
        out
    }

    /// Wirtinger gradient of R_j with respect to user q's coefficients, `j != q`.
    pub fn pair_phi_price(&self, q: usize, j: usize, state: &[UserState], ev: &Evaluation) -> ReflectionProfile {
        let (nk, nm) = (ev.subcarriers, self.elements());
        let p = &state[q].p;
        let mut out = ReflectionProfile::zeros(nk, nm);
        for k in 0..nk {
            let mui = ev.mui(j, k);
            let s = ev.signal(j, k);
            let scale = -s / (mui * (mui + s)) * p[k];
            let h = ev.channel(q, j, k) * scale;
            for (m, v) in self.coeffs.row(q, j, k).iter().enumerate() {
                out.set(k, m, v.conj() * h);
            }
        }
        out
    }

    /// `sum_{j != q} dR_j / dphi_q*`.
    pub fn phi_prices(&self, q: usize, state: &[UserState], ev: &Evaluation) -> ReflectionProfile {
        let mut acc = ReflectionProfile::zeros(ev.subcarriers, self.elements());
        for j in (0..ev.users).filter(|&j| j != q) {
            let part = self.pair_phi_price(q, j, state, ev);
            for (a, x) in acc.as_mut_slice().iter_mut().zip(part.as_slice()) {
                *a += x;
            }
        }
        acc
    }

    /// Own-rate gradient and interference price with respect to `phi_q*`.
    pub fn phi_gradients(&self, q: usize, state: &[UserState]) -> (ReflectionProfile, ReflectionProfile) {
        let ev = self.evaluate(state);
        (self.own_phi_gradient(q, state, &ev), self.phi_prices(q, state, &ev))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{fd_gradient, fd_wirtinger, random_channels, random_state};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn flat_single(gain: Complex64) -> ChannelSet {
        let mut ch = ChannelSet::zeros(1, 1, 0);
        *ch.direct_mut(0, 0, 0) = gain;
        ch
    }

    #[test]
    fn no_reflection_leaves_direct_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = random_channels(&mut rng, 2, 3, 4);
        let zero = ReflectionProfile::zeros(3, 4);
        for k in 0..3 {
            assert_eq!(equivalent_channel(1, 0, k, &ch, &zero), ch.direct(1, 0, k));
        }
    }

    #[test]
    fn single_element_passthrough() {
        let mut ch = ChannelSet::zeros(1, 1, 1);
        *ch.ris_to_ue_mut(0, 0, 0, 0) = c(1.0, 0.0);
        *ch.bs_to_ris_mut(0, 0, 0) = c(1.0, 0.0);
        let phi = ReflectionProfile::from_fn(1, 1, |_, _| c(0.3, -0.4));
        assert_eq!(equivalent_channel(0, 0, 0, &ch, &phi), c(0.3, -0.4));
    }

    #[test]
    fn equivalent_channel_matches_termwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = random_channels(&mut rng, 2, 3, 4);
        let st = random_state(&mut rng, 2, 3, 4, 1.0);
        let model = RateModel::new(&ch, 0.1);
        let ev = model.evaluate(&st);
        for j in 0..2 {
            for q in 0..2 {
                for k in 0..3 {
                    let mut want = ch.direct(j, q, k);
                    for m in 0..4 {
                        want += ch.ris_to_ue(j, q, k, m) * ch.bs_to_ris(j, k, m) * st[j].phi.get(k, m);
                    }
                    assert!((equivalent_channel(j, q, k, &ch, &st[j].phi) - want).norm() < 1e-12);
                    assert!((ev.channel(j, q, k) - want).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cascade_and_rank_one_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = random_channels(&mut rng, 2, 2, 3);
        let lc = LinkCoefficients::new(&ch);
        for m in 0..3 {
            assert_eq!(lc.row(1, 0, 1)[m], ch.ris_to_ue(1, 0, 1, m) * ch.bs_to_ris(1, 1, m));
        }
        let a = lc.a_matrix(&ch, 0, 1, 1);
        // all 2x2 minors vanish for a rank-one matrix
        for r in 0..3 {
            for s in 0..3 {
                let minor = a[0][r] * a[1][s] - a[0][s] * a[1][r];
                assert!(minor.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rate_examples() {
        let ch = flat_single(c(1.0, 0.0));
        let model = RateModel::new(&ch, 0.5);
        let st = vec![UserState::new(vec![0.5], ReflectionProfile::zeros(1, 0))];
        assert!((model.user_rate(0, &st) - 1.0).abs() < 1e-15);
        let zero = vec![UserState::new(vec![0.0], ReflectionProfile::zeros(1, 0))];
        assert_eq!(model.user_rate(0, &zero), 0.0);
        assert_eq!(model.sum_rate(&zero), 0.0);
        assert_eq!(model.sum_rate(&st), model.user_rate(0, &st));
    }

    #[test]
    fn symmetric_two_user_sinr() {
        // |H_qq|^2 p = 3 sigma^2 and |H_jq|^2 p = sigma^2 -> SINR 3/2
        let mut ch = ChannelSet::zeros(2, 1, 0);
        *ch.direct_mut(0, 0, 0) = c(3f64.sqrt(), 0.0);
        *ch.direct_mut(1, 1, 0) = c(0.0, 3f64.sqrt());
        *ch.direct_mut(0, 1, 0) = c(1.0, 0.0);
        *ch.direct_mut(1, 0, 0) = c(0.0, -1.0);
        let model = RateModel::new(&ch, 1.0);
        let st: Vec<UserState> = (0..2).map(|_| UserState::new(vec![1.0], ReflectionProfile::zeros(1, 0))).collect();
        let want = (1.0f64 + 1.5).log2();
        for q in 0..2 {
            assert!((model.user_rate(q, &st) - want).abs() < 1e-12);
            assert!((want - 1.3219).abs() < 1e-4);
        }
        let sm = model.snr_and_mui(&st);
        assert!((sm[0][0].0 - 1.5).abs() < 1e-12 && (sm[0][0].1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn snr_without_interferers_is_one() {
        let ch = flat_single(c(0.0, 2.0));
        let model = RateModel::new(&ch, 0.2);
        let st = vec![UserState::new(vec![0.2 / 4.0], ReflectionProfile::zeros(1, 0))];
        assert!((model.snr_and_mui(&st)[0][0].0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn snr_consistency_and_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = random_channels(&mut rng, 2, 4, 3);
        let st = random_state(&mut rng, 2, 4, 3, 1.0);
        let model = RateModel::new(&ch, 0.3);
        let sm = model.snr_and_mui(&st);
        for q in 0..2 {
            let from_snr: f64 = sm[q].iter().map(|(s, _)| (1.0 + s).log2()).sum();
            assert!((from_snr - model.user_rate(q, &st)).abs() < 1e-12);
            assert!(sm[q].iter().all(|(_, mui)| *mui >= 0.3));
        }
        let sum = model.user_rate(0, &st) + model.user_rate(1, &st);
        assert!((sum - model.sum_rate(&st)).abs() < 1e-12);
    }

    #[test]
    fn single_user_has_no_prices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = random_channels(&mut rng, 1, 4, 2);
        let st = random_state(&mut rng, 1, 4, 2, 1.0);
        let model = RateModel::new(&ch, 0.1);
        let ev = model.evaluate(&st);
        assert!(model.power_prices(0, &ev).iter().all(|x| *x == 0.0));
        let (_, pi) = model.phi_gradients(0, &st);
        assert!(pi.as_slice().iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn zero_cross_channels_have_no_prices() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut ch = random_channels(&mut rng, 2, 3, 0);
        for k in 0..3 {
            *ch.direct_mut(0, 1, k) = c(0.0, 0.0);
            *ch.direct_mut(1, 0, k) = c(0.0, 0.0);
        }
        let st = random_state(&mut rng, 2, 3, 0, 1.0);
        let model = RateModel::new(&ch, 0.1);
        let ev = model.evaluate(&st);
        for q in 0..2 {
            assert!(model.power_prices(q, &ev).iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn zero_power_kills_own_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ch = random_channels(&mut rng, 2, 3, 2);
        let mut st = random_state(&mut rng, 2, 3, 2, 1.0);
        st[0].p = vec![0.0; 3];
        let model = RateModel::new(&ch, 0.1);
        let (gamma, _) = model.phi_gradients(0, &st);
        assert!(gamma.as_slice().iter().all(|x| x.norm() == 0.0));
    }

    fn others_rate(model: &RateModel, st: &[UserState], q: usize) -> f64 {
        let ev = model.evaluate(st);
        (0..st.len()).filter(|&j| j != q).map(|j| model.user_rate_nats(j, &ev)).sum()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().chain(a).map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn prices_and_own_gradient_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = random_channels(&mut rng, 2, 2, 2);
        let st = random_state(&mut rng, 2, 2, 2, 1.0);
        let model = RateModel::new(&ch, 0.2);
        let ev = model.evaluate(&st);
        for q in 0..2 {
            let fd = fd_gradient(
                |p: &[f64]| {
                    let mut s = st.clone();
                    s[q].p = p.to_vec();
                    others_rate(&model, &s, q)
                },
                &st[q].p,
                1e-6,
            );
            assert!(rel_err(&model.power_prices(q, &ev), &fd) <= 1e-5);
            // the full derivative of R_q splits into own gradient plus prices of R_q's sum
            let fd_total = fd_gradient(
                |p: &[f64]| {
                    let mut s = st.clone();
                    s[q].p = p.to_vec();
                    model.sum_rate_nats(&model.evaluate(&s))
                },
                &st[q].p,
                1e-6,
            );
            let analytic: Vec<f64> = model
                .own_power_gradient(q, &ev)
                .iter()
                .zip(model.power_prices(q, &ev))
                .map(|(a, b)| a + b)
                .collect();
            assert!(rel_err(&analytic, &fd_total) <= 1e-5);
        }
    }

    #[test]
    fn phi_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ch = random_channels(&mut rng, 2, 2, 2);
        let st = random_state(&mut rng, 2, 2, 2, 1.0);
        let model = RateModel::new(&ch, 0.2);
        for q in 0..2 {
            let (gamma, pi) = model.phi_gradients(q, &st);
            let with_phi = |z: &[Complex64]| {
                let mut s = st.clone();
                s[q].phi.as_mut_slice().copy_from_slice(z);
                s
            };
            let fd_own = fd_wirtinger(
                |z: &[Complex64]| {
                    let s = with_phi(z);
                    model.user_rate_nats(q, &model.evaluate(&s))
                },
                st[q].phi.as_slice(),
                1e-6,
            );
            let fd_others = fd_wirtinger(|z: &[Complex64]| others_rate(&model, &with_phi(z), q), st[q].phi.as_slice(), 1e-6);
            let flat = |v: &[Complex64]| v.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<_>>();
            assert!(rel_err(&flat(gamma.as_slice()), &flat(&fd_own)) <= 1e-5);
            assert!(rel_err(&flat(pi.as_slice()), &flat(&fd_others)) <= 1e-5);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn prices_are_nonpositive(seed in 0u64..10_000, nq in 1usize..4, nk in 1usize..5, nm in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = random_channels(&mut rng, nq, nk, nm);
            let st = random_state(&mut rng, nq, nk, nm, 1.0);
            let model = RateModel::new(&ch, 0.1);
            let ev = model.evaluate(&st);
            for q in 0..nq {
                prop_assert!(model.power_prices(q, &ev).iter().all(|x| *x <= 0.0));
            }
        }

        #[test]
        fn analytic_gradients_match_fd_on_random_instances(
            seed in 0u64..10_000, nq in 1usize..4, nk in 1usize..5, nm in 1usize..4
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = random_channels(&mut rng, nq, nk, nm);
            let st = random_state(&mut rng, nq, nk, nm, 1.0);
            let model = RateModel::new(&ch, 0.2);
            let ev = model.evaluate(&st);
            for q in 0..nq {
                let fd = fd_gradient(|p: &[f64]| {
                    let mut s = st.clone();
                    s[q].p = p.to_vec();
                    others_rate(&model, &s, q)
                }, &st[q].p, 1e-6);
                let an = model.power_prices(q, &ev);
                if nq > 1 {
                    prop_assert!(rel_err(&an, &fd) <= 1e-5, "prices {:?} fd {:?}", an, fd);
                }
                let (gamma, _) = model.phi_gradients(q, &st);
                let fd_own = fd_wirtinger(|z: &[Complex64]| {
                    let mut s = st.clone();
                    s[q].phi.as_mut_slice().copy_from_slice(z);
                    model.user_rate_nats(q, &model.evaluate(&s))
                }, st[q].phi.as_slice(), 1e-6);
                let flat = |v: &[Complex64]| v.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<_>>();
                prop_assert!(rel_err(&flat(gamma.as_slice()), &flat(&fd_own)) <= 1e-5);
            }
        }

        #[test]
        fn single_user_rate_is_nondecreasing_in_power(seed in 0u64..10_000, nk in 1usize..5, k in 0usize..4, bump in 0.0f64..2.0) {
            let k = k % nk;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = random_channels(&mut rng, 1, nk, 2);
            let st = random_state(&mut rng, 1, nk, 2, 1.0);
            let model = RateModel::new(&ch, 0.1);
            let mut up = st.clone();
            up[0].p[k] += bump;
            prop_assert!(model.user_rate(0, &up) >= model.user_rate(0, &st));
        }

        #[test]
        fn sum_rate_is_permutation_invariant(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (nq, nk, nm) = (3, 3, 2);
            let ch = random_channels(&mut rng, nq, nk, nm);
            let st = random_state(&mut rng, nq, nk, nm, 1.0);
            let perm = [2usize, 0, 1];
            let mut pch = ChannelSet::zeros(nq, nk, nm);
            for j in 0..nq {
                for q in 0..nq {
                    for k in 0..nk {
                        *pch.direct_mut(perm[j], perm[q], k) = ch.direct(j, q, k);
                        for m in 0..nm {
                            *pch.ris_to_ue_mut(perm[j], perm[q], k, m) = ch.ris_to_ue(j, q, k, m);
                        }
                    }
                }
                for k in 0..nk {
                    for m in 0..nm {
                        *pch.bs_to_ris_mut(perm[j], k, m) = ch.bs_to_ris(j, k, m);
                    }
                }
            }
            let mut pst = st.clone();
            for j in 0..nq {
                pst[perm[j]] = st[j].clone();
            }
            let a = RateModel::new(&ch, 0.1).sum_rate(&st);
            let b = RateModel::new(&pch, 0.1).sum_rate(&pst);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
