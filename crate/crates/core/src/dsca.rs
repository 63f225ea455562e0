//! Distributed successive concave approximation.
//!
//! Every iteration each user solves its strongly concave surrogate (power
//! water-filling plus the RIS subproblem) against the current iterate and
//! interference prices, then all users move a step `alpha` towards their
//! best responses.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::metasurface::{initial_params, lorentzian_response, omega_grid, LorentzianParams, ReflectionProfile};
use crate::netbus::{round_exchange, Bus, NeighborSets};
use crate::power_alloc::{solve_power, PowerSubproblem};
use crate::rate_model::{Evaluation, RateModel, UserState};
use crate::ris_opt::{fit_lorentzian, pdd_solve, RisSubproblem};
use crate::metasurface::limit_modulus;
use crate::scenario::{AlgoParams, ScenarioConfig, UpdateOrder};

/// Feasibility slack used when checking iterates.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Diminishing step `alpha <- alpha (1 - theta alpha)`; `theta = 0` keeps it fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeRule {
    pub alpha0: f64,
    pub theta: f64,
}

impl StepSizeRule {
    pub fn next(&self, alpha: f64) -> f64 {
        alpha * (1.0 - self.theta * alpha)
    }

    /// The first `n` step sizes.
    pub fn sequence(&self, n: usize) -> Vec<f64> {
        std::iter::successors(Some(self.alpha0), |&a| Some(self.next(a))).take(n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// Step used to reach this iterate (`None` for the initial point).
    pub alpha: Option<f64>,
    pub sum_rate_bps: f64,
    pub user_rates: Vec<f64>,
    /// Largest change of any user's variables, powers normalized by the budget.
    pub var_change: Option<f64>,
    /// Relative change of the sum rate.
    pub rate_change: Option<f64>,
    /// `max(var_change, rate_change)`, compared against the tolerance.
    pub term_metric: Option<f64>,
    pub feasible: bool,
    /// Largest realizability gap left by any RIS subproblem in this iteration.
    pub pdd_violation: Option<f64>,
}

/// Where best responses get their interference prices from.
#[derive(Debug, Clone, Default)]
pub enum PriceSource {
    /// Direct in-process evaluation of the price sums.
    #[default]
    Direct,
    /// Exchange over a simulated bus with the given neighbor sets.
    Bus(NeighborSets),
}

/// One user's best response and solver diagnostics.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub state: UserState,
    pub params: LorentzianParams,
    pub power_multiplier: f64,
    pub pdd_violation: Option<f64>,
}

/// Interference prices seen by one user.
#[derive(Debug, Clone)]
pub struct Prices {
    pub power: Vec<f64>,
    pub phi: ReflectionProfile,
}

/// Frozen-interference surrogate best response of user `q`.
#[allow(clippy::too_many_arguments)]
pub fn best_response(
    q: usize,
    state: &[UserState],
    params: &LorentzianParams,
    model: &RateModel,
    ev: &Evaluation,
    prices: &Prices,
    mui: &[f64],
    budget: f64,
    algo: &AlgoParams,
) -> Result<BestResponse> {
    let nk = model.subcarriers();
    let sub = PowerSubproblem {
        a: (0..nk).map(|k| ev.channel(q, q, k).norm_sqr()).collect(),
        b: mui.to_vec(),
        p_prev: state[q].p.clone(),
        prices: prices.power.clone(),
        tau: algo.tau,
        budget,
    };
    let (p, mu) = solve_power(&sub, algo.bisect_tol)?;
    if model.elements() == 0 {
        return Ok(BestResponse {
            state: UserState::new(p, state[q].phi.clone()),
            params: params.clone(),
            power_multiplier: mu,
            pdd_violation: None,
        });
    }
    let gamma = model.own_phi_gradient(q, state, ev);
    let mut linear = gamma;
    for (a, b) in linear.as_mut_slice().iter_mut().zip(prices.phi.as_slice()) {
        *a = (*a + b) * 2.0;
    }
    let ris = RisSubproblem { linear_term: linear, phi_prev: state[q].phi.clone(), tau: algo.tau, params_init: params.clone() };
    let out = pdd_solve(&ris, &algo.pdd, &algo.lorentz_bounds)?;
    Ok(BestResponse {
        state: UserState::new(p, out.phi),
        params: out.params,
        power_multiplier: mu,
        pdd_violation: Some(out.diagnostics.final_violation),
    })
}

/// Convex combination `x + alpha (x_hat - x)` for every user.
pub fn step(state: &[UserState], responses: &[UserState], alpha: f64) -> Vec<UserState> {
    state.iter().zip(responses).map(|(x, r)| combine(x, r, alpha)).collect()
}

fn combine(x: &UserState, r: &UserState, alpha: f64) -> UserState {
    let p = x.p.iter().zip(&r.p).map(|(a, b)| a + alpha * (b - a)).collect();
    let mut phi = x.phi.clone();
    for (a, b) in phi.as_mut_slice().iter_mut().zip(r.phi.as_slice()) {
        *a += (b - *a) * alpha;
    }
    UserState::new(p, phi)
}

/// Uniform power and spread-out resonances scaled into the unit disk.
pub fn initial_state(cfg: &ScenarioConfig) -> Result<(Vec<UserState>, Vec<LorentzianParams>)> {
    let omega = omega_grid(cfg.subcarriers);
    let m = cfg.active_elements();
    let mut states = Vec::with_capacity(cfg.users);
    let mut params = Vec::with_capacity(cfg.users);
    for q in 0..cfg.users {
        let pr = initial_params(m, &omega, &cfg.algo.lorentz_bounds);
        let phi = lorentzian_response(&pr, &omega)?;
        states.push(UserState::new(vec![cfg.power_w[q] / cfg.subcarriers as f64; cfg.subcarriers], phi));
        params.push(pr);
    }
    Ok((states, params))
}

fn variable_change(a: &[UserState], b: &[UserState], budgets: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(budgets)
        .map(|((x, y), budget)| {
            let dp = x.p.iter().zip(&y.p).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max) / budget;
            dp.max(x.phi.max_abs_diff(&y.phi))
        })
        .fold(0.0, f64::max)
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / old.abs().max(1e-12)
}

/// Final outcome of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    /// Final iterate with every surface re-fitted to be exactly realizable.
    pub state: Vec<UserState>,
    pub params: Vec<LorentzianParams>,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
    /// Sum rate of the realizable final state, bps/Hz.
    pub final_sum_rate: f64,
    /// Sum rate of the last iterate before the realizability re-fit, bps/Hz.
    pub iterate_sum_rate: f64,
    /// Price traffic in bytes, when prices went over the bus.
    pub overhead_bytes: Option<u64>,
    pub surface: SurfaceSource,
}

/// Origin of the reported surface configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceSource {
    /// No surfaces, or the iterate is reported unchanged.
    Iterate,
    /// Lorentzian re-fit of the final iterate.
    Refit,
    /// Parameters of the last best responses.
    LastResponse,
}

/// Iteration driver. Owns the iterate; the subproblem solvers are pure.
pub struct Dsca<'a> {
    cfg: &'a ScenarioConfig,
    model: RateModel<'a>,
    source: PriceSource,
    bus: Option<Bus>,
    rule: StepSizeRule,
    state: Vec<UserState>,
    params: Vec<LorentzianParams>,
    alpha: f64,
    t: usize,
    sum_rate: f64,
    history: Vec<IterationRecord>,
    converged: bool,
}

impl<'a> Dsca<'a> {
    pub fn new(cfg: &'a ScenarioConfig, channels: &'a ChannelSet, source: PriceSource) -> Result<Self> {
        cfg.validate()?;
        if channels.users != cfg.users || channels.subcarriers != cfg.subcarriers || channels.elements != cfg.active_elements() {
            return Err(Error::Dimension(format!(
                "channels ({}, {}, {}) do not match the scenario ({}, {}, {})",
                channels.users,
                channels.subcarriers,
                channels.elements,
                cfg.users,
                cfg.subcarriers,
                cfg.active_elements()
            )));
        }
        let model = RateModel::new(channels, cfg.noise_w);
        let (state, params) = initial_state(cfg)?;
        let bus = match &source {
            PriceSource::Direct => None,
            PriceSource::Bus(n) => {
                if n.users() != cfg.users {
                    return Err(Error::Dimension(format!("neighbor sets for {} users, scenario has {}", n.users(), cfg.users)));
                }
                Some(Bus::new(n.clone()))
            }
        };
        let ev = model.evaluate(&state);
        let rates: Vec<f64> = (0..cfg.users).map(|q| model.user_rate_nats(q, &ev) / std::f64::consts::LN_2).collect();
        let sum_rate = rates.iter().sum();
        let feasible = Self::feasible(cfg, &state);
        let rule = StepSizeRule { alpha0: cfg.algo.alpha0, theta: cfg.algo.theta };
        Ok(Dsca {
            cfg,
            model,
            source,
            bus,
            rule,
            alpha: rule.alpha0,
            t: 0,
            sum_rate,
            history: vec![IterationRecord {
                t: 0,
                alpha: None,
                sum_rate_bps: sum_rate,
                user_rates: rates,
                var_change: None,
                rate_change: None,
                term_metric: None,
                feasible,
                pdd_violation: None,
            }],
            state,
            params,
            converged: false,
        })
    }

    fn feasible(cfg: &ScenarioConfig, state: &[UserState]) -> bool {
        state.iter().zip(&cfg.power_w).all(|(s, &b)| s.is_feasible(b, FEASIBILITY_TOL * b, FEASIBILITY_TOL))
    }

    pub fn state(&self) -> &[UserState] {
        &self.state
    }

    pub fn params(&self) -> &[LorentzianParams] {
        &self.params
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn model(&self) -> &RateModel<'a> {
        &self.model
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn bus(&self) -> Option<&Bus> {
        self.bus.as_ref()
    }

    /// Prices and interference measurements for every user at `state`.
    fn gather(&self, state: &[UserState], ev: &Evaluation, round: usize) -> Result<Vec<(Prices, Vec<f64>)>> {
        let (nk, nm) = (self.model.subcarriers(), self.model.elements());
        match &self.bus {
            None => Ok((0..self.cfg.users)
                .map(|q| {
                    let prices = Prices { power: self.model.power_prices(q, ev), phi: self.model.phi_prices(q, state, ev) };
                    (prices, ev.mui_row(q).to_vec())
                })
                .collect()),
            Some(bus) => {
                let inboxes = round_exchange(bus, &self.model, ev, state, round)?;
                inboxes
                    .into_iter()
                    .enumerate()
                    .map(|(q, inbox)| {
                        let (power, phi) = inbox.aggregate(nk, nm);
                        let mui = inbox
                            .mui
                            .ok_or_else(|| Error::Protocol(format!("round {round}: no interference report for user {q}")))?
                            .mui;
                        Ok((Prices { power, phi }, mui))
                    })
                    .collect()
            }
        }
    }

    /// Solver settings for the current iteration.
    fn algo_now(&self) -> AlgoParams {
        let mut algo = self.cfg.algo;
        if self.t >= algo.explore_iters {
            algo.pdd.fit_restarts = 0;
        }
        algo
    }

    /// Prices each user would receive at the current iterate.
    pub fn current_prices(&self) -> Result<Vec<Prices>> {
        let ev = self.model.evaluate(&self.state);
        Ok(self.gather(&self.state, &ev, self.t)?.into_iter().map(|(p, _)| p).collect())
    }

    /// Best responses of all users against the current iterate (Jacobi).
    pub fn best_responses(&self) -> Result<Vec<BestResponse>> {
        let ev = self.model.evaluate(&self.state);
        let gathered = self.gather(&self.state, &ev, self.t)?;
        let algo = self.algo_now();
        gathered
            .iter()
            .enumerate()
            .map(|(q, (prices, mui))| best_response(q, &self.state, &self.params[q], &self.model, &ev, prices, mui, self.cfg.power_w[q], &algo))
            .collect()
    }

    /// Performs one iteration and returns its record.
    pub fn iterate(&mut self) -> Result<IterationRecord> {
        let alpha = self.alpha;
        let mut worst_gap: Option<f64> = None;
        let mut track = |r: &BestResponse| {
            if let Some(v) = r.pdd_violation {
                worst_gap = Some(worst_gap.map_or(v, |w: f64| w.max(v)));
            }
        };
        let next = match self.cfg.algo.order {
            UpdateOrder::Jacobi => {
                let responses = self.best_responses()?;
                responses.iter().for_each(&mut track);
                let targets: Vec<UserState> = responses.iter().map(|r| r.state.clone()).collect();
                let next = step(&self.state, &targets, alpha);
                self.params = responses.into_iter().map(|r| r.params).collect();
                next
            }
            UpdateOrder::GaussSeidel => {
                let mut next = self.state.clone();
                let algo = self.algo_now();
                for q in 0..self.cfg.users {
                    let ev = self.model.evaluate(&next);
                    let gathered = self.gather(&next, &ev, self.t)?;
                    let (prices, mui) = &gathered[q];
                    let r = best_response(q, &next, &self.params[q], &self.model, &ev, prices, mui, self.cfg.power_w[q], &algo)?;
                    track(&r);
                    next[q] = combine(&next[q], &r.state, alpha);
                    self.params[q] = r.params;
                }
                next
            }
        };
        let ev = self.model.evaluate(&next);
        let rates: Vec<f64> = (0..self.cfg.users).map(|q| self.model.user_rate_nats(q, &ev) / std::f64::consts::LN_2).collect();
        let sum_rate: f64 = rates.iter().sum();
        let var_change = variable_change(&next, &self.state, &self.cfg.power_w);
        let rate_change = relative_change(sum_rate, self.sum_rate);
        let metric = var_change.max(rate_change);
        self.t += 1;
        let record = IterationRecord {
            t: self.t,
            alpha: Some(alpha),
            sum_rate_bps: sum_rate,
            user_rates: rates,
            var_change: Some(var_change),
            rate_change: Some(rate_change),
            term_metric: Some(metric),
            feasible: Self::feasible(self.cfg, &next),
            pdd_violation: worst_gap,
        };
        self.state = next;
        self.sum_rate = sum_rate;
        self.alpha = self.rule.next(alpha);
        self.converged = metric <= self.cfg.algo.eps_term;
        self.history.push(record.clone());
        Ok(record)
    }

    /// Iterates until the termination metric reaches the tolerance or the
    /// iteration cap is hit.
    pub fn run_to_termination(&mut self) -> Result<()> {
        while !self.converged && self.t < self.cfg.algo.max_iter {
            self.iterate()?;
        }
        Ok(())
    }

    /// Makes every surface exactly realizable and returns the outcome.
    ///
    /// Two realizable candidates are compared at the final powers: the
    /// iterate's profiles re-fitted to Lorentzian parameters, and the
    /// parameters of the last best responses. The one with the larger sum
    /// rate is reported.
    pub fn finish(self) -> Result<RunResult> {
        let omega = omega_grid(self.cfg.subcarriers);
        let bounds = self.cfg.algo.lorentz_bounds;
        let mut state = self.state.clone();
        let mut params = self.params.clone();
        let mut surface = SurfaceSource::Iterate;
        if self.model.elements() > 0 {
            let mut last = self.state.clone();
            for (s, pr) in last.iter_mut().zip(&self.params) {
                s.phi = lorentzian_response(pr, &omega)?;
            }
            for (s, pr) in state.iter_mut().zip(params.iter_mut()) {
                let fit = fit_lorentzian(&s.phi, &omega, pr, &bounds, self.cfg.algo.pdd.fit_max_iter, self.cfg.algo.pdd.fit_restarts);
                let mut fitted = fit.params;
                for r in fitted.elements.iter_mut() {
                    limit_modulus(r, &omega, &bounds);
                }
                s.phi = lorentzian_response(&fitted, &omega)?;
                *pr = fitted;
            }
            surface = SurfaceSource::Refit;
            if self.model.sum_rate(&last) > self.model.sum_rate(&state) {
                state = last;
                params = self.params.clone();
                surface = SurfaceSource::LastResponse;
            }
        }
        let final_sum_rate = self.model.sum_rate(&state);
        Ok(RunResult {
            final_sum_rate,
            iterate_sum_rate: self.sum_rate,
            converged: self.converged,
            iterations: self.t,
            overhead_bytes: self.bus.as_ref().map(|b| b.overhead_report().total),
            surface,
            history: self.history,
            state,
            params,
        })
    }

    pub fn source(&self) -> &PriceSource {
        &self.source
    }
}

/// Runs the algorithm to termination with direct price evaluation.
pub fn run(cfg: &ScenarioConfig, channels: &ChannelSet) -> Result<RunResult> {
    run_with(cfg, channels, PriceSource::Direct)
}

pub fn run_with(cfg: &ScenarioConfig, channels: &ChannelSet, source: PriceSource) -> Result<RunResult> {
    let mut d = Dsca::new(cfg, channels, source)?;
    d.run_to_termination()?;
    d.finish()
}

/// Writes the iteration history as CSV: `t, alpha, sum_rate_bps, term_metric, rate_user_<q>...`.
pub fn write_history_csv(history: &[IterationRecord], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let users = history.first().map_or(0, |r| r.user_rates.len());
    let mut header = vec!["t".to_string(), "alpha".into(), "sum_rate_bps".into(), "term_metric".into()];
    header.extend((0..users).map(|q| format!("rate_user_{q}")));
    out.write_record(&header)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    for r in history {
        let mut row = vec![r.t.to_string(), opt(r.alpha), format!("{:e}", r.sum_rate_bps), opt(r.term_metric)];
        row.extend(r.user_rates.iter().map(|x| format!("{x:e}")));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_history_csv(history: &[IterationRecord], path: &Path) -> Result<()> {
    write_history_csv(history, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;
    use crate::scenario::default_scenario;
    use num_complex::Complex64;

    fn small(q: usize, m: usize, seed: u64) -> (ScenarioConfig, ChannelSet) {
        let mut cfg = default_scenario(q).unwrap();
        cfg.subcarriers = 4;
        cfg.elements = m;
        cfg.ris_enabled = m > 0;
        cfg.seed = seed;
        let ch = generate_channels(&cfg, seed).unwrap();
        (cfg, ch)
    }

    #[test]
    fn step_size_sequence_is_positive_and_nonincreasing() {
        let seq = StepSizeRule { alpha0: 0.9, theta: 1e-2 }.sequence(500);
        assert!(seq.iter().all(|a| *a > 0.0));
        assert!(seq.windows(2).all(|w| w[1] <= w[0]));
        let fixed = StepSizeRule { alpha0: 0.5, theta: 0.0 }.sequence(10);
        assert!(fixed.iter().all(|a| *a == 0.5));
    }

    #[test]
    fn step_examples() {
        let phi = ReflectionProfile::zeros(2, 0);
        let x = vec![UserState::new(vec![2.0, 0.0], phi.clone())];
        let r = vec![UserState::new(vec![0.0, 2.0], phi)];
        assert_eq!(step(&x, &r, 0.5)[0].p, vec![1.0, 1.0]);
        assert_eq!(step(&x, &r, 1.0), r);
        assert_eq!(step(&x, &r, 0.0), x);
    }

    #[test]
    fn single_user_single_carrier_reaches_capacity() {
        let mut cfg = default_scenario(2).unwrap();
        cfg.users = 1;
        cfg.subcarriers = 1;
        cfg.taps = 1;
        cfg.ris_enabled = false;
        cfg.power_w = vec![0.1];
        cfg.geometry.bs.truncate(1);
        cfg.geometry.ris.truncate(1);
        cfg.geometry.ue.truncate(1);
        cfg.algo.tau = 1e-8;
        let mut ch = ChannelSet::zeros(1, 1, 0);
        *ch.direct_mut(0, 0, 0) = Complex64::new(1e-4, 0.0);
        let out = run(&cfg, &ch).unwrap();
        assert!((out.state[0].p[0] - 0.1).abs() < 1e-12);
        let want = (1.0 + 1e-8 * 0.1 / cfg.noise_w).log2();
        assert!((out.final_sum_rate - want).abs() < 1e-9);
    }

    #[test]
    fn single_user_power_is_proximal_water_filling() {
        let (mut cfg, _) = small(2, 0, 1);
        cfg.users = 1;
        cfg.power_w.truncate(1);
        for v in [&mut cfg.geometry.bs, &mut cfg.geometry.ris, &mut cfg.geometry.ue] {
            v.truncate(1);
        }
        let ch = generate_channels(&cfg, 1).unwrap();
        let d = Dsca::new(&cfg, &ch, PriceSource::Direct).unwrap();
        let prices = d.current_prices().unwrap();
        assert!(prices[0].power.iter().all(|x| *x == 0.0));
        let br = d.best_responses().unwrap();
        let ev = d.model().evaluate(d.state());
        let sub = PowerSubproblem {
            a: (0..4).map(|k| ev.channel(0, 0, k).norm_sqr()).collect(),
            b: vec![cfg.noise_w; 4],
            p_prev: d.state()[0].p.clone(),
            prices: vec![0.0; 4],
            tau: cfg.algo.tau,
            budget: cfg.power_w[0],
        };
        assert_eq!(br[0].state.p, solve_power(&sub, cfg.algo.bisect_tol).unwrap().0);
    }

    #[test]
    fn baseline_skips_surfaces() {
        let (cfg, ch) = small(2, 0, 2);
        let d = Dsca::new(&cfg, &ch, PriceSource::Direct).unwrap();
        let br = d.best_responses().unwrap();
        assert!(br.iter().all(|r| r.pdd_violation.is_none() && r.state.phi.elements == 0));
    }

    #[test]
    fn iterates_stay_feasible_and_rate_improves() {
        let (cfg, ch) = small(2, 2, 3);
        let out = run(&cfg, &ch).unwrap();
        assert!(out.history.iter().all(|r| r.feasible));
        assert!(out.history.windows(2).all(|w| w[1].t == w[0].t + 1));
        assert!(out.history.len() <= cfg.algo.max_iter + 1);
        assert!(out.final_sum_rate >= out.history[0].sum_rate_bps);
        for (s, b) in out.state.iter().zip(&cfg.power_w) {
            assert!(s.is_feasible(*b, 1e-9 * b, 1e-6));
        }
        let rebuilt = lorentzian_response(&out.params[0], &omega_grid(4)).unwrap();
        assert_eq!(rebuilt, out.state[0].phi);
    }

    #[test]
    fn joint_design_beats_power_only_on_same_draw() {
        let (cfg, ch) = small(2, 2, 4);
        let joint = run(&cfg, &ch).unwrap();
        // power-only: surfaces frozen at their initial response
        let mut frozen = cfg.clone();
        frozen.algo.pdd.outer_iters = 0;
        let d = Dsca::new(&frozen, &ch, PriceSource::Direct).unwrap();
        let init_phi: Vec<ReflectionProfile> = d.state().iter().map(|s| s.phi.clone()).collect();
        drop(d);
        let power_only = {
            let mut d = Dsca::new(&frozen, &ch, PriceSource::Direct).unwrap();
            d.run_to_termination().unwrap();
            assert!(d.state().iter().zip(&init_phi).all(|(s, p)| s.phi == *p));
            d.model().sum_rate(d.state())
        };
        assert!(joint.final_sum_rate >= power_only - 1e-9, "joint {} power-only {}", joint.final_sum_rate, power_only);
    }

    #[test]
    fn bus_and_direct_runs_agree() {
        let (mut cfg, ch) = small(2, 2, 5);
        cfg.algo.max_iter = 5;
        let a = run(&cfg, &ch).unwrap();
        let b = run_with(&cfg, &ch, PriceSource::Bus(NeighborSets::all_pairs(2))).unwrap();
        assert_eq!(a.state, b.state);
        assert!(b.overhead_bytes.unwrap() > 0);
    }

    #[test]
    fn history_csv_columns() {
        let (mut cfg, ch) = small(2, 0, 6);
        cfg.algo.max_iter = 3;
        let out = run(&cfg, &ch).unwrap();
        let mut buf = Vec::new();
        write_history_csv(&out.history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,alpha,sum_rate_bps,term_metric,rate_user_0,rate_user_1");
        assert_eq!(lines.count(), out.history.len());
    }

    fn best_response_gap(cfg: &ScenarioConfig, ch: &ChannelSet) -> f64 {
        let mut d = Dsca::new(cfg, ch, PriceSource::Direct).unwrap();
        d.run_to_termination().unwrap();
        assert!(d.converged());
        let br = d.best_responses().unwrap();
        let targets: Vec<UserState> = br.into_iter().map(|r| r.state).collect();
        variable_change(&targets, d.state(), &vec![1.0; cfg.users])
    }

    #[test]
    fn converged_power_state_is_a_fixed_point() {
        let (mut cfg, ch) = small(2, 0, 8);
        cfg.algo.eps_term = 1e-12;
        cfg.algo.max_iter = 20_000;
        assert!(best_response_gap(&cfg, &ch) <= 1e-6);
    }

    #[test]
    fn converged_joint_state_is_a_fixed_point() {
        let (mut cfg, _) = small(2, 1, 8);
        cfg.subcarriers = 2;
        cfg.taps = 2;
        cfg.algo.eps_term = 1e-12;
        cfg.algo.max_iter = 20_000;
        let ch = generate_channels(&cfg, 8).unwrap();
        assert!(best_response_gap(&cfg, &ch) <= 1e-6);
    }

    #[test]
    fn rejects_mismatched_channels() {
        let (cfg, _) = small(2, 2, 7);
        let other = ChannelSet::zeros(3, 4, 2);
        assert!(matches!(Dsca::new(&cfg, &other, PriceSource::Direct), Err(Error::Dimension(_))));
    }
}
