//! Simulated message passing between the per-user agents.
//!
//! Each round, every agent j measures the interference-plus-noise at its own
//! receiver and sends every neighbor q the contribution `dR_j / dx_q` of its
//! rate to q's interference price. Agent q sums what it receives. Delivery is
//! reliable and ordered unless a [`FaultConfig`] is installed.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metasurface::ReflectionProfile;
use crate::rate_model::{Evaluation, RateModel, UserState};

/// Fixed per-message header in the size model.
pub const HEADER_BYTES: u64 = 24;
pub const REAL_BYTES: u64 = 8;
pub const COMPLEX_BYTES: u64 = 16;

/// Price contribution of `from_user`'s rate to `to_user`'s variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceMessage {
    pub from_user: usize,
    pub to_user: usize,
    pub t: usize,
    pub power_prices: Vec<f64>,
    pub phi_prices: ReflectionProfile,
}

impl PriceMessage {
    pub fn size_bytes(&self) -> u64 {
        price_message_bytes(self.power_prices.len(), self.phi_prices.elements)
    }
}

/// Interference plus noise measured at one user's receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuiReport {
    pub user: usize,
    pub t: usize,
    pub mui: Vec<f64>,
}

/// Serialized size of one price message for `K` subcarriers and `M` elements.
pub fn price_message_bytes(subcarriers: usize, elements: usize) -> u64 {
    HEADER_BYTES + REAL_BYTES * subcarriers as u64 + COMPLEX_BYTES * (subcarriers * elements) as u64
}

/// Who exchanges prices with whom: `sets[q]` lists the users that send prices to q.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborSets {
    pub sets: Vec<Vec<usize>>,
}

impl NeighborSets {
    pub fn all_pairs(users: usize) -> Self {
        NeighborSets {
            sets: (0..users).map(|q| (0..users).filter(|&j| j != q).collect()).collect(),
        }
    }

    pub fn none(users: usize) -> Self {
        NeighborSets { sets: vec![Vec::new(); users] }
    }

    pub fn new(sets: Vec<Vec<usize>>) -> Result<Self> {
        let n = sets.len();
        for (q, s) in sets.iter().enumerate() {
            if s.iter().any(|&j| j == q || j >= n) {
                return Err(Error::InvalidArgument(format!("bad neighbor set for user {q}: {s:?}")));
            }
        }
        let mut sets = sets;
        for s in sets.iter_mut() {
            s.sort_unstable();
            s.dedup();
        }
        Ok(NeighborSets { sets })
    }

    pub fn users(&self) -> usize {
        self.sets.len()
    }

    pub fn is_complete(&self) -> bool {
        self.sets.iter().enumerate().all(|(q, s)| s.len() + 1 == self.sets.len() && !s.contains(&q))
    }
}

/// Exploratory fault model. Off by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    /// Probability that a price message is lost.
    pub drop_prob: f64,
    /// Deliver the previous round's message from the same sender instead of the current one.
    pub stale: bool,
    pub seed: u64,
}

/// Everything an agent receives in one round.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Inbox {
    /// Sorted by sender.
    pub prices: Vec<PriceMessage>,
    pub mui: Option<MuiReport>,
}

impl Inbox {
    /// Interference prices of the receiving user, summed in sender order.
    pub fn aggregate(&self, subcarriers: usize, elements: usize) -> (Vec<f64>, ReflectionProfile) {
        let mut power = vec![0.0; subcarriers];
        let mut phi = ReflectionProfile::zeros(subcarriers, elements);
        for msg in &self.prices {
            for (a, x) in power.iter_mut().zip(&msg.power_prices) {
                *a += x;
            }
            for (a, x) in phi.as_mut_slice().iter_mut().zip(msg.phi_prices.as_slice()) {
                *a += x;
            }
        }
        (power, phi)
    }
}

/// One line of the message log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub round: usize,
    pub kind: String,
    pub from: usize,
    pub to: usize,
    pub bytes: u64,
}

/// Bytes of price traffic per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub per_round: Vec<u64>,
    pub total: u64,
}

#[derive(Debug, Default)]
struct BusState {
    queues: Vec<VecDeque<PriceMessage>>,
    reports: Vec<Option<MuiReport>>,
    last_sent: Vec<Vec<Option<PriceMessage>>>,
    round_bytes: Vec<u64>,
    log: Vec<LogEntry>,
    rng: Option<ChaCha8Rng>,
}

/// In-process synchronous transport shared by all agents.
#[derive(Debug)]
pub struct Bus {
    users: usize,
    neighbors: NeighborSets,
    fault: Option<FaultConfig>,
    state: Mutex<BusState>,
}

impl Bus {
    pub fn new(neighbors: NeighborSets) -> Self {
        Self::with_faults(neighbors, None)
    }

    pub fn with_faults(neighbors: NeighborSets, fault: Option<FaultConfig>) -> Self {
        let users = neighbors.users();
        let state = BusState {
            queues: vec![VecDeque::new(); users],
            reports: vec![None; users],
            last_sent: vec![vec![None; users]; users],
            rng: fault.map(|f| ChaCha8Rng::seed_from_u64(f.seed)),
            ..Default::default()
        };
        Bus { users, neighbors, fault, state: Mutex::new(state) }
    }

    pub fn neighbors(&self) -> &NeighborSets {
        &self.neighbors
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BusState> {
        self.state.lock().expect("bus mutex poisoned")
    }

    /// Queues a price message for delivery at the end of the round.
    pub fn send(&self, msg: PriceMessage) -> Result<()> {
        if msg.from_user == msg.to_user || msg.to_user >= self.users || msg.from_user >= self.users {
            return Err(Error::Protocol(format!("invalid endpoints {} -> {}", msg.from_user, msg.to_user)));
        }
        let mut st = self.lock();
        while st.round_bytes.len() <= msg.t {
            st.round_bytes.push(0);
        }
        let bytes = msg.size_bytes();
        st.round_bytes[msg.t] += bytes;
        st.log.push(LogEntry { round: msg.t, kind: "price".into(), from: msg.from_user, to: msg.to_user, bytes });
        let (from, to) = (msg.from_user, msg.to_user);
        let mut delivered = Some(msg.clone());
        if let Some(f) = self.fault {
            let rng = st.rng.as_mut().expect("fault rng");
            if rng.gen::<f64>() < f.drop_prob {
                delivered = None;
            } else if f.stale {
                if let Some(old) = st.last_sent[from][to].clone() {
                    delivered = Some(old);
                }
            }
        }
        st.last_sent[from][to] = Some(msg);
        if let Some(m) = delivered {
            st.queues[to].push_back(m);
        }
        Ok(())
    }

    /// Posts an agent's own interference measurement (local, not counted as traffic).
    pub fn report(&self, report: MuiReport) {
        let mut st = self.lock();
        st.log.push(LogEntry { round: report.t, kind: "mui".into(), from: report.user, to: report.user, bytes: 0 });
        let u = report.user;
        st.reports[u] = Some(report);
    }

    /// Round barrier: hands every agent its inbox, or fails if any expected
    /// message is missing.
    pub fn deliver(&self, t: usize) -> Result<Vec<Inbox>> {
        let mut st = self.lock();
        let mut out = Vec::with_capacity(self.users);
        for q in 0..self.users {
            let mut prices: Vec<PriceMessage> = st.queues[q].drain(..).collect();
            prices.sort_by_key(|m| m.from_user);
            let expected = &self.neighbors.sets[q];
            let senders: Vec<usize> = prices.iter().map(|m| m.from_user).collect();
            if &senders != expected {
                return Err(Error::Protocol(format!(
                    "round {t}: user {q} expected prices from {expected:?}, got {senders:?}"
                )));
            }
            let mui = st.reports[q].take();
            out.push(Inbox { prices, mui });
        }
        let len = st.round_bytes.len().max(t + 1);
        st.round_bytes.resize(len, 0);
        Ok(out)
    }

    pub fn overhead_report(&self) -> OverheadReport {
        let st = self.lock();
        OverheadReport { per_round: st.round_bytes.clone(), total: st.round_bytes.iter().sum() }
    }

    pub fn log(&self) -> Vec<LogEntry> {
        self.lock().log.clone()
    }

    /// Writes the message log as JSON lines.
    pub fn write_log(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in self.lock().log.iter() {
            serde_json::to_writer(&mut f, e)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }
}

/// One user's side of the exchange.
#[derive(Debug, Clone, Copy)]
pub struct Agent {
    pub user: usize,
}

impl Agent {
    /// Price messages from this agent to every user it is a neighbor of.
    pub fn outgoing(
        &self,
        t: usize,
        model: &RateModel,
        ev: &Evaluation,
        state: &[UserState],
        neighbors: &NeighborSets,
    ) -> Vec<PriceMessage> {
        let j = self.user;
        (0..ev.users)
            .filter(|&q| q != j && neighbors.sets[q].contains(&j))
            .map(|q| PriceMessage {
                from_user: j,
                to_user: q,
                t,
                power_prices: model.pair_power_price(q, j, ev),
                phi_prices: model.pair_phi_price(q, j, state, ev),
            })
            .collect()
    }

    pub fn measure(&self, t: usize, ev: &Evaluation) -> MuiReport {
        MuiReport { user: self.user, t, mui: ev.mui_row(self.user).to_vec() }
    }
}

/// Runs one synchronous round: every agent measures, sends, then the barrier delivers.
pub fn round_exchange(
    bus: &Bus,
    model: &RateModel,
    ev: &Evaluation,
    state: &[UserState],
    t: usize,
) -> Result<Vec<Inbox>> {
    for j in 0..ev.users {
        let agent = Agent { user: j };
        bus.report(agent.measure(t, ev));
        for msg in agent.outgoing(t, model, ev, state, bus.neighbors()) {
            bus.send(msg)?;
        }
    }
    bus.deliver(t)
}
