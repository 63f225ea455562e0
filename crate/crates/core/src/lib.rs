//! Multi-cell OFDM interference network assisted by Lorentzian metasurfaces,
//! and a distributed successive concave approximation that jointly tunes
//! per-subcarrier powers and surface resonator parameters.

pub mod channel;
pub mod dsca;
pub mod error;
pub mod experiment;
pub mod metasurface;
pub mod netbus;
pub mod oracle;
pub mod power_alloc;
pub mod rate_model;
pub mod ris_opt;
pub mod scenario;
pub mod validation;

pub use channel::{generate_channels, ChannelSet};
pub use dsca::{run, run_with, Dsca, PriceSource, RunResult};
pub use error::{Error, Result};
pub use metasurface::{LorentzianParams, ReflectionProfile, Resonator};
pub use rate_model::{RateModel, UserState};
pub use scenario::{default_scenario, AlgoParams, ScenarioConfig};
