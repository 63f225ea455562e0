//! Experiment drivers behind the command-line tool: single runs, Monte Carlo
//! power sweeps with a no-RIS baseline, and the validation gate.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::channel::{generate_channels, realization_seed};
use crate::dsca::{Dsca, IterationRecord, PriceSource};
use crate::error::{Error, Result};
use crate::netbus::NeighborSets;
use crate::rate_model::RateModel;
use crate::scenario::{default_scenario, ScenarioConfig};
use crate::validation::{self, Hooks, ValidationReport};

/// Surface size used by the desk-scale sweep.
pub const DESK_ELEMENTS: usize = 8;
pub const DESK_REALIZATIONS: usize = 20;
pub const FULL_ELEMENTS: usize = 50;
pub const FULL_REALIZATIONS: usize = 100;

/// Powers 0, 5, ..., 30 dBm.
pub fn default_power_grid() -> Vec<f64> {
    (0..=6).map(|i| 5.0 * i as f64).collect()
}

/// One curve of the sweep: a user count with or without surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    #[serde(rename = "Q")]
    pub users: usize,
    pub ris: bool,
}

impl Variant {
    pub fn label(&self) -> String {
        format!("Q{}-{}", self.users, if self.ris { "ris" } else { "noris" })
    }

    /// Both user counts of the presets, with and without surfaces.
    pub fn all() -> Vec<Variant> {
        [2, 3].into_iter().flat_map(|q| [true, false].map(|ris| Variant { users: q, ris })).collect()
    }
}

/// Sweep description. As a JSON file every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub power_grid_dbm: Vec<f64>,
    pub num_realizations: usize,
    pub variants: Vec<Variant>,
    /// Master seed; realization `r` uses channels drawn from a seed derived from it and `r`.
    pub seed: u64,
    /// Surface size of the RIS variants.
    pub elements: usize,
    /// `key=value` overrides applied to every variant's preset.
    pub overrides: Vec<String>,
    #[serde(skip)]
    pub output_path: Option<PathBuf>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            power_grid_dbm: default_power_grid(),
            num_realizations: DESK_REALIZATIONS,
            variants: Variant::all(),
            seed: 0,
            elements: DESK_ELEMENTS,
            overrides: Vec::new(),
            output_path: None,
        }
    }
}

impl SweepSpec {
    pub fn full_scale() -> Self {
        SweepSpec { num_realizations: FULL_REALIZATIONS, elements: FULL_ELEMENTS, ..Self::default() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config { path: path.display().to_string(), msg: e.to_string() })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |path: &str, msg: &str| Err(Error::Config { path: path.into(), msg: msg.into() });
        if self.power_grid_dbm.is_empty() {
            return cfg("power_grid_dbm", "must not be empty");
        }
        if self.power_grid_dbm.iter().any(|p| !p.is_finite()) || self.power_grid_dbm.windows(2).any(|w| w[0] >= w[1]) {
            return cfg("power_grid_dbm", "must be finite and strictly increasing");
        }
        if self.num_realizations == 0 {
            return cfg("num_realizations", "must be >= 1");
        }
        if self.variants.is_empty() {
            return cfg("variants", "must not be empty");
        }
        for v in &self.variants {
            self.scenario(v, self.power_grid_dbm[0])?;
        }
        Ok(())
    }

    /// Scenario of one variant at one power level.
    pub fn scenario(&self, v: &Variant, p_dbm: f64) -> Result<ScenarioConfig> {
        let mut cfg = default_scenario(v.users)?;
        cfg.elements = self.elements;
        cfg.seed = self.seed;
        let mut cfg = cfg.with_overrides(&self.overrides)?;
        cfg.ris_enabled = v.ris && cfg.elements > 0;
        let cfg = cfg.with_power_dbm(p_dbm);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: String,
    #[serde(rename = "Q")]
    pub users: usize,
    pub ris: bool,
    #[serde(rename = "P_dbm")]
    pub p_dbm: f64,
    pub realization: usize,
    pub channel_hash: String,
    pub sum_rate_bps: Option<f64>,
    pub iters: Option<usize>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

/// Mean over realizations of one (variant, power) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    #[serde(rename = "Q")]
    pub users: usize,
    pub ris: bool,
    #[serde(rename = "P_dbm")]
    pub p_dbm: f64,
    /// Realizations that finished without error.
    pub n: usize,
    pub mean_sum_rate_bps: f64,
    /// Standard error of the mean (zero for a single realization).
    pub stderr_sum_rate_bps: f64,
    pub converged_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

impl SweepResult {
    pub fn row(&self, variant: &Variant, p_dbm: f64, realization: usize) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.users == variant.users && r.ris == variant.ris && r.p_dbm == p_dbm && r.realization == realization)
    }

    pub fn mean(&self, variant: &Variant, p_dbm: f64) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.users == variant.users && s.ris == variant.ris && s.p_dbm == p_dbm)
            .map(|s| s.mean_sum_rate_bps)
    }

    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_summary_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.summary {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Companion path of the summary table: `rates.csv` -> `rates.summary.csv`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "sweep".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.summary.csv"))
}

fn run_cell(spec: &SweepSpec, v: &Variant, p_dbm: f64, r: usize) -> SweepRow {
    let mut row = SweepRow {
        variant: v.label(),
        users: v.users,
        ris: v.ris,
        p_dbm,
        realization: r,
        channel_hash: String::new(),
        sum_rate_bps: None,
        iters: None,
        converged: None,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let cfg = spec.scenario(v, p_dbm)?;
        let ch = generate_channels(&cfg, realization_seed(spec.seed, r as u64))?;
        row.channel_hash = ch.direct_hash();
        let mut d = Dsca::new(&cfg, &ch, PriceSource::Direct)?;
        d.run_to_termination()?;
        let out = d.finish()?;
        row.sum_rate_bps = Some(out.final_sum_rate);
        row.iters = Some(out.iterations);
        row.converged = Some(out.converged);
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
    }
    row
}

fn summarize(spec: &SweepSpec, rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for v in &spec.variants {
        for &p in &spec.power_grid_dbm {
            let cell: Vec<&SweepRow> = rows.iter().filter(|r| r.users == v.users && r.ris == v.ris && r.p_dbm == p).collect();
            let rates: Vec<f64> = cell.iter().filter_map(|r| r.sum_rate_bps).collect();
            let n = rates.len();
            let mean = if n == 0 { f64::NAN } else { rates.iter().sum::<f64>() / n as f64 };
            let stderr = if n < 2 {
                0.0
            } else {
                let var = rates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            };
            let converged = cell.iter().filter(|r| r.converged == Some(true)).count();
            out.push(SummaryRow {
                variant: v.label(),
                users: v.users,
                ris: v.ris,
                p_dbm: p,
                n,
                mean_sum_rate_bps: mean,
                stderr_sum_rate_bps: stderr,
                converged_fraction: converged as f64 / cell.len().max(1) as f64,
            });
        }
    }
    out
}

/// Runs every (variant, power, realization) cell on `jobs` worker threads.
/// Rows come out ordered by variant, power and realization regardless of
/// scheduling, so the output is identical for any worker count. A failing
/// cell is recorded in its row and the sweep goes on.
pub fn cmd_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    spec.validate()?;
    let cells: Vec<(Variant, f64, usize)> = spec
        .variants
        .iter()
        .flat_map(|v| spec.power_grid_dbm.iter().flat_map(move |&p| (0..spec.num_realizations).map(move |r| (*v, p, r))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {jobs} workers: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| cells.par_iter().map(|(v, p, r)| run_cell(spec, v, *p, *r)).collect());
    let summary = summarize(spec, &rows);
    let result = SweepResult { rows, summary };
    if let Some(path) = &spec.output_path {
        result.write_csv(std::fs::File::create(path)?)?;
        result.write_summary_csv(std::fs::File::create(summary_path(path))?)?;
    }
    Ok(result)
}

/// Options of a single run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Include the frequency-domain channels in the dump.
    pub dump_channels: bool,
    /// Exchange prices over the message bus and write its log here as JSON lines.
    pub message_log: Option<PathBuf>,
}

fn history_json(history: &[IterationRecord]) -> Value {
    serde_json::to_value(history).expect("records serialize")
}

/// Runs one scenario with its own seed and returns the result dump. Surface
/// fields are present only when the surfaces are active.
pub fn cmd_run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Value> {
    cfg.validate()?;
    let ch = generate_channels(cfg, cfg.seed)?;
    let source = if opts.message_log.is_some() { PriceSource::Bus(NeighborSets::all_pairs(cfg.users)) } else { PriceSource::Direct };
    let mut d = Dsca::new(cfg, &ch, source)?;
    d.run_to_termination()?;
    if let (Some(path), Some(bus)) = (&opts.message_log, d.bus()) {
        bus.write_log(path)?;
    }
    let out = d.finish()?;
    let user_rates = RateModel::new(&ch, cfg.noise_w).user_rates(&out.state);
    let mut dump = json!({
        "config": cfg.to_file(),
        "seed": cfg.seed,
        "ris_enabled": cfg.ris_active(),
        "channel_hash": ch.direct_hash(),
        "converged": out.converged,
        "iterations": out.iterations,
        "final_sum_rate_bps": out.final_sum_rate,
        "iterate_sum_rate_bps": out.iterate_sum_rate,
        "user_rates_bps": user_rates,
        "powers_w": out.state.iter().map(|s| s.p.clone()).collect::<Vec<_>>(),
        "history": history_json(&out.history),
    });
    let obj = dump.as_object_mut().expect("object literal");
    if cfg.ris_active() {
        let phi: Vec<Vec<Vec<[f64; 2]>>> = out
            .state
            .iter()
            .map(|s| (0..s.phi.subcarriers).map(|k| s.phi.row(k).iter().map(|z| [z.re, z.im]).collect()).collect())
            .collect();
        obj.insert("phi".into(), json!(phi));
        obj.insert("lorentzian_params".into(), serde_json::to_value(&out.params)?);
        obj.insert("surface_source".into(), serde_json::to_value(out.surface)?);
    }
    if let Some(bytes) = out.overhead_bytes {
        obj.insert("price_overhead_bytes".into(), json!(bytes));
    }
    if opts.dump_channels {
        obj.insert("channels".into(), ch.to_json());
    }
    Ok(dump)
}

/// Runs every oracle suite.
pub fn cmd_validate(hooks: Hooks) -> Result<ValidationReport> {
    validation::run_all(hooks)
}
