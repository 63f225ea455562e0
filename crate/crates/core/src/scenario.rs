//! Experiment configuration: node geometry, pathloss, system dimensions and
//! algorithm knobs.
//!
//! Powers are held in watts. The JSON config file carries dBm values and is
//! converted on load; see [`ConfigFile`].

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Converts a power level in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// A node position in the plane, in meters. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Positions of every BS, RIS and UE; index `q` is user `q`'s triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs: Vec<Point>,
    pub ris: Vec<Point>,
    pub ue: Vec<Point>,
}

/// Log-distance pathloss `PL = PL0 (d / d0)^(-alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossModel {
    pub pl0_db: f64,
    pub d0: f64,
    /// Exponent of every BS-UE link, serving or cross.
    pub exponent_direct: f64,
    /// Exponent of BS-RIS and RIS-UE segments.
    pub exponent_ris: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        PathlossModel {
            pl0_db: -30.0,
            d0: 1.0,
            exponent_direct: 4.0,
            exponent_ris: 2.0,
        }
    }
}

impl PathlossModel {
    /// Amplitude factor `sqrt(PL)` between two nodes, so that received power
    /// scales as `PL`.
    pub fn amplitude(&self, a: &Point, b: &Point, exponent: f64) -> Result<f64> {
        pathloss(a, b, exponent, self.pl0_db, self.d0)
    }
}

/// Amplitude-domain pathloss `sqrt(PL0_lin * (d/d0)^(-exponent))`.
pub fn pathloss(a: &Point, b: &Point, exponent: f64, pl0_db: f64, d0: f64) -> Result<f64> {
    let d = a.distance(b);
    if !(d > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "coincident nodes at ({}, {})",
            a.x, a.y
        )));
    }
    if !(exponent > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "pathloss exponent must be positive, got {exponent}"
        )));
    }
    let pl0 = 10f64.powf(pl0_db / 10.0);
    Ok((pl0 * (d / d0).powf(-exponent)).sqrt())
}

/// Box constraints on the Lorentzian parameters of each element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzBounds {
    /// Floor applied to the oscillator strength (the admissible set is `(0, f_max]`).
    pub f_min: f64,
    pub f_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Damping is constrained to `|kappa| <= kappa_max`.
    pub kappa_max: f64,
}

impl Default for LorentzBounds {
    fn default() -> Self {
        LorentzBounds {
            f_min: 1e-6,
            f_max: 1.0,
            omega_min: 1e-6,
            omega_max: std::f64::consts::PI,
            kappa_max: 100.0,
        }
    }
}

/// Penalty dual decomposition knobs for the RIS subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PddParams {
    pub rho0: f64,
    /// Penalty shrink factor, `0 < c < 1`.
    pub c: f64,
    pub inner_iters: usize,
    pub outer_iters: usize,
    /// Initial violation threshold that selects a dual update over a penalty shrink.
    pub viol_tol: f64,
    /// Violation at which the outer loop stops.
    pub final_tol: f64,
    /// Change in the reflection profile, or relative decrease of the inner
    /// objective, below which the inner loop stops.
    pub inner_tol: f64,
    pub fit_max_iter: usize,
    /// Extra starting points tried by the first Lorentzian fit of each solve.
    pub fit_restarts: usize,
}

impl Default for PddParams {
    fn default() -> Self {
        PddParams {
            rho0: 0.1,
            c: 0.5,
            inner_iters: 30,
            outer_iters: 50,
            viol_tol: 1e-1,
            final_tol: 1e-5,
            inner_tol: 1e-8,
            fit_max_iter: 100,
            fit_restarts: 3,
        }
    }
}

/// Order in which users compute best responses within an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    /// All users respond to the same iterate.
    #[default]
    Jacobi,
    /// Users respond in index order, each seeing earlier users' updates.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgoParams {
    /// Proximal weight, `tau > 0`.
    pub tau: f64,
    pub alpha0: f64,
    /// Step-size decay: `alpha <- alpha (1 - theta alpha)`; zero keeps alpha fixed.
    pub theta: f64,
    pub eps_term: f64,
    pub max_iter: usize,
    pub pdd: PddParams,
    /// Relative budget residual at which the water-filling bisection stops.
    pub bisect_tol: f64,
    pub lorentz_bounds: LorentzBounds,
    pub order: UpdateOrder,
    /// Iterations during which the surface subproblems try the extra
    /// starting points of `pdd.fit_restarts`; later ones only warm-start.
    pub explore_iters: usize,
}

impl Default for AlgoParams {
    fn default() -> Self {
        AlgoParams {
            tau: 0.1,
            alpha0: 0.9,
            theta: 1e-2,
            eps_term: 1e-3,
            max_iter: 500,
            pdd: PddParams::default(),
            bisect_tol: 1e-12,
            lorentz_bounds: LorentzBounds::default(),
            order: UpdateOrder::Jacobi,
            explore_iters: 10,
        }
    }
}

impl AlgoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::config("algo.tau", "must be > 0"));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(Error::config("algo.alpha0", "must lie in (0, 1]"));
        }
        if !(self.theta >= 0.0 && self.theta * self.alpha0 < 1.0) {
            return Err(Error::config("algo.theta", "must be >= 0 with theta*alpha0 < 1"));
        }
        if !(self.eps_term > 0.0) {
            return Err(Error::config("algo.eps_term", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("algo.max_iter", "must be >= 1"));
        }
        if !(self.pdd.c > 0.0 && self.pdd.c < 1.0) {
            return Err(Error::config("algo.pdd.c", "must lie in (0, 1)"));
        }
        if !(self.pdd.rho0 > 0.0) {
            return Err(Error::config("algo.pdd.rho0", "must be > 0"));
        }
        if !(self.bisect_tol > 0.0) {
            return Err(Error::config("algo.bisect_tol", "must be > 0"));
        }
        let b = &self.lorentz_bounds;
        if !(b.f_min > 0.0 && b.f_min <= b.f_max && b.f_max <= 1.0) {
            return Err(Error::config("algo.lorentz_bounds", "need 0 < f_min <= f_max <= 1"));
        }
        if !(b.omega_min > 0.0
            && b.omega_min <= b.omega_max
            && b.omega_max <= std::f64::consts::PI)
        {
            return Err(Error::config("algo.lorentz_bounds", "need 0 < omega_min <= omega_max <= pi"));
        }
        if !(b.kappa_max > 0.0) {
            return Err(Error::config("algo.lorentz_bounds.kappa_max", "must be > 0"));
        }
        Ok(())
    }
}

/// A fully resolved scenario. Powers in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Number of BS-RIS-UE triplets (Q).
    pub users: usize,
    /// Number of subcarriers (K).
    pub subcarriers: usize,
    /// Elements per surface (M); zero is the no-RIS baseline.
    pub elements: usize,
    /// Channel taps per link (L).
    pub taps: usize,
    /// Per-BS power budget in watts.
    pub power_w: Vec<f64>,
    /// Per-UE noise power in watts.
    pub noise_w: f64,
    pub geometry: Geometry,
    pub pathloss: PathlossModel,
    pub ris_enabled: bool,
    pub seed: u64,
    pub algo: AlgoParams,
}

impl ScenarioConfig {
    /// Number of reflecting elements in effect: zero when the surfaces are disabled.
    pub fn active_elements(&self) -> usize {
        if self.ris_enabled {
            self.elements
        } else {
            0
        }
    }

    pub fn ris_active(&self) -> bool {
        self.active_elements() > 0
    }

    /// Sets every BS budget to `dbm`.
    pub fn with_power_dbm(mut self, dbm: f64) -> Self {
        let w = dbm_to_watts(dbm);
        self.power_w.iter_mut().for_each(|p| *p = w);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.users;
        if q == 0 {
            return Err(Error::config("system.Q", "must be >= 1"));
        }
        if self.subcarriers == 0 {
            return Err(Error::config("system.K", "must be >= 1"));
        }
        if self.taps == 0 || self.taps > self.subcarriers {
            return Err(Error::config("system.L", "must satisfy 1 <= L <= K"));
        }
        if self.power_w.len() != q {
            return Err(Error::config("system.P_dbm", format!("expected {q} budgets")));
        }
        if self.power_w.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::config("system.P_dbm", "budgets must be positive and finite"));
        }
        if !(self.noise_w > 0.0 && self.noise_w.is_finite()) {
            return Err(Error::config("system.noise_dbm", "noise power must be positive"));
        }
        let g = &self.geometry;
        for (name, pts) in [("geometry.bs", &g.bs), ("geometry.ue", &g.ue)] {
            if pts.len() != q {
                return Err(Error::config(name, format!("expected {q} positions, got {}", pts.len())));
            }
        }
        if self.ris_active() && g.ris.len() != q {
            return Err(Error::config(
                "geometry.ris",
                format!("expected {q} positions, got {}", g.ris.len()),
            ));
        }
        let pl = &self.pathloss;
        if !(pl.d0 > 0.0 && pl.exponent_direct > 0.0 && pl.exponent_ris > 0.0) {
            return Err(Error::config("system", "d0 and pathloss exponents must be positive"));
        }
        let mut nodes: Vec<(&str, usize, Point)> = Vec::new();
        nodes.extend(g.bs.iter().enumerate().map(|(i, p)| ("bs", i, *p)));
        nodes.extend(g.ue.iter().enumerate().map(|(i, p)| ("ue", i, *p)));
        if self.ris_active() {
            nodes.extend(g.ris.iter().enumerate().map(|(i, p)| ("ris", i, *p)));
        }
        for (i, a) in nodes.iter().enumerate() {
            if !(a.2.x.is_finite() && a.2.y.is_finite()) {
                return Err(Error::config(format!("geometry.{}[{}]", a.0, a.1), "non-finite coordinate"));
            }
            for b in &nodes[i + 1..] {
                if a.2.distance(&b.2) <= 0.0 {
                    return Err(Error::DegenerateGeometry(format!(
                        "{}[{}] and {}[{}] coincide",
                        a.0, a.1, b.0, b.1
                    )));
                }
            }
        }
        self.algo.validate()
    }

    pub fn to_file(&self) -> ConfigFile {
        let first = self.power_w[0];
        let power = if self.power_w.iter().all(|p| *p == first) {
            PowerSpec::Uniform(watts_to_dbm(first))
        } else {
            PowerSpec::PerBs(self.power_w.iter().map(|p| watts_to_dbm(*p)).collect())
        };
        ConfigFile {
            system: SystemSection {
                q: self.users,
                k: self.subcarriers,
                m: self.elements,
                l: self.taps,
                p_dbm: power,
                noise_dbm: watts_to_dbm(self.noise_w),
                pl0_db: self.pathloss.pl0_db,
                d0: self.pathloss.d0,
                exponent_direct: self.pathloss.exponent_direct,
                exponent_ris: self.pathloss.exponent_ris,
                ris_enabled: self.ris_enabled,
            },
            geometry: self.geometry.clone(),
            algo: self.algo,
            seed: self.seed,
        }
    }

    pub fn from_file(file: ConfigFile) -> Result<Self> {
        let s = file.system;
        let power_w = match s.p_dbm {
            PowerSpec::Uniform(dbm) => vec![dbm_to_watts(dbm); s.q],
            PowerSpec::PerBs(v) => v.into_iter().map(dbm_to_watts).collect(),
        };
        let cfg = ScenarioConfig {
            users: s.q,
            subcarriers: s.k,
            elements: s.m,
            taps: s.l,
            power_w,
            noise_w: dbm_to_watts(s.noise_dbm),
            geometry: file.geometry,
            pathloss: PathlossModel {
                pl0_db: s.pl0_db,
                d0: s.d0,
                exponent_direct: s.exponent_direct,
                exponent_ris: s.exponent_ris,
            },
            ris_enabled: s.ris_enabled,
            seed: file.seed,
            algo: file.algo,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ConfigFile = serde_json::from_str(&text)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_file(file)
    }

    /// Applies `key=value` overrides (dotted paths into the JSON config,
    /// e.g. `system.M=0`) and re-validates.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut value = serde_json::to_value(self.to_file())?;
        for ov in overrides {
            let ov = ov.as_ref();
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| Error::config(ov, "override must look like key=value"))?;
            set_path(&mut value, key.trim(), raw.trim())?;
        }
        let file: ConfigFile =
            serde_json::from_value(value).map_err(|e| Error::config("<overrides>", e.to_string()))?;
        Self::from_file(file)
    }
}

fn set_path(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let parsed: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::config(key, format!("`{}` is not an object", parts[..i].join("."))))?;
        if !obj.contains_key(*part) {
            return Err(Error::config(key, format!("unknown field `{part}`")));
        }
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), parsed);
            return Ok(());
        }
        cur = obj.get_mut(*part).expect("checked above");
    }
    Err(Error::config(key, "empty key"))
}

/// Budget in dBm: one value for every BS, or one per BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PowerSpec {
    Uniform(f64),
    PerBs(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSection {
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "P_dbm")]
    pub p_dbm: PowerSpec,
    pub noise_dbm: f64,
    pub pl0_db: f64,
    pub d0: f64,
    pub exponent_direct: f64,
    pub exponent_ris: f64,
    pub ris_enabled: bool,
}

/// On-disk JSON form of a scenario. Top-level keys: `system`, `geometry`,
/// `algo`, `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub system: SystemSection,
    pub geometry: Geometry,
    #[serde(default)]
    pub algo: AlgoParams,
    #[serde(default)]
    pub seed: u64,
}

/// Default per-BS budget of the presets, in dBm.
pub const DEFAULT_POWER_DBM: f64 = 20.0;

/// Preset geometry with `d = 20 m` for two or three users.
pub fn default_scenario(users: usize) -> Result<ScenarioConfig> {
    if !(2..=3).contains(&users) {
        return Err(Error::UnsupportedPreset(users));
    }
    let d = 20.0;
    let mut bs = vec![Point::new(0.0, 0.0), Point::new(2.0 * d, 0.0)];
    let mut ris = vec![Point::new(-d / 4.0, d / 8.0), Point::new(9.0 * d / 4.0, d / 8.0)];
    let mut ue = vec![Point::new(d / 2.0, 3.0 * d / 2.0), Point::new(3.0 * d / 2.0, 3.0 * d / 2.0)];
    if users == 3 {
        bs.push(Point::new(0.0, 4.0 * d));
        ris.push(Point::new(-d / 4.0, 9.0 * d / 4.0));
        ue.push(Point::new(d / 2.0, 5.0 * d / 2.0));
    }
    Ok(ScenarioConfig {
        users,
        subcarriers: 16,
        elements: 50,
        taps: 4,
        power_w: vec![dbm_to_watts(DEFAULT_POWER_DBM); users],
        noise_w: dbm_to_watts(-80.0),
        geometry: Geometry { bs, ris, ue },
        pathloss: PathlossModel::default(),
        ris_enabled: true,
        seed: 0,
        algo: AlgoParams::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn preset_positions() {
        let two = default_scenario(2).unwrap();
        assert_eq!(two.geometry.bs[1], Point::new(40.0, 0.0));
        assert_eq!(two.geometry.ue[0], Point::new(10.0, 30.0));
        assert_eq!(two.geometry.ris[1], Point::new(45.0, 2.5));
        assert_relative_eq!(two.noise_w, 1e-11, max_relative = 1e-12);
        let three = default_scenario(3).unwrap();
        assert_eq!(three.geometry.ue[2], Point::new(10.0, 50.0));
        assert_eq!(three.geometry.bs[2], Point::new(0.0, 80.0));
        assert_eq!(three.geometry.ris[2], Point::new(-5.0, 45.0));
        assert_eq!((three.subcarriers, three.elements, three.taps), (16, 50, 4));
    }

    #[test]
    fn presets_agree_on_shared_users() {
        let two = default_scenario(2).unwrap();
        let three = default_scenario(3).unwrap();
        for q in 0..2 {
            assert_eq!(two.geometry.bs[q], three.geometry.bs[q]);
            assert_eq!(two.geometry.ris[q], three.geometry.ris[q]);
            assert_eq!(two.geometry.ue[q], three.geometry.ue[q]);
        }
    }

    #[test]
    fn unsupported_preset() {
        assert!(matches!(default_scenario(1), Err(Error::UnsupportedPreset(1))));
        assert!(matches!(default_scenario(4), Err(Error::UnsupportedPreset(4))));
    }

    #[test]
    fn pathloss_values() {
        let o = Point::new(0.0, 0.0);
        let one = pathloss(&o, &Point::new(1.0, 0.0), 2.0, -30.0, 1.0).unwrap();
        assert_relative_eq!(one, 1e-3f64.sqrt(), max_relative = 1e-12);
        let ten2 = pathloss(&o, &Point::new(0.0, 10.0), 2.0, -30.0, 1.0).unwrap();
        assert_relative_eq!(ten2, 3.1622776601683795e-3, max_relative = 1e-12);
        let ten4 = pathloss(&o, &Point::new(0.0, 10.0), 4.0, -30.0, 1.0).unwrap();
        assert_relative_eq!((ten4 / ten2).powi(2), 1e-2, max_relative = 1e-12);
    }

    #[test]
    fn pathloss_rejects_coincident_nodes() {
        let p = Point::new(3.0, 4.0);
        assert!(matches!(
            pathloss(&p, &p, 2.0, -30.0, 1.0),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn overrides_and_round_trip() {
        let cfg = default_scenario(2).unwrap();
        let back = ScenarioConfig::from_file(cfg.to_file()).unwrap();
        assert_eq!(back.users, cfg.users);
        for (a, b) in back.power_w.iter().zip(&cfg.power_w) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
        let o = cfg.with_overrides(&["system.M=0", "algo.tau=0.5", "seed=9"]).unwrap();
        assert_eq!(o.elements, 0);
        assert!(!o.ris_active());
        assert_eq!(o.algo.tau, 0.5);
        assert_eq!(o.seed, 9);
        let err = cfg.with_overrides(&["system.nope=1"]).unwrap_err();
        assert!(err.to_string().contains("system.nope"));
        assert!(cfg.with_overrides(&["algo.tau=-1"]).is_err());
        assert!(cfg.with_overrides(&["system.L=17"]).is_err());
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut cfg = default_scenario(2).unwrap();
        cfg.algo.pdd.c = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = default_scenario(2).unwrap();
        cfg.geometry.ue[1] = cfg.geometry.bs[0];
        assert!(matches!(cfg.validate(), Err(Error::DegenerateGeometry(_))));
    }

    proptest::proptest! {
        #[test]
        fn dbm_round_trip(dbm in -150.0f64..60.0) {
            let back = watts_to_dbm(dbm_to_watts(dbm));
            proptest::prop_assert!((back - dbm).abs() <= 1e-12 * dbm.abs().max(1.0));
            let w = dbm_to_watts(dbm);
            proptest::prop_assert!((dbm_to_watts(watts_to_dbm(w)) - w).abs() <= 1e-12 * w);
        }

        #[test]
        fn pathloss_decreases_with_distance(d1 in 0.1f64..500.0, gap in 0.01f64..100.0, alpha in 0.5f64..5.0) {
            let o = Point::new(0.0, 0.0);
            let a = pathloss(&o, &Point::new(d1, 0.0), alpha, -30.0, 1.0).unwrap();
            let b = pathloss(&o, &Point::new(d1 + gap, 0.0), alpha, -30.0, 1.0).unwrap();
            proptest::prop_assert!(b < a);
        }
    }
}
