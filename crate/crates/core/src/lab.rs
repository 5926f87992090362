//! Experiment orchestration: run configuration, pluggable monitors, run
//! directories keyed by a content hash, and parallel parameter sweeps.
//!
//! Configuration is flat `key=value` text with one dotted namespace level:
//!
//! ```text
//! model.N = 3
//! model.lambda1 = 1
//! model.p1 = 2
//! grid.R = 20
//! grid.M = 4096
//! frame = physical
//! t_end = 10
//! monitors = conservation, gradient_bound
//! sweep.model.p1 = 0.5, 1.0, 1.5
//! ```
//!
//! A JSON object with the same keys (flat, or nested one level) is accepted
//! too. `sweep.*` keys are only read by [`sweep`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::criteria::{classify, DataStats, Verdict};
use crate::diagnostics::{
    decay_fit, default_theta, gronwall_exponent_check, pairing_series, witness_report, Ledger,
    LedgerRecord,
};
use crate::error::{Error, Result};
use crate::ground_state::ground_state;
use crate::propagators::{LensState, LensStepper, PhysicalStepper, StepperConfig};
use crate::pseudoconformal::{
    check_identities, extract_scattering_state, to_lens, ExtractOptions,
};
use crate::radial_field::{ModelParams, RadialField, RadialGrid};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Physical,
    Lens,
    Both,
}

impl std::str::FromStr for Frame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "physical" => Ok(Frame::Physical),
            "lens" => Ok(Frame::Lens),
            "both" => Ok(Frame::Both),
            other => Err(Error::param(format!(
                "unknown frame '{other}' (expected physical, lens or both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialDatum {
    /// `amplitude · exp(−r²/width²) · e^{i·chirp·r²}`.
    Gaussian { amplitude: f64, width: f64, chirp: f64 },
    /// Sum of three Gaussians with random weights, widths and centers.
    Random { amplitude: f64, width: f64 },
    /// A field CSV as written by [`RadialField::save_csv`].
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ModelParams,
    pub radius: f64,
    pub nodes: usize,
    /// Radius of the lens grid in `both` runs; defaults to `R/(1+t_end)`.
    pub lens_radius: Option<f64>,
    pub dt: f64,
    pub rho: f64,
    pub scheme: String,
    pub substeps: usize,
    pub init: InitialDatum,
    pub frame: Frame,
    pub t_end: f64,
    pub s_end: f64,
    pub monitors: Vec<String>,
    pub seed: u64,
    pub decay_exponents: Vec<f64>,
    pub witness_from: f64,
    pub extract_eps: Vec<f64>,
    pub extract_substeps: usize,
    pub identities_every: usize,
}

/// Flat dotted-key configuration map.
pub type ConfigMap = BTreeMap<String, String>;

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<ConfigMap> {
    let mut map = ConfigMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::param(format!("config line {}: expected key=value, got '{line}'", k + 1))
        })?;
        let key = key.trim();
        if key.is_empty() || key.split('.').count() > 3 {
            return Err(Error::param(format!("config line {}: bad key '{key}'", k + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn flatten_json(prefix: &str, value: &Value, out: &mut ConfigMap) -> Result<()> {
    match value {
        Value::Object(obj) => {
            for (k, v) in obj {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_json(&key, v, out)?;
            }
        }
        Value::Array(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            out.insert(prefix.to_string(), parts.join(","));
        }
        Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        Value::Null => {}
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
    Ok(())
}

/// Parse either the key=value format or its JSON mirror.
pub fn parse_config_text(text: &str) -> Result<ConfigMap> {
    if text.trim_start().starts_with('{') {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::param(format!("config JSON: {e}")))?;
        let mut map = ConfigMap::new();
        flatten_json("", &value, &mut map)?;
        Ok(map)
    } else {
        parse_key_values(text)
    }
}

pub fn load_config_map(path: impl AsRef<Path>) -> Result<ConfigMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::param(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

fn get<T: std::str::FromStr>(map: &ConfigMap, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(raw) => raw
            .parse()
            .map_err(|_| Error::param(format!("config key {key}: cannot parse '{raw}'"))),
    }
}

fn get_list<T: std::str::FromStr>(map: &ConfigMap, key: &str, default: Vec<T>) -> Result<Vec<T>> {
    match map.get(key) {
        None => Ok(default),
        Some(raw) => raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::param(format!("config key {key}: bad item '{s}'"))))
            .collect(),
    }
}

const KNOWN_KEYS: &[&str] = &[
    "model.N",
    "model.lambda1",
    "model.lambda2",
    "model.p1",
    "model.p2",
    "grid.R",
    "grid.M",
    "lens.R",
    "stepping.dt",
    "stepping.rho",
    "stepping.scheme",
    "stepping.substeps",
    "init.kind",
    "init.amplitude",
    "init.width",
    "init.chirp",
    "init.path",
    "frame",
    "t_end",
    "s_end",
    "monitors",
    "seed",
    "decay.r",
    "witness.from",
    "extract.eps",
    "extract.substeps",
    "identities.every",
];

impl RunConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        if let Some(unknown) =
            map.keys().find(|k| !k.starts_with("sweep.") && !KNOWN_KEYS.contains(&k.as_str()))
        {
            return Err(Error::param(format!("unknown config key '{unknown}'")));
        }
        let dim: usize = get(map, "model.N", 3)?;
        let lambda1 = get(map, "model.lambda1", 1.0)?;
        let lambda2 = get(map, "model.lambda2", 0.0)?;
        let p1 = get(map, "model.p1", 2.0)?;
        let p2 = get(map, "model.p2", 4.0 / (dim as f64 - 2.0))?;
        let params = ModelParams { dim, lambda1, lambda2, p1, p2 };
        let kind: String = get(map, "init.kind", "gaussian".to_string())?;
        let amplitude = get(map, "init.amplitude", 1.0)?;
        let width = get(map, "init.width", 1.0)?;
        let init = match kind.as_str() {
            "gaussian" => {
                InitialDatum::Gaussian { amplitude, width, chirp: get(map, "init.chirp", 0.0)? }
            }
            "random" => InitialDatum::Random { amplitude, width },
            "file" => InitialDatum::File {
                path: map
                    .get("init.path")
                    .map(PathBuf::from)
                    .ok_or_else(|| Error::param("init.kind = file needs init.path"))?,
            },
            other => return Err(Error::param(format!("unknown init.kind '{other}'"))),
        };
        let cfg = Self {
            params,
            radius: get(map, "grid.R", 20.0)?,
            nodes: get(map, "grid.M", 1024)?,
            lens_radius: match map.get("lens.R") {
                None => None,
                Some(_) => Some(get(map, "lens.R", 0.0)?),
            },
            dt: get(map, "stepping.dt", 1e-3)?,
            rho: get(map, "stepping.rho", 0.05)?,
            scheme: get(map, "stepping.scheme", "strang".to_string())?,
            substeps: get(map, "stepping.substeps", 1)?,
            init,
            frame: get(map, "frame", Frame::Physical)?,
            t_end: get(map, "t_end", 1.0)?,
            s_end: get(map, "s_end", 0.9)?,
            monitors: get_list(map, "monitors", vec!["conservation".to_string()])?,
            seed: get(map, "seed", 0)?,
            decay_exponents: get_list(map, "decay.r", vec![4.0, 6.0])?,
            witness_from: get(map, "witness.from", 0.5)?,
            extract_eps: get_list(map, "extract.eps", vec![0.1, 0.05, 0.025])?,
            extract_substeps: get(map, "extract.substeps", 1000)?,
            identities_every: get(map, "identities.every", 100)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_map(&load_config_map(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        RadialGrid::new(self.radius, self.nodes, self.params.dim)?;
        self.stepper_config().validate()?;
        let has_lens = matches!(self.frame, Frame::Lens | Frame::Both);
        if has_lens && !(self.s_end > 0.0 && self.s_end < 1.0) {
            return Err(Error::param(format!("s_end = {} must lie in (0, 1)", self.s_end)));
        }
        if self.frame == Frame::Physical && !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::param(format!("t_end = {} must be positive", self.t_end)));
        }
        if self.extract_eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::param("extract.eps entries must lie in (0, 1)"));
        }
        if self.identities_every == 0 {
            return Err(Error::param("identities.every must be positive"));
        }
        MonitorRegistry::default().check(&self.monitors)?;
        Ok(())
    }

    pub fn stepper_config(&self) -> StepperConfig {
        StepperConfig {
            dt: self.dt,
            substeps_linear: self.substeps,
            scheme: self.scheme.clone(),
            near_one_ratio: self.rho,
        }
    }

    pub fn grid(&self) -> Result<Arc<RadialGrid>> {
        Ok(RadialGrid::new(self.radius, self.nodes, self.params.dim)?.shared())
    }

    /// Physical end time: `t_end`, or `s_end/(1 − s_end)` when a lens run is
    /// involved.
    pub fn physical_end(&self) -> f64 {
        match self.frame {
            Frame::Physical => self.t_end,
            _ => self.s_end / (1.0 - self.s_end),
        }
    }

    pub fn initial_datum(&self) -> Result<RadialField> {
        let grid = self.grid()?;
        match &self.init {
            InitialDatum::Gaussian { amplitude, width, chirp } => {
                if !(*width > 0.0) {
                    return Err(Error::param("init.width must be positive"));
                }
                Ok(RadialField::gaussian(grid, *amplitude, *width).chirp(*chirp))
            }
            InitialDatum::Random { amplitude, width } => {
                let mut rng = rand::rngs::StdRng::seed_from_u64(self.seed);
                let bumps: Vec<(f64, f64, f64)> = (0..3)
                    .map(|_| {
                        (
                            rng.random_range(-1.0..1.0),
                            width * rng.random_range(0.5..1.5),
                            width * rng.random_range(0.0..1.5),
                        )
                    })
                    .collect();
                Ok(RadialField::from_real_fn(grid, |r| {
                    amplitude
                        * bumps
                            .iter()
                            .map(|&(c, w, r0)| c * (-((r - r0) / w).powi(2)).exp())
                            .sum::<f64>()
                }))
            }
            InitialDatum::File { path } => {
                let f = RadialField::load_csv(path)?;
                if f.grid() != grid.as_ref() {
                    return Err(Error::Structural(format!(
                        "datum {} is not sampled on the configured grid",
                        path.display()
                    )));
                }
                Ok(f)
            }
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// What a monitor sees after every step.
pub struct Observation<'a> {
    pub frame: Frame,
    /// `t` in the physical frame, `s` in the lens frame.
    pub time: f64,
    pub field: &'a RadialField,
    pub lens: Option<&'a LensState>,
    pub record: &'a LedgerRecord,
}

/// A diagnostic attached to a run.
pub trait Monitor: Send {
    fn name(&self) -> &'static str;
    fn observe(&mut self, obs: &Observation<'_>) -> Result<()>;
    fn finish(&mut self, params: &ModelParams) -> Result<Value>;
}

pub type MonitorFactory = fn(&RunConfig) -> Box<dyn Monitor>;

/// Monitors by name.
pub struct MonitorRegistry {
    factories: BTreeMap<&'static str, MonitorFactory>,
}

impl Default for MonitorRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register("conservation", |_| Box::new(Conservation::default()));
        reg.register("gradient_bound", |_| Box::new(GradientBound::default()));
        reg.register("gronwall", |_| Box::new(Gronwall::default()));
        reg.register("decay", |cfg| Box::new(Decay::new(cfg)));
        reg.register("witness", |cfg| Box::new(Witness::new(cfg)));
        reg.register("extract", |cfg| Box::new(Extract::new(cfg)));
        reg.register("identities", |cfg| Box::new(Identities::new(cfg)));
        reg
    }
}

impl MonitorRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &'static str, factory: MonitorFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn check(&self, names: &[String]) -> Result<()> {
        match names.iter().find(|n| !self.factories.contains_key(n.as_str())) {
            Some(bad) => Err(Error::param(format!(
                "unknown monitor '{bad}' (known: {})",
                self.names().join(", ")
            ))),
            None => Ok(()),
        }
    }

    pub fn build(&self, cfg: &RunConfig) -> Result<Vec<Box<dyn Monitor>>> {
        self.check(&cfg.monitors)?;
        Ok(cfg.monitors.iter().map(|n| (self.factories[n.as_str()])(cfg)).collect())
    }
}

#[derive(Default)]
struct Conservation {
    physical: Ledger,
    lens: Ledger,
}

impl Monitor for Conservation {
    fn name(&self) -> &'static str {
        "conservation"
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        match obs.frame {
            Frame::Lens => self.lens.records.push(*obs.record),
            _ => self.physical.records.push(*obs.record),
        }
        Ok(())
    }

    fn finish(&mut self, _: &ModelParams) -> Result<Value> {
        let summary = |l: &Ledger| {
            (!l.is_empty()).then(|| {
                json!({
                    "mass_drift": l.mass_drift(),
                    "energy_drift": l.energy_drift(),
                    "max_identity_residual": l.max_residual(),
                    "records": l.len(),
                })
            })
        };
        Ok(json!({ "physical": summary(&self.physical), "lens": summary(&self.lens) }))
    }
}

#[derive(Default)]
struct GradientBound {
    initial: Option<f64>,
    sup: f64,
    last: f64,
}

impl Monitor for GradientBound {
    fn name(&self) -> &'static str {
        "gradient_bound"
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        if obs.frame != Frame::Lens {
            return Ok(());
        }
        let g = obs.record.grad_l2;
        self.initial.get_or_insert(g);
        self.sup = self.sup.max(g);
        self.last = g;
        Ok(())
    }

    fn finish(&mut self, _: &ModelParams) -> Result<Value> {
        let initial = self.initial.unwrap_or(0.0);
        let ratio = if initial > 0.0 { self.sup / initial } else { 0.0 };
        Ok(json!({
            "initial": initial,
            "sup": self.sup,
            "final": self.last,
            "sup_over_initial": ratio,
        }))
    }
}

#[derive(Default)]
struct Gronwall {
    records: Vec<LedgerRecord>,
}

impl Monitor for Gronwall {
    fn name(&self) -> &'static str {
        "gronwall"
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        if obs.frame == Frame::Lens {
            self.records.push(*obs.record);
        }
        Ok(())
    }

    fn finish(&mut self, params: &ModelParams) -> Result<Value> {
        Ok(match gronwall_exponent_check(&self.records, params, 0.5) {
            Ok(fit) => serde_json::to_value(fit)?,
            Err(e) => json!({ "error": e.to_string() }),
        })
    }
}

/// `‖u(t)‖_r` samples, read from the lens frame when one is available.
struct Decay {
    exponents: Vec<f64>,
    physical: Vec<(f64, Vec<f64>)>,
    lens: Vec<(f64, Vec<f64>)>,
}

impl Decay {
    fn new(cfg: &RunConfig) -> Self {
        Self { exponents: cfg.decay_exponents.clone(), physical: Vec::new(), lens: Vec::new() }
    }
}

impl Monitor for Decay {
    fn name(&self) -> &'static str {
        "decay"
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        let n = obs.field.dim() as f64;
        match obs.lens {
            Some(st) => {
                let t = st.physical_time();
                let norms = self
                    .exponents
                    .iter()
                    .map(|&r| {
                        let v = obs.field.norm_lr(r)?;
                        Ok((1.0 + t).powf(-n * (r - 2.0) / (2.0 * r)) * v)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                self.lens.push((t, norms));
            }
            None => {
                let norms = self
                    .exponents
                    .iter()
                    .map(|&r| obs.field.norm_lr(r))
                    .collect::<Result<Vec<f64>>>()?;
                self.physical.push((obs.time, norms));
            }
        }
        Ok(())
    }

    fn finish(&mut self, params: &ModelParams) -> Result<Value> {
        let series = if self.lens.is_empty() { &self.physical } else { &self.lens };
        let fits: Vec<Value> = self
            .exponents
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let traj: Vec<(f64, f64)> = series.iter().map(|(t, v)| (*t, v[k])).collect();
                match decay_fit(&traj, r, params.dim) {
                    Ok(fit) => serde_json::to_value(fit).unwrap_or(Value::Null),
                    Err(e) => json!({ "r": r, "error": e.to_string() }),
                }
            })
            .collect();
        Ok(Value::Array(fits))
    }
}

struct Witness {
    window_start: f64,
    states: Vec<LensState>,
}

impl Witness {
    fn new(cfg: &RunConfig) -> Self {
        Self { window_start: cfg.witness_from, states: Vec::new() }
    }
}

impl Monitor for Witness {
    fn name(&self) -> &'static str {
        "witness"
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        if let Some(st) = obs.lens {
            if st.s() >= self.window_start - 1e-12 {
                self.states.push(st.clone());
            }
        }
        Ok(())
    }

    fn finish(&mut self, params: &ModelParams) -> Result<Value> {
        let Some(first) = self.states.first() else {
            return Ok(json!({ "error": "no lens states inside the witness window" }));
        };
        let theta = default_theta(first.field().grid_arc().clone());
        let series = pairing_series(&self.states, &theta)?;
        let s_end = series.last().map_or(0.0, |p| p.0);
        let n = params.n();
        let report = witness_report(&series, (self.window_start, s_end), 0.5 * (n * params.p1 - 2.0))?;
        let modulus_drift = (report.growth_ratio - 1.0).abs();
        Ok(json!({
            "regime": params.p1 <= 2.0 / n * (1.0 + 1e-12),
            "window": [report.window.0, report.window.1],
            "growth_ratio": report.growth_ratio,
            "modulus_drift": modulus_drift,
            "strictly_increasing": report.strictly_increasing,
            "fitted_exponent": report.fitted_exponent,
            "expected_exponent": report.expected_exponent,
            "path_length": report.path_length,
        }))
    }
}

struct Extract {
    targets: Vec<f64>,
    substeps: usize,
    states: Vec<LensState>,
}

impl Extract {
    fn new(cfg: &RunConfig) -> Self {
        let mut targets: Vec<f64> = cfg.extract_eps.iter().map(|e| 1.0 - e).collect();
        targets.sort_by(f64::total_cmp);
        Self { targets, substeps: cfg.extract_substeps, states: Vec::new() }
    }
}

impl Monitor for Extract {
    fn name(&self) -> &'static str {
        "extract"
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        if let Some(st) = obs.lens {
            if self.targets.iter().any(|&s| (s - st.s()).abs() < 1e-12) {
                self.states.push(st.clone());
            }
        }
        Ok(())
    }

    fn finish(&mut self, _: &ModelParams) -> Result<Value> {
        let opts = ExtractOptions { substeps: self.substeps, ..Default::default() };
        Ok(match extract_scattering_state(&self.states, &opts) {
            Ok((u_plus, report)) => json!({
                "entries": report.entries,
                "sigma_decreasing": report.sigma_decreasing(),
                "u_plus_mass": u_plus.mass(),
                "u_plus_sigma_norm": u_plus.norm_sigma(),
            }),
            Err(e) => json!({ "error": e.to_string() }),
        })
    }
}

/// Frame identities at every `every`-th physical state.
struct Identities {
    every: usize,
    seen: usize,
    params: ModelParams,
    worst: f64,
    checks: usize,
    pending: Option<(f64, RadialField)>,
}

impl Identities {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            every: cfg.identities_every,
            seen: 0,
            params: cfg.params,
            worst: 0.0,
            checks: 0,
            pending: None,
        }
    }

    fn check(&mut self, t: f64, u: &RadialField) -> Result<()> {
        let v = to_lens(u, t, None)?;
        let res = check_identities(u, t, &v, &self.params);
        self.worst = self.worst.max(res.max());
        self.checks += 1;
        Ok(())
    }
}

impl Monitor for Identities {
    fn name(&self) -> &'static str {
        "identities"
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        if obs.lens.is_some() {
            return Ok(());
        }
        if self.seen.is_multiple_of(self.every) {
            self.check(obs.time, obs.field)?;
            self.pending = None;
        } else {
            self.pending = Some((obs.time, obs.field.clone()));
        }
        self.seen += 1;
        Ok(())
    }

    fn finish(&mut self, _: &ModelParams) -> Result<Value> {
        if let Some((t, u)) = self.pending.take() {
            self.check(t, &u)?;
        }
        Ok(json!({ "max_residual": self.worst, "checks": self.checks }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub run_id: String,
    pub ledger: String,
    pub verdict: Verdict,
    pub monitors: BTreeMap<String, Value>,
    /// Relative L² distance between the mapped physical solution and the
    /// lens solution at `s_end`, for `both` runs.
    pub frame_equivalence: Option<f64>,
    pub wall_clock_seconds: f64,
    pub code_version: String,
}

/// Verdict for `phi`, computing the sharp constant only if it is needed.
pub fn verdict_for(params: &ModelParams, phi: &RadialField) -> Result<Verdict> {
    let stats = DataStats::from_field(phi, params);
    match classify(params, &stats, None) {
        Err(Error::MissingOracle(_)) => {
            let gs = ground_state(params.dim)?;
            classify(params, &stats, Some(gs.cn))
        }
        other => other,
    }
}

pub fn run_id(cfg: &RunConfig) -> String {
    format!("run-{}", &cfg.content_hash()[..16])
}

fn observe_all(
    monitors: &mut [Box<dyn Monitor>],
    obs: &Observation<'_>,
) -> Result<()> {
    monitors.iter_mut().try_for_each(|m| m.observe(obs))
}

fn run_physical(
    cfg: &RunConfig,
    phi: &RadialField,
    t_end: f64,
    monitors: &mut [Box<dyn Monitor>],
) -> Result<(Ledger, RadialField)> {
    let params = cfg.params;
    let mut stepper = PhysicalStepper::new(params, cfg.stepper_config())?;
    let mut ledger = Ledger::new();
    let u = stepper.evolve(phi, t_end, |t, u| {
        let rec = *ledger.push_physical(t, u, &params)?;
        observe_all(
            monitors,
            &Observation { frame: Frame::Physical, time: t, field: u, lens: None, record: &rec },
        )
    })?;
    Ok((ledger, u))
}

fn run_lens(
    cfg: &RunConfig,
    start: LensState,
    monitors: &mut [Box<dyn Monitor>],
) -> Result<(Ledger, LensState)> {
    let params = cfg.params;
    let mut stepper = LensStepper::new(params, cfg.stepper_config())?;
    let mut stops: Vec<f64> = cfg.extract_eps.iter().map(|e| 1.0 - e).collect();
    stops.push(cfg.witness_from);
    stops.sort_by(f64::total_cmp);
    let mut ledger = Ledger::new();
    let end = stepper.advance(&start, cfg.s_end, &stops, |st| {
        let rec = *ledger.push_lens(st, &params)?;
        observe_all(
            monitors,
            &Observation {
                frame: Frame::Lens,
                time: st.s(),
                field: st.field(),
                lens: Some(st),
                record: &rec,
            },
        )
    })?;
    Ok((ledger, end))
}

fn write_ledger(ledger: &Ledger, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    ledger.write_csv(&mut out)?;
    use std::io::Write;
    out.flush()?;
    Ok(())
}

/// Execute one configuration and persist `ledger.csv` and `record.json`
/// under `out_root/<run id>/`.
pub fn run(cfg: &RunConfig, out_root: impl AsRef<Path>) -> Result<RunRecord> {
    run_with(cfg, out_root, &MonitorRegistry::default())
}

pub fn run_with(
    cfg: &RunConfig,
    out_root: impl AsRef<Path>,
    registry: &MonitorRegistry,
) -> Result<RunRecord> {
    cfg.validate()?;
    let started = Instant::now();
    let id = run_id(cfg);
    let dir = out_root.as_ref().join(&id);
    fs::create_dir_all(&dir)?;
    info!("run {id}: frame {:?}", cfg.frame);

    let phi = cfg.initial_datum()?;
    let verdict = verdict_for(&cfg.params, &phi)?;
    let mut monitors = registry.build(cfg)?;
    let mut frame_equivalence = None;

    let primary = match cfg.frame {
        Frame::Physical => run_physical(cfg, &phi, cfg.t_end, &mut monitors)?.0,
        Frame::Lens => {
            let start = to_lens(&phi, 0.0, None)?;
            run_lens(cfg, start, &mut monitors)?.0
        }
        Frame::Both => {
            let t_end = cfg.physical_end();
            let (physical, u_end) = run_physical(cfg, &phi, t_end, &mut monitors)?;
            write_ledger(&physical, &dir.join("ledger_physical.csv"))?;
            let lens_radius = cfg.lens_radius.unwrap_or(cfg.radius / (1.0 + t_end));
            let lens_grid = RadialGrid::new(lens_radius, cfg.nodes, cfg.params.dim)?.shared();
            let start = to_lens(&phi, 0.0, Some(lens_grid.clone()))?;
            let (lens, v_end) = run_lens(cfg, start, &mut monitors)?;
            let mapped = to_lens(&u_end, t_end, Some(lens_grid))?;
            let diff = mapped.field().sub(v_end.field())?;
            let scale = v_end.field().norm_l2();
            frame_equivalence =
                Some(if scale > 0.0 { diff.norm_l2() / scale } else { diff.norm_l2() });
            lens
        }
    };
    let ledger_path = dir.join("ledger.csv");
    write_ledger(&primary, &ledger_path)?;

    let mut outputs = BTreeMap::new();
    for m in monitors.iter_mut() {
        outputs.insert(m.name().to_string(), m.finish(&cfg.params)?);
    }
    let record = RunRecord {
        config: cfg.clone(),
        run_id: id,
        ledger: "ledger.csv".to_string(),
        verdict,
        monitors: outputs,
        frame_equivalence,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        code_version: CODE_VERSION.to_string(),
    };
    fs::write(dir.join("record.json"), serde_json::to_string_pretty(&record)?)?;
    Ok(record)
}

/// One lattice axis: a config key and its values.
pub type SweepAxis = (String, Vec<String>);

/// Split `sweep.<key>` entries off a config map.
pub fn sweep_axes(map: &ConfigMap) -> (ConfigMap, Vec<SweepAxis>) {
    let mut base = ConfigMap::new();
    let mut axes = Vec::new();
    for (k, v) in map {
        match k.strip_prefix("sweep.") {
            Some(key) => axes.push((
                key.to_string(),
                v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
            )),
            None => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
    (base, axes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub values: Vec<String>,
    pub run_id: Option<String>,
    pub resumed: bool,
    pub verdict: Option<Verdict>,
    pub summary: BTreeMap<String, f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub keys: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub csv: PathBuf,
}

fn lattice(axes: &[SweepAxis]) -> Vec<Vec<String>> {
    axes.iter().fold(vec![Vec::new()], |acc, (_, values)| {
        acc.iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect()
    })
}

/// Scalar summaries pulled from a record for the sweep table.
fn summarize(record: &RunRecord) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let mut put = |name: String, v: Option<f64>| {
        if let Some(x) = v {
            out.insert(name, x);
        }
    };
    let m = &record.monitors;
    for frame in ["physical", "lens"] {
        if let Some(c) = m.get("conservation").and_then(|c| c.get(frame)) {
            put(format!("{frame}_mass_drift"), c.get("mass_drift").and_then(Value::as_f64));
            put(format!("{frame}_energy_drift"), c.get("energy_drift").and_then(Value::as_f64));
            put(
                format!("{frame}_max_residual"),
                c.get("max_identity_residual").and_then(Value::as_f64),
            );
        }
    }
    put("gronwall_slope".into(), m.get("gronwall").and_then(|g| g.get("slope")).and_then(Value::as_f64));
    if let Some(Value::Array(fits)) = m.get("decay") {
        for f in fits {
            if let (Some(r), Some(slope)) =
                (f.get("r").and_then(Value::as_f64), f.get("slope").and_then(Value::as_f64))
            {
                put(format!("decay_r{r}_slope"), Some(slope));
            }
        }
    }
    put(
        "witness_exponent".into(),
        m.get("witness").and_then(|w| w.get("fitted_exponent")).and_then(Value::as_f64),
    );
    put(
        "grad_sup_ratio".into(),
        m.get("gradient_bound").and_then(|g| g.get("sup_over_initial")).and_then(Value::as_f64),
    );
    put("frame_equivalence".into(), record.frame_equivalence);
    if let Some(margin) = record.verdict.threshold_margin {
        put("threshold_margin".into(), Some(margin));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Run every point of the lattice spanned by `axes` on top of `base`, in a
/// pool of `jobs` workers, and collate one CSV row per point into
/// `out_root/sweep.csv`. Points whose run directory already holds a record
/// are loaded instead of re-run; failing points are recorded, not fatal.
pub fn sweep(
    base: &ConfigMap,
    axes: &[SweepAxis],
    out_root: impl AsRef<Path>,
    jobs: usize,
) -> Result<SweepReport> {
    let out_root = out_root.as_ref();
    fs::create_dir_all(out_root)?;
    if let Some((key, _)) = axes.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::param(format!("sweep axis {key} has no values")));
    }
    let points = lattice(axes);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::param(format!("cannot build worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(index, values)| {
                let mut map = base.clone();
                for ((key, _), v) in axes.iter().zip(values) {
                    map.insert(key.clone(), v.clone());
                }
                let mut row = SweepRow {
                    index,
                    values: values.clone(),
                    run_id: None,
                    resumed: false,
                    verdict: None,
                    summary: BTreeMap::new(),
                    error: None,
                };
                let outcome = RunConfig::from_map(&map).and_then(|cfg| {
                    let id = run_id(&cfg);
                    row.run_id = Some(id.clone());
                    let existing = out_root.join(&id).join("record.json");
                    if let Ok(text) = fs::read_to_string(&existing) {
                        if let Ok(rec) = serde_json::from_str::<RunRecord>(&text) {
                            row.resumed = true;
                            return Ok(rec);
                        }
                    }
                    run(&cfg, out_root)
                });
                match outcome {
                    Ok(rec) => {
                        row.summary = summarize(&rec);
                        row.verdict = Some(rec.verdict);
                    }
                    Err(e) => {
                        warn!("sweep point {index} failed: {e}");
                        row.error = Some(e.to_string());
                    }
                }
                row
            })
            .collect()
    });

    let keys: Vec<String> = axes.iter().map(|(k, _)| k.clone()).collect();
    let mut metric_names: Vec<String> =
        rows.iter().flat_map(|r| r.summary.keys().cloned()).collect();
    metric_names.sort();
    metric_names.dedup();
    let mut text = String::from("index");
    for k in keys.iter().chain(["run_id", "status", "tag", "source"].map(String::from).iter()) {
        text.push(',');
        text.push_str(&csv_field(k));
    }
    for m in &metric_names {
        text.push(',');
        text.push_str(m);
    }
    text.push_str(",error\n");
    for r in &rows {
        let mut fields = vec![r.index.to_string()];
        fields.extend(r.values.iter().map(|v| csv_field(v)));
        fields.push(r.run_id.clone().unwrap_or_default());
        fields.push(if r.error.is_some() { "error".into() } else { "ok".into() });
        fields.push(r.verdict.as_ref().map(|v| v.tag.to_string()).unwrap_or_default());
        fields.push(csv_field(r.verdict.as_ref().map_or("", |v| v.source.as_str())));
        for m in &metric_names {
            fields.push(r.summary.get(m).map(|x| format!("{x:.15e}")).unwrap_or_default());
        }
        fields.push(csv_field(r.error.as_deref().unwrap_or("")));
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    let csv = out_root.join("sweep.csv");
    fs::write(&csv, text)?;
    Ok(SweepReport { keys, rows, csv })
}
