//! Experiment harness behind the `fbm-mde` binary: configuration, seeding,
//! output files and the run manifest.
//!
//! A configuration is a JSON object. Missing keys take the defaults of
//! [`ExperimentConfig::default`] (the OU contrast-curve setting) and
//! `--set a.b=value` overrides any key; `value` is parsed as JSON when it
//! can be and taken as a string otherwise.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::distances::{DistanceKind, DistanceSettings, DsFamily};
use crate::drift::ModelSpec;
use crate::error::{Error, Result};
use crate::estimator::{
    grid_estimate, grid_estimate_decreasing, rate_study_resume, sgd_run, ContrastConfig, EstimateResult, GridSpec,
    RateStudyConfig, ReplicationRecord, SgdConfig, SgdObjective,
};
use crate::fbm::{autocovariance_report, sample_fgn, HurstParameter};
use crate::rng::{derive_seed, streams};
use crate::simulate::{synthesize_observations, NoiseSource, ObservationSet, StepSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Scheme noise independent of the observation noise.
    Independent,
    /// Scheme driven by the observation noise itself (with `k0 = 1`,
    /// `γ = γ̲` and `N = n` the scheme at `θ0` reproduces the data).
    Debug,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcfSection {
    pub nodes: usize,
    pub mc_draws: usize,
}

impl Default for DcfSection {
    fn default() -> Self {
        let d = DistanceSettings::default();
        Self {
            nodes: d.dcf_nodes,
            mc_draws: d.dcf_mc_draws,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdSection {
    pub p: f64,
    /// One run per step scale and per scheme start.
    pub gamma0: Vec<f64>,
    /// Scheme starts; empty means the origin and `(3, −3, 3, …)`.
    pub starts: Vec<Vec<f64>>,
    pub theta_init: Vec<f64>,
    pub minibatch: usize,
    pub n_iter: usize,
}

impl Default for SgdSection {
    fn default() -> Self {
        Self {
            p: 2.0,
            gamma0: vec![20.0, 60.0],
            starts: Vec::new(),
            theta_init: vec![2.0],
            minibatch: 30,
            n_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSection {
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub varsigma: f64,
    pub gamma_anchor: f64,
    pub n_scheme_anchor: usize,
}

impl Default for RateSection {
    fn default() -> Self {
        Self {
            n_values: vec![1000, 4000, 16000],
            replications: 20,
            varsigma: 1.0,
            gamma_anchor: 0.01,
            n_scheme_anchor: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbmTestSection {
    pub n: usize,
    pub max_lag: usize,
    pub step: f64,
}

impl Default for FbmTestSection {
    fn default() -> Self {
        Self {
            n: 100_000,
            max_lag: 5,
            step: 1.0,
        }
    }
}

/// Resolved experiment configuration (see the module docs for the format).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub hurst: HurstParameter,
    pub theta0: Vec<f64>,
    /// Start of the observed process; zeros when absent.
    pub y0: Option<Vec<f64>>,
    /// Fine step `γ̲` used to synthesize observations.
    pub fine_step: f64,
    /// Observations keep every `k0`-th fine state.
    pub k0: usize,
    /// Observation spacing; must equal `k0 · fine_step` when given.
    pub kappa: Option<f64>,
    pub n_obs: usize,
    /// Scheme step `γ` (first step for decreasing schedules).
    pub gamma: f64,
    pub n_scheme: usize,
    /// Use `γ_k = γ k^{−ρ}` and the weighted estimator.
    pub decreasing: bool,
    pub rho: f64,
    /// Grid on which decreasing-step noise is generated.
    pub noise_fine_step: f64,
    /// Scheme start; the first observation when absent.
    pub z0: Option<Vec<f64>>,
    pub distance: DistanceKind,
    pub dcf: DcfSection,
    pub ds: DsFamily,
    pub grid: GridSpec,
    pub coupling: Coupling,
    pub sgd: SgdSection,
    pub rate: RateSection,
    pub fbm_test: FbmTestSection,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Ou,
            hurst: HurstParameter::new(0.3).unwrap(),
            theta0: vec![2.0],
            y0: None,
            fine_step: 1e-3,
            k0: 10,
            kappa: None,
            n_obs: 30_000,
            gamma: 1e-2,
            n_scheme: 30_000,
            decreasing: false,
            rho: 1.0 / 3.0,
            noise_fine_step: 1e-4,
            z0: None,
            distance: DistanceKind::Dcf { p: 2.0 },
            dcf: DcfSection::default(),
            ds: DsFamily::default(),
            grid: GridSpec::spacing(0.05),
            coupling: Coupling::Independent,
            sgd: SgdSection::default(),
            rate: RateSection::default(),
            fbm_test: FbmTestSection::default(),
            seed: 0,
        }
    }
}

const TAG_KEYS: [&str; 4] = ["kind", "key", "mode", "source"];

fn tag_of(v: &Map<String, Value>) -> Option<(&str, &Value)> {
    TAG_KEYS.iter().find_map(|k| v.get(*k).map(|t| (*k, t)))
}

/// `"model": "ou"` is shorthand for `"model": {"key": "ou"}`.
fn expand_model_key(v: &mut Value) {
    if let Some(key) = v.as_str() {
        let mut obj = Map::new();
        obj.insert("key".into(), Value::String(key.to_string()));
        *v = Value::Object(obj);
    }
}

/// Deep merge; tagged objects whose tag changes are replaced wholesale.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let same_variant = match (tag_of(b), tag_of(&o)) {
                (Some((kb, tb)), Some((ko, to))) => kb == ko && tb == to,
                _ => true,
            };
            if !same_variant {
                *b = o;
                return;
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_set(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "expected key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::config(assignment, "empty key"));
    }
    let mut value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    if key == "model" {
        expand_model_key(&mut value);
    }
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::config(key, format!("`{part}` is not inside an object")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let last = parts[parts.len() - 1];
    let obj = node
        .as_object_mut()
        .ok_or_else(|| Error::config(key, "parent is not an object"))?;
    if TAG_KEYS.contains(&last) && obj.get(last) != Some(&value) {
        // switching variant: drop the old variant's fields
        obj.clear();
    }
    if obj.contains_key(last) {
        merge(obj.get_mut(last).unwrap(), value);
    } else {
        obj.insert(last.to_string(), value);
    }
    Ok(())
}

impl ExperimentConfig {
    /// Defaults, then the file (a config or a previous run's manifest), then
    /// the `k=v` overrides in order.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut root = serde_json::to_value(Self::default())?;
        if let Some(path) = path {
            let text = fs::read_to_string(path)?;
            let mut file: Value =
                serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
            if let Some(inner) = file.get("config").filter(|_| file.get("command").is_some()) {
                file = inner.clone();
            }
            if !file.is_object() {
                return Err(Error::config(
                    path.display().to_string(),
                    "configuration must be a JSON object",
                ));
            }
            if let Some(m) = file.get_mut("model") {
                expand_model_key(m);
            }
            merge(&mut root, file);
        }
        for s in sets {
            apply_set(&mut root, s)?;
        }
        let config: Self = serde_path_to_error::deserialize(root).map_err(|e| {
            let key = e.path().to_string();
            Error::config(key, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model.build()?;
        let d = model.state_dim();
        if self.theta0.len() != model.param_dim() {
            return Err(Error::config(
                "theta0",
                format!("expected {} components", model.param_dim()),
            ));
        }
        model
            .check_theta(&self.theta0)
            .map_err(|e| Error::config("theta0", e.to_string()))?;
        for (key, v) in [("y0", &self.y0), ("z0", &self.z0)] {
            if let Some(v) = v {
                if v.len() != d {
                    return Err(Error::config(key, format!("expected {d} components")));
                }
            }
        }
        if !(self.fine_step > 0.0) {
            return Err(Error::config("fine_step", "must be positive"));
        }
        if self.k0 == 0 {
            return Err(Error::config("k0", "must be at least 1"));
        }
        if let Some(kappa) = self.kappa {
            let expected = self.k0 as f64 * self.fine_step;
            if (kappa - expected).abs() > 1e-12 * expected.max(1.0) {
                return Err(Error::config(
                    "kappa",
                    format!("{kappa} differs from k0 · fine_step = {expected}"),
                ));
            }
        }
        if self.n_obs == 0 || self.n_scheme == 0 {
            return Err(Error::config(
                "n_obs",
                "observation and scheme lengths must be positive",
            ));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::config("gamma", "must be positive"));
        }
        if self.decreasing && !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::config("rho", "must lie in (0, 1]"));
        }
        if !(self.noise_fine_step > 0.0) {
            return Err(Error::config("noise_fine_step", "must be positive"));
        }
        if self.dcf.nodes < 2 || self.dcf.mc_draws == 0 {
            return Err(Error::config("dcf", "need at least two nodes and one draw"));
        }
        if self.sgd.gamma0.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::config("sgd.gamma0", "step scales must be positive"));
        }
        if self.sgd.starts.iter().any(|s| s.len() != d) {
            return Err(Error::config("sgd.starts", format!("each start needs {d} components")));
        }
        Ok(())
    }

    pub fn sgd_starts(&self) -> Result<Vec<Vec<f64>>> {
        if !self.sgd.starts.is_empty() {
            return Ok(self.sgd.starts.clone());
        }
        let d = self.model.build()?.state_dim();
        let far = (0..d).map(|i| if i % 2 == 0 { 3.0 } else { -3.0 }).collect();
        Ok(vec![vec![0.0; d], far])
    }

    pub fn y0(&self) -> Result<Vec<f64>> {
        Ok(self
            .y0
            .clone()
            .unwrap_or_else(|| vec![0.0; self.model.build().map(|m| m.state_dim()).unwrap_or(1)]))
    }

    pub fn seeds(&self) -> Seeds {
        let observations = derive_seed(self.seed, streams::OBSERVATIONS);
        Seeds {
            master: self.seed,
            observations,
            scheme_noise: match self.coupling {
                Coupling::Independent => derive_seed(self.seed, streams::SCHEME_NOISE),
                Coupling::Debug => observations,
            },
            sgd_draws: derive_seed(self.seed, streams::SGD_DRAWS),
            dcf_draws: derive_seed(self.seed, streams::DCF_DRAWS),
        }
    }

    pub fn distance_settings(&self) -> DistanceSettings {
        DistanceSettings {
            dcf_nodes: self.dcf.nodes,
            dcf_mc_draws: self.dcf.mc_draws,
            dcf_seed: self.seeds().dcf_draws,
            ds: self.ds,
        }
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        if self.decreasing {
            StepSchedule::polynomial(self.gamma, self.rho)
        } else {
            StepSchedule::constant(self.gamma)
        }
    }

    pub fn observations(&self) -> Result<ObservationSet> {
        let model = self.model.build()?;
        synthesize_observations(
            &model,
            &self.theta0,
            &self.y0()?,
            self.hurst,
            self.fine_step,
            self.n_obs,
            self.k0,
            self.seeds().observations,
        )
    }

    pub fn contrast_config(&self) -> Result<ContrastConfig> {
        Ok(ContrastConfig {
            distance: self.distance,
            distance_settings: self.distance_settings(),
            model: self.model.clone(),
            hurst: self.hurst,
            schedule: self.schedule()?,
            n_scheme: self.n_scheme,
            z0: self.z0.clone(),
            grid: self.grid.clone(),
            noise_seed: self.seeds().scheme_noise,
            noise_source: NoiseSource::FineGrid {
                fine_step: self.noise_fine_step,
            },
        })
    }

    pub fn sgd_config(&self, gamma0: f64, z0: Vec<f64>) -> SgdConfig {
        SgdConfig {
            p: self.sgd.p,
            gamma0,
            minibatch: self.sgd.minibatch,
            n_iter: self.sgd.n_iter,
            theta_init: self.sgd.theta_init.clone(),
            hurst: self.hurst,
            scheme_step: self.gamma,
            n_scheme: self.n_scheme,
            z0: Some(z0),
            noise_seed: self.seeds().scheme_noise,
        }
    }

    pub fn rate_config(&self) -> Result<RateStudyConfig> {
        Ok(RateStudyConfig {
            model: self.model.clone(),
            theta0: self.theta0.clone(),
            hurst: self.hurst,
            n_values: self.rate.n_values.clone(),
            replications: self.rate.replications,
            distance: self.distance,
            distance_settings: self.distance_settings(),
            varsigma: self.rate.varsigma,
            grid: self.grid.clone(),
            fine_step: self.fine_step,
            subsample: self.k0,
            y0: self.y0()?,
            gamma_anchor: self.rate.gamma_anchor,
            n_scheme_anchor: self.rate.n_scheme_anchor,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub observations: u64,
    pub scheme_noise: u64,
    pub sgd_draws: u64,
    pub dcf_draws: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FbmTest,
    ContrastCurve,
    Estimate,
    Sgd,
    RateStudy,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FbmTest => "fbm-test",
            Command::ContrastCurve => "contrast-curve",
            Command::Estimate => "estimate",
            Command::Sgd => "sgd",
            Command::RateStudy => "rate-study",
        }
    }
}

/// `manifest.json`: enough to rerun a command bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub config: ExperimentConfig,
    pub version: String,
    pub seeds: Seeds,
    pub jobs: usize,
    pub started_unix: u64,
    pub status: String,
    #[serde(default)]
    pub wall_clock_secs: Option<f64>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub summary: Value,
}

pub const MANIFEST: &str = "manifest.json";

/// An output directory with its manifest.
pub struct Run {
    dir: PathBuf,
    manifest: RunManifest,
    start: Instant,
}

impl Run {
    pub fn begin(dir: &Path, command: Command, config: &ExperimentConfig, jobs: usize) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let manifest = RunManifest {
            command,
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: config.seeds(),
            jobs,
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            status: "running".into(),
            wall_clock_secs: None,
            outputs: Vec::new(),
            summary: Value::Null,
        };
        let run = Self {
            dir: dir.to_path_buf(),
            manifest,
            start: Instant::now(),
        };
        run.write_manifest()?;
        Ok(run)
    }

    fn write_manifest(&self) -> Result<()> {
        let tmp = self.dir.join(format!("{MANIFEST}.tmp"));
        serde_json::to_writer_pretty(BufWriter::new(File::create(&tmp)?), &self.manifest)?;
        fs::rename(tmp, self.dir.join(MANIFEST))?;
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Creates an output file and records it in the manifest.
    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.to_string());
        }
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    pub fn finish(mut self, status: &str, summary: Value) -> Result<RunManifest> {
        self.manifest.status = status.to_string();
        self.manifest.wall_clock_secs = Some(self.start.elapsed().as_secs_f64());
        self.manifest.summary = summary;
        self.write_manifest()?;
        Ok(self.manifest)
    }
}

/// Runs `command` in `out`, writing outputs and `manifest.json`. On failure
/// the manifest is finalized with the error before it is returned.
pub fn run_command(command: Command, config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<RunManifest> {
    let previous = read_manifest(out);
    let mut run = Run::begin(out, command, config, jobs)?;
    let result = match command {
        Command::FbmTest => cmd_fbm_test(&mut run, config),
        Command::ContrastCurve => cmd_contrast_curve(&mut run, config),
        Command::Estimate => cmd_estimate(&mut run, config),
        Command::Sgd => cmd_sgd(&mut run, config),
        Command::RateStudy => {
            let resumable = previous.is_some_and(|m| m.command == command && m.config == *config);
            cmd_rate_study(&mut run, config, resumable)
        }
    };
    match result {
        Ok(summary) => run.finish("ok", summary),
        Err(e) => {
            run.finish("failed", json!({ "error": e.to_string() }))?;
            Err(e)
        }
    }
}

pub fn read_manifest(dir: &Path) -> Option<RunManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Sample autocovariances of an fGn draw against the exact ones (`fbm_test.csv`).
pub fn cmd_fbm_test(run: &mut Run, config: &ExperimentConfig) -> Result<Value> {
    let t = &config.fbm_test;
    let fgn = sample_fgn(t.n, config.hurst, t.step, 1, config.seeds().observations)?;
    let rows = autocovariance_report(&fgn, t.max_lag);
    let mut out = run.create("fbm_test.csv")?;
    writeln!(out, "lag,empirical,theoretical,ratio,stderr")?;
    for r in &rows {
        let ratio = if r.theoretical != 0.0 {
            format!("{:.16e}", r.empirical / r.theoretical)
        } else {
            "NA".into()
        };
        writeln!(
            out,
            "{},{:.16e},{:.16e},{},{:.16e}",
            r.lag, r.empirical, r.theoretical, ratio, r.stderr
        )?;
    }
    out.flush()?;
    let worst = rows
        .iter()
        .map(|r| (r.empirical - r.theoretical).abs() / r.stderr)
        .fold(0.0, f64::max);
    Ok(json!({ "max_abs_z": worst }))
}

fn estimate(config: &ExperimentConfig) -> Result<EstimateResult> {
    let obs = config.observations()?;
    let cc = config.contrast_config()?;
    if config.decreasing {
        grid_estimate_decreasing(&obs, &cc)
    } else {
        grid_estimate(&obs, &cc)
    }
}

/// `F_d` over a one-dimensional grid (`contrast.csv`, sorted by `θ`).
pub fn cmd_contrast_curve(run: &mut Run, config: &ExperimentConfig) -> Result<Value> {
    if config.model.build()?.param_dim() != 1 {
        return Err(Error::config("model", "contrast curves need a scalar parameter"));
    }
    let mut result = estimate(config)?;
    let mut order: Vec<usize> = (0..result.grid.len()).collect();
    order.sort_by(|&a, &b| result.grid[a][0].total_cmp(&result.grid[b][0]));
    let theta_hat = result.theta_hat.clone();
    result.grid = order.iter().map(|&i| result.grid[i].clone()).collect();
    result.contrast_values = order.iter().map(|&i| result.contrast_values[i]).collect();
    result.argmin_index = order.iter().position(|&i| i == result.argmin_index).unwrap();
    let mut out = run.create("contrast.csv")?;
    result.write_csv(&mut out)?;
    out.flush()?;
    Ok(json!({ "theta_hat": theta_hat, "min_contrast": result.min_contrast() }))
}

/// Grid estimate as JSON (`estimate.json`); decreasing steps when configured.
pub fn cmd_estimate(run: &mut Run, config: &ExperimentConfig) -> Result<Value> {
    let result = estimate(config)?;
    let mut out = run.create("estimate.json")?;
    serde_json::to_writer_pretty(&mut out, &result)?;
    writeln!(out)?;
    out.flush()?;
    Ok(json!({ "theta_hat": result.theta_hat, "argmin_index": result.argmin_index }))
}

/// One SGD trace per (`γ0`, scheme start) pair: `sgd_g{i}_z{j}.csv`.
pub fn cmd_sgd(run: &mut Run, config: &ExperimentConfig) -> Result<Value> {
    let obs = config.observations()?;
    let model = config.model.build()?;
    let mut runs = Vec::new();
    for (j, z0) in config.sgd_starts()?.iter().enumerate() {
        for (i, &gamma0) in config.sgd.gamma0.iter().enumerate() {
            let sc = config.sgd_config(gamma0, z0.clone());
            let objective = SgdObjective::new(model.clone(), &obs, &sc)?;
            let result = sgd_run(&objective, &sc, config.seeds().sgd_draws)?;
            let name = format!("sgd_g{i}_z{j}.csv");
            let mut out = run.create(&name)?;
            result.write_csv(&mut out)?;
            out.flush()?;
            runs.push(json!({
                "file": name,
                "gamma0": gamma0,
                "z0": z0,
                "theta_hat": result.theta_hat,
                "in_box": result.trace.iter().all(|it| model.param_box.contains(&it.theta)),
            }));
        }
    }
    Ok(json!({ "runs": runs }))
}

pub const REPLICATIONS_FILE: &str = "replications.jsonl";

fn read_records(path: &Path) -> Vec<ReplicationRecord> {
    let Ok(file) = File::open(path) else {
        return Vec::new();
    };
    // a line cut short by an interrupted run is simply redone
    BufReader::new(file)
        .lines()
        .map_while(|l| l.ok())
        .filter_map(|l| serde_json::from_str(&l).ok())
        .collect()
}

/// Monte-Carlo rate table (`rate.csv`); finished replications are appended to
/// `replications.jsonl` and skipped when the same configuration is rerun.
pub fn cmd_rate_study(run: &mut Run, config: &ExperimentConfig, resumable: bool) -> Result<Value> {
    let rc = config.rate_config()?;
    let log_path = run.path(REPLICATIONS_FILE);
    let done = if resumable { read_records(&log_path) } else { Vec::new() };
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&log_path)?;
    for r in &done {
        writeln!(log, "{}", serde_json::to_string(r)?)?;
    }
    log.flush()?;
    let log = Mutex::new(log);
    run.create(REPLICATIONS_FILE)?;
    let write_err = Mutex::new(None);
    let (table, records) = rate_study_resume(&rc, &done, |rec| {
        let mut f = log.lock().unwrap();
        let line = serde_json::to_string(rec).expect("records serialize");
        if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
            *write_err.lock().unwrap() = Some(e);
        }
    })?;
    if let Some(e) = write_err.into_inner().unwrap() {
        return Err(e.into());
    }
    let mut out = run.create("rate.csv")?;
    table.write_csv(&mut out)?;
    out.flush()?;
    let mut out = run.create("rate.json")?;
    serde_json::to_writer_pretty(&mut out, &table)?;
    out.flush()?;
    Ok(json!({
        "slope": table.slope,
        "resumed": done.len(),
        "replications": records.len(),
        "varsigma_known": table.varsigma_known,
    }))
}
