//! Reproducible runs: JSON configs, per-seed evaluation and training, CSV
//! artifacts with a manifest, summaries across seeds and comparisons.
//!
//! Output layout under the configured directory:
//!
//! ```text
//! manifest.json            config hash, scenario hash, seeds
//! summary.csv              one row per seed, then mean and std rows
//! seed_<s>/manifest.json   config hash and this seed
//! seed_<s>/metrics.csv     one row per decision interval of the evaluation
//! seed_<s>/episodes.csv    training only: one row per episode and intersection
//! seed_<s>/alpha.csv       TinyLight only: every α value after each search episode
//! seed_<s>/checkpoint/     trained networks as JSON
//! ```
//!
//! Every file is a function of (config, seed) alone, so reruns are
//! byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{
    evaluate, feature_ids, record_states, train_ecolight, train_tinylight, train_tlrp, AgentError,
    Controller, EpisodeRecord, FixedTime, HyperParams, MaxPressure, Mlp, ObsKind, Sotl, SotlParams,
    State,
};
use crate::codegen::{
    emit_c, emit_test_vectors, quantize_q15, CodegenError, CodegenOptions, Footprint, InputSource,
    Precision, Reference, MIN_CALIBRATION_STATES,
};
use crate::features::FeatureConfig;
use crate::sim::{load_scenario, IntersectionId, Scenario, SimError};
use crate::supergraph::{SubGraph, SubGraphManifest};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("{0}")]
    Mode(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| ExperimentError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_file(path, text + "\n")
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn fixed_time_cycle() -> u32 {
    FixedTime::default().cycle_s
}

/// The controller a run evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentSpec {
    FixedTime {
        #[serde(default = "fixed_time_cycle")]
        cycle_s: u32,
    },
    MaxPressure,
    Sotl {
        #[serde(default)]
        params: SotlParams,
    },
    #[serde(rename = "tinylight")]
    TinyLight,
    /// TinyLight with a uniformly drawn path instead of the searched one.
    Tlrp,
    #[serde(rename = "ecolight")]
    EcoLight,
}

impl AgentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AgentSpec::FixedTime { .. } => "FixedTime",
            AgentSpec::MaxPressure => "MaxPressure",
            AgentSpec::Sotl { .. } => "SOTL",
            AgentSpec::TinyLight => "TinyLight",
            AgentSpec::Tlrp => "TLRP",
            AgentSpec::EcoLight => "EcoLight",
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(
            self,
            AgentSpec::TinyLight | AgentSpec::Tlrp | AgentSpec::EcoLight
        )
    }
}

fn default_horizon() -> u32 {
    3600
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Scenario JSON, relative to the config file.
    pub scenario: PathBuf,
    pub agent: AgentSpec,
    #[serde(default)]
    pub hyperparams: HyperParams,
    #[serde(default)]
    pub features: FeatureConfig,
    pub seeds: Vec<u64>,
    /// Simulated seconds of each evaluation run.
    #[serde(default = "default_horizon")]
    pub horizon_s: u32,
    /// Spawn-time noise bound of the evaluation demand; 0 evaluates the
    /// scenario as written.
    #[serde(default)]
    pub eval_jitter_s: u32,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(scenario: impl Into<PathBuf>, agent: AgentSpec, seeds: Vec<u64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.into(),
            agent,
            hyperparams: HyperParams::default(),
            features: FeatureConfig::default(),
            seeds,
            horizon_s: default_horizon(),
            eval_jitter_s: 0,
            out_dir: default_out(),
        }
    }

    /// Every violated constraint; paths are resolved against `base`.
    pub fn violations(&self, base: &Path) -> Vec<String> {
        let mut v = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            v.push(format!(
                "schema_version must be {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        let scenario = base.join(&self.scenario);
        if !scenario.is_file() {
            v.push(format!("scenario {} does not exist", scenario.display()));
        }
        if self.seeds.is_empty() {
            v.push("seeds must not be empty".to_string());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            v.push("seeds must be distinct".to_string());
        }
        if self.horizon_s == 0 {
            v.push("horizon_s must be positive".to_string());
        }
        if let AgentSpec::FixedTime { cycle_s: 0 } = self.agent {
            v.push("agent.cycle_s must be positive".to_string());
        }
        if self.features.segments == 0 || self.features.image_cells == 0 {
            v.push("features.segments and features.image_cells must be positive".to_string());
        }
        v.extend(
            self.hyperparams
                .violations()
                .into_iter()
                .map(|m| format!("hyperparams: {m}")),
        );
        v
    }

    pub fn validate(&self, base: &Path) -> Result<(), ExperimentError> {
        let v = self.violations(base);
        if v.is_empty() {
            Ok(())
        } else {
            Err(ExperimentError::Invalid(v))
        }
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// A config file with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validate(&base)?;
        Ok(Self { config, base })
    }

    pub fn scenario_path(&self) -> PathBuf {
        self.base.join(&self.config.scenario)
    }

    pub fn scenario(&self) -> Result<Scenario, ExperimentError> {
        Ok(load_scenario(self.scenario_path())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub avg_travel_time: Option<f64>,
    pub throughput: f64,
}

/// Mean, and sample standard deviation when at least two values exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len();
        let mean = (n > 0).then(|| v.iter().sum::<f64>() / n as f64);
        let std = mean
            .filter(|_| n >= 2)
            .map(|m| (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Self { mean, std, n }
    }

    /// `mean ± std`, `mean` alone, or `n/a`.
    pub fn display(&self, decimals: usize) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{m:.decimals$} ± {s:.decimals$}"),
            (Some(m), None) => format!("{m:.decimals$}"),
            _ => "n/a".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub seeds: Vec<SeedResult>,
    /// Over seeds where at least one vehicle finished.
    pub travel_time: Stat,
    pub throughput: Stat,
}

impl RunSummary {
    pub fn new(model: &str, seeds: Vec<SeedResult>) -> Self {
        Self {
            model: model.to_string(),
            travel_time: Stat::of(seeds.iter().filter_map(|s| s.avg_travel_time)),
            throughput: Stat::of(seeds.iter().map(|s| s.throughput)),
            seeds,
        }
    }

    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["seed", "avg_travel_time", "throughput"])?;
        for s in &self.seeds {
            w.write_record([
                s.seed.to_string(),
                opt(s.avg_travel_time),
                s.throughput.to_string(),
            ])?;
        }
        w.write_record([
            "mean".into(),
            opt(self.travel_time.mean),
            opt(self.throughput.mean),
        ])?;
        w.write_record([
            "std".into(),
            opt(self.travel_time.std),
            opt(self.throughput.std),
        ])?;
        finish(w)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ExperimentError> {
    let bytes = w
        .into_inner()
        .map_err(|e| ExperimentError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// One row per decision interval: phases, rewards, cumulative throughput.
pub fn metrics_csv(record: &EpisodeRecord) -> Result<String, ExperimentError> {
    let n = record.rows.first().map_or(0, |r| r.phases.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("phase_{i}")));
    header.extend((0..n).map(|i| format!("reward_{i}")));
    header.push("cumulative_throughput".into());
    w.write_record(&header)?;
    for r in &record.rows {
        let mut row = vec![r.t.to_string()];
        row.extend(r.phases.iter().map(usize::to_string));
        row.extend(r.rewards.iter().map(f64::to_string));
        row.push(r.cumulative_finished.to_string());
        w.write_record(&row)?;
    }
    finish(w)
}

fn rows_csv<T: Serialize>(rows: &[T]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    finish(w)
}

/// A trained sub-graph for one intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGraphCheckpoint {
    pub model: String,
    pub intersection: usize,
    pub features: FeatureConfig,
    pub subgraph: SubGraph,
    pub manifest: Option<SubGraphManifest>,
}

#[derive(Serialize)]
struct SeedManifest<'a> {
    config_hash: &'a str,
    seed: u64,
    model: &'a str,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    schema_version: u32,
    config_hash: &'a str,
    scenario_sha256: String,
    model: &'a str,
    seeds: &'a [u64],
    config: &'a ExperimentConfig,
}

/// Which subcommand is running, so an agent kind is only accepted where it fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Rule-based controllers only.
    Simulate,
    /// Learned controllers only.
    Train,
    /// Either.
    Any,
}

fn evaluation_scenario(cfg: &ExperimentConfig, scenario: &Scenario, seed: u64) -> Scenario {
    if cfg.eval_jitter_s == 0 {
        scenario.clone()
    } else {
        scenario.jittered(seed ^ 0xE7A1_0000, cfg.eval_jitter_s)
    }
}

fn checkpoints(
    dir: &Path,
    model: &str,
    cfg: &ExperimentConfig,
    subs: &[SubGraph],
    manifests: Option<&[SubGraphManifest]>,
) -> Result<(), ExperimentError> {
    for (i, sub) in subs.iter().enumerate() {
        let ck = SubGraphCheckpoint {
            model: model.to_string(),
            intersection: i,
            features: cfg.features,
            subgraph: sub.clone(),
            manifest: manifests.map(|m| m[i].clone()),
        };
        write_json(&dir.join(format!("intersection_{i}.json")), &ck)?;
    }
    Ok(())
}

/// Trains (if needed) and evaluates one seed, writing its artifacts to `dir`.
pub fn run_seed(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    seed: u64,
    dir: &Path,
) -> Result<SeedResult, ExperimentError> {
    let hp = &cfg.hyperparams;
    let interval = hp.decision_interval_s;
    let ck = dir.join("checkpoint");
    let mut controller: Box<dyn Controller> = match &cfg.agent {
        AgentSpec::FixedTime { cycle_s } => Box::new(FixedTime { cycle_s: *cycle_s }),
        AgentSpec::MaxPressure => Box::new(MaxPressure),
        AgentSpec::Sotl { params } => Box::new(Sotl::new(*params)),
        AgentSpec::TinyLight => {
            let t = train_tinylight(scenario, hp, &cfg.features, seed)?;
            write_file(&dir.join("episodes.csv"), rows_csv(&t.logs)?)?;
            write_file(&dir.join("alpha.csv"), rows_csv(&t.alpha_log)?)?;
            checkpoints(&ck, "TinyLight", cfg, &t.subgraphs, Some(&t.manifests))?;
            Box::new(t.controller(cfg.features))
        }
        AgentSpec::Tlrp => {
            let (c, logs) = train_tlrp(scenario, hp, &cfg.features, seed)?;
            write_file(&dir.join("episodes.csv"), rows_csv(&logs)?)?;
            checkpoints(&ck, "TLRP", cfg, &c.nets, None)?;
            Box::new(c)
        }
        AgentSpec::EcoLight => {
            let (c, logs) = train_ecolight(scenario, hp, &cfg.features, seed)?;
            write_file(&dir.join("episodes.csv"), rows_csv(&logs)?)?;
            for (i, net) in c.nets.iter().enumerate() {
                write_json::<Mlp>(&ck.join(format!("ecolight_{i}.json")), net)?;
            }
            Box::new(c)
        }
    };
    let eval = evaluation_scenario(cfg, scenario, seed);
    let record = evaluate(&eval, controller.as_mut(), cfg.horizon_s, interval)?;
    write_file(&dir.join("metrics.csv"), metrics_csv(&record)?)?;
    write_json(
        &dir.join("manifest.json"),
        &SeedManifest {
            config_hash: &cfg.hash(),
            seed,
            model: cfg.agent.name(),
        },
    )?;
    Ok(SeedResult {
        seed,
        avg_travel_time: record.summary.avg_travel_time,
        throughput: record.summary.throughput,
    })
}

/// Runs every seed of `loaded` in order and writes the run-level files.
pub fn run(
    loaded: &LoadedConfig,
    mode: Mode,
    out: Option<&Path>,
) -> Result<RunSummary, ExperimentError> {
    let cfg = &loaded.config;
    match (mode, cfg.agent.is_learned()) {
        (Mode::Simulate, true) => {
            return Err(ExperimentError::Mode(format!(
                "{} must be trained; use `train`",
                cfg.agent.name()
            )))
        }
        (Mode::Train, false) => {
            return Err(ExperimentError::Mode(format!(
                "{} has nothing to train; use `simulate`",
                cfg.agent.name()
            )))
        }
        _ => {}
    }
    let out = out.map_or_else(|| loaded.base.join(&cfg.out_dir), Path::to_path_buf);
    let scenario_path = loaded.scenario_path();
    let scenario_bytes = std::fs::read(&scenario_path).map_err(io_err(&scenario_path))?;
    let scenario = Scenario::from_json(
        std::str::from_utf8(&scenario_bytes).map_err(|e| SimError::Validation(e.to_string()))?,
    )?;
    let hash = cfg.hash();
    write_json(
        &out.join("manifest.json"),
        &RunManifest {
            schema_version: SCHEMA_VERSION,
            config_hash: &hash,
            scenario_sha256: hex::encode(Sha256::digest(&scenario_bytes)),
            model: cfg.agent.name(),
            seeds: &cfg.seeds,
            config: cfg,
        },
    )?;
    let mut results = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        log::info!("{}: seed {seed}", cfg.agent.name());
        results.push(run_seed(
            cfg,
            &scenario,
            seed,
            &out.join(format!("seed_{seed}")),
        )?);
    }
    let summary = RunSummary::new(cfg.agent.name(), results);
    write_file(&out.join("summary.csv"), summary.to_csv()?)?;
    Ok(summary)
}

/// Model × {travel time, throughput}, with mean and std columns.
pub fn comparison_csv(summaries: &[RunSummary]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model",
        "travel_time_mean",
        "travel_time_std",
        "throughput_mean",
        "throughput_std",
        "seeds",
    ])?;
    for s in summaries {
        w.write_record([
            s.model.clone(),
            opt(s.travel_time.mean),
            opt(s.travel_time.std),
            opt(s.throughput.mean),
            opt(s.throughput.std),
            s.seeds.len().to_string(),
        ])?;
    }
    finish(w)
}

/// Human-readable version of [`comparison_csv`].
pub fn comparison_table(summaries: &[RunSummary]) -> String {
    let mut out = format!(
        "{:<12} {:>22} {:>22}\n",
        "model", "travel time (s)", "throughput (veh/min)"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<12} {:>22} {:>22}",
            s.model,
            s.travel_time.display(2),
            s.throughput.display(2)
        );
    }
    out
}

/// Runs each config into `out/<index>_<model>` and writes `out/compare.csv`.
pub fn compare(configs: &[LoadedConfig], out: &Path) -> Result<Vec<RunSummary>, ExperimentError> {
    let summaries = configs
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let dir = out.join(format!("{k}_{}", c.config.agent.name()));
            run(c, Mode::Any, Some(&dir))
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_file(&out.join("compare.csv"), comparison_csv(&summaries)?)?;
    Ok(summaries)
}

/// What `codegen` wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodegenRecord {
    pub options: CodegenOptions,
    pub footprint: Footprint,
    pub seed: u64,
    pub vectors: usize,
    pub calibration_states: usize,
    pub source: String,
    pub vector_file: String,
}

/// Observations of the checkpoint's intersection while MaxPressure drives
/// `scenario` under demand jittered by `seed`.
pub fn recorded_states(
    ck: &SubGraphCheckpoint,
    scenario: &Scenario,
    horizon_s: u32,
    interval_s: u32,
    seed: u64,
) -> Result<Vec<State>, ExperimentError> {
    let kind = ObsKind::Features(feature_ids(&ck.subgraph.inputs));
    Ok(record_states(
        &scenario.jittered(seed, 60),
        &mut MaxPressure,
        horizon_s,
        interval_s,
        IntersectionId(ck.intersection),
        &kind,
        &ck.features,
    )?)
}

/// Writes `model.c`, `vectors.txt` and `codegen.json` for a checkpoint.
///
/// With a scenario, calibration and vector inputs come from two separate
/// recorded runs; without one, vectors are uniform over each input's
/// normalization range and q15 is unavailable.
pub fn export_c(
    ck: &SubGraphCheckpoint,
    scenario: Option<(&Scenario, u32, u32)>,
    opts: &CodegenOptions,
    seed: u64,
    out: &Path,
) -> Result<CodegenRecord, ExperimentError> {
    let sub = &ck.subgraph;
    let (calibration, held_out) = match scenario {
        Some((sc, horizon, interval)) => {
            // Long enough to reach the calibration floor even for short runs.
            let horizon = horizon.max(interval * MIN_CALIBRATION_STATES as u32);
            (
                recorded_states(ck, sc, horizon, interval, seed.wrapping_mul(2))?,
                recorded_states(ck, sc, horizon, interval, seed.wrapping_mul(2) + 1)?,
            )
        }
        None => (Vec::new(), Vec::new()),
    };
    let ranges: Vec<(f64, f64)> = sub
        .input_dims
        .iter()
        .zip(&sub.input_scale)
        .flat_map(|(&d, &s)| std::iter::repeat_n((0.0, 1.0 / s), d))
        .collect();
    let source = if held_out.is_empty() {
        InputSource::Uniform(&ranges)
    } else {
        InputSource::Recorded(&held_out)
    };
    let (generated, vectors) = match opts.precision {
        Precision::Float32 => (
            emit_c(sub, opts, None)?,
            emit_test_vectors(Reference::Float(sub), opts.test_vector_count, seed, source)?,
        ),
        Precision::Q15 => {
            let model = quantize_q15(sub, &calibration)?;
            (
                emit_c(sub, opts, Some(&model))?,
                emit_test_vectors(Reference::Q15(&model), opts.test_vector_count, seed, source)?,
            )
        }
    };
    let source_path = out.join("model.c");
    let vector_path = out.join("vectors.txt");
    write_file(&source_path, &generated.source)?;
    write_file(&vector_path, vectors.to_text())?;
    let record = CodegenRecord {
        options: opts.clone(),
        footprint: generated.footprint,
        seed,
        vectors: vectors.vectors.len(),
        calibration_states: calibration.len(),
        source: source_path.display().to_string(),
        vector_file: vector_path.display().to_string(),
    };
    write_json(&out.join("codegen.json"), &record)?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_needs_two_values() {
        let one = Stat::of([3.0]);
        assert_eq!((one.mean, one.std), (Some(3.0), None));
        let two = Stat::of([1.0, 3.0]);
        assert_eq!(two.mean, Some(2.0));
        assert!((two.std.unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(Stat::of([]).mean, None);
        assert_eq!(two.display(1), "2.0 ± 1.4");
    }

    #[test]
    fn config_parses_with_defaults_and_rejects_unknown_keys() {
        let text = r#"{"schema_version": 1, "scenario": "s.json", "agent": {"kind": "fixed_time"}, "seeds": [0]}"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.agent, AgentSpec::FixedTime { cycle_s: 30 });
        assert_eq!(cfg.horizon_s, 3600);
        let typo = text.replace("\"seeds\"", "\"seed\": 1, \"seeds\"");
        assert!(serde_json::from_str::<ExperimentConfig>(&typo).is_err());
        let bad_agent = text.replace("fixed_time\"", "fixed_time\", \"cycle\": 5");
        assert!(serde_json::from_str::<ExperimentConfig>(&bad_agent).is_err());
    }

    #[test]
    fn violations_are_all_listed() {
        let mut cfg =
            ExperimentConfig::new("missing.json", AgentSpec::FixedTime { cycle_s: 0 }, vec![]);
        cfg.schema_version = 7;
        cfg.hyperparams.gamma = 2.0;
        let v = cfg.violations(Path::new("/nonexistent"));
        assert_eq!(v.len(), 5, "{v:?}");
        let msg = ExperimentError::Invalid(v).to_string();
        assert!(msg.contains("schema_version") && msg.contains("gamma"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::new("s.json", AgentSpec::MaxPressure, vec![0]);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seeds.push(1);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
