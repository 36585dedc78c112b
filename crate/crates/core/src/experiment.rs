//! Experiment configs and the runs behind the command-line tool.
//!
//! Every run writes its artifacts under an output directory with fixed file
//! names plus a `manifest.json` holding the resolved config, the seed and the
//! SHA-256 of every artifact. [`rerun`] replays a manifest and compares hashes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelConfig;
use crate::data_io::{
    dataset_shape, load_dataset, preprocess_events, read_events_csv, save_dataset, split_dataset,
    LabeledExample, PreprocessConfig,
};
use crate::error::{Error, Result};
use crate::eval::{
    write_accuracy_vs_iteration, write_accuracy_vs_snr, write_accuracy_vs_timestep,
    write_mismatch_matrix, MismatchMatrix, SnrPoint,
};
use crate::filters::FilterConfig;
use crate::glm::{ModelSnapshot, SnnModel};
use crate::sampler::derive_seed;
use crate::synthetic::{generate_synthetic_dataset, SyntheticSpec};
use crate::trainer::run::{
    final_evaluation, streams, train, Estimator, MetricsRecord, TrainConfig,
};
use crate::trainer::{Architecture, Hyperparams, JsccSystem};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVAL_FILE: &str = "eval.json";
pub const ITERATION_CSV: &str = "accuracy_vs_iteration.csv";
pub const TIMESTEP_CSV: &str = "accuracy_vs_timestep.csv";
pub const SNR_CSV: &str = "accuracy_vs_snr.csv";
pub const MISMATCH_CSV: &str = "mismatch_matrix.csv";

const FORMAT_VERSION: u32 = 1;

/// Where examples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    /// JSONL dataset; split by `train_fraction` unless `test_path` is given.
    File {
        path: PathBuf,
        #[serde(default)]
        test_path: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// Source signals `d_u`.
    pub inputs: usize,
    /// `r = d_x / d_u`.
    pub rate: f64,
    #[serde(default)]
    pub encoder_hidden: usize,
    /// Defaults to `d_x`.
    #[serde(default)]
    pub decoder_hidden: Option<usize>,
    /// `d_v`, one per class.
    pub outputs: usize,
    /// Send the source uncoded; requires `rate = 1`.
    #[serde(default)]
    pub uncoded: bool,
}

impl TopologyConfig {
    pub fn channel_dim(&self) -> usize {
        (self.rate * self.inputs as f64).round() as usize
    }

    pub fn architecture(&self) -> Architecture {
        let d_x = self.channel_dim();
        Architecture {
            inputs: self.inputs,
            channel_dim: d_x,
            encoder_hidden: self.encoder_hidden,
            decoder_hidden: self.decoder_hidden.unwrap_or(d_x),
            outputs: self.outputs,
            uncoded: self.uncoded,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 {
            return Err(Error::config("topology.inputs", "must be >= 1"));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::config(
                "topology.rate",
                format!("must be > 0, got {}", self.rate),
            ));
        }
        if self.channel_dim() == 0 {
            return Err(Error::config(
                "topology.rate",
                format!(
                    "round(rate * inputs) = 0 for rate {} and {} inputs",
                    self.rate, self.inputs
                ),
            ));
        }
        if self.uncoded && self.rate != 1.0 {
            return Err(Error::config(
                "topology.rate",
                format!("uncoded transmission fixes rate 1, got {}", self.rate),
            ));
        }
        if self.outputs == 0 {
            return Err(Error::config("topology.outputs", "must be >= 1"));
        }
        Ok(())
    }
}

fn default_train_fraction() -> f64 {
    0.8
}
fn default_eval_every() -> usize {
    100
}
fn default_one() -> usize {
    1
}
fn default_target_rate() -> f64 {
    1.0
}
fn default_init_scale() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub filters: FilterConfig,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub estimator: Estimator,
    pub iterations: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Inference repetitions per test example (majority vote).
    #[serde(default = "default_one")]
    pub votes: usize,
    #[serde(default = "default_target_rate")]
    pub target_rate: f64,
    /// Silent steps before the target train of the true class starts.
    #[serde(default)]
    pub target_delay: usize,
    /// Initial weights are `N(0, init_scale^2 / (|P_i| K))`.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub seed: u64,
    /// Default artifact directory when none is given on the command line.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.hyperparams.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie in (0, 1)"));
        }
        if self.votes == 0 {
            return Err(Error::config("votes", "must be >= 1"));
        }
        if !(self.target_rate > 0.0 && self.target_rate <= 1.0) {
            return Err(Error::config("target_rate", "must lie in (0, 1]"));
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            if self.target_delay >= spec.num_steps {
                return Err(Error::config(
                    "target_delay",
                    "must be smaller than the number of steps",
                ));
            }
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::config("init_scale", "must be finite and >= 0"));
        }
        self.filters
            .build()
            .map_err(|e| Error::config("filters", e.to_string()))?;
        if let Some(snr) = self.channel.snr_db() {
            if !snr.is_finite() {
                return Err(Error::config("channel.snr_db", "must be finite"));
            }
        }
        match &self.dataset {
            DatasetSource::Synthetic(spec) => {
                spec.validate()?;
                if spec.num_signals != self.topology.inputs {
                    return Err(Error::config(
                        "dataset.num_signals",
                        format!(
                            "{} signals but topology.inputs = {}",
                            spec.num_signals, self.topology.inputs
                        ),
                    ));
                }
                if spec.num_classes > self.topology.outputs {
                    return Err(Error::config(
                        "topology.outputs",
                        "fewer outputs than classes",
                    ));
                }
            }
            DatasetSource::File { path, test_path } => {
                for (field, p) in [
                    ("dataset.path", Some(path)),
                    ("dataset.test_path", test_path.as_ref()),
                ] {
                    if let Some(p) = p {
                        if !p.exists() {
                            return Err(Error::config(
                                field,
                                format!("{} does not exist", p.display()),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let arch = self.topology.architecture();
        TrainConfig {
            iterations: self.iterations,
            eval_every: self.eval_every,
            hyperparams: self.hyperparams.clone(),
            estimator: self.estimator,
            channel: self.channel.clone(),
            seed: self.seed,
            votes: self.votes,
            target_rate: self.target_rate,
            target_delay: self.target_delay,
            rate: if arch.uncoded {
                1.0
            } else {
                self.topology.rate
            },
        }
    }

    /// Freshly initialised system for this config's seed.
    pub fn init_system(&self) -> Result<JsccSystem> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, streams::INIT, 0));
        JsccSystem::new(
            &self.topology.architecture(),
            &self.filters,
            self.init_scale,
            &mut rng,
        )
    }

    /// Training and test examples, checked against the topology.
    pub fn load_data(&self) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>)> {
        let (train, test) = match &self.dataset {
            DatasetSource::Synthetic(spec) => {
                let data = generate_synthetic_dataset(spec)?;
                split_dataset(
                    &data,
                    self.train_fraction,
                    derive_seed(self.seed, streams::SPLIT, 0),
                )?
            }
            DatasetSource::File {
                path,
                test_path: None,
            } => split_dataset(
                &load_dataset(path)?,
                self.train_fraction,
                derive_seed(self.seed, streams::SPLIT, 0),
            )?,
            DatasetSource::File {
                path,
                test_path: Some(test),
            } => (load_dataset(path)?, load_dataset(test)?),
        };
        for (name, part) in [("training", &train), ("test", &test)] {
            if part.is_empty() {
                return Err(Error::config("dataset", format!("{name} set is empty")));
            }
            if let Some((d, _)) = dataset_shape(part)? {
                if d != self.topology.inputs {
                    return Err(Error::config(
                        "topology.inputs",
                        format!(
                            "{name} examples have {d} signals, topology expects {}",
                            self.topology.inputs
                        ),
                    ));
                }
            }
            if let Some(ex) = part.iter().find(|e| e.label >= self.topology.outputs) {
                return Err(Error::config(
                    "topology.outputs",
                    format!(
                        "label {} needs more than {} outputs",
                        ex.label, self.topology.outputs
                    ),
                ));
            }
        }
        Ok((train, test))
    }
}

/// Stored encoder and decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub encoder: Option<ModelSnapshot>,
    pub decoder: ModelSnapshot,
}

impl Checkpoint {
    pub fn from_system(system: &JsccSystem) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            encoder: system.encoder.as_ref().map(SnnModel::snapshot),
            decoder: system.decoder.snapshot(),
        }
    }

    pub fn to_system(&self) -> Result<JsccSystem> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Parameter(format!(
                "unsupported checkpoint format version {}",
                self.format_version
            )));
        }
        let encoder = self
            .encoder
            .as_ref()
            .map(SnnModel::from_snapshot)
            .transpose()?;
        JsccSystem::from_parts(encoder, SnnModel::from_snapshot(&self.decoder)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// The operation a manifest records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Train,
    Eval {
        checkpoint: PathBuf,
        /// `Some(None)` tests on the noiseless channel.
        test_snr: Option<Option<f64>>,
        horizon: Option<usize>,
    },
    Sweep {
        snr_list: Vec<Option<f64>>,
        mode: SweepMode,
        /// Test SNRs of a mismatch sweep; defaults to `snr_list`.
        test_snr_list: Option<Vec<Option<f64>>>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    PerSnr,
    Mismatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub command: Command,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// SHA-256 of each artifact, keyed by path relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_manifest(
    dir: &Path,
    command: Command,
    config: &ExperimentConfig,
    files: &[&str],
) -> Result<()> {
    let artifacts = files
        .iter()
        .map(|f| Ok((f.to_string(), sha256_file(&dir.join(f))?)))
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        command,
        seed: config.seed,
        config: config.clone(),
        artifacts,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub records: Vec<MetricsRecord>,
    pub final_accuracy: f64,
    pub final_sigma2: Option<f64>,
    pub system: JsccSystem,
}

/// Trains without touching the filesystem (synthetic or preloaded data).
pub fn train_in_memory(
    config: &ExperimentConfig,
) -> Result<(TrainSummary, Vec<LabeledExample>, Vec<LabeledExample>)> {
    config.validate()?;
    let (train_set, test_set) = config.load_data()?;
    let outcome = train(
        config.init_system()?,
        &train_set,
        &test_set,
        &config.train_config(),
    )?;
    let summary = TrainSummary {
        final_accuracy: outcome.final_report.accuracy,
        final_sigma2: outcome.final_plan.sigma2(),
        records: outcome.records,
        system: outcome.system,
    };
    Ok((summary, train_set, test_set))
}

/// Trains and writes checkpoint, metrics, accuracy tables and manifest to `out`.
pub fn run_train(config: &ExperimentConfig, out: &Path) -> Result<TrainSummary> {
    let (summary, train_set, test_set) = train_in_memory(config)?;
    create_dir(out)?;
    write_json(
        &out.join(CHECKPOINT_FILE),
        &Checkpoint::from_system(&summary.system),
    )?;
    write_metrics(&out.join(METRICS_FILE), &summary.records)?;
    write_accuracy_vs_iteration(&out.join(ITERATION_CSV), &summary.records)?;
    let (_, report) = final_evaluation(
        &summary.system,
        &train_set,
        &test_set,
        &config.channel,
        config.seed,
        config.votes,
    )?;
    write_accuracy_vs_timestep(&out.join(TIMESTEP_CSV), &report.curve)?;
    write_manifest(
        out,
        Command::Train,
        config,
        &[CHECKPOINT_FILE, METRICS_FILE, ITERATION_CSV, TIMESTEP_CSV],
    )?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub horizon: usize,
    pub accuracy_at_horizon: f64,
    pub snr_db: Option<f64>,
    pub sigma2: Option<f64>,
    pub seed: u64,
    pub output_spikes: usize,
}

/// Evaluates a checkpoint on the config's test split, recalibrating the
/// channel with the stored parameters. `test_snr` overrides the channel SNR
/// (`Some(None)` for noiseless).
pub fn run_eval(
    config: &ExperimentConfig,
    checkpoint: &Path,
    test_snr: Option<Option<f64>>,
    horizon: Option<usize>,
    out: &Path,
) -> Result<EvalSummary> {
    config.validate()?;
    let system = Checkpoint::load(checkpoint)?.to_system()?;
    let expected = config.topology.architecture();
    let actual_channel = system.channel_dim();
    if system.source_dim() != expected.inputs
        || system.num_outputs() != expected.outputs
        || system.encoder.is_none() != expected.uncoded
        || (!expected.uncoded && actual_channel != expected.channel_dim)
    {
        return Err(Error::config(
            "topology",
            format!(
                "checkpoint has {} inputs, {} channel signals, {} outputs; config expects {}, {}, {}",
                system.source_dim(),
                actual_channel,
                system.num_outputs(),
                expected.inputs,
                if expected.uncoded { expected.inputs } else { expected.channel_dim },
                expected.outputs
            ),
        ));
    }
    let (train_set, test_set) = config.load_data()?;
    let channel = match test_snr {
        Some(snr) => config.channel.with_snr(snr),
        None => config.channel.clone(),
    };
    let (plan, report) = final_evaluation(
        &system,
        &train_set,
        &test_set,
        &channel,
        config.seed,
        config.votes,
    )?;
    let steps = report.curve.len();
    let h = horizon.unwrap_or(steps);
    if h == 0 || h > steps {
        return Err(Error::config(
            "horizon",
            format!("must lie in 1..={steps}, got {h}"),
        ));
    }
    let summary = EvalSummary {
        accuracy: report.accuracy,
        horizon: h,
        accuracy_at_horizon: report.curve[h - 1],
        snr_db: channel.snr_db(),
        sigma2: plan.sigma2(),
        seed: config.seed,
        output_spikes: report.output_spikes,
    };
    create_dir(out)?;
    write_accuracy_vs_timestep(&out.join(TIMESTEP_CSV), &report.curve)?;
    write_json(&out.join(EVAL_FILE), &summary)?;
    write_manifest(
        out,
        Command::Eval {
            checkpoint: checkpoint.to_path_buf(),
            test_snr,
            horizon,
        },
        config,
        &[TIMESTEP_CSV, EVAL_FILE],
    )?;
    Ok(summary)
}

/// Seed of the sweep point at `snr` (noiseless when `None`).
pub fn sweep_point_seed(seed: u64, snr: Option<f64>) -> u64 {
    derive_seed(seed, streams::SWEEP, snr.unwrap_or(f64::INFINITY).to_bits())
}

/// Config of one sweep point: channel at `snr`, seed from [`sweep_point_seed`].
pub fn sweep_point_config(config: &ExperimentConfig, snr: Option<f64>) -> ExperimentConfig {
    ExperimentConfig {
        channel: config.channel.with_snr(snr),
        seed: sweep_point_seed(config.seed, snr),
        ..config.clone()
    }
}

pub fn snr_dir_name(snr: Option<f64>) -> String {
    format!("snr_{}", crate::eval::format_snr(snr))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Parameter(e.to_string()))
}

/// Trains one model per SNR (in parallel up to `jobs`), each in its own
/// subdirectory, and writes `accuracy_vs_snr.csv`.
pub fn snr_sweep(
    config: &ExperimentConfig,
    snr_list: &[Option<f64>],
    jobs: usize,
    out: &Path,
) -> Result<Vec<SnrPoint>> {
    check_snr_list("snr_list", snr_list)?;
    config.validate()?;
    create_dir(out)?;
    let points = pool(jobs)?.install(|| {
        snr_list
            .par_iter()
            .map(|&snr| {
                let cfg = sweep_point_config(config, snr);
                let summary = run_train(&cfg, &out.join(snr_dir_name(snr)))?;
                Ok(SnrPoint {
                    snr_db: snr,
                    test_accuracy: summary.final_accuracy,
                    sigma2: summary.final_sigma2,
                    seed: cfg.seed,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_accuracy_vs_snr(&out.join(SNR_CSV), &points)?;
    write_manifest(
        out,
        Command::Sweep {
            snr_list: snr_list.to_vec(),
            mode: SweepMode::PerSnr,
            test_snr_list: None,
        },
        config,
        &[SNR_CSV],
    )?;
    Ok(points)
}

/// Trains one model per training SNR exactly as [`snr_sweep`] does and tests
/// each at every test SNR, recalibrating the channel with the trained
/// encoder. Diagonal entries equal the per-SNR sweep.
pub fn mismatch_matrix(
    config: &ExperimentConfig,
    train_snr: &[Option<f64>],
    test_snr: &[Option<f64>],
    jobs: usize,
    out: &Path,
) -> Result<MismatchMatrix> {
    check_snr_list("snr_list", train_snr)?;
    check_snr_list("test_snr_list", test_snr)?;
    config.validate()?;
    create_dir(out)?;
    let accuracy = pool(jobs)?.install(|| {
        train_snr
            .par_iter()
            .map(|&snr| {
                let cfg = sweep_point_config(config, snr);
                let dir = out.join(snr_dir_name(snr));
                run_train(&cfg, &dir)?;
                let system = Checkpoint::load(&dir.join(CHECKPOINT_FILE))?.to_system()?;
                let (train_set, test_set) = cfg.load_data()?;
                test_snr
                    .iter()
                    .map(|&t| {
                        let channel = cfg.channel.with_snr(t);
                        let (_, report) = final_evaluation(
                            &system, &train_set, &test_set, &channel, cfg.seed, cfg.votes,
                        )?;
                        Ok(report.accuracy)
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let matrix = MismatchMatrix {
        train_snr: train_snr.to_vec(),
        test_snr: test_snr.to_vec(),
        accuracy,
    };
    write_mismatch_matrix(&out.join(MISMATCH_CSV), &matrix)?;
    write_manifest(
        out,
        Command::Sweep {
            snr_list: train_snr.to_vec(),
            mode: SweepMode::Mismatch,
            test_snr_list: Some(test_snr.to_vec()),
        },
        config,
        &[MISMATCH_CSV],
    )?;
    Ok(matrix)
}

fn check_snr_list(field: &str, list: &[Option<f64>]) -> Result<()> {
    if list.is_empty() {
        return Err(Error::config(field, "SNR list is empty"));
    }
    if list.iter().flatten().any(|s| !s.is_finite()) {
        return Err(Error::config(field, "SNR values must be finite or 'inf'"));
    }
    Ok(())
}

/// Parses `-6,-3,0,inf`; `inf` selects the noiseless channel.
pub fn parse_snr_list(text: &str) -> Result<Vec<Option<f64>>> {
    let list = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "inf" | "+inf" | "noiseless" => Ok(None),
            _ => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| {
                    Error::config("snr_list", format!("'{s}' is not a number or 'inf'"))
                }),
        })
        .collect::<Result<Vec<_>>>()?;
    check_snr_list("snr_list", &list)?;
    Ok(list)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RerunReport {
    /// `(artifact, hash matches the manifest)`.
    pub artifacts: Vec<(String, bool)>,
}

impl RerunReport {
    pub fn all_match(&self) -> bool {
        self.artifacts.iter().all(|(_, ok)| *ok)
    }
}

/// Replays the run recorded in `manifest_path` into `out` and compares the
/// new artifacts against the recorded hashes.
pub fn rerun(manifest_path: &Path, out: &Path, jobs: usize) -> Result<RerunReport> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::config("manifest", e.to_string()))?;
    let cfg = &manifest.config;
    match &manifest.command {
        Command::Train => {
            run_train(cfg, out)?;
        }
        Command::Eval {
            checkpoint,
            test_snr,
            horizon,
        } => {
            run_eval(cfg, checkpoint, *test_snr, *horizon, out)?;
        }
        Command::Sweep {
            snr_list,
            mode: SweepMode::PerSnr,
            ..
        } => {
            snr_sweep(cfg, snr_list, jobs, out)?;
        }
        Command::Sweep {
            snr_list,
            mode: SweepMode::Mismatch,
            test_snr_list,
        } => {
            mismatch_matrix(
                cfg,
                snr_list,
                test_snr_list.as_deref().unwrap_or(snr_list),
                jobs,
                out,
            )?;
        }
    }
    let artifacts = manifest
        .artifacts
        .iter()
        .map(|(name, hash)| Ok((name.clone(), sha256_file(&out.join(name))? == *hash)))
        .collect::<Result<_>>()?;
    Ok(RerunReport { artifacts })
}

/// Source of a generated dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GenDataConfig {
    Synthetic(SyntheticSpec),
    /// One CSV event file per example.
    Events {
        files: Vec<EventFile>,
        preprocess: PreprocessConfig,
        /// Keep only these labels, renumbered `0..` in the given order.
        #[serde(default)]
        classes: Option<Vec<usize>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventFile {
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenDataSummary {
    pub examples: usize,
    /// Event files with no retained event.
    pub empty: Vec<PathBuf>,
}

/// Builds a dataset and writes it as JSONL. `seed` overrides a synthetic
/// spec's seed.
pub fn gen_data(config: &GenDataConfig, seed: Option<u64>, out: &Path) -> Result<GenDataSummary> {
    let (data, empty) = match config {
        GenDataConfig::Synthetic(spec) => {
            let spec = SyntheticSpec {
                seed: seed.unwrap_or(spec.seed),
                ..spec.clone()
            };
            (generate_synthetic_dataset(&spec)?, Vec::new())
        }
        GenDataConfig::Events {
            files,
            preprocess,
            classes,
        } => {
            preprocess.validate()?;
            let mut data = Vec::new();
            let mut empty = Vec::new();
            for f in files {
                let label = match classes {
                    None => f.label,
                    Some(keep) => match keep.iter().position(|&c| c == f.label) {
                        Some(i) => i,
                        None => continue,
                    },
                };
                let events = read_events_csv(&f.path)?;
                let pre = preprocess_events(&events, preprocess)?;
                if pre.empty {
                    empty.push(f.path.clone());
                }
                data.push(LabeledExample {
                    label,
                    spikes: pre.spikes,
                });
            }
            (data, empty)
        }
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_dataset(out, &data)?;
    Ok(GenDataSummary {
        examples: data.len(),
        empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_json() -> &'static str {
        r#"{
            "dataset": {"type": "synthetic", "num_classes": 2, "examples_per_class": 4,
                        "num_signals": 3, "num_steps": 5, "spike_density": 0.3, "jitter": 0.0, "seed": 1},
            "topology": {"inputs": 3, "rate": 1.0, "decoder_hidden": 1, "outputs": 2},
            "channel": {"type": "gaussian_quantized", "snr_db": 0.0},
            "iterations": 3
        }"#
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = ExperimentConfig::from_json(config_json()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.hyperparams, Hyperparams::default());
        assert_eq!(cfg.eval_every, 100);
        assert_eq!(cfg.topology.architecture().channel_dim, 3);

        let mut bad = cfg.clone();
        bad.topology.rate = 0.0;
        assert!(
            matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "topology.rate")
        );
        bad.topology.rate = 0.1;
        assert!(
            matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "topology.rate")
        );
        let mut bad = cfg.clone();
        bad.topology.uncoded = true;
        bad.topology.rate = 1.5;
        assert!(
            matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "topology.rate")
        );
        let mut bad = cfg;
        bad.hyperparams.kappa = 1.0;
        assert!(
            matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "hyperparams.kappa")
        );

        let unknown =
            config_json().replace("\"iterations\": 3", "\"iterations\": 3, \"itertions\": 4");
        assert!(ExperimentConfig::from_json(&unknown).is_err());
    }

    #[test]
    fn snr_lists() {
        assert_eq!(
            parse_snr_list("-6, 0,inf").unwrap(),
            vec![Some(-6.0), Some(0.0), None]
        );
        assert!(parse_snr_list("").is_err());
        assert!(parse_snr_list("3,x").is_err());
    }

    #[test]
    fn sweep_seeds_depend_on_the_point() {
        assert_ne!(
            sweep_point_seed(1, Some(0.0)),
            sweep_point_seed(1, Some(-6.0))
        );
        assert_ne!(sweep_point_seed(1, None), sweep_point_seed(1, Some(0.0)));
        assert_eq!(
            sweep_point_seed(4, Some(3.0)),
            sweep_point_seed(4, Some(3.0))
        );
    }
}
