//! TOML experiment configuration: parsing, validation, and resolution into
//! the core problem and run structures.
//!
//! Unknown keys are rejected rather than warned about, and keys that belong
//! to a different problem kind are errors too, so a typo cannot silently
//! fall back to a default.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use lsgd_core::data::synthetic::{
    make_synthetic_images, make_synthetic_quadratic, SyntheticImagesConfig,
};
use lsgd_core::data::{partition_iid, partition_indices, ClientShard, Dataset};
use lsgd_core::fedsim::{FedRunConfig, OptimizerKind, SgdBaseline};
use lsgd_core::model::LossProblem;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub federation: FederationConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub residue: ResidueConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKindName {
    Quadratic,
    Logistic,
    Softmax,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKindName,
    /// Seed for problem construction (quadratic basis or synthetic images),
    /// separate from the training seed.
    #[serde(default)]
    pub data_seed: u64,
    pub hessian_budget: Option<usize>,

    // quadratic: either an explicit spectrum or a log-spaced range
    pub dim: Option<usize>,
    pub eigenvalues: Option<Vec<f64>>,
    pub spectrum_min: Option<f64>,
    pub spectrum_max: Option<f64>,
    /// Per-step gradient noise standard deviation (quadratic only).
    pub noise_std: Option<f64>,

    // image classifiers: IDX files if a directory is given, otherwise the
    // synthetic generator
    pub dataset_dir: Option<PathBuf>,
    /// Average-pool 2x2 blocks when loading IDX images (28x28 -> 14x14).
    pub pool: Option<bool>,
    pub samples: Option<usize>,
    pub classes: Option<usize>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub pixel_noise: Option<f64>,
    pub label_noise: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, Hash)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    LocalSgd,
    BigBatchSgd,
    FullGradient,
    Newton,
}

impl OptimizerName {
    pub fn to_kind(self) -> OptimizerKind {
        match self {
            OptimizerName::LocalSgd => OptimizerKind::LocalSgd,
            OptimizerName::BigBatchSgd => OptimizerKind::BigBatchSgd,
            OptimizerName::FullGradient => OptimizerKind::FullGradient,
            OptimizerName::Newton => OptimizerKind::Newton,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OptimizerName::LocalSgd => "local_sgd",
            OptimizerName::BigBatchSgd => "big_batch_sgd",
            OptimizerName::FullGradient => "full_gradient",
            OptimizerName::Newton => "newton",
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub clients: usize,
    pub local_steps: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of the Gaussian initial iterate; zero starts at
    /// the origin.
    #[serde(default)]
    pub init_scale: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerName,
    /// Extra optimizers trained alongside the primary one for comparison
    /// curves; each gets its own metrics file and loss-curve series.
    #[serde(default)]
    pub compare: Vec<OptimizerName>,
    pub baseline: Option<BaselineConfig>,
}

fn default_optimizer() -> OptimizerName {
    OptimizerName::LocalSgd
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Rounds to checkpoint and analyze spectrally.
    #[serde(default)]
    pub rounds: Vec<usize>,
    #[serde(default = "default_threshold_count")]
    pub threshold_count: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            rounds: Vec::new(),
            threshold_count: default_threshold_count(),
        }
    }
}

fn default_threshold_count() -> usize {
    200
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidueConfig {
    /// Rounds whose checkpoints anchor the residue trajectories.
    #[serde(default)]
    pub rounds: Vec<usize>,
    /// Trajectory depths (local step counts) per anchor round.
    #[serde(default = "default_depths")]
    pub local_steps: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

impl Default for ResidueConfig {
    fn default() -> Self {
        ResidueConfig {
            rounds: Vec::new(),
            local_steps: default_depths(),
            trials: default_trials(),
        }
    }
}

fn default_depths() -> Vec<usize> {
    vec![10, 30, 100, 300]
}

fn default_trials() -> usize {
    500
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Emit SVG figures alongside the CSV/JSON artifacts.
    #[serde(default = "default_true")]
    pub svg: bool,
    /// Checkpoint every round instead of only the diagnostics/residue
    /// rounds.
    #[serde(default)]
    pub checkpoint_all_rounds: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
            svg: default_true(),
            checkpoint_all_rounds: false,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

/// A parsed config plus the raw bytes it came from, kept for hashing.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub raw: Vec<u8>,
    pub path: PathBuf,
}

pub fn load_config(path: &Path) -> CliResult<LoadedConfig> {
    let raw = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&raw)
        .map_err(|e| CliError::Config(format!("{} is not UTF-8: {e}", path.display())))?;
    let config: ExperimentConfig = toml::from_str(text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(LoadedConfig {
        config,
        raw,
        path: path.to_path_buf(),
    })
}

impl ExperimentConfig {
    pub fn validate(&self) -> CliResult<()> {
        let fed = &self.federation;
        if fed.clients == 0 || fed.rounds == 0 || fed.local_steps == 0 || fed.batch_size == 0 {
            return Err(CliError::Config(
                "[federation] clients, rounds, local_steps, and batch_size must be positive"
                    .into(),
            ));
        }
        if !(fed.learning_rate > 0.0 && fed.learning_rate.is_finite()) {
            return Err(CliError::Config(format!(
                "[federation] learning_rate must be positive and finite, got {}",
                fed.learning_rate
            )));
        }
        if !(fed.init_scale >= 0.0 && fed.init_scale.is_finite()) {
            return Err(CliError::Config(format!(
                "[federation] init_scale must be nonnegative, got {}",
                fed.init_scale
            )));
        }

        let mut optimizers = vec![fed.optimizer];
        optimizers.extend(fed.compare.iter().copied());
        for (i, opt) in optimizers.iter().enumerate() {
            if optimizers[..i].contains(opt) {
                return Err(CliError::Config(format!(
                    "[federation] optimizer {} listed more than once",
                    opt.label()
                )));
            }
        }
        if optimizers.contains(&OptimizerName::BigBatchSgd) && fed.baseline.is_none() {
            return Err(CliError::Config(
                "[federation] big_batch_sgd requires a [federation.baseline] section".into(),
            ));
        }
        if let Some(b) = &fed.baseline {
            if b.batch_size == 0 || !(b.learning_rate > 0.0 && b.learning_rate.is_finite()) {
                return Err(CliError::Config(
                    "[federation.baseline] batch_size must be positive and learning_rate positive and finite"
                        .into(),
                ));
            }
        }

        for &t in &self.diagnostics.rounds {
            if t >= fed.rounds {
                return Err(CliError::Config(format!(
                    "[diagnostics] round {t} is outside the training range 0..{}",
                    fed.rounds
                )));
            }
        }
        if self.diagnostics.threshold_count < 2 {
            return Err(CliError::Config(
                "[diagnostics] threshold_count must be at least 2".into(),
            ));
        }
        for &t in &self.residue.rounds {
            if t >= fed.rounds {
                return Err(CliError::Config(format!(
                    "[residue] round {t} is outside the training range 0..{}",
                    fed.rounds
                )));
            }
        }
        if self.residue.trials == 0 {
            return Err(CliError::Config(
                "[residue] trials must be positive".into(),
            ));
        }
        if self.output.dir.as_os_str().is_empty() {
            return Err(CliError::Config("[output] dir must not be empty".into()));
        }

        self.problem.validate()?;
        Ok(())
    }
}

impl ProblemConfig {
    fn validate(&self) -> CliResult<()> {
        let quadratic_only: [(&str, bool); 5] = [
            ("dim", self.dim.is_some()),
            ("eigenvalues", self.eigenvalues.is_some()),
            ("spectrum_min", self.spectrum_min.is_some()),
            ("spectrum_max", self.spectrum_max.is_some()),
            ("noise_std", self.noise_std.is_some()),
        ];
        let dataset_only: [(&str, bool); 8] = [
            ("dataset_dir", self.dataset_dir.is_some()),
            ("pool", self.pool.is_some()),
            ("samples", self.samples.is_some()),
            ("classes", self.classes.is_some()),
            ("rows", self.rows.is_some()),
            ("cols", self.cols.is_some()),
            ("pixel_noise", self.pixel_noise.is_some()),
            ("label_noise", self.label_noise.is_some()),
        ];
        match self.kind {
            ProblemKindName::Quadratic => {
                if let Some((key, _)) = dataset_only.iter().find(|(_, set)| *set) {
                    return Err(CliError::Config(format!(
                        "[problem] key `{key}` does not apply to kind = \"quadratic\""
                    )));
                }
                match (&self.eigenvalues, self.dim) {
                    (Some(eigs), dim) => {
                        if eigs.is_empty() {
                            return Err(CliError::Config(
                                "[problem] eigenvalues must not be empty".into(),
                            ));
                        }
                        if let Some(d) = dim {
                            if d != eigs.len() {
                                return Err(CliError::Config(format!(
                                    "[problem] dim = {d} contradicts {} explicit eigenvalues",
                                    eigs.len()
                                )));
                            }
                        }
                        if self.spectrum_min.is_some() || self.spectrum_max.is_some() {
                            return Err(CliError::Config(
                                "[problem] give either explicit eigenvalues or a spectrum range, not both"
                                    .into(),
                            ));
                        }
                        if eigs.iter().any(|v| !v.is_finite() || *v < 0.0) {
                            return Err(CliError::Config(
                                "[problem] eigenvalues must be finite and nonnegative".into(),
                            ));
                        }
                    }
                    (None, Some(d)) => {
                        if d == 0 {
                            return Err(CliError::Config(
                                "[problem] dim must be positive".into(),
                            ));
                        }
                        let (lo, hi) = match (self.spectrum_min, self.spectrum_max) {
                            (Some(lo), Some(hi)) => (lo, hi),
                            _ => {
                                return Err(CliError::Config(
                                    "[problem] a quadratic without explicit eigenvalues needs spectrum_min and spectrum_max"
                                        .into(),
                                ))
                            }
                        };
                        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                            return Err(CliError::Config(format!(
                                "[problem] spectrum range [{lo}, {hi}] must satisfy 0 < min <= max"
                            )));
                        }
                    }
                    (None, None) => {
                        return Err(CliError::Config(
                            "[problem] quadratic needs either eigenvalues or dim with a spectrum range"
                                .into(),
                        ))
                    }
                }
                if let Some(s) = self.noise_std {
                    if !(s >= 0.0 && s.is_finite()) {
                        return Err(CliError::Config(format!(
                            "[problem] noise_std must be nonnegative, got {s}"
                        )));
                    }
                }
            }
            ProblemKindName::Logistic | ProblemKindName::Softmax => {
                if let Some((key, _)) = quadratic_only.iter().find(|(_, set)| *set) {
                    return Err(CliError::Config(format!(
                        "[problem] key `{key}` does not apply to dataset-backed kinds"
                    )));
                }
                if self.dataset_dir.is_some() {
                    for (key, set) in [
                        ("samples", self.samples.is_some()),
                        ("classes", self.classes.is_some()),
                        ("rows", self.rows.is_some()),
                        ("cols", self.cols.is_some()),
                        ("pixel_noise", self.pixel_noise.is_some()),
                        ("label_noise", self.label_noise.is_some()),
                    ] {
                        if set {
                            return Err(CliError::Config(format!(
                                "[problem] key `{key}` only applies to the synthetic generator, not dataset_dir"
                            )));
                        }
                    }
                }
                if self.kind == ProblemKindName::Logistic {
                    if let Some(c) = self.classes {
                        if c != 2 {
                            return Err(CliError::Config(format!(
                                "[problem] logistic regression needs classes = 2, got {c}"
                            )));
                        }
                    }
                }
                if let Some(c) = self.classes {
                    if c < 2 {
                        return Err(CliError::Config(format!(
                            "[problem] classes must be at least 2, got {c}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A config resolved into live core objects, ready to train and analyze.
pub struct ResolvedExperiment {
    pub problem: LossProblem,
    pub dataset: Option<Arc<Dataset>>,
    pub shards: Vec<ClientShard>,
}

pub fn resolve(config: &ExperimentConfig) -> CliResult<ResolvedExperiment> {
    let fed = &config.federation;
    let pc = &config.problem;
    let (problem, dataset) = match pc.kind {
        ProblemKindName::Quadratic => {
            let eigs: Vec<f64> = match &pc.eigenvalues {
                Some(list) => list.clone(),
                None => {
                    let d = pc.dim.expect("validated");
                    let (lo, hi) = (
                        pc.spectrum_min.expect("validated"),
                        pc.spectrum_max.expect("validated"),
                    );
                    log_spaced(lo, hi, d)
                }
            };
            let mut problem =
                make_synthetic_quadratic(eigs.len(), &eigs, pc.data_seed)?;
            if let Some(s) = pc.noise_std {
                if s > 0.0 {
                    problem = problem.with_gradient_noise(s)?;
                }
            }
            // The quadratic has no samples of its own; give every client a
            // virtual shard exactly one batch wide.
            problem = problem.with_virtual_len(fed.clients * fed.batch_size)?;
            (problem, None)
        }
        ProblemKindName::Logistic | ProblemKindName::Softmax => {
            let data = match &pc.dataset_dir {
                Some(dir) => {
                    let images = dir.join("train-images-idx3-ubyte");
                    let labels = dir.join("train-labels-idx1-ubyte");
                    Dataset::from_idx_pair(&images, &labels, pc.pool.unwrap_or(true))?
                }
                None => {
                    let defaults = SyntheticImagesConfig::default();
                    make_synthetic_images(&SyntheticImagesConfig {
                        samples: pc.samples.unwrap_or(defaults.samples),
                        classes: pc.classes.unwrap_or(match pc.kind {
                            ProblemKindName::Logistic => 2,
                            _ => defaults.classes,
                        }),
                        rows: pc.rows.unwrap_or(defaults.rows),
                        cols: pc.cols.unwrap_or(defaults.cols),
                        pixel_noise: pc.pixel_noise.unwrap_or(defaults.pixel_noise),
                        label_noise: pc.label_noise.unwrap_or(defaults.label_noise),
                        seed: pc.data_seed,
                    })?
                }
            };
            let data = Arc::new(data);
            let problem = match pc.kind {
                ProblemKindName::Logistic => LossProblem::logistic(Arc::clone(&data))?,
                _ => LossProblem::softmax_linear(Arc::clone(&data))?,
            };
            (problem, Some(data))
        }
    };
    let problem = match pc.hessian_budget {
        Some(budget) => problem.with_hessian_budget(budget),
        None => problem,
    };

    let shards = match &dataset {
        Some(data) => partition_iid(data, fed.clients, fed.seed)?,
        None => partition_indices(problem.n_samples(), fed.clients, fed.seed)?,
    };

    Ok(ResolvedExperiment {
        problem,
        dataset,
        shards,
    })
}

impl FederationConfig {
    /// The run configuration for one optimizer (the primary one or a
    /// comparison optimizer).
    pub fn run_config(&self, optimizer: OptimizerName) -> FedRunConfig {
        FedRunConfig {
            clients: self.clients,
            local_steps: self.local_steps,
            rounds: self.rounds,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed: self.seed,
            init_scale: self.init_scale,
            optimizer: optimizer.to_kind(),
            baseline: self.baseline.map(|b| SgdBaseline {
                batch_size: b.batch_size,
                learning_rate: b.learning_rate,
            }),
        }
    }
}

pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
