//! Experiment configuration file: parsing, defaults, validation and the
//! resolved echo.

use std::path::{Path, PathBuf};

use deahes::{
    Activation, AdaHessianConfig, BlockSize, ElasticConfig, FailureModel, HvpMode, Method, SgdConfig, SimConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV destination; the resolved config is written next to it.
    pub output: PathBuf,
    #[serde(default = "all_methods", with = "method_names")]
    pub methods: Vec<Method>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub sgd: SgdSection,
    #[serde(default)]
    pub adahessian: AdaHessianSection,
    #[serde(default)]
    pub elastic: ElasticSection,
    #[serde(default)]
    pub failure: FailureSection,
    #[serde(default)]
    pub sim: SimSection,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_repeats() -> usize {
    3
}

fn default_rounds() -> usize {
    500
}

/// Grid axes. An empty `overlap` list means the per-worker-count default
/// for the overlap methods; methods without overlap always run at `r = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub workers: Vec<usize>,
    pub tau: Vec<usize>,
    pub overlap: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            workers: vec![4],
            tau: vec![2],
            overlap: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSection {
    Synthetic(SyntheticSource),
    Idx(IdxSource),
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection::Synthetic(SyntheticSource::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSource {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    pub spread: f64,
    pub seed: u64,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        Self {
            classes: 3,
            train_per_class: 1000,
            test_per_class: 300,
            dim: 20,
            spread: 2.5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Keep only the first `n` training samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationName {
    Relu,
    Tanh,
}

impl From<ActivationName> for Activation {
    fn from(a: ActivationName) -> Self {
        match a {
            ActivationName::Relu => Activation::Relu,
            ActivationName::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Hidden layer widths; input and output sizes come from the dataset.
    pub hidden: Vec<usize>,
    pub activation: ActivationName,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            activation: ActivationName::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdSection {
    pub learning_rate: f64,
    /// Used by EAMSGD only.
    pub momentum: f64,
}

impl Default for SgdSection {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.5,
        }
    }
}

/// `"fan-in"` or a fixed number of coordinates per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockSetting {
    Size(usize),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaHessianSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub hutchinson_samples: usize,
    pub block: BlockSetting,
}

impl Default for AdaHessianSection {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            hutchinson_samples: 1,
            block: BlockSetting::Named("fan-in".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElasticSection {
    pub alpha: f64,
    pub score_threshold: f64,
    pub history_depth: usize,
    /// Score coefficients, newest first; empty means halving weights
    /// normalized to sum to one.
    pub coeffs: Vec<f64>,
}

impl Default for ElasticSection {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            score_threshold: -1.0,
            history_depth: 4,
            coeffs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureMode {
    Bernoulli,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FailureSection {
    pub mode: FailureMode,
    /// Suppression probability in Bernoulli mode.
    pub probability: f64,
    /// Period in periodic mode: one attempt in `every` is suppressed.
    pub every: u64,
}

impl Default for FailureSection {
    fn default() -> Self {
        Self {
            mode: FailureMode::Bernoulli,
            probability: 1.0 / 3.0,
            every: 3,
        }
    }
}

impl FailureSection {
    pub fn model(&self) -> FailureModel {
        match self.mode {
            FailureMode::Bernoulli => FailureModel::Bernoulli {
                probability: self.probability,
            },
            FailureMode::Periodic => FailureModel::Periodic { every: self.every },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HvpModeName {
    Analytic,
    CentralDifference,
}

impl From<HvpModeName> for HvpMode {
    fn from(m: HvpModeName) -> Self {
        match m {
            HvpModeName::Analytic => HvpMode::Analytic,
            HvpModeName::CentralDifference => HvpMode::CentralDifference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub batch_size: usize,
    pub hvp_mode: HvpModeName,
    /// Score distances against the live master instead of the worker's
    /// last snapshot.
    pub oracle_master_estimate: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            batch_size: 32,
            hvp_mode: HvpModeName::Analytic,
            oracle_master_estimate: false,
        }
    }
}

mod method_names {
    use deahes::Method;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(methods: &[Method], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(methods.iter().map(|m| m.name()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Method>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|name| name.parse().map_err(D::Error::custom))
            .collect()
    }
}

/// One point of the experiment grid before seeds are attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub method: Method,
    pub workers: usize,
    pub tau: usize,
    pub overlap: f64,
}

/// A validation failure tied to a key of the document.
struct Invalid {
    section: Option<&'static str>,
    key: &'static str,
    message: String,
}

fn invalid(section: Option<&'static str>, key: &'static str, message: impl Into<String>) -> Invalid {
    Invalid {
        section,
        key,
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Reads, parses and validates a config file. Errors carry the line of
    /// the offending entry where one can be located.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            CliError::Config {
                path: origin.to_path_buf(),
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        config.check().map_err(|bad| CliError::Config {
            path: origin.to_path_buf(),
            line: find_key(text, bad.section, bad.key),
            message: bad.message,
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|bad| CliError::Config {
            path: PathBuf::from("<config>"),
            line: None,
            message: bad.message,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// `results.csv` → `results.resolved.toml`.
    pub fn resolved_path(&self) -> PathBuf {
        self.output.with_extension("resolved.toml")
    }

    /// Grid points in output order: methods as listed, then worker count,
    /// communication period and overlap ratio.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &method in &self.methods {
            for &workers in &self.grid.workers {
                for &tau in &self.grid.tau {
                    for overlap in self.overlaps(method, workers) {
                        points.push(GridPoint {
                            method,
                            workers,
                            tau,
                            overlap,
                        });
                    }
                }
            }
        }
        points
    }

    fn overlaps(&self, method: Method, workers: usize) -> Vec<f64> {
        if !method.uses_overlap() {
            vec![0.0]
        } else if self.grid.overlap.is_empty() {
            vec![deahes::sim::default_overlap(workers)]
        } else {
            self.grid.overlap.clone()
        }
    }

    pub fn activation(&self) -> Activation {
        self.model.activation.into()
    }

    pub fn hvp_mode(&self) -> HvpMode {
        self.sim.hvp_mode.into()
    }

    /// Simulator configuration for one grid point and seed.
    pub fn sim_config(&self, point: &GridPoint, seed: u64) -> SimConfig<f64> {
        let block = match self.adahessian.block {
            BlockSetting::Size(n) => BlockSize::Fixed(n),
            BlockSetting::Named(_) => BlockSize::FanIn,
        };
        let coeffs = if self.elastic.coeffs.is_empty() {
            deahes::elastic::default_coeffs(self.elastic.history_depth)
        } else {
            self.elastic.coeffs.clone()
        };
        SimConfig {
            method: point.method,
            worker_count: point.workers,
            comm_period: point.tau,
            rounds: self.rounds,
            failure: self.failure.model(),
            batch_size: self.sim.batch_size,
            master_seed: seed,
            overlap_ratio: point.overlap,
            sgd: SgdConfig {
                learning_rate: self.sgd.learning_rate,
                momentum: self.sgd.momentum,
            },
            adahessian: AdaHessianConfig {
                learning_rate: self.adahessian.learning_rate,
                beta1: self.adahessian.beta1,
                beta2: self.adahessian.beta2,
                eps: self.adahessian.eps,
                hutchinson_samples: self.adahessian.hutchinson_samples,
                block,
            },
            elastic: ElasticConfig {
                alpha: self.elastic.alpha,
                score_threshold: self.elastic.score_threshold,
                history_depth: self.elastic.history_depth,
                coeffs,
                variant: point.method.weighting(),
            },
            oracle_master_estimate: self.sim.oracle_master_estimate,
        }
    }

    fn check(&self) -> std::result::Result<(), Invalid> {
        if self.output.as_os_str().is_empty() {
            return Err(invalid(None, "output", "output path is empty"));
        }
        if self.methods.is_empty() {
            return Err(invalid(None, "methods", "method list is empty"));
        }
        if self.repeats == 0 {
            return Err(invalid(None, "repeats", "repeats must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(invalid(None, "rounds", "rounds must be positive"));
        }
        if self.base_seed.checked_add(self.repeats as u64).is_none() {
            return Err(invalid(None, "base_seed", "base_seed + repeats overflows"));
        }
        let g = Some("grid");
        if self.grid.workers.is_empty() {
            return Err(invalid(g, "workers", "worker-count axis is empty"));
        }
        if let Some(k) = self.grid.workers.iter().find(|&&k| !(1..=64).contains(&k)) {
            return Err(invalid(g, "workers", format!("worker count must lie in 1..=64, got {k}")));
        }
        if self.grid.tau.is_empty() {
            return Err(invalid(g, "tau", "communication-period axis is empty"));
        }
        if self.grid.tau.contains(&0) {
            return Err(invalid(g, "tau", "communication period must be positive, got 0"));
        }
        if let Some(r) = self.grid.overlap.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(invalid(g, "overlap", format!("overlap ratio must lie in [0, 1), got {r}")));
        }
        self.check_dataset()?;
        if self.model.hidden.contains(&0) {
            return Err(invalid(Some("model"), "hidden", "hidden layer widths must be positive"));
        }
        if let BlockSetting::Named(name) = &self.adahessian.block {
            if name != "fan-in" {
                return Err(invalid(
                    Some("adahessian"),
                    "block",
                    format!("block must be \"fan-in\" or a positive integer, got \"{name}\""),
                ));
            }
        }
        if self.methods.contains(&Method::EahesOm) && !self.failure_enabled() {
            return Err(invalid(
                Some("failure"),
                failure_key(self.failure.mode),
                "EAHES-OM reacts to suppressed exchanges and needs failure injection enabled",
            ));
        }
        for point in self.grid_points() {
            self.sim_config(&point, self.base_seed)
                .validate()
                .map_err(|e| self.locate_core_error(e))?;
        }
        Ok(())
    }

    fn failure_enabled(&self) -> bool {
        self.failure.model().is_enabled()
    }

    fn check_dataset(&self) -> std::result::Result<(), Invalid> {
        let d = Some("dataset");
        match &self.dataset {
            DatasetSection::Synthetic(s) => {
                if s.classes < 2 {
                    return Err(invalid(d, "classes", "synthetic data needs at least 2 classes"));
                }
                if s.train_per_class == 0 {
                    return Err(invalid(d, "train_per_class", "train_per_class must be positive"));
                }
                if s.test_per_class == 0 {
                    return Err(invalid(d, "test_per_class", "test_per_class must be positive"));
                }
                if s.dim == 0 {
                    return Err(invalid(d, "dim", "dim must be positive"));
                }
                if !(s.spread.is_finite() && s.spread > 0.0) {
                    return Err(invalid(d, "spread", format!("spread must be positive, got {}", s.spread)));
                }
            }
            DatasetSection::Idx(s) => {
                if s.train_limit == Some(0) {
                    return Err(invalid(d, "train_limit", "train_limit must be positive"));
                }
                if s.test_limit == Some(0) {
                    return Err(invalid(d, "test_limit", "test_limit must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Maps a simulator validation error to the config key that most likely
    /// caused it.
    fn locate_core_error(&self, e: deahes::Error) -> Invalid {
        let message = e.to_string();
        let m = message.to_lowercase();
        let (section, key) = if m.contains("learning rate") || m.contains("momentum") {
            if m.contains("adahessian") {
                (Some("adahessian"), "learning_rate")
            } else {
                (Some("sgd"), if m.contains("momentum") { "momentum" } else { "learning_rate" })
            }
        } else if m.contains("beta") {
            let b1_ok = self.adahessian.beta1 > 0.0 && self.adahessian.beta1 < 1.0;
            (Some("adahessian"), if b1_ok { "beta2" } else { "beta1" })
        } else if m.contains("eps") {
            (Some("adahessian"), "eps")
        } else if m.contains("hutchinson") {
            (Some("adahessian"), "hutchinson_samples")
        } else if m.contains("block") {
            (Some("adahessian"), "block")
        } else if m.contains("alpha") {
            (Some("elastic"), "alpha")
        } else if m.contains("threshold") {
            (Some("elastic"), "score_threshold")
        } else if m.contains("coeff") {
            (Some("elastic"), "coeffs")
        } else if m.contains("depth") {
            (Some("elastic"), "history_depth")
        } else if m.contains("probability") || m.contains("period of") || m.contains("failure") {
            (Some("failure"), failure_key(self.failure.mode))
        } else if m.contains("batch") {
            (Some("sim"), "batch_size")
        } else if m.contains("overlap") {
            (Some("grid"), "overlap")
        } else {
            (None, "methods")
        };
        Invalid {
            section,
            key,
            message,
        }
    }
}

fn failure_key(mode: FailureMode) -> &'static str {
    match mode {
        FailureMode::Bernoulli => "probability",
        FailureMode::Periodic => "every",
    }
}

/// 1-based line of byte offset `at`.
fn line_of(text: &str, at: usize) -> usize {
    text[..at.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of `key = ...` inside `[section]` (or before any section header).
fn find_key(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[') {
            current = Some(header.trim_end_matches(']').trim().to_string());
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let Some(rest) = line.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some(i + 1);
            }
        }
    }
    section.and_then(|s| {
        text.lines()
            .position(|l| l.trim().trim_start_matches('[').trim_end_matches(']').trim() == s)
            .map(|i| i + 1)
    })
}
