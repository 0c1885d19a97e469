use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::elastic::{ElasticConfig, WeightingVariant};
use crate::error::{Error, Result};
use crate::optim::{AdaHessianConfig, BlockSize, SgdConfig};
use crate::rng::StreamRng;
use crate::scalar::Scalar;

/// The six compared training methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Elastic averaging with plain SGD workers.
    Easgd,
    /// Elastic averaging with momentum SGD workers.
    Eamsgd,
    /// Elastic averaging with AdaHessian workers.
    Eahes,
    /// `Eahes` plus shared overlap data.
    EahesO,
    /// `EahesO` with exchange weights that know when a worker failed.
    EahesOm,
    /// `EahesO` with score-driven dynamic weights.
    DeahesO,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    MomentumSgd,
    AdaHessian,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Easgd,
        Method::Eamsgd,
        Method::Eahes,
        Method::EahesO,
        Method::EahesOm,
        Method::DeahesO,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Easgd => "EASGD",
            Method::Eamsgd => "EAMSGD",
            Method::Eahes => "EAHES",
            Method::EahesO => "EAHES-O",
            Method::EahesOm => "EAHES-OM",
            Method::DeahesO => "DEAHES-O",
        }
    }

    pub fn optimizer(self) -> OptimizerKind {
        match self {
            Method::Easgd => OptimizerKind::Sgd,
            Method::Eamsgd => OptimizerKind::MomentumSgd,
            _ => OptimizerKind::AdaHessian,
        }
    }

    pub fn uses_overlap(self) -> bool {
        matches!(self, Method::EahesO | Method::EahesOm | Method::DeahesO)
    }

    pub fn weighting(self) -> WeightingVariant {
        match self {
            Method::DeahesO => WeightingVariant::Dynamic,
            Method::EahesOm => WeightingVariant::Oracle,
            _ => WeightingVariant::Fixed,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {s:?}; expected one of EASGD, EAMSGD, EAHES, EAHES-O, EAHES-OM, DEAHES-O"
                ))
            })
    }
}

/// When a scheduled communication is suppressed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailureModel {
    /// Independent coin flip per attempt.
    Bernoulli { probability: f64 },
    /// Exactly one attempt in `every`, staggered by worker index.
    Periodic { every: u64 },
}

impl FailureModel {
    pub fn none() -> Self {
        FailureModel::Bernoulli { probability: 0.0 }
    }

    pub fn rate(&self) -> f64 {
        match *self {
            FailureModel::Bernoulli { probability } => probability,
            FailureModel::Periodic { every } => 1.0 / every as f64,
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.rate() > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FailureModel::Bernoulli { probability } if !(0.0..=1.0).contains(&probability) => Err(
                Error::Config(format!("failure probability must lie in [0, 1], got {probability}")),
            ),
            FailureModel::Periodic { every: 0 } => {
                Err(Error::Config("periodic failure period must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether attempt `attempt` (0-based) of `worker` is suppressed. The
    /// Bernoulli model consumes exactly one draw per attempt.
    pub(crate) fn suppress(&self, rng: &mut StreamRng, attempt: u64, worker: usize) -> bool {
        match *self {
            FailureModel::Bernoulli { probability } => rng.random::<f64>() < probability,
            FailureModel::Periodic { every } => (attempt + worker as u64) % every == every - 1,
        }
    }
}

/// Everything that determines one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub method: Method,
    pub worker_count: usize,
    /// Local steps between consecutive communication attempts.
    pub comm_period: usize,
    pub rounds: usize,
    pub failure: FailureModel,
    pub batch_size: usize,
    pub master_seed: u64,
    pub overlap_ratio: f64,
    /// Learning rate for both SGD methods; the momentum applies to EAMSGD only.
    pub sgd: SgdConfig<T>,
    pub adahessian: AdaHessianConfig<T>,
    pub elastic: ElasticConfig<T>,
    /// Use the live master instead of the worker's last snapshot when
    /// measuring worker-master distance.
    pub oracle_master_estimate: bool,
}

/// Overlap ratio used by the overlap methods when none is given:
/// 25% for 4 workers, 12.5% for 8, i.e. `1/k`, capped at one half.
pub fn default_overlap(worker_count: usize) -> f64 {
    (1.0 / worker_count.max(1) as f64).min(0.5)
}

impl<T: Scalar> SimConfig<T> {
    /// α = 0.1, η = 0.01, δ = 0.5, β = (0.9, 0.999), one Hutchinson probe,
    /// one third of communications suppressed.
    pub fn with_defaults(method: Method, worker_count: usize, comm_period: usize, rounds: usize) -> Self {
        Self {
            method,
            worker_count,
            comm_period,
            rounds,
            failure: FailureModel::Bernoulli {
                probability: 1.0 / 3.0,
            },
            batch_size: 32,
            master_seed: 0,
            overlap_ratio: if method.uses_overlap() {
                default_overlap(worker_count)
            } else {
                0.0
            },
            sgd: SgdConfig {
                learning_rate: T::lit(0.01),
                momentum: T::lit(0.5),
            },
            adahessian: AdaHessianConfig {
                learning_rate: T::lit(0.01),
                beta1: T::lit(0.9),
                beta2: T::lit(0.999),
                eps: T::lit(1e-8),
                hutchinson_samples: 1,
                block: BlockSize::FanIn,
            },
            elastic: ElasticConfig::with_defaults(T::lit(0.1), method.weighting()),
            oracle_master_estimate: false,
        }
    }

    /// Switches method, keeping the elastic variant and overlap consistent.
    pub fn for_method(mut self, method: Method) -> Self {
        self.method = method;
        self.elastic.variant = method.weighting();
        if !method.uses_overlap() {
            self.overlap_ratio = 0.0;
        } else if self.overlap_ratio == 0.0 {
            self.overlap_ratio = default_overlap(self.worker_count);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=64).contains(&self.worker_count) {
            return Err(Error::Config(format!(
                "worker count must lie in 1..=64, got {}",
                self.worker_count
            )));
        }
        if self.comm_period == 0 {
            return Err(Error::Config("communication period must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        self.failure.validate()?;
        self.elastic.validate()?;
        if self.elastic.variant != self.method.weighting() {
            return Err(Error::Config(format!(
                "{} requires {:?} exchange weights, config has {:?}",
                self.method,
                self.method.weighting(),
                self.elastic.variant
            )));
        }
        if !self.method.uses_overlap() && self.overlap_ratio != 0.0 {
            return Err(Error::Config(format!(
                "{} trains without data overlap, but overlap ratio is {}",
                self.method, self.overlap_ratio
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_ratio) {
            return Err(Error::Config(format!(
                "overlap ratio must lie in [0, 1), got {}",
                self.overlap_ratio
            )));
        }
        match self.method.optimizer() {
            OptimizerKind::AdaHessian => self.adahessian.validate(),
            _ => self.sgd.validate(),
        }
    }
}
