//! Asynchronous elastic-averaging training simulator.
//!
//! Workers train a small classifier with SGD, momentum SGD or AdaHessian,
//! and periodically exchange parameters with a master through an elastic
//! pull whose strength can adapt to each worker's recent distance history.
//! Communication failures are injected deterministically, every random
//! stream is derived from one master seed, and a run is replayable bit for
//! bit.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! and `*32` aliases below name the common instantiations.

pub mod data;
pub mod elastic;
pub mod error;
pub mod model;
pub mod optim;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use data::{Batch, Dataset, PartitionPlan, Provenance};
pub use elastic::{DistanceHistory, ElasticConfig, WeightPair, WeightingVariant};
pub use error::{Error, Result};
pub use model::{Activation, HvpMode, Mlp, ModelSpec, Objective, Quadratic};
pub use optim::{AdaHessianConfig, AdaHessianState, BlockSize, LocalOptimizer, SgdConfig, SgdState};
pub use params::{ParamVector, ShapeTable};
pub use scalar::Scalar;
pub use sim::{FailureModel, Method, RoundRecord, RunMetrics, SimConfig, SimState};

pub type ParamVector64 = ParamVector<f64>;
pub type ParamVector32 = ParamVector<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Batch64 = Batch<f64>;
pub type Batch32 = Batch<f32>;
pub type SimConfig64 = SimConfig<f64>;
pub type SimConfig32 = SimConfig<f32>;
pub type RunMetrics64 = RunMetrics<f64>;
pub type RunMetrics32 = RunMetrics<f32>;
pub type ElasticConfig64 = ElasticConfig<f64>;
pub type AdaHessianState64 = AdaHessianState<f64>;
