//! Local optimizers run by each worker between communications.

mod adahessian;
mod sgd;

pub use adahessian::{
    adahessian_step, hutchinson_diag, hutchinson_estimate, rademacher, spatial_average,
    AdaHessianConfig, AdaHessianState, BlockSize,
};
pub use sgd::{sgd_step, SgdConfig, SgdState};

use crate::data::Batch;
use crate::error::Result;
use crate::model::Objective;
use crate::params::ParamVector;
use crate::scalar::Scalar;

/// Optimizer state owned by one worker.
#[derive(Debug, Clone)]
pub enum LocalOptimizer<T> {
    Sgd(SgdState<T>),
    AdaHessian(AdaHessianState<T>),
}

impl<T: Scalar> LocalOptimizer<T> {
    /// One local update of `params` on `batch`.
    pub fn step<O: Objective<T> + ?Sized>(
        &mut self,
        objective: &O,
        params: &mut ParamVector<T>,
        batch: &Batch<T>,
    ) -> Result<()> {
        match self {
            LocalOptimizer::Sgd(state) => {
                let grad = objective.gradient(params, batch)?;
                state.step(params, &grad)
            }
            LocalOptimizer::AdaHessian(state) => state.step(objective, params, batch),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LocalOptimizer::Sgd(s) if s.config().momentum > T::zero() => "sgd-momentum",
            LocalOptimizer::Sgd(_) => "sgd",
            LocalOptimizer::AdaHessian(_) => "adahessian",
        }
    }
}
