//! Trainable models: loss, gradient, and Hessian-vector products.

mod mlp;
mod quadratic;

pub use mlp::Mlp;
pub use quadratic::Quadratic;

use std::sync::Arc;

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::params::{ParamVector, ShapeTable};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// Dense feedforward classifier description.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    /// Input dimension, hidden widths..., class count.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, seed: u64) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activation,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "model needs at least input and output layers, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    pub fn shape_table(&self) -> ShapeTable {
        ShapeTable::dense(&self.layer_sizes)
    }
}

/// How Hessian-vector products are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HvpMode {
    /// Exact forward-over-reverse differentiation.
    Analytic,
    /// `(∇L(θ+εz) − ∇L(θ−εz)) / 2ε` with a scale-aware ε.
    CentralDifference,
}

impl HvpMode {
    pub fn name(self) -> &'static str {
        match self {
            HvpMode::Analytic => "analytic",
            HvpMode::CentralDifference => "central-difference",
        }
    }
}

/// A differentiable training objective evaluated on mini-batches.
pub trait Objective<T: Scalar>: Send + Sync {
    fn shape(&self) -> Arc<ShapeTable>;

    /// Initial parameters shared by the master and every worker.
    fn init_params(&self) -> ParamVector<T>;

    fn loss(&self, params: &ParamVector<T>, batch: &Batch<T>) -> Result<T>;

    fn gradient(&self, params: &ParamVector<T>, batch: &Batch<T>) -> Result<ParamVector<T>>;

    fn hvp(
        &self,
        params: &ParamVector<T>,
        batch: &Batch<T>,
        z: &ParamVector<T>,
    ) -> Result<ParamVector<T>>;

    fn hvp_mode(&self) -> HvpMode;

    /// Top-1 accuracy, for objectives that are classifiers.
    fn accuracy(&self, _params: &ParamVector<T>, _batch: &Batch<T>) -> Result<Option<T>> {
        Ok(None)
    }
}

/// Difference-of-gradients Hessian-vector product.
///
/// ε = sqrt(machine ε) · (1 + ‖θ‖) / ‖z‖; a zero `z` short-circuits to zero.
pub fn central_difference_hvp<T: Scalar, O: Objective<T> + ?Sized>(
    objective: &O,
    params: &ParamVector<T>,
    batch: &Batch<T>,
    z: &ParamVector<T>,
) -> Result<ParamVector<T>> {
    params.check_same_shape(z)?;
    let z_norm = z.norm();
    if z_norm.is_zero() {
        return Ok(z.zeros_like());
    }
    let eps = T::epsilon().sqrt() * (T::one() + params.norm()) / z_norm;
    let mut plus = params.clone();
    plus.axpy(eps, z);
    let mut minus = params.clone();
    minus.axpy(-eps, z);
    let g_plus = objective.gradient(&plus, batch)?;
    let g_minus = objective.gradient(&minus, batch)?;
    let two_eps = eps + eps;
    Ok(g_plus.zip_map(&g_minus, |a, b| (a - b) / two_eps))
}
