use std::sync::Arc;

use crate::error::{Error, Result};
use crate::params::{ParamVector, ShapeTable};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig<T> {
    pub learning_rate: T,
    /// Velocity decay in `[0, 1)`; zero gives plain SGD.
    pub momentum: T,
}

impl<T: Scalar> SgdConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero() && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "SGD learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum in velocity form:
/// `v ← δ·v + g`, `θ ← θ − η·v`.
#[derive(Debug, Clone)]
pub struct SgdState<T> {
    config: SgdConfig<T>,
    velocity: ParamVector<T>,
}

impl<T: Scalar> SgdState<T> {
    pub fn new(config: SgdConfig<T>, shape: Arc<ShapeTable>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            velocity: ParamVector::zeros(shape),
        })
    }

    pub fn config(&self) -> &SgdConfig<T> {
        &self.config
    }

    pub fn velocity(&self) -> &ParamVector<T> {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut ParamVector<T>, grad: &ParamVector<T>) -> Result<()> {
        params.check_same_shape(grad)?;
        params.check_same_shape(&self.velocity)?;
        let SgdConfig {
            learning_rate,
            momentum,
        } = self.config;
        for ((v, &g), p) in self
            .velocity
            .values_mut()
            .iter_mut()
            .zip(grad.values())
            .zip(params.values_mut())
        {
            *v = momentum * *v + g;
            *p -= learning_rate * *v;
        }
        Ok(())
    }
}

/// Free-function form of [`SgdState::step`].
pub fn sgd_step<T: Scalar>(
    state: &mut SgdState<T>,
    params: &mut ParamVector<T>,
    grad: &ParamVector<T>,
) -> Result<()> {
    state.step(params, grad)
}
