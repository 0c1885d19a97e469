//! AdaHessian: ADAM-style moments where the second moment tracks a
//! spatially averaged Hutchinson estimate of the Hessian diagonal.
//!
//! Per step `t` (counted from 1):
//!
//! ```text
//! D   = spatial_average( mean_i z_i ⊙ (H z_i) )      z_i Rademacher
//! m   = β1·m + (1−β1)·g
//! v   = β2·v + (1−β2)·D⊙D
//! θ  -= η · (m / (1−β1^t)) / (sqrt(v / (1−β2^t)) + eps)
//! ```

use std::sync::Arc;

use rand::Rng;

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::model::Objective;
use crate::params::{ParamVector, ShapeTable};
use crate::rng;
use crate::scalar::Scalar;

/// Width of the averaging blocks used to smooth the Hessian diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockSize {
    /// One block per weight row (the layer's fan-in); biases form one block.
    FanIn,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaHessianConfig<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub hutchinson_samples: usize,
    pub block: BlockSize,
}

impl<T: Scalar> AdaHessianConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: T| b > T::zero() && b < T::one();
        if !(self.learning_rate > T::zero() && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "AdaHessian learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::Config(format!(
                "betas must lie in (0, 1), got ({}, {})",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps > T::zero()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.hutchinson_samples == 0 {
            return Err(Error::Config("hutchinson_samples must be at least 1".into()));
        }
        if self.block == BlockSize::Fixed(0) {
            return Err(Error::Config("block size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdaHessianState<T> {
    config: AdaHessianConfig<T>,
    m: ParamVector<T>,
    v: ParamVector<T>,
    step_count: u64,
    rng_seed: u64,
}

impl<T: Scalar> AdaHessianState<T> {
    pub fn new(config: AdaHessianConfig<T>, shape: Arc<ShapeTable>, rng_seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            m: ParamVector::zeros(Arc::clone(&shape)),
            v: ParamVector::zeros(shape),
            step_count: 0,
            rng_seed,
        })
    }

    pub fn config(&self) -> &AdaHessianConfig<T> {
        &self.config
    }

    pub fn first_moment(&self) -> &ParamVector<T> {
        &self.m
    }

    pub fn second_moment(&self) -> &ParamVector<T> {
        &self.v
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Gradient, Hutchinson diagonal, spatial averaging and update in one go.
    pub fn step<O: Objective<T> + ?Sized>(
        &mut self,
        objective: &O,
        params: &mut ParamVector<T>,
        batch: &Batch<T>,
    ) -> Result<()> {
        let grad = objective.gradient(params, batch)?;
        let diag = hutchinson_diag(objective, params, batch, self)?;
        let smoothed = spatial_average(&diag, self.config.block);
        adahessian_step(self, params, &grad, &smoothed)
    }
}

/// Rademacher vector (entries ±1), a pure function of
/// `(seed, step, sample)`.
pub fn rademacher<T: Scalar>(shape: Arc<ShapeTable>, seed: u64, step: u64, sample: u64) -> ParamVector<T> {
    let mut rng = rng::stream(rng::derive_seed(seed, step, "hutchinson"), sample, "rademacher");
    let mut z = ParamVector::zeros(shape);
    for v in z.values_mut() {
        *v = if rng.random::<bool>() { T::one() } else { -T::one() };
    }
    z
}

/// Single-probe estimate `z ⊙ (H z)`.
pub fn hutchinson_estimate<T: Scalar, O: Objective<T> + ?Sized>(
    objective: &O,
    params: &ParamVector<T>,
    batch: &Batch<T>,
    z: &ParamVector<T>,
) -> Result<ParamVector<T>> {
    let hz = objective.hvp(params, batch, z)?;
    Ok(z.zip_map(&hz, |a, b| a * b))
}

/// Mean of `hutchinson_samples` single-probe estimates. Probes are redrawn
/// every step: they depend on the state's seed and on the index of the step
/// about to be taken (`step_count + 1`).
pub fn hutchinson_diag<T: Scalar, O: Objective<T> + ?Sized>(
    objective: &O,
    params: &ParamVector<T>,
    batch: &Batch<T>,
    state: &AdaHessianState<T>,
) -> Result<ParamVector<T>> {
    let samples = state.config.hutchinson_samples;
    if samples == 0 {
        return Err(Error::Config("hutchinson_samples must be at least 1".into()));
    }
    let step = state.step_count + 1;
    let mut acc = params.zeros_like();
    for s in 0..samples {
        let z = rademacher(Arc::clone(params.shape()), state.rng_seed, step, s as u64);
        acc.axpy(T::one(), &hutchinson_estimate(objective, params, batch, &z)?);
    }
    acc.scale(T::one() / T::from_usize_lossy(samples));
    Ok(acc)
}

/// Replaces each run of `block` consecutive coordinates with the mean of
/// their absolute values. Runs restart at every tensor boundary (each weight
/// block and each bias vector); the last run of a tensor may be shorter, and
/// a block wider than the tensor covers it whole.
pub fn spatial_average<T: Scalar>(diag: &ParamVector<T>, block: BlockSize) -> ParamVector<T> {
    let mut out = diag.map(|v| v.abs());
    let values = out.values_mut();
    for seg in diag.shape().segments() {
        let len = seg.range.len();
        let width = match block {
            BlockSize::FanIn => seg.row_len,
            BlockSize::Fixed(b) => b,
        }
        .clamp(1, len);
        if width == 1 {
            continue;
        }
        for run in values[seg.range].chunks_mut(width) {
            let mean = run.iter().copied().sum::<T>() / T::from_usize_lossy(run.len());
            run.fill(mean);
        }
    }
    out
}

/// Moment update and parameter step. `diag_avg` must be non-negative.
pub fn adahessian_step<T: Scalar>(
    state: &mut AdaHessianState<T>,
    params: &mut ParamVector<T>,
    grad: &ParamVector<T>,
    diag_avg: &ParamVector<T>,
) -> Result<()> {
    params.check_same_shape(grad)?;
    params.check_same_shape(diag_avg)?;
    params.check_same_shape(&state.m)?;
    if let Some(i) = diag_avg.values().iter().position(|&d| !(d >= T::zero())) {
        return Err(Error::Contract(format!(
            "Hessian diagonal entry {i} is {}, expected non-negative",
            diag_avg.values()[i]
        )));
    }
    state.step_count += 1;
    let AdaHessianConfig {
        learning_rate,
        beta1,
        beta2,
        eps,
        ..
    } = state.config;
    let t = i32::try_from(state.step_count).unwrap_or(i32::MAX);
    let bias1 = T::one() - beta1.powi(t);
    let bias2 = T::one() - beta2.powi(t);
    let one = T::one();
    for (((p, &g), &d), (m, v)) in params
        .values_mut()
        .iter_mut()
        .zip(grad.values())
        .zip(diag_avg.values())
        .zip(state.m.values_mut().iter_mut().zip(state.v.values_mut()))
    {
        *m = beta1 * *m + (one - beta1) * g;
        *v = beta2 * *v + (one - beta2) * (d * d);
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
