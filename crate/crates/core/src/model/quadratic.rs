use std::sync::Arc;

use super::{HvpMode, Objective};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::params::{ParamVector, ShapeTable};
use crate::scalar::Scalar;

/// `L(θ) = ½ θᵀAθ − bᵀθ` with a fixed symmetric `A`; ignores the batch.
///
/// Serves as a surrogate with closed-form gradient, Hessian and optimum.
#[derive(Debug, Clone)]
pub struct Quadratic<T> {
    /// Row-major `n x n`.
    a: Vec<T>,
    b: Vec<T>,
    start: Vec<T>,
    shape: Arc<ShapeTable>,
}

impl<T: Scalar> Quadratic<T> {
    pub fn new(a: Vec<T>, b: Vec<T>) -> Result<Self> {
        let n = b.len();
        if a.len() != n * n {
            return Err(Error::shape(format!("{n}x{n} matrix"), format!("{} entries", a.len())));
        }
        for i in 0..n {
            for j in 0..i {
                if a[i * n + j] != a[j * n + i] {
                    return Err(Error::Config("quadratic form must be symmetric".into()));
                }
            }
        }
        Ok(Self {
            a,
            b,
            start: vec![T::zero(); n],
            shape: Arc::new(ShapeTable::flat(n)),
        })
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        let mut a = vec![T::zero(); n * n];
        for (i, &d) in diag.iter().enumerate() {
            a[i * n + i] = d;
        }
        Self::new(a, vec![T::zero(); n]).expect("diagonal matrix is symmetric")
    }

    /// Starting point returned by [`Objective::init_params`].
    pub fn with_start(mut self, start: Vec<T>) -> Self {
        assert_eq!(start.len(), self.b.len());
        self.start = start;
        self
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                self.a[i * n..(i + 1) * n]
                    .iter()
                    .zip(x)
                    .map(|(&aij, &xj)| aij * xj)
                    .sum()
            })
            .collect()
    }

    fn check(&self, v: &ParamVector<T>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::shape(format!("{} parameters", self.dim()), format!("{}", v.len())));
        }
        Ok(())
    }
}

impl<T: Scalar> Objective<T> for Quadratic<T> {
    fn shape(&self) -> Arc<ShapeTable> {
        Arc::clone(&self.shape)
    }

    fn init_params(&self) -> ParamVector<T> {
        ParamVector::from_values(Arc::clone(&self.shape), self.start.clone())
            .expect("start matches dimension")
    }

    fn loss(&self, params: &ParamVector<T>, _batch: &Batch<T>) -> Result<T> {
        self.check(params)?;
        let x = params.values();
        let ax = self.apply(x);
        let half = T::lit(0.5);
        Ok(x.iter()
            .zip(&ax)
            .zip(&self.b)
            .map(|((&xi, &axi), &bi)| half * xi * axi - bi * xi)
            .sum())
    }

    fn gradient(&self, params: &ParamVector<T>, _batch: &Batch<T>) -> Result<ParamVector<T>> {
        self.check(params)?;
        let g = self
            .apply(params.values())
            .into_iter()
            .zip(&self.b)
            .map(|(axi, &bi)| axi - bi)
            .collect();
        ParamVector::from_values(Arc::clone(params.shape()), g)
    }

    fn hvp(
        &self,
        params: &ParamVector<T>,
        _batch: &Batch<T>,
        z: &ParamVector<T>,
    ) -> Result<ParamVector<T>> {
        self.check(params)?;
        params.check_same_shape(z)?;
        ParamVector::from_values(Arc::clone(z.shape()), self.apply(z.values()))
    }

    fn hvp_mode(&self) -> HvpMode {
        HvpMode::Analytic
    }
}
