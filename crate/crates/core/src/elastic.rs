//! Elastic-averaging exchange between a worker and the master, and the
//! distance-history score that adapts the exchange weights.
//!
//! Each worker tracks `u_t = log‖θ_worker − θ̃_master‖` at its exchanges and
//! scores recent movement as `a = Σ_j c_j (u_{t−j} − u_{t−j−1})`. The score
//! maps to a weight pair `(h1, h2)`: `h1` pulls the worker toward the master,
//! `h2` pulls the master toward the worker. A healthy score (`a > 0`) gives
//! plain elastic averaging `(α, α)`; a sharply falling distance (`a < κ`)
//! snaps the worker to the master and leaves the master untouched.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::scalar::Scalar;

/// Floor applied to the worker-master distance before taking its log.
pub const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightingVariant {
    /// Constant `(α, α)`.
    Fixed,
    /// Piecewise-linear maps of the raw score.
    Dynamic,
    /// `(1, 0)` on the first exchange after a suppressed communication.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticConfig<T> {
    /// Moving rate in `(0, 1)`.
    pub alpha: T,
    /// Score below which a worker is treated as failed; negative.
    pub score_threshold: T,
    /// Number of distance differences entering the score.
    pub history_depth: usize,
    /// `history_depth` non-negative weights summing to one; `coeffs[0]`
    /// weights the most recent difference.
    pub coeffs: Vec<T>,
    pub variant: WeightingVariant,
}

impl<T: Scalar> ElasticConfig<T> {
    pub fn new(
        alpha: T,
        score_threshold: T,
        history_depth: usize,
        coeffs: Vec<T>,
        variant: WeightingVariant,
    ) -> Result<Self> {
        let config = Self {
            alpha,
            score_threshold,
            history_depth,
            coeffs,
            variant,
        };
        config.validate()?;
        Ok(config)
    }

    /// `p = 4`, `κ = −1`, coefficients halving with age.
    pub fn with_defaults(alpha: T, variant: WeightingVariant) -> Self {
        Self {
            alpha,
            score_threshold: -T::one(),
            history_depth: 4,
            coeffs: default_coeffs(4),
            variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.score_threshold < T::zero()) || !self.score_threshold.is_finite() {
            return Err(Error::Config(format!(
                "score threshold must be negative and finite, got {}",
                self.score_threshold
            )));
        }
        if self.history_depth == 0 {
            return Err(Error::Config("history depth must be at least 1".into()));
        }
        if self.coeffs.len() != self.history_depth {
            return Err(Error::Config(format!(
                "expected {} score coefficients, got {}",
                self.history_depth,
                self.coeffs.len()
            )));
        }
        if self.coeffs.iter().any(|&c| !(c >= T::zero())) {
            return Err(Error::Config("score coefficients must be non-negative".into()));
        }
        let sum: T = self.coeffs.iter().copied().sum();
        if (sum - T::one()).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(4.0)) {
            return Err(Error::Config(format!("score coefficients must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// `c_j ∝ 2^{−j}`, normalized.
pub fn default_coeffs<T: Scalar>(depth: usize) -> Vec<T> {
    let raw: Vec<f64> = (0..depth).map(|j| 0.5f64.powi(j as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|c| T::lit(c / total)).collect()
}

/// The `depth + 1` most recent log-distances, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceHistory<T> {
    values: VecDeque<T>,
    depth: usize,
    recorded: u64,
}

impl<T: Scalar> DistanceHistory<T> {
    pub fn new(depth: usize) -> Self {
        Self {
            values: VecDeque::with_capacity(depth + 1),
            depth,
            recorded: 0,
        }
    }

    pub fn push(&mut self, u: T) {
        if self.values.len() == self.depth + 1 {
            self.values.pop_front();
        }
        self.values.push_back(u);
        self.recorded += 1;
    }

    /// Oldest first.
    pub fn values(&self) -> impl DoubleEndedIterator<Item = T> + ExactSizeIterator + '_ {
        self.values.iter().copied()
    }

    pub fn latest(&self) -> Option<T> {
        self.values.back().copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total entries ever recorded, including evicted ones.
    pub fn recorded(&self) -> u64 {
        self.recorded
    }
}

/// Appends `log(max(‖worker − master_estimate‖, 1e-12))`.
pub fn update_history<T: Scalar>(
    history: &mut DistanceHistory<T>,
    worker: &ParamVector<T>,
    master_estimate: &ParamVector<T>,
) -> Result<T> {
    worker.check_same_shape(master_estimate)?;
    let dist = worker.sub(master_estimate).norm();
    let u = dist.max(T::lit(DISTANCE_FLOOR)).ln();
    history.push(u);
    Ok(u)
}

/// Weighted sum of consecutive log-distance differences, newest first.
/// With fewer than `coeffs.len()` differences the missing terms count as
/// zero and the remaining coefficients are not renormalized.
pub fn raw_score<T: Scalar>(history: &DistanceHistory<T>, coeffs: &[T]) -> Result<T> {
    if history.len() < 2 {
        return Err(Error::InsufficientHistory(history.len()));
    }
    let newest_first: Vec<T> = history.values().rev().collect();
    Ok(newest_first
        .windows(2)
        .zip(coeffs)
        .map(|(w, &c)| c * (w[0] - w[1]))
        .sum())
}

/// Worker-side weight: 1 below `κ`, linear down to `α` at 0, `α` above.
pub fn map_h1<T: Scalar>(a: T, alpha: T, kappa: T) -> T {
    if a < kappa {
        T::one()
    } else if a <= T::zero() {
        T::one() + (T::one() - alpha) / kappa * (a - kappa)
    } else {
        alpha
    }
}

/// Master-side weight: 0 below `κ`, linear up to `α` at 0, `α` above.
pub fn map_h2<T: Scalar>(a: T, alpha: T, kappa: T) -> T {
    if a < kappa {
        T::zero()
    } else if a <= T::zero() {
        -(alpha / kappa) * a + alpha
    } else {
        alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPair<T> {
    /// Pull of the worker toward the master.
    pub h1: T,
    /// Pull of the master toward the worker.
    pub h2: T,
}

impl<T: Scalar> WeightPair<T> {
    pub fn symmetric(alpha: T) -> Self {
        Self { h1: alpha, h2: alpha }
    }

    /// Worker snapped to the master; master untouched.
    pub fn snap() -> Self {
        Self {
            h1: T::one(),
            h2: T::zero(),
        }
    }

    pub fn from_score(a: T, alpha: T, kappa: T) -> Self {
        Self {
            h1: map_h1(a, alpha, kappa),
            h2: map_h2(a, alpha, kappa),
        }
    }
}

/// `worker ← worker − h1·(worker − master)`, `master ← master + h2·(worker − master)`,
/// both using the pre-exchange difference.
pub fn elastic_exchange<T: Scalar>(
    worker: &mut ParamVector<T>,
    master: &mut ParamVector<T>,
    weights: WeightPair<T>,
) -> Result<()> {
    worker.check_same_shape(master)?;
    let unit = |h: T| h >= T::zero() && h <= T::one();
    if !unit(weights.h1) || !unit(weights.h2) {
        return Err(Error::Contract(format!(
            "exchange weights must lie in [0, 1], got ({}, {})",
            weights.h1, weights.h2
        )));
    }
    for (w, m) in worker.values_mut().iter_mut().zip(master.values_mut()) {
        let diff = *w - *m;
        *w -= weights.h1 * diff;
        *m += weights.h2 * diff;
    }
    Ok(())
}

/// Weight pair for the next exchange. `recovered` marks the first
/// successful exchange after at least one suppressed communication; only
/// the oracle variant reads it.
pub fn select_weights<T: Scalar>(
    config: &ElasticConfig<T>,
    history: &DistanceHistory<T>,
    recovered: bool,
) -> WeightPair<T> {
    match config.variant {
        WeightingVariant::Fixed => WeightPair::symmetric(config.alpha),
        WeightingVariant::Dynamic => match raw_score(history, &config.coeffs) {
            Ok(a) => WeightPair::from_score(a, config.alpha, config.score_threshold),
            Err(_) => WeightPair::symmetric(config.alpha),
        },
        WeightingVariant::Oracle if recovered => WeightPair::snap(),
        WeightingVariant::Oracle => WeightPair::symmetric(config.alpha),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(values: &[f64], depth: usize) -> DistanceHistory<f64> {
        let mut h = DistanceHistory::new(depth);
        values.iter().for_each(|&u| h.push(u));
        h
    }

    #[test]
    fn score_of_constant_history_is_zero() {
        assert_eq!(raw_score(&history(&[3.0, 3.0, 3.0], 2), &[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn score_worked_value() {
        let a = raw_score(&history(&[2.0, 1.0, 0.5], 2), &[0.7, 0.3]).unwrap();
        assert!((a - (-0.65)).abs() < 1e-15);
    }

    #[test]
    fn score_increasing_history_positive() {
        let a = raw_score(&history(&[0.1, 0.4, 0.5, 1.2, 1.3], 4), &default_coeffs(4)).unwrap();
        assert!(a > 0.0);
    }

    #[test]
    fn partial_history_not_renormalized() {
        // one difference available out of p = 3
        let a = raw_score(&history(&[1.0, 2.0], 3), &[0.5, 0.3, 0.2]).unwrap();
        assert_eq!(a, 0.5);
    }

    #[test]
    fn insufficient_history() {
        assert!(matches!(
            raw_score(&history(&[1.0], 2), &[0.5, 0.5]),
            Err(Error::InsufficientHistory(1))
        ));
    }

    #[test]
    fn h_maps_worked_values() {
        assert!((map_h1(-0.5f64, 0.1, -1.0) - 0.55).abs() < 1e-15);
        assert!((map_h2(-0.5f64, 0.1, -1.0) - 0.05).abs() < 1e-15);
        assert_eq!(map_h1(-1.0, 0.1, -1.0), 1.0);
        assert!((map_h1(0.0f64, 0.1, -1.0) - 0.1).abs() < 1e-15);
        assert_eq!(map_h2(-1.0, 0.1, -1.0), 0.0);
        assert_eq!(map_h2(0.0, 0.1, -1.0), 0.1);
        assert_eq!(map_h1(5.0, 0.1, -1.0), 0.1);
        assert_eq!(map_h2(5.0, 0.1, -1.0), 0.1);
        assert_eq!(map_h1(-7.0, 0.1, -1.0), 1.0);
        assert_eq!(map_h2(-7.0, 0.1, -1.0), 0.0);
    }

    #[test]
    fn exchange_worked_values() {
        let mut w = ParamVector::flat(vec![1.0]);
        let mut m = ParamVector::flat(vec![0.0]);
        elastic_exchange(&mut w, &mut m, WeightPair::symmetric(0.1)).unwrap();
        assert!((w.values()[0] - 0.9f64).abs() < 1e-15);
        assert!((m.values()[0] - 0.1f64).abs() < 1e-15);

        let mut w = ParamVector::flat(vec![3.0, -1.0]);
        let mut m = ParamVector::flat(vec![0.5, 2.0]);
        let m0 = m.clone();
        elastic_exchange(&mut w, &mut m, WeightPair::snap()).unwrap();
        assert_eq!(w, m0);
        assert_eq!(m, m0);
    }

    #[test]
    fn exchange_rejects_bad_weights_and_shapes() {
        let mut w = ParamVector::flat(vec![1.0]);
        let mut m = ParamVector::flat(vec![0.0]);
        assert!(elastic_exchange(&mut w, &mut m, WeightPair { h1: 1.5, h2: 0.0 }).is_err());
        let mut m2 = ParamVector::flat(vec![0.0, 0.0]);
        assert!(elastic_exchange(&mut w, &mut m2, WeightPair::symmetric(0.1)).is_err());
    }

    #[test]
    fn history_floor_and_log() {
        let mut h = DistanceHistory::new(2);
        let p = ParamVector::flat(vec![1.0, 2.0]);
        let u = update_history(&mut h, &p, &p).unwrap();
        assert_eq!(u, DISTANCE_FLOOR.ln());
        let e = std::f64::consts::E;
        let u = update_history(&mut h, &ParamVector::flat(vec![e, 0.0]), &ParamVector::flat(vec![0.0, 0.0])).unwrap();
        assert!((u - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ring_buffer_keeps_newest() {
        let p = 3;
        let h = history(&(0..p + 2).map(|i| i as f64).collect::<Vec<_>>(), p);
        assert_eq!(h.len(), p + 1);
        assert_eq!(h.values().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(h.recorded(), (p + 2) as u64);
    }

    #[test]
    fn weight_selection() {
        let mut cfg = ElasticConfig::with_defaults(0.1, WeightingVariant::Fixed);
        let falling = history(&[5.0, 3.0, 1.0, -1.0, -3.0], 4);
        assert_eq!(select_weights(&cfg, &falling, true), WeightPair::symmetric(0.1));

        cfg.variant = WeightingVariant::Dynamic;
        assert_eq!(select_weights(&cfg, &falling, false), WeightPair::snap());
        assert_eq!(select_weights(&cfg, &history(&[1.0], 4), false), WeightPair::symmetric(0.1));

        cfg.variant = WeightingVariant::Oracle;
        assert_eq!(select_weights(&cfg, &falling, true), WeightPair::snap());
        assert_eq!(select_weights(&cfg, &falling, false), WeightPair::symmetric(0.1));
    }

    #[test]
    fn config_validation() {
        let ok = ElasticConfig::new(0.1, -1.0, 2, vec![0.6, 0.4], WeightingVariant::Dynamic);
        assert!(ok.is_ok());
        assert!(ElasticConfig::new(0.0, -1.0, 2, vec![0.6, 0.4], WeightingVariant::Dynamic).is_err());
        assert!(ElasticConfig::new(0.1, 0.0, 2, vec![0.6, 0.4], WeightingVariant::Dynamic).is_err());
        assert!(ElasticConfig::new(0.1, -1.0, 2, vec![0.6, 0.5], WeightingVariant::Dynamic).is_err());
        assert!(ElasticConfig::new(0.1, -1.0, 2, vec![1.0], WeightingVariant::Dynamic).is_err());
        assert!(ElasticConfig::new(0.1, -1.0, 2, vec![1.2, -0.2], WeightingVariant::Dynamic).is_err());
        let c: Vec<f64> = default_coeffs(4);
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(c.windows(2).all(|w| w[0] > w[1]));
    }
}
