use crate::model::HvpMode;
use crate::scalar::Scalar;

use super::Method;

/// One worker's communication attempt within a round.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerRecord<T> {
    pub worker: usize,
    /// Simulation tick of the attempt.
    pub tick: u64,
    /// Raw score at the attempt, when the history held two or more entries.
    pub score: Option<T>,
    /// Applied weights; `None` when the attempt was suppressed.
    pub h1: Option<T>,
    pub h2: Option<T>,
    /// Consecutive suppressed attempts before this one, plus this one if it
    /// was itself suppressed.
    pub missed_comms: u64,
    pub suppressed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord<T> {
    /// 1-based.
    pub round: usize,
    /// Tick at which the last worker finished its attempt for this round.
    pub tick: u64,
    /// Master loss over the full training set.
    pub master_loss: T,
    /// Master top-1 accuracy on the test set (classifiers only).
    pub test_accuracy: Option<T>,
    pub workers: Vec<WorkerRecord<T>>,
    /// Exchanges applied to the master so far.
    pub master_version: u64,
}

impl<T: Scalar> RoundRecord<T> {
    pub fn suppressed_count(&self) -> usize {
        self.workers.iter().filter(|w| w.suppressed).count()
    }

    /// Mean applied `(h1, h2)` over the workers that exchanged this round,
    /// or `None` if every attempt was suppressed.
    pub fn mean_weights(&self) -> Option<(T, T)> {
        let applied: Vec<(T, T)> = self
            .workers
            .iter()
            .filter_map(|w| Some((w.h1?, w.h2?)))
            .collect();
        if applied.is_empty() {
            return None;
        }
        let n = T::from_usize_lossy(applied.len());
        let (s1, s2) = applied
            .iter()
            .fold((T::zero(), T::zero()), |(a, b), &(x, y)| (a + x, b + y));
        Some((s1 / n, s2 / n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics<T> {
    pub method: Method,
    pub hvp_mode: HvpMode,
    pub rounds: Vec<RoundRecord<T>>,
    pub comm_attempts: u64,
    pub suppressed_attempts: u64,
    pub local_steps: u64,
    pub master_version: u64,
}

impl<T: Scalar> RunMetrics<T> {
    pub fn final_round(&self) -> Option<&RoundRecord<T>> {
        self.rounds.last()
    }

    /// Every raw score recorded across all rounds and workers.
    pub fn scores(&self) -> impl Iterator<Item = T> + '_ {
        self.rounds
            .iter()
            .flat_map(|r| r.workers.iter().filter_map(|w| w.score))
    }
}
