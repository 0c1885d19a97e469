//! Deterministic discrete-event simulation of asynchronous elastic-averaging
//! training with one master and `k` workers.
//!
//! Worker `j` runs `τ` local steps, then makes a communication attempt, and
//! repeats. Its schedule is offset by `j` ticks, so attempts from different
//! workers are interleaved and the master applies one exchange at a time in
//! event order. An attempt may be suppressed by the failure model; the worker
//! then keeps training on its own and its master snapshot goes stale. Round
//! `r` is complete once every worker has made its `r`-th attempt.

mod config;
mod event;
mod metrics;

pub use config::{default_overlap, FailureModel, Method, OptimizerKind, SimConfig};
pub use event::{EventKind, EventQueue, SimEvent};
pub use metrics::{RoundRecord, RunMetrics, WorkerRecord};

use crate::data::{Batch, Dataset, PartitionPlan};
use crate::elastic::{self, DistanceHistory};
use crate::error::{Error, Result};
use crate::model::Objective;
use crate::optim::{AdaHessianState, LocalOptimizer, SgdConfig, SgdState};
use crate::params::ParamVector;
use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;

/// Full-dataset loss and top-1 accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation<T> {
    pub loss: T,
    pub accuracy: Option<T>,
}

pub fn evaluate<T: Scalar, O: Objective<T> + ?Sized>(
    objective: &O,
    params: &ParamVector<T>,
    dataset: &Dataset<T>,
) -> Result<Evaluation<T>> {
    evaluate_batch(objective, params, &dataset.as_batch())
}

fn evaluate_batch<T: Scalar, O: Objective<T> + ?Sized>(
    objective: &O,
    params: &ParamVector<T>,
    batch: &Batch<T>,
) -> Result<Evaluation<T>> {
    Ok(Evaluation {
        loss: objective.loss(params, batch)?,
        accuracy: objective.accuracy(params, batch)?,
    })
}

#[derive(Debug, Clone)]
pub struct WorkerState<T> {
    pub params: ParamVector<T>,
    pub optimizer: LocalOptimizer<T>,
    pub history: DistanceHistory<T>,
    pub missed_comms: u64,
    /// Master parameters as of this worker's last successful exchange.
    pub last_master_snapshot: ParamVector<T>,
    pub local_steps: u64,
    pub comm_attempts: u64,
    failure_rng: StreamRng,
}

struct PendingRound<T> {
    records: Vec<Option<WorkerRecord<T>>>,
    filled: usize,
    tick: u64,
}

pub struct SimState<'a, T: Scalar, O: ?Sized> {
    config: SimConfig<T>,
    objective: &'a O,
    train: &'a Dataset<T>,
    train_batch: Batch<T>,
    test_batch: Batch<T>,
    plan: PartitionPlan,
    master: ParamVector<T>,
    master_version: u64,
    workers: Vec<WorkerState<T>>,
    queue: EventQueue,
    pending: Vec<PendingRound<T>>,
    completed: Vec<RoundRecord<T>>,
    suppressed_attempts: u64,
}

/// Seed of the partition and its batch streams.
pub fn partition_seed(master_seed: u64) -> u64 {
    rng::derive_seed(master_seed, 0, "partition")
}

/// Validates `config` and sets up the master, the workers (cloned from the
/// master) and the data partition.
pub fn build<'a, T: Scalar, O: Objective<T> + ?Sized>(
    config: SimConfig<T>,
    objective: &'a O,
    train: &'a Dataset<T>,
    test: &'a Dataset<T>,
) -> Result<SimState<'a, T, O>> {
    config.validate()?;
    let k = config.worker_count;
    let plan = PartitionPlan::new(
        train.len(),
        config.overlap_ratio,
        k,
        partition_seed(config.master_seed),
    )?;
    for j in 0..k {
        if config.batch_size > plan.shard(j).len() {
            return Err(Error::Config(format!(
                "batch size {} exceeds worker {j}'s shard of {}",
                config.batch_size,
                plan.shard(j).len()
            )));
        }
    }

    let master = objective.init_params();
    let shape = objective.shape();
    let mut workers = Vec::with_capacity(k);
    for j in 0..k {
        let optimizer = match config.method.optimizer() {
            OptimizerKind::Sgd => LocalOptimizer::Sgd(SgdState::new(
                SgdConfig {
                    learning_rate: config.sgd.learning_rate,
                    momentum: T::zero(),
                },
                shape.clone(),
            )?),
            OptimizerKind::MomentumSgd => {
                LocalOptimizer::Sgd(SgdState::new(config.sgd, shape.clone())?)
            }
            OptimizerKind::AdaHessian => LocalOptimizer::AdaHessian(AdaHessianState::new(
                config.adahessian,
                shape.clone(),
                rng::derive_seed(config.master_seed, j as u64, "hutchinson"),
            )?),
        };
        workers.push(WorkerState {
            params: master.clone(),
            optimizer,
            history: DistanceHistory::new(config.elastic.history_depth),
            missed_comms: 0,
            last_master_snapshot: master.clone(),
            local_steps: 0,
            comm_attempts: 0,
            failure_rng: rng::stream(config.master_seed, j as u64, "failure"),
        });
    }

    let mut queue = EventQueue::default();
    for j in 0..k {
        queue.schedule(j as u64, EventKind::LocalStep, j);
    }

    Ok(SimState {
        config,
        objective,
        train,
        train_batch: train.as_batch(),
        test_batch: test.as_batch(),
        plan,
        master,
        master_version: 0,
        workers,
        queue,
        pending: Vec::new(),
        completed: Vec::new(),
        suppressed_attempts: 0,
    })
}

impl<'a, T: Scalar, O: Objective<T> + ?Sized> SimState<'a, T, O> {
    pub fn config(&self) -> &SimConfig<T> {
        &self.config
    }

    pub fn master(&self) -> &ParamVector<T> {
        &self.master
    }

    /// Number of exchanges applied to the master.
    pub fn master_version(&self) -> u64 {
        self.master_version
    }

    pub fn workers(&self) -> &[WorkerState<T>] {
        &self.workers
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn run(&mut self) -> Result<RunMetrics<T>> {
        self.run_with(|_| Ok(()))
    }

    /// Runs to completion, handing every finished round to `on_round` as
    /// soon as it is recorded.
    pub fn run_with(
        &mut self,
        mut on_round: impl FnMut(&RoundRecord<T>) -> Result<()>,
    ) -> Result<RunMetrics<T>> {
        while let Some(event) = self.queue.pop() {
            match event.kind {
                EventKind::LocalStep => self.local_step(event)?,
                EventKind::CommAttempt => {
                    if let Some(record) = self.comm_attempt(event)? {
                        on_round(&record)?;
                    }
                }
            }
        }
        Ok(RunMetrics {
            method: self.config.method,
            hvp_mode: self.objective.hvp_mode(),
            rounds: self.completed.clone(),
            comm_attempts: self.workers.iter().map(|w| w.comm_attempts).sum(),
            suppressed_attempts: self.suppressed_attempts,
            local_steps: self.workers.iter().map(|w| w.local_steps).sum(),
            master_version: self.master_version,
        })
    }

    fn local_step(&mut self, event: SimEvent) -> Result<()> {
        let j = event.worker;
        let worker = &mut self.workers[j];
        let batch = crate::data::next_batch(
            &self.plan,
            self.train,
            j,
            self.config.batch_size,
            worker.local_steps,
        )?;
        worker
            .optimizer
            .step(self.objective, &mut worker.params, &batch)?;
        worker.local_steps += 1;
        if worker.local_steps.is_multiple_of(self.config.comm_period as u64) {
            self.queue.schedule(event.time + 1, EventKind::CommAttempt, j);
        } else {
            self.queue.schedule(event.time + 1, EventKind::LocalStep, j);
        }
        Ok(())
    }

    fn comm_attempt(&mut self, event: SimEvent) -> Result<Option<RoundRecord<T>>> {
        let j = event.worker;
        let cfg = &self.config;
        let worker = &mut self.workers[j];
        let attempt = worker.comm_attempts;
        worker.comm_attempts += 1;

        let record = if cfg.failure.suppress(&mut worker.failure_rng, attempt, j) {
            worker.missed_comms += 1;
            self.suppressed_attempts += 1;
            WorkerRecord {
                worker: j,
                tick: event.time,
                score: elastic::raw_score(&worker.history, &cfg.elastic.coeffs).ok(),
                h1: None,
                h2: None,
                missed_comms: worker.missed_comms,
                suppressed: true,
            }
        } else {
            let estimate = if cfg.oracle_master_estimate {
                &self.master
            } else {
                &worker.last_master_snapshot
            };
            elastic::update_history(&mut worker.history, &worker.params, estimate)?;
            let score = elastic::raw_score(&worker.history, &cfg.elastic.coeffs).ok();
            let weights =
                elastic::select_weights(&cfg.elastic, &worker.history, worker.missed_comms > 0);
            elastic::elastic_exchange(&mut worker.params, &mut self.master, weights)?;
            self.master_version += 1;
            worker.last_master_snapshot.clone_from(&self.master);
            let missed = worker.missed_comms;
            worker.missed_comms = 0;
            WorkerRecord {
                worker: j,
                tick: event.time,
                score,
                h1: Some(weights.h1),
                h2: Some(weights.h2),
                missed_comms: missed,
                suppressed: false,
            }
        };

        if worker.comm_attempts < cfg.rounds as u64 {
            self.queue.schedule(event.time, EventKind::LocalStep, j);
        }
        self.file_record(attempt as usize, event.time, record)
    }

    /// Stores a worker's record under its round and closes the round once
    /// all workers have reported.
    fn file_record(
        &mut self,
        round_index: usize,
        tick: u64,
        record: WorkerRecord<T>,
    ) -> Result<Option<RoundRecord<T>>> {
        let k = self.config.worker_count;
        let offset = self.completed.len();
        let slot = round_index - offset;
        while self.pending.len() <= slot {
            self.pending.push(PendingRound {
                records: vec![None; k],
                filled: 0,
                tick: 0,
            });
        }
        let pending = &mut self.pending[slot];
        let j = record.worker;
        pending.records[j] = Some(record);
        pending.filled += 1;
        pending.tick = pending.tick.max(tick);
        if slot != 0 || pending.filled < k {
            return Ok(None);
        }

        let done = self.pending.remove(0);
        let master_loss = self.objective.loss(&self.master, &self.train_batch)?;
        if !master_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "master training loss is {master_loss} after round {}",
                round_index + 1
            )));
        }
        let test_accuracy = self.objective.accuracy(&self.master, &self.test_batch)?;
        let record = RoundRecord {
            round: round_index + 1,
            tick: done.tick,
            master_loss,
            test_accuracy,
            workers: done.records.into_iter().map(|r| r.expect("round filled")).collect(),
            master_version: self.master_version,
        };
        self.completed.push(record.clone());
        Ok(Some(record))
    }
}
