use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    LocalStep,
    CommAttempt,
}

/// A scheduled worker action. Events are totally ordered by
/// `(time, worker, sequence)`, so replay order never depends on insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimEvent {
    /// Abstract tick; one tick is one local step.
    pub time: u64,
    pub kind: EventKind,
    pub worker: usize,
    pub sequence: u64,
}

impl SimEvent {
    fn key(&self) -> (u64, usize, u64) {
        (self.time, self.worker, self.sequence)
    }
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue of events with a monotone sequence counter.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<std::cmp::Reverse<SimEvent>>,
    next_sequence: u64,
}

impl EventQueue {
    pub fn schedule(&mut self, time: u64, kind: EventKind, worker: usize) {
        let event = SimEvent {
            time,
            kind,
            worker,
            sequence: self.next_sequence,
        };
        self.next_sequence += 1;
        self.heap.push(std::cmp::Reverse(event));
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop().map(|r| r.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
