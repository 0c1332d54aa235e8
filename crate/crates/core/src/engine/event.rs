//! Timestamped events and the deterministic event queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::Ps;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// Photon that passed the source-level efficiency bound. `gen` tags the
    /// photon stream instance so that rescheduled streams drop stale arrivals.
    Photon { gen: u32 },
    DarkCarrier { gen: u32 },
    TrapRelease,
    IntensityChange { new_rate: f64 },
    SampleTick,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: Ps,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Priority queue popping events in `(time, seq)` order; `seq` is assigned on
/// insertion, so simultaneous events leave in insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: Ps, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
