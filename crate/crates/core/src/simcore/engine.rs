use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{EventKind, SimEvent, SimTime};
use crate::{Error, Result};

/// Pending events ordered by `(time, seq)`.
///
/// `seq` is handed out in scheduling order, so two events at the same
/// instant dispatch in the order they were scheduled regardless of kind.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<SimEvent>>,
    now: SimTime,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueue `kind` at `time`, returning the assigned sequence number.
    pub fn schedule(&mut self, time: SimTime, kind: EventKind) -> Result<u64> {
        if time < self.now {
            return Err(Error::EventInPast {
                at: time,
                now: self.now,
                kind: kind.name(),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(SimEvent { time, seq, kind }));
        Ok(seq)
    }

    pub fn schedule_now(&mut self, kind: EventKind) -> Result<u64> {
        self.schedule(self.now, kind)
    }

    fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    fn pop(&mut self) -> Option<SimEvent> {
        let Reverse(ev) = self.heap.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        Some(ev)
    }
}

/// Receives every dispatched event in order.
pub trait Handler {
    fn handle(&mut self, event: &SimEvent, queue: &mut EventQueue) -> Result<()>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSummary {
    pub dispatched: u64,
    pub final_clock: SimTime,
    /// Events still queued past `until`.
    pub remaining: usize,
}

#[derive(Debug, Default)]
pub struct Engine {
    pub queue: EventQueue,
    dispatched: u64,
}

impl Engine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn schedule(&mut self, time: SimTime, kind: EventKind) -> Result<u64> {
        self.queue.schedule(time, kind)
    }

    /// Dispatch events until the queue drains or the next event lies past
    /// `until`. A `SimEnd` event stops the loop after it is handled.
    pub fn run<H: Handler>(
        &mut self,
        handler: &mut H,
        until: Option<SimTime>,
    ) -> Result<RunSummary> {
        let start = self.dispatched;
        while let Some(t) = self.queue.peek_time() {
            if until.is_some_and(|u| t > u) {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            self.dispatched += 1;
            handler.handle(&ev, &mut self.queue)?;
            if ev.kind == EventKind::SimEnd {
                break;
            }
        }
        Ok(RunSummary {
            dispatched: self.dispatched - start,
            final_clock: self.queue.now(),
            remaining: self.queue.len(),
        })
    }
}
