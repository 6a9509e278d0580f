use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot schedule at {at}: clock is already at {now}")]
pub struct TimeInPast {
    pub at: SimTime,
    pub now: SimTime,
}

struct Entry<E> {
    time: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // Reversed so the max-heap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Future-event list executed in `(time, seq)` order. `seq` increases with
/// every insertion, so same-time events run in the order scheduled.
pub struct Scheduler<E> {
    heap: BinaryHeap<Entry<E>>,
    now: SimTime,
    next_seq: u64,
    executed: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            executed: 0,
        }
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

    /// Events popped so far.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    /// Returns the sequence number assigned to the event.
    pub fn schedule(&mut self, at: SimTime, event: E) -> Result<u64, TimeInPast> {
        if at < self.now {
            return Err(TimeInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry {
            time: at,
            seq,
            event,
        });
        Ok(seq)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    /// Removes the next event and advances the clock to it.
    pub fn pop(&mut self) -> Option<(SimTime, E)> {
        let e = self.heap.pop()?;
        debug_assert!(e.time >= self.now);
        self.now = e.time;
        self.executed += 1;
        Some((e.time, e.event))
    }

    /// Moves the clock forward without running anything.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_time_runs_in_insertion_order() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_millis(1), 'A').unwrap();
        s.schedule(SimTime::from_millis(1), 'B').unwrap();
        s.schedule(SimTime::ZERO, 'C').unwrap();
        let order: Vec<_> = std::iter::from_fn(|| s.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, ['C', 'A', 'B']);
    }

    #[test]
    fn now_event_runs_after_earlier_seq() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_millis(2), 1).unwrap();
        s.schedule(SimTime::from_millis(2), 2).unwrap();
        assert_eq!(s.pop(), Some((SimTime::from_millis(2), 1)));
        s.schedule(s.now(), 3).unwrap();
        assert_eq!(s.pop().unwrap().1, 2);
        assert_eq!(s.pop().unwrap().1, 3);
    }

    #[test]
    fn past_is_rejected() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_secs(1), ()).unwrap();
        s.pop();
        assert_eq!(
            s.schedule(SimTime::from_millis(999), ()),
            Err(TimeInPast {
                at: SimTime::from_millis(999),
                now: SimTime::from_secs(1)
            })
        );
    }
}
