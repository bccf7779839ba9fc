//! Timestamped event queue with per-channel FIFO delivery.

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use crate::error::SimError;
use crate::message::Message;
use crate::types::{CoreId, Cycle, Endpoint};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Payload {
    Message(Message),
    /// Local wake-up of a core (compute or backoff finished).
    Timer,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub payload: Payload,
    /// Position within its channel; `None` for timers.
    channel_seq: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
struct ChannelState {
    last_at: Cycle,
    sent: u64,
    delivered: u64,
}

/// Pending events ordered by (deliver-at, global send sequence number).
#[derive(Clone, Debug, Default)]
pub struct EventQueue {
    now: Cycle,
    next_seq: u64,
    pending: BTreeMap<(Cycle, u64), Event>,
    channels: BTreeMap<(Endpoint, Endpoint), ChannelState>,
    scheduled: u64,
    delivered: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Cycle {
        self.now
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    /// Total events ever scheduled and delivered.
    pub fn counts(&self) -> (u64, u64) {
        (self.scheduled, self.delivered)
    }

    /// Enqueue `msg` on the (src, dst) channel for delivery at `at`.
    ///
    /// A message never overtakes an earlier one on the same channel: the
    /// effective delivery cycle is clamped to the channel's last delivery and
    /// equal cycles are ordered by send sequence. Returns the effective cycle.
    pub fn schedule(
        &mut self,
        at: Cycle,
        src: Endpoint,
        dst: Endpoint,
        msg: Message,
    ) -> Result<Cycle, SimError> {
        if at < self.now {
            return Err(SimError::ScheduledInPast { at, now: self.now });
        }
        let chan = self.channels.entry((src, dst)).or_default();
        let at = at.max(chan.last_at);
        chan.last_at = at;
        let channel_seq = chan.sent;
        chan.sent += 1;
        self.push(at, Event { src, dst, payload: Payload::Message(msg), channel_seq: Some(channel_seq) });
        Ok(at)
    }

    /// Schedule relative to the current cycle.
    pub fn send(
        &mut self,
        src: Endpoint,
        dst: Endpoint,
        msg: Message,
        latency: u64,
    ) -> Result<Cycle, SimError> {
        self.schedule(self.now + latency, src, dst, msg)
    }

    pub fn schedule_timer(&mut self, at: Cycle, core: CoreId) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::ScheduledInPast { at, now: self.now });
        }
        let ep = Endpoint::Core(core);
        self.push(at, Event { src: ep, dst: ep, payload: Payload::Timer, channel_seq: None });
        Ok(())
    }

    fn push(&mut self, at: Cycle, event: Event) {
        self.pending.insert((at, self.next_seq), event);
        self.next_seq += 1;
        self.scheduled += 1;
    }

    pub fn next_time(&self) -> Option<Cycle> {
        self.pending.keys().next().map(|(at, _)| *at)
    }

    pub fn advance_to(&mut self, t: Cycle) {
        assert!(t >= self.now, "clock moved backwards");
        self.now = t;
    }

    /// Pop the next event due at the current cycle, checking channel order.
    pub fn pop_due(&mut self) -> Result<Option<Event>, SimError> {
        let Some(entry) = self.pending.first_entry() else {
            return Ok(None);
        };
        if entry.key().0 > self.now {
            return Ok(None);
        }
        let event = entry.remove();
        if let Some(seq) = event.channel_seq {
            let chan = self.channels.get_mut(&(event.src, event.dst)).expect("known channel");
            if seq != chan.delivered {
                return Err(SimError::ChannelOrder { src: event.src, dst: event.dst });
            }
            chan.delivered += 1;
        }
        self.delivered += 1;
        Ok(Some(event))
    }

    /// Shift the clock to zero and renumber sequence counters, preserving
    /// every relative order. Returns the number of cycles removed.
    pub fn rebase(&mut self) -> u64 {
        let shift = self.now.0;
        let pending = std::mem::take(&mut self.pending);
        self.channels.retain(|_, c| c.sent > c.delivered);
        for c in self.channels.values_mut() {
            c.last_at = Cycle(c.last_at.0.saturating_sub(shift));
            c.sent -= c.delivered;
        }
        for (i, ((at, _), mut ev)) in pending.into_iter().enumerate() {
            if let Some(seq) = ev.channel_seq.as_mut() {
                *seq -= self.channels[&(ev.src, ev.dst)].delivered;
            }
            self.pending.insert((Cycle(at.0 - shift), i as u64), ev);
        }
        for c in self.channels.values_mut() {
            c.delivered = 0;
        }
        self.next_seq = self.pending.len() as u64;
        self.now = Cycle::ZERO;
        shift
    }

    pub fn pending(&self) -> impl Iterator<Item = (Cycle, &Event)> {
        self.pending.iter().map(|((at, _), ev)| (*at, ev))
    }
}

/// Hashes only the behaviour-relevant state: relative delivery times, order
/// and channel contents. Statistics are excluded.
impl Hash for EventQueue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for ((at, _), ev) in &self.pending {
            (at.0 - self.now.0.min(at.0)).hash(state);
            ev.src.hash(state);
            ev.dst.hash(state);
            ev.payload.hash(state);
        }
        for (key, c) in &self.channels {
            if c.sent > c.delivered {
                key.hash(state);
                c.last_at.0.saturating_sub(self.now.0).hash(state);
            }
        }
    }
}
