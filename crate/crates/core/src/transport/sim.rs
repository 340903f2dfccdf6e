use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;
use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::format_secs;
use crate::impairment::{Channel, StageKind};
use crate::rtp::RtpPacket;
use crate::session::{Endpoint, Flow, Outbox, Role, Timer};

#[derive(Debug)]
enum SimEvent {
    Deliver { flow: Flow, bytes: Vec<u8> },
    Timer { role: Role, timer: Timer },
}

#[derive(Debug)]
struct Scheduled {
    at: Duration,
    ordinal: u64,
    event: SimEvent,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.ordinal) == (other.at, other.ordinal)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.ordinal).cmp(&(other.at, other.ordinal))
    }
}

/// Virtual time plus the pending event queue. Events at equal times fire in
/// the order they were scheduled.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: Duration,
    queue: BinaryHeap<Reverse<Scheduled>>,
    next_ordinal: u64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Duration {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    fn schedule(&mut self, at: Duration, event: SimEvent) {
        let at = at.max(self.now);
        self.queue.push(Reverse(Scheduled {
            at,
            ordinal: self.next_ordinal,
            event,
        }));
        self.next_ordinal += 1;
    }

    fn pop(&mut self) -> Option<(Duration, SimEvent)> {
        let Reverse(s) = self.queue.pop()?;
        debug_assert!(s.at >= self.now);
        self.now = s.at;
        Some((s.at, s.event))
    }
}

/// Impairment for each direction. RTP and RTCP from the sender share the
/// forward channel, as they share an egress interface.
#[derive(Debug, Clone)]
pub struct SimChannels {
    pub forward: Channel,
    pub reverse: Channel,
}

impl SimChannels {
    pub fn new(forward: Channel) -> Self {
        SimChannels {
            forward,
            reverse: Channel::identity(),
        }
    }

    pub fn identity() -> Self {
        Self::new(Channel::identity())
    }
}

/// One packet's passage through a channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub ordinal: u64,
    pub flow: Flow,
    pub inject: Duration,
    pub bytes: usize,
    pub rtp_seq: Option<u16>,
    pub rtp_timestamp: Option<u32>,
    pub stages: Vec<(StageKind, Duration)>,
    pub deliver: Option<Duration>,
    pub dropped_by: Option<StageKind>,
}

impl TraceRecord {
    pub fn is_dropped(&self) -> bool {
        self.deliver.is_none()
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    n: u64,
    flow: &'a str,
    inject: String,
    bytes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    seq: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ts: Option<u32>,
    stages: Vec<(StageKind, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    deliver: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    drop: Option<StageKind>,
}

/// Writes the channel decision trace, one JSON object per line.
pub fn write_trace<W: Write>(trace: &[TraceRecord], mut out: W) -> Result<()> {
    for r in trace {
        let line = TraceLine {
            n: r.ordinal,
            flow: r.flow.name(),
            inject: format_secs(r.inject),
            bytes: r.bytes,
            seq: r.rtp_seq,
            ts: r.rtp_timestamp,
            stages: r.stages.iter().map(|(k, t)| (*k, format_secs(*t))).collect(),
            deliver: r.deliver.map(format_secs),
            drop: r.dropped_by,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub end_time: Duration,
    pub events: u64,
    pub trace: Vec<TraceRecord>,
}

impl SimOutcome {
    /// RTP packets of one flow that the channel dropped.
    pub fn rtp_drops(&self, flow: Flow) -> impl Iterator<Item = &TraceRecord> {
        self.trace.iter().filter(move |r| r.flow == flow && r.is_dropped())
    }
}

struct Sim<'a> {
    clock: &'a mut VirtualClock,
    channels: &'a mut SimChannels,
    trace: Vec<TraceRecord>,
}

impl Sim<'_> {
    fn flush(&mut self, role: Role, out: &mut Outbox) -> Result<()> {
        let now = self.clock.now();
        for (at, timer) in out.timers.drain(..) {
            self.clock.schedule(at, SimEvent::Timer { role, timer });
        }
        for (flow, bytes) in out.datagrams.drain(..) {
            let channel = match role {
                Role::Sender => &mut self.channels.forward,
                Role::Receiver => &mut self.channels.reverse,
            };
            let decision = channel.offer(bytes.len(), now)?;
            let rtp = matches!(flow, Flow::Rtp(_))
                .then(|| RtpPacket::decode(&bytes).ok())
                .flatten();
            self.trace.push(TraceRecord {
                ordinal: self.trace.len() as u64,
                flow,
                inject: now,
                bytes: bytes.len(),
                rtp_seq: rtp.as_ref().map(|p| p.sequence),
                rtp_timestamp: rtp.as_ref().map(|p| p.timestamp),
                stages: decision.stages,
                deliver: decision.deliver_at,
                dropped_by: decision.dropped_by,
            });
            if let Some(at) = decision.deliver_at {
                self.clock.schedule(at, SimEvent::Deliver { flow, bytes });
            }
        }
        Ok(())
    }
}

/// Runs sender and receiver against each other in virtual time until both
/// are finished.
pub fn sim_run(
    sender: &mut dyn Endpoint,
    receiver: &mut dyn Endpoint,
    channels: &mut SimChannels,
    clock: &mut VirtualClock,
) -> Result<SimOutcome> {
    let mut sim = Sim {
        clock,
        channels,
        trace: Vec::new(),
    };
    let mut out = Outbox::default();
    let mut events = 0u64;

    let start = sim.clock.now();
    receiver.start(start, &mut out);
    sim.flush(Role::Receiver, &mut out)?;
    sender.start(start, &mut out);
    sim.flush(Role::Sender, &mut out)?;

    while !(sender.is_finished() && receiver.is_finished()) {
        let Some((now, event)) = sim.clock.pop() else {
            return Err(Error::Deadlock(format!(
                "event queue empty at {}: {}; {}",
                format_secs(sim.clock.now()),
                sender.describe(),
                receiver.describe()
            )));
        };
        events += 1;
        let (role, endpoint): (Role, &mut dyn Endpoint) = match &event {
            SimEvent::Deliver { flow, .. } => match flow.destination() {
                Role::Sender => (Role::Sender, &mut *sender),
                Role::Receiver => (Role::Receiver, &mut *receiver),
            },
            SimEvent::Timer { role: Role::Sender, .. } => (Role::Sender, &mut *sender),
            SimEvent::Timer { role: Role::Receiver, .. } => (Role::Receiver, &mut *receiver),
        };
        if endpoint.is_finished() {
            continue;
        }
        match event {
            SimEvent::Deliver { flow, bytes } => endpoint.on_datagram(now, flow, &bytes, &mut out),
            SimEvent::Timer { timer, .. } => endpoint.on_timer(now, timer, &mut out),
        }
        sim.flush(role, &mut out)?;
    }

    Ok(SimOutcome {
        end_time: sim.clock.now(),
        events,
        trace: sim.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_times_fire_in_insertion_order() {
        let mut clock = VirtualClock::new();
        let t = Duration::from_millis(5);
        for i in 0..5u8 {
            clock.schedule(t, SimEvent::Timer {
                role: Role::Sender,
                timer: Timer::Bye(i),
            });
        }
        clock.schedule(Duration::from_millis(1), SimEvent::Timer {
            role: Role::Sender,
            timer: Timer::Report,
        });
        let mut order = Vec::new();
        while let Some((at, SimEvent::Timer { timer, .. })) = clock.pop() {
            order.push((at, timer));
        }
        assert_eq!(order[0], (Duration::from_millis(1), Timer::Report));
        let byes: Vec<_> = order[1..].iter().map(|(_, t)| *t).collect();
        assert_eq!(byes, (0..5).map(Timer::Bye).collect::<Vec<_>>());
    }

    #[test]
    fn past_events_are_clamped_to_now() {
        let mut clock = VirtualClock::new();
        clock.schedule(Duration::from_secs(2), SimEvent::Timer {
            role: Role::Sender,
            timer: Timer::Report,
        });
        clock.pop();
        clock.schedule(Duration::from_secs(1), SimEvent::Timer {
            role: Role::Sender,
            timer: Timer::Report,
        });
        assert_eq!(clock.pop().unwrap().0, Duration::from_secs(2));
    }

    struct Stuck;

    impl Endpoint for Stuck {
        fn start(&mut self, _: Duration, _: &mut Outbox) {}
        fn on_datagram(&mut self, _: Duration, _: Flow, _: &[u8], _: &mut Outbox) {}
        fn on_timer(&mut self, _: Duration, _: Timer, _: &mut Outbox) {}
        fn is_finished(&self) -> bool {
            false
        }
        fn describe(&self) -> String {
            "stuck endpoint".into()
        }
    }

    #[test]
    fn empty_queue_with_unfinished_endpoint_is_a_deadlock() {
        let err = sim_run(&mut Stuck, &mut Stuck, &mut SimChannels::identity(), &mut VirtualClock::new())
            .unwrap_err();
        match err {
            Error::Deadlock(msg) => assert!(msg.contains("stuck endpoint")),
            other => panic!("{other:?}"),
        }
    }
}
