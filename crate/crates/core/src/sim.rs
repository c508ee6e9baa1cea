// SPDX-License-Identifier: Apache-2.0
//! Discrete-event primitives: simulated time, the event queue, packets,
//! per-link counters and the event log.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Sub};

use thiserror::Error;

use crate::addr::Addr;

/// Simulated time in milliseconds. Also used for durations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1000)
    }

    pub const fn as_millis(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

macro_rules! name_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl PartialEq<&str> for $name {
            fn eq(&self, other: &&str) -> bool {
                self.0 == *other
            }
        }
    };
}

name_type!(
    /// Symbolic node name, e.g. `R1` or `U2`.
    NodeId
);
name_type!(
    /// Interface name, unique within its node, e.g. `sis0`.
    IfId
);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot schedule at {at}: current time is {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
    #[error("interface {node}:{iface} is administratively down")]
    IfaceDown { node: NodeId, iface: IfId },
    #[error("interface {node}:{iface} is not attached to a link")]
    NotAttached { node: NodeId, iface: IfId },
    #[error("refusing to transmit a packet with ttl 0")]
    TtlExpired,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("interface {node}:{iface} is already attached")]
    AlreadyAttached { node: NodeId, iface: IfId },
}

/// Handle to a queued event; used for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle {
    at: SimTime,
    seq: u64,
}

impl EventHandle {
    pub fn at(&self) -> SimTime {
        self.at
    }
}

/// Time-ordered event queue. Ties are broken by insertion order.
#[derive(Debug, Clone)]
pub struct EventQueue<E> {
    now: SimTime,
    next_seq: u64,
    pending: BTreeMap<(SimTime, u64), E>,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue { now: SimTime::ZERO, next_seq: 0, pending: BTreeMap::new() }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn schedule(&mut self, at: SimTime, event: E) -> Result<EventHandle, SimError> {
        if at < self.now {
            return Err(SimError::SchedulingInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.insert((at, seq), event);
        Ok(EventHandle { at, seq })
    }

    /// Returns the event if it was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> Option<E> {
        self.pending.remove(&(handle.at, handle.seq))
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.pending.keys().next().map(|(t, _)| *t)
    }

    /// Pops the next event due at or before `horizon`, advancing the clock.
    pub fn pop_until(&mut self, horizon: SimTime) -> Option<(SimTime, E)> {
        let (&(at, seq), _) = self.pending.iter().next()?;
        if at > horizon {
            return None;
        }
        let ev = self.pending.remove(&(at, seq))?;
        self.now = at;
        Some((at, ev))
    }

    /// Moves the clock forward without dispatching anything.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (SimTime, &E)> {
        self.pending.iter().map(|((t, _), e)| (*t, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Proto {
    DataUdp,
    Igmp,
    Pim,
}

impl Proto {
    pub fn is_control(self) -> bool {
        !matches!(self, Proto::DataUdp)
    }

    fn code(self) -> u8 {
        match self {
            Proto::Igmp => 2,
            Proto::DataUdp => 17,
            Proto::Pim => 103,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            2 => Some(Proto::Igmp),
            17 => Some(Proto::DataUdp),
            103 => Some(Proto::Pim),
            _ => None,
        }
    }
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Proto::DataUdp => "udp",
            Proto::Igmp => "igmp",
            Proto::Pim => "pim",
        })
    }
}

/// A simulated datagram. `payload_len` is the accounted size; `payload`
/// holds whatever bytes the sender chose to materialize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub src: Addr,
    pub dst: Addr,
    pub ttl: u8,
    pub proto: Proto,
    pub dst_port: u16,
    pub payload_len: u32,
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn control(src: Addr, dst: Addr, proto: Proto, payload: Vec<u8>) -> Self {
        Packet { src, dst, ttl: 1, proto, dst_port: 0, payload_len: payload.len() as u32, payload }
    }

    /// Data packet whose payload carries a big-endian sequence number.
    pub fn data(src: Addr, dst: Addr, ttl: u8, dst_port: u16, payload_len: u32, seq: u64) -> Self {
        Packet { src, dst, ttl, proto: Proto::DataUdp, dst_port, payload_len, payload: seq.to_be_bytes().to_vec() }
    }

    pub fn seq(&self) -> Option<u64> {
        let b: [u8; 8] = self.payload.get(..8)?.try_into().ok()?;
        Some(u64::from_be_bytes(b))
    }

    /// Serializes the packet for tunnelling inside a Register message.
    /// Layout: src(4) dst(4) ttl(1) proto(1) port(2) payload_len(4)
    /// carried_len(2) payload(carried_len).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + self.payload.len());
        out.extend_from_slice(&self.src.0.to_be_bytes());
        out.extend_from_slice(&self.dst.0.to_be_bytes());
        out.push(self.ttl);
        out.push(self.proto.code());
        out.extend_from_slice(&self.dst_port.to_be_bytes());
        out.extend_from_slice(&self.payload_len.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Option<Packet> {
        if b.len() < 18 {
            return None;
        }
        let u32_at = |i: usize| u32::from_be_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
        let carried = u16::from_be_bytes([b[16], b[17]]) as usize;
        if b.len() != 18 + carried {
            return None;
        }
        Some(Packet {
            src: Addr(u32_at(0)),
            dst: Addr(u32_at(4)),
            ttl: b[8],
            proto: Proto::from_code(b[9])?,
            dst_port: u16::from_be_bytes([b[10], b[11]]),
            payload_len: u32_at(12),
            payload: b[18..].to_vec(),
        })
    }
}

/// One end of a link.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub node: NodeId,
    pub iface: IfId,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node, self.iface)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub usize);

/// Direction of travel over a link: `Forward` is from endpoint `a` to `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dir {
    Forward,
    Reverse,
}

impl Dir {
    pub fn index(self) -> usize {
        match self {
            Dir::Forward => 0,
            Dir::Reverse => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DirCounters {
    pub data_packets: u64,
    pub control_packets: u64,
    pub bytes: u64,
    pub received: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CounterSnapshot {
    pub at: SimTime,
    pub forward: DirCounters,
    pub reverse: DirCounters,
}

impl CounterSnapshot {
    pub fn dir(&self, d: Dir) -> &DirCounters {
        match d {
            Dir::Forward => &self.forward,
            Dir::Reverse => &self.reverse,
        }
    }
}

/// A loss-free, in-order point-to-point link.
#[derive(Debug, Clone)]
pub struct Link {
    pub name: String,
    pub a: Endpoint,
    pub b: Endpoint,
    pub delay: SimTime,
    counters: [DirCounters; 2],
    data_tx: [Vec<SimTime>; 2],
}

impl Link {
    pub const DEFAULT_DELAY: SimTime = SimTime(1);

    pub fn new(name: impl Into<String>, a: Endpoint, b: Endpoint, delay: SimTime) -> Self {
        Link { name: name.into(), a, b, delay, counters: Default::default(), data_tx: Default::default() }
    }

    pub fn endpoint(&self, side: Dir) -> &Endpoint {
        match side {
            Dir::Forward => &self.a,
            Dir::Reverse => &self.b,
        }
    }

    /// The far end for a packet travelling in `dir`.
    pub fn receiver(&self, dir: Dir) -> &Endpoint {
        match dir {
            Dir::Forward => &self.b,
            Dir::Reverse => &self.a,
        }
    }

    pub(crate) fn count_tx(&mut self, dir: Dir, pkt: &Packet, now: SimTime) {
        let c = &mut self.counters[dir.index()];
        if pkt.proto.is_control() {
            c.control_packets += 1;
        } else {
            c.data_packets += 1;
            self.data_tx[dir.index()].push(now);
        }
        c.bytes += u64::from(pkt.payload_len);
    }

    pub(crate) fn count_rx(&mut self, dir: Dir) {
        self.counters[dir.index()].received += 1;
    }

    pub fn snapshot(&self, at: SimTime) -> CounterSnapshot {
        CounterSnapshot { at, forward: self.counters[0], reverse: self.counters[1] }
    }

    /// Data packets put on the link in `dir` during `[from, until)`.
    pub fn data_tx_between(&self, dir: Dir, from: SimTime, until: SimTime) -> u64 {
        let v = &self.data_tx[dir.index()];
        let lo = v.partition_point(|t| *t < from);
        let hi = v.partition_point(|t| *t < until);
        hi.saturating_sub(lo) as u64
    }

    pub fn data_tx_times(&self, dir: Dir) -> &[SimTime] {
        &self.data_tx[dir.index()]
    }
}

/// One line of the event log: `<ticks> <node> <kind> <detail…>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub time: SimTime,
    pub node: String,
    pub kind: String,
    pub detail: String,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.time, self.node, self.kind)?;
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        Ok(())
    }
}

/// Renders records one per line.
pub fn render_log(records: &[LogRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_orders_by_time_then_insertion() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(5), "b").unwrap();
        q.schedule(SimTime(1), "a").unwrap();
        q.schedule(SimTime(5), "c").unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.pop_until(SimTime(100)).map(|(_, e)| e)).collect();
        assert_eq!(order, vec!["a", "b", "c"]);
        assert_eq!(q.now(), SimTime(5));
    }

    #[test]
    fn cancel_prevents_dispatch() {
        let mut q = EventQueue::new();
        let h = q.schedule(SimTime(3), 1).unwrap();
        q.schedule(SimTime(4), 2).unwrap();
        assert_eq!(q.cancel(h), Some(1));
        assert_eq!(q.cancel(h), None);
        assert_eq!(q.pop_until(SimTime(10)), Some((SimTime(4), 2)));
        assert!(q.is_empty());
    }

    #[test]
    fn scheduling_in_past_fails() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(10), ()).unwrap();
        q.pop_until(SimTime(10));
        assert_eq!(q.schedule(SimTime(9), ()), Err(SimError::SchedulingInPast { at: SimTime(9), now: SimTime(10) }));
        assert!(q.schedule(SimTime(10), ()).is_ok());
    }

    #[test]
    fn horizon_is_inclusive() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(10), ()).unwrap();
        assert!(q.pop_until(SimTime(9)).is_none());
        assert!(q.pop_until(SimTime(10)).is_some());
    }

    #[test]
    fn packet_bytes_round_trip() {
        let p = Packet::data(Addr::new(172, 16, 0, 33), Addr::new(224, 224, 224, 224), 64, 1234, 1316, 77);
        let b = p.to_bytes();
        assert_eq!(Packet::from_bytes(&b), Some(p.clone()));
        assert_eq!(Packet::from_bytes(&b[..b.len() - 1]), None);
        assert_eq!(p.seq(), Some(77));
    }

    #[test]
    fn log_line_format() {
        let r = LogRecord { time: SimTime(12), node: "R1".into(), kind: "tx".into(), detail: "eth1 udp".into() };
        assert_eq!(r.to_string(), "12 R1 tx eth1 udp");
    }
}
