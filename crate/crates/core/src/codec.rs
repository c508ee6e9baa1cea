// SPDX-License-Identifier: Apache-2.0
//! Canonical byte layouts for IGMP and PIM control messages.
//!
//! These are simplified layouts, not the RFC wire formats. Every message
//! starts with a four byte header and the Internet checksum covers the
//! whole message (computed with the checksum field zeroed). All integers
//! are big-endian, timers are carried in whole seconds.
//!
//! ```text
//! header      type(1) reserved(1)=0 checksum(2)
//!
//! IGMP  type 0x11 query      max_resp_secs(2) reserved(2)=0 group(4)    group 0.0.0.0 = general
//!       type 0x22 v3 report  reserved(2)=0 nrec(2) record*
//!                  record    rtype(1) aux(1)=0 nsrc(2) group(4) source(4)*nsrc
//!                            rtype: 1 MODE_IS_INCLUDE 2 MODE_IS_EXCLUDE
//!                                   3 CHANGE_TO_INCLUDE 4 CHANGE_TO_EXCLUDE
//!       type 0x17 leave      group(4)
//!
//! PIM   type 0x20 hello      holdtime_secs(2)
//!       type 0x21 register   reserved(4)=0 inner_len(2) inner(inner_len)
//!       type 0x22 reg-stop   group(4) source(4)
//!       type 0x23 join/prune upstream(4) holdtime_secs(2) njoin(2) nprune(2) entry*
//!                  entry     group(4) source(4) rp(4) flags(1)
//!                            flags bit0 = wildcard source (source bytes zero)
//! ```
//!
//! IGMP type 0x22 and PIM type 0x22 share a first byte; [`decode`] tells
//! them apart with the protocol tag carried by the packet.

use std::fmt;

use thiserror::Error;

use crate::addr::{Addr, GroupAddr, Source};
use crate::sim::{Proto, SimTime};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("bad checksum")]
    BadChecksum,
    #[error("message truncated")]
    TruncatedMessage,
    #[error("unknown message kind {0:#04x}")]
    UnknownKind(u8),
    #[error("malformed message: {0}")]
    Malformed(&'static str),
}

/// Ones-complement of the ones-complement sum of 16-bit words. Odd inputs
/// are padded with a zero byte.
pub fn internet_checksum(bytes: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    let mut chunks = bytes.chunks_exact(2);
    for w in &mut chunks {
        sum += u32::from(u16::from_be_bytes([w[0], w[1]]));
    }
    if let [last] = chunks.remainder() {
        sum += u32::from(*last) << 8;
    }
    while sum > 0xFFFF {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecordType {
    ModeIsInclude,
    ModeIsExclude,
    ChangeToInclude,
    ChangeToExclude,
}

impl RecordType {
    fn code(self) -> u8 {
        match self {
            RecordType::ModeIsInclude => 1,
            RecordType::ModeIsExclude => 2,
            RecordType::ChangeToInclude => 3,
            RecordType::ChangeToExclude => 4,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            1 => RecordType::ModeIsInclude,
            2 => RecordType::ModeIsExclude,
            3 => RecordType::ChangeToInclude,
            4 => RecordType::ChangeToExclude,
            _ => return None,
        })
    }
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordType::ModeIsInclude => "MODE_IS_INCLUDE",
            RecordType::ModeIsExclude => "MODE_IS_EXCLUDE",
            RecordType::ChangeToInclude => "CHANGE_TO_INCLUDE",
            RecordType::ChangeToExclude => "CHANGE_TO_EXCLUDE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupRecord {
    pub record_type: RecordType,
    pub group: GroupAddr,
    pub sources: Vec<Addr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IgmpMessage {
    /// General query when `group` is `None`, group-specific otherwise.
    MembershipQuery {
        group: Option<GroupAddr>,
        max_resp_time: SimTime,
    },
    V3MembershipReport {
        records: Vec<GroupRecord>,
    },
    LeaveGroup {
        group: GroupAddr,
    },
}

/// One (source, group) entry of a Join/Prune message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JoinPruneEntry {
    pub group: GroupAddr,
    pub source: Source,
    pub rp: Addr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PimMessage {
    Hello { holdtime: SimTime },
    JoinPrune { upstream_neighbor: Addr, holdtime: SimTime, joins: Vec<JoinPruneEntry>, prunes: Vec<JoinPruneEntry> },
    Register { inner_packet: Vec<u8> },
    RegisterStop { group: GroupAddr, source: Addr },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlMessage {
    Igmp(IgmpMessage),
    Pim(PimMessage),
}

impl ControlMessage {
    pub fn proto(&self) -> Proto {
        match self {
            ControlMessage::Igmp(_) => Proto::Igmp,
            ControlMessage::Pim(_) => Proto::Pim,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            ControlMessage::Igmp(m) => m.encode(),
            ControlMessage::Pim(m) => m.encode(),
        }
    }
}

const IGMP_QUERY: u8 = 0x11;
const IGMP_REPORT: u8 = 0x22;
const IGMP_LEAVE: u8 = 0x17;
const PIM_HELLO: u8 = 0x20;
const PIM_REGISTER: u8 = 0x21;
const PIM_REGISTER_STOP: u8 = 0x22;
const PIM_JOIN_PRUNE: u8 = 0x23;

const FLAG_WILDCARD: u8 = 0x01;

struct Writer(Vec<u8>);

impl Writer {
    fn header(kind: u8) -> Self {
        Writer(vec![kind, 0, 0, 0])
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn addr(&mut self, a: Addr) {
        self.u32(a.0);
    }
    fn secs(&mut self, t: SimTime) {
        self.u16((t.as_millis() / 1000).min(u64::from(u16::MAX)) as u16);
    }
    fn finish(mut self) -> Vec<u8> {
        let c = internet_checksum(&self.0);
        self.0[2..4].copy_from_slice(&c.to_be_bytes());
        self.0
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).ok_or(CodecError::TruncatedMessage)?;
        let s = self.buf.get(self.pos..end).ok_or(CodecError::TruncatedMessage)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CodecError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
    fn addr(&mut self) -> Result<Addr, CodecError> {
        Ok(Addr(self.u32()?))
    }
    fn group(&mut self) -> Result<GroupAddr, CodecError> {
        GroupAddr::new(self.addr()?).map_err(|_| CodecError::Malformed("group is not multicast"))
    }
    fn secs(&mut self) -> Result<SimTime, CodecError> {
        Ok(SimTime::from_secs(u64::from(self.u16()?)))
    }
    fn zero16(&mut self) -> Result<(), CodecError> {
        match self.u16()? {
            0 => Ok(()),
            _ => Err(CodecError::Malformed("reserved field not zero")),
        }
    }
    fn end(&self) -> Result<(), CodecError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(CodecError::Malformed("trailing bytes"))
        }
    }
}

/// Checks length and checksum, returning the type byte and a reader
/// positioned after the header.
fn open(bytes: &[u8]) -> Result<(u8, Reader<'_>), CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::TruncatedMessage);
    }
    if internet_checksum(bytes) != 0 {
        return Err(CodecError::BadChecksum);
    }
    if bytes[1] != 0 {
        return Err(CodecError::Malformed("reserved header byte not zero"));
    }
    Ok((bytes[0], Reader { buf: bytes, pos: 4 }))
}

impl IgmpMessage {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            IgmpMessage::MembershipQuery { group, max_resp_time } => {
                let mut w = Writer::header(IGMP_QUERY);
                w.secs(*max_resp_time);
                w.u16(0);
                w.addr(group.map(Addr::from).unwrap_or(Addr::UNSPECIFIED));
                w.finish()
            }
            IgmpMessage::V3MembershipReport { records } => {
                let mut w = Writer::header(IGMP_REPORT);
                w.u16(0);
                w.u16(records.len() as u16);
                for r in records {
                    w.u8(r.record_type.code());
                    w.u8(0);
                    w.u16(r.sources.len() as u16);
                    w.addr(r.group.addr());
                    for s in &r.sources {
                        w.addr(*s);
                    }
                }
                w.finish()
            }
            IgmpMessage::LeaveGroup { group } => {
                let mut w = Writer::header(IGMP_LEAVE);
                w.addr(group.addr());
                w.finish()
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let (kind, mut r) = open(bytes)?;
        let msg = match kind {
            IGMP_QUERY => {
                let max_resp_time = r.secs()?;
                r.zero16()?;
                let g = r.addr()?;
                let group = if g == Addr::UNSPECIFIED {
                    None
                } else {
                    Some(GroupAddr::new(g).map_err(|_| CodecError::Malformed("group is not multicast"))?)
                };
                IgmpMessage::MembershipQuery { group, max_resp_time }
            }
            IGMP_REPORT => {
                r.zero16()?;
                let n = r.u16()?;
                if n == 0 {
                    return Err(CodecError::Malformed("report without records"));
                }
                let mut records = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    let record_type =
                        RecordType::from_code(r.u8()?).ok_or(CodecError::Malformed("unknown record type"))?;
                    if r.u8()? != 0 {
                        return Err(CodecError::Malformed("aux data not supported"));
                    }
                    let nsrc = r.u16()?;
                    let group = r.group()?;
                    let sources = (0..nsrc).map(|_| r.addr()).collect::<Result<_, _>>()?;
                    records.push(GroupRecord { record_type, group, sources });
                }
                IgmpMessage::V3MembershipReport { records }
            }
            IGMP_LEAVE => IgmpMessage::LeaveGroup { group: r.group()? },
            k => return Err(CodecError::UnknownKind(k)),
        };
        r.end()?;
        Ok(msg)
    }
}

impl PimMessage {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            PimMessage::Hello { holdtime } => {
                let mut w = Writer::header(PIM_HELLO);
                w.secs(*holdtime);
                w.finish()
            }
            PimMessage::Register { inner_packet } => {
                let mut w = Writer::header(PIM_REGISTER);
                w.u32(0);
                w.u16(inner_packet.len() as u16);
                w.0.extend_from_slice(inner_packet);
                w.finish()
            }
            PimMessage::RegisterStop { group, source } => {
                let mut w = Writer::header(PIM_REGISTER_STOP);
                w.addr(group.addr());
                w.addr(*source);
                w.finish()
            }
            PimMessage::JoinPrune { upstream_neighbor, holdtime, joins, prunes } => {
                let mut w = Writer::header(PIM_JOIN_PRUNE);
                w.addr(*upstream_neighbor);
                w.secs(*holdtime);
                w.u16(joins.len() as u16);
                w.u16(prunes.len() as u16);
                for e in joins.iter().chain(prunes) {
                    w.addr(e.group.addr());
                    match e.source {
                        Source::Wildcard => {
                            w.addr(Addr::UNSPECIFIED);
                            w.addr(e.rp);
                            w.u8(FLAG_WILDCARD);
                        }
                        Source::Specific(s) => {
                            w.addr(s);
                            w.addr(e.rp);
                            w.u8(0);
                        }
                    }
                }
                w.finish()
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let (kind, mut r) = open(bytes)?;
        let msg = match kind {
            PIM_HELLO => PimMessage::Hello { holdtime: r.secs()? },
            PIM_REGISTER => {
                if r.u32()? != 0 {
                    return Err(CodecError::Malformed("register flags not supported"));
                }
                let n = r.u16()? as usize;
                PimMessage::Register { inner_packet: r.take(n)?.to_vec() }
            }
            PIM_REGISTER_STOP => PimMessage::RegisterStop { group: r.group()?, source: r.addr()? },
            PIM_JOIN_PRUNE => {
                let upstream_neighbor = r.addr()?;
                let holdtime = r.secs()?;
                let nj = r.u16()?;
                let np = r.u16()?;
                let entry = |r: &mut Reader<'_>| -> Result<JoinPruneEntry, CodecError> {
                    let group = r.group()?;
                    let src = r.addr()?;
                    let rp = r.addr()?;
                    let source = match r.u8()? {
                        0 => Source::Specific(src),
                        FLAG_WILDCARD if src == Addr::UNSPECIFIED => Source::Wildcard,
                        FLAG_WILDCARD => return Err(CodecError::Malformed("wildcard entry with source")),
                        _ => return Err(CodecError::Malformed("unknown entry flags")),
                    };
                    Ok(JoinPruneEntry { group, source, rp })
                };
                let joins = (0..nj).map(|_| entry(&mut r)).collect::<Result<Vec<_>, _>>()?;
                let prunes = (0..np).map(|_| entry(&mut r)).collect::<Result<Vec<_>, _>>()?;
                let conflict = joins.iter().any(|j| prunes.iter().any(|p| p.group == j.group && p.source == j.source));
                if conflict {
                    return Err(CodecError::Malformed("same entry joined and pruned"));
                }
                PimMessage::JoinPrune { upstream_neighbor, holdtime, joins, prunes }
            }
            k => return Err(CodecError::UnknownKind(k)),
        };
        r.end()?;
        Ok(msg)
    }
}

/// Decodes a control message carried with protocol tag `proto`.
pub fn decode(proto: Proto, bytes: &[u8]) -> Result<ControlMessage, CodecError> {
    match proto {
        Proto::Igmp => IgmpMessage::decode(bytes).map(ControlMessage::Igmp),
        Proto::Pim => PimMessage::decode(bytes).map(ControlMessage::Pim),
        Proto::DataUdp => Err(CodecError::Malformed("data packets carry no control message")),
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn from_hex(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok()).collect()
}

impl fmt::Display for IgmpMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IgmpMessage::MembershipQuery { group: None, max_resp_time } => {
                write!(f, "query general max-resp={}", max_resp_time)
            }
            IgmpMessage::MembershipQuery { group: Some(g), max_resp_time } => {
                write!(f, "query group={g} max-resp={}", max_resp_time)
            }
            IgmpMessage::V3MembershipReport { records } => {
                f.write_str("report")?;
                for r in records {
                    write!(f, " {}({}", r.record_type, r.group)?;
                    for s in &r.sources {
                        write!(f, " {s}")?;
                    }
                    f.write_str(")")?;
                }
                Ok(())
            }
            IgmpMessage::LeaveGroup { group } => write!(f, "leave {group}"),
        }
    }
}

impl fmt::Display for ControlMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlMessage::Igmp(m) => m.fmt(f),
            ControlMessage::Pim(m) => m.fmt(f),
        }
    }
}

impl fmt::Display for PimMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PimMessage::Hello { holdtime } => write!(f, "hello holdtime={holdtime}"),
            PimMessage::JoinPrune { upstream_neighbor, holdtime, joins, prunes } => {
                write!(f, "join-prune upstream={upstream_neighbor} holdtime={holdtime}")?;
                for j in joins {
                    write!(f, " +({},{})", j.source, j.group)?;
                }
                for p in prunes {
                    write!(f, " -({},{})", p.source, p.group)?;
                }
                Ok(())
            }
            PimMessage::Register { inner_packet } => write!(f, "register len={}", inner_packet.len()),
            PimMessage::RegisterStop { group, source } => write!(f, "register-stop ({source},{group})"),
        }
    }
}
