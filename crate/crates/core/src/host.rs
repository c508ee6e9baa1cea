// SPDX-License-Identifier: Apache-2.0
//! End hosts: receivers that join groups and the constant-rate source.

use std::collections::BTreeMap;

use crate::addr::{Addr, GroupAddr, IfAddr};
use crate::codec::{self, ControlMessage, IgmpMessage};
use crate::igmp::{IgmpIfState, IgmpTimers, Role};
use crate::node::{NodeEvent, Outbox, IGMP_REPORTS};
use crate::sim::{IfId, NodeId, Packet, Proto, SimTime};

pub const DEFAULT_RATE_PPS: u32 = 100;
pub const DEFAULT_PKT_BYTES: u32 = 1316;
pub const DATA_TTL: u8 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emitter {
    pub group: GroupAddr,
    pub port: u16,
    pub interval: SimTime,
    pub pkt_bytes: u32,
    pub next_seq: u64,
}

/// A data packet accepted by a host.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub at: SimTime,
    pub seq: u64,
    pub src: Addr,
}

#[derive(Debug, Clone)]
pub struct Host {
    pub name: NodeId,
    pub iface: IfId,
    pub addr: IfAddr,
    pub gateway: Option<Addr>,
    pub igmp: IgmpIfState,
    pub emitter: Option<Emitter>,
    /// Do not answer queries (timer tests).
    pub suppress_reports: bool,
    pub delivered: BTreeMap<GroupAddr, Vec<Delivery>>,
    pub emitted: Vec<(SimTime, u64)>,
    pub not_member_drops: u64,
}

impl Host {
    pub fn new(name: impl Into<NodeId>, iface: impl Into<IfId>, addr: IfAddr, gateway: Option<Addr>) -> Self {
        let iface = iface.into();
        Host {
            name: name.into(),
            igmp: IgmpIfState::new(iface.clone(), Role::HostSide, IgmpTimers::default()),
            iface,
            addr,
            gateway,
            emitter: None,
            suppress_reports: false,
            delivered: BTreeMap::new(),
            emitted: Vec::new(),
            not_member_drops: 0,
        }
    }

    fn send_report(&self, msg: &IgmpMessage, out: &mut Outbox) {
        out.log("igmp-send", format!("{} {msg}", self.iface));
        out.transmit(self.iface.clone(), Packet::control(self.addr.addr, IGMP_REPORTS, Proto::Igmp, msg.encode()));
    }

    pub fn handle(&mut self, ev: NodeEvent, out: &mut Outbox) {
        match ev {
            NodeEvent::Start => out.log("start", format!("{} {}", self.iface, self.addr)),
            NodeEvent::HostJoin { group, sources } => match self.igmp.host_join(group, sources) {
                Ok(j) => {
                    if j.change.is_some() {
                        out.log("membership", format!("{} {group} joined", self.iface));
                    }
                    self.send_report(&j.report, out);
                }
                Err(e) => out.log("error", format!("join {group}: {e}")),
            },
            NodeEvent::HostLeave { group } => match self.igmp.host_leave(group) {
                Ok((report, _)) => {
                    out.log("membership", format!("{} {group} left", self.iface));
                    self.send_report(&report, out);
                }
                Err(e) => out.log("error", format!("leave {group}: {e}")),
            },
            NodeEvent::SourceStart { group, port, rate_pps, pkt_bytes } => {
                let interval = SimTime((1000 / u64::from(rate_pps.max(1))).max(1));
                out.log("source-start", format!("{group}:{port} every {interval}ms {pkt_bytes}B"));
                let next_seq = self.emitter.as_ref().map_or(0, |e| e.next_seq);
                self.emitter = Some(Emitter { group, port, interval, pkt_bytes, next_seq });
                out.schedule(out.now, NodeEvent::SourceTick);
            }
            NodeEvent::SourceTick => {
                let Some(em) = self.emitter.as_mut() else {
                    return;
                };
                let seq = em.next_seq;
                em.next_seq += 1;
                let pkt = Packet::data(self.addr.addr, em.group.addr(), DATA_TTL, em.port, em.pkt_bytes, seq);
                let interval = em.interval;
                self.emitted.push((out.now, seq));
                out.transmit(self.iface.clone(), pkt);
                out.after(interval, NodeEvent::SourceTick);
            }
            NodeEvent::Receive { iface, pkt } => self.receive(iface, pkt, out),
            other => out.log("ignored", format!("{other:?}")),
        }
    }

    fn receive(&mut self, iface: IfId, pkt: Packet, out: &mut Outbox) {
        match pkt.proto {
            Proto::Igmp => {
                if let Ok(ControlMessage::Igmp(IgmpMessage::MembershipQuery { group, .. })) =
                    codec::decode(pkt.proto, &pkt.payload)
                {
                    if self.suppress_reports {
                        return;
                    }
                    if let Some(report) = self.igmp.host_answer_query(group) {
                        self.send_report(&report, out);
                    }
                }
            }
            Proto::DataUdp => {
                let member = GroupAddr::new(pkt.dst).ok().filter(|g| self.igmp.is_member(*g));
                match (member, pkt.seq()) {
                    (Some(g), Some(seq)) => {
                        self.delivered.entry(g).or_default().push(Delivery { at: out.now, seq, src: pkt.src });
                    }
                    _ => {
                        self.not_member_drops += 1;
                        out.log("drop", format!("{iface} not-member {}", pkt.dst));
                    }
                }
            }
            Proto::Pim => {}
        }
    }

    pub fn delivered_count(&self, group: GroupAddr) -> usize {
        self.delivered.get(&group).map_or(0, Vec::len)
    }
}
