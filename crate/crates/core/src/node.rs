// SPDX-License-Identifier: Apache-2.0
//! Events addressed to nodes and the outbox nodes fill while handling them.

use std::collections::BTreeSet;

use crate::addr::{Addr, GroupAddr};
use crate::pim::GroupKey;
use crate::sim::{IfId, Packet, SimTime};

/// IGMPv3 reports go to 224.0.0.22.
pub const IGMP_REPORTS: Addr = Addr::new(224, 0, 0, 22);
/// All systems on this subnet.
pub const ALL_SYSTEMS: Addr = Addr::new(224, 0, 0, 1);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeEvent {
    Start,
    Receive { iface: IfId, pkt: Packet },
    SourceStart { group: GroupAddr, port: u16, rate_pps: u32, pkt_bytes: u32 },
    SourceTick,
    HostJoin { group: Addr, sources: BTreeSet<Addr> },
    HostLeave { group: Addr },
    IgmpQuery,
    IgmpExpiry { iface: IfId, group: GroupAddr },
    PimHello,
    PimJoinRefresh,
    PimNeighborExpiry { iface: IfId, neighbor: Addr },
    PimJoinExpiry { key: GroupKey, iface: IfId },
}

impl NodeEvent {
    /// Scripted actions and protocol timers, as opposed to packet arrivals.
    pub fn is_control(&self) -> bool {
        !matches!(self, NodeEvent::Receive { .. } | NodeEvent::SourceTick)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Transmit { iface: IfId, pkt: Packet },
    Schedule { at: SimTime, ev: NodeEvent },
    Log { kind: String, detail: String },
}

/// Collects what a node wants done while it handles one event.
#[derive(Debug)]
pub struct Outbox {
    pub now: SimTime,
    actions: Vec<Action>,
}

impl Outbox {
    pub fn new(now: SimTime) -> Self {
        Outbox { now, actions: Vec::new() }
    }

    pub fn transmit(&mut self, iface: IfId, pkt: Packet) {
        self.actions.push(Action::Transmit { iface, pkt });
    }

    pub fn schedule(&mut self, at: SimTime, ev: NodeEvent) {
        self.actions.push(Action::Schedule { at, ev });
    }

    pub fn after(&mut self, delay: SimTime, ev: NodeEvent) {
        self.schedule(self.now + delay, ev);
    }

    pub fn log(&mut self, kind: &str, detail: impl Into<String>) {
        self.actions.push(Action::Log { kind: kind.to_string(), detail: detail.into() });
    }

    pub fn into_actions(self) -> Vec<Action> {
        self.actions
    }
}
