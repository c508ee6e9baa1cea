// SPDX-License-Identifier: Apache-2.0
//! A simulated multicast router: glue between the RIB, IGMP, PIM and the
//! forwarding cache.

use std::collections::BTreeMap;

use crate::addr::{Addr, GroupAddr, IfAddr, Prefix};
use crate::codec::{self, ControlMessage, IgmpMessage, PimMessage};
use crate::igmp::{IgmpIfState, IgmpTimers, MembershipChange, Role};
use crate::mfib::{ForwardOutcome, Mfib};
use crate::node::{NodeEvent, Outbox, ALL_SYSTEMS};
use crate::pim::{
    PimEmit, PimError, PimOutput, PimState, PimTimer, PimTimers, RpMapping, ALL_PIM_ROUTERS, REGISTER_VIF,
};
use crate::rib::{NextHop, RibError, RibTable, RouteEntry};
use crate::sim::{IfId, NodeId, Packet, Proto, SimTime};

const UNICAST_TTL: u8 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouterIface {
    pub addr: Option<IfAddr>,
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RouterCounters {
    pub decode_errors: u64,
    pub unicast_forwarded: u64,
    pub unicast_dropped: u64,
    pub register_decap: u64,
}

/// Fault injection used by timer tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Suppress {
    pub hellos: bool,
    pub join_refresh: bool,
}

#[derive(Debug, Clone)]
pub struct Router {
    pub name: NodeId,
    ifaces: BTreeMap<IfId, RouterIface>,
    pub rib: RibTable,
    pub igmp: BTreeMap<IfId, IgmpIfState>,
    pub pim: PimState,
    pub mfib: Mfib,
    pub counters: RouterCounters,
    pub suppress: Suppress,
}

impl Router {
    pub fn new(name: impl Into<NodeId>) -> Self {
        Router {
            name: name.into(),
            ifaces: BTreeMap::new(),
            rib: RibTable::new(),
            igmp: BTreeMap::new(),
            pim: PimState::new(BTreeMap::new(), Default::default(), PimTimers::default()),
            mfib: Mfib::new(),
            counters: RouterCounters::default(),
            suppress: Suppress::default(),
        }
    }

    pub fn add_interface(&mut self, iface: impl Into<IfId>, addr: Option<IfAddr>, enabled: bool) {
        let iface = iface.into();
        if let (Some(a), true) = (addr, enabled) {
            self.rib.add_route(RouteEntry::connected(a, iface.clone())).expect("connected routes always resolve");
            self.pim.add_interface(iface.clone(), a);
        }
        self.ifaces.insert(iface, RouterIface { addr, enabled });
    }

    pub fn interfaces(&self) -> &BTreeMap<IfId, RouterIface> {
        &self.ifaces
    }

    pub fn add_static_route(&mut self, prefix: Prefix, next_hop: Addr) -> Result<(), RibError> {
        self.rib.add_static(prefix, next_hop)?;
        self.pim.reresolve(&self.rib);
        Ok(())
    }

    pub fn enable_igmp(&mut self, iface: impl Into<IfId>, timers: IgmpTimers, explicit_tracking: bool) {
        let iface = iface.into();
        let mut st = IgmpIfState::new(iface.clone(), Role::RouterSide, timers);
        st.explicit_tracking = explicit_tracking;
        self.igmp.insert(iface, st);
    }

    pub fn enable_pim(&mut self, iface: impl Into<IfId>) {
        self.pim.enable(iface.into());
    }

    pub fn set_pim_timers(&mut self, timers: PimTimers) {
        self.pim.timers = timers;
    }

    pub fn set_static_rp(&mut self, mapping: RpMapping) -> Result<(), PimError> {
        self.pim.set_static_rp(mapping, &self.rib)
    }

    fn iface_addr(&self, iface: &IfId) -> Addr {
        self.ifaces.get(iface).and_then(|i| i.addr).map_or(Addr::UNSPECIFIED, |a| a.addr)
    }

    fn is_own_addr(&self, a: Addr) -> bool {
        self.ifaces.values().any(|i| i.enabled && i.addr.is_some_and(|ia| ia.addr == a))
    }

    pub fn handle(&mut self, ev: NodeEvent, out: &mut Outbox) {
        match ev {
            NodeEvent::Start => {
                out.log("start", format!("ifaces={}", self.ifaces.len()));
                out.schedule(out.now, NodeEvent::IgmpQuery);
                out.schedule(out.now, NodeEvent::PimHello);
                out.after(self.pim.timers.join_prune_period, NodeEvent::PimJoinRefresh);
            }
            NodeEvent::Receive { iface, pkt } => self.receive(iface, pkt, out),
            NodeEvent::IgmpQuery => self.query_timer(out),
            NodeEvent::IgmpExpiry { iface, group } => self.igmp_expiry(&iface, group, out),
            NodeEvent::PimHello => {
                let before = self.pim.neighbors().clone();
                let res = self.pim.on_hello_timer(out.now);
                for (iface, nbrs) in &before {
                    for n in nbrs.keys().filter(|n| !self.pim.is_neighbor(iface, **n)) {
                        out.log("pim-neighbor-down", format!("{iface} {n}"));
                    }
                }
                let res = if self.suppress.hellos { PimOutput { emits: Vec::new(), ..res } } else { res };
                self.apply_pim(res, out);
                out.after(self.pim.timers.hello_period, NodeEvent::PimHello);
            }
            NodeEvent::PimJoinRefresh => {
                if !self.suppress.join_refresh {
                    let res = self.pim.on_join_refresh();
                    self.apply_pim(res, out);
                }
                out.after(self.pim.timers.join_prune_period, NodeEvent::PimJoinRefresh);
            }
            NodeEvent::PimNeighborExpiry { iface, neighbor } => {
                let known = self.pim.is_neighbor(&iface, neighbor);
                let res = self.pim.on_neighbor_expiry(&iface, neighbor, out.now);
                if known && !self.pim.is_neighbor(&iface, neighbor) {
                    out.log("pim-neighbor-down", format!("{iface} {neighbor}"));
                }
                self.apply_pim(res, out);
            }
            NodeEvent::PimJoinExpiry { key, iface } => {
                let res = self.pim.on_join_expiry(key, &iface, out.now);
                if res.changed {
                    out.log("pim-join-expired", format!("({},{}) {iface}", key.1, key.0));
                }
                self.apply_pim(res, out);
            }
            other => out.log("ignored", format!("{other:?}")),
        }
    }

    fn query_timer(&mut self, out: &mut Outbox) {
        let ifaces: Vec<IfId> = self.igmp.keys().cloned().collect();
        let mut next = None;
        for iface in ifaces {
            if !self.iface_up(&iface) {
                continue;
            }
            let st = self.igmp.get_mut(&iface).expect("present");
            next = Some(st.timers.query_interval);
            let (query, gone) = st.on_query_timer(out.now).expect("router side");
            self.send_igmp(&iface, ALL_SYSTEMS, &query, out);
            self.membership_changes(gone, out);
        }
        if let Some(interval) = next {
            out.after(interval, NodeEvent::IgmpQuery);
        }
    }

    fn igmp_expiry(&mut self, iface: &IfId, group: GroupAddr, out: &mut Outbox) {
        let Some(st) = self.igmp.get_mut(iface) else {
            return;
        };
        if st.expiry_of(group).is_some_and(|t| t <= out.now) {
            let gone = st.expire(out.now);
            self.membership_changes(gone, out);
        }
    }

    fn iface_up(&self, iface: &IfId) -> bool {
        self.ifaces.get(iface).is_some_and(|i| i.enabled)
    }

    fn send_igmp(&self, iface: &IfId, dst: Addr, msg: &IgmpMessage, out: &mut Outbox) {
        out.log("igmp-send", format!("{iface} {msg}"));
        out.transmit(iface.clone(), Packet::control(self.iface_addr(iface), dst, Proto::Igmp, msg.encode()));
    }

    fn membership_changes(&mut self, changes: Vec<MembershipChange>, out: &mut Outbox) {
        for c in changes {
            out.log("membership", format!("{} {} {}", c.iface, c.group, if c.joined { "joined" } else { "left" }));
            match self.pim.on_membership_change(&c, &self.rib) {
                Ok(res) => self.apply_pim(res, out),
                Err(e) => out.log("pim-error", e.to_string()),
            }
        }
    }

    fn receive(&mut self, iface: IfId, pkt: Packet, out: &mut Outbox) {
        if !self.iface_up(&iface) {
            out.log("drop", format!("{iface} interface-down"));
            return;
        }
        match pkt.proto {
            Proto::DataUdp if pkt.dst.is_multicast() => self.multicast_data(iface, pkt, out),
            Proto::DataUdp => self.unicast(pkt, out),
            Proto::Igmp => self.igmp_packet(iface, pkt, out),
            Proto::Pim if pkt.dst == ALL_PIM_ROUTERS => self.pim_link_packet(iface, pkt, out),
            Proto::Pim if self.is_own_addr(pkt.dst) => self.pim_unicast_packet(pkt, out),
            Proto::Pim => self.unicast(pkt, out),
        }
    }

    fn decode(&mut self, pkt: &Packet, out: &mut Outbox) -> Option<ControlMessage> {
        match codec::decode(pkt.proto, &pkt.payload) {
            Ok(m) => Some(m),
            Err(e) => {
                self.counters.decode_errors += 1;
                out.log("decode-error", format!("{} {e}", pkt.proto));
                None
            }
        }
    }

    fn igmp_packet(&mut self, iface: IfId, pkt: Packet, out: &mut Outbox) {
        if !self.igmp.contains_key(&iface) {
            return;
        }
        let Some(ControlMessage::Igmp(msg)) = self.decode(&pkt, out) else {
            return;
        };
        if matches!(msg, IgmpMessage::MembershipQuery { .. }) {
            return;
        }
        out.log("igmp-recv", format!("{iface} {msg}"));
        let st = self.igmp.get_mut(&iface).expect("present");
        let res = st.router_receive_report(&msg, pkt.src, out.now).expect("router side");
        let mut expiries: Vec<(GroupAddr, SimTime)> = Vec::new();
        if let IgmpMessage::V3MembershipReport { records } = &msg {
            for r in records {
                if let Some(t) = st.expiry_of(r.group) {
                    expiries.push((r.group, t));
                }
            }
        }
        for (group, at) in expiries {
            out.schedule(at, NodeEvent::IgmpExpiry { iface: iface.clone(), group });
        }
        for q in &res.queries {
            if let IgmpMessage::MembershipQuery { group: Some(g), .. } = q {
                self.send_igmp(&iface, g.addr(), q, out);
            }
        }
        self.membership_changes(res.changes, out);
    }

    fn pim_link_packet(&mut self, iface: IfId, pkt: Packet, out: &mut Outbox) {
        if !self.pim.is_enabled(&iface) {
            return;
        }
        let Some(ControlMessage::Pim(msg)) = self.decode(&pkt, out) else {
            return;
        };
        match &msg {
            PimMessage::Hello { holdtime } => {
                let known = self.pim.is_neighbor(&iface, pkt.src);
                let res = self.pim.on_hello(&iface, pkt.src, *holdtime, out.now);
                if !known {
                    out.log("pim-neighbor-up", format!("{iface} {}", pkt.src));
                }
                self.apply_pim(res, out);
            }
            PimMessage::JoinPrune { .. } => {
                out.log("pim-recv", format!("{iface} {msg}"));
                match self.pim.on_join_prune(&msg, &iface, pkt.src, &self.rib, out.now) {
                    Ok(res) => self.apply_pim(res, out),
                    Err(e) => out.log("pim-error", e.to_string()),
                }
            }
            _ => out.log("pim-error", format!("{iface} unexpected link-local {msg}")),
        }
    }

    fn pim_unicast_packet(&mut self, pkt: Packet, out: &mut Outbox) {
        let Some(ControlMessage::Pim(msg)) = self.decode(&pkt, out) else {
            return;
        };
        out.log("pim-recv", format!("unicast {msg}"));
        match msg {
            PimMessage::Register { inner_packet } => {
                let (res, decap) = self.pim.on_register(&inner_packet, pkt.src);
                self.apply_pim(res, out);
                if let Some(inner) = decap {
                    self.counters.register_decap += 1;
                    self.mfib_forward(IfId::from(REGISTER_VIF), inner, out);
                }
            }
            PimMessage::RegisterStop { group, source } => self.pim.on_register_stop(group, source, out.now),
            other => out.log("pim-error", format!("unexpected unicast {other}")),
        }
    }

    fn multicast_data(&mut self, iface: IfId, pkt: Packet, out: &mut Outbox) {
        // first hop: the sender sits on the arrival segment
        let local_source =
            self.rib.rpf_lookup(pkt.src).is_ok_and(|r| r.upstream == NextHop::Connected && r.iface == iface);
        if local_source {
            let res = self.pim.on_source_data(&pkt, &iface, out.now);
            self.apply_pim(res, out);
        }
        self.mfib_forward(iface, pkt, out);
    }

    fn mfib_forward(&mut self, iface: IfId, pkt: Packet, out: &mut Outbox) {
        match self.mfib.forward(&pkt, &iface) {
            ForwardOutcome::Forwarded(copies) => {
                for (oif, p) in copies {
                    out.transmit(oif, p);
                }
            }
            ForwardOutcome::RpfDrop { expected } => {
                self.pim.on_rpf_failure();
                out.log("drop", format!("{iface} rpf-fail ({},{}) expected={expected}", pkt.src, pkt.dst));
            }
            ForwardOutcome::TtlDrop => out.log("drop", format!("{iface} ttl ({},{})", pkt.src, pkt.dst)),
            ForwardOutcome::NoEntry => out.log("drop", format!("{iface} no-receivers ({},{})", pkt.src, pkt.dst)),
        }
    }

    fn unicast(&mut self, mut pkt: Packet, out: &mut Outbox) {
        if self.is_own_addr(pkt.dst) {
            return;
        }
        match self.rib.lookup(pkt.dst) {
            Ok((_, oif)) if pkt.ttl > 1 => {
                pkt.ttl -= 1;
                self.counters.unicast_forwarded += 1;
                out.transmit(oif, pkt);
            }
            Ok(_) => {
                self.counters.unicast_dropped += 1;
                out.log("drop", format!("ttl unicast {}", pkt.dst));
            }
            Err(e) => {
                self.counters.unicast_dropped += 1;
                out.log("drop", e.to_string());
            }
        }
    }

    fn apply_pim(&mut self, res: PimOutput, out: &mut Outbox) {
        for e in res.emits {
            match e {
                PimEmit::Link { iface, msg } => {
                    if !matches!(msg, PimMessage::Hello { .. }) {
                        out.log("pim-send", format!("{iface} {msg}"));
                    }
                    let pkt = Packet::control(self.iface_addr(&iface), ALL_PIM_ROUTERS, Proto::Pim, msg.encode());
                    out.transmit(iface, pkt);
                }
                PimEmit::Unicast { dst, msg } => match self.rib.lookup(dst) {
                    Ok((_, oif)) => {
                        out.log("pim-send", format!("unicast {dst} {msg}"));
                        let mut pkt = Packet::control(self.iface_addr(&oif), dst, Proto::Pim, msg.encode());
                        pkt.ttl = UNICAST_TTL;
                        out.transmit(oif, pkt);
                    }
                    Err(e) => out.log("pim-error", e.to_string()),
                },
            }
        }
        for t in res.timers {
            match t {
                PimTimer::JoinExpiry { key, iface, at } => out.schedule(at, NodeEvent::PimJoinExpiry { key, iface }),
                PimTimer::NeighborExpiry { iface, neighbor, at } => {
                    out.schedule(at, NodeEvent::PimNeighborExpiry { iface, neighbor })
                }
            }
        }
        if res.changed {
            self.sync_mfib(out);
        }
    }

    /// Re-derives the forwarding cache from PIM state.
    pub fn sync_mfib(&mut self, out: &mut Outbox) {
        let wanted = self.pim.derive_mfib(&self.rib);
        let before: Vec<String> = self.mfib.entries().map(route_summary).collect();
        self.mfib.sync(wanted).expect("derived entries never list iif as oif");
        let after: Vec<String> = self.mfib.entries().map(route_summary).collect();
        if before != after {
            out.log("mfib", if after.is_empty() { "empty".to_string() } else { after.join(" ") });
        }
    }

    /// True when the cache matches what PIM state implies.
    pub fn mfib_consistent(&self) -> bool {
        let derived = self.pim.derive_mfib(&self.rib);
        derived.len() == self.mfib.len() && derived.iter().zip(self.mfib.entries()).all(|(a, b)| a.same_route(b))
    }

    pub fn show_igmp(&self, now: SimTime) -> Vec<String> {
        self.igmp.values().flat_map(|s| s.show(now)).collect()
    }
}

fn route_summary(e: &crate::mfib::MfibEntry) -> String {
    let oifs: Vec<&str> = e.oifs.iter().map(IfId::as_str).collect();
    format!("({},{})iif={}oifs={{{}}}", e.source, e.group, e.iif, oifs.join(","))
}
