// SPDX-License-Identifier: Apache-2.0
//! PIM-SM control plane with static rendezvous points.
//!
//! Only the shared tree is built: (*,G) state is joined hop by hop toward
//! the RP, the RP roots the tree on its register interface, and a source
//! attached to the RP gets an (S,G) entry there so its native packets pass
//! the RPF check. A first-hop router that is not the RP tunnels packets
//! to the RP in Register messages until told to stop.
//!
//! All entry points return a [`PimOutput`] listing messages to send and
//! timers to arm; the caller owns transmission and scheduling.

use std::collections::{btree_map::Entry, BTreeMap, BTreeSet};

use thiserror::Error;

use crate::addr::{Addr, GroupAddr, IfAddr, Prefix, Source};
use crate::codec::{JoinPruneEntry, PimMessage};
use crate::igmp::MembershipChange;
use crate::mfib::MfibEntry;
use crate::rib::{NextHop, RibTable};
use crate::sim::{IfId, Packet, SimTime};

/// Pseudo-interface on which the RP roots its shared trees and receives
/// decapsulated Register traffic.
pub const REGISTER_VIF: &str = "register_vif";

/// ALL-PIM-ROUTERS.
pub const ALL_PIM_ROUTERS: Addr = Addr::new(224, 0, 0, 13);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PimError {
    #[error("rendezvous point {0} is unreachable")]
    RpUnreachable(Addr),
    #[error("group prefix {0} is outside 224.0.0.0/4")]
    NotMulticastPrefix(Prefix),
    #[error("no rendezvous point for {0}")]
    NoRpForGroup(GroupAddr),
    #[error("join/prune from unknown neighbor {addr} on {iface}")]
    UnknownNeighbor { iface: IfId, addr: Addr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PimTimers {
    pub hello_period: SimTime,
    pub join_prune_period: SimTime,
    pub join_prune_holdtime: SimTime,
    pub register_suppression: SimTime,
}

impl Default for PimTimers {
    fn default() -> Self {
        PimTimers {
            hello_period: SimTime::from_secs(30),
            join_prune_period: SimTime::from_secs(60),
            join_prune_holdtime: SimTime::from_secs(210),
            register_suppression: SimTime::from_secs(60),
        }
    }
}

impl PimTimers {
    /// 3.5 × hello period.
    pub fn hello_holdtime(&self) -> SimTime {
        SimTime(self.hello_period.0 * 7 / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RpMapping {
    pub group_prefix: Prefix,
    pub rp: Addr,
}

pub type GroupKey = (GroupAddr, Source);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PimGroupState {
    pub group: GroupAddr,
    pub source: Source,
    /// Tree root: the RP for (*,G), the source for (S,G).
    pub root: Addr,
    /// `None` when this router is the root.
    pub upstream_iface: Option<IfId>,
    pub upstream_neighbor: Option<Addr>,
    pub downstream: BTreeMap<IfId, SimTime>,
    pub local_members: BTreeSet<IfId>,
    pub joined_upstream: bool,
}

impl PimGroupState {
    pub fn wants_traffic(&self) -> bool {
        !self.downstream.is_empty() || !self.local_members.is_empty()
    }

    pub fn oifs(&self) -> BTreeSet<IfId> {
        self.downstream.keys().chain(self.local_members.iter()).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSource {
    pub iif: IfId,
    pub register_suppressed_until: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PimEmit {
    /// Link-local message to ALL-PIM-ROUTERS.
    Link {
        iface: IfId,
        msg: PimMessage,
    },
    Unicast {
        dst: Addr,
        msg: PimMessage,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PimTimer {
    JoinExpiry { key: GroupKey, iface: IfId, at: SimTime },
    NeighborExpiry { iface: IfId, neighbor: Addr, at: SimTime },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PimOutput {
    pub emits: Vec<PimEmit>,
    pub timers: Vec<PimTimer>,
    /// Forwarding state may have changed; the MFIB must be re-derived.
    pub changed: bool,
}

impl PimOutput {
    fn merge(&mut self, other: PimOutput) {
        self.emits.extend(other.emits);
        self.timers.extend(other.timers);
        self.changed |= other.changed;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PimStats {
    pub unknown_neighbor: u64,
    pub registers_sent: u64,
    pub registers_received: u64,
    pub register_stops_sent: u64,
    pub rpf_failures: u64,
}

#[derive(Debug, Clone)]
pub struct PimState {
    addrs: BTreeMap<IfId, IfAddr>,
    enabled: BTreeSet<IfId>,
    pub timers: PimTimers,
    rp_mappings: Vec<RpMapping>,
    groups: BTreeMap<GroupKey, PimGroupState>,
    neighbors: BTreeMap<IfId, BTreeMap<Addr, SimTime>>,
    sources: BTreeMap<(GroupAddr, Addr), ActiveSource>,
    pub stats: PimStats,
}

impl PimState {
    pub fn new(addrs: BTreeMap<IfId, IfAddr>, enabled: BTreeSet<IfId>, timers: PimTimers) -> Self {
        PimState {
            addrs,
            enabled,
            timers,
            rp_mappings: Vec::new(),
            groups: BTreeMap::new(),
            neighbors: BTreeMap::new(),
            sources: BTreeMap::new(),
            stats: PimStats::default(),
        }
    }

    pub fn add_interface(&mut self, iface: IfId, addr: IfAddr) {
        self.addrs.insert(iface, addr);
    }

    pub fn enable(&mut self, iface: IfId) {
        self.enabled.insert(iface);
    }

    pub fn is_enabled(&self, iface: &IfId) -> bool {
        self.enabled.contains(iface)
    }

    pub fn enabled_ifaces(&self) -> impl Iterator<Item = &IfId> {
        self.enabled.iter()
    }

    pub fn is_own_addr(&self, a: Addr) -> bool {
        self.addrs.values().any(|ia| ia.addr == a)
    }

    pub fn iface_addr(&self, iface: &IfId) -> Option<Addr> {
        self.addrs.get(iface).map(|a| a.addr)
    }

    pub fn set_static_rp(&mut self, mapping: RpMapping, rib: &RibTable) -> Result<(), PimError> {
        if !Prefix::MULTICAST.covers(&mapping.group_prefix) {
            return Err(PimError::NotMulticastPrefix(mapping.group_prefix));
        }
        if !self.is_own_addr(mapping.rp) && rib.rpf_lookup(mapping.rp).is_err() {
            return Err(PimError::RpUnreachable(mapping.rp));
        }
        self.rp_mappings.retain(|m| m.group_prefix != mapping.group_prefix);
        self.rp_mappings.push(mapping);
        Ok(())
    }

    pub fn rp_mappings(&self) -> &[RpMapping] {
        &self.rp_mappings
    }

    /// Longest group-prefix match over the static mappings.
    pub fn rp_for(&self, group: GroupAddr) -> Option<Addr> {
        self.rp_mappings
            .iter()
            .filter(|m| m.group_prefix.contains(group.addr()))
            .max_by_key(|m| m.group_prefix.len())
            .map(|m| m.rp)
    }

    pub fn is_rp(&self, group: GroupAddr) -> bool {
        self.rp_for(group).is_some_and(|rp| self.is_own_addr(rp))
    }

    pub fn groups(&self) -> &BTreeMap<GroupKey, PimGroupState> {
        &self.groups
    }

    pub fn neighbors(&self) -> &BTreeMap<IfId, BTreeMap<Addr, SimTime>> {
        &self.neighbors
    }

    pub fn active_sources(&self) -> &BTreeMap<(GroupAddr, Addr), ActiveSource> {
        &self.sources
    }

    pub fn is_neighbor(&self, iface: &IfId, addr: Addr) -> bool {
        self.neighbors.get(iface).is_some_and(|n| n.contains_key(&addr))
    }

    fn new_state(&self, group: GroupAddr, source: Source, rib: &RibTable) -> PimGroupState {
        let root = match source {
            Source::Wildcard => self.rp_for(group).unwrap_or(Addr::UNSPECIFIED),
            Source::Specific(s) => s,
        };
        let mut st = PimGroupState {
            group,
            source,
            root,
            upstream_iface: None,
            upstream_neighbor: None,
            downstream: BTreeMap::new(),
            local_members: BTreeSet::new(),
            joined_upstream: false,
        };
        self.resolve_upstream(&mut st, rib);
        st
    }

    fn resolve_upstream(&self, st: &mut PimGroupState, rib: &RibTable) {
        let at_root = match st.source {
            Source::Wildcard => self.is_own_addr(st.root),
            Source::Specific(_) => false,
        };
        st.upstream_iface = None;
        st.upstream_neighbor = None;
        if at_root {
            return;
        }
        if let Ok(rpf) = rib.rpf_lookup(st.root) {
            if let (Source::Specific(_), NextHop::Connected) = (st.source, rpf.upstream) {
                // first hop for a directly attached source
                st.upstream_iface = Some(rpf.iface);
                return;
            }
            st.upstream_neighbor = Some(rpf.neighbor(st.root));
            st.upstream_iface = Some(rpf.iface);
        }
    }

    /// Recomputes every upstream after a RIB change.
    pub fn reresolve(&mut self, rib: &RibTable) -> PimOutput {
        let mut states = std::mem::take(&mut self.groups);
        for st in states.values_mut() {
            self.resolve_upstream(st, rib);
        }
        self.groups = states;
        PimOutput { changed: true, ..Default::default() }
    }

    fn join_prune(&self, st: &PimGroupState, join: bool) -> Option<PimEmit> {
        let (iface, nbr) = (st.upstream_iface.clone()?, st.upstream_neighbor?);
        let entry = JoinPruneEntry { group: st.group, source: st.source, rp: self.rp_for(st.group).unwrap_or(st.root) };
        let (joins, prunes) = if join { (vec![entry], vec![]) } else { (vec![], vec![entry]) };
        Some(PimEmit::Link {
            iface,
            msg: PimMessage::JoinPrune {
                upstream_neighbor: nbr,
                holdtime: self.timers.join_prune_holdtime,
                joins,
                prunes,
            },
        })
    }

    /// Re-evaluates whether `key` should be joined upstream and emits the
    /// join or prune on a transition. Empty state is dropped.
    fn transition(&mut self, key: GroupKey) -> PimOutput {
        let mut out = PimOutput { changed: true, ..Default::default() };
        let Some(st) = self.groups.get_mut(&key) else {
            return out;
        };
        let want = st.wants_traffic();
        if want && !st.joined_upstream {
            st.joined_upstream = true;
            let st = st.clone();
            out.emits.extend(self.join_prune(&st, true));
        } else if !want {
            let st = self.groups.remove(&key).expect("present");
            if st.joined_upstream {
                out.emits.extend(self.join_prune(&st, false));
            }
        }
        out
    }

    /// Reacts to an IGMP membership transition on a local interface.
    pub fn on_membership_change(&mut self, change: &MembershipChange, rib: &RibTable) -> Result<PimOutput, PimError> {
        if self.rp_for(change.group).is_none() {
            return Err(PimError::NoRpForGroup(change.group));
        }
        let key = (change.group, Source::Wildcard);
        if change.joined {
            if !self.groups.contains_key(&key) {
                let st = self.new_state(change.group, Source::Wildcard, rib);
                self.groups.insert(key, st);
            }
            self.groups.get_mut(&key).expect("present").local_members.insert(change.iface.clone());
        } else if let Some(st) = self.groups.get_mut(&key) {
            st.local_members.remove(&change.iface);
        } else {
            return Ok(PimOutput::default());
        }
        Ok(self.transition(key))
    }

    /// Processes a Join/Prune received on `from_iface` from `sender`.
    pub fn on_join_prune(
        &mut self,
        msg: &PimMessage,
        from_iface: &IfId,
        sender: Addr,
        rib: &RibTable,
        now: SimTime,
    ) -> Result<PimOutput, PimError> {
        let PimMessage::JoinPrune { upstream_neighbor, holdtime, joins, prunes } = msg else {
            return Ok(PimOutput::default());
        };
        if !self.is_neighbor(from_iface, sender) {
            self.stats.unknown_neighbor += 1;
            return Err(PimError::UnknownNeighbor { iface: from_iface.clone(), addr: sender });
        }
        let mut out = PimOutput::default();
        if self.iface_addr(from_iface) != Some(*upstream_neighbor) {
            // addressed to another router on the segment
            return Ok(out);
        }
        for j in joins {
            let key = (j.group, j.source);
            if !self.groups.contains_key(&key) {
                let st = self.new_state(j.group, j.source, rib);
                self.groups.insert(key, st);
            }
            let st = self.groups.get_mut(&key).expect("present");
            if st.upstream_iface.as_ref() == Some(from_iface) {
                continue;
            }
            let at = now + *holdtime;
            st.downstream.insert(from_iface.clone(), at);
            out.timers.push(PimTimer::JoinExpiry { key, iface: from_iface.clone(), at });
            out.merge(self.transition(key));
        }
        for p in prunes {
            let key = (p.group, p.source);
            if let Some(st) = self.groups.get_mut(&key) {
                if st.downstream.remove(from_iface).is_some() {
                    out.merge(self.transition(key));
                }
            }
        }
        Ok(out)
    }

    /// Fires when a downstream join may have run out.
    pub fn on_join_expiry(&mut self, key: GroupKey, iface: &IfId, now: SimTime) -> PimOutput {
        let expired = self.groups.get(&key).and_then(|st| st.downstream.get(iface)).is_some_and(|at| *at <= now);
        if !expired {
            return PimOutput::default();
        }
        self.groups.get_mut(&key).expect("present").downstream.remove(iface);
        self.transition(key)
    }

    pub fn on_hello(&mut self, from_iface: &IfId, sender: Addr, holdtime: SimTime, now: SimTime) -> PimOutput {
        let mut out = PimOutput::default();
        if !self.is_enabled(from_iface) {
            return out;
        }
        let at = now + holdtime;
        self.neighbors.entry(from_iface.clone()).or_default().insert(sender, at);
        out.timers.push(PimTimer::NeighborExpiry { iface: from_iface.clone(), neighbor: sender, at });
        out
    }

    /// Drops the neighbor if its holdtime has passed, together with every
    /// downstream join learned on that interface.
    pub fn on_neighbor_expiry(&mut self, iface: &IfId, neighbor: Addr, now: SimTime) -> PimOutput {
        let expired = self.neighbors.get(iface).and_then(|n| n.get(&neighbor)).is_some_and(|at| *at <= now);
        if !expired {
            return PimOutput::default();
        }
        self.remove_neighbor(iface, neighbor)
    }

    fn remove_neighbor(&mut self, iface: &IfId, neighbor: Addr) -> PimOutput {
        let mut out = PimOutput::default();
        if let Some(n) = self.neighbors.get_mut(iface) {
            n.remove(&neighbor);
            if n.is_empty() {
                self.neighbors.remove(iface);
            }
        }
        if self.neighbors.contains_key(iface) {
            return out;
        }
        let keys: Vec<GroupKey> =
            self.groups.iter().filter(|(_, st)| st.downstream.contains_key(iface)).map(|(k, _)| *k).collect();
        for key in keys {
            self.groups.get_mut(&key).expect("present").downstream.remove(iface);
            out.merge(self.transition(key));
        }
        out
    }

    /// Periodic Hello on every enabled interface; also sweeps expired
    /// neighbors.
    pub fn on_hello_timer(&mut self, now: SimTime) -> PimOutput {
        let mut out = PimOutput::default();
        let stale: Vec<(IfId, Addr)> = self
            .neighbors
            .iter()
            .flat_map(|(i, n)| n.iter().filter(|(_, at)| **at <= now).map(move |(a, _)| (i.clone(), *a)))
            .collect();
        for (iface, nbr) in stale {
            out.merge(self.remove_neighbor(&iface, nbr));
        }
        let holdtime = self.timers.hello_holdtime();
        for iface in &self.enabled {
            out.emits.push(PimEmit::Link { iface: iface.clone(), msg: PimMessage::Hello { holdtime } });
        }
        out
    }

    /// Periodic refresh of every upstream join.
    pub fn on_join_refresh(&mut self) -> PimOutput {
        let mut out = PimOutput::default();
        for st in self.groups.values().filter(|s| s.joined_upstream) {
            out.emits.extend(self.join_prune(st, true));
        }
        out
    }

    /// Handles a data packet from a source attached to `iif`.
    pub fn on_source_data(&mut self, pkt: &Packet, iif: &IfId, now: SimTime) -> PimOutput {
        let mut out = PimOutput::default();
        let Ok(group) = GroupAddr::new(pkt.dst) else {
            return out;
        };
        let Some(rp) = self.rp_for(group) else {
            return out;
        };
        let key = (group, pkt.src);
        if let Entry::Vacant(e) = self.sources.entry(key) {
            e.insert(ActiveSource { iif: iif.clone(), register_suppressed_until: None });
            out.changed = true;
        }
        if self.is_own_addr(rp) {
            return out;
        }
        let src = self.sources.get_mut(&key).expect("present");
        if src.register_suppressed_until.is_some_and(|t| t > now) {
            return out;
        }
        src.register_suppressed_until = None;
        self.stats.registers_sent += 1;
        out.emits.push(PimEmit::Unicast { dst: rp, msg: PimMessage::Register { inner_packet: pkt.to_bytes() } });
        out
    }

    /// RP side of a Register. Returns the decapsulated packet when the
    /// shared tree has receivers, otherwise answers with Register-Stop.
    pub fn on_register(&mut self, inner_packet: &[u8], from: Addr) -> (PimOutput, Option<Packet>) {
        let mut out = PimOutput::default();
        let Some(inner) = Packet::from_bytes(inner_packet) else {
            return (out, None);
        };
        let Ok(group) = GroupAddr::new(inner.dst) else {
            return (out, None);
        };
        if !self.is_rp(group) {
            return (out, None);
        }
        self.stats.registers_received += 1;
        let has_tree = self.groups.get(&(group, Source::Wildcard)).is_some_and(PimGroupState::wants_traffic);
        if has_tree {
            (out, Some(inner))
        } else {
            self.stats.register_stops_sent += 1;
            out.emits.push(PimEmit::Unicast { dst: from, msg: PimMessage::RegisterStop { group, source: inner.src } });
            (out, None)
        }
    }

    pub fn on_register_stop(&mut self, group: GroupAddr, source: Addr, now: SimTime) {
        if let Some(s) = self.sources.get_mut(&(group, source)) {
            s.register_suppressed_until = Some(now + self.timers.register_suppression);
        }
    }

    /// Hook for data arriving on the wrong interface. Only counted.
    pub fn on_rpf_failure(&mut self) {
        self.stats.rpf_failures += 1;
    }

    /// Forwarding entries implied by the current state.
    pub fn derive_mfib(&self, rib: &RibTable) -> Vec<MfibEntry> {
        let mut out: BTreeMap<GroupKey, MfibEntry> = BTreeMap::new();
        let mut add = |source: Source, group: GroupAddr, iif: IfId, mut oifs: BTreeSet<IfId>| {
            oifs.remove(&iif);
            if oifs.is_empty() {
                return;
            }
            out.entry((group, source))
                .and_modify(|e| e.oifs.extend(oifs.iter().cloned()))
                .or_insert_with(|| MfibEntry::new(source, group, iif, oifs));
        };
        for st in self.groups.values().filter(|s| s.wants_traffic()) {
            match st.source {
                Source::Wildcard => {
                    let iif = if self.is_rp(st.group) {
                        IfId::from(REGISTER_VIF)
                    } else if let Some(i) = &st.upstream_iface {
                        i.clone()
                    } else {
                        continue;
                    };
                    add(Source::Wildcard, st.group, iif, st.oifs());
                    if self.is_rp(st.group) {
                        for ((g, s), _) in self.sources.range((st.group, Addr(0))..=(st.group, Addr(u32::MAX))) {
                            debug_assert_eq!(*g, st.group);
                            if let Ok(rpf) = rib.rpf_lookup(*s) {
                                add(Source::Specific(*s), st.group, rpf.iface, st.oifs());
                            }
                        }
                    }
                }
                Source::Specific(_) => {
                    if let Some(iif) = &st.upstream_iface {
                        add(st.source, st.group, iif.clone(), st.oifs());
                    }
                }
            }
        }
        out.into_values().collect()
    }

    /// `joined_upstream` must hold exactly when there is downstream
    /// interest; state without interest must not linger.
    pub fn check_invariants(&self) -> Result<(), String> {
        for ((g, s), st) in &self.groups {
            if st.joined_upstream != st.wants_traffic() {
                return Err(format!(
                    "({s},{g}) joined_upstream={} but interest={}",
                    st.joined_upstream,
                    st.wants_traffic()
                ));
            }
            if let Some(up) = &st.upstream_iface {
                if st.downstream.contains_key(up) {
                    return Err(format!("({s},{g}) upstream {up} is also downstream"));
                }
            }
        }
        Ok(())
    }

    /// `show pim neighbors` lines: `<iface> <addr> <expiry-ms>`.
    pub fn show_neighbors(&self, now: SimTime) -> Vec<String> {
        self.neighbors
            .iter()
            .flat_map(|(i, n)| n.iter().map(move |(a, at)| format!("{i} {a} {}", at.saturating_sub(now))))
            .collect()
    }

    /// `show pim join` lines.
    pub fn show_join(&self) -> Vec<String> {
        self.groups
            .values()
            .map(|st| {
                let iif = if matches!(st.source, Source::Wildcard) && self.is_rp(st.group) {
                    REGISTER_VIF.to_string()
                } else {
                    st.upstream_iface.as_ref().map_or("-".to_string(), ToString::to_string)
                };
                let oifs: Vec<String> = st.oifs().iter().map(ToString::to_string).collect();
                let upstream = st.upstream_neighbor.unwrap_or(st.root);
                format!("({},{}) iif={} oifs={{{}}} upstream={}", st.source, st.group, iif, oifs.join(","), upstream)
            })
            .collect()
    }
}
