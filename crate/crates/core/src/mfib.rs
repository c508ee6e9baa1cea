// SPDX-License-Identifier: Apache-2.0
//! Multicast forwarding cache.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::addr::{Addr, GroupAddr, Source};
use crate::sim::{IfId, Packet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MfibError {
    #[error("incoming interface {0} also listed as outgoing")]
    IifInOifs(IfId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MfibEntry {
    pub source: Source,
    pub group: GroupAddr,
    pub iif: IfId,
    pub oifs: BTreeSet<IfId>,
    pub pkt_count: u64,
    pub byte_count: u64,
}

impl MfibEntry {
    pub fn new(source: Source, group: GroupAddr, iif: IfId, oifs: BTreeSet<IfId>) -> Self {
        MfibEntry { source, group, iif, oifs, pkt_count: 0, byte_count: 0 }
    }

    pub fn key(&self) -> (GroupAddr, Source) {
        (self.group, self.source)
    }

    /// Same route, ignoring counters.
    pub fn same_route(&self, other: &MfibEntry) -> bool {
        self.source == other.source && self.group == other.group && self.iif == other.iif && self.oifs == other.oifs
    }
}

impl fmt::Display for MfibEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let oifs: Vec<&str> = self.oifs.iter().map(IfId::as_str).collect();
        write!(
            f,
            "({},{}) iif={} oifs={{{}}} pkts={} bytes={}",
            self.source,
            self.group,
            self.iif,
            oifs.join(","),
            self.pkt_count,
            self.byte_count
        )
    }
}

/// Per-group data-plane accounting. Every arriving packet lands in exactly
/// one of `forwarded`, `rpf_drops`, `ttl_drops` or `no_entry_drops`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GroupStats {
    pub packets_in: u64,
    pub forwarded: u64,
    pub copies_out: u64,
    pub rpf_drops: u64,
    pub ttl_drops: u64,
    pub no_entry_drops: u64,
}

impl GroupStats {
    pub fn balanced(&self) -> bool {
        self.packets_in == self.forwarded + self.rpf_drops + self.ttl_drops + self.no_entry_drops
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForwardOutcome {
    Forwarded(Vec<(IfId, Packet)>),
    RpfDrop { expected: IfId },
    TtlDrop,
    NoEntry,
}

#[derive(Debug, Clone, Default)]
pub struct Mfib {
    entries: BTreeMap<(GroupAddr, Source), MfibEntry>,
    stats: BTreeMap<GroupAddr, GroupStats>,
}

impl Mfib {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs or updates an entry. Re-installing an existing key keeps
    /// its counters.
    pub fn install(&mut self, mut entry: MfibEntry) -> Result<(), MfibError> {
        if entry.oifs.contains(&entry.iif) {
            return Err(MfibError::IifInOifs(entry.iif));
        }
        if let Some(old) = self.entries.get(&entry.key()) {
            entry.pkt_count = old.pkt_count;
            entry.byte_count = old.byte_count;
        }
        self.entries.insert(entry.key(), entry);
        Ok(())
    }

    pub fn remove(&mut self, source: Source, group: GroupAddr) -> Option<MfibEntry> {
        self.entries.remove(&(group, source))
    }

    /// Replaces the whole table with `wanted`, keeping counters of
    /// entries whose key survives.
    pub fn sync(&mut self, wanted: Vec<MfibEntry>) -> Result<(), MfibError> {
        let keys: BTreeSet<_> = wanted.iter().map(MfibEntry::key).collect();
        self.entries.retain(|k, _| keys.contains(k));
        for e in wanted {
            self.install(e)?;
        }
        Ok(())
    }

    /// (S,G) exact match first, then (*,G).
    pub fn lookup(&self, src: Addr, group: GroupAddr) -> Option<&MfibEntry> {
        self.entries.get(&(group, Source::Specific(src))).or_else(|| self.entries.get(&(group, Source::Wildcard)))
    }

    pub fn forward(&mut self, pkt: &Packet, arrived_on: &IfId) -> ForwardOutcome {
        let Ok(group) = GroupAddr::new(pkt.dst) else {
            return ForwardOutcome::NoEntry;
        };
        let stats = self.stats.entry(group).or_default();
        stats.packets_in += 1;
        let key = if self.entries.contains_key(&(group, Source::Specific(pkt.src))) {
            (group, Source::Specific(pkt.src))
        } else {
            (group, Source::Wildcard)
        };
        let Some(entry) = self.entries.get_mut(&key) else {
            stats.no_entry_drops += 1;
            return ForwardOutcome::NoEntry;
        };
        if &entry.iif != arrived_on {
            stats.rpf_drops += 1;
            return ForwardOutcome::RpfDrop { expected: entry.iif.clone() };
        }
        if pkt.ttl <= 1 {
            stats.ttl_drops += 1;
            return ForwardOutcome::TtlDrop;
        }
        entry.pkt_count += 1;
        entry.byte_count += u64::from(pkt.payload_len);
        stats.forwarded += 1;
        let copies: Vec<(IfId, Packet)> = entry
            .oifs
            .iter()
            .filter(|o| *o != arrived_on)
            .map(|o| {
                let mut p = pkt.clone();
                p.ttl -= 1;
                (o.clone(), p)
            })
            .collect();
        stats.copies_out += copies.len() as u64;
        ForwardOutcome::Forwarded(copies)
    }

    pub fn entries(&self) -> impl Iterator<Item = &MfibEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> &BTreeMap<GroupAddr, GroupStats> {
        &self.stats
    }

    pub fn show(&self) -> Vec<String> {
        self.entries.values().map(ToString::to_string).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Proto;

    const G: &str = "224.224.224.224";

    fn g() -> GroupAddr {
        G.parse().unwrap()
    }

    fn src() -> Addr {
        "172.16.0.33".parse().unwrap()
    }

    fn oifs(names: &[&str]) -> BTreeSet<IfId> {
        names.iter().map(|n| IfId::from(*n)).collect()
    }

    fn pkt(ttl: u8) -> Packet {
        Packet::data(src(), g().addr(), ttl, 1234, 1316, 0)
    }

    fn r2_mfib() -> Mfib {
        let mut m = Mfib::new();
        m.install(MfibEntry::new(Source::Wildcard, g(), "sis1".into(), oifs(&["sis0", "sis2"]))).unwrap();
        m
    }

    #[test]
    fn forwards_copy_per_oif() {
        let mut m = r2_mfib();
        match m.forward(&pkt(64), &"sis1".into()) {
            ForwardOutcome::Forwarded(c) => {
                assert_eq!(c.len(), 2);
                assert!(c.iter().all(|(_, p)| p.ttl == 63 && p.proto == Proto::DataUdp));
                let out: Vec<_> = c.iter().map(|(i, _)| i.as_str()).collect();
                assert_eq!(out, vec!["sis0", "sis2"]);
            }
            o => panic!("{o:?}"),
        }
        let e = m.lookup(src(), g()).unwrap();
        assert_eq!((e.pkt_count, e.byte_count), (1, 1316));
    }

    #[test]
    fn wrong_iif_is_rpf_drop() {
        let mut m = r2_mfib();
        assert_eq!(m.forward(&pkt(64), &"sis0".into()), ForwardOutcome::RpfDrop { expected: "sis1".into() });
        assert_eq!(m.stats()[&g()].rpf_drops, 1);
    }

    #[test]
    fn ttl_one_is_dropped() {
        let mut m = r2_mfib();
        assert_eq!(m.forward(&pkt(1), &"sis1".into()), ForwardOutcome::TtlDrop);
        assert_eq!(m.stats()[&g()].ttl_drops, 1);
    }

    #[test]
    fn no_entry() {
        let mut m = Mfib::new();
        assert_eq!(m.forward(&pkt(64), &"eth0".into()), ForwardOutcome::NoEntry);
        assert!(m.stats()[&g()].balanced());
    }

    #[test]
    fn source_specific_takes_precedence() {
        let mut m = r2_mfib();
        m.install(MfibEntry::new(Source::Specific(src()), g(), "sis0".into(), oifs(&["sis2"]))).unwrap();
        assert_eq!(m.lookup(src(), g()).unwrap().iif, "sis0");
        let other: Addr = "10.9.9.9".parse().unwrap();
        assert_eq!(m.lookup(other, g()).unwrap().iif, "sis1");
    }

    #[test]
    fn reinstall_keeps_counters() {
        let mut m = r2_mfib();
        m.forward(&pkt(64), &"sis1".into());
        m.install(MfibEntry::new(Source::Wildcard, g(), "sis1".into(), oifs(&["sis0", "sis2"]))).unwrap();
        assert_eq!(m.lookup(src(), g()).unwrap().pkt_count, 1);
        m.sync(vec![MfibEntry::new(Source::Wildcard, g(), "sis1".into(), oifs(&["sis0"]))]).unwrap();
        assert_eq!(m.lookup(src(), g()).unwrap().pkt_count, 1);
    }

    #[test]
    fn removal_freezes_forwarding() {
        let mut m = r2_mfib();
        m.forward(&pkt(64), &"sis1".into());
        m.remove(Source::Wildcard, g());
        assert_eq!(m.forward(&pkt(64), &"sis1".into()), ForwardOutcome::NoEntry);
        let s = m.stats()[&g()];
        assert_eq!((s.packets_in, s.forwarded, s.no_entry_drops), (2, 1, 1));
        assert!(s.balanced());
    }

    #[test]
    fn iif_in_oifs_rejected() {
        let mut m = Mfib::new();
        let e = MfibEntry::new(Source::Wildcard, g(), "sis1".into(), oifs(&["sis1"]));
        assert_eq!(m.install(e), Err(MfibError::IifInOifs("sis1".into())));
    }

    #[test]
    fn show_format() {
        let m = r2_mfib();
        assert_eq!(m.show(), vec!["(*,224.224.224.224) iif=sis1 oifs={sis0,sis2} pkts=0 bytes=0"]);
    }
}
