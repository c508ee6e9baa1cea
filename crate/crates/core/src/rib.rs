// SPDX-License-Identifier: Apache-2.0
//! Static unicast routing table with longest-prefix match.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::addr::{Addr, IfAddr, Prefix};
use crate::sim::IfId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RibError {
    #[error("next hop {0} is not inside any connected prefix")]
    UnreachableNextHop(Addr),
    #[error("no route to {0}")]
    NoRoute(Addr),
    #[error("{0} is a multicast address")]
    MulticastTarget(Addr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NextHop {
    Connected,
    Via(Addr),
}

impl fmt::Display for NextHop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NextHop::Connected => f.write_str("connected"),
            NextHop::Via(a) => a.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteEntry {
    pub prefix: Prefix,
    pub next_hop: NextHop,
    pub out_iface: IfId,
}

impl RouteEntry {
    pub fn connected(ifaddr: IfAddr, iface: IfId) -> Self {
        RouteEntry { prefix: ifaddr.subnet(), next_hop: NextHop::Connected, out_iface: iface }
    }
}

impl fmt::Display for RouteEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} via {} dev {}", self.prefix, self.next_hop, self.out_iface)
    }
}

/// Result of a reverse-path lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rpf {
    pub iface: IfId,
    pub upstream: NextHop,
}

impl Rpf {
    /// The neighbor to address when joining toward `target`.
    pub fn neighbor(&self, target: Addr) -> Addr {
        match self.upstream {
            NextHop::Connected => target,
            NextHop::Via(a) => a,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RibTable {
    entries: BTreeMap<Prefix, RouteEntry>,
}

impl RibTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces the route for `entry.prefix`. Static routes must
    /// point at a next hop on a connected subnet; the outgoing interface
    /// is taken from that subnet.
    pub fn add_route(&mut self, mut entry: RouteEntry) -> Result<(), RibError> {
        if let NextHop::Via(nh) = entry.next_hop {
            let conn = self.connected_covering(nh).ok_or(RibError::UnreachableNextHop(nh))?;
            entry.out_iface = conn.out_iface.clone();
        }
        self.entries.insert(entry.prefix, entry);
        Ok(())
    }

    pub fn add_static(&mut self, prefix: Prefix, next_hop: Addr) -> Result<(), RibError> {
        self.add_route(RouteEntry { prefix, next_hop: NextHop::Via(next_hop), out_iface: IfId::from("") })
    }

    pub fn remove_route(&mut self, prefix: &Prefix) -> Option<RouteEntry> {
        self.entries.remove(prefix)
    }

    fn connected_covering(&self, addr: Addr) -> Option<&RouteEntry> {
        self.entries
            .values()
            .filter(|e| e.next_hop == NextHop::Connected && e.prefix.contains(addr))
            .max_by_key(|e| e.prefix.len())
    }

    /// Longest-prefix match for `dst`.
    pub fn best_match(&self, dst: Addr) -> Option<&RouteEntry> {
        (0..=32u8).rev().find_map(|len| self.entries.get(&Prefix::truncating(dst, len)))
    }

    /// Returns the next hop and outgoing interface; connected routes
    /// resolve to `dst` itself.
    pub fn lookup(&self, dst: Addr) -> Result<(Addr, IfId), RibError> {
        let e = self.best_match(dst).ok_or(RibError::NoRoute(dst))?;
        let nh = match e.next_hop {
            NextHop::Connected => dst,
            NextHop::Via(a) => a,
        };
        Ok((nh, e.out_iface.clone()))
    }

    /// The interface and upstream hop this node uses to reach `src`.
    pub fn rpf_lookup(&self, src: Addr) -> Result<Rpf, RibError> {
        if src.is_multicast() {
            return Err(RibError::MulticastTarget(src));
        }
        let e = self.best_match(src).ok_or(RibError::NoRoute(src))?;
        Ok(Rpf { iface: e.out_iface.clone(), upstream: e.next_hop })
    }

    pub fn entries(&self) -> impl Iterator<Item = &RouteEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `show route` output, sorted by prefix.
    pub fn show(&self) -> String {
        let mut out = String::new();
        for e in self.entries.values() {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> Addr {
        s.parse().unwrap()
    }

    fn p(s: &str) -> Prefix {
        s.parse().unwrap()
    }

    fn ifa(s: &str) -> IfAddr {
        s.parse().unwrap()
    }

    fn r2() -> RibTable {
        let mut t = RibTable::new();
        t.add_route(RouteEntry::connected(ifa("172.16.1.240/24"), "sis0".into())).unwrap();
        t.add_route(RouteEntry::connected(ifa("172.16.2.240/24"), "sis1".into())).unwrap();
        t.add_route(RouteEntry::connected(ifa("172.16.3.240/24"), "sis2".into())).unwrap();
        t.add_static(p("172.16.0.0/24"), a("172.16.2.245")).unwrap();
        t
    }

    fn r1() -> RibTable {
        let mut t = RibTable::new();
        t.add_route(RouteEntry::connected(ifa("172.16.0.240/24"), "eth0".into())).unwrap();
        t.add_route(RouteEntry::connected(ifa("172.16.2.245/24"), "eth1".into())).unwrap();
        t.add_static(p("172.16.1.0/24"), a("172.16.2.240")).unwrap();
        t.add_static(p("172.16.3.0/24"), a("172.16.2.240")).unwrap();
        t
    }

    #[test]
    fn static_route_toward_source_network() {
        let t = r2();
        assert_eq!(t.lookup(a("172.16.0.33")).unwrap(), (a("172.16.2.245"), IfId::from("sis1")));
        assert_eq!(
            t.rpf_lookup(a("172.16.0.33")).unwrap(),
            Rpf { iface: "sis1".into(), upstream: NextHop::Via(a("172.16.2.245")) }
        );
    }

    #[test]
    fn r1_routes_toward_r2_networks() {
        let t = r1();
        assert_eq!(t.lookup(a("172.16.3.1")).unwrap(), (a("172.16.2.240"), IfId::from("eth1")));
        assert_eq!(t.rpf_lookup(a("172.16.0.33")).unwrap(), Rpf { iface: "eth0".into(), upstream: NextHop::Connected });
    }

    #[test]
    fn default_route() {
        let mut t = RibTable::new();
        t.add_route(RouteEntry::connected(ifa("172.16.1.1/24"), "eth0".into())).unwrap();
        t.add_static(Prefix::DEFAULT, a("172.16.1.240")).unwrap();
        assert_eq!(t.lookup(a("8.8.8.8")).unwrap(), (a("172.16.1.240"), IfId::from("eth0")));
        // connected beats default
        assert_eq!(t.lookup(a("172.16.1.7")).unwrap(), (a("172.16.1.7"), IfId::from("eth0")));
    }

    #[test]
    fn unreachable_next_hop() {
        let mut t = r2();
        assert_eq!(t.add_static(p("10.0.0.0/8"), a("9.9.9.9")), Err(RibError::UnreachableNextHop(a("9.9.9.9"))));
    }

    #[test]
    fn no_route_and_multicast_rpf() {
        let t = r2();
        assert_eq!(t.lookup(a("8.8.8.8")), Err(RibError::NoRoute(a("8.8.8.8"))));
        assert!(matches!(t.rpf_lookup(a("224.224.224.224")), Err(RibError::MulticastTarget(_))));
    }

    #[test]
    fn re_add_replaces() {
        let mut t = r2();
        t.add_static(p("172.16.0.0/24"), a("172.16.1.9")).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.lookup(a("172.16.0.33")).unwrap(), (a("172.16.1.9"), IfId::from("sis0")));
    }

    #[test]
    fn show_route_sorted() {
        let out = r2().show();
        let lines: Vec<_> = out.lines().collect();
        assert_eq!(
            lines,
            vec![
                "172.16.0.0/24 via 172.16.2.245 dev sis1",
                "172.16.1.0/24 via connected dev sis0",
                "172.16.2.0/24 via connected dev sis1",
                "172.16.3.0/24 via connected dev sis2",
            ]
        );
    }
}
