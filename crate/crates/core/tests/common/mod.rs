// SPDX-License-Identifier: Apache-2.0
// Helpers shared by the integration tests. Each test binary uses a subset.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use mcastsim::addr::{Addr, GroupAddr, Prefix, Source};
use mcastsim::codec::{GroupRecord, IgmpMessage, JoinPruneEntry, PimMessage, RecordType};
use mcastsim::network::Network;
use mcastsim::pim::REGISTER_VIF;
use mcastsim::scenario::{load, Input, SimInstance};
use mcastsim::sim::SimTime;
use proptest::prelude::*;

pub fn fixture(rel: &str) -> String {
    format!("{}/fixtures/{rel}", env!("CARGO_MANIFEST_DIR"))
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn input(rel: &str) -> Input {
    Input::new(rel, read_fixture(rel))
}

pub fn reference_configs() -> Vec<(String, Input)> {
    vec![("R1".to_string(), input("reference/R1.boot")), ("R2".to_string(), input("reference/R2.boot"))]
}

pub fn reference() -> SimInstance {
    load(&input("reference/topology.topo"), &reference_configs(), &input("reference/scenario.scn"), None)
        .expect("reference bundle loads")
}

pub fn reference_with_scenario(text: &str) -> SimInstance {
    load(&input("reference/topology.topo"), &reference_configs(), &Input::new("inline.scn", text), None)
        .unwrap_or_else(|e| panic!("{e:?}"))
}

pub const GROUP: &str = "224.224.224.224";

pub fn group() -> GroupAddr {
    GROUP.parse().unwrap()
}

// ---- longest-prefix-match oracle -------------------------------------

/// Linear scan: the longest prefix whose top `len` bits equal the address's,
/// bit by bit.
pub fn brute_force_lpm(table: &[Prefix], a: Addr) -> Option<Prefix> {
    let bit = |x: u32, i: u32| (x >> (31 - i)) & 1;
    table
        .iter()
        .filter(|p| (0..u32::from(p.len())).all(|i| bit(p.network().0, i) == bit(a.0, i)))
        .max_by_key(|p| p.len())
        .copied()
}

// ---- multicast tree oracle -------------------------------------------

/// Checks that, for `group`, the oif edges of every router's MFIB form a
/// tree rooted at the RP that reaches exactly the routers with members,
/// and that every iif agrees with the RIB's RPF answer for the RP.
pub fn check_tree(net: &Network, group: GroupAddr, rp_router: &str) -> Result<(), String> {
    // (router, oif) -> neighbouring router across that link
    let mut edges: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut has_state = BTreeSet::new();
    let mut member_routers = BTreeSet::new();
    for r in net.routers() {
        let name = r.name.to_string();
        if r.igmp.values().any(|i| i.is_member(group)) {
            member_routers.insert(name.clone());
        }
        let Some(e) = r.mfib.entries().find(|e| e.group == group && e.source == Source::Wildcard) else {
            continue;
        };
        has_state.insert(name.clone());
        let rp = r.pim.rp_for(group).ok_or(format!("{name}: no RP"))?;
        if name == rp_router {
            if e.iif.as_str() != REGISTER_VIF {
                return Err(format!("{name}: RP iif {} is not {REGISTER_VIF}", e.iif));
            }
        } else {
            let rpf = r.rib.rpf_lookup(rp).map_err(|e| format!("{name}: {e}"))?;
            if rpf.iface != e.iif {
                return Err(format!("{name}: iif {} but rpf({rp}) = {}", e.iif, rpf.iface));
            }
        }
        for oif in &e.oifs {
            let (link, dir) = net.attachment(&name, oif.as_str()).ok_or(format!("{name}:{oif} not attached"))?;
            let peer = net.link(link).receiver(dir).node.to_string();
            if net.router(&peer).is_some() {
                edges.entry(name.clone()).or_default().insert(peer);
            } else if !r.igmp.get(oif).is_some_and(|i| i.is_member(group)) {
                return Err(format!("{name}: oif {oif} leads to host {peer} without membership"));
            }
        }
    }
    if has_state.is_empty() {
        return if member_routers.is_empty() { Ok(()) } else { Err("members but no tree".into()) };
    }
    if !has_state.contains(rp_router) {
        return Err(format!("tree state exists but not on RP {rp_router}"));
    }
    // walk from the RP: every node reached once, every edge points to a
    // node that holds state and whose iif faces back at us
    let mut seen = BTreeSet::from([rp_router.to_string()]);
    let mut q = VecDeque::from([rp_router.to_string()]);
    while let Some(n) = q.pop_front() {
        for child in edges.get(&n).into_iter().flatten() {
            if !seen.insert(child.clone()) {
                return Err(format!("{child} reached twice: not a tree"));
            }
            let cr = net.router(child).unwrap();
            let e = cr
                .mfib
                .entries()
                .find(|e| e.group == group && e.source == Source::Wildcard)
                .ok_or(format!("{n} forwards to {child}, which has no state"))?;
            let (link, dir) = net.attachment(child, e.iif.as_str()).ok_or("iif unattached")?;
            if net.link(link).receiver(dir).node.as_str() != n {
                return Err(format!("{child}: iif {} does not face parent {n}", e.iif));
            }
            q.push_back(child.clone());
        }
    }
    if seen != has_state {
        return Err(format!("state on {has_state:?} but tree reaches {seen:?}"));
    }
    // spanning exactly member-bearing nodes: every leaf has members
    for n in &seen {
        let is_leaf = edges.get(n).is_none_or(BTreeSet::is_empty);
        if is_leaf && !member_routers.contains(n) {
            return Err(format!("{n} is a leaf without members"));
        }
    }
    for m in &member_routers {
        if !seen.contains(m) {
            return Err(format!("{m} has members but is not on the tree"));
        }
    }
    Ok(())
}

// ---- random 4-router topologies --------------------------------------

pub struct RandomTopo {
    pub topology: String,
    pub configs: Vec<(String, String)>,
    pub hosts: Vec<String>,
    pub rp_router: String,
}

/// Four routers joined by a random spanning tree, a source on R1, one host
/// per router. Addresses: router link i is 10.0.i.0/24; host on Rk is
/// 10.1.k.0/24; the source sits on 10.2.0.0/24. All routers point static
/// routes along the tree, so unicast paths are unique.
pub fn random_topology(parents: [usize; 3], rp: usize) -> RandomTopo {
    let names = ["R0", "R1", "R2", "R3"];
    // link i joins router i+1 to parents[i] (< i+1)
    struct Iface {
        name: String,
        addr: String,
    }
    let mut ifaces: Vec<Vec<Iface>> = (0..4).map(|_| Vec::new()).collect();
    let mut topo = String::from("source SRV eth0 10.2.0.1 255.255.255.0 10.2.0.254\n");
    for n in names {
        topo.push_str(&format!("router {n}\n"));
    }
    let mut adj: Vec<Vec<(usize, String)>> = vec![Vec::new(); 4];
    for (i, &p) in parents.iter().enumerate() {
        let c = i + 1;
        let (pi, ci) = (format!("l{i}p"), format!("l{i}c"));
        ifaces[p].push(Iface { name: pi.clone(), addr: format!("10.0.{i}.1") });
        ifaces[c].push(Iface { name: ci.clone(), addr: format!("10.0.{i}.2") });
        adj[p].push((c, format!("10.0.{i}.2")));
        adj[c].push((p, format!("10.0.{i}.1")));
        topo.push_str(&format!("link l{i} {}:{pi} {}:{ci}\n", names[p], names[c]));
    }
    let mut hosts = Vec::new();
    for k in 0..4 {
        ifaces[k].push(Iface { name: "h".into(), addr: format!("10.1.{k}.254") });
        topo.push_str(&format!("host H{k} eth0 10.1.{k}.1 255.255.255.0 10.1.{k}.254\n"));
        topo.push_str(&format!("link h{k} {}:h H{k}:eth0\n", names[k]));
        hosts.push(format!("H{k}"));
    }
    ifaces[1].push(Iface { name: "s".into(), addr: "10.2.0.254".into() });
    topo.push_str("link s SRV:eth0 R1:s\n");

    // subnet of each router's own interfaces
    let own = |k: usize| -> Vec<String> {
        ifaces[k]
            .iter()
            .map(|i| {
                let o: Vec<&str> = i.addr.split('.').collect();
                format!("{}.{}.{}.0/24", o[0], o[1], o[2])
            })
            .collect()
    };
    let all_subnets: BTreeSet<String> = (0..4).flat_map(own).collect();
    let rp_addr = ifaces[rp][0].addr.clone();
    let mut configs = Vec::new();
    for k in 0..4 {
        // next hop towards each router, by BFS over the tree
        let mut via: BTreeMap<usize, String> = BTreeMap::new();
        let mut q: VecDeque<(usize, Option<String>)> = VecDeque::from([(k, None)]);
        let mut seen = BTreeSet::from([k]);
        while let Some((n, first)) = q.pop_front() {
            if let Some(f) = &first {
                via.insert(n, f.clone());
            }
            for (m, addr) in &adj[n] {
                if seen.insert(*m) {
                    q.push_back((*m, first.clone().or(Some(addr.clone()))));
                }
            }
        }
        let mut s = String::from("interfaces {\n");
        for i in &ifaces[k] {
            s.push_str(&format!(
                "  interface {0} {{\n    vif {0} {{\n      address {1} {{\n        prefix-length: 24\n      }}\n    }}\n  }}\n",
                i.name, i.addr
            ));
        }
        s.push_str("}\nprotocols {\n  static {\n");
        let mine: BTreeSet<String> = own(k).into_iter().collect();
        let mut routes: BTreeMap<String, String> = BTreeMap::new();
        for (m, nh) in &via {
            for sub in own(*m) {
                if !mine.contains(&sub) && all_subnets.contains(&sub) {
                    routes.entry(sub).or_insert_with(|| nh.clone());
                }
            }
        }
        for (sub, nh) in &routes {
            s.push_str(&format!("    route {sub} {{\n      next-hop: {nh}\n    }}\n"));
        }
        s.push_str("  }\n  igmp {\n    interface h {\n      vif h {\n      }\n    }\n  }\n  pimsm4 {\n");
        for i in &ifaces[k] {
            s.push_str(&format!("    interface {0} {{\n      vif {0} {{\n      }}\n    }}\n", i.name));
        }
        s.push_str(&format!(
            "    static-rps {{\n      rp {rp_addr} {{\n        group-prefix 224.0.0.0/4 {{\n        }}\n      }}\n    }}\n  }}\n}}\n"
        ));
        configs.push((names[k].to_string(), s));
    }
    RandomTopo { topology: topo, configs, hosts, rp_router: names[rp].to_string() }
}

pub fn load_random(t: &RandomTopo, scenario: &str) -> SimInstance {
    let cfgs: Vec<(String, Input)> =
        t.configs.iter().map(|(n, c)| (n.clone(), Input::new(format!("{n}.boot"), c.clone()))).collect();
    load(&Input::new("random.topo", t.topology.clone()), &cfgs, &Input::new("random.scn", scenario), None)
        .unwrap_or_else(|e| panic!("{e:?}\n{}\n{:?}", t.topology, t.configs))
}

// ---- message strategies -------------------------------------------------

pub fn any_addr() -> impl Strategy<Value = Addr> {
    any::<u32>().prop_map(Addr)
}

pub fn any_group() -> impl Strategy<Value = GroupAddr> {
    (0u32..1 << 28).prop_map(|low| GroupAddr::new(Addr(0xE000_0000 | low)).unwrap())
}

pub fn any_secs() -> impl Strategy<Value = SimTime> {
    (0u64..=0xFFFF).prop_map(SimTime::from_secs)
}

pub fn any_record() -> impl Strategy<Value = GroupRecord> {
    (
        prop_oneof![
            Just(RecordType::ModeIsInclude),
            Just(RecordType::ModeIsExclude),
            Just(RecordType::ChangeToInclude),
            Just(RecordType::ChangeToExclude)
        ],
        any_group(),
        prop::collection::vec(any_addr(), 0..5),
    )
        .prop_map(|(record_type, group, sources)| GroupRecord { record_type, group, sources })
}

pub fn any_igmp() -> impl Strategy<Value = IgmpMessage> {
    prop_oneof![
        (prop::option::of(any_group()), any_secs())
            .prop_map(|(group, max_resp_time)| IgmpMessage::MembershipQuery { group, max_resp_time }),
        prop::collection::vec(any_record(), 1..4).prop_map(|records| IgmpMessage::V3MembershipReport { records }),
        any_group().prop_map(|group| IgmpMessage::LeaveGroup { group }),
    ]
}

pub fn any_entry() -> impl Strategy<Value = JoinPruneEntry> {
    (any_group(), prop::option::of(any_addr()), any_addr()).prop_map(|(group, s, rp)| JoinPruneEntry {
        group,
        source: s.map_or(Source::Wildcard, Source::Specific),
        rp,
    })
}

pub fn any_pim() -> impl Strategy<Value = PimMessage> {
    prop_oneof![
        any_secs().prop_map(|holdtime| PimMessage::Hello { holdtime }),
        (any_addr(), any_secs(), prop::collection::vec(any_entry(), 0..4), prop::collection::vec(any_entry(), 0..4))
            .prop_map(|(upstream_neighbor, holdtime, joins, prunes)| {
                // joins and prunes must not share a (source, group)
                let jk: BTreeSet<_> = joins.iter().map(|e| (e.group, e.source)).collect();
                let prunes = prunes.into_iter().filter(|e| !jk.contains(&(e.group, e.source))).collect();
                PimMessage::JoinPrune { upstream_neighbor, holdtime, joins, prunes }
            }),
        prop::collection::vec(any::<u8>(), 0..64).prop_map(|inner_packet| PimMessage::Register { inner_packet }),
        (any_group(), any_addr()).prop_map(|(group, source)| PimMessage::RegisterStop { group, source }),
    ]
}
