// SPDX-License-Identifier: Apache-2.0
// Invariants of the lower layers, checked on generated inputs.
mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{any_addr, brute_force_lpm, load_random, random_topology};
use mcastsim::addr::{mask, mask_to_len, prefix_contains, Addr, GroupAddr, Prefix, Source};
use mcastsim::codec::{GroupRecord, IgmpMessage, RecordType};
use mcastsim::igmp::{IgmpIfState, IgmpTimers, Role};
use mcastsim::mfib::{ForwardOutcome, Mfib, MfibEntry};
use mcastsim::rib::{RibTable, RouteEntry};
use mcastsim::sim::{Dir, IfId, Packet, SimTime};
use proptest::prelude::*;

fn any_prefix() -> impl Strategy<Value = Prefix> {
    (any::<u32>(), 0u8..=32).prop_map(|(a, l)| Prefix::truncating(Addr(a), l))
}

// ---- addressing ------------------------------------------------------------

proptest! {
    #[test]
    fn contains_matches_bitwise_oracle(p in any_prefix(), a in any_addr()) {
        let want = (0..u32::from(p.len())).all(|i| (p.network().0 >> (31 - i)) & 1 == (a.0 >> (31 - i)) & 1);
        prop_assert_eq!(prefix_contains(&p, a), want);
    }

    #[test]
    fn text_forms_round_trip(p in any_prefix(), a in any_addr()) {
        prop_assert_eq!(p.to_string().parse::<Prefix>(), Ok(p));
        prop_assert_eq!(a.to_string().parse::<Addr>(), Ok(a));
    }

    #[test]
    fn mask_length_round_trip(len in 0u8..=32) {
        prop_assert_eq!(mask_to_len(Addr(mask(len))), Ok(len));
        prop_assert_eq!(mask(len).count_ones(), u32::from(len));
    }

    #[test]
    fn non_canonical_prefix_rejected(a in any::<u32>(), len in 0u8..32) {
        let host_bits = a & !mask(len);
        prop_assert_eq!(Prefix::new(Addr(a), len).is_ok(), host_bits == 0);
    }

    #[test]
    fn group_addresses_are_class_d(a in any_addr()) {
        prop_assert_eq!(GroupAddr::new(a).is_ok(), a.0 >> 28 == 0xE);
    }
}

// ---- rib ---------------------------------------------------------------------

fn table(routes: &[(Prefix, u8)]) -> RibTable {
    let mut t = RibTable::new();
    for (p, i) in routes {
        t.add_route(RouteEntry {
            prefix: *p,
            next_hop: mcastsim::rib::NextHop::Connected,
            out_iface: IfId::from(format!("if{i}")),
        })
        .unwrap();
    }
    t
}

proptest! {
    #[test]
    fn rpf_uses_the_lookup_interface(routes in prop::collection::vec((any_prefix(), 0u8..4), 0..12), a in any_addr()) {
        let t = table(&routes);
        let ps: Vec<Prefix> = t.entries().map(|e| e.prefix).collect();
        prop_assert_eq!(t.best_match(a).map(|e| e.prefix), brute_force_lpm(&ps, a));
        match (t.lookup(a), t.rpf_lookup(a)) {
            (Ok((_, i)), Ok(r)) => prop_assert_eq!(i, r.iface),
            (Err(_), Err(_)) => {}
            (Ok(_), Err(_)) => prop_assert!(a.is_multicast()),
            (l, r) => prop_assert!(false, "lookup {:?} rpf {:?}", l, r),
        }
    }

    #[test]
    fn add_then_remove_restores(routes in prop::collection::vec((any_prefix(), 0u8..4), 0..12), extra in any_prefix()) {
        let mut t = table(&routes);
        prop_assume!(t.entries().all(|e| e.prefix != extra));
        let before = t.clone();
        t.add_route(RouteEntry::connected(
            mcastsim::addr::IfAddr::new(extra.network(), extra.len()).unwrap(),
            IfId::from("x"),
        )).unwrap();
        prop_assert!(t.remove_route(&extra).is_some());
        prop_assert_eq!(t, before);
    }
}

// ---- igmp ---------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Op {
    Report(u8, u8),
    Leave(u8, u8),
    Tick(u64),
}

fn any_op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u8..3, 0u8..3).prop_map(|(h, g)| Op::Report(h, g)),
        (0u8..3, 0u8..3).prop_map(|(h, g)| Op::Leave(h, g)),
        (1u64..300_000).prop_map(Op::Tick),
    ]
}

fn g(i: u8) -> GroupAddr {
    GroupAddr::new(Addr::new(232, 1, 1, i)).unwrap()
}

proptest! {
    #[test]
    fn membership_changes_alternate(ops in prop::collection::vec(any_op(), 1..40), tracking in any::<bool>()) {
        let mut st = IgmpIfState::new(IfId::from("e0"), Role::RouterSide, IgmpTimers::default());
        st.explicit_tracking = tracking;
        let mut now = SimTime(0);
        let mut last: BTreeMap<GroupAddr, bool> = BTreeMap::new();
        for op in ops {
            let changes = match op {
                Op::Report(h, gi) => {
                    let msg = IgmpMessage::V3MembershipReport {
                        records: vec![GroupRecord { record_type: RecordType::ChangeToExclude, group: g(gi), sources: vec![] }],
                    };
                    st.router_receive_report(&msg, Addr::new(10, 0, 0, h + 1), now).unwrap().changes
                }
                Op::Leave(h, gi) => st
                    .router_receive_report(&IgmpMessage::LeaveGroup { group: g(gi) }, Addr::new(10, 0, 0, h + 1), now)
                    .unwrap()
                    .changes,
                Op::Tick(d) => {
                    now = now + SimTime(d);
                    st.expire(now)
                }
            };
            for c in changes {
                let prev = last.get(&c.group).copied().unwrap_or(false);
                prop_assert_ne!(prev, c.joined, "repeated edge for {}", c.group);
                last.insert(c.group, c.joined);
            }
            for gi in 0..3 {
                prop_assert_eq!(st.is_member(g(gi)), last.get(&g(gi)).copied().unwrap_or(false));
            }
        }
    }

    #[test]
    fn membership_expires_exactly_at_gmi(t0 in 0u64..1_000_000) {
        let mut st = IgmpIfState::new(IfId::from("e0"), Role::RouterSide, IgmpTimers::default());
        let msg = IgmpMessage::V3MembershipReport {
            records: vec![GroupRecord { record_type: RecordType::ModeIsExclude, group: g(0), sources: vec![] }],
        };
        st.router_receive_report(&msg, Addr::new(10, 0, 0, 1), SimTime(t0)).unwrap();
        prop_assert!(st.expire(SimTime(t0 + 259_999)).is_empty());
        prop_assert_eq!(st.expire(SimTime(t0 + 260_000)).len(), 1);
    }
}

// ---- mfib ---------------------------------------------------------------------

fn ifs() -> impl Strategy<Value = IfId> {
    (0u8..4).prop_map(|i| IfId::from(format!("i{i}")))
}

fn any_entry() -> impl Strategy<Value = MfibEntry> {
    (prop::option::of(0u8..3), 0u8..2, ifs(), prop::collection::btree_set(ifs(), 0..4)).prop_map(
        |(s, gi, iif, mut oifs)| {
            oifs.remove(&iif);
            let source = s.map_or(Source::Wildcard, |s| Source::Specific(Addr::new(10, 0, 0, s)));
            MfibEntry::new(source, g(gi), iif, oifs)
        },
    )
}

proptest! {
    #[test]
    fn forwarding_accounting(
        entries in prop::collection::vec(any_entry(), 0..6),
        pkts in prop::collection::vec((0u8..3, 0u8..2, ifs(), 0u8..4), 1..40),
    ) {
        let mut m = Mfib::new();
        for e in entries {
            m.install(e).unwrap();
        }
        let mut copies = 0u64;
        for (s, gi, iif, ttl) in pkts {
            let p = Packet::data(Addr::new(10, 0, 0, s), g(gi).addr(), ttl.max(1), 1234, 100, 0);
            let want = m.lookup(p.src, g(gi)).cloned();
            match m.forward(&p, &iif) {
                ForwardOutcome::Forwarded(out) => {
                    let e = want.expect("forwarded without an entry");
                    prop_assert_eq!(&e.iif, &iif);
                    let got: BTreeSet<IfId> = out.iter().map(|(i, _)| i.clone()).collect();
                    prop_assert!(!got.contains(&iif));
                    prop_assert_eq!(got, e.oifs);
                    prop_assert!(out.iter().all(|(_, q)| q.ttl == p.ttl - 1));
                    copies += out.len() as u64;
                }
                ForwardOutcome::RpfDrop { expected } => prop_assert_ne!(expected, iif),
                ForwardOutcome::TtlDrop => prop_assert!(p.ttl <= 1),
                ForwardOutcome::NoEntry => prop_assert!(want.is_none()),
            }
        }
        prop_assert!(m.stats().values().all(|s| s.balanced()));
        prop_assert_eq!(m.stats().values().map(|s| s.copies_out).sum::<u64>(), copies);
    }

    #[test]
    fn iif_never_an_oif(e in any_entry(), extra in ifs()) {
        let mut e = e;
        let iif = e.iif.clone();
        e.oifs.insert(extra.clone());
        let mut m = Mfib::new();
        prop_assert_eq!(m.install(e).is_ok(), extra != iif);
    }
}

// ---- simulated network ------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn links_conserve_packets_and_time_is_monotone(
        p1 in 0usize..=1, p2 in 0usize..=2, rp in 0usize..4,
        joins in prop::collection::vec((0usize..4, 1000u64..6000), 1..5),
        horizon in 6000u64..9000,
    ) {
        let t = random_topology([0, p1, p2], rp);
        let mut scen = String::from("500 source_start 10.2.0.1 224.224.224.224 1234 50 200\n");
        let mut joins = joins;
        joins.sort_by_key(|j| j.1);
        for (h, at) in joins {
            let host = &t.hosts[h % t.hosts.len()];
            scen.push_str(&format!("{at} host_join {host} 224.224.224.224\n"));
        }
        let mut inst = load_random(&t, &scen);
        let h = SimTime(horizon);
        inst.net.run_until(h);

        let log = inst.net.log();
        prop_assert!(log.windows(2).all(|w| w[0].time <= w[1].time));

        // every tx that had time to arrive was received, nothing more
        let mut sent: BTreeMap<(usize, Dir), u64> = BTreeMap::new();
        for r in log.iter().filter(|r| r.kind == "tx") {
            let iface = r.detail.split_whitespace().next().unwrap();
            let (link, dir) = inst.net.attachment(&r.node, iface).unwrap();
            if r.time + inst.net.link(link).delay <= h {
                *sent.entry((link.0, dir)).or_default() += 1;
            }
        }
        for (i, l) in inst.net.links().iter().enumerate() {
            let c = l.snapshot(h);
            for d in [Dir::Forward, Dir::Reverse] {
                prop_assert_eq!(c.dir(d).received, sent.get(&(i, d)).copied().unwrap_or(0), "{} {:?}", l.name, d);
            }
        }
    }
}
