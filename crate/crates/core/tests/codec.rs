// SPDX-License-Identifier: Apache-2.0
mod common;

use common::{any_igmp, any_pim, group, read_fixture};
use mcastsim::addr::{Addr, Source};
use mcastsim::codec::{
    decode, from_hex, internet_checksum, to_hex, CodecError, ControlMessage, GroupRecord, IgmpMessage, JoinPruneEntry,
    PimMessage, RecordType,
};
use mcastsim::sim::{Proto, SimTime};
use proptest::prelude::*;

fn a(s: &str) -> Addr {
    s.parse().unwrap()
}

fn report(record_type: RecordType, sources: &[&str]) -> ControlMessage {
    ControlMessage::Igmp(IgmpMessage::V3MembershipReport {
        records: vec![GroupRecord { record_type, group: group(), sources: sources.iter().map(|s| a(s)).collect() }],
    })
}

fn star_g() -> JoinPruneEntry {
    JoinPruneEntry { group: group(), source: Source::Wildcard, rp: a("172.16.2.245") }
}

fn expected(name: &str) -> ControlMessage {
    use ControlMessage::{Igmp, Pim};
    match name {
        "report-to-exclude-any" => report(RecordType::ChangeToExclude, &[]),
        "report-to-include-none" => report(RecordType::ChangeToInclude, &[]),
        "report-include-two" => report(RecordType::ModeIsInclude, &["172.16.0.1", "172.16.0.2"]),
        "query-general" => Igmp(IgmpMessage::MembershipQuery { group: None, max_resp_time: SimTime::from_secs(10) }),
        "query-group" => {
            Igmp(IgmpMessage::MembershipQuery { group: Some(group()), max_resp_time: SimTime::from_secs(1) })
        }
        "leave" => Igmp(IgmpMessage::LeaveGroup { group: group() }),
        "hello-105" => Pim(PimMessage::Hello { holdtime: SimTime(105_000) }),
        "join-star-g" => Pim(PimMessage::JoinPrune {
            upstream_neighbor: a("172.16.2.245"),
            holdtime: SimTime::from_secs(210),
            joins: vec![star_g()],
            prunes: vec![],
        }),
        "prune-star-g" => Pim(PimMessage::JoinPrune {
            upstream_neighbor: a("172.16.2.245"),
            holdtime: SimTime::from_secs(210),
            joins: vec![],
            prunes: vec![star_g()],
        }),
        "register-stop" => Pim(PimMessage::RegisterStop { group: group(), source: a("172.16.0.1") }),
        "register-3" => Pim(PimMessage::Register { inner_packet: vec![1, 2, 3] }),
        other => panic!("no expectation for vector {other}"),
    }
}

#[test]
fn golden_vectors() {
    let text = read_fixture("codec_vectors.txt");
    let mut n = 0;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let [proto, name, hex] = line.split_whitespace().collect::<Vec<_>>()[..] else {
            panic!("bad vector line {line}");
        };
        let proto = match proto {
            "igmp" => Proto::Igmp,
            "pim" => Proto::Pim,
            p => panic!("proto {p}"),
        };
        let bytes = from_hex(hex).unwrap();
        let msg = expected(name);
        assert_eq!(to_hex(&msg.encode()), hex, "{name}");
        assert_eq!(decode(proto, &bytes), Ok(msg), "{name}");
        n += 1;
    }
    assert_eq!(n, 11);
}

#[test]
fn group_bytes_and_holdtime_field() {
    let b = report(RecordType::ChangeToExclude, &[]).encode();
    assert_eq!(&b[12..16], &[0xE0, 0xE0, 0xE0, 0xE0]);
    let b = PimMessage::Hello { holdtime: SimTime(105_000) }.encode();
    assert_eq!(u16::from_be_bytes([b[4], b[5]]), 105);
}

#[test]
fn checksum_examples() {
    assert_eq!(internet_checksum(&[]), 0xFFFF);
    assert_eq!(internet_checksum(&[0x00, 0x01]), 0xFFFE);
    // odd length pads with a zero byte
    assert_eq!(internet_checksum(&[0x12]), internet_checksum(&[0x12, 0x00]));
}

#[test]
fn empty_and_short_inputs_are_truncated() {
    assert_eq!(IgmpMessage::decode(&[]), Err(CodecError::TruncatedMessage));
    assert_eq!(PimMessage::decode(&[0x20, 0]), Err(CodecError::TruncatedMessage));
}

#[test]
fn same_type_byte_is_told_apart_by_protocol() {
    let stop = PimMessage::RegisterStop { group: group(), source: a("10.0.0.1") }.encode();
    assert!(matches!(decode(Proto::Pim, &stop), Ok(ControlMessage::Pim(_))));
    assert!(decode(Proto::Igmp, &stop).is_err());
}

fn igmp_len(m: &IgmpMessage) -> usize {
    match m {
        IgmpMessage::MembershipQuery { .. } => 12,
        IgmpMessage::V3MembershipReport { records } => {
            8 + records.iter().map(|r| 8 + 4 * r.sources.len()).sum::<usize>()
        }
        IgmpMessage::LeaveGroup { .. } => 8,
    }
}

fn pim_len(m: &PimMessage) -> usize {
    match m {
        PimMessage::Hello { .. } => 6,
        PimMessage::Register { inner_packet } => 10 + inner_packet.len(),
        PimMessage::RegisterStop { .. } => 12,
        PimMessage::JoinPrune { joins, prunes, .. } => 14 + 13 * (joins.len() + prunes.len()),
    }
}

proptest! {
    #[test]
    fn igmp_round_trip(m in any_igmp()) {
        let b = m.encode();
        prop_assert_eq!(internet_checksum(&b), 0);
        prop_assert_eq!(b.len(), igmp_len(&m));
        prop_assert_eq!(IgmpMessage::decode(&b), Ok(m));
    }

    #[test]
    fn pim_round_trip(m in any_pim()) {
        let b = m.encode();
        prop_assert_eq!(internet_checksum(&b), 0);
        prop_assert_eq!(b.len(), pim_len(&m));
        prop_assert_eq!(PimMessage::decode(&b), Ok(m));
    }

    #[test]
    fn single_bit_flips_never_decode_silently(m in any_pim(), bit in 0usize..1024) {
        let b = m.encode();
        let mut c = b.clone();
        let bit = bit % (8 * b.len());
        c[bit / 8] ^= 1 << (bit % 8);
        prop_assert!(PimMessage::decode(&c).is_err());
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..80)) {
        let _ = IgmpMessage::decode(&bytes);
        let _ = PimMessage::decode(&bytes);
    }
}
