// SPDX-License-Identifier: Apache-2.0
//! Line-oriented topology and scenario files.
//!
//! Topology:
//!
//! ```text
//! router R1
//! host U1 eth0 172.16.1.1 255.255.255.0 172.16.1.240
//! source SRV eth0 172.16.0.33 255.255.255.0 172.16.0.240
//! link srv-r1 SRV:eth0 R1:eth0 [delay <ms>]
//! ```
//!
//! Scenario, one event per line, sorted by time:
//!
//! ```text
//! <ms> source_start <src-addr> <group> <port> [rate-pps] [pkt-bytes]
//! <ms> host_join <node> <group> [source...]
//! <ms> host_leave <node> <group>
//! <ms> assert_flow <until-ms> <link> fwd|rev|both zero|positive [label=<text>]
//! <ms> snapshot <name>
//! ```
//!
//! `#` starts a comment anywhere on a line.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::addr::{Addr, GroupAddr, IfAddr};
use crate::host::{DEFAULT_PKT_BYTES, DEFAULT_RATE_PPS};
use crate::sim::{Link, SimTime};

/// A problem in one of the input files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadError {
    pub file: String,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.file, self.line, self.col, self.message)
    }
}

impl std::error::Error for LoadError {}

/// Position of a field within a source line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct At {
    pub line: u32,
    pub col: u32,
}

pub(crate) fn fields(line: &str) -> Vec<(&str, u32)> {
    let line = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices().chain(std::iter::once((line.len(), ' '))) {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((&line[s..i], line[..s].chars().count() as u32 + 1));
                start = None;
            }
            _ => {}
        }
    }
    out
}

struct Errs<'a> {
    file: &'a str,
    list: Vec<LoadError>,
}

impl Errs<'_> {
    fn push(&mut self, at: At, message: impl Into<String>) {
        self.list.push(LoadError { file: self.file.to_string(), line: at.line, col: at.col, message: message.into() });
    }

    fn parse<T: FromStr>(&mut self, line: u32, f: (&str, u32), what: &str) -> Option<T> {
        match f.0.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.push(At { line, col: f.1 }, format!("expected {what}, found `{}`", f.0));
                None
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Router,
    Host,
    Source,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoNode {
    pub name: String,
    pub kind: NodeKind,
    /// Hosts and sources have exactly one interface.
    pub iface: Option<String>,
    pub addr: Option<IfAddr>,
    pub gateway: Option<Addr>,
    pub at: At,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoLink {
    pub name: String,
    pub a: (String, String),
    pub b: (String, String),
    pub delay: SimTime,
    pub at: At,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Topology {
    pub nodes: Vec<TopoNode>,
    pub links: Vec<TopoLink>,
}

impl Topology {
    pub fn node(&self, name: &str) -> Option<&TopoNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// Interfaces of `node` that some link attaches.
    pub fn ifaces_of(&self, node: &str) -> BTreeSet<&str> {
        self.links.iter().flat_map(|l| [&l.a, &l.b]).filter(|(n, _)| n == node).map(|(_, i)| i.as_str()).collect()
    }

    pub fn max_delay(&self) -> SimTime {
        self.links.iter().map(|l| l.delay).max().unwrap_or(SimTime(0))
    }
}

fn endpoint(errs: &mut Errs<'_>, line: u32, f: (&str, u32)) -> Option<(String, String)> {
    match f.0.split_once(':') {
        Some((n, i)) if !n.is_empty() && !i.is_empty() => Some((n.to_string(), i.to_string())),
        _ => {
            errs.push(At { line, col: f.1 }, format!("expected node:iface, found `{}`", f.0));
            None
        }
    }
}

pub fn parse_topology(file: &str, text: &str) -> Result<Topology, Vec<LoadError>> {
    let mut errs = Errs { file, list: Vec::new() };
    let mut t = Topology::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u32 + 1;
        let f = fields(raw);
        let Some(&(kw, col)) = f.first() else { continue };
        let at = At { line, col };
        match (kw, f.len()) {
            ("router", 2) => t.nodes.push(TopoNode {
                name: f[1].0.to_string(),
                kind: NodeKind::Router,
                iface: None,
                addr: None,
                gateway: None,
                at,
            }),
            ("host" | "source", 5 | 6) => {
                let addr = match IfAddr::parse_mask_form(f[3].0, f[4].0) {
                    Ok(a) => Some(a),
                    Err(e) => {
                        errs.push(At { line, col: f[3].1 }, e.to_string());
                        None
                    }
                };
                let gateway = match f.get(5) {
                    Some(&g) => errs.parse::<Addr>(line, g, "a gateway address"),
                    None => None,
                };
                if let Some(a) = addr {
                    t.nodes.push(TopoNode {
                        name: f[1].0.to_string(),
                        kind: if kw == "host" { NodeKind::Host } else { NodeKind::Source },
                        iface: Some(f[2].0.to_string()),
                        addr: Some(a),
                        gateway,
                        at,
                    });
                }
            }
            ("link", 4 | 6) => {
                let delay = if f.len() == 6 {
                    if f[4].0 != "delay" {
                        errs.push(At { line, col: f[4].1 }, format!("expected `delay`, found `{}`", f[4].0));
                        continue;
                    }
                    match errs.parse::<u64>(line, f[5], "a delay in ms") {
                        Some(d) => SimTime(d),
                        None => continue,
                    }
                } else {
                    Link::DEFAULT_DELAY
                };
                let (Some(a), Some(b)) = (endpoint(&mut errs, line, f[2]), endpoint(&mut errs, line, f[3])) else {
                    continue;
                };
                t.links.push(TopoLink { name: f[1].0.to_string(), a, b, delay, at });
            }
            ("router" | "host" | "source" | "link", _) => errs.push(at, format!("wrong number of fields for `{kw}`")),
            _ => errs.push(at, format!("unknown statement `{kw}`")),
        }
    }
    check_topology(&t, &mut errs);
    if errs.list.is_empty() {
        Ok(t)
    } else {
        Err(errs.list)
    }
}

fn check_topology(t: &Topology, errs: &mut Errs<'_>) {
    let mut names = BTreeSet::new();
    for n in &t.nodes {
        if !names.insert(n.name.as_str()) {
            errs.push(n.at, format!("node {} declared twice", n.name));
        }
    }
    let mut link_names = BTreeSet::new();
    let mut used = BTreeSet::new();
    for l in &t.links {
        if !link_names.insert(l.name.as_str()) {
            errs.push(l.at, format!("link {} declared twice", l.name));
        }
        for (n, i) in [&l.a, &l.b] {
            match t.node(n) {
                None => errs.push(l.at, format!("link {} names unknown node {n}", l.name)),
                Some(node) => {
                    if let Some(own) = &node.iface {
                        if own != i {
                            errs.push(l.at, format!("{n} has no interface {i} (it has {own})"));
                        }
                    }
                }
            }
            if !used.insert((n.as_str(), i.as_str())) {
                errs.push(l.at, format!("{n}:{i} is attached to more than one link"));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirSel {
    Fwd,
    Rev,
    Both,
}

impl fmt::Display for DirSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DirSel::Fwd => "fwd",
            DirSel::Rev => "rev",
            DirSel::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Zero,
    Positive,
}

impl fmt::Display for Expect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Expect::Zero => "zero",
            Expect::Positive => "positive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptAction {
    SourceStart { src: Addr, group: GroupAddr, port: u16, rate_pps: u32, pkt_bytes: u32 },
    HostJoin { node: String, group: Addr, sources: BTreeSet<Addr> },
    HostLeave { node: String, group: Addr },
    AssertFlow { until: SimTime, link: String, dir: DirSel, expect: Expect, label: Option<String> },
    Snapshot { name: String },
}

impl ScriptAction {
    /// Scripted events that change control state and open a guard period.
    pub fn is_control(&self) -> bool {
        matches!(
            self,
            ScriptAction::SourceStart { .. } | ScriptAction::HostJoin { .. } | ScriptAction::HostLeave { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptEvent {
    pub at: SimTime,
    pub action: ScriptAction,
    pub pos: At,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    pub events: Vec<ScriptEvent>,
}

impl Scenario {
    /// Latest time any event or assertion window reaches.
    pub fn end(&self) -> SimTime {
        self.events
            .iter()
            .map(|e| match &e.action {
                ScriptAction::AssertFlow { until, .. } => (*until).max(e.at),
                _ => e.at,
            })
            .max()
            .unwrap_or(SimTime(0))
    }
}

fn parse_action(errs: &mut Errs<'_>, line: u32, f: &[(&str, u32)]) -> Option<ScriptAction> {
    let (name, col) = f[1];
    let args = &f[2..];
    let arity = |errs: &mut Errs<'_>, lo: usize, hi: usize| {
        if args.len() < lo || args.len() > hi {
            errs.push(At { line, col }, format!("`{name}` takes {lo}..={hi} arguments, got {}", args.len()));
            false
        } else {
            true
        }
    };
    match name {
        "source_start" => {
            if !arity(errs, 3, 5) {
                return None;
            }
            let src = errs.parse(line, args[0], "a source address");
            let group = errs.parse(line, args[1], "a multicast group");
            let port = errs.parse(line, args[2], "a UDP port");
            let rate = args.get(3).map_or(Some(DEFAULT_RATE_PPS), |&a| errs.parse(line, a, "a packet rate"));
            let bytes = args.get(4).map_or(Some(DEFAULT_PKT_BYTES), |&a| errs.parse(line, a, "a packet size"));
            if rate == Some(0) {
                errs.push(At { line, col: args[3].1 }, "packet rate must be positive");
                return None;
            }
            Some(ScriptAction::SourceStart {
                src: src?,
                group: group?,
                port: port?,
                rate_pps: rate?,
                pkt_bytes: bytes?,
            })
        }
        "host_join" => {
            if !arity(errs, 2, usize::MAX) {
                return None;
            }
            let group = errs.parse(line, args[1], "a group address");
            let mut sources = BTreeSet::new();
            for &s in &args[2..] {
                sources.insert(errs.parse(line, s, "a source address")?);
            }
            Some(ScriptAction::HostJoin { node: args[0].0.to_string(), group: group?, sources })
        }
        "host_leave" => {
            if !arity(errs, 2, 2) {
                return None;
            }
            let group = errs.parse(line, args[1], "a group address")?;
            Some(ScriptAction::HostLeave { node: args[0].0.to_string(), group })
        }
        "assert_flow" => {
            if !arity(errs, 4, 5) {
                return None;
            }
            let until = errs.parse::<u64>(line, args[0], "a window end in ms").map(SimTime);
            let dir = match args[2].0 {
                "fwd" => Some(DirSel::Fwd),
                "rev" => Some(DirSel::Rev),
                "both" => Some(DirSel::Both),
                other => {
                    errs.push(At { line, col: args[2].1 }, format!("expected fwd, rev or both, found `{other}`"));
                    None
                }
            };
            let expect = match args[3].0 {
                "zero" => Some(Expect::Zero),
                "positive" => Some(Expect::Positive),
                other => {
                    errs.push(At { line, col: args[3].1 }, format!("expected zero or positive, found `{other}`"));
                    None
                }
            };
            let label = match args.get(4) {
                None => None,
                Some((l, c)) => match l.strip_prefix("label=") {
                    Some(v) => Some(v.to_string()),
                    None => {
                        errs.push(At { line, col: *c }, format!("expected label=<text>, found `{l}`"));
                        return None;
                    }
                },
            };
            Some(ScriptAction::AssertFlow {
                until: until?,
                link: args[1].0.to_string(),
                dir: dir?,
                expect: expect?,
                label,
            })
        }
        "snapshot" => {
            if !arity(errs, 1, 1) {
                return None;
            }
            Some(ScriptAction::Snapshot { name: args[0].0.to_string() })
        }
        other => {
            errs.push(At { line, col }, format!("unknown action `{other}`"));
            None
        }
    }
}

pub fn parse_scenario(file: &str, text: &str) -> Result<Scenario, Vec<LoadError>> {
    let mut errs = Errs { file, list: Vec::new() };
    let mut s = Scenario::default();
    let mut last = SimTime(0);
    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u32 + 1;
        let f = fields(raw);
        if f.is_empty() {
            continue;
        }
        let pos = At { line, col: f[0].1 };
        let Some(at) = errs.parse::<u64>(line, f[0], "a time in ms").map(SimTime) else {
            continue;
        };
        if f.len() < 2 {
            errs.push(pos, "missing action");
            continue;
        }
        if at < last {
            errs.push(pos, format!("event at {at} ms comes after one at {last} ms"));
        }
        last = last.max(at);
        if let Some(action) = parse_action(&mut errs, line, &f) {
            if let ScriptAction::AssertFlow { until, .. } = &action {
                if *until <= at {
                    errs.push(pos, format!("assertion window [{at}, {until}) is empty"));
                }
            }
            s.events.push(ScriptEvent { at, action, pos });
        }
    }
    if errs.list.is_empty() {
        Ok(s)
    } else {
        Err(errs.list)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_carry_columns() {
        assert_eq!(fields("  a  bc # d"), vec![("a", 3), ("bc", 6)]);
        assert!(fields("# all comment").is_empty());
    }

    #[test]
    fn topology_lines() {
        let t = parse_topology(
            "t",
            "router R1\nhost U1 eth0 172.16.1.1 255.255.255.0 172.16.1.240\nlink l1 R1:eth0 U1:eth0 delay 2\n",
        )
        .unwrap();
        assert_eq!(t.nodes.len(), 2);
        assert_eq!(t.nodes[1].addr.unwrap().to_string(), "172.16.1.1/24");
        assert_eq!(t.links[0].delay, SimTime(2));
        assert_eq!(t.ifaces_of("R1").into_iter().collect::<Vec<_>>(), vec!["eth0"]);
    }

    #[test]
    fn topology_errors_are_positioned() {
        let e = parse_topology("t", "router R1\nhost U1 eth0 172.16.1.1 255.0.255.0\n").unwrap_err();
        assert_eq!((e[0].line, e[0].col), (2, 14));
        let e = parse_topology("t", "router R1\nlink l R1:eth0 R9:eth0\n").unwrap_err();
        assert!(e[0].message.contains("unknown node R9"), "{e:?}");
        let e = parse_topology("t", "host U1 eth0 10.0.0.1 255.0.0.0\nrouter R\nlink l R:e U1:eth1\n").unwrap_err();
        assert!(e[0].message.contains("no interface eth1"), "{e:?}");
    }

    #[test]
    fn scenario_lines() {
        let s = parse_scenario(
            "s",
            "1000 source_start 10.0.0.1 224.1.1.1 1234\n2000 host_join U1 224.1.1.1 10.0.0.1\n2000 assert_flow 3000 l fwd zero label=x\n",
        )
        .unwrap();
        assert_eq!(s.events.len(), 3);
        assert!(matches!(s.events[0].action, ScriptAction::SourceStart { rate_pps: 100, pkt_bytes: 1316, .. }));
        assert!(matches!(&s.events[1].action, ScriptAction::HostJoin { sources, .. } if sources.len() == 1));
        assert_eq!(s.end(), SimTime(3000));
    }

    #[test]
    fn scenario_must_be_sorted() {
        let e = parse_scenario("s", "2000 snapshot a\n1000 snapshot b\n").unwrap_err();
        assert_eq!(e[0].line, 2);
    }

    #[test]
    fn scenario_rejects_bad_tokens() {
        assert!(parse_scenario("s", "10 assert_flow 20 l sideways zero\n").is_err());
        assert!(parse_scenario("s", "10 assert_flow 10 l fwd zero\n").is_err());
        assert!(parse_scenario("s", "10 dance\n").is_err());
        assert!(parse_scenario("s", "x snapshot a\n").is_err());
        assert!(parse_scenario("s", "10 source_start 10.0.0.1 10.0.0.2 1\n").is_err());
    }
}
