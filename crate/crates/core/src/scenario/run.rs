// SPDX-License-Identifier: Apache-2.0
//! Loading a bundle, running it, and judging its flow assertions.

use std::fmt;

use crate::config::{self, NodeConfig};
use crate::host::Host;
use crate::network::{Event, Network, SnapshotDump};
use crate::node::NodeEvent;
use crate::router::Router;
use crate::sim::{Dir, LinkId, SimTime};

use super::files::{
    parse_scenario, parse_topology, At, DirSel, Expect, LoadError, NodeKind, Scenario, ScriptAction, Topology,
};

/// The guard after each scripted control event is this many max link delays.
pub const GUARD_DELAYS: u64 = 5;

/// A named input file and its text.
#[derive(Debug, Clone)]
pub struct Input {
    pub name: String,
    pub text: String,
}

impl Input {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Input { name: name.into(), text: text.into() }
    }

    pub fn read(path: &str) -> Result<Self, LoadError> {
        std::fs::read_to_string(path).map(|text| Input::new(path, text)).map_err(|e| LoadError {
            file: path.to_string(),
            line: 0,
            col: 0,
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimInstance {
    pub net: Network,
    pub topology: Topology,
    pub scenario: Scenario,
    pub horizon: SimTime,
    pub guard: SimTime,
}

fn err(file: &str, at: At, message: impl Into<String>) -> LoadError {
    LoadError { file: file.to_string(), line: at.line, col: at.col, message: message.into() }
}

/// Builds the network, applies configs and schedules the script. All
/// problems across all files are reported together.
pub fn load(
    topology: &Input,
    configs: &[(String, Input)],
    scenario: &Input,
    until: Option<SimTime>,
) -> Result<SimInstance, Vec<LoadError>> {
    let mut errors = Vec::new();
    let topo = parse_topology(&topology.name, &topology.text).unwrap_or_else(|e| {
        errors.extend(e);
        Topology::default()
    });
    let scen = parse_scenario(&scenario.name, &scenario.text).unwrap_or_else(|e| {
        errors.extend(e);
        Scenario::default()
    });
    let mut parsed: Vec<(&str, &Input, NodeConfig)> = Vec::new();
    for (node, input) in configs {
        match config::load(&input.text) {
            Ok(cfg) => parsed.push((node, input, cfg)),
            Err(es) => errors.extend(es.into_iter().map(|e| LoadError {
                file: input.name.clone(),
                line: e.pos.line,
                col: e.pos.col,
                message: e.message,
            })),
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let mut net = Network::new();
    for n in &topo.nodes {
        match n.kind {
            NodeKind::Router => {
                let Some((_, input, cfg)) = parsed.iter().find(|(name, ..)| *name == n.name) else {
                    errors.push(err(&topology.name, n.at, format!("router {} has no configuration", n.name)));
                    continue;
                };
                let attached = topo.ifaces_of(&n.name);
                for v in cfg.interfaces.iter().flat_map(|i| &i.vifs) {
                    if !attached.contains(v.name.as_str()) {
                        errors.push(err(
                            &input.name,
                            At { line: v.pos.line, col: v.pos.col },
                            format!("interface {} is not in the topology for {}", v.name, n.name),
                        ));
                    }
                }
                let mut r = Router::new(n.name.as_str());
                if let Err(es) = config::apply(&mut r, cfg) {
                    errors.extend(es.into_iter().map(|e| LoadError {
                        file: input.name.clone(),
                        line: e.pos.line,
                        col: e.pos.col,
                        message: e.message,
                    }));
                }
                let down: Vec<String> =
                    r.interfaces().iter().filter(|(_, i)| !i.enabled).map(|(n, _)| n.to_string()).collect();
                net.add_router(r);
                for i in down {
                    net.set_admin_up(&n.name, &i, false);
                }
            }
            NodeKind::Host | NodeKind::Source => {
                let (Some(iface), Some(addr)) = (&n.iface, n.addr) else { continue };
                net.add_host(Host::new(n.name.as_str(), iface.as_str(), addr, n.gateway));
            }
        }
    }
    for (node, input, _) in &parsed {
        if !topo.node(node).is_some_and(|n| n.kind == NodeKind::Router) {
            errors.push(err(
                &input.name,
                At { line: 1, col: 1 },
                format!("configuration given for {node}, which is not a router in the topology"),
            ));
        }
    }
    for l in &topo.links {
        if let Err(e) = net.connect(l.name.as_str(), (&l.a.0, &l.a.1), (&l.b.0, &l.b.1), l.delay) {
            errors.push(err(&topology.name, l.at, e.to_string()));
        }
    }

    let horizon = until.unwrap_or_else(|| scen.end());
    for e in &scen.events {
        let bad = |m: String| err(&scenario.name, e.pos, m);
        let ev = match &e.action {
            ScriptAction::SourceStart { src, group, port, rate_pps, pkt_bytes } => {
                match topo.nodes.iter().find(|n| n.addr.is_some_and(|a| a.addr == *src)) {
                    Some(n) if n.kind != NodeKind::Router => Some(Event::node(
                        n.name.as_str(),
                        NodeEvent::SourceStart {
                            group: *group,
                            port: *port,
                            rate_pps: *rate_pps,
                            pkt_bytes: *pkt_bytes,
                        },
                    )),
                    _ => {
                        errors.push(bad(format!("no source or host has address {src}")));
                        None
                    }
                }
            }
            ScriptAction::HostJoin { node, group, sources } => match topo.node(node) {
                Some(n) if n.kind != NodeKind::Router => {
                    Some(Event::node(node.as_str(), NodeEvent::HostJoin { group: *group, sources: sources.clone() }))
                }
                _ => {
                    errors.push(bad(format!("unknown host {node}")));
                    None
                }
            },
            ScriptAction::HostLeave { node, group } => match topo.node(node) {
                Some(n) if n.kind != NodeKind::Router => {
                    Some(Event::node(node.as_str(), NodeEvent::HostLeave { group: *group }))
                }
                _ => {
                    errors.push(bad(format!("unknown host {node}")));
                    None
                }
            },
            ScriptAction::AssertFlow { until, link, .. } => {
                if net.link_by_name(link).is_none() {
                    errors.push(bad(format!("unknown link {link}")));
                }
                if *until > horizon {
                    errors.push(bad(format!("assertion window ends at {until} ms, after the {horizon} ms horizon")));
                }
                None
            }
            ScriptAction::Snapshot { name } => Some(Event::Snapshot { name: name.clone() }),
        };
        if e.at > horizon {
            errors.push(err(&scenario.name, e.pos, format!("event at {} ms is after the {horizon} ms horizon", e.at)));
            continue;
        }
        if let Some(ev) = ev {
            net.schedule(e.at, ev).expect("load schedules before the clock moves");
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let guard = SimTime(GUARD_DELAYS * topo.max_delay().0);
    Ok(SimInstance { net, topology: topo, scenario: scen, horizon, guard })
}

/// Reads every file from disk, then [`load`]s.
pub fn load_files(
    topology: &str,
    configs: &[(String, String)],
    scenario: &str,
    until: Option<SimTime>,
) -> Result<SimInstance, Vec<LoadError>> {
    let mut errors = Vec::new();
    let mut read = |p: &str| {
        Input::read(p).unwrap_or_else(|e| {
            errors.push(e);
            Input::new(p, "")
        })
    };
    let topo = read(topology);
    let scen = read(scenario);
    let cfgs: Vec<(String, Input)> = configs.iter().map(|(n, p)| (n.clone(), read(p))).collect();
    if !errors.is_empty() {
        return Err(errors);
    }
    load(&topo, &cfgs, &scen, until)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertionResult {
    pub label: String,
    pub link: String,
    pub dir: DirSel,
    pub from: SimTime,
    pub until: SimTime,
    pub expect: Expect,
    /// Data packets counted in the window outside guard periods.
    pub measured: u64,
    /// Milliseconds of the window covered by guards.
    pub excluded: u64,
    pub passed: bool,
}

impl fmt::Display for AssertionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} [{}, {}) expect={} measured={} guarded={}ms",
            if self.passed { "PASS" } else { "FAIL" },
            self.label,
            self.link,
            self.dir,
            self.from,
            self.until,
            self.expect,
            self.measured,
            self.excluded
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub horizon: SimTime,
    pub assertions: Vec<AssertionResult>,
    pub snapshots: Vec<SnapshotDump>,
    pub final_state: String,
    pub log_path: Option<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "run horizon {} ms", self.horizon)?;
        for a in &self.assertions {
            writeln!(f, "{a}")?;
        }
        let failed = self.assertions.iter().filter(|a| !a.passed).count();
        writeln!(f, "{} assertions, {} failed", self.assertions.len(), failed)?;
        if let Some(p) = &self.log_path {
            writeln!(f, "event log: {p}")?;
        }
        for s in &self.snapshots {
            writeln!(f, "--- snapshot {} at {} ms", s.name, s.at)?;
            f.write_str(&s.text)?;
        }
        writeln!(f, "--- final state at {} ms", self.horizon)?;
        f.write_str(&self.final_state)
    }
}

/// Half-open intervals `[c, c + guard)` for each scripted control event.
fn guards(scen: &Scenario, guard: SimTime) -> Vec<(SimTime, SimTime)> {
    scen.events.iter().filter(|e| e.action.is_control()).map(|e| (e.at, e.at + guard)).collect()
}

fn guarded(t: SimTime, guards: &[(SimTime, SimTime)]) -> bool {
    guards.iter().any(|&(a, b)| a <= t && t < b)
}

/// Counts data packets sent on `link` in `[from, until)` outside guards.
pub fn count_window(
    net: &Network,
    link: LinkId,
    dir: DirSel,
    from: SimTime,
    until: SimTime,
    guards: &[(SimTime, SimTime)],
) -> u64 {
    let dirs: &[Dir] = match dir {
        DirSel::Fwd => &[Dir::Forward],
        DirSel::Rev => &[Dir::Reverse],
        DirSel::Both => &[Dir::Forward, Dir::Reverse],
    };
    let l = net.link(link);
    dirs.iter()
        .flat_map(|d| l.data_tx_times(*d))
        .filter(|t| from <= **t && **t < until && !guarded(**t, guards))
        .count() as u64
}

fn excluded_ms(from: SimTime, until: SimTime, guards: &[(SimTime, SimTime)]) -> u64 {
    (from.0..until.0).filter(|t| guarded(SimTime(*t), guards)).count() as u64
}

impl SimInstance {
    /// Runs to the horizon and evaluates every assertion.
    pub fn run(&mut self) -> RunReport {
        self.net.run_until(self.horizon);
        self.evaluate()
    }

    /// Judges assertions against the counters as they stand.
    pub fn evaluate(&self) -> RunReport {
        let g = guards(&self.scenario, self.guard);
        let mut assertions = Vec::new();
        for (i, e) in self.scenario.events.iter().enumerate() {
            let ScriptAction::AssertFlow { until, link, dir, expect, label } = &e.action else { continue };
            let id = self.net.link_by_name(link).expect("checked at load");
            let measured = count_window(&self.net, id, *dir, e.at, *until, &g);
            let passed = match expect {
                Expect::Zero => measured == 0,
                Expect::Positive => measured > 0,
            };
            assertions.push(AssertionResult {
                label: label.clone().unwrap_or_else(|| format!("assert{}", i + 1)),
                link: link.clone(),
                dir: *dir,
                from: e.at,
                until: *until,
                expect: *expect,
                measured,
                excluded: excluded_ms(e.at, *until, &g),
                passed,
            });
        }
        RunReport {
            horizon: self.horizon,
            assertions,
            snapshots: self.net.snapshots().to_vec(),
            final_state: self.net.show_all(),
            log_path: None,
        }
    }
}
