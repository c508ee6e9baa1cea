// SPDX-License-Identifier: Apache-2.0
//! The simulation engine: nodes, links, the event loop and the log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::host::Host;
use crate::node::{Action, NodeEvent, Outbox};
use crate::router::Router;
use crate::sim::{
    CounterSnapshot, Dir, Endpoint, EventHandle, EventQueue, IfId, Link, LinkId, LogRecord, NodeId, Packet, SimError,
    SimTime,
};

#[derive(Debug, Clone)]
pub enum Node {
    Router(Box<Router>),
    Host(Box<Host>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Node { node: NodeId, ev: NodeEvent },
    Deliver { link: LinkId, dir: Dir, pkt: Packet },
    Snapshot { name: String },
}

impl Event {
    pub fn node(node: impl Into<NodeId>, ev: NodeEvent) -> Self {
        Event::Node { node: node.into(), ev }
    }
}

/// Read-only show commands, shared by snapshots and the shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShowCmd {
    Route,
    Mfib,
    PimJoin,
    PimNeighbors,
    IgmpGroups,
}

impl ShowCmd {
    pub const ALL: [ShowCmd; 5] =
        [ShowCmd::Route, ShowCmd::Mfib, ShowCmd::PimJoin, ShowCmd::PimNeighbors, ShowCmd::IgmpGroups];
}

impl fmt::Display for ShowCmd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShowCmd::Route => "show route",
            ShowCmd::Mfib => "show mfib",
            ShowCmd::PimJoin => "show pim join",
            ShowCmd::PimNeighbors => "show pim neighbors",
            ShowCmd::IgmpGroups => "show igmp groups",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotDump {
    pub name: String,
    pub at: SimTime,
    pub text: String,
}

#[derive(Debug, Clone, Default)]
pub struct Network {
    queue: EventQueue<Event>,
    nodes: BTreeMap<NodeId, Node>,
    links: Vec<Link>,
    attach: BTreeMap<(NodeId, IfId), (LinkId, Dir)>,
    admin_down: BTreeSet<(NodeId, IfId)>,
    log: Vec<LogRecord>,
    snapshots: Vec<SnapshotDump>,
    last_dispatch: SimTime,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    fn add_node(&mut self, name: NodeId, node: Node) {
        let now = self.now();
        self.nodes.insert(name.clone(), node);
        self.queue.schedule(now, Event::Node { node: name, ev: NodeEvent::Start }).expect("now is never in the past");
    }

    pub fn add_router(&mut self, r: Router) {
        self.add_node(r.name.clone(), Node::Router(Box::new(r)));
    }

    pub fn add_host(&mut self, h: Host) {
        self.add_node(h.name.clone(), Node::Host(Box::new(h)));
    }

    /// Attaches a point-to-point link between two interfaces.
    pub fn connect(
        &mut self,
        name: impl Into<String>,
        a: (&str, &str),
        b: (&str, &str),
        delay: SimTime,
    ) -> Result<LinkId, SimError> {
        let ea = Endpoint { node: a.0.into(), iface: a.1.into() };
        let eb = Endpoint { node: b.0.into(), iface: b.1.into() };
        for e in [&ea, &eb] {
            if !self.nodes.contains_key(&e.node) {
                return Err(SimError::UnknownNode(e.node.clone()));
            }
            if self.attach.contains_key(&(e.node.clone(), e.iface.clone())) {
                return Err(SimError::AlreadyAttached { node: e.node.clone(), iface: e.iface.clone() });
            }
        }
        let id = LinkId(self.links.len());
        self.attach.insert((ea.node.clone(), ea.iface.clone()), (id, Dir::Forward));
        self.attach.insert((eb.node.clone(), eb.iface.clone()), (id, Dir::Reverse));
        self.links.push(Link::new(name, ea, eb, delay));
        Ok(id)
    }

    pub fn set_admin_up(&mut self, node: &str, iface: &str, up: bool) {
        let key = (NodeId::from(node), IfId::from(iface));
        if up {
            self.admin_down.remove(&key);
        } else {
            self.admin_down.insert(key);
        }
    }

    pub fn schedule(&mut self, at: SimTime, ev: Event) -> Result<EventHandle, SimError> {
        self.queue.schedule(at, ev)
    }

    pub fn cancel(&mut self, h: EventHandle) -> bool {
        self.queue.cancel(h).is_some()
    }

    fn record(&mut self, node: &str, kind: &str, detail: String) {
        self.log.push(LogRecord { time: self.now(), node: node.to_string(), kind: kind.to_string(), detail });
    }

    /// Puts `pkt` on the link attached to `node:iface`.
    pub fn transmit(&mut self, node: &str, iface: &str, pkt: Packet) -> Result<(), SimError> {
        let key = (NodeId::from(node), IfId::from(iface));
        let &(link, dir) =
            self.attach.get(&key).ok_or_else(|| SimError::NotAttached { node: key.0.clone(), iface: key.1.clone() })?;
        if self.admin_down.contains(&key) {
            return Err(SimError::IfaceDown { node: key.0, iface: key.1 });
        }
        if pkt.ttl == 0 {
            return Err(SimError::TtlExpired);
        }
        let now = self.now();
        let l = &mut self.links[link.0];
        l.count_tx(dir, &pkt, now);
        let at = now + l.delay;
        self.record(node, "tx", format!("{iface} {}", packet_summary(&pkt)));
        self.queue.schedule(at, Event::Deliver { link, dir, pkt })?;
        Ok(())
    }

    /// Dispatches the next event due at or before `horizon`. Returns false
    /// when nothing was due.
    pub fn step(&mut self, horizon: SimTime) -> bool {
        let Some((at, ev)) = self.queue.pop_until(horizon) else {
            return false;
        };
        debug_assert!(at >= self.last_dispatch);
        self.last_dispatch = at;
        match ev {
            Event::Node { node, ev } => self.handle_node(node, ev),
            Event::Deliver { link, dir, pkt } => {
                let l = &mut self.links[link.0];
                l.count_rx(dir);
                let ep = l.receiver(dir).clone();
                if self.admin_down.contains(&(ep.node.clone(), ep.iface.clone())) {
                    self.record(ep.node.as_str(), "drop", format!("{} interface-down", ep.iface));
                } else {
                    self.record(ep.node.as_str(), "rx", format!("{} {}", ep.iface, packet_summary(&pkt)));
                    self.handle_node(ep.node, NodeEvent::Receive { iface: ep.iface, pkt });
                }
            }
            Event::Snapshot { name } => {
                let text = self.show_all();
                self.record("-", "snapshot", name.clone());
                self.snapshots.push(SnapshotDump { name, at, text });
            }
        }
        true
    }

    /// Runs every event with time ≤ `t` and returns the records logged by
    /// this call.
    pub fn run_until(&mut self, t: SimTime) -> &[LogRecord] {
        let start = self.log.len();
        while self.step(t) {}
        self.queue.advance_to(t);
        &self.log[start..]
    }

    fn handle_node(&mut self, node: NodeId, ev: NodeEvent) {
        let mut out = Outbox::new(self.now());
        match self.nodes.get_mut(&node) {
            Some(Node::Router(r)) => r.handle(ev, &mut out),
            Some(Node::Host(h)) => h.handle(ev, &mut out),
            None => {
                self.record(node.as_str(), "error", "unknown node".to_string());
                return;
            }
        }
        for a in out.into_actions() {
            match a {
                Action::Transmit { iface, pkt } => {
                    if let Err(e) = self.transmit(node.as_str(), iface.as_str(), pkt) {
                        self.record(node.as_str(), "tx-error", e.to_string());
                    }
                }
                Action::Schedule { at, ev } => {
                    if let Err(e) = self.queue.schedule(at, Event::Node { node: node.clone(), ev }) {
                        self.record(node.as_str(), "error", e.to_string());
                    }
                }
                Action::Log { kind, detail } => self.record(node.as_str(), &kind, detail),
            }
        }
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn snapshots(&self) -> &[SnapshotDump] {
        &self.snapshots
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn link_by_name(&self, name: &str) -> Option<LinkId> {
        self.links.iter().position(|l| l.name == name).map(LinkId)
    }

    /// The link attached to `node:iface` and the direction it transmits in.
    pub fn attachment(&self, node: &str, iface: &str) -> Option<(LinkId, Dir)> {
        self.attach.get(&(NodeId::from(node), IfId::from(iface))).copied()
    }

    pub fn link_counters(&self, id: LinkId) -> CounterSnapshot {
        self.links[id.0].snapshot(self.now())
    }

    pub fn nodes(&self) -> &BTreeMap<NodeId, Node> {
        &self.nodes
    }

    pub fn router(&self, name: &str) -> Option<&Router> {
        match self.nodes.get(name)? {
            Node::Router(r) => Some(r),
            Node::Host(_) => None,
        }
    }

    pub fn router_mut(&mut self, name: &str) -> Option<&mut Router> {
        match self.nodes.get_mut(name)? {
            Node::Router(r) => Some(r),
            Node::Host(_) => None,
        }
    }

    pub fn host(&self, name: &str) -> Option<&Host> {
        match self.nodes.get(name)? {
            Node::Host(h) => Some(h),
            Node::Router(_) => None,
        }
    }

    pub fn host_mut(&mut self, name: &str) -> Option<&mut Host> {
        match self.nodes.get_mut(name)? {
            Node::Host(h) => Some(h),
            Node::Router(_) => None,
        }
    }

    pub fn routers(&self) -> impl Iterator<Item = &Router> {
        self.nodes.values().filter_map(|n| match n {
            Node::Router(r) => Some(r.as_ref()),
            Node::Host(_) => None,
        })
    }

    /// Control packets still travelling on some link.
    pub fn control_in_flight(&self) -> bool {
        self.queue.iter().any(|(_, e)| matches!(e, Event::Deliver { pkt, .. } if pkt.proto.is_control()))
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn next_event_time(&self) -> Option<SimTime> {
        self.queue.peek_time()
    }

    /// Output of one show command for one node.
    pub fn show(&self, cmd: ShowCmd, node: &str) -> Result<String, String> {
        let now = self.now();
        let lines: Vec<String> = match self.nodes.get(node) {
            None => return Err(format!("unknown node {node}")),
            Some(Node::Host(h)) => match cmd {
                ShowCmd::IgmpGroups => {
                    h.igmp.groups().iter().map(|(g, s)| format!("{} {} {} -", h.iface, g, s.filter_mode)).collect()
                }
                _ => Vec::new(),
            },
            Some(Node::Router(r)) => match cmd {
                ShowCmd::Route => r.rib.show().lines().map(str::to_string).collect(),
                ShowCmd::Mfib => r.mfib.show(),
                ShowCmd::PimJoin => r.pim.show_join(),
                ShowCmd::PimNeighbors => r.pim.show_neighbors(now),
                ShowCmd::IgmpGroups => r.show_igmp(now),
            },
        };
        let mut s = String::new();
        for l in lines {
            s.push_str(&l);
            s.push('\n');
        }
        Ok(s)
    }

    /// Every show command for every router.
    pub fn show_all(&self) -> String {
        let mut s = String::new();
        for r in self.routers() {
            for cmd in ShowCmd::ALL {
                s.push_str(&format!("{} {}\n", r.name, cmd));
                s.push_str(&self.show(cmd, r.name.as_str()).unwrap_or_default());
            }
        }
        s
    }
}

fn packet_summary(p: &Packet) -> String {
    match p.seq() {
        Some(seq) if !p.proto.is_control() => {
            format!("{} {}>{}:{} ttl={} len={} seq={seq}", p.proto, p.src, p.dst, p.dst_port, p.ttl, p.payload_len)
        }
        _ => format!("{} {}>{} ttl={} len={}", p.proto, p.src, p.dst, p.ttl, p.payload_len),
    }
}
