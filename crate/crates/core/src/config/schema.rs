// SPDX-License-Identifier: Apache-2.0
//! Typed node configuration and the schema walk that produces it.
//!
//! ```text
//! interfaces {
//!     interface NAME {
//!         description: "text"
//!         disable: false
//!         default-system-config
//!         vif NAME {
//!             disable: false
//!             address A.B.C.D {
//!                 prefix-length: N
//!                 broadcast: A.B.C.D
//!                 disable: false
//!             }
//!         }
//!     }
//! }
//! protocols {
//!     static {
//!         route PREFIX {
//!             next-hop: A.B.C.D
//!         }
//!     }
//!     igmp {
//!         interface NAME {
//!             vif NAME {
//!                 disable: false
//!                 query-interval: 125              (seconds)
//!                 query-response-interval: 10      (seconds)
//!                 robustness: 2
//!                 last-member-query-interval: 1    (seconds)
//!                 explicit-tracking: true
//!             }
//!         }
//!     }
//!     pimsm4 {
//!         hello-period: 30                         (seconds)
//!         join-prune-period: 60                    (seconds)
//!         interface NAME {
//!             vif NAME {
//!                 disable: false
//!             }
//!         }
//!         static-rps {
//!             rp A.B.C.D {
//!                 group-prefix PREFIX {
//!                 }
//!             }
//!         }
//!     }
//! }
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::addr::{broadcast_of, Addr, IfAddr, Prefix};
use crate::igmp::IgmpTimers;
use crate::pim::{PimTimers, REGISTER_VIF};
use crate::sim::SimTime;

use super::ast::{Block, ConfigAst, Leaf, Pos, Stmt};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressCfg {
    pub addr: Addr,
    pub prefix_length: u8,
    pub broadcast: Option<Addr>,
    pub enabled: bool,
    pub pos: Pos,
}

impl AddressCfg {
    pub fn if_addr(&self) -> IfAddr {
        IfAddr { addr: self.addr, len: self.prefix_length }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VifCfg {
    pub name: String,
    pub enabled: bool,
    pub addresses: Vec<AddressCfg>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceCfg {
    pub name: String,
    pub description: Option<String>,
    pub enabled: bool,
    /// Recorded only; there is no host OS to inherit addresses from.
    pub default_system_config: bool,
    pub vifs: Vec<VifCfg>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticRouteCfg {
    pub prefix: Prefix,
    pub next_hop: Addr,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IgmpIfaceCfg {
    pub iface: String,
    pub vif: String,
    pub enabled: bool,
    pub timers: IgmpTimers,
    pub explicit_tracking: bool,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PimIfaceCfg {
    pub iface: String,
    pub vif: String,
    pub enabled: bool,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticRpCfg {
    pub rp: Addr,
    pub group_prefixes: Vec<Prefix>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeConfig {
    pub interfaces: Vec<InterfaceCfg>,
    pub static_routes: Vec<StaticRouteCfg>,
    pub igmp_ifaces: Vec<IgmpIfaceCfg>,
    pub pim_ifaces: Vec<PimIfaceCfg>,
    pub pim_timers: PimTimers,
    pub static_rps: Vec<StaticRpCfg>,
}

impl NodeConfig {
    /// Names of every vif, i.e. the interfaces the simulator attaches.
    pub fn vif_names(&self) -> BTreeSet<&str> {
        self.interfaces.iter().flat_map(|i| i.vifs.iter().map(|v| v.name.as_str())).collect()
    }
}

#[derive(Default)]
struct Checker {
    errors: Vec<ConfigError>,
}

impl Checker {
    fn err(&mut self, pos: Pos, message: impl Into<String>) {
        self.errors.push(ConfigError { pos, message: message.into() });
    }

    fn unknown(&mut self, s: &Stmt, ctx: &str) {
        let what = match s {
            Stmt::Block(b) => format!("block `{}`", b.keyword),
            Stmt::Leaf(l) => format!("statement `{}`", l.key),
        };
        self.err(s.pos(), format!("unknown {what} in {ctx}"));
    }

    fn value<'a>(&mut self, l: &'a Leaf) -> Option<&'a str> {
        match &l.value {
            Some(v) => Some(v.text.as_str()),
            None => {
                self.err(l.pos, format!("`{}` needs a value", l.key));
                None
            }
        }
    }

    fn typed<T: FromStr>(&mut self, l: &Leaf, what: &str) -> Option<T> {
        let v = self.value(l)?;
        match v.parse() {
            Ok(t) => Some(t),
            Err(_) => {
                self.err(l.value_pos, format!("`{}` expects {what}, found `{v}`", l.key));
                None
            }
        }
    }

    fn boolean(&mut self, l: &Leaf) -> Option<bool> {
        self.typed(l, "true or false")
    }

    fn seconds(&mut self, l: &Leaf) -> Option<SimTime> {
        self.typed::<u64>(l, "a whole number of seconds").map(SimTime::from_secs)
    }

    fn flag(&mut self, l: &Leaf) {
        if l.value.is_some() {
            self.err(l.pos, format!("`{}` takes no value", l.key));
        }
    }

    fn arg<'a>(&mut self, b: &'a Block) -> Option<&'a str> {
        match &b.arg {
            Some(a) => Some(a.text.as_str()),
            None => {
                self.err(b.pos, format!("`{}` needs a name", b.keyword));
                None
            }
        }
    }

    fn typed_arg<T: FromStr>(&mut self, b: &Block, what: &str) -> Option<T> {
        let a = self.arg(b)?;
        match a.parse() {
            Ok(t) => Some(t),
            Err(_) => {
                self.err(b.arg_pos, format!("`{}` expects {what}, found `{a}`", b.keyword));
                None
            }
        }
    }

    fn no_duplicates(&mut self, children: &[Stmt]) {
        let mut seen = BTreeSet::new();
        for s in children {
            let key = match s {
                Stmt::Leaf(l) => (l.key.clone(), None),
                Stmt::Block(b) => (b.keyword.clone(), b.arg.as_ref().map(|a| a.text.clone())),
            };
            if !seen.insert(key) {
                self.err(s.pos(), "duplicate statement");
            }
        }
    }

    fn interfaces(&mut self, b: &Block, cfg: &mut NodeConfig) {
        self.no_duplicates(&b.children);
        for s in &b.children {
            match s {
                Stmt::Block(ib) if ib.keyword == "interface" => {
                    if let Some(i) = self.interface(ib) {
                        cfg.interfaces.push(i);
                    }
                }
                _ => self.unknown(s, "interfaces"),
            }
        }
    }

    fn interface(&mut self, b: &Block) -> Option<InterfaceCfg> {
        let name = self.arg(b)?.to_string();
        let mut i = InterfaceCfg {
            name,
            description: None,
            enabled: true,
            default_system_config: false,
            vifs: Vec::new(),
            pos: b.pos,
        };
        self.no_duplicates(&b.children);
        for s in &b.children {
            match s {
                Stmt::Leaf(l) if l.key == "description" => i.description = self.value(l).map(str::to_string),
                Stmt::Leaf(l) if l.key == "disable" => i.enabled = !self.boolean(l).unwrap_or(false),
                Stmt::Leaf(l) if l.key == "default-system-config" => {
                    self.flag(l);
                    i.default_system_config = true;
                }
                Stmt::Block(vb) if vb.keyword == "vif" => i.vifs.extend(self.vif(vb)),
                _ => self.unknown(s, "interface"),
            }
        }
        Some(i)
    }

    fn vif(&mut self, b: &Block) -> Option<VifCfg> {
        let name = self.arg(b)?.to_string();
        let mut v = VifCfg { name, enabled: true, addresses: Vec::new(), pos: b.pos };
        self.no_duplicates(&b.children);
        for s in &b.children {
            match s {
                Stmt::Leaf(l) if l.key == "disable" => v.enabled = !self.boolean(l).unwrap_or(false),
                Stmt::Block(ab) if ab.keyword == "address" => v.addresses.extend(self.address(ab)),
                _ => self.unknown(s, "vif"),
            }
        }
        Some(v)
    }

    fn address(&mut self, b: &Block) -> Option<AddressCfg> {
        let addr: Addr = self.typed_arg(b, "an IPv4 address")?;
        let (mut len, mut bcast, mut enabled) = (None, None, true);
        let mut bcast_pos = b.pos;
        self.no_duplicates(&b.children);
        for s in &b.children {
            match s {
                Stmt::Leaf(l) if l.key == "prefix-length" => {
                    len = self.typed::<u8>(l, "a prefix length").and_then(|n| {
                        if n > 32 {
                            self.err(l.value_pos, format!("prefix length {n} is longer than 32"));
                            None
                        } else {
                            Some(n)
                        }
                    })
                }
                Stmt::Leaf(l) if l.key == "broadcast" => {
                    bcast = self.typed::<Addr>(l, "an IPv4 address");
                    bcast_pos = l.value_pos;
                }
                Stmt::Leaf(l) if l.key == "disable" => enabled = !self.boolean(l).unwrap_or(false),
                _ => self.unknown(s, "address"),
            }
        }
        let Some(prefix_length) = len else {
            if b.leaf("prefix-length").is_none() {
                self.err(b.pos, format!("address {addr} has no prefix-length"));
            }
            return None;
        };
        if let Some(bc) = bcast {
            let want = broadcast_of(&Prefix::truncating(addr, prefix_length));
            if bc != want {
                self.err(bcast_pos, format!("broadcast {bc} does not match {addr}/{prefix_length} (expected {want})"));
            }
        }
        Some(AddressCfg { addr, prefix_length, broadcast: bcast, enabled, pos: b.pos })
    }

    fn protocols(&mut self, b: &Block, cfg: &mut NodeConfig) {
        self.no_duplicates(&b.children);
        for s in &b.children {
            match s {
                Stmt::Block(sb) if sb.keyword == "static" && sb.arg.is_none() => self.statics(sb, cfg),
                Stmt::Block(ib) if ib.keyword == "igmp" && ib.arg.is_none() => self.igmp(ib, cfg),
                Stmt::Block(pb) if pb.keyword == "pimsm4" && pb.arg.is_none() => self.pim(pb, cfg),
                _ => self.unknown(s, "protocols"),
            }
        }
    }

    fn statics(&mut self, b: &Block, cfg: &mut NodeConfig) {
        self.no_duplicates(&b.children);
        for s in &b.children {
            let Stmt::Block(rb) = s else {
                self.unknown(s, "static");
                continue;
            };
            if rb.keyword != "route" {
                self.unknown(s, "static");
                continue;
            }
            let prefix: Option<Prefix> = self.typed_arg(rb, "a canonical prefix");
            let mut nh = None;
            for c in &rb.children {
                match c {
                    Stmt::Leaf(l) if l.key == "next-hop" => nh = self.typed::<Addr>(l, "an IPv4 address"),
                    _ => self.unknown(c, "route"),
                }
            }
            if rb.leaf("next-hop").is_none() {
                self.err(rb.pos, "route has no next-hop");
            }
            if let (Some(prefix), Some(next_hop)) = (prefix, nh) {
                cfg.static_routes.push(StaticRouteCfg { prefix, next_hop, pos: rb.pos });
            }
        }
    }

    /// `interface X { vif Y { ... } }` nesting shared by igmp and pimsm4.
    fn proto_vifs<'a>(&mut self, ib: &'a Block, ctx: &str) -> Vec<(String, &'a Block)> {
        let Some(iface) = self.arg(ib).map(str::to_string) else {
            return Vec::new();
        };
        self.no_duplicates(&ib.children);
        let mut out = Vec::new();
        for s in &ib.children {
            match s {
                Stmt::Block(vb) if vb.keyword == "vif" => {
                    if self.arg(vb).is_some() {
                        out.push((iface.clone(), vb));
                    }
                }
                _ => self.unknown(s, ctx),
            }
        }
        out
    }

    fn igmp(&mut self, b: &Block, cfg: &mut NodeConfig) {
        self.no_duplicates(&b.children);
        for s in &b.children {
            let Stmt::Block(ib) = s else {
                self.unknown(s, "igmp");
                continue;
            };
            if ib.keyword != "interface" {
                self.unknown(s, "igmp");
                continue;
            }
            for (iface, vb) in self.proto_vifs(ib, "igmp interface") {
                let mut c = IgmpIfaceCfg {
                    iface,
                    vif: vb.arg.as_ref().map(|a| a.text.clone()).unwrap_or_default(),
                    enabled: true,
                    timers: IgmpTimers::default(),
                    explicit_tracking: true,
                    pos: vb.pos,
                };
                self.no_duplicates(&vb.children);
                for st in &vb.children {
                    match st {
                        Stmt::Leaf(l) if l.key == "disable" => c.enabled = !self.boolean(l).unwrap_or(false),
                        Stmt::Leaf(l) if l.key == "query-interval" => {
                            c.timers.query_interval = self.seconds(l).unwrap_or(c.timers.query_interval)
                        }
                        Stmt::Leaf(l) if l.key == "query-response-interval" => {
                            c.timers.query_response_interval =
                                self.seconds(l).unwrap_or(c.timers.query_response_interval)
                        }
                        Stmt::Leaf(l) if l.key == "last-member-query-interval" => {
                            c.timers.last_member_query_interval =
                                self.seconds(l).unwrap_or(c.timers.last_member_query_interval)
                        }
                        Stmt::Leaf(l) if l.key == "robustness" => match self.typed::<u32>(l, "a count") {
                            Some(0) => self.err(l.value_pos, "robustness must be at least 1"),
                            Some(n) => c.timers.robustness = n,
                            None => {}
                        },
                        Stmt::Leaf(l) if l.key == "explicit-tracking" => {
                            c.explicit_tracking = self.boolean(l).unwrap_or(true)
                        }
                        _ => self.unknown(st, "igmp vif"),
                    }
                }
                if c.timers.query_response_interval >= c.timers.query_interval {
                    self.err(vb.pos, "query-response-interval must be shorter than query-interval");
                }
                cfg.igmp_ifaces.push(c);
            }
        }
    }

    fn pim(&mut self, b: &Block, cfg: &mut NodeConfig) {
        self.no_duplicates(&b.children);
        for s in &b.children {
            match s {
                Stmt::Leaf(l) if l.key == "hello-period" => match self.seconds(l) {
                    Some(SimTime(0)) => self.err(l.value_pos, "hello-period must be positive"),
                    Some(t) => cfg.pim_timers.hello_period = t,
                    None => {}
                },
                Stmt::Leaf(l) if l.key == "join-prune-period" => match self.seconds(l) {
                    Some(SimTime(0)) => self.err(l.value_pos, "join-prune-period must be positive"),
                    Some(t) => {
                        cfg.pim_timers.join_prune_period = t;
                        // holdtime stays 3.5 × period
                        cfg.pim_timers.join_prune_holdtime = SimTime(t.0 * 7 / 2);
                    }
                    None => {}
                },
                Stmt::Block(ib) if ib.keyword == "interface" => {
                    for (iface, vb) in self.proto_vifs(ib, "pimsm4 interface") {
                        let mut c = PimIfaceCfg {
                            iface,
                            vif: vb.arg.as_ref().map(|a| a.text.clone()).unwrap_or_default(),
                            enabled: true,
                            pos: vb.pos,
                        };
                        for st in &vb.children {
                            match st {
                                Stmt::Leaf(l) if l.key == "disable" => c.enabled = !self.boolean(l).unwrap_or(false),
                                _ => self.unknown(st, "pimsm4 vif"),
                            }
                        }
                        cfg.pim_ifaces.push(c);
                    }
                }
                Stmt::Block(rb) if rb.keyword == "static-rps" && rb.arg.is_none() => self.static_rps(rb, cfg),
                _ => self.unknown(s, "pimsm4"),
            }
        }
    }

    fn static_rps(&mut self, b: &Block, cfg: &mut NodeConfig) {
        self.no_duplicates(&b.children);
        for s in &b.children {
            let Stmt::Block(rb) = s else {
                self.unknown(s, "static-rps");
                continue;
            };
            if rb.keyword != "rp" {
                self.unknown(s, "static-rps");
                continue;
            }
            let Some(rp) = self.typed_arg::<Addr>(rb, "an IPv4 address") else {
                continue;
            };
            let mut group_prefixes = Vec::new();
            self.no_duplicates(&rb.children);
            for c in &rb.children {
                match c {
                    Stmt::Block(gb) if gb.keyword == "group-prefix" => {
                        let Some(p) = self.typed_arg::<Prefix>(gb, "a canonical prefix") else {
                            continue;
                        };
                        if !Prefix::MULTICAST.covers(&p) {
                            self.err(gb.arg_pos, format!("group prefix {p} is outside 224.0.0.0/4"));
                            continue;
                        }
                        for gc in &gb.children {
                            self.unknown(gc, "group-prefix");
                        }
                        group_prefixes.push(p);
                    }
                    _ => self.unknown(c, "rp"),
                }
            }
            if group_prefixes.is_empty() && rb.children.is_empty() {
                group_prefixes.push(Prefix::MULTICAST);
            }
            cfg.static_rps.push(StaticRpCfg { rp, group_prefixes, pos: rb.pos });
        }
    }

    /// Protocol vifs must name a configured vif under a matching interface.
    fn cross_check(&mut self, cfg: &NodeConfig) {
        let known: BTreeSet<(&str, &str)> = cfg
            .interfaces
            .iter()
            .flat_map(|i| i.vifs.iter().map(move |v| (i.name.as_str(), v.name.as_str())))
            .collect();
        let igmp = cfg.igmp_ifaces.iter().map(|c| (c.iface.as_str(), c.vif.as_str(), c.pos, "igmp"));
        let pim = cfg.pim_ifaces.iter().map(|c| (c.iface.as_str(), c.vif.as_str(), c.pos, "pimsm4"));
        let mut errs = Vec::new();
        for (iface, vif, pos, proto) in igmp.chain(pim) {
            if proto == "pimsm4" && vif == REGISTER_VIF {
                continue;
            }
            if !known.contains(&(iface, vif)) {
                errs.push((pos, format!("{proto} names vif {iface}/{vif} which is not configured under interfaces")));
            }
        }
        for (pos, m) in errs {
            self.err(pos, m);
        }
    }
}

/// Walks the tree against the schema. Never returns a partial success.
pub fn validate(ast: &ConfigAst) -> Result<NodeConfig, Vec<ConfigError>> {
    let mut c = Checker::default();
    let mut cfg = NodeConfig::default();
    c.no_duplicates(&ast.items);
    for s in &ast.items {
        match s {
            Stmt::Block(b) if b.keyword == "interfaces" && b.arg.is_none() => c.interfaces(b, &mut cfg),
            Stmt::Block(b) if b.keyword == "protocols" && b.arg.is_none() => c.protocols(b, &mut cfg),
            _ => c.unknown(s, "the top level"),
        }
    }
    c.cross_check(&cfg);
    if c.errors.is_empty() {
        Ok(cfg)
    } else {
        c.errors.sort_by_key(|e| e.pos);
        Err(c.errors)
    }
}
