// SPDX-License-Identifier: Apache-2.0
//! IGMPv3 membership state for one interface.
//!
//! The host side records what the local stack has joined and produces the
//! reports to send. The router side keeps the membership database for the
//! attached segment, with group timers and the periodic general query.
//! Forwarding only looks at group granularity: a group is either present
//! or absent on an interface, whatever its source list says.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::addr::{Addr, GroupAddr};
use crate::codec::{GroupRecord, IgmpMessage, RecordType};
use crate::sim::{IfId, SimTime};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IgmpError {
    #[error("{0} is not a multicast address")]
    NotMulticast(Addr),
    #[error("not a member of {0}")]
    NotMember(GroupAddr),
    #[error("operation needs the {0:?} role")]
    WrongRole(Role),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IgmpTimers {
    pub query_interval: SimTime,
    pub query_response_interval: SimTime,
    pub robustness: u32,
    pub last_member_query_interval: SimTime,
}

impl Default for IgmpTimers {
    fn default() -> Self {
        IgmpTimers {
            query_interval: SimTime::from_secs(125),
            query_response_interval: SimTime::from_secs(10),
            robustness: 2,
            last_member_query_interval: SimTime::from_secs(1),
        }
    }
}

impl IgmpTimers {
    /// robustness × query_interval + query_response_interval
    pub fn group_membership_interval(&self) -> SimTime {
        SimTime(u64::from(self.robustness) * self.query_interval.0 + self.query_response_interval.0)
    }

    pub fn last_member_query_time(&self) -> SimTime {
        SimTime(u64::from(self.robustness) * self.last_member_query_interval.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    HostSide,
    RouterSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    Include,
    Exclude,
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterMode::Include => "INCLUDE",
            FilterMode::Exclude => "EXCLUDE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupState {
    pub filter_mode: FilterMode,
    pub sources: BTreeSet<Addr>,
    /// Unused on the host side.
    pub expiry: SimTime,
    /// Hosts that reported interest, for explicit tracking.
    pub reporters: BTreeSet<Addr>,
}

/// Edge-triggered membership transition on one interface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipChange {
    pub iface: IfId,
    pub group: GroupAddr,
    pub joined: bool,
    pub sources: BTreeSet<Addr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostJoin {
    pub report: IgmpMessage,
    pub change: Option<MembershipChange>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportOutcome {
    pub changes: Vec<MembershipChange>,
    /// Group-specific queries to send on the interface.
    pub queries: Vec<IgmpMessage>,
}

#[derive(Debug, Clone)]
pub struct IgmpIfState {
    pub iface: IfId,
    pub role: Role,
    pub timers: IgmpTimers,
    /// When set, a leave from the last tracked reporter removes the group
    /// at once instead of running the last-member query.
    pub explicit_tracking: bool,
    groups: BTreeMap<GroupAddr, GroupState>,
    pub reports_received: u64,
}

fn group_of(addr: Addr) -> Result<GroupAddr, IgmpError> {
    GroupAddr::new(addr).map_err(|_| IgmpError::NotMulticast(addr))
}

impl IgmpIfState {
    pub fn new(iface: IfId, role: Role, timers: IgmpTimers) -> Self {
        IgmpIfState { iface, role, timers, explicit_tracking: true, groups: BTreeMap::new(), reports_received: 0 }
    }

    pub fn groups(&self) -> &BTreeMap<GroupAddr, GroupState> {
        &self.groups
    }

    pub fn is_member(&self, group: GroupAddr) -> bool {
        self.groups.contains_key(&group)
    }

    fn require(&self, role: Role) -> Result<(), IgmpError> {
        if self.role == role {
            Ok(())
        } else {
            Err(IgmpError::WrongRole(role))
        }
    }

    fn change(&self, group: GroupAddr, joined: bool, sources: BTreeSet<Addr>) -> MembershipChange {
        MembershipChange { iface: self.iface.clone(), group, joined, sources }
    }

    /// Records a local join and builds the state-change report. Joining
    /// with no sources means "any source".
    pub fn host_join(&mut self, group: Addr, sources: BTreeSet<Addr>) -> Result<HostJoin, IgmpError> {
        self.require(Role::HostSide)?;
        let group = group_of(group)?;
        let (mode, record_type) = if sources.is_empty() {
            (FilterMode::Exclude, RecordType::ChangeToExclude)
        } else {
            (FilterMode::Include, RecordType::ChangeToInclude)
        };
        let state = GroupState {
            filter_mode: mode,
            sources: sources.clone(),
            expiry: SimTime(u64::MAX),
            reporters: BTreeSet::new(),
        };
        let change = match self.groups.insert(group, state) {
            None => Some(self.change(group, true, sources.clone())),
            Some(_) => None,
        };
        let report = IgmpMessage::V3MembershipReport {
            records: vec![GroupRecord { record_type, group, sources: sources.into_iter().collect() }],
        };
        Ok(HostJoin { report, change })
    }

    pub fn host_leave(&mut self, group: Addr) -> Result<(IgmpMessage, MembershipChange), IgmpError> {
        self.require(Role::HostSide)?;
        let group = group_of(group)?;
        let old = self.groups.remove(&group).ok_or(IgmpError::NotMember(group))?;
        let report = IgmpMessage::V3MembershipReport {
            records: vec![GroupRecord { record_type: RecordType::ChangeToInclude, group, sources: vec![] }],
        };
        Ok((report, self.change(group, false, old.sources)))
    }

    /// Current-state report answering a general (`None`) or
    /// group-specific query; `None` if there is nothing to report.
    pub fn host_answer_query(&self, group: Option<GroupAddr>) -> Option<IgmpMessage> {
        let records: Vec<GroupRecord> = self
            .groups
            .iter()
            .filter(|(g, _)| group.is_none_or(|q| q == **g))
            .map(|(g, s)| GroupRecord {
                record_type: match s.filter_mode {
                    FilterMode::Include => RecordType::ModeIsInclude,
                    FilterMode::Exclude => RecordType::ModeIsExclude,
                },
                group: *g,
                sources: s.sources.iter().copied().collect(),
            })
            .collect();
        if records.is_empty() {
            None
        } else {
            Some(IgmpMessage::V3MembershipReport { records })
        }
    }

    /// Applies a report (or v2 leave) received from `reporter`.
    pub fn router_receive_report(
        &mut self,
        msg: &IgmpMessage,
        reporter: Addr,
        now: SimTime,
    ) -> Result<ReportOutcome, IgmpError> {
        self.require(Role::RouterSide)?;
        let mut out = ReportOutcome::default();
        match msg {
            IgmpMessage::V3MembershipReport { records } => {
                self.reports_received += 1;
                for r in records {
                    self.apply_record(r, reporter, now, &mut out);
                }
            }
            IgmpMessage::LeaveGroup { group } => {
                self.reports_received += 1;
                self.leave(*group, reporter, now, &mut out);
            }
            IgmpMessage::MembershipQuery { .. } => {}
        }
        Ok(out)
    }

    fn apply_record(&mut self, r: &GroupRecord, reporter: Addr, now: SimTime, out: &mut ReportOutcome) {
        let gmi = self.timers.group_membership_interval();
        let exclude = matches!(r.record_type, RecordType::ModeIsExclude | RecordType::ChangeToExclude);
        if !exclude && r.sources.is_empty() {
            self.leave(r.group, reporter, now, out);
            return;
        }
        let sources: BTreeSet<Addr> = r.sources.iter().copied().collect();
        match self.groups.get_mut(&r.group) {
            Some(st) => {
                if exclude {
                    st.filter_mode = FilterMode::Exclude;
                    st.sources = sources;
                } else if st.filter_mode == FilterMode::Include {
                    st.sources.extend(sources);
                }
                st.expiry = now + gmi;
                st.reporters.insert(reporter);
            }
            None => {
                let mode = if exclude { FilterMode::Exclude } else { FilterMode::Include };
                self.groups.insert(
                    r.group,
                    GroupState {
                        filter_mode: mode,
                        sources: sources.clone(),
                        expiry: now + gmi,
                        reporters: [reporter].into(),
                    },
                );
                out.changes.push(self.change(r.group, true, sources));
            }
        }
    }

    fn leave(&mut self, group: GroupAddr, reporter: Addr, now: SimTime, out: &mut ReportOutcome) {
        let Some(st) = self.groups.get_mut(&group) else {
            return;
        };
        st.reporters.remove(&reporter);
        if self.explicit_tracking && st.reporters.is_empty() {
            let old = self.groups.remove(&group).expect("present");
            out.changes.push(self.change(group, false, old.sources));
            return;
        }
        let lmqt = now + self.timers.last_member_query_time();
        if lmqt < st.expiry {
            st.expiry = lmqt;
        }
        out.queries.push(IgmpMessage::MembershipQuery {
            group: Some(group),
            max_resp_time: self.timers.last_member_query_interval,
        });
    }

    /// Removes every group whose timer has run out.
    pub fn expire(&mut self, now: SimTime) -> Vec<MembershipChange> {
        let gone: Vec<GroupAddr> = self.groups.iter().filter(|(_, s)| s.expiry <= now).map(|(g, _)| *g).collect();
        gone.into_iter()
            .map(|g| {
                let st = self.groups.remove(&g).expect("present");
                self.change(g, false, st.sources)
            })
            .collect()
    }

    /// Periodic querier duty: the general query to send plus any expiries.
    pub fn on_query_timer(&mut self, now: SimTime) -> Result<(IgmpMessage, Vec<MembershipChange>), IgmpError> {
        self.require(Role::RouterSide)?;
        let expired = self.expire(now);
        let q = IgmpMessage::MembershipQuery { group: None, max_resp_time: self.timers.query_response_interval };
        Ok((q, expired))
    }

    pub fn expiry_of(&self, group: GroupAddr) -> Option<SimTime> {
        self.groups.get(&group).map(|s| s.expiry)
    }

    /// `show igmp groups` lines: `<iface> <group> <mode> <expiry-ms>`,
    /// where expiry is the time remaining.
    pub fn show(&self, now: SimTime) -> Vec<String> {
        self.groups
            .iter()
            .map(|(g, s)| format!("{} {} {} {}", self.iface, g, s.filter_mode, s.expiry.saturating_sub(now)))
            .collect()
    }
}
