// SPDX-License-Identifier: Apache-2.0
//! Scripted runs: topology and scenario files, assertions, the shell.

mod files;
mod run;
mod shell;

pub use files::{
    parse_scenario, parse_topology, At, DirSel, Expect, LoadError, NodeKind, Scenario, ScriptAction, ScriptEvent,
    TopoLink, TopoNode, Topology,
};
pub use run::{count_window, load, load_files, AssertionResult, Input, RunReport, SimInstance, GUARD_DELAYS};
pub use shell::{Reply, Shell, HELP};
