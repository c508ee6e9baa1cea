// SPDX-License-Identifier: Apache-2.0
//! Read-only command shell over a loaded (and possibly run) network.

use std::io::{self, BufRead, Write};

use crate::network::{Network, ShowCmd};

pub const HELP: &str = "\
show route [node]          unicast routing table
show mfib [node]           multicast forwarding entries and counters
show pim join [node]       PIM (*,G)/(S,G) join state
show pim neighbors [node]  PIM neighbors and remaining holdtime
show igmp groups [node]    IGMP membership per interface
snapshots                  list snapshots taken during the run
snapshot <name>            print a snapshot
?                          this list
quit                       leave the shell
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Output(String),
    Quit,
}

pub struct Shell<'a> {
    net: &'a Network,
}

fn parse_show(words: &[&str]) -> Option<(ShowCmd, Option<String>)> {
    let (cmd, rest) = match words {
        ["route", rest @ ..] => (ShowCmd::Route, rest),
        ["mfib", rest @ ..] => (ShowCmd::Mfib, rest),
        ["pim", "join", rest @ ..] => (ShowCmd::PimJoin, rest),
        ["pim", "neighbors", rest @ ..] => (ShowCmd::PimNeighbors, rest),
        ["igmp", "groups", rest @ ..] => (ShowCmd::IgmpGroups, rest),
        _ => return None,
    };
    match rest {
        [] => Some((cmd, None)),
        [node] => Some((cmd, Some(node.to_string()))),
        _ => None,
    }
}

impl<'a> Shell<'a> {
    pub fn new(net: &'a Network) -> Self {
        Shell { net }
    }

    pub fn exec(&self, line: &str) -> Reply {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => Reply::Output(String::new()),
            ["?"] | ["help"] => Reply::Output(HELP.to_string()),
            ["quit"] | ["exit"] => Reply::Quit,
            ["snapshots"] => {
                Reply::Output(self.net.snapshots().iter().map(|s| format!("{} {} ms\n", s.name, s.at)).collect())
            }
            ["snapshot", name] => Reply::Output(match self.net.snapshots().iter().find(|s| s.name == *name) {
                Some(s) => s.text.clone(),
                None => format!("no snapshot named {name}\n"),
            }),
            ["show", rest @ ..] => match parse_show(rest) {
                Some((cmd, Some(node))) => Reply::Output(self.net.show(cmd, &node).unwrap_or_else(|e| e + "\n")),
                Some((cmd, None)) => Reply::Output(
                    self.net
                        .routers()
                        .map(|r| format!("{}:\n{}", r.name, self.net.show(cmd, r.name.as_str()).unwrap_or_default()))
                        .collect(),
                ),
                None => Reply::Output(format!("unknown command: {}\n{HELP}", line.trim())),
            },
            _ => Reply::Output(format!("unknown command: {}\n{HELP}", line.trim())),
        }
    }

    /// Prompt loop until `quit` or end of input.
    pub fn run(&self, input: impl BufRead, mut output: impl Write) -> io::Result<()> {
        write!(output, "> ")?;
        output.flush()?;
        for line in input.lines() {
            match self.exec(&line?) {
                Reply::Quit => return Ok(()),
                Reply::Output(s) => write!(output, "{s}> ")?,
            }
            output.flush()?;
        }
        writeln!(output)
    }
}
