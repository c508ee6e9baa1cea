// SPDX-License-Identifier: Apache-2.0
//! A deterministic discrete-event simulator for IPv4 multicast routing:
//! IGMPv3 on the edge, PIM-SM shared trees in the core, and an MFIB that
//! does the actual forwarding.

pub mod addr;
pub mod codec;
pub mod config;
pub mod host;
pub mod igmp;
pub mod mfib;
pub mod network;
pub mod node;
pub mod pim;
pub mod rib;
pub mod router;
pub mod scenario;
pub mod sim;

pub use addr::{Addr, GroupAddr, IfAddr, Prefix, Source};
pub use network::{Event, Network, ShowCmd};
pub use sim::{IfId, NodeId, Packet, Proto, SimTime};
