// SPDX-License-Identifier: Apache-2.0
//! IPv4 address and prefix arithmetic.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddrError {
    #[error("invalid address `{0}`")]
    BadAddr(String),
    #[error("invalid prefix length `{0}`")]
    BadLength(String),
    #[error("prefix {0}/{1} has host bits set")]
    NonCanonical(Addr, u8),
    #[error("netmask {0} is not contiguous")]
    BadMask(Addr),
    #[error("{0} is not a multicast address")]
    NotMulticast(Addr),
}

/// A 32-bit network address. Ordering is numeric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Addr(pub u32);

impl Addr {
    pub const UNSPECIFIED: Addr = Addr(0);

    pub const fn new(a: u8, b: u8, c: u8, d: u8) -> Self {
        Addr(u32::from_be_bytes([a, b, c, d]))
    }

    pub fn octets(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }

    /// True iff the address lies in 224.0.0.0/4.
    pub fn is_multicast(self) -> bool {
        self.0 >> 28 == 0xE
    }
}

pub fn is_multicast(addr: Addr) -> bool {
    addr.is_multicast()
}

impl From<Ipv4Addr> for Addr {
    fn from(a: Ipv4Addr) -> Self {
        Addr(u32::from(a))
    }
}

impl From<Addr> for Ipv4Addr {
    fn from(a: Addr) -> Self {
        Ipv4Addr::from(a.0)
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.octets();
        write!(f, "{a}.{b}.{c}.{d}")
    }
}

impl FromStr for Addr {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Ipv4Addr>().map(Addr::from).map_err(|_| AddrError::BadAddr(s.to_string()))
    }
}

/// Netmask with the top `len` bits set.
pub fn mask(len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        u32::MAX << (32 - u32::from(len.min(32)))
    }
}

/// Converts a dotted netmask such as 255.255.255.0 into a prefix length.
pub fn mask_to_len(m: Addr) -> Result<u8, AddrError> {
    let ones = m.0.leading_ones();
    if mask(ones as u8) != m.0 {
        return Err(AddrError::BadMask(m));
    }
    Ok(ones as u8)
}

/// A canonical CIDR prefix: no host bits set below `len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    network: Addr,
    len: u8,
}

impl Prefix {
    pub const DEFAULT: Prefix = Prefix { network: Addr(0), len: 0 };
    pub const MULTICAST: Prefix = Prefix { network: Addr::new(224, 0, 0, 0), len: 4 };

    /// Builds a prefix, rejecting non-canonical networks.
    pub fn new(network: Addr, len: u8) -> Result<Self, AddrError> {
        if len > 32 {
            return Err(AddrError::BadLength(len.to_string()));
        }
        if network.0 & !mask(len) != 0 {
            return Err(AddrError::NonCanonical(network, len));
        }
        Ok(Prefix { network, len })
    }

    /// Builds a prefix by clearing host bits.
    pub fn truncating(addr: Addr, len: u8) -> Self {
        let len = len.min(32);
        Prefix { network: Addr(addr.0 & mask(len)), len }
    }

    pub fn host(addr: Addr) -> Self {
        Prefix { network: addr, len: 32 }
    }

    pub fn network(&self) -> Addr {
        self.network
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mask(&self) -> u32 {
        mask(self.len)
    }

    pub fn contains(&self, addr: Addr) -> bool {
        addr.0 & self.mask() == self.network.0
    }

    /// True if every address of `other` is inside `self`.
    pub fn covers(&self, other: &Prefix) -> bool {
        other.len >= self.len && self.contains(other.network)
    }

    pub fn broadcast(&self) -> Addr {
        Addr(self.network.0 | !self.mask())
    }
}

pub fn prefix_contains(prefix: &Prefix, addr: Addr) -> bool {
    prefix.contains(addr)
}

pub fn broadcast_of(prefix: &Prefix) -> Addr {
    prefix.broadcast()
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.network, self.len)
    }
}

impl FromStr for Prefix {
    type Err = AddrError;

    /// Accepts `a.b.c.d/len` or the mask form `a.b.c.d m.m.m.m`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, len) = if let Some((a, l)) = s.split_once('/') {
            let len: u8 = l.parse().ok().filter(|l| *l <= 32).ok_or_else(|| AddrError::BadLength(l.to_string()))?;
            (a.parse::<Addr>()?, len)
        } else {
            let mut it = s.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(a), Some(m), None) => (a.parse::<Addr>()?, mask_to_len(m.parse()?)?),
                _ => return Err(AddrError::BadAddr(s.to_string())),
            }
        };
        Prefix::new(addr, len)
    }
}

/// An address assigned to an interface together with its subnet length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IfAddr {
    pub addr: Addr,
    pub len: u8,
}

impl IfAddr {
    pub fn new(addr: Addr, len: u8) -> Result<Self, AddrError> {
        if len > 32 {
            return Err(AddrError::BadLength(len.to_string()));
        }
        Ok(IfAddr { addr, len })
    }

    pub fn subnet(&self) -> Prefix {
        Prefix::truncating(self.addr, self.len)
    }

    /// Parses the mask form used by host interface files, e.g.
    /// `172.16.1.1 255.255.255.0`.
    pub fn parse_mask_form(addr: &str, netmask: &str) -> Result<Self, AddrError> {
        IfAddr::new(addr.parse()?, mask_to_len(netmask.parse()?)?)
    }
}

impl fmt::Display for IfAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl FromStr for IfAddr {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, l) = s.split_once('/').ok_or_else(|| AddrError::BadAddr(s.to_string()))?;
        let len = l.parse().map_err(|_| AddrError::BadLength(l.to_string()))?;
        IfAddr::new(a.parse()?, len)
    }
}

/// An address known to be in 224.0.0.0/4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupAddr(Addr);

impl GroupAddr {
    pub fn new(addr: Addr) -> Result<Self, AddrError> {
        if addr.is_multicast() {
            Ok(GroupAddr(addr))
        } else {
            Err(AddrError::NotMulticast(addr))
        }
    }

    pub fn addr(self) -> Addr {
        self.0
    }
}

impl TryFrom<Addr> for GroupAddr {
    type Error = AddrError;

    fn try_from(a: Addr) -> Result<Self, Self::Error> {
        GroupAddr::new(a)
    }
}

impl From<GroupAddr> for Addr {
    fn from(g: GroupAddr) -> Addr {
        g.0
    }
}

impl fmt::Display for GroupAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for GroupAddr {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GroupAddr::new(s.parse()?)
    }
}

/// Source selector of a multicast route: `*` or a specific sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Wildcard,
    Specific(Addr),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Wildcard => f.write_str("*"),
            Source::Specific(a) => a.fmt(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn a(s: &str) -> Addr {
        s.parse().unwrap()
    }

    fn p(s: &str) -> Prefix {
        s.parse().unwrap()
    }

    #[test]
    fn multicast_class() {
        assert!(is_multicast(a("224.224.224.224")));
        assert!(!is_multicast(a("10.10.10.10")));
        assert!(!is_multicast(a("223.255.255.255")));
        assert!(is_multicast(a("239.255.255.255")));
        assert!(is_multicast(a("224.0.0.0")));
        assert!(!is_multicast(a("240.0.0.0")));
    }

    #[test]
    fn containment() {
        assert!(prefix_contains(&p("172.16.1.0/24"), a("172.16.1.1")));
        assert!(!prefix_contains(&p("172.16.1.0/24"), a("172.16.2.245")));
        assert!(prefix_contains(&Prefix::DEFAULT, a("255.255.255.255")));
        assert!(prefix_contains(&Prefix::DEFAULT, a("0.0.0.0")));
    }

    #[test]
    fn broadcast() {
        assert_eq!(broadcast_of(&p("10.10.10.0/24")), a("10.10.10.255"));
        assert_eq!(broadcast_of(&p("172.16.2.245/32")), a("172.16.2.245"));
        // octet-wise: network octets, with octets fully inside the host part set to 255
        let net = p("172.16.0.0/16");
        let oracle: Vec<u8> =
            net.network().octets().iter().enumerate().map(|(i, o)| if i < 2 { *o } else { 255 }).collect();
        assert_eq!(broadcast_of(&net).octets().to_vec(), oracle);
    }

    #[test]
    fn rejects_non_canonical() {
        assert_eq!("10.10.10.10/24".parse::<Prefix>(), Err(AddrError::NonCanonical(a("10.10.10.10"), 24)));
        assert!("10.0.0.0/33".parse::<Prefix>().is_err());
        assert!("10.0.0.256".parse::<Addr>().is_err());
    }

    #[test]
    fn mask_form() {
        assert_eq!(p("172.16.1.0 255.255.255.0"), p("172.16.1.0/24"));
        assert!(mask_to_len(a("255.0.255.0")).is_err());
        let ifa = IfAddr::parse_mask_form("172.16.1.1", "255.255.255.0").unwrap();
        assert_eq!(ifa.subnet(), p("172.16.1.0/24"));
        assert_eq!(mask_to_len(a("0.0.0.0")).unwrap(), 0);
        assert_eq!(mask_to_len(a("255.255.255.255")).unwrap(), 32);
    }

    #[test]
    fn group_addr() {
        assert!(GroupAddr::new(a("10.0.0.1")).is_err());
        assert_eq!("224.224.224.224".parse::<GroupAddr>().unwrap().addr(), a("224.224.224.224"));
    }

    // bit-by-bit oracle for prefix membership
    fn contains_oracle(net: Addr, len: u8, x: Addr) -> bool {
        (0..len).all(|i| {
            let bit = 31 - i;
            (net.0 >> bit) & 1 == (x.0 >> bit) & 1
        })
    }

    proptest! {
        #[test]
        fn contains_matches_bitwise_oracle(raw in any::<u32>(), len in 0u8..=32, x in any::<u32>()) {
            let pfx = Prefix::truncating(Addr(raw), len);
            prop_assert_eq!(pfx.contains(Addr(x)), contains_oracle(pfx.network(), len, Addr(x)));
            prop_assert_eq!(pfx.contains(Addr(x)), Addr(x).0 & mask(len) == pfx.network().0);
        }

        #[test]
        fn addr_render_round_trip(raw in any::<u32>()) {
            let addr = Addr(raw);
            prop_assert_eq!(addr.to_string().parse::<Addr>().unwrap(), addr);
        }

        #[test]
        fn order_is_numeric(x in any::<u32>(), y in any::<u32>()) {
            prop_assert_eq!(Addr(x).cmp(&Addr(y)), x.cmp(&y));
        }
    }
}
