// SPDX-License-Identifier: Apache-2.0
//! Turning a validated configuration into router state.

use crate::pim::{RpMapping, REGISTER_VIF};
use crate::router::Router;

use super::schema::{ConfigError, NodeConfig};

/// Interfaces first, then static routes, then protocols, so the result does
/// not depend on block order in the file.
pub fn apply(router: &mut Router, cfg: &NodeConfig) -> Result<(), Vec<ConfigError>> {
    let mut errors = Vec::new();
    for i in &cfg.interfaces {
        for v in &i.vifs {
            let addr = v.addresses.iter().find(|a| a.enabled).map(|a| a.if_addr());
            router.add_interface(v.name.as_str(), addr, i.enabled && v.enabled && addr.is_some());
        }
    }
    let mut routes: Vec<_> = cfg.static_routes.iter().collect();
    routes.sort_by_key(|r| r.prefix);
    for r in routes {
        if let Err(e) = router.add_static_route(r.prefix, r.next_hop) {
            errors.push(ConfigError { pos: r.pos, message: e.to_string() });
        }
    }
    let up = |router: &Router, vif: &str| router.interfaces().get(vif).is_some_and(|i| i.enabled);
    for c in cfg.igmp_ifaces.iter().filter(|c| c.enabled) {
        if up(router, &c.vif) {
            router.enable_igmp(c.vif.as_str(), c.timers, c.explicit_tracking);
        }
    }
    router.set_pim_timers(cfg.pim_timers);
    for c in cfg.pim_ifaces.iter().filter(|c| c.enabled && c.vif != REGISTER_VIF) {
        if up(router, &c.vif) {
            router.enable_pim(c.vif.as_str());
        }
    }
    for rp in &cfg.static_rps {
        for p in &rp.group_prefixes {
            if let Err(e) = router.set_static_rp(RpMapping { group_prefix: *p, rp: rp.rp }) {
                errors.push(ConfigError { pos: rp.pos, message: e.to_string() });
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}
