// SPDX-License-Identifier: Apache-2.0
//! The router configuration language: parse, validate, apply.

mod apply;
mod ast;
mod schema;

pub use apply::apply;
pub use ast::{parse, render, Block, ConfigAst, Leaf, ParseError, Pos, Stmt, Value};
pub use schema::{
    validate, AddressCfg, ConfigError, IgmpIfaceCfg, InterfaceCfg, NodeConfig, PimIfaceCfg, StaticRouteCfg,
    StaticRpCfg, VifCfg,
};

/// Parse and validate in one go, with parse errors folded into the list.
pub fn load(text: &str) -> Result<NodeConfig, Vec<ConfigError>> {
    let ast = parse(text).map_err(|e| vec![ConfigError { pos: e.pos(), message: strip_pos(&e.to_string()) }])?;
    validate(&ast)
}

fn strip_pos(msg: &str) -> String {
    // "l:c: rest" -> "rest"
    msg.splitn(3, ':').nth(2).map_or(msg, str::trim_start).to_string()
}
