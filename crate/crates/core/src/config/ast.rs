// SPDX-License-Identifier: Apache-2.0
//! Lexer, parser and printer for the curly-brace configuration language.
//!
//! Three constructs exist: `key: value` leaves, `keyword [arg] { ... }`
//! blocks and `/* ... */` comments. A bare word alone on its line is a flag
//! (e.g. an uncommented `default-system-config`).

use std::fmt;

use thiserror::Error;

/// 1-based source position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: expected {expected}, found {found}")]
    SyntaxError { line: u32, col: u32, expected: String, found: String },
    #[error("{line}:{col}: unbalanced braces: {detail}")]
    UnbalancedBraces { line: u32, col: u32, detail: &'static str },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match *self {
            ParseError::SyntaxError { line, col, .. } | ParseError::UnbalancedBraces { line, col, .. } => {
                Pos { line, col }
            }
        }
    }
}

/// A leaf value; quoting is kept so the printer can reproduce it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Value {
    pub text: String,
    pub quoted: bool,
}

impl Value {
    pub fn bare(text: impl Into<String>) -> Self {
        Value { text: text.into(), quoted: false }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.quoted {
            f.write_str("\"")?;
            for c in self.text.chars() {
                if matches!(c, '"' | '\\') {
                    f.write_str("\\")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str("\"")
        } else {
            f.write_str(&self.text)
        }
    }
}

// Positions are carried for diagnostics only; equality ignores them.

#[derive(Debug, Clone, Eq)]
pub struct Leaf {
    pub key: String,
    /// None for a bare flag.
    pub value: Option<Value>,
    pub pos: Pos,
    pub value_pos: Pos,
}

impl PartialEq for Leaf {
    fn eq(&self, o: &Self) -> bool {
        self.key == o.key && self.value == o.value
    }
}

#[derive(Debug, Clone, Eq)]
pub struct Block {
    pub keyword: String,
    pub arg: Option<Value>,
    pub children: Vec<Stmt>,
    pub pos: Pos,
    pub arg_pos: Pos,
}

impl PartialEq for Block {
    fn eq(&self, o: &Self) -> bool {
        self.keyword == o.keyword && self.arg == o.arg && self.children == o.children
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Block(Block),
    Leaf(Leaf),
}

impl Stmt {
    pub fn pos(&self) -> Pos {
        match self {
            Stmt::Block(b) => b.pos,
            Stmt::Leaf(l) => l.pos,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigAst {
    pub items: Vec<Stmt>,
}

fn find_block<'a>(items: &'a [Stmt], keyword: &str, arg: Option<&str>) -> Option<&'a Block> {
    items.iter().find_map(|s| match s {
        Stmt::Block(b) if b.keyword == keyword && b.arg.as_ref().map(|v| v.text.as_str()) == arg => Some(b),
        _ => None,
    })
}

impl ConfigAst {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn block(&self, keyword: &str, arg: Option<&str>) -> Option<&Block> {
        find_block(&self.items, keyword, arg)
    }

    /// Follows a path of `(keyword, arg)` steps from the top level.
    pub fn path(&self, steps: &[(&str, Option<&str>)]) -> Option<&Block> {
        let (first, rest) = steps.split_first()?;
        let mut b = self.block(first.0, first.1)?;
        for (kw, arg) in rest {
            b = b.block(kw, *arg)?;
        }
        Some(b)
    }
}

impl Block {
    pub fn block(&self, keyword: &str, arg: Option<&str>) -> Option<&Block> {
        find_block(&self.children, keyword, arg)
    }

    pub fn leaf(&self, key: &str) -> Option<&Leaf> {
        self.children.iter().find_map(|s| match s {
            Stmt::Leaf(l) if l.key == key => Some(l),
            _ => None,
        })
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.leaf(key)?.value.as_ref().map(|v| v.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Str(String),
    Colon,
    Open,
    Close,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Str(s) => write!(f, "string \"{s}\""),
            Tok::Colon => f.write_str("`:`"),
            Tok::Open => f.write_str("`{`"),
            Tok::Close => f.write_str("`}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn syntax(pos: Pos, expected: &str, found: impl fmt::Display) -> ParseError {
    ParseError::SyntaxError { line: pos.line, col: pos.col, expected: expected.to_string(), found: found.to_string() }
}

fn is_word_char(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '{' | '}' | ':' | '"')
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            bump!();
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            bump!();
            bump!();
            loop {
                if i >= chars.len() {
                    return Err(syntax(pos, "`*/` closing this comment", Tok::Eof));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
        } else if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(syntax(pos, "closing `\"`", "end of line")),
                    Some('"') => {
                        bump!();
                        break;
                    }
                    Some('\\') if i + 1 < chars.len() && chars[i + 1] != '\n' => {
                        bump!();
                        s.push(chars[i]);
                        bump!();
                    }
                    Some(&ch) => {
                        s.push(ch);
                        bump!();
                    }
                }
            }
            out.push((Tok::Str(s), pos));
        } else if c == '{' || c == '}' || c == ':' {
            bump!();
            out.push((
                match c {
                    '{' => Tok::Open,
                    '}' => Tok::Close,
                    _ => Tok::Colon,
                },
                pos,
            ));
        } else {
            let mut w = String::new();
            while i < chars.len() && is_word_char(chars[i]) && !(chars[i] == '/' && chars.get(i + 1) == Some(&'*')) {
                w.push(chars[i]);
                bump!();
            }
            out.push((Tok::Word(w), pos));
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self, k: usize) -> &(Tok, Pos) {
        &self.toks[(self.at + k).min(self.toks.len() - 1)]
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.peek(0).clone();
        self.at = (self.at + 1).min(self.toks.len() - 1);
        t
    }

    /// Statements until `}` (nested) or end of input (top level).
    fn stmts(&mut self, opened: Option<Pos>) -> Result<Vec<Stmt>, ParseError> {
        let mut items = Vec::new();
        loop {
            let (tok, pos) = self.next();
            match tok {
                Tok::Eof => {
                    return match opened {
                        Some(p) => {
                            Err(ParseError::UnbalancedBraces { line: p.line, col: p.col, detail: "block never closed" })
                        }
                        None => Ok(items),
                    }
                }
                Tok::Close => {
                    return match opened {
                        Some(_) => Ok(items),
                        None => Err(ParseError::UnbalancedBraces {
                            line: pos.line,
                            col: pos.col,
                            detail: "`}` without matching `{`",
                        }),
                    }
                }
                Tok::Word(key) => items.push(self.stmt(key, pos)?),
                other => return Err(syntax(pos, "a keyword", other)),
            }
        }
    }

    fn value(&mut self) -> Result<(Value, Pos), ParseError> {
        match self.next() {
            (Tok::Word(w), p) => Ok((Value { text: w, quoted: false }, p)),
            (Tok::Str(s), p) => Ok((Value { text: s, quoted: true }, p)),
            (other, p) => Err(syntax(p, "a value", other)),
        }
    }

    fn stmt(&mut self, key: String, pos: Pos) -> Result<Stmt, ParseError> {
        let (tok, tpos) = self.peek(0).clone();
        match tok {
            Tok::Colon => {
                self.next();
                let (value, value_pos) = self.value()?;
                Ok(Stmt::Leaf(Leaf { key, value: Some(value), pos, value_pos }))
            }
            Tok::Open => {
                self.next();
                let children = self.stmts(Some(tpos))?;
                Ok(Stmt::Block(Block { keyword: key, arg: None, children, pos, arg_pos: pos }))
            }
            Tok::Word(_) | Tok::Str(_) if tpos.line == pos.line => {
                let (arg, arg_pos) = self.value()?;
                match self.next() {
                    (Tok::Open, open) => {
                        let children = self.stmts(Some(open))?;
                        Ok(Stmt::Block(Block { keyword: key, arg: Some(arg), children, pos, arg_pos }))
                    }
                    (other, p) => Err(syntax(p, "`{`", other)),
                }
            }
            Tok::Word(_) | Tok::Str(_) | Tok::Close | Tok::Eof => {
                Ok(Stmt::Leaf(Leaf { key, value: None, pos, value_pos: pos }))
            }
        }
    }
}

pub fn parse(text: &str) -> Result<ConfigAst, ParseError> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    Ok(ConfigAst { items: p.stmts(None)? })
}

fn render_stmts(items: &[Stmt], depth: usize, out: &mut String) {
    let pad = "    ".repeat(depth);
    for s in items {
        match s {
            Stmt::Leaf(l) => match &l.value {
                Some(v) => out.push_str(&format!("{pad}{}: {v}\n", l.key)),
                None => out.push_str(&format!("{pad}{}\n", l.key)),
            },
            Stmt::Block(b) => {
                match &b.arg {
                    Some(a) => out.push_str(&format!("{pad}{} {a} {{\n", b.keyword)),
                    None => out.push_str(&format!("{pad}{} {{\n", b.keyword)),
                }
                render_stmts(&b.children, depth + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
        }
    }
}

/// Pretty-prints with four-space indentation. Comments are gone by now.
pub fn render(ast: &ConfigAst) -> String {
    let mut out = String::new();
    render_stmts(&ast.items, 0, &mut out);
    out
}

impl fmt::Display for ConfigAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_comment_only() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("  /* nothing\n here */ \n").unwrap().is_empty());
    }

    #[test]
    fn leaf_and_block_positions() {
        let ast = parse("a {\n  b: 1\n}\n").unwrap();
        let Stmt::Block(a) = &ast.items[0] else { panic!() };
        assert_eq!(a.pos, Pos { line: 1, col: 1 });
        let l = a.leaf("b").unwrap();
        assert_eq!((l.pos, l.value_pos), (Pos { line: 2, col: 3 }, Pos { line: 2, col: 6 }));
    }

    #[test]
    fn quoted_values_keep_spaces_and_escapes() {
        let ast = parse(r#"d: "a \"b\" c""#).unwrap();
        let Stmt::Leaf(l) = &ast.items[0] else { panic!() };
        assert_eq!(l.value.as_ref().unwrap().text, r#"a "b" c"#);
        assert_eq!(parse(&render(&ast)).unwrap(), ast);
    }

    #[test]
    fn bare_flag_on_its_own_line() {
        let ast = parse("x {\n  default-system-config\n  vif a {\n  }\n}").unwrap();
        let x = ast.block("x", None).unwrap();
        assert_eq!(x.leaf("default-system-config").unwrap().value, None);
        assert!(x.block("vif", Some("a")).is_some());
    }

    #[test]
    fn unbalanced() {
        assert!(matches!(parse("a {\n b: 1\n"), Err(ParseError::UnbalancedBraces { line: 1, col: 3, .. })));
        assert!(matches!(parse("a: 1\n}"), Err(ParseError::UnbalancedBraces { line: 2, col: 1, .. })));
    }

    #[test]
    fn syntax_errors_are_positioned() {
        let e = parse("a {\n  b: {\n}").unwrap_err();
        assert!(matches!(e, ParseError::SyntaxError { line: 2, col: 6, .. }), "{e:?}");
        let e = parse("a b c {\n}").unwrap_err();
        assert!(matches!(e, ParseError::SyntaxError { line: 1, col: 5, .. }), "{e:?}");
        assert!(matches!(parse("/* open"), Err(ParseError::SyntaxError { line: 1, col: 1, .. })));
        assert!(matches!(parse("a: \"x\n"), Err(ParseError::SyntaxError { .. })));
    }

    #[test]
    fn render_is_stable() {
        let src = "a x {\n    b: 1\n    flag\n    c {\n    }\n}\n";
        let ast = parse(src).unwrap();
        assert_eq!(render(&ast), src);
    }
}
