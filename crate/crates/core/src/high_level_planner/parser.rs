//! Recursive-descent parser for task descriptions.
//!
//! ```text
//! task      := step ( "then" step )*
//! step      := skill "(" category attrs? ( "," qualifier )? ")"
//! attrs     := "[" attr "=" value ( "," attr "=" value )* "]"
//! attr      := "color" | "size"
//! qualifier := "leftmost" | "rightmost" | "nearest" | "farthest"
//! ```
//!
//! Skills come from the fixed skill set; category and values are lowercase
//! identifiers (`[a-z_][a-z0-9_]*`). Whitespace may separate any two tokens.

use std::fmt;

use thiserror::Error;

use super::{Attribute, ObjectQuery, Qualifier, SkillPlan};
use crate::skill_discovery::SkillLabel;

/// Byte offset of the offending input and the tokens that would have been
/// accepted there.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {position}: expected {}, found {found}", expected.join(" | "))]
pub struct ParseError {
    pub position: usize,
    pub expected: Vec<String>,
    pub found: String,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

fn quoted(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| format!("`{s}`")).collect()
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn found(&self) -> String {
        match self.peek() {
            None => "end of input".into(),
            Some(_) => {
                let ident: String = self.src[self.pos..]
                    .chars()
                    .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
                    .collect();
                if ident.is_empty() {
                    format!("`{}`", self.peek().unwrap_or(' '))
                } else {
                    format!("`{ident}`")
                }
            }
        }
    }

    fn error(&self, expected: Vec<String>) -> ParseError {
        ParseError {
            position: self.pos,
            expected,
            found: self.found(),
        }
    }

    fn expect_char(&mut self, c: char, also: &[&str]) -> Result<(), ParseError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            return Ok(());
        }
        let mut exp = also.to_vec();
        let own = c.to_string();
        exp.insert(0, &own);
        Err(self.error(quoted(&exp)))
    }

    /// Returns the identifier and its start offset.
    fn ident(&mut self, what: &str) -> Result<(&'a str, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len()
            && (bytes[end].is_ascii_lowercase()
                || bytes[end] == b'_'
                || (end > start && bytes[end].is_ascii_digit()))
        {
            end += 1;
        }
        if end == start {
            return Err(self.error(vec![what.to_string()]));
        }
        self.pos = end;
        Ok((&self.src[start..end], start))
    }

    fn one_of<T: Copy>(&mut self, table: &[(&str, T)]) -> Result<T, ParseError> {
        self.skip_ws();
        let save = self.pos;
        let names: Vec<&str> = table.iter().map(|t| t.0).collect();
        match self.ident("identifier") {
            Ok((word, _)) => match table.iter().find(|t| t.0 == word) {
                Some(t) => Ok(t.1),
                None => {
                    self.pos = save;
                    Err(self.error(quoted(&names)))
                }
            },
            Err(_) => Err(self.error(quoted(&names))),
        }
    }

    fn step(&mut self) -> Result<(SkillLabel, ObjectQuery), ParseError> {
        let skills: Vec<(&str, SkillLabel)> =
            SkillLabel::ALL.iter().map(|k| (k.token(), *k)).collect();
        let skill = self.one_of(&skills)?;
        self.expect_char('(', &[])?;
        let (category, _) = self.ident("category")?;
        let mut query = ObjectQuery {
            category: category.to_string(),
            attributes: vec![],
            qualifier: None,
        };
        self.skip_ws();
        if self.peek() == Some('[') {
            self.pos += 1;
            loop {
                let attr =
                    self.one_of(&[("color", Attribute::Color), ("size", Attribute::Size)])?;
                self.expect_char('=', &[])?;
                let (value, _) = self.ident("value")?;
                query.attributes.push((attr, value.to_string()));
                self.skip_ws();
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(']') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error(quoted(&[",", "]"]))),
                }
            }
        }
        self.skip_ws();
        match self.peek() {
            Some(',') => {
                self.pos += 1;
                let table: Vec<(&str, Qualifier)> =
                    Qualifier::ALL.iter().map(|q| (q.token(), *q)).collect();
                query.qualifier = Some(self.one_of(&table)?);
                self.expect_char(')', &[])?;
            }
            Some(')') => self.pos += 1,
            _ => {
                let exp: &[&str] = if query.attributes.is_empty() {
                    &["[", ",", ")"]
                } else {
                    &[",", ")"]
                };
                return Err(self.error(quoted(exp)));
            }
        }
        Ok((skill, query))
    }
}

pub fn parse_task(description: &str) -> Result<SkillPlan, ParseError> {
    let mut p = Parser {
        src: description,
        pos: 0,
    };
    let mut steps = vec![p.step()?];
    loop {
        p.skip_ws();
        if p.peek().is_none() {
            break;
        }
        let save = p.pos;
        match p.ident("`then`") {
            Ok(("then", _)) => {}
            _ => {
                p.pos = save;
                return Err(p.error(quoted(&["then", "end of input"])));
            }
        }
        // `then` must be a whole word followed by a step
        steps.push(p.step()?);
    }
    Ok(SkillPlan { steps })
}

/// Canonical text of a plan; parsing it returns the same plan.
pub fn unparse(plan: &SkillPlan) -> String {
    plan.to_string()
}

impl fmt::Display for ObjectQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.category)?;
        if !self.attributes.is_empty() {
            f.write_str("[")?;
            for (i, (k, v)) in self.attributes.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}={}", k.token(), v)?;
            }
            f.write_str("]")?;
        }
        if let Some(q) = self.qualifier {
            write!(f, ", {}", q.token())?;
        }
        Ok(())
    }
}

impl fmt::Display for SkillPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, q)) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(" then ")?;
            }
            write!(f, "{}({})", k.token(), q)?;
        }
        Ok(())
    }
}
