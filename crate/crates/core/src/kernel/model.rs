//! Line-oriented model files.
//!
//! ```text
//! # comment
//! var i 0..268435455
//! var a {2,5,7}
//! cons element i 2,5,7 a
//! choice eq a i | eqc a 2
//! label input asc
//! ```
//!
//! A constraint may be given a name with a trailing `@name`.

use std::collections::HashMap;

use thiserror::Error;

use super::ConstraintKind;
use crate::intset::{IntSet, MAX_INT};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub domain: IntSet,
}

/// A constraint as written in the model; variables are indices into
/// [`Model::vars`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    pub vars: Vec<usize>,
    pub params: Vec<i64>,
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Cons(ConstraintSpec),
    /// Disjunction: each alternative is tried in order on backtracking.
    Choice(Vec<ConstraintSpec>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarOrder {
    #[default]
    Input,
    FirstFail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Labeling {
    pub order: VarOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Model {
    pub vars: Vec<VarDecl>,
    pub items: Vec<Item>,
    pub labeling: Labeling,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("line {line}: {reason}")]
    ModelSyntax { line: usize, reason: String },
    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),
}

fn syntax(line: usize, reason: impl Into<String>) -> ModelError {
    ModelError::ModelSyntax {
        line,
        reason: reason.into(),
    }
}

impl Model {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Number of constraint items (alternatives of a choice count once each).
    pub fn constraint_count(&self) -> usize {
        self.items
            .iter()
            .map(|it| match it {
                Item::Cons(_) => 1,
                Item::Choice(alts) => alts.len(),
            })
            .sum()
    }

    /// Renders the model back to its file format.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for v in &self.vars {
            let ivs = v.domain.intervals();
            if let [(lo, hi)] = ivs {
                out.push_str(&format!("var {} {}..{}\n", v.name, lo, hi));
            } else {
                out.push_str(&format!(
                    "var {} {{{}}}\n",
                    v.name,
                    v.domain.to_value_list()
                ));
            }
        }
        let spec = |c: &ConstraintSpec| -> String {
            let name = |i: usize| self.vars[c.vars[i]].name.clone();
            let mut parts = vec![c.kind.short_name().to_string()];
            match c.kind {
                ConstraintKind::XPlusCNeqY => {
                    parts.extend([name(0), c.params[0].to_string(), name(1)]);
                }
                ConstraintKind::Element => {
                    let list: Vec<String> = c.params.iter().map(i64::to_string).collect();
                    parts.extend([name(0), list.join(","), name(1)]);
                }
                ConstraintKind::LinearEq => {
                    for i in 0..c.vars.len() {
                        parts.push(c.params[i].to_string());
                        parts.push(name(i));
                    }
                    parts.push("=".into());
                    parts.push(c.params[c.vars.len()].to_string());
                }
                _ => {
                    parts.extend((0..c.vars.len()).map(name));
                    parts.extend(c.params.iter().map(i64::to_string));
                }
            }
            if let Some(n) = &c.name {
                parts.push(format!("@{n}"));
            }
            parts.join(" ")
        };
        for item in &self.items {
            match item {
                Item::Cons(c) => out.push_str(&format!("cons {}\n", spec(c))),
                Item::Choice(alts) => {
                    let alts: Vec<String> = alts.iter().map(spec).collect();
                    out.push_str(&format!("choice {}\n", alts.join(" | ")));
                }
            }
        }
        let order = match self.labeling.order {
            VarOrder::Input => "input",
            VarOrder::FirstFail => "firstfail",
        };
        out.push_str(&format!("label {order} asc\n"));
        out
    }
}

fn parse_int(tok: &str, line: usize) -> Result<i64, ModelError> {
    if tok == "maxInt" {
        return Ok(MAX_INT);
    }
    tok.parse()
        .map_err(|_| syntax(line, format!("expected integer, found `{tok}`")))
}

fn parse_domain(tok: &str, line: usize) -> Result<IntSet, ModelError> {
    if let Some(body) = tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
        let vals = body
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_int(s.trim(), line))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(IntSet::from_values(vals));
    }
    let (lo, hi) = tok.split_once("..").ok_or_else(|| {
        syntax(
            line,
            format!("expected domain `lo..hi` or `{{..}}`, found `{tok}`"),
        )
    })?;
    let (lo, hi) = (parse_int(lo, line)?, parse_int(hi, line)?);
    if lo > hi {
        return Err(syntax(line, "empty domain"));
    }
    Ok(IntSet::range(lo, hi))
}

struct Parser<'m> {
    names: HashMap<&'m str, usize>,
}

impl<'m> Parser<'m> {
    fn var(&self, tok: &str, line: usize) -> Result<usize, ModelError> {
        if tok.is_empty() || tok.parse::<i64>().is_ok() {
            return Err(syntax(
                line,
                format!("expected variable name, found `{tok}`"),
            ));
        }
        self.names
            .get(tok)
            .copied()
            .ok_or_else(|| ModelError::UndeclaredVariable(tok.to_string()))
    }

    fn constraint(&self, toks: &[&str], line: usize) -> Result<ConstraintSpec, ModelError> {
        let (toks, name) = match toks.last() {
            Some(t) if t.starts_with('@') && t.len() > 1 => {
                (&toks[..toks.len() - 1], Some(t[1..].to_string()))
            }
            _ => (toks, None),
        };
        let (&kind_tok, args) = toks
            .split_first()
            .ok_or_else(|| syntax(line, "missing constraint type"))?;
        let kind = ConstraintKind::from_name(kind_tok)
            .ok_or_else(|| syntax(line, format!("unknown constraint type `{kind_tok}`")))?;
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(syntax(
                    line,
                    format!("`{kind_tok}` takes {n} arguments, found {}", args.len()),
                ))
            }
        };
        use ConstraintKind::*;
        let (vars, params) = match kind {
            XEqY | XNeqY | XLtY | XLteY => {
                arity(2)?;
                (
                    vec![self.var(args[0], line)?, self.var(args[1], line)?],
                    vec![],
                )
            }
            XEqC | XNeqC | XGteC | XLteC => {
                arity(2)?;
                (
                    vec![self.var(args[0], line)?],
                    vec![parse_int(args[1], line)?],
                )
            }
            XPlusCNeqY => {
                arity(3)?;
                (
                    vec![self.var(args[0], line)?, self.var(args[2], line)?],
                    vec![parse_int(args[1], line)?],
                )
            }
            Element => {
                arity(3)?;
                let list = args[1]
                    .trim_matches(|c| c == '[' || c == ']')
                    .split(',')
                    .map(|s| parse_int(s.trim(), line))
                    .collect::<Result<Vec<_>, _>>()?;
                if list.is_empty() {
                    return Err(syntax(line, "element list is empty"));
                }
                (
                    vec![self.var(args[0], line)?, self.var(args[2], line)?],
                    list,
                )
            }
            AllDiffPairwise => {
                if args.len() < 2 {
                    return Err(syntax(line, "alldiff needs at least two variables"));
                }
                let vars = args
                    .iter()
                    .map(|a| self.var(a, line))
                    .collect::<Result<Vec<_>, _>>()?;
                (vars, vec![])
            }
            LinearEq => {
                // c1 x1 c2 x2 ... = rhs
                let eq = args
                    .iter()
                    .position(|a| *a == "=")
                    .ok_or_else(|| syntax(line, "linear constraint lacks `= rhs`"))?;
                if eq % 2 != 0 || eq == 0 || args.len() != eq + 2 {
                    return Err(syntax(line, "linear constraint must be `c1 x1 ... = rhs`"));
                }
                let mut vars = Vec::new();
                let mut params = Vec::new();
                for pair in args[..eq].chunks(2) {
                    params.push(parse_int(pair[0], line)?);
                    vars.push(self.var(pair[1], line)?);
                }
                params.push(parse_int(args[eq + 1], line)?);
                (vars, params)
            }
        };
        Ok(ConstraintSpec {
            kind,
            vars,
            params,
            name,
        })
    }
}

/// Parses a model file.
pub fn load_model(text: &str) -> Result<Model, ModelError> {
    let mut model = Model::default();
    // Declarations come first in well-formed files but may appear anywhere;
    // collect them in a first pass so constraints can reference any var.
    let lines: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("")))
        .map(|(n, l)| (n, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, toks)| !toks.is_empty())
        .collect();
    for (line, toks) in &lines {
        if toks[0] == "var" {
            if toks.len() != 3 {
                return Err(syntax(*line, "expected `var <name> <domain>`"));
            }
            let name = toks[1];
            if name.parse::<i64>().is_ok() || name.starts_with('@') {
                return Err(syntax(*line, format!("invalid variable name `{name}`")));
            }
            if model.var_index(name).is_some() {
                return Err(syntax(*line, format!("variable `{name}` declared twice")));
            }
            let domain = parse_domain(toks[2], *line)?;
            if domain.min().is_some_and(|m| m < 0) || domain.max().is_some_and(|m| m > MAX_INT) {
                return Err(syntax(*line, "domain outside 0..268435455"));
            }
            model.vars.push(VarDecl {
                name: name.to_string(),
                domain,
            });
        }
    }
    let parser = Parser {
        names: model
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), i))
            .collect(),
    };
    let mut items = Vec::new();
    let mut labeling = Labeling::default();
    for (line, toks) in &lines {
        let line = *line;
        match toks[0] {
            "var" => {}
            "cons" => items.push(Item::Cons(parser.constraint(&toks[1..], line)?)),
            "choice" => {
                let alts = toks[1..]
                    .split(|t| *t == "|")
                    .map(|alt| parser.constraint(alt, line))
                    .collect::<Result<Vec<_>, _>>()?;
                if alts.len() < 2 {
                    return Err(syntax(line, "choice needs at least two alternatives"));
                }
                items.push(Item::Choice(alts));
            }
            "label" => {
                let order = match toks.get(1).copied() {
                    Some("input") | None => VarOrder::Input,
                    Some("firstfail") => VarOrder::FirstFail,
                    Some(other) => {
                        return Err(syntax(line, format!("unknown variable order `{other}`")))
                    }
                };
                match toks.get(2).copied() {
                    Some("asc") | None => {}
                    Some(other) => {
                        return Err(syntax(line, format!("unknown value order `{other}`")))
                    }
                }
                labeling = Labeling { order };
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }
    drop(parser);
    model.items = items;
    model.labeling = labeling;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG6: &str = "\
# fd_element(I, [2,5,7], A), (A #= I ; A #= 2)
var i 0..268435455
var a 0..268435455
cons element i 2,5,7 a
choice eq a i | eqc a 2
label input asc
";

    #[test]
    fn fig6_model() {
        let m = load_model(FIG6).unwrap();
        assert_eq!(m.vars.len(), 2);
        assert_eq!(m.vars[0].domain, IntSet::full());
        assert_eq!(m.items.len(), 2);
        assert_eq!(m.constraint_count(), 3);
        match &m.items[0] {
            Item::Cons(c) => {
                assert_eq!(c.kind, ConstraintKind::Element);
                assert_eq!(c.vars, vec![0, 1]);
                assert_eq!(c.params, vec![2, 5, 7]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(load_model(&m.to_source()).unwrap(), m);
    }

    #[test]
    fn empty_model() {
        let m = load_model("").unwrap();
        assert!(m.vars.is_empty() && m.items.is_empty());
        let m = load_model("# only a comment\n\n").unwrap();
        assert!(m.vars.is_empty());
    }

    #[test]
    fn undeclared_variable() {
        assert_eq!(
            load_model("var y 0..3\ncons lt x y\n"),
            Err(ModelError::UndeclaredVariable("x".into()))
        );
    }

    #[test]
    fn syntax_errors_carry_line() {
        let e = load_model("var x 0..3\ncons frob x\n").unwrap_err();
        assert!(matches!(e, ModelError::ModelSyntax { line: 2, .. }));
        let e = load_model("var x 5..3\n").unwrap_err();
        assert!(matches!(e, ModelError::ModelSyntax { line: 1, .. }));
        let e = load_model("var x 0..3\ncons lt x\n").unwrap_err();
        assert!(matches!(e, ModelError::ModelSyntax { line: 2, .. }));
    }

    #[test]
    fn linear_and_named() {
        let m = load_model("var x 0..9\nvar y 0..9\ncons linear 2 x -1 y = 3 @lin\n").unwrap();
        match &m.items[0] {
            Item::Cons(c) => {
                assert_eq!(c.params, vec![2, -1, 3]);
                assert_eq!(c.name.as_deref(), Some("lin"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(load_model(&m.to_source()).unwrap(), m);
    }
}
