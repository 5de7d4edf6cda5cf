//! Text syntax for pRTEs and prior files, and the canonical printer.
//!
//! ```text
//! prte    := primary { "." "subst" "(" VAR "," prte ")" }
//! primary := "choice" "{" WEIGHT ":" prte { "," WEIGHT ":" prte } "}"
//!          | "iter" VAR "{" prte "}"
//!          | VAR
//!          | SYMBOL [ "(" prte { "," prte } ")" ]
//! ```
//!
//! A prior file is a list of `@` directives followed by one pRTE:
//!
//! ```text
//! @max_depth 40
//! @param sT# exp 0.015
//! @param b# normal 0 1
//! @discrete d# 1 2 1/2
//! @tie al# *
//! @symbol exp 1
//! ```
//!
//! `//` starts a comment that runs to the end of the line.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;

use super::analysis;
use super::{Location, ParamPrior, PriorSpec, Prte, PrteError, DEFAULT_MAX_DEPTH};
use crate::expr::TieRule;
use crate::tree::{RankedAlphabet, RankedSymbol, DISC_MARKER, HOLE};
use crate::weight::{format_rational, parse_rational};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Dot,
    Var(String),
    Word(String),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Var(v) => format!("`${v}`"),
            Tok::Word(w) => format!("`{w}`"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Location)>, PrteError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, chars: &[char]| {
        if chars[*i] == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
        *i += 1;
    };
    while i < chars.len() {
        let c = chars[i];
        let at = Location { line, col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, &chars);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, &chars);
            }
            continue;
        }
        let simple = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            ',' => Some(Tok::Comma),
            ':' => Some(Tok::Colon),
            '.' if !chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) => Some(Tok::Dot),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push((tok, at));
            advance(&mut i, &mut line, &mut col, &chars);
            continue;
        }
        if c == '$' {
            advance(&mut i, &mut line, &mut col, &chars);
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                advance(&mut i, &mut line, &mut col, &chars);
            }
            if start == i {
                return Err(PrteError::Syntax {
                    at,
                    message: "expected a variable name after `$`".into(),
                });
            }
            out.push((Tok::Var(chars[start..i].iter().collect()), at));
            continue;
        }
        let start = i;
        while i < chars.len() {
            let d = chars[i];
            let stop = d.is_whitespace()
                || "(){},:$".contains(d)
                || (d == '.' && !chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()))
                || (d == '/' && chars.get(i + 1) == Some(&'/'));
            if stop {
                break;
            }
            advance(&mut i, &mut line, &mut col, &chars);
        }
        out.push((Tok::Word(chars[start..i].iter().collect()), at));
    }
    Ok(out)
}

/// Parsed pRTE before symbols are resolved; mirrors the shape of [`Prte`]
/// and keeps source locations.
#[derive(Debug, Clone)]
struct Raw {
    kind: RawKind,
    at: Location,
}

#[derive(Debug, Clone)]
enum RawKind {
    Node { name: String, children: Vec<Raw> },
    Var(String),
    Choice(Vec<(BigRational, Raw)>),
    Concat { left: Box<Raw>, var: String, right: Box<Raw> },
    Iter { var: String, body: Box<Raw> },
}

impl Raw {
    fn children(&self) -> Vec<&Raw> {
        match &self.kind {
            RawKind::Node { children, .. } => children.iter().collect(),
            RawKind::Var(_) => Vec::new(),
            RawKind::Choice(b) => b.iter().map(|(_, e)| e).collect(),
            RawKind::Concat { left, right, .. } => vec![left, right],
            RawKind::Iter { body, .. } => vec![body],
        }
    }

    fn locate(&self, path: &[usize]) -> Location {
        let mut node = self;
        for &i in path {
            match node.children().get(i) {
                Some(c) => node = c,
                None => break,
            }
        }
        node.at
    }

    fn collect_arities(&self, out: &mut BTreeMap<String, BTreeSet<usize>>) {
        if let RawKind::Node { name, children } = &self.kind {
            out.entry(name.clone()).or_default().insert(children.len());
        }
        for c in self.children() {
            c.collect_arities(out);
        }
    }
}

struct Parser {
    toks: Vec<(Tok, Location)>,
    pos: usize,
    end: Location,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|(t, _)| t)
    }

    fn here(&self) -> Location {
        self.toks.get(self.pos).map(|(_, l)| *l).unwrap_or(self.end)
    }

    fn next(&mut self) -> Result<(Tok, Location), PrteError> {
        let t = self.toks.get(self.pos).cloned().ok_or(PrteError::Syntax {
            at: self.end,
            message: "unexpected end of input".into(),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Tok) -> Result<Location, PrteError> {
        let (tok, at) = self.next()?;
        if tok == want {
            Ok(at)
        } else {
            Err(PrteError::Syntax {
                at,
                message: format!("expected {}, found {}", want.describe(), tok.describe()),
            })
        }
    }

    fn expect_var(&mut self) -> Result<String, PrteError> {
        match self.next()? {
            (Tok::Var(v), _) => Ok(v),
            (tok, at) => Err(PrteError::Syntax {
                at,
                message: format!("expected a `$` variable, found {}", tok.describe()),
            }),
        }
    }

    fn expr(&mut self) -> Result<Raw, PrteError> {
        let mut e = self.primary()?;
        while self.peek() == Some(&Tok::Dot) {
            let at = self.expect(Tok::Dot)?;
            match self.next()? {
                (Tok::Word(w), _) if w == "subst" => {}
                (tok, at) => {
                    return Err(PrteError::Syntax {
                        at,
                        message: format!("expected `subst` after `.`, found {}", tok.describe()),
                    })
                }
            }
            self.expect(Tok::LParen)?;
            let var = self.expect_var()?;
            self.expect(Tok::Comma)?;
            let right = self.expr()?;
            self.expect(Tok::RParen)?;
            e = Raw {
                kind: RawKind::Concat {
                    left: Box::new(e),
                    var,
                    right: Box::new(right),
                },
                at,
            };
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Raw, PrteError> {
        let keyword_choice = matches!(self.peek(), Some(Tok::Word(w)) if w == "choice")
            && self.peek2() == Some(&Tok::LBrace);
        let keyword_iter = matches!(self.peek(), Some(Tok::Word(w)) if w == "iter")
            && matches!(self.peek2(), Some(Tok::Var(_)));
        let (tok, at) = self.next()?;
        if keyword_choice {
            self.expect(Tok::LBrace)?;
            let mut branches = Vec::new();
            loop {
                let (wtok, wat) = self.next()?;
                let weight = match &wtok {
                    Tok::Word(w) => parse_rational(w),
                    _ => None,
                }
                .ok_or_else(|| PrteError::Syntax {
                    at: wat,
                    message: format!("expected a weight, found {}", wtok.describe()),
                })?;
                self.expect(Tok::Colon)?;
                branches.push((weight, self.expr()?));
                match self.next()? {
                    (Tok::Comma, _) => continue,
                    (Tok::RBrace, _) => break,
                    (tok, at) => {
                        return Err(PrteError::Syntax {
                            at,
                            message: format!("expected `,` or `}}`, found {}", tok.describe()),
                        })
                    }
                }
            }
            return Ok(Raw {
                kind: RawKind::Choice(branches),
                at,
            });
        }
        if keyword_iter {
            let var = self.expect_var()?;
            self.expect(Tok::LBrace)?;
            let body = self.expr()?;
            self.expect(Tok::RBrace)?;
            return Ok(Raw {
                kind: RawKind::Iter {
                    var,
                    body: Box::new(body),
                },
                at,
            });
        }
        match tok {
            Tok::Var(v) => Ok(Raw {
                kind: RawKind::Var(v),
                at,
            }),
            Tok::Word(name) => {
                let mut children = Vec::new();
                if self.peek() == Some(&Tok::LParen) {
                    self.expect(Tok::LParen)?;
                    loop {
                        children.push(self.expr()?);
                        match self.next()? {
                            (Tok::Comma, _) => continue,
                            (Tok::RParen, _) => break,
                            (tok, at) => {
                                return Err(PrteError::Syntax {
                                    at,
                                    message: format!(
                                        "expected `,` or `)`, found {}",
                                        tok.describe()
                                    ),
                                })
                            }
                        }
                    }
                }
                Ok(Raw {
                    kind: RawKind::Node { name, children },
                    at,
                })
            }
            other => Err(PrteError::Syntax {
                at,
                message: format!("expected an expression, found {}", other.describe()),
            }),
        }
    }
}

fn parse_raw(text: &str) -> Result<Raw, PrteError> {
    let toks = lex(text)?;
    let end = end_location(text);
    let mut p = Parser { toks, pos: 0, end };
    if p.peek().is_none() {
        return Err(PrteError::Syntax {
            at: end,
            message: "empty expression".into(),
        });
    }
    let raw = p.expr()?;
    if p.peek().is_some() {
        return Err(PrteError::Syntax {
            at: p.here(),
            message: "trailing input after expression".into(),
        });
    }
    Ok(raw)
}

fn end_location(text: &str) -> Location {
    let line = text.split('\n').count();
    let col = text.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    Location { line, col }
}

fn resolve(raw: &Raw, alphabet: &RankedAlphabet) -> Result<Prte, PrteError> {
    Ok(match &raw.kind {
        RawKind::Node { name, children } => {
            if name == HOLE {
                return Err(PrteError::HoleInPrior { at: raw.at });
            }
            if name.ends_with('#') && !children.is_empty() {
                return Err(PrteError::MarkerWithChildren {
                    at: raw.at,
                    name: name.clone(),
                });
            }
            let symbol = alphabet
                .resolve(name, children.len())
                .cloned()
                .ok_or_else(|| PrteError::UnknownSymbol {
                    at: raw.at,
                    name: name.clone(),
                    arity: children.len(),
                })?;
            let children = children
                .iter()
                .map(|c| resolve(c, alphabet))
                .collect::<Result<_, _>>()?;
            Prte::Symbol { symbol, children }
        }
        RawKind::Var(v) => Prte::Var(v.clone()),
        RawKind::Choice(branches) => Prte::Choice(
            branches
                .iter()
                .map(|(w, e)| Ok((w.clone(), resolve(e, alphabet)?)))
                .collect::<Result<_, PrteError>>()?,
        ),
        RawKind::Concat { left, var, right } => Prte::Concat {
            left: Box::new(resolve(left, alphabet)?),
            var: var.clone(),
            right: Box::new(resolve(right, alphabet)?),
        },
        RawKind::Iter { var, body } => Prte::Iter {
            var: var.clone(),
            body: Box::new(resolve(body, alphabet)?),
        },
    })
}

fn validate_located(prte: &Prte, raw: &Raw) -> Result<(), PrteError> {
    analysis::validate(prte).map_err(|(err, path)| set_location(err, raw.locate(&path)))
}

fn set_location(err: PrteError, loc: Location) -> PrteError {
    match err {
        PrteError::WeightSum { sum, .. } => PrteError::WeightSum { at: loc, sum },
        PrteError::InvalidWeight { weight, .. } => PrteError::InvalidWeight { at: loc, weight },
        PrteError::UnboundVariable { name, .. } => PrteError::UnboundVariable { at: loc, name },
        PrteError::NonTerminatingIter { var, reason, .. } => PrteError::NonTerminatingIter {
            at: loc,
            var,
            reason,
        },
        other => other,
    }
}

/// Parses a pRTE over a given alphabet. Operators with several arities are
/// written with their base name and resolved by child count.
pub fn parse_prte(text: &str, alphabet: &RankedAlphabet) -> Result<Prte, PrteError> {
    let raw = parse_raw(text)?;
    let prte = resolve(&raw, alphabet)?;
    validate_located(&prte, &raw)?;
    Ok(prte)
}

/// Parses a prior file. The alphabet is every symbol used in the expression
/// plus any `@symbol` declarations; when one name is used with several
/// child counts, the smallest keeps the plain name and the others become
/// `name/k`.
pub fn parse_prior(text: &str) -> Result<PriorSpec, PrteError> {
    let mut body = String::with_capacity(text.len());
    let mut max_depth = DEFAULT_MAX_DEPTH;
    let mut param_priors = BTreeMap::new();
    let mut disc_support = Vec::new();
    let mut ties = Vec::new();
    let mut declared = Vec::new();
    let mut body_started = false;

    for (idx, line) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let content = line.split("//").next().unwrap_or("").trim();
        if let Some(directive) = content.strip_prefix('@') {
            if body_started {
                return Err(PrteError::BadDirective {
                    line: lineno,
                    message: "directives must come before the expression".into(),
                });
            }
            let bad = |message: String| PrteError::BadDirective {
                line: lineno,
                message,
            };
            let words: Vec<&str> = directive.split_whitespace().collect();
            match words.as_slice() {
                ["max_depth", n] => {
                    max_depth = n
                        .parse()
                        .ok()
                        .filter(|&d: &usize| d > 0)
                        .ok_or_else(|| bad(format!("bad depth `{n}`")))?;
                }
                ["param", name, "exp", rate] => {
                    let rate: f64 = rate.parse().map_err(|_| bad(format!("bad rate `{rate}`")))?;
                    insert_prior(&mut param_priors, name, ParamPrior::Exponential { rate })
                        .map_err(bad)?;
                }
                ["param", name, "normal", mean, sd] => {
                    let mean: f64 = mean.parse().map_err(|_| bad(format!("bad mean `{mean}`")))?;
                    let sd: f64 = sd.parse().map_err(|_| bad(format!("bad sd `{sd}`")))?;
                    insert_prior(&mut param_priors, name, ParamPrior::Normal { mean, sd })
                        .map_err(bad)?;
                }
                ["discrete", name, values @ ..] if !values.is_empty() => {
                    if *name != DISC_MARKER {
                        return Err(bad(format!("discrete support is declared for `{DISC_MARKER}`, not `{name}`")));
                    }
                    for v in values {
                        let q = parse_rational(v).ok_or_else(|| bad(format!("bad rational `{v}`")))?;
                        if !disc_support.contains(&q) {
                            disc_support.push(q);
                        }
                    }
                }
                ["tie", marker, scope] => {
                    if !marker.ends_with('#') || *marker == DISC_MARKER {
                        return Err(bad(format!("`{marker}` is not a continuous marker")));
                    }
                    let rule = TieRule {
                        marker: marker.to_string(),
                        scope: scope.to_string(),
                    };
                    if ties.iter().any(|t: &TieRule| t.marker == rule.marker) {
                        return Err(bad(format!("marker `{marker}` is tied twice")));
                    }
                    ties.push(rule);
                }
                ["symbol", name, rank] => {
                    let rank: usize = rank.parse().map_err(|_| bad(format!("bad rank `{rank}`")))?;
                    declared.push(RankedSymbol::new(*name, rank));
                }
                _ => return Err(bad(format!("unrecognised directive `@{directive}`"))),
            }
            body.push('\n');
        } else {
            if !content.is_empty() {
                body_started = true;
            }
            body.push_str(line);
            body.push('\n');
        }
    }
    body.pop();

    let raw = parse_raw(&body)?;
    let alphabet = infer_alphabet(&raw, declared)?;
    let root = resolve(&raw, &alphabet)?;
    validate_located(&root, &raw)?;
    ties.sort();
    let spec = PriorSpec {
        alphabet,
        root,
        max_depth,
        param_priors,
        disc_support,
        ties,
    };
    spec.validate()?;
    Ok(spec)
}

fn insert_prior(
    map: &mut BTreeMap<String, ParamPrior>,
    name: &str,
    prior: ParamPrior,
) -> Result<(), String> {
    if !name.ends_with('#') || name == DISC_MARKER {
        return Err(format!("`{name}` is not a continuous marker"));
    }
    prior.check()?;
    if map.insert(name.to_string(), prior).is_some() {
        return Err(format!("prior for `{name}` declared twice"));
    }
    Ok(())
}

fn infer_alphabet(raw: &Raw, declared: Vec<RankedSymbol>) -> Result<RankedAlphabet, PrteError> {
    let base = RankedAlphabet::new(declared.clone())?;
    let mut used = BTreeMap::new();
    raw.collect_arities(&mut used);
    let mut taken: BTreeSet<String> = base.symbols().map(|s| s.name().to_string()).collect();
    let mut symbols = declared;
    for (name, arities) in used {
        if name == HOLE {
            continue;
        }
        for arity in arities {
            if base.resolve(&name, arity).is_some() {
                continue;
            }
            let chosen = if taken.contains(&name) {
                format!("{name}/{arity}")
            } else {
                name.clone()
            };
            taken.insert(chosen.clone());
            symbols.push(RankedSymbol::new(chosen, arity));
        }
    }
    Ok(RankedAlphabet::new(symbols)?)
}

/// Canonical single-line rendering, except that a top-level chain of
/// `.subst` steps puts each step on its own line.
pub(crate) fn print_prte(e: &Prte, top: bool) -> String {
    let mut out = String::new();
    if top {
        if let Prte::Concat { .. } = e {
            let mut steps = Vec::new();
            let mut base = e;
            while let Prte::Concat { left, var, right } = base {
                steps.push((var, right));
                base = left;
            }
            write_prte(base, &mut out);
            for (var, right) in steps.into_iter().rev() {
                out.push_str("\n  .subst($");
                out.push_str(var);
                out.push_str(", ");
                write_prte(right, &mut out);
                out.push(')');
            }
            return out;
        }
    }
    write_prte(e, &mut out);
    out
}

fn write_prte(e: &Prte, out: &mut String) {
    match e {
        Prte::Symbol { symbol, children } => {
            out.push_str(symbol.base_name());
            if !children.is_empty() {
                out.push('(');
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_prte(c, out);
                }
                out.push(')');
            }
        }
        Prte::Var(v) => {
            out.push('$');
            out.push_str(v);
        }
        Prte::Choice(branches) => {
            out.push_str("choice{");
            for (i, (w, b)) in branches.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&format_rational(w));
                out.push_str(": ");
                write_prte(b, out);
            }
            out.push('}');
        }
        Prte::Concat { left, var, right } => {
            write_prte(left, out);
            out.push_str(".subst($");
            out.push_str(var);
            out.push_str(", ");
            write_prte(right, out);
            out.push(')');
        }
        Prte::Iter { var, body } => {
            out.push_str("iter $");
            out.push_str(var);
            out.push_str(" { ");
            write_prte(body, out);
            out.push_str(" }");
        }
    }
}

pub(crate) fn print_prior(spec: &PriorSpec) -> String {
    let mut out = String::new();
    if spec.max_depth != DEFAULT_MAX_DEPTH {
        out.push_str(&format!("@max_depth {}\n", spec.max_depth));
    }
    let used: BTreeSet<&RankedSymbol> = spec.root.symbols().into_iter().collect();
    for sym in spec.alphabet.symbols() {
        let implicit = sym == spec.alphabet.const_marker() || sym == spec.alphabet.disc_marker();
        let renamed = sym.base_name() != sym.name();
        if (!used.contains(sym) && !implicit) || (renamed && plain_name_free(spec, sym)) {
            out.push_str(&format!("@symbol {} {}\n", sym.name(), sym.rank()));
        }
    }
    for (name, prior) in &spec.param_priors {
        out.push_str(&format!("@param {name} {prior}\n"));
    }
    if !spec.disc_support.is_empty() {
        out.push_str("@discrete ");
        out.push_str(DISC_MARKER);
        for q in &spec.disc_support {
            out.push(' ');
            out.push_str(&format_rational(q));
        }
        out.push('\n');
    }
    for tie in &spec.ties {
        out.push_str(&format!("@tie {} {}\n", tie.marker, tie.scope));
    }
    out.push_str(&print_prte(&spec.root, true));
    out.push('\n');
    out
}

/// A `name/k` symbol whose plain `name` is not in the alphabet would come
/// back under the plain name when re-inferred, so it has to be declared.
fn plain_name_free(spec: &PriorSpec, sym: &RankedSymbol) -> bool {
    spec.alphabet.get(sym.base_name()).is_none()
}
