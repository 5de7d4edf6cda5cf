//! Probabilistic regular tree expressions.
//!
//! A [`Prte`] describes a distribution over trees with three operators on
//! top of plain symbol nodes:
//!
//! * `choice{w1: e1, ..., wn: en}` picks one branch with the given weight,
//! * `e.subst($v, r)` replaces every `$v` in a sample of `e` by an
//!   independent sample of `r`,
//! * `iter $v { e }` replaces every `$v` in a sample of `e` by an independent
//!   sample of the whole iteration, until no `$v` is left.
//!
//! A [`PriorSpec`] adds the alphabet, sampler depth budget and the priors
//! over the parameter values bound to marker leaves.

mod analysis;
mod density;
mod parse;
mod sample;

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::TieRule;
use crate::tree::{RankedAlphabet, RankedSymbol, TreeError};

pub(crate) use analysis::{Arena, ArenaNode};
pub use density::{prte_density, prte_density_exact, prte_density_with};
pub use parse::{parse_prior, parse_prte};
pub use sample::{sample_expression, sample_tree, MAX_SAMPLE_ATTEMPTS};

/// Default sampler depth budget (nodes on the longest root-to-leaf path).
pub const DEFAULT_MAX_DEPTH: usize = 50;

/// AST of a probabilistic regular tree expression.
///
/// Variable names are stored without the leading `$`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prte {
    Symbol {
        symbol: RankedSymbol,
        children: Vec<Prte>,
    },
    Var(String),
    Choice(Vec<(BigRational, Prte)>),
    /// `left` with every `var` replaced by an independent sample of `right`.
    Concat {
        left: Box<Prte>,
        var: String,
        right: Box<Prte>,
    },
    /// `body` iterated on `var`.
    Iter { var: String, body: Box<Prte> },
}

impl Prte {
    pub fn symbol(symbol: RankedSymbol, children: Vec<Prte>) -> Prte {
        Prte::Symbol { symbol, children }
    }

    pub fn var(name: impl Into<String>) -> Prte {
        Prte::Var(name.into())
    }

    pub fn concat(left: Prte, var: impl Into<String>, right: Prte) -> Prte {
        Prte::Concat {
            left: Box::new(left),
            var: var.into(),
            right: Box::new(right),
        }
    }

    pub fn iter(var: impl Into<String>, body: Prte) -> Prte {
        Prte::Iter {
            var: var.into(),
            body: Box::new(body),
        }
    }

    /// Direct sub-expressions, in the order used by error paths.
    pub fn children(&self) -> Vec<&Prte> {
        match self {
            Prte::Symbol { children, .. } => children.iter().collect(),
            Prte::Var(_) => Vec::new(),
            Prte::Choice(branches) => branches.iter().map(|(_, e)| e).collect(),
            Prte::Concat { left, right, .. } => vec![left, right],
            Prte::Iter { body, .. } => vec![body],
        }
    }

    /// Symbols used anywhere in the expression.
    pub fn symbols(&self) -> Vec<&RankedSymbol> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if let Prte::Symbol { symbol, .. } = e {
                out.push(symbol);
            }
            stack.extend(e.children());
        }
        out
    }

    /// Checks weights, variable scoping and termination of every iteration.
    pub fn validate(&self) -> Result<(), PrteError> {
        analysis::validate(self).map_err(|(e, _)| e)
    }
}

impl fmt::Display for Prte {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&parse::print_prte(self, true))
    }
}

/// A position in prior source text, 1-based. Line 0 means unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Location {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str("unknown position")
        } else {
            write!(f, "line {}, column {}", self.line, self.col)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrteError {
    #[error("syntax error at {at}: {message}")]
    Syntax { at: Location, message: String },
    #[error("choice weights at {at} sum to {sum}, not 1")]
    WeightSum { at: Location, sum: String },
    #[error("choice weight {weight} at {at} is outside (0, 1]")]
    InvalidWeight { at: Location, weight: String },
    #[error("unbound variable ${name} at {at}")]
    UnboundVariable { at: Location, name: String },
    #[error("iteration on ${var} at {at} cannot terminate: {reason}")]
    NonTerminatingIter {
        at: Location,
        var: String,
        reason: &'static str,
    },
    #[error("unknown symbol `{name}` with {arity} children at {at}")]
    UnknownSymbol {
        at: Location,
        name: String,
        arity: usize,
    },
    #[error("marker `{name}` at {at} cannot have children")]
    MarkerWithChildren { at: Location, name: String },
    #[error("the hole symbol `?` cannot appear in a prior (at {at})")]
    HoleInPrior { at: Location },
    #[error("no parameter prior declared for marker `{0}`")]
    MissingParamPrior(String),
    #[error("marker `d#` is used but no discrete support is declared")]
    MissingDiscreteSupport,
    #[error("bad directive on line {line}: {message}")]
    BadDirective { line: usize, message: String },
    #[error(transparent)]
    Alphabet(#[from] TreeError),
    #[error("sampler exceeded the depth budget {max_depth} in {attempts} consecutive attempts")]
    DepthBudgetExhausted { attempts: usize, max_depth: usize },
}

/// Prior over one continuous parameter role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamPrior {
    Exponential { rate: f64 },
    Normal { mean: f64, sd: f64 },
}

impl ParamPrior {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ParamPrior::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            ParamPrior::Normal { mean, sd } => {
                Normal::new(mean, sd).expect("validated sd").sample(rng)
            }
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        match *self {
            ParamPrior::Exponential { rate } => {
                if x < 0.0 || !x.is_finite() {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * x
                }
            }
            ParamPrior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    /// True when the support is the positive half-line.
    pub fn is_positive(&self) -> bool {
        matches!(self, ParamPrior::Exponential { .. })
    }

    fn check(&self) -> Result<(), String> {
        match *self {
            ParamPrior::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                Err(format!("exponential rate must be positive, got {rate}"))
            }
            ParamPrior::Normal { mean, sd } if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) => {
                Err(format!("normal prior needs finite mean and positive sd, got {mean} {sd}"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ParamPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamPrior::Exponential { rate } => write!(f, "exp {rate:?}"),
            ParamPrior::Normal { mean, sd } => write!(f, "normal {mean:?} {sd:?}"),
        }
    }
}

/// A validated prior: the expression plus everything needed to draw and
/// score full symbolic expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub alphabet: RankedAlphabet,
    pub root: Prte,
    pub max_depth: usize,
    /// Keyed by marker name, e.g. `sT#`.
    pub param_priors: BTreeMap<String, ParamPrior>,
    pub disc_support: Vec<BigRational>,
    pub ties: Vec<TieRule>,
}

impl PriorSpec {
    /// A prior with no parameter priors, ties or discrete support.
    pub fn new(alphabet: RankedAlphabet, root: Prte) -> Result<Self, PrteError> {
        let spec = PriorSpec {
            alphabet,
            root,
            max_depth: DEFAULT_MAX_DEPTH,
            param_priors: BTreeMap::new(),
            disc_support: Vec::new(),
            ties: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parses the prior file format (directives followed by a pRTE).
    pub fn parse(text: &str) -> Result<Self, PrteError> {
        parse_prior(text)
    }

    pub fn validate(&self) -> Result<(), PrteError> {
        self.root.validate()?;
        let mut markers = Vec::new();
        for sym in self.root.symbols() {
            if !self.alphabet.contains(sym) {
                return Err(PrteError::UnknownSymbol {
                    at: Location::default(),
                    name: sym.name().to_string(),
                    arity: sym.rank(),
                });
            }
            if sym.is_hole() {
                return Err(PrteError::HoleInPrior {
                    at: Location::default(),
                });
            }
            markers.push(sym);
        }
        for sym in markers {
            if sym.is_disc_marker() {
                if self.disc_support.is_empty() {
                    return Err(PrteError::MissingDiscreteSupport);
                }
            } else if sym.is_const_marker() && !self.param_priors.contains_key(sym.name()) {
                return Err(PrteError::MissingParamPrior(sym.name().to_string()));
            }
        }
        for (name, p) in &self.param_priors {
            p.check().map_err(|message| PrteError::BadDirective {
                line: 0,
                message: format!("{name}: {message}"),
            })?;
        }
        if self.max_depth == 0 {
            return Err(PrteError::BadDirective {
                line: 0,
                message: "max_depth must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn param_prior(&self, marker: &RankedSymbol) -> Option<&ParamPrior> {
        self.param_priors.get(marker.name())
    }

    /// Canonical text of the prior file; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        parse::print_prior(self)
    }

    /// Rank-0 input-variable symbols used by the expression, sorted.
    pub fn variables(&self) -> Vec<RankedSymbol> {
        let mut vars: Vec<RankedSymbol> = self
            .root
            .symbols()
            .into_iter()
            .filter(|s| s.is_variable())
            .cloned()
            .collect();
        vars.sort();
        vars.dedup();
        vars
    }
}
