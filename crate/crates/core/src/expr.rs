//! Symbolic expressions: a tree plus the parameter values bound to its
//! marker leaves, and their numeric evaluation.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{Address, RankedSymbol, Tree};
use crate::weight::rational_to_f64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("expected {expected} continuous parameters, got {got}")]
    ConstCount { expected: usize, got: usize },
    #[error("expected {expected} discrete parameters, got {got}")]
    DiscCount { expected: usize, got: usize },
    #[error("continuous parameter {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("tied parameters at {first} and {second} differ")]
    TieViolated { first: Address, second: Address },
    #[error("no input column for variable `{0}`")]
    MissingVariable(String),
    #[error("input columns have different lengths")]
    RaggedInputs,
    #[error("symbol `{0}` has no numeric meaning")]
    UnsupportedSymbol(String),
}

/// Ties all occurrences of `marker` below the same nearest ancestor whose
/// operator name is `scope` to a single parameter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TieRule {
    pub marker: String,
    pub scope: String,
}

/// A set of continuous-marker occurrences sharing one value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub marker: RankedSymbol,
    /// Indices into [`ParamLayout::const_positions`], ascending.
    pub members: Vec<usize>,
}

/// Where the parameters of a tree live and how tied occurrences group.
///
/// Groups are ordered by their first occurrence in pre-order, so the free
/// parameter vector reads in the same order as the printed expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub const_positions: Vec<(Address, RankedSymbol)>,
    pub disc_positions: Vec<Address>,
    pub groups: Vec<ParamGroup>,
    /// Group index of each entry of `const_positions`.
    pub group_of: Vec<usize>,
}

impl ParamLayout {
    pub fn new(tree: &Tree, ties: &[TieRule]) -> Self {
        let mut const_positions = Vec::new();
        let mut disc_positions = Vec::new();
        let mut tie_keys: Vec<Option<(String, Address)>> = Vec::new();

        fn walk(
            t: &Tree,
            addr: Address,
            ancestors: &mut Vec<(Address, String)>,
            ties: &[TieRule],
            consts: &mut Vec<(Address, RankedSymbol)>,
            discs: &mut Vec<Address>,
            keys: &mut Vec<Option<(String, Address)>>,
        ) {
            let sym = t.symbol();
            if sym.is_disc_marker() {
                discs.push(addr.clone());
            } else if sym.is_const_marker() {
                let key = ties.iter().find(|r| r.marker == sym.name()).and_then(|r| {
                    ancestors
                        .iter()
                        .rev()
                        .find(|(_, op)| *op == r.scope)
                        .map(|(a, _)| (sym.name().to_string(), a.clone()))
                });
                consts.push((addr.clone(), sym.clone()));
                keys.push(key);
            }
            ancestors.push((addr.clone(), sym.base_name().to_string()));
            for (i, c) in t.children().iter().enumerate() {
                walk(c, addr.child(i + 1), ancestors, ties, consts, discs, keys);
            }
            ancestors.pop();
        }
        walk(
            tree,
            Address::root(),
            &mut Vec::new(),
            ties,
            &mut const_positions,
            &mut disc_positions,
            &mut tie_keys,
        );

        let mut groups: Vec<ParamGroup> = Vec::new();
        let mut group_of = Vec::with_capacity(const_positions.len());
        let mut by_key: BTreeMap<(String, Address), usize> = BTreeMap::new();
        for (i, key) in tie_keys.into_iter().enumerate() {
            if let Some(&existing) = key.as_ref().and_then(|k| by_key.get(k)) {
                groups[existing].members.push(i);
                group_of.push(existing);
                continue;
            }
            groups.push(ParamGroup {
                marker: const_positions[i].1.clone(),
                members: vec![i],
            });
            if let Some(k) = key {
                by_key.insert(k, groups.len() - 1);
            }
            group_of.push(groups.len() - 1);
        }
        ParamLayout {
            const_positions,
            disc_positions,
            groups,
            group_of,
        }
    }

    pub fn n_const(&self) -> usize {
        self.const_positions.len()
    }

    pub fn n_free(&self) -> usize {
        self.groups.len()
    }

    pub fn n_disc(&self) -> usize {
        self.disc_positions.len()
    }

    /// Per-occurrence values from one value per group.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        self.group_of.iter().map(|&g| free[g]).collect()
    }

    /// One value per group, read from each group's first occurrence.
    pub fn collapse(&self, theta_c: &[f64]) -> Vec<f64> {
        self.groups.iter().map(|g| theta_c[g.members[0]]).collect()
    }

    /// Group indices per marker name, each list in pre-order.
    pub fn groups_by_marker(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, g) in self.groups.iter().enumerate() {
            out.entry(g.marker.name()).or_default().push(i);
        }
        out
    }
}

/// A candidate equation: a tree with a value for every marker leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicExpression {
    tree: Tree,
    theta_c: Vec<f64>,
    theta_d: Vec<BigRational>,
}

impl SymbolicExpression {
    pub fn new(
        tree: Tree,
        theta_c: Vec<f64>,
        theta_d: Vec<BigRational>,
    ) -> Result<Self, ExprError> {
        let layout = ParamLayout::new(&tree, &[]);
        if layout.n_const() != theta_c.len() {
            return Err(ExprError::ConstCount {
                expected: layout.n_const(),
                got: theta_c.len(),
            });
        }
        if layout.n_disc() != theta_d.len() {
            return Err(ExprError::DiscCount {
                expected: layout.n_disc(),
                got: theta_d.len(),
            });
        }
        if let Some((index, &value)) = theta_c.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ExprError::NonFinite { index, value });
        }
        Ok(SymbolicExpression {
            tree,
            theta_c,
            theta_d,
        })
    }

    /// Builds an expression from one value per tie group of `layout`.
    pub fn from_free(
        tree: Tree,
        layout: &ParamLayout,
        free: &[f64],
        theta_d: Vec<BigRational>,
    ) -> Result<Self, ExprError> {
        if free.len() != layout.n_free() {
            return Err(ExprError::ConstCount {
                expected: layout.n_free(),
                got: free.len(),
            });
        }
        SymbolicExpression::new(tree, layout.expand(free), theta_d)
    }

    /// Checks that tied occurrences carry equal values.
    pub fn check_ties(&self, layout: &ParamLayout) -> Result<(), ExprError> {
        for g in &layout.groups {
            let first = g.members[0];
            for &m in &g.members[1..] {
                if self.theta_c[m].to_bits() != self.theta_c[first].to_bits() {
                    return Err(ExprError::TieViolated {
                        first: layout.const_positions[first].0.clone(),
                        second: layout.const_positions[m].0.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn theta_c(&self) -> &[f64] {
        &self.theta_c
    }

    pub fn theta_d(&self) -> &[BigRational] {
        &self.theta_d
    }

    /// Evaluates at `n` points given by named input columns.
    pub fn eval(&self, inputs: &BTreeMap<String, Vec<f64>>) -> Result<Vec<f64>, ExprError> {
        eval_expression(self, inputs)
    }
}

impl fmt::Display for SymbolicExpression {
    /// Tree text followed by the parameter lists, e.g.
    /// `(* sT# c) theta_c=[100] theta_d=[]`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} theta_c=[", self.tree)?;
        for (i, v) in self.theta_c.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v:?}")?;
        }
        f.write_str("] theta_d=[")?;
        for (i, v) in self.theta_d.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("]")
    }
}

/// Vectorised evaluation. Entries that hit a domain error (division by a
/// denominator below 1e-300 in magnitude, a negative base raised to a
/// non-integer power, overflow) come back non-finite.
pub fn eval_expression(
    expr: &SymbolicExpression,
    inputs: &BTreeMap<String, Vec<f64>>,
) -> Result<Vec<f64>, ExprError> {
    let mut lens = inputs.values().map(Vec::len);
    let n = lens.next().unwrap_or(1);
    if lens.any(|l| l != n) {
        return Err(ExprError::RaggedInputs);
    }
    let mut cursor = Cursor {
        theta_c: &expr.theta_c,
        theta_d: &expr.theta_d,
        next_c: 0,
        next_d: 0,
    };
    eval_node(&expr.tree, inputs, n, &mut cursor)
}

struct Cursor<'a> {
    theta_c: &'a [f64],
    theta_d: &'a [BigRational],
    next_c: usize,
    next_d: usize,
}

fn eval_node(
    t: &Tree,
    inputs: &BTreeMap<String, Vec<f64>>,
    n: usize,
    cur: &mut Cursor<'_>,
) -> Result<Vec<f64>, ExprError> {
    let sym = t.symbol();
    if t.is_leaf() {
        if sym.is_disc_marker() {
            let v = rational_to_f64(&cur.theta_d[cur.next_d]);
            cur.next_d += 1;
            return Ok(vec![v; n]);
        }
        if sym.is_const_marker() {
            let v = cur.theta_c[cur.next_c];
            cur.next_c += 1;
            return Ok(vec![v; n]);
        }
        if let Some(v) = sym.literal_value() {
            return Ok(vec![v; n]);
        }
        return inputs
            .get(sym.name())
            .cloned()
            .ok_or_else(|| ExprError::MissingVariable(sym.name().to_string()));
    }
    let mut args = Vec::with_capacity(t.children().len());
    for c in t.children() {
        args.push(eval_node(c, inputs, n, cur)?);
    }
    let op = sym.base_name();
    let out = match (op, args.len()) {
        ("+", _) => fold(args, |a, b| a + b),
        ("*", k) if k >= 2 => fold(args, |a, b| a * b),
        ("-", 1) => args[0].iter().map(|a| -a).collect(),
        ("-", 2) => zip(&args[0], &args[1], |a, b| a - b),
        ("/", 2) => zip(&args[0], &args[1], safe_div),
        ("pow", 2) => zip(&args[0], &args[1], safe_pow),
        ("exp", 1) => args[0].iter().map(|a| a.exp()).collect(),
        ("log", 1) => args[0]
            .iter()
            .map(|&a| if a > 0.0 { a.ln() } else { f64::NAN })
            .collect(),
        ("sqrt", 1) => args[0]
            .iter()
            .map(|&a| if a >= 0.0 { a.sqrt() } else { f64::NAN })
            .collect(),
        _ => return Err(ExprError::UnsupportedSymbol(sym.name().to_string())),
    };
    Ok(out)
}

fn fold(mut args: Vec<Vec<f64>>, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut acc = args.remove(0);
    for a in &args {
        for (x, y) in acc.iter_mut().zip(a) {
            *x = f(*x, *y);
        }
    }
    acc
}

fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b.abs() < 1e-300 {
        f64::NAN
    } else {
        a / b
    }
}

fn safe_pow(base: f64, exp: f64) -> f64 {
    if base < 0.0 && exp.fract() != 0.0 {
        f64::NAN
    } else {
        base.powf(exp)
    }
}
