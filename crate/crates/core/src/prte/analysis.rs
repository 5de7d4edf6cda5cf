//! Static checks on pRTEs and the flattened, variable-resolved arena that
//! the automaton compiler works from.
//!
//! Errors are paired with the child-index path of the offending node so the
//! parser can translate them into source locations.

use std::collections::BTreeSet;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::{Location, Prte, PrteError};
use crate::tree::RankedSymbol;
use crate::weight::{format_rational, rational_to_f64};

pub(crate) type Located = (PrteError, Vec<usize>);

pub(crate) fn validate(prte: &Prte) -> Result<(), Located> {
    let mut path = Vec::new();
    check_local(prte, &mut Vec::new(), &mut path)?;
    let arena = Arena::build(prte)?;
    arena.check_epsilon_cycles()
}

/// Weights, scoping and the per-iteration termination condition.
fn check_local<'a>(
    e: &'a Prte,
    scope: &mut Vec<&'a str>,
    path: &mut Vec<usize>,
) -> Result<(), Located> {
    match e {
        Prte::Symbol { children, .. } => {
            for (i, c) in children.iter().enumerate() {
                path.push(i);
                check_local(c, scope, path)?;
                path.pop();
            }
        }
        Prte::Var(v) => {
            if !scope.contains(&v.as_str()) {
                return Err((
                    PrteError::UnboundVariable {
                        at: Location::default(),
                        name: v.clone(),
                    },
                    path.clone(),
                ));
            }
        }
        Prte::Choice(branches) => {
            let mut total = BigRational::zero();
            for (w, _) in branches {
                if !w.is_positive() || *w > BigRational::one() {
                    return Err((
                        PrteError::InvalidWeight {
                            at: Location::default(),
                            weight: format_rational(w),
                        },
                        path.clone(),
                    ));
                }
                total += w;
            }
            if rational_to_f64(&(&total - BigRational::one())).abs() > 1e-12 {
                return Err((
                    PrteError::WeightSum {
                        at: Location::default(),
                        sum: format_rational(&total),
                    },
                    path.clone(),
                ));
            }
            for (i, (_, b)) in branches.iter().enumerate() {
                path.push(i);
                check_local(b, scope, path)?;
                path.pop();
            }
        }
        Prte::Concat { left, var, right } => {
            path.push(1);
            check_local(right, scope, path)?;
            path.pop();
            scope.push(var);
            path.push(0);
            check_local(left, scope, path)?;
            path.pop();
            scope.pop();
        }
        Prte::Iter { var, body } => {
            scope.push(var);
            path.push(0);
            check_local(body, scope, path)?;
            path.pop();
            scope.pop();
            let forbidden = BTreeSet::from([var.as_str()]);
            if !avoids(body, &forbidden) {
                return Err((
                    PrteError::NonTerminatingIter {
                        at: Location::default(),
                        var: var.clone(),
                        reason: "every derivation of the body keeps the variable",
                    },
                    path.clone(),
                ));
            }
        }
    }
    Ok(())
}

/// True if `e` has a finite derivation containing none of the variables in
/// `forbidden`.
fn avoids(e: &Prte, forbidden: &BTreeSet<&str>) -> bool {
    match e {
        Prte::Symbol { children, .. } => children.iter().all(|c| avoids(c, forbidden)),
        Prte::Var(v) => !forbidden.contains(v.as_str()),
        Prte::Choice(branches) => branches.iter().any(|(_, b)| avoids(b, forbidden)),
        Prte::Concat { left, var, right } => {
            let mut inner = forbidden.clone();
            if avoids(right, forbidden) {
                inner.remove(var.as_str());
            } else {
                inner.insert(var.as_str());
            }
            avoids(left, &inner)
        }
        Prte::Iter { var, body } => {
            let mut inner = forbidden.clone();
            inner.insert(var.as_str());
            avoids(body, &inner)
        }
    }
}

/// Node of the flattened expression. Variables, `.subst` and `iter` become
/// weight-one epsilon edges; only `Sym` nodes emit tree nodes.
#[derive(Debug, Clone)]
pub(crate) enum ArenaNode {
    Sym {
        symbol: RankedSymbol,
        children: Vec<usize>,
    },
    Eps(usize),
    Choice(Vec<(BigRational, usize)>),
}

#[derive(Debug, Clone)]
pub(crate) struct Arena {
    pub nodes: Vec<ArenaNode>,
    pub root: usize,
    paths: Vec<Vec<usize>>,
    iter_var: Vec<Option<String>>,
}

impl Arena {
    /// Flattens `prte`, resolving each variable to its binder: a `.subst`
    /// variable points at the substituted expression, an iteration variable
    /// points back at the iteration itself.
    pub fn build(prte: &Prte) -> Result<Arena, Located> {
        let mut arena = Arena {
            nodes: Vec::new(),
            root: 0,
            paths: Vec::new(),
            iter_var: Vec::new(),
        };
        let mut path = Vec::new();
        arena.root = arena.add(prte, &mut Vec::new(), &mut path)?;
        Ok(arena)
    }

    fn alloc(&mut self, path: &[usize], iter_var: Option<String>) -> usize {
        self.nodes.push(ArenaNode::Eps(usize::MAX));
        self.paths.push(path.to_vec());
        self.iter_var.push(iter_var);
        self.nodes.len() - 1
    }

    fn add<'a>(
        &mut self,
        e: &'a Prte,
        scope: &mut Vec<(&'a str, usize)>,
        path: &mut Vec<usize>,
    ) -> Result<usize, Located> {
        match e {
            Prte::Symbol { symbol, children } => {
                let id = self.alloc(path, None);
                let mut ids = Vec::with_capacity(children.len());
                for (i, c) in children.iter().enumerate() {
                    path.push(i);
                    ids.push(self.add(c, scope, path)?);
                    path.pop();
                }
                self.nodes[id] = ArenaNode::Sym {
                    symbol: symbol.clone(),
                    children: ids,
                };
                Ok(id)
            }
            Prte::Var(v) => {
                let target = scope
                    .iter()
                    .rev()
                    .find(|(name, _)| *name == v)
                    .map(|&(_, id)| id)
                    .ok_or_else(|| {
                        (
                            PrteError::UnboundVariable {
                                at: Location::default(),
                                name: v.clone(),
                            },
                            path.clone(),
                        )
                    })?;
                let id = self.alloc(path, None);
                self.nodes[id] = ArenaNode::Eps(target);
                Ok(id)
            }
            Prte::Choice(branches) => {
                let id = self.alloc(path, None);
                let mut out = Vec::with_capacity(branches.len());
                for (i, (w, b)) in branches.iter().enumerate() {
                    path.push(i);
                    out.push((w.clone(), self.add(b, scope, path)?));
                    path.pop();
                }
                self.nodes[id] = ArenaNode::Choice(out);
                Ok(id)
            }
            Prte::Concat { left, var, right } => {
                let id = self.alloc(path, None);
                path.push(1);
                let r = self.add(right, scope, path)?;
                path.pop();
                scope.push((var, r));
                path.push(0);
                let l = self.add(left, scope, path);
                path.pop();
                scope.pop();
                self.nodes[id] = ArenaNode::Eps(l?);
                Ok(id)
            }
            Prte::Iter { var, body } => {
                let id = self.alloc(path, Some(var.clone()));
                scope.push((var, id));
                path.push(0);
                let b = self.add(body, scope, path);
                path.pop();
                scope.pop();
                self.nodes[id] = ArenaNode::Eps(b?);
                Ok(id)
            }
        }
    }

    fn epsilon_successors(&self, id: usize) -> Vec<usize> {
        match &self.nodes[id] {
            ArenaNode::Sym { .. } => Vec::new(),
            ArenaNode::Eps(t) => vec![*t],
            ArenaNode::Choice(b) => b.iter().map(|(_, t)| *t).collect(),
        }
    }

    /// An iteration that can reach its own variable without emitting a
    /// symbol would assign infinite mass to the trees it derives.
    pub fn check_epsilon_cycles(&self) -> Result<(), Located> {
        self.epsilon_topological_order().map(|_| ())
    }

    /// Non-symbol nodes ordered so every node comes after its epsilon
    /// successors. Fails on an epsilon cycle.
    pub fn epsilon_topological_order(&self) -> Result<Vec<usize>, Located> {
        const WHITE: u8 = 0;
        const GREY: u8 = 1;
        const BLACK: u8 = 2;
        let n = self.nodes.len();
        let mut color = vec![WHITE; n];
        let mut order = Vec::with_capacity(n);
        for start in 0..n {
            if color[start] != WHITE {
                continue;
            }
            let mut stack: Vec<(usize, Vec<usize>)> = vec![(start, self.epsilon_successors(start))];
            color[start] = GREY;
            while let Some((node, succ)) = stack.last_mut() {
                let node = *node;
                match succ.pop() {
                    Some(next) if color[next] == GREY => {
                        let pos = stack.iter().position(|(id, _)| *id == next).unwrap_or(0);
                        let cycle: Vec<usize> = stack[pos..].iter().map(|(id, _)| *id).collect();
                        let culprit = cycle
                            .iter()
                            .copied()
                            .find(|&id| self.iter_var[id].is_some())
                            .unwrap_or(next);
                        return Err((
                            PrteError::NonTerminatingIter {
                                at: Location::default(),
                                var: self.iter_var[culprit].clone().unwrap_or_default(),
                                reason: "the variable can be reached without emitting a symbol",
                            },
                            self.paths[culprit].clone(),
                        ));
                    }
                    Some(next) if color[next] == WHITE => {
                        color[next] = GREY;
                        let s = self.epsilon_successors(next);
                        stack.push((next, s));
                    }
                    Some(_) => {}
                    None => {
                        color[node] = BLACK;
                        order.push(node);
                        stack.pop();
                    }
                }
            }
        }
        Ok(order)
    }
}
