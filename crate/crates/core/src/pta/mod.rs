//! Probabilistic top-down tree automata.
//!
//! A [`Pta`] has states `Q`, an initial distribution `μ`, transitions
//! `δ(f, q)` giving a weight to each tuple of child states, and final pairs
//! `(q, a)` for leaves. The weight of a tree is the sum over all successful
//! runs of `μ(root state)` times every transition weight used, which
//! [`pta_eval`] computes by contracting a tree-shaped factor graph from the
//! leaves up.

mod compile;
mod graph;
mod product;
mod sample;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::prte::PrteError;
use crate::tree::{RankedAlphabet, RankedSymbol, Tree};
use crate::weight::Weight;

pub use compile::{compile, compile_exact, compile_with, DEFAULT_STATE_BUDGET};
pub use graph::{context_marginal, inside_outside, ContextMarginal, FactorGraph, InsideOutside};
pub use product::{product, product_with_budget};
pub use sample::{generation_inside, sample_from_state, MAX_REGROW_ATTEMPTS};

pub type StateId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PtaError {
    #[error("symbol `{0}` is not in the automaton's alphabet")]
    AlphabetMismatch(String),
    #[error("more than {0} states")]
    StateBudgetExceeded(usize),
    #[error(transparent)]
    Prior(#[from] PrteError),
    #[error("the context has probability zero for every hole state")]
    ImpossibleContext,
    #[error("expected exactly one hole `?` in the context, found {0}")]
    HoleCount(usize),
    #[error("regrowth exceeded the depth budget {max_depth} in {attempts} consecutive attempts")]
    DepthBudgetExhausted { attempts: usize, max_depth: usize },
    #[error("state {0} does not exist")]
    UnknownState(StateId),
    #[error("invalid automaton: {0}")]
    Invalid(String),
    #[error("elimination order is not leaf-to-root")]
    BadOrder,
}

/// One weighted transition out of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<W> {
    pub symbol: usize,
    pub children: Vec<StateId>,
    pub p: W,
}

#[derive(Debug, Clone)]
pub struct Pta<W = f64> {
    alphabet: RankedAlphabet,
    symbols: Vec<RankedSymbol>,
    symbol_ids: HashMap<RankedSymbol, usize>,
    labels: Vec<String>,
    initial: Vec<W>,
    /// Per state, per symbol id: child-state tuples and their weights.
    delta: Vec<BTreeMap<usize, Vec<(Vec<StateId>, W)>>>,
    /// Per state, the rank-0 symbol ids it accepts.
    finals: Vec<BTreeSet<usize>>,
    /// Per state, the total outgoing mass (transitions plus finals), used to
    /// turn the automaton into a generative process.
    out_mass: Vec<f64>,
}

impl<W: Weight> Pta<W> {
    /// Builds and checks an automaton. `finals` lists `(state, symbol)`.
    pub fn new(
        alphabet: RankedAlphabet,
        labels: Vec<String>,
        initial: Vec<W>,
        transitions: Vec<(StateId, RankedSymbol, Vec<StateId>, W)>,
        finals: Vec<(StateId, RankedSymbol)>,
    ) -> Result<Self, PtaError> {
        let n = initial.len();
        let mut pta = Pta::empty(alphabet, labels, initial);
        for (q, sym, children, p) in transitions {
            let f = pta.symbol_id(&sym)?;
            if q >= n || children.iter().any(|&c| c >= n) {
                return Err(PtaError::UnknownState(q.max(children.iter().copied().max().unwrap_or(0))));
            }
            if children.len() != sym.rank() || sym.rank() == 0 {
                return Err(PtaError::Invalid(format!(
                    "transition on `{}` needs {} child states, got {}",
                    sym.name(),
                    sym.rank(),
                    children.len()
                )));
            }
            pta.add_transition(q, f, children, p);
        }
        for (q, sym) in finals {
            let a = pta.symbol_id(&sym)?;
            if q >= n {
                return Err(PtaError::UnknownState(q));
            }
            if sym.rank() != 0 {
                return Err(PtaError::Invalid(format!("final symbol `{}` is not a leaf", sym.name())));
            }
            pta.finals[q].insert(a);
        }
        pta.finish();
        pta.check()?;
        Ok(pta)
    }

    pub(crate) fn empty(alphabet: RankedAlphabet, labels: Vec<String>, initial: Vec<W>) -> Self {
        let symbols: Vec<RankedSymbol> = alphabet.symbols().cloned().collect();
        let symbol_ids = symbols.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let n = initial.len();
        Pta {
            alphabet,
            symbols,
            symbol_ids,
            labels,
            initial,
            delta: vec![BTreeMap::new(); n],
            finals: vec![BTreeSet::new(); n],
            out_mass: vec![0.0; n],
        }
    }

    pub(crate) fn add_state(&mut self, label: String, initial: W) -> StateId {
        self.labels.push(label);
        self.initial.push(initial);
        self.delta.push(BTreeMap::new());
        self.finals.push(BTreeSet::new());
        self.out_mass.push(0.0);
        self.labels.len() - 1
    }

    pub(crate) fn add_transition(&mut self, q: StateId, f: usize, children: Vec<StateId>, p: W) {
        let row = self.delta[q].entry(f).or_default();
        match row.iter_mut().find(|(c, _)| *c == children) {
            Some((_, w)) => w.add_assign(&p),
            None => row.push((children, p)),
        }
    }

    pub(crate) fn add_final(&mut self, q: StateId, a: usize) {
        self.finals[q].insert(a);
    }

    pub(crate) fn finish(&mut self) {
        for q in 0..self.n_states() {
            let mut m = self.finals[q].len() as f64;
            for row in self.delta[q].values() {
                m += row.iter().map(|(_, p)| p.to_f64()).sum::<f64>();
            }
            self.out_mass[q] = m;
        }
    }

    /// Checks the structural invariants: `μ` sums to one, every row is
    /// sub-stochastic with positive entries, every state is reachable.
    pub fn check(&self) -> Result<(), PtaError> {
        let total: f64 = self.initial.iter().map(Weight::to_f64).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(PtaError::Invalid(format!("initial distribution sums to {total}")));
        }
        if self.initial.iter().any(|w| w.to_f64() < 0.0) {
            return Err(PtaError::Invalid("negative initial weight".into()));
        }
        for (q, rows) in self.delta.iter().enumerate() {
            for (f, row) in rows {
                let s: f64 = row.iter().map(|(_, p)| p.to_f64()).sum();
                if s > 1.0 + 1e-12 {
                    return Err(PtaError::Invalid(format!(
                        "row ({}, {}) sums to {s}",
                        self.symbols[*f].name(),
                        self.labels[q]
                    )));
                }
                if row.iter().any(|(_, p)| !(p.to_f64() > 0.0)) {
                    return Err(PtaError::Invalid(format!(
                        "row ({}, {}) has a non-positive entry",
                        self.symbols[*f].name(),
                        self.labels[q]
                    )));
                }
            }
        }
        let reach = self.reachable();
        if let Some(q) = reach.iter().position(|r| !r) {
            return Err(PtaError::Invalid(format!("state {} is unreachable", self.labels[q])));
        }
        Ok(())
    }

    fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.n_states()];
        let mut stack: Vec<StateId> = (0..self.n_states())
            .filter(|&q| !self.initial[q].is_zero())
            .collect();
        for &q in &stack {
            seen[q] = true;
        }
        while let Some(q) = stack.pop() {
            for row in self.delta[q].values() {
                for (children, _) in row {
                    for &c in children {
                        if !seen[c] {
                            seen[c] = true;
                            stack.push(c);
                        }
                    }
                }
            }
        }
        seen
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn alphabet(&self) -> &RankedAlphabet {
        &self.alphabet
    }

    pub fn initial(&self) -> &[W] {
        &self.initial
    }

    pub fn label(&self, q: StateId) -> &str {
        &self.labels[q]
    }

    pub fn symbol(&self, id: usize) -> &RankedSymbol {
        &self.symbols[id]
    }

    pub fn symbol_id(&self, sym: &RankedSymbol) -> Result<usize, PtaError> {
        self.symbol_ids
            .get(sym)
            .copied()
            .ok_or_else(|| PtaError::AlphabetMismatch(sym.name().to_string()))
    }

    /// Child tuples and weights of `δ(f, q)`; empty when undefined.
    pub fn row(&self, q: StateId, f: usize) -> &[(Vec<StateId>, W)] {
        self.delta[q].get(&f).map_or(&[], Vec::as_slice)
    }

    pub fn is_final(&self, q: StateId, a: usize) -> bool {
        self.finals[q].contains(&a)
    }

    /// All transitions leaving `q`, in symbol order.
    pub fn transitions_from(&self, q: StateId) -> impl Iterator<Item = Transition<W>> + '_ {
        self.delta[q].iter().flat_map(|(&f, row)| {
            row.iter().map(move |(children, p)| Transition {
                symbol: f,
                children: children.clone(),
                p: p.clone(),
            })
        })
    }

    pub fn finals_of(&self, q: StateId) -> impl Iterator<Item = usize> + '_ {
        self.finals[q].iter().copied()
    }

    /// Total mass leaving `q` (transition weights plus one per final pair).
    pub fn out_mass(&self, q: StateId) -> f64 {
        self.out_mass[q]
    }

    /// Number of stored transition entries.
    pub fn n_transitions(&self) -> usize {
        self.delta
            .iter()
            .map(|rows| rows.values().map(Vec::len).sum::<usize>())
            .sum()
    }

    pub fn map<V: Weight>(&self, f: impl Fn(&W) -> V) -> Pta<V> {
        let mut out = Pta::empty(
            self.alphabet.clone(),
            self.labels.clone(),
            self.initial.iter().map(&f).collect(),
        );
        for q in 0..self.n_states() {
            for (&sym, row) in &self.delta[q] {
                for (children, p) in row {
                    out.add_transition(q, sym, children.clone(), f(p));
                }
            }
            out.finals[q] = self.finals[q].clone();
        }
        out.finish();
        out
    }

    pub fn to_f64(&self) -> Pta<f64> {
        self.map(Weight::to_f64)
    }

    /// Debug dump: `{states, initial, transitions:[{symbol, from, to, p}], finals}`.
    pub fn dump(&self) -> PtaDump {
        let mut transitions = Vec::new();
        for q in 0..self.n_states() {
            for t in self.transitions_from(q) {
                transitions.push(DumpTransition {
                    symbol: self.symbols[t.symbol].name().to_string(),
                    from: q,
                    to: t.children,
                    p: t.p.to_f64(),
                });
            }
        }
        let mut finals = Vec::new();
        for q in 0..self.n_states() {
            for a in &self.finals[q] {
                finals.push(DumpFinal {
                    state: q,
                    symbol: self.symbols[*a].name().to_string(),
                });
            }
        }
        PtaDump {
            states: self.labels.clone(),
            initial: self.initial.iter().map(Weight::to_f64).collect(),
            transitions,
            finals,
        }
    }
}

impl Pta<f64> {
    /// One state accepting every tree with weight one.
    pub fn accept_all(alphabet: &RankedAlphabet) -> Pta<f64> {
        let mut p = Pta::empty(alphabet.clone(), vec!["all".into()], vec![1.0]);
        for (i, sym) in p.symbols.clone().iter().enumerate() {
            if sym.rank() == 0 {
                p.add_final(0, i);
            } else {
                p.add_transition(0, i, vec![0; sym.rank()], 1.0);
            }
        }
        p.finish();
        p
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PtaDump {
    pub states: Vec<String>,
    pub initial: Vec<f64>,
    pub transitions: Vec<DumpTransition>,
    pub finals: Vec<DumpFinal>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DumpTransition {
    pub symbol: String,
    pub from: StateId,
    pub to: Vec<StateId>,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DumpFinal {
    pub state: StateId,
    pub symbol: String,
}

/// Weight of `tree`: the sum over successful runs, by leaf-to-root
/// contraction of the tree's factor graph.
pub fn pta_eval<W: Weight>(pta: &Pta<W>, tree: &Tree) -> Result<W, PtaError> {
    let g = FactorGraph::new(pta, tree)?;
    g.contract(&g.leaf_to_root_order())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alphabet() -> RankedAlphabet {
        RankedAlphabet::new([RankedSymbol::new("f", 2), RankedSymbol::new("a", 0)]).unwrap()
    }

    #[test]
    fn single_state_run_multiplies_entries() {
        let a = alphabet();
        let f = a.get("f").unwrap().clone();
        let leaf = a.get("a").unwrap().clone();
        let pta = Pta::new(
            a.clone(),
            vec!["q".into()],
            vec![1.0],
            vec![(0, f, vec![0, 0], 0.5)],
            vec![(0, leaf)],
        )
        .unwrap();
        let t = Tree::parse("(f (f a a) a)", &a).unwrap();
        assert_eq!(pta_eval(&pta, &t).unwrap(), 0.25);
    }

    #[test]
    fn invalid_automata_are_rejected() {
        let a = alphabet();
        let f = a.get("f").unwrap().clone();
        let bad_mu = Pta::<f64>::new(a.clone(), vec!["q".into()], vec![0.5], vec![], vec![]);
        assert!(matches!(bad_mu, Err(PtaError::Invalid(_))));
        let over = Pta::new(
            a.clone(),
            vec!["q".into()],
            vec![1.0],
            vec![(0, f.clone(), vec![0, 0], 0.7), (0, f, vec![0, 0], 0.7)],
            vec![],
        );
        assert!(matches!(over, Err(PtaError::Invalid(_))));
        let unreachable = Pta::<f64>::new(
            a,
            vec!["q".into(), "r".into()],
            vec![1.0, 0.0],
            vec![],
            vec![],
        );
        assert!(matches!(unreachable, Err(PtaError::Invalid(_))));
    }

    #[test]
    fn unknown_symbol_is_alphabet_mismatch() {
        let pta = Pta::accept_all(&alphabet());
        let other = RankedAlphabet::new([RankedSymbol::new("z", 0)]).unwrap();
        let t = Tree::parse("z", &other).unwrap();
        assert_eq!(pta_eval(&pta, &t), Err(PtaError::AlphabetMismatch("z".into())));
    }
}
