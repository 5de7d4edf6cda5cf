//! Factor-graph evaluation of automata on trees.
//!
//! For a tree with nodes `1..n`, each node `i` carries an observed symbol
//! `x_i` and a latent state `q_i`. The factor of node `i` ties `q_i`, `x_i`
//! and the states of its children: `δ(x_i, q_i)(q_children)` for inner nodes
//! and `[(q_i, x_i) ∈ F]` for leaves. `φ_0 = μ(q_root)` closes the graph at
//! the root. Summing out states from the leaves upwards gives the inside
//! messages; a second, top-down pass gives outside messages, i.e. the
//! marginal weight of each state at a node with that node's subtree left
//! open.

use super::{Pta, PtaError, StateId};
use crate::tree::{Address, Tree};
use crate::weight::Weight;

#[derive(Debug, Clone)]
struct FgNode {
    /// `None` for a context hole, which accepts any state with weight one.
    symbol: Option<usize>,
    children: Vec<usize>,
}

/// The factor graph of one tree under one automaton. Nodes are numbered in
/// pre-order.
#[derive(Debug, Clone)]
pub struct FactorGraph<'a, W> {
    pta: &'a Pta<W>,
    nodes: Vec<FgNode>,
    addresses: Vec<Address>,
}

impl<'a, W: Weight> FactorGraph<'a, W> {
    pub fn new(pta: &'a Pta<W>, tree: &Tree) -> Result<Self, PtaError> {
        let mut nodes = Vec::with_capacity(tree.size());
        let mut addresses = Vec::with_capacity(tree.size());
        fn walk<W: Weight>(
            pta: &Pta<W>,
            t: &Tree,
            addr: Address,
            nodes: &mut Vec<FgNode>,
            addresses: &mut Vec<Address>,
        ) -> Result<usize, PtaError> {
            let id = nodes.len();
            let symbol = if t.symbol().is_hole() {
                None
            } else {
                Some(pta.symbol_id(t.symbol())?)
            };
            nodes.push(FgNode {
                symbol,
                children: Vec::new(),
            });
            addresses.push(addr.clone());
            let mut children = Vec::with_capacity(t.children().len());
            for (i, c) in t.children().iter().enumerate() {
                children.push(walk(pta, c, addr.child(i + 1), nodes, addresses)?);
            }
            nodes[id].children = children;
            Ok(id)
        }
        walk(pta, tree, Address::root(), &mut nodes, &mut addresses)?;
        Ok(FactorGraph {
            pta,
            nodes,
            addresses,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn address(&self, node: usize) -> &Address {
        &self.addresses[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.nodes[node].children
    }

    /// Reverse pre-order: every node after all of its descendants.
    pub fn leaf_to_root_order(&self) -> Vec<usize> {
        (0..self.nodes.len()).rev().collect()
    }

    /// True if `order` is a permutation listing children before parents.
    pub fn is_leaf_to_root(&self, order: &[usize]) -> bool {
        if order.len() != self.nodes.len() {
            return false;
        }
        let mut pos = vec![usize::MAX; self.nodes.len()];
        for (i, &n) in order.iter().enumerate() {
            if n >= pos.len() || pos[n] != usize::MAX {
                return false;
            }
            pos[n] = i;
        }
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.children.iter().all(|&c| pos[c] < pos[i]))
    }

    /// Table entry of node `i`'s factor.
    pub fn factor(&self, node: usize, state: StateId, child_states: &[StateId]) -> W {
        let n = &self.nodes[node];
        match n.symbol {
            None => W::one(),
            Some(a) if n.children.is_empty() => {
                if self.pta.is_final(state, a) {
                    W::one()
                } else {
                    W::zero()
                }
            }
            Some(f) => self
                .pta
                .row(state, f)
                .iter()
                .find(|(t, _)| t == child_states)
                .map_or_else(W::zero, |(_, p)| p.clone()),
        }
    }

    fn message(&self, node: usize, inside: &[Vec<W>]) -> Vec<W> {
        let nq = self.pta.n_states();
        let n = &self.nodes[node];
        match n.symbol {
            None => vec![W::one(); nq],
            Some(a) if n.children.is_empty() => (0..nq)
                .map(|q| {
                    if self.pta.is_final(q, a) {
                        W::one()
                    } else {
                        W::zero()
                    }
                })
                .collect(),
            Some(f) => (0..nq)
                .map(|q| {
                    let mut acc = W::zero();
                    for (tuple, p) in self.pta.row(q, f) {
                        let mut v = p.clone();
                        for (&c, &s) in n.children.iter().zip(tuple) {
                            let m = &inside[c][s];
                            if m.is_zero() {
                                v = W::zero();
                                break;
                            }
                            v = v.mul(m);
                        }
                        if !v.is_zero() {
                            acc.add_assign(&v);
                        }
                    }
                    acc
                })
                .collect(),
        }
    }

    /// Sums out every state variable in the given order and returns the
    /// total weight.
    pub fn contract(&self, order: &[usize]) -> Result<W, PtaError> {
        if !self.is_leaf_to_root(order) {
            return Err(PtaError::BadOrder);
        }
        let mut inside: Vec<Vec<W>> = vec![Vec::new(); self.nodes.len()];
        for &node in order {
            inside[node] = self.message(node, &inside);
        }
        Ok(dot(self.pta.initial(), &inside[0]))
    }

    /// Inside messages for every node (reverse pre-order contraction).
    pub fn inside(&self) -> Vec<Vec<W>> {
        let mut inside: Vec<Vec<W>> = vec![Vec::new(); self.nodes.len()];
        for node in self.leaf_to_root_order() {
            inside[node] = self.message(node, &inside);
        }
        inside
    }

    /// Outside messages given inside messages: `outside[i][q]` is the total
    /// weight of all runs on the tree with node `i`'s subtree removed and
    /// state `q` at node `i`.
    pub fn outside(&self, inside: &[Vec<W>]) -> Vec<Vec<W>> {
        let nq = self.pta.n_states();
        let mut outside: Vec<Vec<W>> = vec![vec![W::zero(); nq]; self.nodes.len()];
        outside[0] = self.pta.initial().to_vec();
        for node in 0..self.nodes.len() {
            let n = &self.nodes[node];
            let Some(f) = n.symbol else { continue };
            if n.children.is_empty() {
                continue;
            }
            for q in 0..nq {
                let a = outside[node][q].clone();
                if a.is_zero() {
                    continue;
                }
                for (tuple, p) in self.pta.row(q, f) {
                    let base = a.mul(p);
                    for j in 0..tuple.len() {
                        let mut v = base.clone();
                        for (i, (&c, &s)) in n.children.iter().zip(tuple).enumerate() {
                            if i != j {
                                v = v.mul(&inside[c][s]);
                            }
                        }
                        if !v.is_zero() {
                            outside[n.children[j]][tuple[j]].add_assign(&v);
                        }
                    }
                }
            }
        }
        outside
    }
}

fn dot<W: Weight>(a: &[W], b: &[W]) -> W {
    let mut acc = W::zero();
    for (x, y) in a.iter().zip(b) {
        if !x.is_zero() && !y.is_zero() {
            acc.add_assign(&x.mul(y));
        }
    }
    acc
}

/// Inside and outside messages of every node, in pre-order.
#[derive(Debug, Clone)]
pub struct InsideOutside<W> {
    pub addresses: Vec<Address>,
    pub inside: Vec<Vec<W>>,
    pub outside: Vec<Vec<W>>,
    pub total: W,
}

impl<W: Weight> InsideOutside<W> {
    pub fn index_of(&self, address: &Address) -> Option<usize> {
        self.addresses.iter().position(|a| a == address)
    }
}

pub fn inside_outside<W: Weight>(pta: &Pta<W>, tree: &Tree) -> Result<InsideOutside<W>, PtaError> {
    let g = FactorGraph::new(pta, tree)?;
    let inside = g.inside();
    let outside = g.outside(&inside);
    let total = dot(pta.initial(), &inside[0]);
    Ok(InsideOutside {
        addresses: g.addresses,
        inside,
        outside,
        total,
    })
}

/// State marginal at the hole of a context.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextMarginal<W> {
    pub hole: Address,
    pub unnormalized: Vec<W>,
    pub normalized: Vec<f64>,
}

/// Leaves the hole's state un-summed: the result weights each state by the
/// total weight of all runs on the context that put that state at the hole.
pub fn context_marginal<W: Weight>(
    pta: &Pta<W>,
    context: &Tree,
) -> Result<ContextMarginal<W>, PtaError> {
    let holes: Vec<Address> = context
        .nodes()
        .into_iter()
        .filter(|(_, t)| t.symbol().is_hole())
        .map(|(a, _)| a)
        .collect();
    if holes.len() != 1 {
        return Err(PtaError::HoleCount(holes.len()));
    }
    let io = inside_outside(pta, context)?;
    let idx = io.index_of(&holes[0]).expect("hole address is in the tree");
    let unnormalized = io.outside[idx].clone();
    let normalized = normalize(&unnormalized)?;
    Ok(ContextMarginal {
        hole: holes[0].clone(),
        unnormalized,
        normalized,
    })
}

pub(crate) fn normalize<W: Weight>(v: &[W]) -> Result<Vec<f64>, PtaError> {
    let f: Vec<f64> = v.iter().map(Weight::to_f64).collect();
    let z: f64 = f.iter().sum();
    if !(z > 0.0) {
        return Err(PtaError::ImpossibleContext);
    }
    Ok(f.into_iter().map(|x| x / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prte::PriorSpec;
    use crate::pta::{compile, pta_eval};
    use crate::tree::{RankedAlphabet, RankedSymbol};

    const E1: &str = "iter $y { choice{1/3: f($x, $y), 1/3: f($y, $x), 1/3: g($x)} }
  .subst($x, iter $x { choice{1/4: f($x, $x), 1/4: g($x), 1/4: a, 1/4: b} })";

    #[test]
    fn hole_at_root_gives_initial_distribution() {
        let prior = PriorSpec::parse(E1).unwrap();
        let pta = compile(&prior).unwrap();
        let ctx = Tree::leaf(RankedSymbol::hole()).unwrap();
        let m = context_marginal(&pta, &ctx).unwrap();
        assert_eq!(m.unnormalized, pta.initial());
    }

    #[test]
    fn orders_agree() {
        let prior = PriorSpec::parse(E1).unwrap();
        let pta = compile(&prior).unwrap();
        let t = Tree::parse("(f (g a) (f a (g b)))", &prior.alphabet).unwrap();
        let g = FactorGraph::new(&pta, &t).unwrap();
        let a = g.contract(&g.leaf_to_root_order()).unwrap();
        // Post-order is also leaf-to-root.
        let mut post = Vec::new();
        fn po(g: &FactorGraph<'_, f64>, n: usize, out: &mut Vec<usize>) {
            for &c in g.children(n) {
                po(g, c, out);
            }
            out.push(n);
        }
        po(&g, 0, &mut post);
        let b = g.contract(&post).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert_eq!(g.contract(&[0, 1, 2, 3, 4, 5, 6, 7]), Err(PtaError::BadOrder));
    }

    #[test]
    fn outside_times_inside_is_total_at_every_node() {
        let prior = PriorSpec::parse(E1).unwrap();
        let pta = compile(&prior).unwrap();
        let t = Tree::parse("(f (g a) (f a (g b)))", &prior.alphabet).unwrap();
        let io = inside_outside(&pta, &t).unwrap();
        let total = pta_eval(&pta, &t).unwrap();
        assert!(total > 0.0);
        for i in 0..io.addresses.len() {
            let s: f64 = io.outside[i].iter().zip(&io.inside[i]).map(|(a, b)| a * b).sum();
            assert!((s - total).abs() < 1e-15, "node {i}: {s} vs {total}");
        }
    }

    #[test]
    fn impossible_context() {
        let a = RankedAlphabet::new([RankedSymbol::new("f", 2), RankedSymbol::new("a", 0), RankedSymbol::new("z", 0)]).unwrap();
        let prior = PriorSpec::parse("@symbol z 0\nf(a, a)").unwrap();
        let pta = compile(&prior).unwrap();
        let ctx = Tree::parse("(f z ?)", &a).unwrap();
        assert_eq!(context_marginal(&pta, &ctx).unwrap_err(), PtaError::ImpossibleContext);
        let two = Tree::parse("(f ? ?)", &a).unwrap();
        assert_eq!(context_marginal(&pta, &two).unwrap_err(), PtaError::HoleCount(2));
    }
}
