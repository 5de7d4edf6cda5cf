//! pRTE to automaton compilation.
//!
//! Every symbol node of the flattened expression becomes a state that emits
//! exactly that symbol. Everything else (choices, variables, `.subst`,
//! `iter`) only moves probability mass between expression nodes without
//! emitting anything, so it is folded into the epsilon closure: a
//! distribution over the symbol nodes an expression node can resolve to.
//! The initial distribution is the closure of the root, and a symbol state
//! sends its children to the product of their closures.

use std::collections::{BTreeMap, VecDeque};

use num_rational::BigRational;

use super::{Pta, PtaError, StateId};
use crate::prte::{Arena, ArenaNode, PriorSpec};
use crate::weight::Weight;

pub const DEFAULT_STATE_BUDGET: usize = 10_000;

/// Compiles with `f64` weights (computed exactly, then rounded once).
pub fn compile(prior: &PriorSpec) -> Result<Pta<f64>, PtaError> {
    Ok(compile_exact(prior)?.to_f64())
}

/// Compiles with exact rational weights.
pub fn compile_exact(prior: &PriorSpec) -> Result<Pta<BigRational>, PtaError> {
    compile_with(prior, DEFAULT_STATE_BUDGET)
}

pub fn compile_with<W: Weight>(prior: &PriorSpec, state_budget: usize) -> Result<Pta<W>, PtaError> {
    prior.root.validate()?;
    let arena = Arena::build(&prior.root).map_err(|(e, _)| e)?;
    let order = arena.epsilon_topological_order().map_err(|(e, _)| e)?;

    // Closure of every node, successors before predecessors.
    let mut closure: Vec<BTreeMap<usize, W>> = vec![BTreeMap::new(); arena.nodes.len()];
    for &id in &order {
        closure[id] = match &arena.nodes[id] {
            ArenaNode::Sym { .. } => BTreeMap::from([(id, W::one())]),
            ArenaNode::Eps(t) => closure[*t].clone(),
            ArenaNode::Choice(branches) => {
                let mut acc: BTreeMap<usize, W> = BTreeMap::new();
                for (w, b) in branches {
                    let w = W::from_rational(w);
                    for (s, p) in &closure[*b] {
                        let v = w.mul(p);
                        acc.entry(*s)
                            .and_modify(|x| x.add_assign(&v))
                            .or_insert(v);
                    }
                }
                acc.retain(|_, p| !p.is_zero());
                acc
            }
        };
    }

    let mut state_of: BTreeMap<usize, StateId> = BTreeMap::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut pta: Pta<W> = Pta::empty(prior.alphabet.clone(), Vec::new(), Vec::new());

    let intern = |node: usize,
                      pta: &mut Pta<W>,
                      queue: &mut VecDeque<usize>,
                      state_of: &mut BTreeMap<usize, StateId>|
     -> Result<StateId, PtaError> {
        if let Some(&q) = state_of.get(&node) {
            return Ok(q);
        }
        if state_of.len() >= state_budget {
            return Err(PtaError::StateBudgetExceeded(state_budget));
        }
        let ArenaNode::Sym { symbol, .. } = &arena.nodes[node] else {
            unreachable!("closures only contain symbol nodes")
        };
        let q = pta.add_state(format!("q{}:{}", state_of.len(), symbol.name()), W::zero());
        state_of.insert(node, q);
        queue.push_back(node);
        Ok(q)
    };

    for (&node, p) in &closure[arena.root] {
        let q = intern(node, &mut pta, &mut queue, &mut state_of)?;
        pta.initial[q] = p.clone();
    }

    while let Some(node) = queue.pop_front() {
        let q = state_of[&node];
        let ArenaNode::Sym { symbol, children } = &arena.nodes[node] else {
            unreachable!()
        };
        let f = pta.symbol_id(symbol)?;
        if children.is_empty() {
            pta.add_final(q, f);
            continue;
        }
        // Cartesian product of the children's closures.
        let mut tuples: Vec<(Vec<StateId>, W)> = vec![(Vec::new(), W::one())];
        for &c in children {
            let mut next = Vec::new();
            for (s, p) in &closure[c] {
                let cq = intern(*s, &mut pta, &mut queue, &mut state_of)?;
                for (prefix, w) in &tuples {
                    let mut t = prefix.clone();
                    t.push(cq);
                    next.push((t, w.mul(p)));
                }
            }
            tuples = next;
        }
        for (t, p) in tuples {
            pta.add_transition(q, f, t, p);
        }
    }
    pta.finish();
    Ok(pta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pta::pta_eval;
    use crate::tree::Tree;

    const E1: &str = "iter $y { choice{1/3: f($x, $y), 1/3: f($y, $x), 1/3: g($x)} }
  .subst($x, iter $x { choice{1/4: f($x, $x), 1/4: g($x), 1/4: a, 1/4: b} })";

    #[test]
    fn example_one_exact() {
        let prior = PriorSpec::parse(E1).unwrap();
        let pta = compile_exact(&prior).unwrap();
        pta.check().unwrap();
        let t = Tree::parse("(g (g a))", &prior.alphabet).unwrap();
        assert_eq!(
            pta_eval(&pta, &t).unwrap(),
            BigRational::new(1.into(), 48.into())
        );
        let t = Tree::parse("(f b b)", &prior.alphabet).unwrap();
        assert_eq!(pta_eval(&compile(&prior).unwrap(), &t).unwrap(), 0.0);
    }

    #[test]
    fn single_leaf_prior() {
        let prior = PriorSpec::parse("choice{1.0: a}").unwrap();
        let pta = compile(&prior).unwrap();
        assert_eq!(pta.n_states(), 1);
        assert_eq!(pta.initial(), &[1.0]);
        let a = pta.symbol_id(prior.alphabet.get("a").unwrap()).unwrap();
        assert!(pta.is_final(0, a));
    }

    #[test]
    fn budget_is_enforced() {
        let prior = PriorSpec::parse("f(a, f(a, a))").unwrap();
        assert_eq!(
            compile_with::<f64>(&prior, 2).unwrap_err(),
            PtaError::StateBudgetExceeded(2)
        );
    }
}
