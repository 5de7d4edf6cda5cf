//! Product of two automata over the same alphabet. The product weighs each
//! tree by the product of the two weights.

use std::collections::{HashMap, VecDeque};

use super::{Pta, PtaError, StateId};
use crate::weight::Weight;

pub fn product<W: Weight>(a: &Pta<W>, b: &Pta<W>) -> Result<Pta<W>, PtaError> {
    product_with_budget(a, b, super::DEFAULT_STATE_BUDGET)
}

/// Builds only pair states reachable from the joint initial distribution.
pub fn product_with_budget<W: Weight>(
    a: &Pta<W>,
    b: &Pta<W>,
    budget: usize,
) -> Result<Pta<W>, PtaError> {
    let sa: Vec<_> = a.alphabet().symbols().collect();
    let sb: Vec<_> = b.alphabet().symbols().collect();
    if sa != sb {
        let diff = sa
            .iter()
            .find(|s| !b.alphabet().contains(s))
            .or_else(|| sb.iter().find(|s| !a.alphabet().contains(s)))
            .map_or_else(|| "ranks differ".to_string(), |s| s.name().to_string());
        return Err(PtaError::AlphabetMismatch(diff));
    }

    let mut out: Pta<W> = Pta::empty(a.alphabet().clone(), Vec::new(), Vec::new());
    let mut id: HashMap<(StateId, StateId), StateId> = HashMap::new();
    let mut queue = VecDeque::new();
    let mut intern = |pair: (StateId, StateId),
                      out: &mut Pta<W>,
                      queue: &mut VecDeque<(StateId, StateId)>|
     -> Result<StateId, PtaError> {
        if let Some(&q) = id.get(&pair) {
            return Ok(q);
        }
        if id.len() >= budget {
            return Err(PtaError::StateBudgetExceeded(budget));
        }
        let q = out.add_state(format!("({},{})", a.label(pair.0), b.label(pair.1)), W::zero());
        id.insert(pair, q);
        queue.push_back(pair);
        Ok(q)
    };

    for (qa, wa) in a.initial().iter().enumerate() {
        for (qb, wb) in b.initial().iter().enumerate() {
            if wa.is_zero() || wb.is_zero() {
                continue;
            }
            let q = intern((qa, qb), &mut out, &mut queue)?;
            out.initial[q] = wa.mul(wb);
        }
    }

    // Symbol ids agree because the alphabets are equal.
    while let Some((qa, qb)) = queue.pop_front() {
        let mut transitions = Vec::new();
        for ta in a.transitions_from(qa) {
            for (cb, pb) in b.row(qb, ta.symbol) {
                transitions.push((ta.symbol, ta.children.clone(), cb.clone(), ta.p.mul(pb)));
            }
        }
        let finals: Vec<usize> = a.finals_of(qa).filter(|&f| b.is_final(qb, f)).collect();
        let q = intern((qa, qb), &mut out, &mut queue)?;
        for f in finals {
            out.add_final(q, f);
        }
        for (f, ca, cb, p) in transitions {
            let mut children = Vec::with_capacity(ca.len());
            for (x, y) in ca.into_iter().zip(cb) {
                children.push(intern((x, y), &mut out, &mut queue)?);
            }
            out.add_transition(q, f, children, p);
        }
    }
    out.finish();
    Ok(out)
}
