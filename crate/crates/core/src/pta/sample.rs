//! Generative use of an automaton: growing a tree top-down from a state.
//!
//! At state `q` the generator picks one of the accepted leaves (weight one
//! each) or one transition (its weight), normalised by `q`'s outgoing mass.
//! For compiled priors every state has outgoing mass one, so this is just
//! the prior restricted to trees rooted at `q`.

use rand::Rng;

use super::{Pta, PtaError, StateId};
use crate::tree::Tree;
use crate::weight::Weight;

/// Consecutive over-depth draws tolerated before giving up.
pub const MAX_REGROW_ATTEMPTS: usize = 1000;

struct Abort;

fn grow<W: Weight, R: Rng + ?Sized>(
    pta: &Pta<W>,
    q: StateId,
    rng: &mut R,
    depth: usize,
    max_depth: usize,
) -> Result<Tree, Abort> {
    if depth > max_depth {
        return Err(Abort);
    }
    let mass = pta.out_mass(q);
    if !(mass > 0.0) {
        return Err(Abort);
    }
    let mut u = rng.random::<f64>() * mass;
    let mut last_final = None;
    for a in pta.finals_of(q) {
        last_final = Some(a);
        if u < 1.0 {
            return Ok(Tree::new_unchecked(pta.symbol(a).clone(), Vec::new()));
        }
        u -= 1.0;
    }
    let mut last = None;
    for t in pta.transitions_from(q) {
        let p = t.p.to_f64();
        if u < p {
            return grow_children(pta, t.symbol, &t.children, rng, depth, max_depth);
        }
        u -= p;
        last = Some(t);
    }
    // Rounding left `u` just past the end: take the last option.
    match (last, last_final) {
        (Some(t), _) => grow_children(pta, t.symbol, &t.children, rng, depth, max_depth),
        (None, Some(a)) => Ok(Tree::new_unchecked(pta.symbol(a).clone(), Vec::new())),
        (None, None) => Err(Abort),
    }
}

fn grow_children<W: Weight, R: Rng + ?Sized>(
    pta: &Pta<W>,
    f: usize,
    children: &[StateId],
    rng: &mut R,
    depth: usize,
    max_depth: usize,
) -> Result<Tree, Abort> {
    let mut out = Vec::with_capacity(children.len());
    for &c in children {
        out.push(grow(pta, c, rng, depth + 1, max_depth)?);
    }
    Ok(Tree::new_unchecked(pta.symbol(f).clone(), out))
}

/// Grows a tree from `start` with at most `max_depth` levels, redrawing
/// whole trees that exceed it. Returns the tree and its generation
/// probability from `start` (summed over all runs that produce it, and not
/// renormalised for the depth truncation).
pub fn sample_from_state<W: Weight, R: Rng + ?Sized>(
    pta: &Pta<W>,
    start: StateId,
    rng: &mut R,
    max_depth: usize,
) -> Result<(Tree, f64), PtaError> {
    if start >= pta.n_states() {
        return Err(PtaError::UnknownState(start));
    }
    for _ in 0..MAX_REGROW_ATTEMPTS {
        if let Ok(t) = grow(pta, start, rng, 1, max_depth) {
            let p = generation_inside(pta, &t)?[start];
            return Ok((t, p));
        }
    }
    Err(PtaError::DepthBudgetExhausted {
        attempts: MAX_REGROW_ATTEMPTS,
        max_depth,
    })
}

/// Per state, the probability that the generator started there produces
/// `tree`.
pub fn generation_inside<W: Weight>(pta: &Pta<W>, tree: &Tree) -> Result<Vec<f64>, PtaError> {
    let nq = pta.n_states();
    let f = pta.symbol_id(tree.symbol())?;
    if tree.is_leaf() {
        return Ok((0..nq)
            .map(|q| {
                if pta.is_final(q, f) {
                    1.0 / pta.out_mass(q)
                } else {
                    0.0
                }
            })
            .collect());
    }
    let kids = tree
        .children()
        .iter()
        .map(|c| generation_inside(pta, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((0..nq)
        .map(|q| {
            let row = pta.row(q, f);
            if row.is_empty() {
                return 0.0;
            }
            let mut acc = 0.0;
            for (tuple, p) in row {
                let mut v = p.to_f64();
                for (k, &s) in kids.iter().zip(tuple) {
                    v *= k[s];
                }
                acc += v;
            }
            acc / pta.out_mass(q)
        })
        .collect())
}
