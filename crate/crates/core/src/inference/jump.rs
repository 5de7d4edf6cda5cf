//! Dimension matching for structure moves.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::{LN_2, PI};

use num_rational::BigRational;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::{InferenceError, JumpMap};
use crate::expr::ParamLayout;
use crate::prte::{ParamPrior, PriorSpec};
use crate::tree::{Address, RankedSymbol};

/// Grows `theta` (size n) to size `n_star` with auxiliaries `u` (size
/// `n_star`, read as `u_θ` of size n then `u_n`):
/// `θ* = ((θ + u_θ)/2, u_n)`, `u* = (θ − u_θ)/2`, `log|det| = −n log 2`.
pub fn expand_params(
    theta: &[f64],
    u: &[f64],
    n_star: usize,
) -> Result<(Vec<f64>, Vec<f64>, f64), InferenceError> {
    let n = theta.len();
    if n_star < n || u.len() != n_star {
        return Err(InferenceError::SizeMismatch(format!(
            "expand from {n} to {n_star} needs {n_star} auxiliaries and n* >= n, got {}",
            u.len()
        )));
    }
    let (u_theta, u_new) = u.split_at(n);
    let mut out: Vec<f64> = theta.iter().zip(u_theta).map(|(t, v)| (t + v) / 2.0).collect();
    out.extend_from_slice(u_new);
    let u_star = theta.iter().zip(u_theta).map(|(t, v)| (t - v) / 2.0).collect();
    Ok((out, u_star, -(n as f64) * LN_2))
}

/// Shrinks `theta` (size n, read as `θ⁰` of size `n_star` then `θ^d`) with
/// auxiliaries `u` (size `n_star`): `θ* = θ⁰ + u`, `u* = (θ⁰ − u, θ^d)`,
/// `log|det| = n* log 2`. Inverts [`expand_params`] when fed its `u*`.
pub fn shrink_params(
    theta: &[f64],
    u: &[f64],
    n_star: usize,
) -> Result<(Vec<f64>, Vec<f64>, f64), InferenceError> {
    let n = theta.len();
    if n_star > n || u.len() != n_star {
        return Err(InferenceError::SizeMismatch(format!(
            "shrink from {n} to {n_star} needs {n_star} auxiliaries and n* <= n, got {}",
            u.len()
        )));
    }
    let (keep, dropped) = theta.split_at(n_star);
    let out = keep.iter().zip(u).map(|(t, v)| t + v).collect();
    let mut u_star: Vec<f64> = keep.iter().zip(u).map(|(t, v)| t - v).collect();
    u_star.extend_from_slice(dropped);
    Ok((out, u_star, n_star as f64 * LN_2))
}

pub(crate) fn log_std_normal(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

/// Source of auxiliary variables: fresh draws, or a recorded sequence when
/// replaying the reverse of a move.
pub enum Aux<'r> {
    Draw(&'r mut dyn RngCore),
    Replay {
        c: VecDeque<f64>,
        d: VecDeque<BigRational>,
    },
}

impl Aux<'_> {
    pub fn replay(c: Vec<f64>, d: Vec<BigRational>) -> Aux<'static> {
        Aux::Replay {
            c: c.into(),
            d: d.into(),
        }
    }

    fn exhausted() -> InferenceError {
        InferenceError::SizeMismatch("replayed auxiliaries ran out".into())
    }

    fn normal(&mut self) -> Result<f64, InferenceError> {
        match self {
            Aux::Draw(rng) => Ok(StandardNormal.sample(rng)),
            Aux::Replay { c, .. } => c.pop_front().ok_or_else(Self::exhausted),
        }
    }

    fn from_prior(&mut self, p: &ParamPrior) -> Result<f64, InferenceError> {
        match self {
            Aux::Draw(rng) => Ok(p.sample(rng)),
            Aux::Replay { c, .. } => c.pop_front().ok_or_else(Self::exhausted),
        }
    }

    fn disc(&mut self, support: &[BigRational]) -> Result<BigRational, InferenceError> {
        match self {
            Aux::Draw(rng) => {
                if support.is_empty() {
                    return Err(InferenceError::Prior(crate::prte::PrteError::MissingDiscreteSupport));
                }
                Ok(support[rng.random_range(0..support.len())].clone())
            }
            Aux::Replay { d, .. } => d.pop_front().ok_or_else(Self::exhausted),
        }
    }

    /// True when a replay consumed exactly what it was given.
    pub(crate) fn is_spent(&self) -> bool {
        match self {
            Aux::Draw(_) => true,
            Aux::Replay { c, d } => c.is_empty() && d.is_empty(),
        }
    }
}

/// Parameter groups of one marker that change together.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub marker: RankedSymbol,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
}

/// How the parameters of one tree map onto those of another.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct Plan {
    /// Groups carried over unchanged, `(from, to)`.
    pub identity: Vec<(usize, usize)>,
    pub blocks: Vec<Block>,
    pub disc_identity: Vec<(usize, usize)>,
    pub disc_from: Vec<usize>,
    pub disc_to: Vec<usize>,
}

/// With `pinned = Some(r)`, groups having an occurrence outside the subtree
/// at `r` keep their value (those occurrences sit at the same addresses in
/// both trees); everything else is matched per marker in pre-order.
pub(crate) fn plan(from: &ParamLayout, to: &ParamLayout, pinned: Option<&Address>) -> Plan {
    let outside = |a: &Address| pinned.is_some_and(|r| !r.is_prefix_of(a));
    let to_index: HashMap<&Address, usize> = to
        .const_positions
        .iter()
        .enumerate()
        .map(|(i, (a, _))| (a, i))
        .collect();

    let mut out = Plan::default();
    let mut to_taken = vec![false; to.n_free()];
    let mut from_inner: BTreeMap<RankedSymbol, Vec<usize>> = BTreeMap::new();
    for (g, group) in from.groups.iter().enumerate() {
        let anchor = group
            .members
            .iter()
            .map(|&m| &from.const_positions[m].0)
            .find(|a| outside(a));
        match anchor.and_then(|a| to_index.get(a)) {
            Some(&i) => {
                let tg = to.group_of[i];
                to_taken[tg] = true;
                out.identity.push((g, tg));
            }
            None => from_inner.entry(group.marker.clone()).or_default().push(g),
        }
    }
    let mut to_inner: BTreeMap<RankedSymbol, Vec<usize>> = BTreeMap::new();
    for (g, group) in to.groups.iter().enumerate() {
        if !to_taken[g] {
            to_inner.entry(group.marker.clone()).or_default().push(g);
        }
    }
    let mut markers: Vec<&RankedSymbol> = from_inner.keys().chain(to_inner.keys()).collect();
    markers.sort();
    markers.dedup();
    for m in markers {
        out.blocks.push(Block {
            marker: m.clone(),
            from: from_inner.get(m).cloned().unwrap_or_default(),
            to: to_inner.get(m).cloned().unwrap_or_default(),
        });
    }

    let to_disc: HashMap<&Address, usize> =
        to.disc_positions.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let mut disc_taken = vec![false; to.n_disc()];
    for (i, a) in from.disc_positions.iter().enumerate() {
        match to_disc.get(a).filter(|_| outside(a)) {
            Some(&j) => {
                disc_taken[j] = true;
                out.disc_identity.push((i, j));
            }
            None => out.disc_from.push(i),
        }
    }
    out.disc_to = (0..to.n_disc()).filter(|&j| !disc_taken[j]).collect();
    out
}

/// Result of carrying parameters across a structure move.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ParamJump {
    pub free: Vec<f64>,
    pub theta_d: Vec<BigRational>,
    /// Log density of the auxiliaries drawn going forward.
    pub log_aux_fwd: f64,
    /// Log density of the auxiliaries the reverse move would draw.
    pub log_aux_rev: f64,
    pub log_det: f64,
    /// The reverse move's auxiliaries, in the order it consumes them.
    pub u_star: Vec<f64>,
    pub d_star: Vec<BigRational>,
}

pub(crate) fn apply(
    plan: &Plan,
    prior: &PriorSpec,
    map: JumpMap,
    from_free: &[f64],
    from_disc: &[BigRational],
    n_free_to: usize,
    n_disc_to: usize,
    aux: &mut Aux<'_>,
) -> Result<ParamJump, InferenceError> {
    let mut free = vec![f64::NAN; n_free_to];
    let mut j = ParamJump {
        free: Vec::new(),
        theta_d: Vec::new(),
        log_aux_fwd: 0.0,
        log_aux_rev: 0.0,
        log_det: 0.0,
        u_star: Vec::new(),
        d_star: Vec::new(),
    };
    for &(f, t) in &plan.identity {
        free[t] = from_free[f];
    }
    for b in &plan.blocks {
        let theta: Vec<f64> = b.from.iter().map(|&g| from_free[g]).collect();
        let (n, n_star) = (theta.len(), b.to.len());
        let new: Vec<f64> = match map {
            _ if n == n_star => theta,
            JumpMap::Averaging => {
                let u = (0..n_star).map(|_| aux.normal()).collect::<Result<Vec<_>, _>>()?;
                let (out, u_star, ld) = if n_star > n {
                    expand_params(&theta, &u, n_star)?
                } else {
                    shrink_params(&theta, &u, n_star)?
                };
                j.log_aux_fwd += u.iter().map(|&x| log_std_normal(x)).sum::<f64>();
                j.log_aux_rev += u_star.iter().map(|&x| log_std_normal(x)).sum::<f64>();
                j.log_det += ld;
                j.u_star.extend(u_star);
                out
            }
            JumpMap::PriorBirth => {
                let p = prior
                    .param_prior(&b.marker)
                    .ok_or_else(|| crate::prte::PrteError::MissingParamPrior(b.marker.name().into()))?;
                if n_star > n {
                    let mut out = theta;
                    for _ in n..n_star {
                        let v = aux.from_prior(p)?;
                        j.log_aux_fwd += p.log_pdf(v);
                        out.push(v);
                    }
                    out
                } else {
                    for &d in &theta[n_star..] {
                        j.log_aux_rev += p.log_pdf(d);
                        j.u_star.push(d);
                    }
                    theta[..n_star].to_vec()
                }
            }
        };
        for (&g, v) in b.to.iter().zip(new) {
            free[g] = v;
        }
    }
    j.free = free;

    let mut theta_d: Vec<Option<BigRational>> = vec![None; n_disc_to];
    for &(f, t) in &plan.disc_identity {
        theta_d[t] = Some(from_disc[f].clone());
    }
    let log_unif = -(prior.disc_support.len().max(1) as f64).ln();
    for (k, &t) in plan.disc_to.iter().enumerate() {
        theta_d[t] = Some(match plan.disc_from.get(k) {
            Some(&f) => from_disc[f].clone(),
            None => {
                j.log_aux_fwd += log_unif;
                aux.disc(&prior.disc_support)?
            }
        });
    }
    for &f in plan.disc_from.iter().skip(plan.disc_to.len()) {
        j.log_aux_rev += log_unif;
        j.d_star.push(from_disc[f].clone());
    }
    j.theta_d = theta_d.into_iter().map(|v| v.expect("every slot filled")).collect();
    Ok(j)
}
