//! Proposals and their log-density terms.
//!
//! Every proposal reports `log_fwd` (log density of drawing it, including
//! auxiliaries), `log_rev` (the same for the reverse move from the proposed
//! state), and the log-Jacobian of the parameter map, so that
//! `log α̃ = Δ log π + log_rev − log_fwd + log_det`.

use num_rational::BigRational;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::jump::{self, Aux, ParamJump};
use super::{ChainState, InferenceError, Likelihood, McmcConfig};
use crate::expr::{ParamLayout, SymbolicExpression};
use crate::prte::{sample_tree, PriorSpec};
use crate::pta::{compile_with, generation_inside, inside_outside, pta_eval, sample_from_state, Pta, PtaError};
use crate::tree::{Address, Tree};

/// Everything a move needs besides the current state.
pub struct MoveContext<'a> {
    /// The prior with the chain's depth budget applied.
    pub prior: PriorSpec,
    pub pta: Pta<f64>,
    pub likelihood: &'a dyn Likelihood,
    pub config: McmcConfig,
    /// `depth_mass[k][q]`: probability that growing from `q` stays within
    /// `k` levels.
    depth_mass: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MoveKind {
    Global,
    /// Regrow of the subtree at this address.
    Local(Address),
    Param,
    Sigma,
}

impl MoveKind {
    pub fn name(&self) -> &'static str {
        match self {
            MoveKind::Global => "global",
            MoveKind::Local(_) => "local",
            MoveKind::Param => "param",
            MoveKind::Sigma => "sigma",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub kind: MoveKind,
    pub state: ChainState,
    pub log_fwd: f64,
    pub log_rev: f64,
    pub log_det: f64,
    /// Auxiliaries the reverse move would consume.
    pub u_star: Vec<f64>,
    pub d_star: Vec<BigRational>,
}

impl Proposal {
    /// `log α̃`; `−∞` whenever the proposed state has zero density.
    pub fn log_accept_ratio(&self, current: &ChainState) -> f64 {
        let new = self.state.log_post();
        if new == f64::NEG_INFINITY || self.log_rev == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let r = new - current.log_post() + self.log_rev - self.log_fwd + self.log_det;
        if r.is_nan() {
            f64::NEG_INFINITY
        } else {
            r
        }
    }
}

impl<'a> MoveContext<'a> {
    pub fn new(
        prior: &PriorSpec,
        likelihood: &'a dyn Likelihood,
        config: &McmcConfig,
    ) -> Result<Self, InferenceError> {
        config.validate()?;
        let mut prior = prior.clone();
        if let Some(d) = config.max_depth {
            prior.max_depth = d;
        }
        prior.validate()?;
        let pta = compile_with::<BigRational>(&prior, config.state_budget)?.to_f64();
        let depth_mass = depth_mass(&pta, prior.max_depth);
        Ok(MoveContext {
            prior,
            pta,
            likelihood,
            config: config.clone(),
            depth_mass,
        })
    }

    pub fn max_depth(&self) -> usize {
        self.prior.max_depth
    }

    /// Log prior tree series, zero outside the depth budget.
    pub fn log_prior_tree(&self, tree: &Tree) -> Result<f64, InferenceError> {
        if tree.depth() > self.prior.max_depth {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(pta_eval(&self.pta, tree)?.ln())
    }

    fn log_prior_params(&self, layout: &ParamLayout, free: &[f64], n_disc: usize, sigma: f64) -> f64 {
        let mut lp = 0.0;
        for (g, v) in layout.groups.iter().zip(free) {
            lp += self
                .prior
                .param_prior(&g.marker)
                .map_or(f64::NEG_INFINITY, |p| p.log_pdf(*v));
        }
        if n_disc > 0 {
            lp -= n_disc as f64 * (self.prior.disc_support.len() as f64).ln();
        }
        let lambda = self.config.lambda_sigma;
        lp + if sigma > 0.0 {
            lambda.ln() - lambda * sigma
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Scores an expression from scratch.
    pub fn state(&self, expr: SymbolicExpression, sigma: f64) -> Result<ChainState, InferenceError> {
        let layout = ParamLayout::new(expr.tree(), &self.prior.ties);
        expr.check_ties(&layout)?;
        let free = layout.collapse(expr.theta_c());
        let log_prior_tree = self.log_prior_tree(expr.tree())?;
        self.finish(expr, layout, free, sigma, log_prior_tree)
    }

    fn build(
        &self,
        tree: Tree,
        layout: ParamLayout,
        free: Vec<f64>,
        theta_d: Vec<BigRational>,
        sigma: f64,
        log_prior_tree: f64,
    ) -> Result<ChainState, InferenceError> {
        let expr = SymbolicExpression::from_free(tree, &layout, &free, theta_d)?;
        self.finish(expr, layout, free, sigma, log_prior_tree)
    }

    fn finish(
        &self,
        expr: SymbolicExpression,
        layout: ParamLayout,
        free: Vec<f64>,
        sigma: f64,
        log_prior_tree: f64,
    ) -> Result<ChainState, InferenceError> {
        let log_prior_params = self.log_prior_params(&layout, &free, expr.theta_d().len(), sigma);
        let log_lik = if log_prior_params == f64::NEG_INFINITY || log_prior_tree == f64::NEG_INFINITY {
            // Never accepted; skip the evaluation.
            f64::NEG_INFINITY
        } else {
            self.likelihood.log_likelihood(&expr, sigma)
        };
        Ok(ChainState {
            expr,
            layout,
            free,
            sigma,
            log_lik,
            log_prior_tree,
            log_prior_params,
        })
    }

    /// Fails if the cached terms of `s` drifted from recomputation.
    pub fn check_state(&self, s: &ChainState) -> Result<(), InferenceError> {
        let fresh = self.state(s.expr.clone(), s.sigma)?;
        for (what, cached, new) in [
            ("log_lik", s.log_lik, fresh.log_lik),
            ("log_prior_tree", s.log_prior_tree, fresh.log_prior_tree),
            ("log_prior_params", s.log_prior_params, fresh.log_prior_params),
        ] {
            let same = cached == new || (cached - new).abs() <= 1e-9 * (1.0 + new.abs());
            if !same {
                return Err(InferenceError::CacheIncoherent {
                    what,
                    cached,
                    fresh: new,
                });
            }
        }
        Ok(())
    }

    /// Carries `from`'s parameters onto `to_tree` and scores the result.
    fn jump(
        &self,
        from: &ChainState,
        to_tree: Tree,
        pinned: Option<&Address>,
        log_prior_tree: f64,
        aux: &mut Aux<'_>,
    ) -> Result<(ChainState, ParamJump), InferenceError> {
        let to_layout = ParamLayout::new(&to_tree, &self.prior.ties);
        let plan = jump::plan(&from.layout, &to_layout, pinned);
        let pj = jump::apply(
            &plan,
            &self.prior,
            self.config.jump_map,
            &from.free,
            from.expr.theta_d(),
            to_layout.n_free(),
            to_layout.n_disc(),
            aux,
        )?;
        let state = self.build(
            to_tree,
            to_layout,
            pj.free.clone(),
            pj.theta_d.clone(),
            from.sigma,
            log_prior_tree,
        )?;
        Ok((state, pj))
    }

    /// Boltzmann-relaxed hole-state distribution for a regrow at `r`,
    /// restricted to states that can grow within the remaining depth.
    pub fn hole_distribution(&self, tree: &Tree, r: &Address) -> Result<Vec<f64>, InferenceError> {
        let io = inside_outside(&self.pta, tree)?;
        let idx = io
            .index_of(r)
            .ok_or_else(|| InferenceError::SizeMismatch(format!("no node at {r}")))?;
        let levels = self.levels_below(r);
        Ok(boltzmann(&io.outside[idx], &self.depth_mass[levels], self.config.tau)?)
    }

    fn levels_below(&self, r: &Address) -> usize {
        self.prior.max_depth.saturating_sub(r.len())
    }

    /// `log q` of regrowing `subtree` at `r` in `source` (whose size sets the
    /// site-selection probability), given the hole distribution `p_b`.
    fn local_log_q(&self, source_size: usize, r: &Address, p_b: &[f64], subtree: &Tree) -> Result<f64, InferenceError> {
        let gen = generation_inside(&self.pta, subtree)?;
        let z = &self.depth_mass[self.levels_below(r)];
        let mut s = 0.0;
        for q in 0..p_b.len() {
            if p_b[q] > 0.0 && gen[q] > 0.0 {
                s += p_b[q] * gen[q] / z[q];
            }
        }
        Ok(s.ln() - (source_size as f64).ln())
    }

    /// The reverse of `prop` from its proposed state back to `current`,
    /// scored with the auxiliaries `prop` recorded. Used to witness detailed
    /// balance.
    pub fn reverse(&self, current: &ChainState, prop: &Proposal) -> Result<Proposal, InferenceError> {
        let mut aux = Aux::replay(prop.u_star.clone(), prop.d_star.clone());
        let back = current.tree().clone();
        let (pinned, log_fwd, log_rev) = match &prop.kind {
            MoveKind::Global => (None, current.log_prior_tree, prop.state.log_prior_tree),
            MoveKind::Local(r) => {
                let p_b = self.hole_distribution(prop.state.tree(), r)?;
                let old_sub = back.subtree(r).expect("site exists").clone();
                let new_sub = prop.state.tree().subtree(r).expect("site exists").clone();
                let f = self.local_log_q(prop.state.tree().size(), r, &p_b, &old_sub)?;
                let b = self.local_log_q(back.size(), r, &p_b, &new_sub)?;
                (Some(r.clone()), f, b)
            }
            MoveKind::Param | MoveKind::Sigma => {
                return Ok(Proposal {
                    kind: prop.kind.clone(),
                    state: current.clone(),
                    log_fwd: prop.log_rev,
                    log_rev: prop.log_fwd,
                    log_det: -prop.log_det,
                    u_star: Vec::new(),
                    d_star: Vec::new(),
                })
            }
        };
        let (state, pj) = self.jump(&prop.state, back, pinned.as_ref(), current.log_prior_tree, &mut aux)?;
        if !aux.is_spent() {
            return Err(InferenceError::SizeMismatch("reverse move left auxiliaries unused".into()));
        }
        Ok(Proposal {
            kind: prop.kind.clone(),
            state,
            log_fwd: log_fwd + pj.log_aux_fwd,
            log_rev: log_rev + pj.log_aux_rev,
            log_det: pj.log_det,
            u_star: pj.u_star,
            d_star: pj.d_star,
        })
    }
}

fn depth_mass(pta: &Pta<f64>, max_depth: usize) -> Vec<Vec<f64>> {
    let nq = pta.n_states();
    let mut z = vec![vec![0.0; nq]];
    for _ in 1..=max_depth {
        let prev = z.last().expect("non-empty");
        let mut cur = vec![0.0; nq];
        for (q, c) in cur.iter_mut().enumerate() {
            let mass = pta.out_mass(q);
            if mass <= 0.0 {
                continue;
            }
            let mut s = pta.finals_of(q).count() as f64;
            for t in pta.transitions_from(q) {
                s += t.p * t.children.iter().map(|&k| prev[k]).product::<f64>();
            }
            *c = s / mass;
        }
        z.push(cur);
    }
    z
}

/// `p_B(q) ∝ exp(log μ(q) / τ)` over states with `μ(q) > 0` and
/// `reachable(q) > 0`.
pub(crate) fn boltzmann(mu: &[f64], reachable: &[f64], tau: f64) -> Result<Vec<f64>, PtaError> {
    let logs: Vec<Option<f64>> = mu
        .iter()
        .zip(reachable)
        .map(|(&m, &z)| (m > 0.0 && z > 0.0).then(|| m.ln() / tau))
        .collect();
    let max = logs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(PtaError::ImpossibleContext);
    }
    let w: Vec<f64> = logs.iter().map(|l| l.map_or(0.0, |l| (l - max).exp())).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

fn pick<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let mut u = rng.random::<f64>();
    let mut last = 0;
    for (i, &w) in p.iter().enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return i;
            }
            u -= w;
        }
    }
    last
}

/// Redraws the whole tree from the prior and carries the parameters over.
/// The tree terms of the prior and of the proposal cancel.
pub fn propose_global(
    ctx: &MoveContext<'_>,
    state: &ChainState,
    rng: &mut dyn RngCore,
) -> Result<Proposal, InferenceError> {
    let tree = sample_tree(&ctx.prior, rng)?;
    let lpt = ctx.log_prior_tree(&tree)?;
    let (new, pj) = ctx.jump(state, tree, None, lpt, &mut Aux::Draw(rng))?;
    Ok(Proposal {
        kind: MoveKind::Global,
        state: new,
        log_fwd: lpt + pj.log_aux_fwd,
        log_rev: state.log_prior_tree + pj.log_aux_rev,
        log_det: pj.log_det,
        u_star: pj.u_star,
        d_star: pj.d_star,
    })
}

/// Picks a node uniformly, draws a state for it from the relaxed context
/// marginal and regrows its subtree from that state. The drawn state is
/// summed out of both proposal densities; parameters outside the subtree
/// are kept.
pub fn propose_local(
    ctx: &MoveContext<'_>,
    state: &ChainState,
    rng: &mut dyn RngCore,
) -> Result<Proposal, InferenceError> {
    let tree = state.tree();
    let nodes = tree.addresses();
    let r = nodes[rng.random_range(0..nodes.len())].clone();
    let p_b = ctx.hole_distribution(tree, &r)?;
    let q = pick(&p_b, rng);
    let (sub, _) = sample_from_state(&ctx.pta, q, rng, ctx.levels_below(&r))?;
    let old_sub = tree.subtree(&r).expect("address from this tree").clone();
    let new_tree = tree.replace_subtree(&r, sub.clone()).expect("address from this tree");
    let log_fwd = ctx.local_log_q(tree.size(), &r, &p_b, &sub)?;
    let log_rev = ctx.local_log_q(new_tree.size(), &r, &p_b, &old_sub)?;
    let lpt = ctx.log_prior_tree(&new_tree)?;
    let (new, pj) = ctx.jump(state, new_tree, Some(&r), lpt, &mut Aux::Draw(rng))?;
    Ok(Proposal {
        kind: MoveKind::Local(r),
        state: new,
        log_fwd: log_fwd + pj.log_aux_fwd,
        log_rev: log_rev + pj.log_aux_rev,
        log_det: pj.log_det,
        u_star: pj.u_star,
        d_star: pj.d_star,
    })
}

/// Joint Gaussian random walk on all parameter groups: on `log θ` for
/// positive parameters, on `θ` (scaled by the prior sd) otherwise.
pub fn propose_params(
    ctx: &MoveContext<'_>,
    state: &ChainState,
    step: f64,
    rng: &mut dyn RngCore,
) -> Result<Proposal, InferenceError> {
    let mut free = state.free.clone();
    let (mut log_fwd, mut log_rev) = (0.0, 0.0);
    for (g, v) in state.layout.groups.iter().zip(free.iter_mut()) {
        let z: f64 = StandardNormal.sample(rng);
        match ctx.prior.param_prior(&g.marker) {
            Some(p) if p.is_positive() => {
                let old = *v;
                *v = old * (step * z).exp();
                // Proposal density in θ carries 1/θ'.
                log_fwd -= v.ln();
                log_rev -= old.ln();
            }
            Some(crate::prte::ParamPrior::Normal { sd, .. }) => *v += step * sd * z,
            _ => *v += step * z,
        }
    }
    let new = ctx.build(
        state.tree().clone(),
        state.layout.clone(),
        free,
        state.expr.theta_d().to_vec(),
        state.sigma,
        state.log_prior_tree,
    )?;
    Ok(Proposal {
        kind: MoveKind::Param,
        state: new,
        log_fwd,
        log_rev,
        log_det: 0.0,
        u_star: Vec::new(),
        d_star: Vec::new(),
    })
}

/// Gaussian random walk on `log σ`.
pub fn propose_sigma(
    ctx: &MoveContext<'_>,
    state: &ChainState,
    step: f64,
    rng: &mut dyn RngCore,
) -> Result<Proposal, InferenceError> {
    let z: f64 = StandardNormal.sample(rng);
    let sigma = state.sigma * (step * z).exp();
    let new = ctx.finish(
        state.expr.clone(),
        state.layout.clone(),
        state.free.clone(),
        sigma,
        state.log_prior_tree,
    )?;
    Ok(Proposal {
        kind: MoveKind::Sigma,
        state: new,
        log_fwd: -sigma.ln(),
        log_rev: -state.sigma.ln(),
        log_det: 0.0,
        u_star: Vec::new(),
        d_star: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{FlatLikelihood, JumpMap};
    use crate::prte::sample_expression;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SUM: &str = "@param k# exp 1
@param b# normal 0 2
iter $x { choice{0.3: +(*(k#, x), $x), 0.5: *(k#, x), 0.2: b#} }";

    fn ctx_for<'a>(prior: &PriorSpec, lik: &'a dyn Likelihood, map: JumpMap) -> MoveContext<'a> {
        let cfg = McmcConfig {
            jump_map: map,
            ..McmcConfig::default()
        };
        MoveContext::new(prior, lik, &cfg).unwrap()
    }

    #[test]
    fn boltzmann_limits() {
        let mu = [0.5, 0.3, 0.0, 0.2];
        let z = [1.0; 4];
        let p1 = boltzmann(&mu, &z, 1.0).unwrap();
        for (a, b) in p1.iter().zip(&mu) {
            assert!((a - b).abs() < 1e-12);
        }
        let hot = boltzmann(&mu, &z, 1e9).unwrap();
        for (i, p) in hot.iter().enumerate() {
            if i == 2 {
                assert_eq!(*p, 0.0);
            } else {
                assert!((p - 1.0 / 3.0).abs() < 1e-6);
            }
        }
        assert!(boltzmann(&[0.0, 0.0], &[1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn depth_mass_is_monotone_and_bounded() {
        let prior = PriorSpec::parse(SUM).unwrap();
        let lik = FlatLikelihood;
        let ctx = ctx_for(&prior, &lik, JumpMap::PriorBirth);
        for k in 1..ctx.depth_mass.len() {
            for q in 0..ctx.pta.n_states() {
                assert!(ctx.depth_mass[k][q] >= ctx.depth_mass[k - 1][q] - 1e-15);
                assert!(ctx.depth_mass[k][q] <= 1.0 + 1e-12);
            }
        }
    }

    fn check_balance(map: JumpMap, seed: u64) {
        let prior = PriorSpec::parse(SUM).unwrap();
        let lik = |e: &SymbolicExpression, s: f64| -> f64 {
            // Any smooth function of the parameters will do.
            -e.theta_c().iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>() - s
        };
        let ctx = ctx_for(&prior, &lik, map);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut checked = 0;
        for _ in 0..300 {
            let e = sample_expression(&ctx.prior, &mut rng).unwrap();
            let cur = ctx.state(e, 0.7).unwrap();
            let prop = if rng.random::<bool>() {
                propose_global(&ctx, &cur, &mut rng).unwrap()
            } else {
                propose_local(&ctx, &cur, &mut rng).unwrap()
            };
            let fwd = prop.log_accept_ratio(&cur);
            if !fwd.is_finite() {
                continue;
            }
            let rev = ctx.reverse(&cur, &prop).unwrap();
            for (a, b) in rev.state.free.iter().zip(&cur.free) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{map:?}: {a} vs {b}");
            }
            let back = rev.log_accept_ratio(&prop.state);
            assert!((fwd + back).abs() < 1e-6, "{map:?} {:?}: {fwd} + {back}", prop.kind);
            checked += 1;
        }
        assert!(checked > 50, "only {checked} finite proposals");
    }

    #[test]
    fn structure_moves_are_reversible_prior_birth() {
        check_balance(JumpMap::PriorBirth, 1);
    }

    #[test]
    fn structure_moves_are_reversible_averaging() {
        check_balance(JumpMap::Averaging, 2);
    }

    #[test]
    fn zero_step_keeps_the_state() {
        let prior = PriorSpec::parse(SUM).unwrap();
        let lik = FlatLikelihood;
        let ctx = ctx_for(&prior, &lik, JumpMap::PriorBirth);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = sample_expression(&ctx.prior, &mut rng).unwrap();
        let cur = ctx.state(e, 0.7).unwrap();
        let p = propose_params(&ctx, &cur, 0.0, &mut rng).unwrap();
        assert_eq!(p.state, cur);
        assert_eq!(p.log_accept_ratio(&cur), 0.0);
        let s = propose_sigma(&ctx, &cur, 0.0, &mut rng).unwrap();
        assert_eq!(s.state.sigma, cur.sigma);
    }

    #[test]
    fn impossible_likelihood_is_never_accepted() {
        let prior = PriorSpec::parse(SUM).unwrap();
        let lik = |_: &SymbolicExpression, s: f64| if s > 0.7 { f64::NEG_INFINITY } else { 0.0 };
        let ctx = ctx_for(&prior, &lik, JumpMap::PriorBirth);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = sample_expression(&ctx.prior, &mut rng).unwrap();
        let cur = ctx.state(e, 0.7).unwrap();
        for _ in 0..200 {
            let p = propose_sigma(&ctx, &cur, 0.5, &mut rng).unwrap();
            if p.state.sigma > 0.7 {
                assert_eq!(p.log_accept_ratio(&cur), f64::NEG_INFINITY);
            }
        }
    }
}
