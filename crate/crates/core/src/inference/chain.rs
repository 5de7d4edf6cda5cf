use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::moves::{propose_global, propose_local, propose_params, propose_sigma, MoveContext, Proposal};
use super::{
    ChainState, Dataset, Draw, GaussianLikelihood, InferenceError, Likelihood, McmcConfig, MoveStats,
    Posterior,
};
use crate::prte::{sample_expression, PriorSpec};

/// Prior draws tried before giving up on finding a finite starting point.
const MAX_INIT_ATTEMPTS: usize = 1000;

/// An error together with the draws recorded before it happened.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFailure {
    pub error: InferenceError,
    pub partial: Option<Posterior>,
}

impl From<InferenceError> for ChainFailure {
    fn from(error: InferenceError) -> Self {
        ChainFailure { error, partial: None }
    }
}

impl std::fmt::Display for ChainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for ChainFailure {}

/// Independent seed for chain `index` of a run seeded with `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index.wrapping_add(1));
    rng.next_u64()
}

/// Fits `data` with Gaussian noise.
pub fn run_chain(prior: &PriorSpec, data: &Dataset, config: &McmcConfig) -> Result<Posterior, ChainFailure> {
    data.check_variables(prior)?;
    let lik = GaussianLikelihood::new(data)?;
    run_chain_with(prior, &lik, config)
}

/// Runs `k` chains on threads with seeds derived from `config.seed` and
/// concatenates their draws in chain order. One chain uses the seed as is.
pub fn run_chains(
    prior: &PriorSpec,
    likelihood: &dyn Likelihood,
    config: &McmcConfig,
    k: usize,
) -> Result<Posterior, ChainFailure> {
    if k <= 1 {
        return run_chain_with(prior, likelihood, config);
    }
    let results: Vec<Result<Posterior, ChainFailure>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..k)
            .map(|i| {
                let cfg = McmcConfig {
                    seed: derive_seed(config.seed, i as u64),
                    ..config.clone()
                };
                s.spawn(move || run_chain_with(prior, likelihood, &cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let mut parts = Vec::with_capacity(k);
    for r in results {
        parts.push(r?);
    }
    Ok(Posterior::merge(parts, config.seed)?)
}

struct Adapter {
    log_step: f64,
    target: f64,
    n: u64,
}

impl Adapter {
    fn new(step: f64, target: f64) -> Self {
        Adapter {
            log_step: step.ln(),
            target,
            n: 0,
        }
    }

    fn step(&self) -> f64 {
        self.log_step.exp()
    }

    fn update(&mut self, accepted: bool) {
        self.n += 1;
        let gain = 1.0 / (self.n as f64).powf(0.6);
        let a = if accepted { 1.0 } else { 0.0 };
        self.log_step = (self.log_step + gain * (a - self.target)).clamp(-12.0, 3.0);
    }
}

pub fn run_chain_with(
    prior: &PriorSpec,
    likelihood: &dyn Likelihood,
    config: &McmcConfig,
) -> Result<Posterior, ChainFailure> {
    let ctx = MoveContext::new(prior, likelihood, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = initial_state(&ctx, &mut rng)?;

    let names = ["global", "local", "param", "sigma"];
    let mut stats: BTreeMap<String, MoveStats> =
        names.iter().map(|n| (n.to_string(), MoveStats::default())).collect();
    let mut posterior = Posterior {
        config: config.clone(),
        seed: config.seed,
        chains: 1,
        prior: ctx.prior.to_text(),
        draws: Vec::with_capacity(config.n_draws()),
        accept_stats: BTreeMap::new(),
    };
    // A zero step stays zero: there is nothing to tune.
    let mut theta_step = Adapter::new(config.step_theta, 0.3);
    let mut sigma_step = Adapter::new(config.step_sigma, 0.44);
    let cumulative = [
        config.p_global,
        config.p_global + config.p_local,
        config.p_global + config.p_local + config.p_param,
    ];

    let total = config.burn_in + config.samples;
    for step in 0..total {
        let u: f64 = rng.random();
        let which = cumulative.iter().position(|&c| u < c).unwrap_or(3);
        let burning = step < config.burn_in;
        let proposal = match which {
            0 => propose_global(&ctx, &state, &mut rng),
            1 => propose_local(&ctx, &state, &mut rng),
            2 => propose_params(&ctx, &state, theta_step.step(), &mut rng),
            _ => propose_sigma(&ctx, &state, sigma_step.step(), &mut rng),
        };
        let mut aborted = false;
        let accepted = match proposal {
            Ok(p) => {
                let log_a = p.log_accept_ratio(&state);
                let lu = rng.random::<f64>().ln();
                if config.debug_checks && which < 2 && log_a.is_finite() {
                    check_reverse(&ctx, &state, &p, log_a).map_err(|e| fail(e, &posterior, &stats))?;
                }
                if lu < log_a {
                    state = p.state;
                    if config.debug_checks {
                        ctx.check_state(&state).map_err(|e| fail(e, &posterior, &stats))?;
                    }
                    true
                } else {
                    false
                }
            }
            Err(InferenceError::Automaton(crate::pta::PtaError::ImpossibleContext))
            | Err(InferenceError::Automaton(crate::pta::PtaError::DepthBudgetExhausted { .. })) => {
                aborted = true;
                false
            }
            Err(e) => return Err(fail(e, &posterior, &stats)),
        };
        let entry = stats.get_mut(names[which]).expect("known move");
        entry.proposed += 1;
        entry.accepted += u64::from(accepted);
        entry.aborted += u64::from(aborted);
        if burning && config.adapt {
            match which {
                2 if config.step_theta > 0.0 => theta_step.update(accepted),
                3 if config.step_sigma > 0.0 => sigma_step.update(accepted),
                _ => {}
            }
        }
        if !burning {
            let k = step - config.burn_in + 1;
            if k % config.thin == 0 && posterior.draws.len() < config.n_draws() {
                posterior.draws.push(Draw::from_state(&state));
            }
        }
    }
    posterior.accept_stats = stats;
    Ok(posterior)
}

fn fail(error: InferenceError, partial: &Posterior, stats: &BTreeMap<String, MoveStats>) -> ChainFailure {
    let mut p = partial.clone();
    p.accept_stats = stats.clone();
    ChainFailure {
        error,
        partial: Some(p),
    }
}

fn check_reverse(
    ctx: &MoveContext<'_>,
    state: &ChainState,
    p: &Proposal,
    log_a: f64,
) -> Result<(), InferenceError> {
    let rev = ctx.reverse(state, p)?;
    let back = rev.log_accept_ratio(&p.state);
    if (log_a + back).abs() > 1e-6 {
        return Err(InferenceError::DetailedBalance {
            kind: p.kind.name(),
            fwd: log_a,
            back,
        });
    }
    Ok(())
}

fn initial_state(ctx: &MoveContext<'_>, rng: &mut ChaCha8Rng) -> Result<ChainState, InferenceError> {
    let sigma_prior = Exp::new(ctx.config.lambda_sigma).expect("validated rate");
    for _ in 0..MAX_INIT_ATTEMPTS {
        let expr = sample_expression(&ctx.prior, rng)?;
        let sigma = sigma_prior.sample(rng);
        let s = ctx.state(expr, sigma)?;
        if s.log_post().is_finite() {
            return Ok(s);
        }
    }
    Err(InferenceError::NoFiniteStart(MAX_INIT_ATTEMPTS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::SymbolicExpression;

    const TOY: &str = "choice{1/2: g($x), 1/2: f($x, $x)}.subst($x, choice{1/2: a, 1/2: b})";

    #[test]
    fn same_seed_same_posterior() {
        let prior = PriorSpec::parse("@param k# exp 1\niter $x { choice{0.3: +(*(k#, x), $x), 0.7: *(k#, x)} }")
            .unwrap();
        let lik = |e: &SymbolicExpression, s: f64| -> f64 {
            -(e.theta_c().iter().sum::<f64>() - 2.0).powi(2) - s
        };
        let cfg = McmcConfig {
            burn_in: 200,
            samples: 300,
            thin: 3,
            seed: 11,
            debug_checks: true,
            ..McmcConfig::default()
        };
        let a = run_chain_with(&prior, &lik, &cfg).unwrap();
        let b = run_chain_with(&prior, &lik, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.draws.len(), 100);
        let c = run_chains(&prior, &lik, &cfg, 2).unwrap();
        assert_eq!(c.draws.len(), 200);
        assert_eq!(c.to_json(), run_chains(&prior, &lik, &cfg, 2).unwrap().to_json());
    }

    #[test]
    fn flat_likelihood_on_a_finite_language() {
        let prior = PriorSpec::parse(TOY).unwrap();
        let cfg = McmcConfig {
            burn_in: 100,
            samples: 20_000,
            thin: 1,
            seed: 3,
            ..McmcConfig::default()
        };
        let post = run_chain_with(&prior, &super::super::FlatLikelihood, &cfg).unwrap();
        let freq = post.structure_frequencies();
        assert_eq!(freq.len(), 6);
        let n = post.draws.len() as f64;
        for (tree, c) in freq {
            let want = if tree.starts_with("(g") { 0.25 } else { 0.125 };
            assert!((c as f64 / n - want).abs() < 0.03, "{tree}: {}", c as f64 / n);
        }
    }

    #[test]
    fn seeds_differ_per_chain() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(1, 0), derive_seed(1, 0));
    }
}
