//! Reversible-jump Metropolis–Hastings over symbolic expressions.
//!
//! The target is `p̃(t) · p(θ_c | t) · p(θ_d | t) · p(σ) · p(Y | X, e, σ)`,
//! where `p̃` is the prior tree series restricted to the depth budget. Four
//! move types are mixed: a global structure move that redraws the tree from
//! the prior, a local move that regrows one subtree from the automaton state
//! at its root, a random walk on the continuous parameters, and a random
//! walk on `log σ`. Structure moves carry the continuous parameters across
//! dimension changes with one of the [`JumpMap`]s.

mod chain;
mod jump;
mod likelihood;
mod moves;
mod predict;

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, ParamLayout, SymbolicExpression};
use crate::prte::{PriorSpec, PrteError};
use crate::pta::PtaError;
use crate::tree::{Tree, TreeError};
use crate::weight::{format_rational, parse_rational};

pub use chain::{derive_seed, run_chain, run_chain_with, run_chains, ChainFailure};
pub use jump::{expand_params, shrink_params, Aux};
pub use likelihood::{log_likelihood, FlatLikelihood, GaussianLikelihood, Likelihood};
pub use moves::{propose_global, propose_local, propose_params, propose_sigma, MoveContext, MoveKind, Proposal};
pub use predict::{posterior_predict, quantile, PointSummary, Prediction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Prior(#[from] PrteError),
    #[error(transparent)]
    Automaton(#[from] PtaError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("no starting point with finite posterior density in {0} prior draws")]
    NoFiniteStart(usize),
    #[error("every draw is non-finite at point {point}")]
    AllDrawsNonFinite { point: usize },
    #[error("cached {what} drifted from recomputation: {cached} vs {fresh}")]
    CacheIncoherent { what: &'static str, cached: f64, fresh: f64 },
    #[error("detailed balance violated by a {kind} move: log ratios {fwd} and {back}")]
    DetailedBalance { kind: &'static str, fwd: f64, back: f64 },
    #[error("posterior: {0}")]
    Posterior(String),
}

/// How continuous parameters are carried across a change of structure.
///
/// Values are matched per marker name in pre-order. Unmatched slots are
/// filled or dropped by the chosen map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JumpMap {
    /// Expansion averages old values with standard-normal auxiliaries;
    /// shrinkage splits them back ([`expand_params`], [`shrink_params`]).
    Averaging,
    /// Kept values stay as they are; new slots are drawn from their
    /// marker's prior and dropped ones are scored under it. Unit Jacobian.
    #[default]
    PriorBirth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
    /// Rate of the exponential prior on σ.
    pub lambda_sigma: f64,
    /// Boltzmann temperature for the hole state of local moves.
    pub tau: f64,
    pub step_sigma: f64,
    pub step_theta: f64,
    pub p_global: f64,
    pub p_local: f64,
    pub p_param: f64,
    pub p_sigma: f64,
    /// Depth budget; `None` uses the prior's.
    pub max_depth: Option<usize>,
    pub state_budget: usize,
    pub jump_map: JumpMap,
    /// Tune the two random-walk scales during burn-in.
    pub adapt: bool,
    /// Recompute the cached log terms after every accepted move and fail on
    /// drift.
    pub debug_checks: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            burn_in: 2000,
            samples: 1000,
            thin: 10,
            seed: 0,
            lambda_sigma: 1.0,
            tau: 1.0,
            step_sigma: 0.1,
            step_theta: 0.1,
            p_global: 0.2,
            p_local: 0.4,
            p_param: 0.3,
            p_sigma: 0.1,
            max_depth: None,
            state_budget: crate::pta::DEFAULT_STATE_BUDGET,
            jump_map: JumpMap::default(),
            adapt: true,
            debug_checks: false,
        }
    }
}

impl McmcConfig {
    /// Chain length used in the reference experiments.
    pub fn full_scale() -> Self {
        McmcConfig {
            burn_in: 10_000,
            samples: 5000,
            thin: 100,
            ..McmcConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: String| Err(InferenceError::Config(m));
        if self.samples == 0 || self.thin == 0 {
            return bad("samples and thin must be positive".into());
        }
        if self.thin > self.samples {
            return bad(format!("thin {} exceeds samples {}", self.thin, self.samples));
        }
        if !(self.lambda_sigma > 0.0 && self.lambda_sigma.is_finite()) {
            return bad(format!("lambda_sigma must be positive, got {}", self.lambda_sigma));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        for (name, v) in [("step_sigma", self.step_sigma), ("step_theta", self.step_theta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        let mix = [self.p_global, self.p_local, self.p_param, self.p_sigma];
        if mix.iter().any(|p| !(*p >= 0.0)) {
            return bad("move probabilities must be non-negative".into());
        }
        let total: f64 = mix.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("move probabilities sum to {total}, not 1"));
        }
        if self.max_depth == Some(0) || self.state_budget == 0 {
            return bad("max_depth and state_budget must be positive".into());
        }
        Ok(())
    }

    pub fn n_draws(&self) -> usize {
        self.samples / self.thin
    }
}

/// Inputs by column name plus one target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: BTreeMap<String, Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: BTreeMap<String, Vec<f64>>, targets: Vec<f64>) -> Result<Self, InferenceError> {
        if targets.is_empty() {
            return Err(InferenceError::Data("no rows".into()));
        }
        if let Some((name, col)) = inputs.iter().find(|(_, c)| c.len() != targets.len()) {
            return Err(InferenceError::Data(format!(
                "column `{name}` has {} rows, targets have {}",
                col.len(),
                targets.len()
            )));
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Fails unless every variable of the prior has a column.
    pub fn check_variables(&self, prior: &PriorSpec) -> Result<(), InferenceError> {
        for v in prior.variables() {
            if !self.inputs.contains_key(v.name()) {
                return Err(InferenceError::Data(format!(
                    "no column for variable `{}` (have: {})",
                    v.name(),
                    self.inputs.keys().cloned().collect::<Vec<_>>().join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// One point of the chain with its cached log-density terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub expr: SymbolicExpression,
    pub layout: ParamLayout,
    /// One value per parameter group of `layout`.
    pub free: Vec<f64>,
    pub sigma: f64,
    pub log_lik: f64,
    pub log_prior_tree: f64,
    /// Continuous and discrete parameters plus σ.
    pub log_prior_params: f64,
}

impl ChainState {
    pub fn log_post(&self) -> f64 {
        self.log_lik + self.log_prior_tree + self.log_prior_params
    }

    pub fn tree(&self) -> &Tree {
        self.expr.tree()
    }
}

/// Per move type: proposals made, accepted, and aborted before scoring
/// (aborts count as rejections).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: u64,
    pub accepted: u64,
    pub aborted: u64,
}

impl MoveStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn merge(&mut self, other: &MoveStats) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
        self.aborted += other.aborted;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    /// Tree text, e.g. `(* sT# c)`.
    pub expr: String,
    pub theta_c: Vec<f64>,
    /// Exact values as decimal or `p/q` text.
    pub theta_d: Vec<String>,
    pub sigma: f64,
    pub log_post: f64,
}

impl Draw {
    fn from_state(s: &ChainState) -> Draw {
        Draw {
            expr: s.tree().to_string(),
            theta_c: s.expr.theta_c().to_vec(),
            theta_d: s.expr.theta_d().iter().map(format_rational).collect(),
            sigma: s.sigma,
            log_post: s.log_post(),
        }
    }

    /// Rebuilds the expression over the prior's alphabet.
    pub fn expression(&self, prior: &PriorSpec) -> Result<SymbolicExpression, InferenceError> {
        let tree = Tree::parse(&self.expr, &prior.alphabet)?;
        let theta_d = self
            .theta_d
            .iter()
            .map(|s| {
                parse_rational(s)
                    .ok_or_else(|| InferenceError::Posterior(format!("bad discrete value `{s}`")))
            })
            .collect::<Result<Vec<BigRational>, _>>()?;
        Ok(SymbolicExpression::new(tree, self.theta_c.clone(), theta_d)?)
    }
}

/// Thinned draws of one or more chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub config: McmcConfig,
    pub seed: u64,
    pub chains: usize,
    /// Canonical text of the prior the chain ran under.
    pub prior: String,
    pub draws: Vec<Draw>,
    pub accept_stats: BTreeMap<String, MoveStats>,
}

impl Posterior {
    pub fn prior_spec(&self) -> Result<PriorSpec, InferenceError> {
        Ok(PriorSpec::parse(&self.prior)?)
    }

    pub fn expressions(&self) -> Result<Vec<SymbolicExpression>, InferenceError> {
        let prior = self.prior_spec()?;
        self.draws.iter().map(|d| d.expression(&prior)).collect()
    }

    /// Tree texts by descending frequency, ties broken by text.
    pub fn structure_frequencies(&self) -> Vec<(String, usize)> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for d in &self.draws {
            *counts.entry(&d.expr).or_default() += 1;
        }
        let mut v: Vec<(String, usize)> = counts.into_iter().map(|(k, c)| (k.to_string(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    }

    pub fn sigma_mean(&self) -> f64 {
        self.draws.iter().map(|d| d.sigma).sum::<f64>() / self.draws.len().max(1) as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("posterior serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, InferenceError> {
        serde_json::from_str(text).map_err(|e| InferenceError::Posterior(e.to_string()))
    }

    /// Concatenates chains in order and sums their statistics.
    pub fn merge(parts: Vec<Posterior>, seed: u64) -> Result<Posterior, InferenceError> {
        let mut it = parts.into_iter();
        let mut out = it
            .next()
            .ok_or_else(|| InferenceError::Posterior("nothing to merge".into()))?;
        out.seed = seed;
        out.config.seed = seed;
        for p in it {
            if p.prior != out.prior {
                return Err(InferenceError::Posterior("chains ran under different priors".into()));
            }
            out.chains += p.chains;
            out.draws.extend(p.draws);
            for (k, s) in &p.accept_stats {
                out.accept_stats.entry(k.clone()).or_default().merge(s);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_validate() {
        McmcConfig::default().validate().unwrap();
        McmcConfig::full_scale().validate().unwrap();
        assert_eq!(McmcConfig::full_scale().n_draws(), 50);
        let bad = McmcConfig {
            p_global: 0.5,
            ..McmcConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok: McmcConfig = serde_json::from_str(r#"{"burn_in": 10000, "samples": 5000, "thin": 100}"#).unwrap();
        assert_eq!(ok.burn_in, 10_000);
        assert_eq!(ok.tau, 1.0);
        assert!(serde_json::from_str::<McmcConfig>(r#"{"burnin": 1}"#).is_err());
    }
}
