//! Forward sampling of trees and expressions from a prior.

use std::rc::Rc;

use rand::Rng;

use super::{PriorSpec, Prte, PrteError};
use crate::expr::{ParamLayout, SymbolicExpression};
use crate::tree::Tree;
use crate::weight::rational_to_f64;

/// Consecutive over-budget draws tolerated before giving up.
pub const MAX_SAMPLE_ATTEMPTS: usize = 1000;

/// Hard cap on nodes per draw, so wide but shallow blow-ups also abort.
const NODE_BUDGET: usize = 100_000;

/// Lexical environment: each variable maps to the expression it stands for
/// and the environment that expression was written in.
enum Env<'a> {
    Nil,
    Bind {
        var: &'a str,
        expr: &'a Prte,
        env: Rc<Env<'a>>,
        next: Rc<Env<'a>>,
    },
}

impl<'a> Env<'a> {
    fn lookup(&self, name: &str) -> Option<(&'a Prte, &Rc<Env<'a>>)> {
        let mut cur = self;
        loop {
            match cur {
                Env::Nil => return None,
                Env::Bind {
                    var,
                    expr,
                    env,
                    next,
                } => {
                    if *var == name {
                        return Some((expr, env));
                    }
                    cur = next;
                }
            }
        }
    }
}

struct Abort;

struct Sampler<'r, R: Rng + ?Sized> {
    rng: &'r mut R,
    max_depth: usize,
    nodes: usize,
}

impl<R: Rng + ?Sized> Sampler<'_, R> {
    fn go<'a>(&mut self, e: &'a Prte, env: &Rc<Env<'a>>, depth: usize) -> Result<Tree, Abort> {
        match e {
            Prte::Symbol { symbol, children } => {
                self.nodes += 1;
                if depth > self.max_depth || self.nodes > NODE_BUDGET {
                    return Err(Abort);
                }
                let mut out = Vec::with_capacity(children.len());
                for c in children {
                    out.push(self.go(c, env, depth + 1)?);
                }
                Ok(Tree::new_unchecked(symbol.clone(), out))
            }
            Prte::Var(v) => {
                let (expr, def_env) = env.lookup(v).expect("validated prior has no free variables");
                let def_env = def_env.clone();
                self.go(expr, &def_env, depth)
            }
            Prte::Choice(branches) => {
                let weights: Vec<f64> = branches.iter().map(|(w, _)| rational_to_f64(w)).collect();
                let total: f64 = weights.iter().sum();
                let mut u = self.rng.random::<f64>() * total;
                let mut pick = branches.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                self.go(&branches[pick].1, env, depth)
            }
            Prte::Concat { left, var, right } => {
                let inner = Rc::new(Env::Bind {
                    var,
                    expr: right,
                    env: env.clone(),
                    next: env.clone(),
                });
                self.go(left, &inner, depth)
            }
            Prte::Iter { var, body } => {
                let inner = Rc::new(Env::Bind {
                    var,
                    expr: e,
                    env: env.clone(),
                    next: env.clone(),
                });
                self.go(body, &inner, depth)
            }
        }
    }
}

/// Draws a tree. Draws deeper than `prior.max_depth` are discarded and
/// redrawn from scratch, so the result follows the prior conditioned on the
/// depth budget.
pub fn sample_tree<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> Result<Tree, PrteError> {
    let root_env = Rc::new(Env::Nil);
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let mut s = Sampler {
            rng: &mut *rng,
            max_depth: prior.max_depth,
            nodes: 0,
        };
        if let Ok(t) = s.go(&prior.root, &root_env, 1) {
            return Ok(t);
        }
    }
    Err(PrteError::DepthBudgetExhausted {
        attempts: MAX_SAMPLE_ATTEMPTS,
        max_depth: prior.max_depth,
    })
}

/// Draws a tree, then one value per parameter group from its marker's
/// prior, and discrete values uniformly from the declared support.
pub fn sample_expression<R: Rng + ?Sized>(
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<SymbolicExpression, PrteError> {
    let tree = sample_tree(prior, rng)?;
    let layout = ParamLayout::new(&tree, &prior.ties);
    let mut free = Vec::with_capacity(layout.n_free());
    for g in &layout.groups {
        let p = prior
            .param_prior(&g.marker)
            .ok_or_else(|| PrteError::MissingParamPrior(g.marker.name().to_string()))?;
        free.push(p.sample(rng));
    }
    let mut theta_d = Vec::with_capacity(layout.n_disc());
    for _ in 0..layout.n_disc() {
        if prior.disc_support.is_empty() {
            return Err(PrteError::MissingDiscreteSupport);
        }
        let i = rng.random_range(0..prior.disc_support.len());
        theta_d.push(prior.disc_support[i].clone());
    }
    Ok(SymbolicExpression::from_free(tree, &layout, &free, theta_d)
        .expect("layout and parameters agree by construction"))
}
