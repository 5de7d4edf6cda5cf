//! Probabilistic regular tree expression priors, probabilistic tree
//! automata, and reversible-jump MCMC symbolic regression.
//!
//! The crate is organised bottom-up:
//!
//! * [`tree`] and [`expr`]: ranked alphabets, trees, parameterised
//!   expressions and their evaluation,
//! * [`prte`]: prior expressions, their parser, sampler and a reference
//!   density,
//! * [`pta`]: compilation to tree automata, factor-graph evaluation,
//!   context marginals and products,
//! * [`inference`]: the MCMC sampler and posterior predictions,
//! * [`experiments`]: synthetic datasets, the shipped prior library and
//!   metrics.

pub mod experiments;
pub mod expr;
pub mod inference;
pub mod prte;
pub mod pta;
pub mod tree;
pub mod weight;

pub use expr::{eval_expression, ParamLayout, SymbolicExpression, TieRule};
pub use prte::{PriorSpec, Prte, PrteError};
pub use tree::{validate_tree, Address, RankedAlphabet, RankedSymbol, Tree};
