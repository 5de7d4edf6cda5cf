//! Reference density: the total probability of all derivations of a tree,
//! computed by memoised recursive matching of the expression against the
//! tree. Kept independent of the automaton path so the two can check each
//! other.

use std::collections::HashMap;
use std::rc::Rc;

use num_rational::BigRational;

use super::{PriorSpec, Prte};
use crate::tree::Tree;
use crate::weight::Weight;

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

/// Scoping is lexical, so the environment of every sub-expression is fixed
/// by its position in the AST; `(expression, tree node)` addresses are
/// therefore a complete memo key.
struct Matcher<W> {
    memo: HashMap<(usize, usize), W>,
    weights: HashMap<usize, Vec<W>>,
}

impl<W: Weight> Matcher<W> {
    fn density<'a>(&mut self, e: &'a Prte, env: &Rc<Env<'a>>, t: &Tree) -> W {
        let key = (e as *const Prte as usize, t as *const Tree as usize);
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let v = match e {
            Prte::Symbol { symbol, children } => {
                if symbol != t.symbol() {
                    W::zero()
                } else {
                    let mut acc = W::one();
                    for (c, sub) in children.iter().zip(t.children()) {
                        if acc.is_zero() {
                            break;
                        }
                        acc = acc.mul(&self.density(c, env, sub));
                    }
                    acc
                }
            }
            Prte::Var(v) => match env.lookup(v) {
                Some((expr, def_env)) => {
                    let def_env = def_env.clone();
                    self.density(expr, &def_env, t)
                }
                None => W::zero(),
            },
            Prte::Choice(branches) => {
                let ws = self
                    .weights
                    .entry(e as *const Prte as usize)
                    .or_insert_with(|| branches.iter().map(|(w, _)| W::from_rational(w)).collect())
                    .clone();
                let mut acc = W::zero();
                for ((_, b), w) in branches.iter().zip(&ws) {
                    let d = self.density(b, env, t);
                    if !d.is_zero() {
                        acc.add_assign(&w.mul(&d));
                    }
                }
                acc
            }
            Prte::Concat { left, var, right } => {
                let inner = Rc::new(Env::Bind {
                    var,
                    expr: right,
                    env: env.clone(),
                    next: env.clone(),
                });
                self.density(left, &inner, t)
            }
            Prte::Iter { var, body } => {
                let inner = Rc::new(Env::Bind {
                    var,
                    expr: e,
                    env: env.clone(),
                    next: env.clone(),
                });
                self.density(body, &inner, t)
            }
        };
        self.memo.insert(key, v.clone());
        v
    }
}

/// Density in any weight type. Not truncated by `max_depth`.
pub fn prte_density_with<W: Weight>(prior: &PriorSpec, tree: &Tree) -> W {
    let mut m = Matcher {
        memo: HashMap::new(),
        weights: HashMap::new(),
    };
    m.density(&prior.root, &Rc::new(Env::Nil), tree)
}

/// Density in `f64`.
pub fn prte_density(prior: &PriorSpec, tree: &Tree) -> f64 {
    prte_density_with::<f64>(prior, tree)
}

/// Density in exact rational arithmetic.
pub fn prte_density_exact(prior: &PriorSpec, tree: &Tree) -> BigRational {
    prte_density_with::<BigRational>(prior, tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    const E1: &str = "iter $y { choice{1/3: f($x, $y), 1/3: f($y, $x), 1/3: g($x)} }
  .subst($x, iter $x { choice{1/4: f($x, $x), 1/4: g($x), 1/4: a, 1/4: b} })";

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn example_one_values() {
        let prior = PriorSpec::parse(E1).unwrap();
        let gga = Tree::parse("(g (g a))", &prior.alphabet).unwrap();
        assert_eq!(prte_density_exact(&prior, &gga), q(1, 48));
        assert!((prte_density(&prior, &gga) - 1.0 / 48.0).abs() < 1e-15);
        let fbb = Tree::parse("(f b b)", &prior.alphabet).unwrap();
        assert_eq!(prte_density_exact(&prior, &fbb), q(0, 1));
    }

    #[test]
    fn symmetric_derivations_add_up() {
        // f(g(a), g(a)): y-branch f(x,y) needs y = g(a) from the y-iteration
        // (via g(x), x = a: 1/3 * 1/4) and x = g(a) (1/4 * 1/4); the mirrored
        // branch contributes the same.
        let prior = PriorSpec::parse(E1).unwrap();
        let t = Tree::parse("(f (g a) (g a))", &prior.alphabet).unwrap();
        let one_side = q(1, 3) * (q(1, 4) * q(1, 4)) * (q(1, 3) * q(1, 4));
        assert_eq!(prte_density_exact(&prior, &t), one_side.clone() + one_side);
    }

    #[test]
    fn sum_of_three_terms() {
        let prior = PriorSpec::parse("iter $x { choice{0.1: +(f, $x), 0.9: f} }").unwrap();
        let t = Tree::parse("(+ f (+ f f))", &prior.alphabet).unwrap();
        assert_eq!(prte_density_exact(&prior, &t), q(9, 1000));
    }

    #[test]
    fn nothing_matches_foreign_trees() {
        let prior = PriorSpec::parse("choice{0.5: a, 0.5: f(a)}").unwrap();
        let alpha = crate::tree::RankedAlphabet::new([
            crate::tree::RankedSymbol::new("a", 0),
            crate::tree::RankedSymbol::new("f", 1),
            crate::tree::RankedSymbol::new("z", 0),
        ])
        .unwrap();
        let t = Tree::parse("(f z)", &alpha).unwrap();
        assert_eq!(prte_density(&prior, &t), 0.0);
    }
}
