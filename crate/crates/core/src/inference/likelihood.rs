use std::f64::consts::PI;

use super::{Dataset, InferenceError};
use crate::expr::SymbolicExpression;

/// `Σ_i log N(y_i; e(x_i), σ)`; `−∞` when any prediction is non-finite or
/// the expression cannot be evaluated on the data.
pub fn log_likelihood(expr: &SymbolicExpression, sigma: f64, data: &Dataset) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let Ok(pred) = expr.eval(&data.inputs) else {
        return f64::NEG_INFINITY;
    };
    let pred = if pred.len() == 1 && data.len() > 1 {
        vec![pred[0]; data.len()]
    } else {
        pred
    };
    let mut ss = 0.0;
    for (p, y) in pred.iter().zip(&data.targets) {
        if !p.is_finite() {
            return f64::NEG_INFINITY;
        }
        ss += (y - p) * (y - p);
    }
    let n = data.len() as f64;
    -0.5 * n * (2.0 * PI).ln() - n * sigma.ln() - ss / (2.0 * sigma * sigma)
}

/// Scores a candidate expression and noise scale.
pub trait Likelihood: Sync {
    fn log_likelihood(&self, expr: &SymbolicExpression, sigma: f64) -> f64;
}

/// Gaussian observation noise around the expression's predictions.
#[derive(Debug, Clone)]
pub struct GaussianLikelihood<'a> {
    pub data: &'a Dataset,
}

impl<'a> GaussianLikelihood<'a> {
    pub fn new(data: &'a Dataset) -> Result<Self, InferenceError> {
        if data.is_empty() {
            return Err(InferenceError::Data("no rows".into()));
        }
        Ok(GaussianLikelihood { data })
    }
}

impl Likelihood for GaussianLikelihood<'_> {
    fn log_likelihood(&self, expr: &SymbolicExpression, sigma: f64) -> f64 {
        log_likelihood(expr, sigma, self.data)
    }
}

/// Constant likelihood: the chain then samples the prior.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatLikelihood;

impl Likelihood for FlatLikelihood {
    fn log_likelihood(&self, _: &SymbolicExpression, _: f64) -> f64 {
        0.0
    }
}

impl<F> Likelihood for F
where
    F: Fn(&SymbolicExpression, f64) -> f64 + Sync,
{
    fn log_likelihood(&self, expr: &SymbolicExpression, sigma: f64) -> f64 {
        self(expr, sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Tree;
    use std::collections::BTreeMap;

    fn data(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::new(BTreeMap::from([("x".to_string(), xs.to_vec())]), ys.to_vec()).unwrap()
    }

    fn expr(text: &str, theta: Vec<f64>) -> SymbolicExpression {
        SymbolicExpression::new(Tree::parse_inferred(text).unwrap(), theta, vec![]).unwrap()
    }

    #[test]
    fn perfect_fit() {
        let d = data(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]);
        let e = expr("(* 2 x)", vec![]);
        let want = -1.5 * (2.0 * PI).ln();
        assert!((log_likelihood(&e, 1.0, &d) - want).abs() < 1e-12);
    }

    #[test]
    fn division_by_zero_rejects() {
        let d = data(&[0.0, 1.0], &[1.0, 1.0]);
        let e = expr("(/ 1 x)", vec![]);
        assert_eq!(log_likelihood(&e, 1.0, &d), f64::NEG_INFINITY);
    }

    #[test]
    fn hand_computed_residuals() {
        // e = c# * x with c# = 1.5 on (1, 2), (2, 2), (3, 5): residuals 0.5, -1, 0.5.
        let d = data(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]);
        let e = expr("(* c# x)", vec![1.5]);
        let sigma: f64 = 0.5;
        let ss = 0.25 + 1.0 + 0.25;
        let want = -1.5 * (2.0 * PI).ln() - 3.0 * sigma.ln() - ss / (2.0 * sigma * sigma);
        assert!((log_likelihood(&e, sigma, &d) - want).abs() < 1e-12);
    }

    #[test]
    fn constant_expression_broadcasts() {
        let d = Dataset::new(BTreeMap::new(), vec![1.0, 1.0]).unwrap();
        let e = expr("1", vec![]);
        assert!((log_likelihood(&e, 1.0, &d) + (2.0 * PI).ln()).abs() < 1e-12);
    }
}
