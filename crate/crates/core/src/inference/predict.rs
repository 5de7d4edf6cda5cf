use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{InferenceError, Posterior};

/// Posterior-predictive summary at one input point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSummary {
    pub mean: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    /// Draws with a finite prediction here.
    pub n_finite: usize,
    /// Draws excluded for a non-finite prediction.
    pub excluded: usize,
}

impl PointSummary {
    /// True when no draw gave a finite value; the statistics are then NaN.
    pub fn is_flagged(&self) -> bool {
        self.n_finite == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub points: Vec<PointSummary>,
    /// Noise-free predictions, one row per draw.
    pub per_draw: Vec<Vec<f64>>,
}

impl Prediction {
    pub fn check(&self) -> Result<(), InferenceError> {
        match self.points.iter().position(PointSummary::is_flagged) {
            Some(point) => Err(InferenceError::AllDrawsNonFinite { point }),
            None => Ok(()),
        }
    }

    pub fn medians(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.q50).collect()
    }
}

/// Linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Evaluates every draw at the given inputs. With `noise_seed`, each value
/// gets Gaussian noise at the draw's σ (aleatoric plus epistemic spread);
/// without, the bands show the spread between expressions only.
pub fn posterior_predict(
    posterior: &Posterior,
    inputs: &BTreeMap<String, Vec<f64>>,
    noise_seed: Option<u64>,
) -> Result<Prediction, InferenceError> {
    if posterior.draws.is_empty() {
        return Err(InferenceError::Posterior("no draws".into()));
    }
    let n = inputs.values().next().map_or(1, Vec::len);
    let exprs = posterior.expressions()?;
    let mut per_draw = Vec::with_capacity(exprs.len());
    for e in &exprs {
        let mut v = e.eval(inputs)?;
        if v.len() == 1 && n != 1 {
            v = vec![v[0]; n];
        }
        per_draw.push(v);
    }
    let mut rng = noise_seed.map(ChaCha8Rng::seed_from_u64);
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(exprs.len()); n];
    for (row, d) in per_draw.iter().zip(&posterior.draws) {
        let noise = Normal::new(0.0, d.sigma).ok();
        for (i, &y) in row.iter().enumerate() {
            let y = match (rng.as_mut(), noise) {
                (Some(r), Some(nz)) => y + nz.sample(r),
                _ => y,
            };
            columns[i].push(y);
        }
    }
    let points = columns
        .into_iter()
        .map(|col| {
            let total = col.len();
            let mut f: Vec<f64> = col.into_iter().filter(|v| v.is_finite()).collect();
            f.sort_by(f64::total_cmp);
            let mean = if f.is_empty() {
                f64::NAN
            } else {
                f.iter().sum::<f64>() / f.len() as f64
            };
            PointSummary {
                mean,
                q05: quantile(&f, 0.05),
                q50: quantile(&f, 0.5),
                q95: quantile(&f, 0.95),
                n_finite: f.len(),
                excluded: total - f.len(),
            }
        })
        .collect();
    Ok(Prediction { points, per_draw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{Draw, McmcConfig};
    use crate::prte::PriorSpec;

    fn posterior(draws: Vec<Draw>) -> Posterior {
        Posterior {
            config: McmcConfig::default(),
            seed: 0,
            chains: 1,
            prior: PriorSpec::parse("@param k# exp 1\nchoice{0.5: *(k#, x), 0.5: /(k#, x)}")
                .unwrap()
                .to_text(),
            draws,
            accept_stats: BTreeMap::new(),
        }
    }

    fn draw(expr: &str, k: f64) -> Draw {
        Draw {
            expr: expr.into(),
            theta_c: vec![k],
            theta_d: vec![],
            sigma: 0.5,
            log_post: 0.0,
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert!((quantile(&v, 0.05) - 1.2).abs() < 1e-12);
        assert_eq!(quantile(&[7.0], 0.95), 7.0);
    }

    #[test]
    fn single_draw_collapses() {
        let p = posterior(vec![draw("(* k# x)", 2.0)]);
        let x = BTreeMap::from([("x".to_string(), vec![1.0, 3.0])]);
        let pred = posterior_predict(&p, &x, None).unwrap();
        assert_eq!(pred.points[1].q05, 6.0);
        assert_eq!(pred.points[1].q95, 6.0);
        assert_eq!(pred.points[1].mean, 6.0);
    }

    #[test]
    fn non_finite_draws_are_excluded_and_flagged() {
        let p = posterior(vec![draw("(/ k# x)", 1.0), draw("(* k# x)", 1.0)]);
        let x = BTreeMap::from([("x".to_string(), vec![0.0, 2.0])]);
        let pred = posterior_predict(&p, &x, None).unwrap();
        assert_eq!(pred.points[0].excluded, 1);
        assert_eq!(pred.points[0].q50, 0.0);
        assert!(pred.check().is_ok());
        let only_bad = posterior(vec![draw("(/ k# x)", 1.0)]);
        let pred = posterior_predict(&only_bad, &x, None).unwrap();
        assert!(pred.points[0].is_flagged());
        assert_eq!(pred.check(), Err(InferenceError::AllDrawsNonFinite { point: 0 }));
    }

    #[test]
    fn noise_widens_bands() {
        let draws = (0..200).map(|_| draw("(* k# x)", 2.0)).collect();
        let p = posterior(draws);
        let x = BTreeMap::from([("x".to_string(), vec![1.0])]);
        let pred = posterior_predict(&p, &x, Some(3)).unwrap();
        let s = pred.points[0];
        assert!(s.q05 < 2.0 && 2.0 < s.q95);
        assert!(s.q05 <= s.q50 && s.q50 <= s.q95);
    }
}
