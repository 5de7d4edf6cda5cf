use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{ExperimentError, Table};
use crate::inference::{derive_seed, Dataset};

/// Inputs closer than this to a pole of the ground truth are redrawn.
pub const POLE_TOLERANCE: f64 = 1e-6;
/// Redraws allowed per input point before giving up.
pub const MAX_POLE_RESAMPLES: usize = 100_000;

/// Closed intervals for the training set and the three hold-out sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranges {
    pub train: (f64, f64),
    pub test1: (f64, f64),
    pub test2: (f64, f64),
    pub test3: (f64, f64),
}

impl Ranges {
    fn all(&self) -> [(f64, f64); 4] {
        [self.train, self.test1, self.test2, self.test3]
    }

    fn check(&self) -> Result<(), ExperimentError> {
        for (lo, hi) in self.all() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(ExperimentError::Spec(format!("bad range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// The four generated datasets plus what produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Table,
    pub test1: Table,
    pub test2: Table,
    pub test3: Table,
    /// Ground-truth parameter values by name.
    pub params: BTreeMap<String, f64>,
    pub input_unit: &'static str,
    pub target_unit: &'static str,
    /// Input points redrawn because they sat on a pole.
    pub resampled: usize,
}

impl Splits {
    pub fn named(&self) -> [(&'static str, &Table); 4] {
        [("train", &self.train), ("test1", &self.test1), ("test2", &self.test2), ("test3", &self.test3)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Isotherm {
    Langmuir,
    ModifiedLangmuir,
    TwoSiteLangmuir,
    GeneralLangmuirFreundlich,
    Freundlich,
    GeneralFreundlich,
    Toth,
    BrunauerEmmettTeller,
    FarleyDzombakMorel,
    RedlichPeterson,
}

impl Isotherm {
    pub const ALL: [Isotherm; 10] = [
        Isotherm::Langmuir,
        Isotherm::ModifiedLangmuir,
        Isotherm::TwoSiteLangmuir,
        Isotherm::GeneralLangmuirFreundlich,
        Isotherm::Freundlich,
        Isotherm::GeneralFreundlich,
        Isotherm::Toth,
        Isotherm::BrunauerEmmettTeller,
        Isotherm::FarleyDzombakMorel,
        Isotherm::RedlichPeterson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Isotherm::Langmuir => "langmuir",
            Isotherm::ModifiedLangmuir => "modified_langmuir",
            Isotherm::TwoSiteLangmuir => "two_site_langmuir",
            Isotherm::GeneralLangmuirFreundlich => "general_langmuir_freundlich",
            Isotherm::Freundlich => "freundlich",
            Isotherm::GeneralFreundlich => "general_freundlich",
            Isotherm::Toth => "toth",
            Isotherm::BrunauerEmmettTeller => "brunauer_emmett_teller",
            Isotherm::FarleyDzombakMorel => "farley_dzombak_morel",
            Isotherm::RedlichPeterson => "redlich_peterson",
        }
    }

    /// Parameter names with their exponential prior rates.
    pub fn default_priors(self) -> BTreeMap<String, f64> {
        use Isotherm::*;
        let list: &[(&str, f64)] = match self {
            Langmuir => &[("sT", 0.015), ("k", 4.0)],
            ModifiedLangmuir => &[("sT", 0.015), ("k1", 4.0), ("k2", 100.0)],
            TwoSiteLangmuir => &[("sT", 0.015), ("f1", 4.0), ("f2", 4.0), ("k1", 8.0), ("k2", 8.0)],
            GeneralLangmuirFreundlich | GeneralFreundlich => &[("sT", 0.015), ("k", 4.0), ("alpha", 4.0)],
            Freundlich => &[("KF", 0.05), ("alpha", 4.0)],
            Toth | RedlichPeterson => &[("sT", 0.015), ("k", 4.0), ("alpha", 0.75)],
            BrunauerEmmettTeller => &[("k1", 0.25), ("k2", 4.0), ("k3", 100.0)],
            FarleyDzombakMorel => &[
                ("sT", 0.015),
                ("k1", 4.0),
                ("k2", 100.0),
                ("k3", 4.0),
                ("X", 0.03),
                ("Xc", 0.03),
            ],
        };
        list.iter().map(|(n, r)| (n.to_string(), *r)).collect()
    }

    /// Sorbed concentration at solute concentration `c`.
    pub fn eval(self, p: &BTreeMap<String, f64>, c: f64) -> f64 {
        use Isotherm::*;
        let g = |name: &str| p.get(name).copied().unwrap_or(f64::NAN);
        match self {
            Langmuir => g("sT") * g("k") * c / (1.0 + g("k") * c),
            ModifiedLangmuir => {
                let (k1, k2) = (g("k1"), g("k2"));
                g("sT") * k1 * c / (1.0 + k1 * c) / (1.0 + k2 * c)
            }
            TwoSiteLangmuir => {
                let (k1, k2) = (g("k1"), g("k2"));
                g("sT") * (g("f1") * k1 * c / (1.0 + k1 * c) + g("f2") * k2 * c / (1.0 + k2 * c))
            }
            GeneralLangmuirFreundlich => {
                let a = (g("k") * c).powf(g("alpha"));
                g("sT") * a / (1.0 + a)
            }
            Freundlich => g("KF") * c.powf(g("alpha")),
            GeneralFreundlich => {
                let kc = g("k") * c;
                g("sT") * (kc / (1.0 + kc)).powf(g("alpha"))
            }
            Toth => {
                let (kc, a) = (g("k") * c, g("alpha"));
                g("sT") * kc / (1.0 + kc.powf(a)).powf(1.0 / a)
            }
            BrunauerEmmettTeller => g("k1") * c / (1.0 + g("k2") * c) / (1.0 - g("k3") * c),
            FarleyDzombakMorel => {
                let (st, k1, k2, k3) = (g("sT"), g("k1"), g("k2"), g("k3"));
                let (x, xc) = (g("X"), g("Xc"));
                st * k1 * c / (1.0 + k1 * c)
                    + ((x - st) / (1.0 + k1 * c) + k1 * xc * c / (1.0 + k1 * c)) * (k2 * c / (1.0 - k2 * c))
                    - (k2 / k3) * c
            }
            RedlichPeterson => {
                let kc = g("k") * c;
                g("sT") * kc / (1.0 + kc.powf(g("alpha")))
            }
        }
    }

    /// Denominators that can vanish on the positive half-line.
    fn poles(self, p: &BTreeMap<String, f64>, c: f64) -> Option<f64> {
        match self {
            Isotherm::BrunauerEmmettTeller => Some(1.0 - p["k3"] * c),
            Isotherm::FarleyDzombakMorel => Some(1.0 - p["k2"] * c),
            _ => None,
        }
    }
}

impl fmt::Display for Isotherm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Isotherm {
    type Err = ExperimentError;

    /// Accepts the snake-case name, with `-` or spaces in place of `_`, and
    /// the short forms `bet`, `fdm`, `glf`, `gf`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let short = match key.as_str() {
            "bet" => Some(Isotherm::BrunauerEmmettTeller),
            "fdm" => Some(Isotherm::FarleyDzombakMorel),
            "glf" => Some(Isotherm::GeneralLangmuirFreundlich),
            "gf" => Some(Isotherm::GeneralFreundlich),
            _ => None,
        };
        short
            .or_else(|| Isotherm::ALL.into_iter().find(|i| i.name() == key))
            .ok_or_else(|| ExperimentError::UnknownIsotherm(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsothermSpec {
    pub isotherm: Isotherm,
    /// Exponential rates by parameter name.
    pub param_priors: BTreeMap<String, f64>,
    pub ranges: Ranges,
    pub n_train: usize,
    pub n_test: usize,
    /// Zero turns the noise off.
    pub noise_sigma: f64,
    /// Overrides the drawn ground-truth parameters when set.
    pub fixed_params: Option<BTreeMap<String, f64>>,
}

impl IsothermSpec {
    pub fn new(isotherm: Isotherm) -> Self {
        IsothermSpec {
            isotherm,
            param_priors: isotherm.default_priors(),
            ranges: Ranges {
                train: (20.0, 100.0),
                test1: (20.0, 100.0),
                test2: (0.0, 20.0),
                test3: (100.0, 150.0),
            },
            n_train: 20,
            n_test: 20,
            noise_sigma: 0.1,
            fixed_params: None,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.ranges.check()?;
        check_sizes(self.n_train, self.n_test, self.noise_sigma)?;
        let want = self.isotherm.default_priors();
        for name in want.keys() {
            match self.param_priors.get(name) {
                Some(&r) if r > 0.0 && r.is_finite() => {}
                Some(r) => return Err(ExperimentError::Spec(format!("rate for {name} must be positive, got {r}"))),
                None => return Err(ExperimentError::Spec(format!("no prior for {name}"))),
            }
            if let Some(fixed) = &self.fixed_params {
                if !fixed.get(name).is_some_and(|v| v.is_finite()) {
                    return Err(ExperimentError::Spec(format!("fixed parameters lack a finite {name}")));
                }
            }
        }
        Ok(())
    }
}

fn check_sizes(n_train: usize, n_test: usize, noise: f64) -> Result<(), ExperimentError> {
    if n_train == 0 || n_test == 0 {
        return Err(ExperimentError::Spec("dataset sizes must be positive".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(ExperimentError::Spec(format!("noise sigma must be non-negative, got {noise}")));
    }
    Ok(())
}

fn split_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Draws ground-truth parameters (one stream per parameter, in name order),
/// then each dataset from its own stream.
pub fn gen_isotherm(spec: &IsothermSpec, seed: u64) -> Result<Splits, ExperimentError> {
    spec.validate()?;
    let params: BTreeMap<String, f64> = match &spec.fixed_params {
        Some(p) => p.clone(),
        None => spec
            .param_priors
            .iter()
            .enumerate()
            .map(|(i, (name, &rate))| {
                let mut rng = split_rng(seed, 16 + i as u64);
                (name.clone(), Exp::new(rate).expect("validated rate").sample(&mut rng))
            })
            .collect(),
    };
    let iso = spec.isotherm;
    let mut resampled = 0;
    let mut make = |stream: u64, n: usize, (lo, hi): (f64, f64)| -> Result<Table, ExperimentError> {
        let mut rng = split_rng(seed, stream);
        let mut cs = Vec::with_capacity(n);
        let mut ss = Vec::with_capacity(n);
        for _ in 0..n {
            let mut c = rng.random_range(lo..=hi);
            let mut tries = 0;
            while iso.poles(&params, c).is_some_and(|d| d.abs() < POLE_TOLERANCE) {
                tries += 1;
                if tries > MAX_POLE_RESAMPLES {
                    return Err(ExperimentError::Pole(MAX_POLE_RESAMPLES));
                }
                c = rng.random_range(lo..=hi);
            }
            resampled += tries;
            cs.push(c);
            ss.push(iso.eval(&params, c) + noise(&mut rng, spec.noise_sigma));
        }
        let data = Dataset::new(BTreeMap::from([("c".to_string(), cs)]), ss)?;
        Table::new(vec!["c".into()], "s", data)
    };
    let r = spec.ranges;
    let train = make(0, spec.n_train, r.train)?;
    let test1 = make(1, spec.n_test, r.test1)?;
    let test2 = make(2, spec.n_test, r.test2)?;
    let test3 = make(3, spec.n_test, r.test3)?;
    Ok(Splits {
        train,
        test1,
        test2,
        test3,
        params,
        input_unit: "mg/L",
        target_unit: "mg/Kg",
        resampled,
    })
}

fn noise(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("validated sigma").sample(rng)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperelasticSpec {
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    pub ranges: Ranges,
    pub n_train: usize,
    pub n_test: usize,
    pub noise_sigma: f64,
}

impl Default for HyperelasticSpec {
    fn default() -> Self {
        HyperelasticSpec {
            alpha: vec![1.75, 2.5],
            mu: vec![1.5, 0.1],
            ranges: Ranges {
                train: (1.5, 2.5),
                test1: (1.5, 2.5),
                test2: (0.5, 1.5),
                test3: (2.5, 5.0),
            },
            n_train: 20,
            n_test: 20,
            noise_sigma: 0.01,
        }
    }
}

impl HyperelasticSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.ranges.check()?;
        check_sizes(self.n_train, self.n_test, self.noise_sigma)?;
        if self.alpha.len() != self.mu.len() || self.alpha.is_empty() {
            return Err(ExperimentError::Spec("alpha and mu need the same non-zero length".into()));
        }
        if self.alpha.iter().chain(&self.mu).any(|v| !v.is_finite()) || self.alpha.contains(&0.0) {
            return Err(ExperimentError::Spec("alpha entries must be finite and nonzero".into()));
        }
        Ok(())
    }
}

/// Ogden strain energy `Σ_p μ_p/α_p (λ1^α_p + λ2^α_p + λ3^α_p − 3)`.
pub fn ogden(alpha: &[f64], mu: &[f64], l: [f64; 3]) -> f64 {
    alpha
        .iter()
        .zip(mu)
        .map(|(&a, &m)| m / a * (l[0].powf(a) + l[1].powf(a) + l[2].powf(a) - 3.0))
        .sum()
}

/// Each stretch is drawn independently and uniformly from the range.
pub fn gen_hyperelastic(spec: &HyperelasticSpec, seed: u64) -> Result<Splits, ExperimentError> {
    spec.validate()?;
    let make = |stream: u64, n: usize, (lo, hi): (f64, f64)| -> Result<Table, ExperimentError> {
        let mut rng = split_rng(seed, stream);
        let mut cols = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut w = Vec::with_capacity(n);
        for _ in 0..n {
            let l: [f64; 3] = std::array::from_fn(|_| rng.random_range(lo..=hi));
            for (col, v) in cols.iter_mut().zip(l) {
                col.push(v);
            }
            w.push(ogden(&spec.alpha, &spec.mu, l) + noise(&mut rng, spec.noise_sigma));
        }
        let names = ["l1", "l2", "l3"];
        let inputs = names.iter().map(|s| s.to_string()).zip(cols).collect();
        Table::new(names.iter().map(|s| s.to_string()).collect(), "w", Dataset::new(inputs, w)?)
    };
    let r = spec.ranges;
    let mut params = BTreeMap::new();
    for (p, (a, m)) in spec.alpha.iter().zip(&spec.mu).enumerate() {
        params.insert(format!("alpha{}", p + 1), *a);
        params.insert(format!("mu{}", p + 1), *m);
    }
    Ok(Splits {
        train: make(0, spec.n_train, r.train)?,
        test1: make(1, spec.n_test, r.test1)?,
        test2: make(2, spec.n_test, r.test2)?,
        test3: make(3, spec.n_test, r.test3)?,
        params,
        input_unit: "1",
        target_unit: "J",
        resampled: 0,
    })
}
