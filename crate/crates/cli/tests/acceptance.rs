//! Acceptance checks, one line each. Runs without the libtest harness so the
//! lines always show up in `cargo test` output; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treegress::expr::SymbolicExpression;
use treegress::experiments::{
    dataset_metrics, gen_hyperelastic, gen_isotherm, library_prior, prior_library, HyperelasticSpec, Isotherm,
    IsothermSpec, Splits,
};
use treegress::inference::{
    expand_params, posterior_predict, run_chain, run_chain_with, shrink_params, FlatLikelihood, InferenceError,
    McmcConfig,
};
use treegress::prte::{prte_density, prte_density_exact, sample_tree, PriorSpec};
use treegress::pta::{compile, compile_exact, product, pta_eval, Pta};
use treegress::tree::{RankedAlphabet, RankedSymbol, Tree};

const E1: &str = "iter $y { choice{1/3: f($x, $y), 1/3: f($y, $x), 1/3: g($x)} }
  .subst($x, iter $x { choice{1/4: f($x, $x), 1/4: g($x), 1/4: a, 1/4: b} })";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn exact_density() -> Outcome {
    let prior = PriorSpec::parse(E1).unwrap();
    let exact = compile_exact(&prior).unwrap();
    let float = compile(&prior).unwrap();
    let t = Tree::parse("(g (g a))", &prior.alphabet).unwrap();
    let z = Tree::parse("(f b b)", &prior.alphabet).unwrap();
    let pta = pta_eval(&exact, &t).unwrap();
    let oracle = prte_density_exact(&prior, &t);
    let fl = pta_eval(&float, &t).unwrap();
    let zeros = pta_eval(&exact, &z).unwrap().is_zero() && prte_density_exact(&prior, &z).is_zero();
    let ok = pta == q(1, 48) && oracle == q(1, 48) && (fl - 1.0 / 48.0).abs() <= 1e-12 && zeros;
    outcome(ok, format!("pta {pta}, oracle {oracle}, float err {:.1e}, f(b,b) zero: {zeros}", (fl - 1.0 / 48.0).abs()))
}

/// Every tree over {a/0, g/1, f/2} with at most `max` nodes.
fn trees_up_to(max: usize, a: &RankedSymbol, g: &RankedSymbol, f: &RankedSymbol) -> Vec<Tree> {
    // by_size[n] holds all trees with exactly n nodes.
    let mut by_size: Vec<Vec<Tree>> = vec![Vec::new(); max + 1];
    for n in 1..=max {
        let mut out = Vec::new();
        if n == 1 {
            out.push(Tree::leaf(a.clone()).unwrap());
        } else {
            for c in &by_size[n - 1] {
                out.push(Tree::new(g.clone(), vec![c.clone()]).unwrap());
            }
            for left in 1..n - 1 {
                for l in &by_size[left] {
                    for r in &by_size[n - 1 - left] {
                        out.push(Tree::new(f.clone(), vec![l.clone(), r.clone()]).unwrap());
                    }
                }
            }
        }
        by_size[n] = out;
    }
    by_size.into_iter().flatten().collect()
}

/// Sum over all state assignments of the run weight.
fn brute_force(pta: &Pta<BigRational>, tree: &Tree) -> BigRational {
    let nodes = tree.nodes();
    let n = nodes.len();
    let k = pta.n_states();
    let index: BTreeMap<_, _> = nodes.iter().enumerate().map(|(i, (addr, _))| (addr.clone(), i)).collect();
    let mut total = BigRational::zero();
    let mut states = vec![0usize; n];
    loop {
        let mut w = pta.initial()[states[0]].clone();
        for (i, (addr, node)) in nodes.iter().enumerate() {
            if w.is_zero() {
                break;
            }
            let sym = pta.symbol_id(node.symbol()).unwrap();
            if node.is_leaf() {
                if !pta.is_final(states[i], sym) {
                    w = BigRational::zero();
                }
            } else {
                let kids: Vec<usize> = (0..node.children().len()).map(|c| states[index[&addr.child(c + 1)]]).collect();
                w *= pta
                    .row(states[i], sym)
                    .iter()
                    .find(|(c, _)| *c == kids)
                    .map_or_else(BigRational::zero, |(_, p)| p.clone());
            }
        }
        total += w;
        let mut d = 0;
        loop {
            if d == n {
                return total;
            }
            states[d] += 1;
            if states[d] < k {
                break;
            }
            states[d] = 0;
            d += 1;
        }
    }
}

fn oracle_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (name, prior) in prior_library() {
        let pta = compile(&prior).unwrap();
        for _ in 0..100 {
            let t = sample_tree(&prior, &mut rng).unwrap();
            let d = (pta_eval(&pta, &t).unwrap() - prte_density(&prior, &t)).abs();
            if !(d <= 1e-9) {
                return outcome(false, format!("{name}: |pta - oracle| = {d} on {t}"));
            }
            worst = worst.max(d);
        }
    }
    let (a, g, f) = (RankedSymbol::new("a", 0), RankedSymbol::new("g", 1), RankedSymbol::new("f", 2));
    let alphabet = RankedAlphabet::new([a.clone(), g.clone(), f.clone()]).unwrap();
    let pta = Pta::new(
        alphabet,
        (0..4).map(|i| format!("q{i}")).collect(),
        vec![q(1, 2), q(1, 3), q(1, 6), q(0, 1)],
        vec![
            (0, f.clone(), vec![1, 2], q(1, 4)),
            (0, f.clone(), vec![2, 2], q(1, 8)),
            (0, g.clone(), vec![0], q(1, 4)),
            (0, g.clone(), vec![3], q(1, 8)),
            (1, g.clone(), vec![2], q(1, 2)),
            (1, f.clone(), vec![0, 3], q(1, 5)),
            (2, g.clone(), vec![1], q(1, 3)),
            (3, f.clone(), vec![3, 3], q(1, 7)),
            (3, g.clone(), vec![0], q(2, 7)),
        ],
        vec![(1, a.clone()), (2, a.clone()), (3, a.clone())],
    )
    .unwrap();
    let trees = trees_up_to(4, &a, &g, &f);
    let mut nonzero = 0;
    for t in &trees {
        let want = brute_force(&pta, t);
        if pta_eval(&pta, t).unwrap() != want {
            return outcome(false, format!("run enumeration disagrees on {t}"));
        }
        nonzero += usize::from(!want.is_zero());
    }
    outcome(
        true,
        format!(
            "8 priors x 100 samples, max diff {worst:.1e}; {} trees enumerated exactly ({nonzero} non-zero)",
            trees.len()
        ),
    )
}

fn geometric_law() -> Outcome {
    let prior = library_prior("sum").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        let t = sample_tree(&prior, &mut rng).unwrap();
        let len = t.preorder().filter(|s| s.symbol().name() == "f").count();
        if len <= 3 {
            counts[len] += 1;
        }
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for l in 1..=3 {
        let p = 0.1f64.powi(l as i32 - 1) * 0.9;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let z = (counts[l] as f64 / n as f64 - p) / se;
        ok &= z.abs() <= 4.0;
        parts.push(format!("l={l}: z={z:+.2}"));
    }
    outcome(ok, parts.join(", "))
}

type JumpFn = fn(&[f64], &[f64], usize) -> Result<(Vec<f64>, Vec<f64>, f64), InferenceError>;

/// Central-difference Jacobian determinant of `f` at `x`.
fn numeric_log_det(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> f64 {
    let d = x.len();
    let h = 1e-5;
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[j] += h;
        xm[j] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        for i in 0..d {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac.determinant().abs().ln()
}

fn jacobians() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in 0..=5usize {
        for n_star in 0..=5usize {
            let x: Vec<f64> = (0..n + n_star).map(|i| 0.3 + 0.7 * i as f64).collect();
            let (theta, u) = x.split_at(n);
            let mut check = |map: JumpFn| {
                let (_, _, analytic) = map(theta, u, n_star).unwrap();
                let f = |v: &[f64]| {
                    let (th, uu) = v.split_at(n);
                    let (a, b, _) = map(th, uu, n_star).unwrap();
                    [a, b].concat()
                };
                let numeric = if x.is_empty() { 0.0 } else { numeric_log_det(&f, &x) };
                worst = worst.max((numeric - analytic).abs());
                cases += 1;
            };
            if n <= n_star {
                check(expand_params);
            }
            if n >= n_star {
                check(shrink_params);
            }
        }
    }
    outcome(worst <= 1e-6, format!("{cases} (map, n, n*) cases, max |analytic - numeric| = {worst:.1e}"))
}

fn toy_posterior() -> Outcome {
    let prior = library_prior("toy").unwrap();
    let weights: BTreeMap<&str, f64> = BTreeMap::from([
        ("(g a)", 1.0),
        ("(g b)", 3.0),
        ("(f a a)", 2.0),
        ("(f a b)", 0.5),
        ("(f b a)", 4.0),
        ("(f b b)", 1.0),
    ]);
    let mut exact: BTreeMap<String, f64> = BTreeMap::new();
    for (t, w) in &weights {
        let tree = Tree::parse(t, &prior.alphabet).unwrap();
        exact.insert(t.to_string(), prte_density(&prior, &tree) * w);
    }
    let z: f64 = exact.values().sum();
    exact.values_mut().for_each(|p| *p /= z);
    let lik = |e: &SymbolicExpression, _: f64| weights.get(e.tree().to_string().as_str()).map_or(f64::NEG_INFINITY, |w| w.ln());
    let mut tvs = Vec::new();
    for seed in [1, 2, 3] {
        let cfg = McmcConfig {
            burn_in: 1000,
            samples: 100_000,
            thin: 1,
            seed,
            ..McmcConfig::default()
        };
        let post = run_chain_with(&prior, &lik, &cfg).unwrap();
        let n = post.draws.len() as f64;
        let freq: BTreeMap<String, usize> = post.structure_frequencies().into_iter().collect();
        let tv: f64 = 0.5
            * exact
                .iter()
                .map(|(t, p)| (freq.get(t).copied().unwrap_or(0) as f64 / n - p).abs())
                .sum::<f64>();
        tvs.push(tv);
    }
    let ok = tvs.iter().all(|&tv| tv <= 0.1);
    outcome(ok, format!("TV per seed {:.4?} (limit 0.1)", tvs))
}

fn ks_exp1(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn prior_recovery() -> Outcome {
    let prior = library_prior("iso").unwrap();
    let cfg = McmcConfig {
        burn_in: 2000,
        samples: 500_000,
        thin: 50,
        seed: 9,
        ..McmcConfig::default()
    };
    let post = run_chain_with(&prior, &FlatLikelihood, &cfg).unwrap();
    let n = post.draws.len();
    let ks = ks_exp1(post.draws.iter().map(|d| d.sigma).collect());

    let mut freq = post.structure_frequencies();
    freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let batches = 50;
    let per = n / batches;
    let mut worst_z: f64 = 0.0;
    for (tree, count) in freq.iter().take(10) {
        let t = Tree::parse(tree, &prior.alphabet).unwrap();
        let p = prte_density(&prior, &t);
        let phat = *count as f64 / n as f64;
        // Batch means for the autocorrelated chain, floored at the i.i.d. error.
        let means: Vec<f64> = post
            .draws
            .chunks(per)
            .take(batches)
            .map(|c| c.iter().filter(|d| &d.expr == tree).count() as f64 / c.len() as f64)
            .collect();
        let m = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt().max((p * (1.0 - p) / n as f64).sqrt());
        worst_z = worst_z.max((phat - p).abs() / se);
    }
    outcome(
        ks < 0.05 && worst_z <= 3.0,
        format!("N={n}: KS(sigma, Exp(1)) = {ks:.4}; top-10 structures max |z| = {worst_z:.2}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Per-seed mean-over-draws RMSE on the named test sets.
fn fit_and_score(prior: &PriorSpec, splits: &Splits, seed: u64, sets: &[&str]) -> Vec<f64> {
    let cfg = McmcConfig {
        seed,
        ..McmcConfig::default()
    };
    let post = run_chain(prior, &splits.train.data, &cfg).unwrap();
    sets.iter()
        .map(|name| {
            let table = splits.named().into_iter().find(|(n, _)| n == name).unwrap().1;
            let pred = posterior_predict(&post, &table.data.inputs, None).unwrap();
            dataset_metrics(name, &pred, &table.data.targets).unwrap().rmse_mean
        })
        .collect()
}

fn langmuir() -> Outcome {
    let prior = library_prior("iso").unwrap();
    let (mut t1, mut t3) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let splits = gen_isotherm(&IsothermSpec::new(Isotherm::Langmuir), seed).unwrap();
        let r = fit_and_score(&prior, &splits, seed, &["test1", "test3"]);
        t1.push(r[0]);
        t3.push(r[1]);
    }
    let (m1, m3) = (median(t1.clone()), median(t3.clone()));
    outcome(
        m1 <= 5.0 && m3 <= 15.0,
        format!("median RMSE test1 {m1:.3} (<= 5), test3 {m3:.3} (<= 15); per seed {t1:.2?} / {t3:.2?}"),
    )
}

fn hyperelastic() -> Outcome {
    let prior = library_prior("hyp").unwrap();
    let mut t3 = Vec::new();
    for seed in 0..3 {
        let splits = gen_hyperelastic(&HyperelasticSpec::default(), seed).unwrap();
        t3.push(fit_and_score(&prior, &splits, seed, &["test3"])[0]);
    }
    let m = median(t3.clone());
    outcome(m <= 15.0, format!("median RMSE test3 {m:.3} J (<= 15); per seed {t3:.3?}"))
}

fn product_construction() -> Outcome {
    let pa = PriorSpec::parse(E1).unwrap();
    let pb = PriorSpec::parse("iter $x { choice{1/2: g($x), 1/4: f($x, a), 1/8: a, 1/8: b} }").unwrap();
    let (a, b) = (compile(&pa).unwrap(), compile(&pb).unwrap());
    let ab = product(&a, &b).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    for i in 0..50 {
        let t = sample_tree(if i % 2 == 0 { &pa } else { &pb }, &mut rng).unwrap();
        let want = pta_eval(&a, &t).unwrap() * pta_eval(&b, &t).unwrap();
        nonzero += usize::from(want > 0.0);
        worst = worst.max((pta_eval(&ab, &t).unwrap() - want).abs());
    }
    outcome(worst <= 1e-9, format!("50 trees ({nonzero} with non-zero product), max diff {worst:.1e}"))
}

fn run_cli(args: &[&str], dir: &Path) -> (Vec<u8>, i32) {
    let out = Command::new(env!("CARGO_BIN_EXE_treegress"))
        .args(args)
        .current_dir(dir)
        .env_remove("TREEGRESS_SEED")
        .output()
        .expect("binary runs");
    (out.stdout, out.status.code().unwrap_or(-1))
}

fn reproducibility() -> Outcome {
    let mut runs: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let mut record = BTreeMap::new();
        let commands: Vec<Vec<&str>> = vec![
            vec!["parse", "iso"],
            vec!["sample", "--prior", "iso", "--n", "20", "--seed", "3"],
            vec!["density", "--prior", "example1", "--tree", "(g (g a))", "--via", "both"],
            vec!["gen-data", "--task", "isotherm:langmuir", "--seed", "7", "--out-dir", "data"],
            vec!["gen-data", "--task", "hyperelastic", "--seed", "7", "--out-dir", "hyp"],
            vec!["fit", "--prior", "iso", "--train", "data/train.csv", "--out", "post.json", "--seed", "5", "--chains", "2"],
            vec!["report", "--posterior", "post.json", "--data", "data/test1.csv", "data/test3.csv", "--out-dir", "rep", "--noise", "--seed", "1"],
            vec!["dump-pta", "--prior", "toy"],
        ];
        for args in &commands {
            let (stdout, code) = run_cli(args, d);
            if code != 0 {
                return outcome(false, format!("`{}` exited with {code}", args.join(" ")));
            }
            record.insert(format!("stdout of {}", args[0..2].join(" ")), stdout);
        }
        for f in [
            "data/train.csv",
            "data/test1.csv",
            "data/test2.csv",
            "data/test3.csv",
            "hyp/train.csv",
            "post.json",
            "rep/metrics.csv",
            "rep/bands.csv",
        ] {
            record.insert(f.to_string(), std::fs::read(d.join(f)).unwrap());
        }
        runs.push(record);
    }
    let diffs: Vec<&String> = runs[0].keys().filter(|k| runs[0][*k] != runs[1][*k]).collect();
    outcome(diffs.is_empty(), format!("{} outputs compared, differing: {diffs:?}", runs[0].len()))
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("exact density", Duration::from_secs(1), exact_density),
        ("oracle equivalence", Duration::from_secs(30), oracle_equivalence),
        ("geometric length law", Duration::from_secs(30), geometric_law),
        ("jacobians", Duration::from_secs(10), jacobians),
        ("toy posterior", Duration::from_secs(120), toy_posterior),
        ("prior recovery", Duration::from_secs(120), prior_recovery),
        ("langmuir end-to-end", Duration::from_secs(1800), langmuir),
        ("hyper-elastic sanity", Duration::from_secs(1800), hyperelastic),
        ("product construction", Duration::from_secs(10), product_construction),
        ("reproducibility", Duration::from_secs(600), reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let took = start.elapsed();
        let pass = o.pass && took <= limit;
        failed += usize::from(!pass);
        println!(
            "[{}] {:>2}. {name}: {} ({:.2}s, limit {}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
