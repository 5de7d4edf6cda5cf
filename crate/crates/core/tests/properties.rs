use num_rational::BigRational;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treegress::experiments::{gen_isotherm, prior_library, rmse, Isotherm, IsothermSpec, Table};
use treegress::inference::{derive_seed, expand_params, quantile, shrink_params, Dataset};
use treegress::prte::{prte_density, prte_density_exact, sample_tree, PriorSpec};
use treegress::pta::{compile, compile_exact, inside_outside, product, pta_eval};
use treegress::tree::{RankedSymbol, Tree};

/// All trees over a/0, b/0, g/1, f/2 with at most `max` nodes.
fn small_trees(max: usize) -> Vec<Tree> {
    let sym = |n: &str, r| RankedSymbol::new(n, r);
    let mut by_size: Vec<Vec<Tree>> = vec![Vec::new(); max + 1];
    for n in 1..=max {
        let mut out = Vec::new();
        if n == 1 {
            out.push(Tree::leaf(sym("a", 0)).unwrap());
            out.push(Tree::leaf(sym("b", 0)).unwrap());
        }
        if n >= 2 {
            for c in &by_size[n - 1] {
                out.push(Tree::new(sym("g", 1), vec![c.clone()]).unwrap());
            }
        }
        for left in 1..n.saturating_sub(1) {
            for l in &by_size[left] {
                for r in &by_size[n - 1 - left] {
                    out.push(Tree::new(sym("f", 2), vec![l.clone(), r.clone()]).unwrap());
                }
            }
        }
        by_size[n] = out;
    }
    by_size.into_iter().flatten().collect()
}

/// Positive integers turned into weights `k_i / Σk` written as fractions.
fn weights(ks: &[u32]) -> Vec<String> {
    let total: u32 = ks.iter().sum();
    ks.iter().map(|k| format!("{k}/{total}")).collect()
}

/// An iterated choice over the four symbols with `$x` feeding the branches.
fn random_prior(ks: &[u32; 4], inner: &[u32; 3]) -> String {
    let w = weights(ks);
    let v = weights(inner);
    format!(
        "iter $y {{ choice{{{}: f($x, $y), {}: g($y), {}: $x, {}: b}} }}.subst($x, choice{{{}: a, {}: b, {}: g(a)}})",
        w[0], w[1], w[2], w[3], v[0], v[1], v[2]
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn compiled_density_equals_oracle_exactly(ks in prop::array::uniform4(1u32..9), inner in prop::array::uniform3(1u32..9)) {
        let prior = PriorSpec::parse(&random_prior(&ks, &inner)).unwrap();
        let pta = compile_exact(&prior).unwrap();
        let mut mass = BigRational::from_integer(0.into());
        for t in small_trees(5) {
            let want = prte_density_exact(&prior, &t);
            prop_assert_eq!(pta_eval(&pta, &t).unwrap(), want.clone(), "tree {}", t);
            mass += want;
        }
        prop_assert!(mass <= BigRational::from_integer(1.into()));
    }

    #[test]
    fn printed_prior_reparses_identically(ks in prop::array::uniform4(1u32..9), inner in prop::array::uniform3(1u32..9)) {
        let prior = PriorSpec::parse(&random_prior(&ks, &inner)).unwrap();
        let text = prior.to_text();
        let again = PriorSpec::parse(&text).unwrap();
        prop_assert_eq!(&again, &prior);
        prop_assert_eq!(again.to_text(), text);
    }

    #[test]
    fn library_samples_agree_with_oracle_and_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, prior) in prior_library() {
            let pta = compile(&prior).unwrap();
            let t = sample_tree(&prior, &mut rng).unwrap();
            let d = pta_eval(&pta, &t).unwrap();
            prop_assert!(d > 0.0, "{} sampled a zero-density tree", name);
            prop_assert!((d - prte_density(&prior, &t)).abs() <= 1e-9);
            prop_assert_eq!(Tree::parse(&t.to_string(), &prior.alphabet).unwrap(), t);
        }
    }

    #[test]
    fn inside_outside_identity(seed in any::<u64>()) {
        let prior = treegress::experiments::library_prior("example1").unwrap();
        let pta = compile(&prior).unwrap();
        let t = sample_tree(&prior, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let io = inside_outside(&pta, &t).unwrap();
        for i in 0..io.addresses.len() {
            let s: f64 = io.inside[i].iter().zip(&io.outside[i]).map(|(a, b)| a * b).sum();
            prop_assert!((s - io.total).abs() <= 1e-12 * io.total.max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn product_multiplies(seed in any::<u64>(), ks in prop::array::uniform4(1u32..9), inner in prop::array::uniform3(1u32..9)) {
        let a = PriorSpec::parse(&random_prior(&ks, &inner)).unwrap();
        let b = PriorSpec::parse(&random_prior(&[ks[3], ks[2], ks[1], ks[0]], &inner)).unwrap();
        let (pa, pb) = (compile(&a).unwrap(), compile(&b).unwrap());
        let ab = product(&pa, &pb).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let t = sample_tree(&a, &mut rng).unwrap();
            let want = pta_eval(&pa, &t).unwrap() * pta_eval(&pb, &t).unwrap();
            prop_assert!((pta_eval(&ab, &t).unwrap() - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn expand_then_shrink_is_identity(
        theta in prop::collection::vec(-10.0f64..10.0, 0..5),
        extra in 0usize..4,
        u in prop::collection::vec(-10.0f64..10.0, 9),
    ) {
        let n = theta.len();
        let n_star = n + extra;
        let (grown, u_star, det_up) = expand_params(&theta, &u[..n_star], n_star).unwrap();
        prop_assert_eq!(grown.len(), n_star);
        let (back, u_back, det_down) = shrink_params(&grown, &u_star, n).unwrap();
        for (a, b) in back.iter().zip(&theta) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in u_back.iter().zip(&u[..n_star]) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!((det_up + det_down).abs() <= 1e-12);
    }

    #[test]
    fn rmse_of_constant_offset(xs in prop::collection::vec(-1e3f64..1e3, 1..30), delta in -100.0f64..100.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + delta).collect();
        let e = rmse(&shifted, &xs).unwrap();
        prop_assert!((e - delta.abs()).abs() <= 1e-9 * (1.0 + delta.abs()));
        prop_assert_eq!(rmse(&xs, &xs).unwrap(), 0.0);
        prop_assert_eq!(rmse(&shifted, &xs).unwrap(), rmse(&xs, &shifted).unwrap());
    }

    #[test]
    fn quantiles_are_ordered(mut xs in prop::collection::vec(-1e6f64..1e6, 1..50)) {
        xs.sort_by(f64::total_cmp);
        let (a, b, c) = (quantile(&xs, 0.05), quantile(&xs, 0.5), quantile(&xs, 0.95));
        prop_assert!(xs[0] <= a && a <= b && b <= c && c <= xs[xs.len() - 1]);
    }

    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec((any::<f64>(), any::<f64>()), 1..20)) {
        prop_assume!(rows.iter().all(|(a, b)| a.is_finite() && b.is_finite()));
        let (cs, ss): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        let data = Dataset::new([("c".to_string(), cs)].into(), ss).unwrap();
        let t = Table::new(vec!["c".into()], "s", data).unwrap();
        prop_assert_eq!(Table::read_csv(t.to_csv_string().as_bytes()).unwrap(), t);
    }

    #[test]
    fn generation_is_seed_deterministic(seed in any::<u64>(), which in 0usize..10) {
        let spec = IsothermSpec::new(Isotherm::ALL[which]);
        let a = gen_isotherm(&spec, seed).unwrap();
        prop_assert_eq!(&a, &gen_isotherm(&spec, seed).unwrap());
        prop_assert_eq!(a.train.len(), 20);
    }

    #[test]
    fn derived_seeds_differ(master in any::<u64>(), i in 0u64..1000) {
        prop_assert_ne!(derive_seed(master, i), derive_seed(master, i + 1));
    }
}
