//! `treegress`: priors, sampling, densities, data generation, fitting and
//! reporting from the command line.
//!
//! Exit codes: 0 success, 2 bad input, 3 runtime failure. Errors go to
//! stderr as one JSON object per line.

mod config;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treegress::experiments::{
    dataset_metrics, gen_hyperelastic, gen_isotherm, library_prior, library_source, HyperelasticSpec, IsothermSpec,
    Table, LIBRARY,
};
use treegress::inference::{posterior_predict, run_chains, GaussianLikelihood, InferenceError, Posterior};
use treegress::prte::{prte_density_exact, sample_expression, PriorSpec, PrteError};
use treegress::pta::{compile, compile_exact, pta_eval, PtaError};
use treegress::tree::Tree;

use config::RunConfig;

const SEED_ENV: &str = "TREEGRESS_SEED";

#[derive(Parser)]
#[command(name = "treegress", version, about = "Symbolic regression with tree-automaton priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a prior and print its canonical text.
    Parse {
        /// Prior file, or the name of a shipped prior.
        prior: String,
    },
    /// Draw expressions from a prior, one per line.
    Sample {
        #[arg(long)]
        prior: String,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Prior probability of a tree.
    Density {
        #[arg(long)]
        prior: String,
        /// Tree in prefix form, e.g. `(g (g a))`.
        #[arg(long)]
        tree: String,
        #[arg(long, value_enum, default_value_t = Via::Pta)]
        via: Via,
    },
    /// Write train.csv and test1..3.csv for a benchmark task.
    GenData {
        /// `isotherm:<name>` or `hyperelastic`.
        #[arg(long)]
        task: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Sample the posterior over expressions for a training set.
    Fit {
        #[arg(long)]
        prior: Option<String>,
        #[arg(long)]
        train: Option<PathBuf>,
        /// JSON run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Posterior file; defaults to `posterior.json` in the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Independent chains run in parallel and merged.
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Posterior-predictive error metrics and uncertainty bands.
    Report {
        #[arg(long)]
        posterior: PathBuf,
        /// One or more CSV datasets; each is named by its file stem.
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Add observation noise at each draw's σ to the bands.
        #[arg(long)]
        noise: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the compiled automaton as JSON.
    DumpPta {
        #[arg(long)]
        prior: String,
    },
    /// List the shipped priors.
    Library,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Via {
    Pta,
    Oracle,
    Both,
}

/// A failure with its exit code and a short machine-readable kind.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl Failure {
    fn input(kind: impl Into<String>, message: impl ToString) -> Self {
        Failure {
            code: 2,
            kind: kind.into(),
            message: message.to_string(),
        }
    }

    fn runtime(kind: impl Into<String>, message: impl ToString) -> Self {
        Failure {
            code: 3,
            kind: kind.into(),
            message: message.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::runtime("IoError", e)
    }
}

fn prte_kind(e: &PrteError) -> &'static str {
    match e {
        PrteError::Syntax { .. } => "SyntaxError",
        PrteError::WeightSum { .. } => "WeightSumError",
        PrteError::InvalidWeight { .. } => "InvalidWeight",
        PrteError::UnboundVariable { .. } => "UnboundVariable",
        PrteError::NonTerminatingIter { .. } => "NonTerminatingIter",
        PrteError::UnknownSymbol { .. } => "UnknownSymbol",
        PrteError::MarkerWithChildren { .. } => "MarkerWithChildren",
        PrteError::HoleInPrior { .. } => "HoleInPrior",
        PrteError::MissingParamPrior(_) => "MissingParamPrior",
        PrteError::MissingDiscreteSupport => "MissingDiscreteSupport",
        PrteError::BadDirective { .. } => "BadDirective",
        PrteError::Alphabet(_) => "AlphabetError",
        PrteError::DepthBudgetExhausted { .. } => "DepthBudgetExhausted",
    }
}

fn inference_failure(e: &InferenceError) -> Failure {
    let kind = format!("{e:?}");
    let kind = kind.split(['(', ' ', '{']).next().unwrap_or("InferenceError").to_string();
    match e {
        InferenceError::Config(_) | InferenceError::Data(_) | InferenceError::Prior(_) => Failure::input(kind, e),
        _ => Failure::runtime(kind, e),
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::input("BadSeed", format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Flag, then config, then the environment, then 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    Ok(env_seed()?.unwrap_or(0))
}

/// A path to a prior file, or the name of a shipped prior.
fn load_prior(arg: &str) -> Result<PriorSpec, Failure> {
    let path = Path::new(arg);
    let text = if path.is_file() {
        fs::read_to_string(path).map_err(|e| Failure::input("IoError", format!("{arg}: {e}")))?
    } else if let Some(text) = library_source(arg.strip_prefix("lib:").unwrap_or(arg)) {
        text.to_string()
    } else {
        let names: Vec<&str> = LIBRARY.iter().map(|(n, _)| *n).collect();
        return Err(Failure::input(
            "PriorNotFound",
            format!("`{arg}` is neither a file nor a shipped prior ({})", names.join(", ")),
        ));
    };
    PriorSpec::parse(&text).map_err(|e| Failure::input(prte_kind(&e), e))
}

fn load_table(path: &Path) -> Result<Table, Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::input("IoError", format!("{}: {e}", path.display())))?;
    Table::read_csv(file).map_err(|e| Failure::input("DataError", format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).map_err(|e| Failure::runtime("IoError", format!("{}: {e}", path.display())))
}

fn cmd_parse(prior: &str, out: &mut impl Write) -> Result<(), Failure> {
    let spec = load_prior(prior)?;
    write!(out, "{}", spec.to_text())?;
    Ok(())
}

fn cmd_sample(
    prior: &str,
    n: usize,
    seed: Option<u64>,
    max_depth: Option<usize>,
    out: &mut impl Write,
) -> Result<(), Failure> {
    let mut spec = load_prior(prior)?;
    if let Some(d) = max_depth {
        if d == 0 {
            return Err(Failure::input("BadArgument", "--max-depth must be positive"));
        }
        spec.max_depth = d;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(resolve_seed(seed, None)?);
    for _ in 0..n {
        let e = sample_expression(&spec, &mut rng).map_err(|e| match e {
            PrteError::DepthBudgetExhausted { .. } => Failure::runtime("DepthBudgetExhausted", e),
            e => Failure::runtime(prte_kind(&e), e),
        })?;
        writeln!(out, "{e}")?;
    }
    Ok(())
}

/// `p/q ≈ decimal`, or just the integer for 0 and 1.
fn format_probability(p: &num_rational::BigRational) -> String {
    if p.is_zero() || p.is_one() {
        return p.numer().to_string();
    }
    format!("{} ≈ {}", p, p.to_f64().unwrap_or(f64::NAN))
}

fn cmd_density(prior: &str, tree: &str, via: Via, out: &mut impl Write) -> Result<(), Failure> {
    let spec = load_prior(prior)?;
    // Accept a full expression line from `sample`, keeping only the tree.
    let tree_text = tree.split(" theta_c=").next().unwrap_or(tree);
    let t = Tree::parse(tree_text, &spec.alphabet).map_err(|e| Failure::input("AlphabetMismatch", e))?;
    let pta = || -> Result<_, Failure> {
        let a = compile_exact(&spec).map_err(|e| Failure::runtime("CompileError", e))?;
        pta_eval(&a, &t).map_err(|e| match e {
            PtaError::AlphabetMismatch(_) => Failure::input("AlphabetMismatch", e),
            e => Failure::runtime("EvalError", e),
        })
    };
    match via {
        Via::Pta => writeln!(out, "{}", format_probability(&pta()?))?,
        Via::Oracle => writeln!(out, "{}", format_probability(&prte_density_exact(&spec, &t)))?,
        Via::Both => {
            let a = pta()?;
            let b = prte_density_exact(&spec, &t);
            let diff = (a.to_f64().unwrap_or(f64::NAN) - b.to_f64().unwrap_or(f64::NAN)).abs();
            writeln!(out, "pta: {}", format_probability(&a))?;
            writeln!(out, "oracle: {}", format_probability(&b))?;
            writeln!(out, "difference: {diff}")?;
        }
    }
    Ok(())
}

fn cmd_gen_data(task: &str, seed: Option<u64>, out_dir: &Path, out: &mut impl Write) -> Result<(), Failure> {
    let seed = resolve_seed(seed, None)?;
    let splits = match task.split_once(':') {
        Some(("isotherm", name)) => {
            let iso = name.parse().map_err(|e| Failure::input("UnknownTask", e))?;
            gen_isotherm(&IsothermSpec::new(iso), seed)
        }
        None if task == "hyperelastic" => gen_hyperelastic(&HyperelasticSpec::default(), seed),
        _ => {
            return Err(Failure::input(
                "UnknownTask",
                format!("unknown task `{task}`; expected isotherm:<name> or hyperelastic"),
            ))
        }
    }
    .map_err(|e| Failure::runtime("GenerationError", e))?;
    fs::create_dir_all(out_dir)?;
    for (name, table) in splits.named() {
        write_file(&out_dir.join(format!("{name}.csv")), &table.to_csv_string())?;
    }
    writeln!(out, "task: {task}")?;
    writeln!(out, "seed: {seed}")?;
    for (k, v) in &splits.params {
        writeln!(out, "param {k} = {v}")?;
    }
    writeln!(out, "units: input {}, target {}", splits.input_unit, splits.target_unit)?;
    writeln!(out, "resampled inputs: {}", splits.resampled)?;
    Ok(())
}

struct FitArgs {
    prior: Option<String>,
    train: Option<PathBuf>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    chains: Option<usize>,
}

fn cmd_fit(args: FitArgs, out: &mut impl Write) -> Result<(), Failure> {
    let cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::input("IoError", format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            RunConfig::parse(&text, base).map_err(|e| Failure::input("ConfigError", e))?
        }
        None => RunConfig::parse("{}", Path::new(".")).expect("empty config"),
    };
    let prior_arg = args
        .prior
        .or(cfg.prior.clone())
        .ok_or_else(|| Failure::input("MissingArgument", "no prior given (--prior or config `prior`)"))?;
    let train = args
        .train
        .or(cfg.train.clone())
        .ok_or_else(|| Failure::input("MissingArgument", "no training data given (--train or config `train`)"))?;
    let out_path = args
        .out
        .or_else(|| cfg.out_dir.as_ref().map(|d| d.join("posterior.json")))
        .ok_or_else(|| Failure::input("MissingArgument", "no output given (--out or config `out_dir`)"))?;
    let chains = args.chains.or(cfg.chains).unwrap_or(1);
    if chains == 0 {
        return Err(Failure::input("BadArgument", "--chains must be at least 1"));
    }

    let prior = load_prior(&prior_arg)?;
    let table = load_table(&train)?;
    let mut mcmc = cfg.mcmc.clone();
    mcmc.seed = resolve_seed(args.seed, cfg.has_seed.then_some(cfg.mcmc.seed))?;
    mcmc.validate().map_err(|e| inference_failure(&e))?;
    table.data.check_variables(&prior).map_err(|e| inference_failure(&e))?;
    let lik = GaussianLikelihood::new(&table.data).map_err(|e| inference_failure(&e))?;

    let posterior = match run_chains(&prior, &lik, &mcmc, chains) {
        Ok(p) => p,
        Err(failure) => {
            let mut f = inference_failure(&failure.error);
            f.code = 3;
            if let Some(partial) = failure.partial {
                let path = out_path.with_extension("partial.json");
                write_file(&path, &partial.to_json())?;
                f.message = format!("{} (partial trace saved to {})", f.message, path.display());
            }
            return Err(f);
        }
    };
    write_file(&out_path, &posterior.to_json())?;
    summarize(&posterior, out)?;
    writeln!(out, "posterior written to {}", out_path.display())?;
    Ok(())
}

fn summarize(p: &Posterior, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "draws: {} (chains: {}, seed: {})", p.draws.len(), p.chains, p.seed)?;
    writeln!(out, "acceptance:")?;
    for (name, s) in &p.accept_stats {
        writeln!(
            out,
            "  {name:<7} {:.3} ({}/{} accepted, {} aborted)",
            s.rate(),
            s.accepted,
            s.proposed,
            s.aborted
        )?;
    }
    let mut freq = p.structure_frequencies();
    freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    writeln!(out, "top expressions:")?;
    let n = p.draws.len().max(1) as f64;
    for (tree, count) in freq.iter().take(5) {
        writeln!(out, "  {:.3} {tree}", *count as f64 / n)?;
    }
    writeln!(out, "sigma posterior mean: {}", p.sigma_mean())?;
    Ok(())
}

fn cmd_report(
    posterior: &Path,
    data: &[PathBuf],
    out_dir: &Path,
    noise: bool,
    seed: Option<u64>,
    out: &mut impl Write,
) -> Result<(), Failure> {
    let text = fs::read_to_string(posterior)
        .map_err(|e| Failure::input("IoError", format!("{}: {e}", posterior.display())))?;
    let post = Posterior::from_json(&text).map_err(|e| Failure::input("PosteriorError", e))?;
    let prior = post.prior_spec().map_err(|e| Failure::input("PosteriorError", e))?;
    let noise_seed = if noise { Some(resolve_seed(seed, None)?) } else { None };

    let mut metrics = String::from("dataset,rmse_mean,rmse_std,rmse_q50,rmse_pred,n_draws,excluded\n");
    let mut bands = String::new();
    let mut band_inputs: Option<Vec<String>> = None;
    let mut flagged = 0usize;
    for path in data {
        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        let table = load_table(path)?;
        table
            .data
            .check_variables(&prior)
            .map_err(|e| Failure::input("DataError", format!("{}: {e}", path.display())))?;
        match &band_inputs {
            None => {
                bands = format!("dataset,{},mean,q05,q50,q95,flagged\n", table.inputs.join(","));
                band_inputs = Some(table.inputs.clone());
            }
            Some(cols) if *cols != table.inputs => {
                return Err(Failure::input(
                    "DataError",
                    format!("{}: columns differ from the first dataset", path.display()),
                ))
            }
            Some(_) => {}
        }
        let pred = posterior_predict(&post, &table.data.inputs, noise_seed).map_err(|e| inference_failure(&e))?;
        let m = dataset_metrics(&name, &pred, &table.data.targets).map_err(|e| Failure::runtime("MetricError", e))?;
        metrics.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.dataset, m.rmse_mean, m.rmse_std, m.rmse_q50, m.rmse_pred, m.n_draws, m.excluded
        ));
        for (i, s) in pred.points.iter().enumerate() {
            let xs: Vec<String> = table.inputs.iter().map(|c| table.data.inputs[c][i].to_string()).collect();
            flagged += usize::from(s.is_flagged());
            bands.push_str(&format!(
                "{name},{},{},{},{},{},{}\n",
                xs.join(","),
                s.mean,
                s.q05,
                s.q50,
                s.q95,
                u8::from(s.is_flagged())
            ));
        }
    }
    fs::create_dir_all(out_dir)?;
    write_file(&out_dir.join("metrics.csv"), &metrics)?;
    write_file(&out_dir.join("bands.csv"), &bands)?;
    write!(out, "{metrics}")?;
    if flagged > 0 {
        writeln!(out, "{flagged} band rows flagged: no draw was finite there")?;
    }
    Ok(())
}

fn cmd_dump_pta(prior: &str, out: &mut impl Write) -> Result<(), Failure> {
    let spec = load_prior(prior)?;
    let pta = compile(&spec).map_err(|e| Failure::runtime("CompileError", e))?;
    let json = serde_json::to_string_pretty(&pta.dump()).map_err(|e| Failure::runtime("IoError", e))?;
    writeln!(out, "{json}")?;
    Ok(())
}

fn cmd_library(out: &mut impl Write) -> Result<(), Failure> {
    for (name, _) in LIBRARY {
        let spec = library_prior(name).map_err(|e| Failure::runtime("LibraryError", e))?;
        let vars: Vec<String> = spec.variables().iter().map(|v| v.name().to_string()).collect();
        writeln!(out, "{name}\tvariables: {}", if vars.is_empty() { "-".into() } else { vars.join(",") })?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Parse { prior } => cmd_parse(&prior, &mut out)?,
        Command::Sample {
            prior,
            n,
            seed,
            max_depth,
        } => cmd_sample(&prior, n, seed, max_depth, &mut out)?,
        Command::Density { prior, tree, via } => cmd_density(&prior, &tree, via, &mut out)?,
        Command::GenData { task, seed, out_dir } => cmd_gen_data(&task, seed, &out_dir, &mut out)?,
        Command::Fit {
            prior,
            train,
            config,
            out: out_path,
            seed,
            chains,
        } => cmd_fit(
            FitArgs {
                prior,
                train,
                config,
                out: out_path,
                seed,
                chains,
            },
            &mut out,
        )?,
        Command::Report {
            posterior,
            data,
            out_dir,
            noise,
            seed,
        } => cmd_report(&posterior, &data, &out_dir, noise, seed, &mut out)?,
        Command::DumpPta { prior } => cmd_dump_pta(&prior, &mut out)?,
        Command::Library => cmd_library(&mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let line = serde_json::json!({"error": f.kind, "message": f.message, "exit_code": f.code});
            eprintln!("{line}");
            ExitCode::from(f.code)
        }
    }
}
