//! `dvoretzky`: command-line frontend for the toolkit.
//!
//! Exit codes: 0 on success, 2 on bad input, 3 when an experiment produced
//! failure rows (see `--failure-exit-code`), 1 on anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use dvoretzky::concentration::{
    empirical_tail, estimate_sphere_mean, expected_max_abs_gaussian, expected_max_abs_gaussian_quadrature,
    gaussian_norm_ratio_mean, levy_tail_bound, Center,
};
use dvoretzky::experiments::{
    csv_string, demo_system, emit_plot, run_experiment, write_csv, write_json, ExperimentConfig, ExperimentKind,
};
use dvoretzky::linf::{gaussian_linf_subspace, james_iterate, LinfOptions, VectorSystem};
use dvoretzky::nets::{build_net, cardinality_bound, verify_covering, EpsNet, NetBudget};
use dvoretzky::norms::{comparison_constants, parse_norm};
use dvoretzky::random::sample_subspace;
use dvoretzky::sections::{
    dvoretzky_rogers_basis, find_euclidean_section, kmax_search, measure_distortion, milman_candidate_dim,
    FinderOptions, KmaxOptions,
};
use dvoretzky::{Error, NormSpec, OrthoFrame, RandomSource};

#[derive(Parser)]
#[command(name = "dvoretzky", version, about = "Almost-Euclidean sections, nets and concentration experiments")]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    streams: Option<usize>,

    /// Experiment config (JSON). Missing fields take the experiment's
    /// defaults; `--seed` overrides the config seed.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Exit code used when an experiment reports failure rows (0 to ignore).
    #[arg(long, global = true, default_value_t = 3)]
    failure_exit_code: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Build or verify ε-nets on spheres.
    #[command(subcommand)]
    Net(NetCommand),
    /// Spherical means, tails and Gaussian maxima.
    #[command(subcommand)]
    Estimate(EstimateCommand),
    /// Find, measure or size almost-Euclidean sections.
    #[command(subcommand)]
    Section(SectionCommand),
    /// Greedy Dvoretzky–Rogers basis.
    DrBasis {
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
    },
    /// James iteration on a vector system.
    James {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        /// Asserted ℓ∞ basis constant of the input.
        #[arg(long)]
        asserted_l: Option<f64>,
    },
    /// ℓ∞ structure extraction.
    #[command(subcommand)]
    Linf(LinfCommand),
    /// Run a named experiment.
    Experiment {
        #[arg(value_enum)]
        kind: KindArg,
    },
}

#[derive(Args)]
struct NormArgs {
    /// Norm: l1, l2, linf, lp:<p>, figiel:<eps>, or a JSON spec.
    #[arg(long)]
    norm: String,
    /// Dimension (taken from the spec when it is JSON).
    #[arg(long)]
    n: Option<usize>,
}

impl NormArgs {
    fn spec(&self) -> dvoretzky::Result<NormSpec> {
        let n = match self.n {
            Some(n) => n,
            None if self.norm.trim_start().starts_with('{') => 0,
            None => return Err(Error::InvalidInput("--n is required for shorthand norms".into())),
        };
        let spec = parse_norm(&self.norm, n)?;
        if let Some(n) = self.n {
            if spec.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: spec.dim(),
                });
            }
        }
        Ok(spec)
    }
}

#[derive(Args)]
struct SystemArgs {
    /// VectorSystem JSON file.
    #[arg(long, conflicts_with = "generate")]
    system: Option<PathBuf>,
    /// Generated system: linf-basis, aligned, random-l2, perturbed-linf.
    #[arg(long)]
    generate: Option<String>,
    #[arg(long, default_value_t = 256)]
    m: usize,
}

#[derive(Subcommand)]
enum NetCommand {
    /// Greedy ε-separated net on S^{k-1}.
    Build {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps: f64,
        /// Stop after this many consecutive rejections per kept point.
        #[arg(long, default_value_t = 200)]
        per_point: usize,
        /// Stop after this many consecutive rejections in total (overrides --per-point).
        #[arg(long)]
        consecutive: Option<usize>,
    },
    /// Statistical covering check of a saved net.
    Verify {
        /// Net JSON written by `net build`.
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
}

#[derive(Subcommand)]
enum EstimateCommand {
    /// Mean and median of the norm on the sphere.
    Mean {
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Also run the Gaussian-ratio estimator.
        #[arg(long)]
        gaussian: bool,
    },
    /// Deviation tail against the Levy bound.
    Tail {
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        median: bool,
    },
    /// E max|g_i| by Monte Carlo and quadrature.
    Gaussmax {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
}

#[derive(Subcommand)]
enum SectionCommand {
    /// Certify a (1±ε)-Euclidean random section on a net.
    Find {
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long)]
        eps: f64,
        /// Section dimension; defaults to the candidate `c ε²/ln(3/ε) (E/b)² n`.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        c: f64,
        #[arg(long, default_value_t = 50)]
        attempts: usize,
    },
    /// Distortion of a random or given section.
    Measure {
        #[command(flatten)]
        norm: NormArgs,
        /// Dimension of a random section (ignored with --frame).
        #[arg(long)]
        k: Option<usize>,
        /// OrthoFrame JSON file.
        #[arg(long)]
        frame: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
    },
    /// Largest dimension of a (1+ε)-Euclidean random section.
    Kmax {
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 4)]
        attempts: usize,
    },
}

#[derive(Subcommand)]
enum LinfCommand {
    /// Gaussian block selection and greedy ℓ∞ sub-system.
    Extract {
        /// Use the unit vector basis of this norm as the system.
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long, default_value_t = 4)]
        target: usize,
        /// `L` with E‖∑gᵢxᵢ‖ ≤ L√(ln n); estimated when absent.
        #[arg(long)]
        l: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    LpScaling,
    LinfLogn,
    Figiel,
    Concentration,
    JamesDemo,
}

impl From<KindArg> for ExperimentKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::LpScaling => ExperimentKind::LpScaling,
            KindArg::LinfLogn => ExperimentKind::LinfLogn,
            KindArg::Figiel => ExperimentKind::Figiel,
            KindArg::Concentration => ExperimentKind::Concentration,
            KindArg::JamesDemo => ExperimentKind::JamesDemo,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.streams {
        if threads == 0 {
            eprintln!("error: --streams must be at least 1");
            return ExitCode::from(2);
        }
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            let input = err
                .chain()
                .any(|e| e.downcast_ref::<Error>().is_some_and(Error::is_input));
            ExitCode::from(if input { 2 } else { 1 })
        }
    }
}

fn rng(cli: &Cli) -> RandomSource {
    RandomSource::new(cli.seed.unwrap_or(0), 0)
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
        .map_err(Into::into)
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = read(path)?;
    serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

/// Flatten a JSON value into `path,value` lines.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(items) => items.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::String(s) => out.push((prefix.into(), s.clone())),
        other => out.push((prefix.into(), other.to_string())),
    }
}

fn render(cli: &Cli, value: &Value) -> anyhow::Result<String> {
    Ok(match cli.format {
        Format::Json => serde_json::to_string_pretty(value)? + "\n",
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", value, &mut rows);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            for (k, v) in rows {
                w.write_record([k, v])?;
            }
            String::from_utf8(w.into_inner()?)?
        }
    })
}

fn emit(cli: &Cli, name: &str, mut value: Value) -> anyhow::Result<u8> {
    if let Some(obj) = value.as_object_mut() {
        obj.insert("seed".into(), json!(cli.seed.unwrap_or(0)));
        obj.insert("streams".into(), json!(rayon::current_num_threads()));
    }
    let text = render(cli, &value)?;
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let ext = if cli.format == Format::Csv { "csv" } else { "json" };
            let path = dir.join(format!("{name}.{ext}"));
            std::fs::write(&path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(0)
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let mut rng = rng(cli);
    match &cli.command {
        Command::Net(NetCommand::Build { k, eps, per_point, consecutive }) => {
            let budget = match consecutive {
                Some(c) => NetBudget::Consecutive(*c),
                None => NetBudget::PerPoint(*per_point),
            };
            let net = build_net(*k, *eps, budget, &mut rng)?;
            let bound = cardinality_bound(*k, *eps);
            let mut v = serde_json::to_value(&net)?;
            v["cardinality_bound"] = json!(bound);
            v["min_separation"] = json!(net.min_separation());
            emit(cli, "net-build", v)
        }
        Command::Net(NetCommand::Verify { net, trials }) => {
            let net: EpsNet = parse_json(net)?;
            let report = verify_covering(&net, *trials, &mut rng)?;
            let v = json!({
                "k": net.k,
                "eps": net.eps,
                "size": net.len(),
                "cardinality_bound": cardinality_bound(net.k, net.eps),
                "min_separation": net.min_separation(),
                "covering": report,
            });
            emit(cli, "net-verify", v)
        }
        Command::Estimate(EstimateCommand::Mean { norm, samples, gaussian }) => {
            let spec = norm.spec()?;
            let n = spec.dim();
            let stats = estimate_sphere_mean(&spec, n, *samples, &mut rng.fork())?;
            let mut v = json!({ "norm": spec, "n": n, "sphere": stats });
            if *gaussian {
                v["gaussian_ratio"] = serde_json::to_value(gaussian_norm_ratio_mean(&spec, n, *samples, &mut rng)?)?;
            }
            emit(cli, "estimate-mean", v)
        }
        Command::Estimate(EstimateCommand::Tail { norm, eps, samples, median }) => {
            let spec = norm.spec()?;
            let n = spec.dim();
            let center = if *median { Center::Median } else { Center::Mean };
            let tail = empirical_tail(&spec, n, *eps, *samples, &mut rng, center)?;
            let lipschitz = comparison_constants(&spec)?.b_upper;
            let bound = levy_tail_bound(*eps, n, lipschitz)?;
            let v = json!({
                "norm": spec,
                "n": n,
                "eps": eps,
                "tail": tail,
                "levy_bound": bound,
                "dominated": tail.fraction <= bound + 3.0 * tail.sigma,
            });
            emit(cli, "estimate-tail", v)
        }
        Command::Estimate(EstimateCommand::Gaussmax { m, samples }) => {
            let mc = expected_max_abs_gaussian(*m, *samples, &mut rng)?;
            let v = json!({
                "m": m,
                "monte_carlo": mc,
                "quadrature": expected_max_abs_gaussian_quadrature(*m),
            });
            emit(cli, "estimate-gaussmax", v)
        }
        Command::Section(SectionCommand::Find { norm, eps, k, c, attempts }) => {
            let spec = norm.spec()?;
            let n = spec.dim();
            let opts = FinderOptions::default();
            let k = match k {
                Some(k) => *k,
                None => {
                    let mean = estimate_sphere_mean(&spec, n, opts.mean_samples, &mut rng.fork())?.mean;
                    let b = comparison_constants(&spec)?.b_upper;
                    milman_candidate_dim(mean, b, *eps, n, *c)?
                }
            };
            let outcome = find_euclidean_section(&spec, n, *eps, k, *attempts, &mut rng, &opts)?;
            emit(cli, "section-find", json!({ "norm": spec, "n": n, "k": k, "outcome": outcome }))
        }
        Command::Section(SectionCommand::Measure { norm, k, frame, samples, restarts }) => {
            let spec = norm.spec()?;
            let n = spec.dim();
            let frame: OrthoFrame = match (frame, k) {
                (Some(path), _) => parse_json(path)?,
                (None, Some(k)) => sample_subspace(n, *k, &mut rng.fork())?,
                (None, None) => bail!(Error::InvalidInput("give --k or --frame".into())),
            };
            let report = measure_distortion(&spec, &frame, *samples, *restarts, &mut rng)?;
            emit(cli, "section-measure", json!({ "norm": spec, "n": n, "k": frame.k(), "distortion": report }))
        }
        Command::Section(SectionCommand::Kmax { norm, eps, attempts }) => {
            let spec = norm.spec()?;
            let n = spec.dim();
            let report = kmax_search(&spec, n, *eps, *attempts, &mut rng, &KmaxOptions::default())?;
            emit(cli, "section-kmax", json!({ "norm": spec, "n": n, "eps": eps, "report": report }))
        }
        Command::DrBasis { norm, restarts } => {
            let spec = norm.spec()?;
            let n = spec.dim();
            let basis = dvoretzky_rogers_basis(&spec, n, *restarts, &mut rng)?;
            let v = json!({
                "norm": spec,
                "n": n,
                "violations": basis.violations(1e-6),
                "basis": basis,
            });
            emit(cli, "dr-basis", v)
        }
        Command::James { system, eps, asserted_l } => {
            let sys = load_system(system, &mut rng)?;
            let it = james_iterate(&sys, *eps, *asserted_l)?;
            emit(cli, "james", serde_json::to_value(&it)?)
        }
        Command::Linf(LinfCommand::Extract { norm, target, l }) => {
            let spec = norm.spec()?;
            let sys = VectorSystem::standard_basis(spec)?;
            let out = gaussian_linf_subspace(&sys, *target, *l, &LinfOptions::default(), &mut rng)?;
            emit(cli, "linf-extract", serde_json::to_value(&out)?)
        }
        Command::Experiment { kind } => run_named_experiment(cli, (*kind).into()),
    }
}

fn load_system(args: &SystemArgs, rng: &mut RandomSource) -> anyhow::Result<VectorSystem> {
    match (&args.system, &args.generate) {
        (Some(path), _) => {
            let sys: VectorSystem = parse_json(path)?;
            // Re-validate through the checking constructor.
            Ok(VectorSystem::new(sys.ambient, sys.vectors, sys.lower_norm_bound)?)
        }
        (None, Some(name)) => Ok(demo_system(name, args.m, rng)?),
        (None, None) => bail!(Error::InvalidInput("give --system or --generate".into())),
    }
}

fn run_named_experiment(cli: &Cli, kind: ExperimentKind) -> anyhow::Result<u8> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = read(path)?;
            let value: Value = serde_json::from_str(&text).map_err(Error::from)?;
            if let Some(name) = value.get("experiment").and_then(Value::as_str) {
                if name != kind.name() {
                    bail!(Error::InvalidInput(format!(
                        "config is for {name}, but the command asked for {kind}"
                    )));
                }
            }
            ExperimentConfig::default_for(kind).merged(&value)?
        }
        None => ExperimentConfig::default_for(kind),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let record = run_experiment(&config)?;
    let out_dir = cli.out.clone().or_else(|| config.output.clone().map(PathBuf::from));
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            let stem = dir.join(kind.name());
            write_csv(&record, &stem.with_extension("csv"))?;
            write_json(&record, &stem.with_extension("json"))?;
            match emit_plot(&record, &stem.with_extension("svg")) {
                Ok(()) => {}
                Err(e) => eprintln!("note: no plot written: {e}"),
            }
            eprintln!("wrote {}.{{csv,json,svg}}", stem.display());
        }
        None => match cli.format {
            Format::Csv => print!("{}", csv_string(&record)?),
            Format::Json => println!("{}", serde_json::to_string_pretty(&record)?),
        },
    }
    let failures = record.failures();
    if failures > 0 {
        eprintln!("{failures} grid point(s) failed");
        return Ok(cli.failure_exit_code);
    }
    Ok(0)
}
