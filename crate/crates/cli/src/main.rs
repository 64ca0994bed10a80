//! `ccdae`: conceptual distance, benchmarks and compression baselines from
//! the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccdae_core::backends::{
    train_ngram, Backend, BackendDescriptor, BackendError, BackendParameters, DEFAULT_ALPHA,
    DEFAULT_CACHE_WEIGHT, DEFAULT_ORDER,
};
use ccdae_core::baselines::{noise_csv, noise_experiment, Deflate, Pattern};
use ccdae_core::benchmark::{
    load_choices, load_pairs, run_choice_bench, run_similarity_bench, ScoreKind,
};
use ccdae_core::descgen::{
    beam_compose, best_single_description_curve, curve_csv, describe_capacity_grid,
    generate_pair_atoms, score_descriptions, BeamConfig, DEFAULT_ATOM_PROMPT,
};
use ccdae_core::pipeline::compare;
use ccdae_core::{CompareConfig, Error, LambdaGrid, LossMode, PcodeMode, Units};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "ccdae",
    version,
    about = "Conceptual distance through capacity-constrained descriptions"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Backend kind; inferred from the source flag when omitted.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    /// n-gram model file.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Remote server base URL.
    #[arg(long, global = true, env = "CCDAE_ENDPOINT")]
    endpoint: Option<String>,
    /// Fixture table (JSON).
    #[arg(long, global = true)]
    fixture: Option<PathBuf>,
    /// Mixture weight bound of the n-gram input cache.
    #[arg(long, global = true, default_value_t = DEFAULT_CACHE_WEIGHT)]
    cache_weight: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = UnitsArg::Nats)]
    units: UnitsArg,
    /// Output directory (for train-ngram: the model file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum BackendArg {
    Ngram,
    Remote,
    Table,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum UnitsArg {
    Nats,
    Bits,
}

impl From<UnitsArg> for Units {
    fn from(u: UnitsArg) -> Self {
        match u {
            UnitsArg::Nats => Units::Nats,
            UnitsArg::Bits => Units::Bits,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PcodeArg {
    Proposal,
    Lm,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LossArg {
    Encoder,
    Generative,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ScoreArg {
    Auc,
    Dc,
    Traj,
    Condlik,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum BenchKind {
    Pairs,
    Choice,
}

#[derive(Args, Debug, Clone)]
struct SamplingArgs {
    /// Descriptions sampled per input (default 20; 10 for choice benchmarks).
    #[arg(long)]
    samples: Option<usize>,
    /// Maximum description length in tokens (default 20; 10 for choice benchmarks).
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Lambda grid as start:stop:count.
    #[arg(long = "lambda", default_value = "0:100:200")]
    lambda: String,
    /// Upper capacity limit in nats, or `auto`.
    #[arg(long, default_value = "auto")]
    cmax: String,
    #[arg(long, default_value_t = 101)]
    capacity_points: usize,
    #[arg(long, value_enum, default_value_t = PcodeArg::Proposal)]
    pcode: PcodeArg,
    #[arg(long, value_enum, default_value_t = LossArg::Encoder)]
    loss: LossArg,
    /// Instruction placed before each conditioning context.
    #[arg(long)]
    prompt: Option<String>,
    /// Lambda at which explanations are ranked.
    #[arg(long, default_value_t = 1.0)]
    explain_lambda: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Conceptual distance between two items (file paths or literal text).
    Compare {
        a: String,
        b: String,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Similarity (pairs) or binary-choice benchmark.
    Bench {
        #[arg(value_enum)]
        kind: BenchKind,
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = ScoreArg::Auc)]
        score: ScoreArg,
        /// Capacity in nats for the `dc` score.
        #[arg(long)]
        capacity: Option<f64>,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Compression distance between noisy copies of a simple image.
    NcdDemo {
        #[arg(long, default_value_t = 0.1)]
        p: f64,
        /// Image side lengths; D = side².
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
        dims: Vec<usize>,
        #[arg(long, default_value = "disk")]
        pattern: String,
    },
    /// Trains a character n-gram model (written to --out).
    TrainNgram {
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Best single descriptions per capacity for two items.
    Describe {
        a: String,
        b: String,
        /// Atoms sampled per source.
        #[arg(long, default_value_t = 40)]
        atoms: usize,
        #[arg(long, default_value_t = 8)]
        beam: usize,
        #[arg(long, default_value_t = 10)]
        max_atoms: usize,
        /// Capacity grid size of the output table.
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long)]
        atom_prompt: Option<String>,
        /// Text whose similarity is subtracted from the beam score.
        #[arg(long)]
        negative_prompt: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        penalty: f64,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidInput(_) | Error::Parse { .. } | Error::CapacityOutOfRange { .. } => 2,
            Error::Backend(
                BackendError::Io { .. } | BackendError::Model(_) | BackendError::InvalidRequest(_),
            ) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Compare { a, b, sampling } => cmd_compare(g, a, b, sampling),
        Command::Bench {
            kind,
            data,
            score,
            capacity,
            sampling,
        } => cmd_bench(g, *kind, data, *score, *capacity, sampling),
        Command::NcdDemo { p, dims, pattern } => cmd_ncd_demo(g, *p, dims, pattern),
        Command::TrainNgram {
            corpus,
            order,
            alpha,
        } => cmd_train_ngram(g, corpus, *order, *alpha),
        Command::Describe {
            a,
            b,
            atoms,
            beam,
            max_atoms,
            points,
            atom_prompt,
            negative_prompt,
            penalty,
            sampling,
        } => {
            let opts = DescribeOpts {
                atoms: *atoms,
                beam: BeamConfig {
                    beam_width: *beam,
                    max_atoms: *max_atoms,
                    negative_penalty: *penalty,
                },
                points: *points,
                atom_prompt: atom_prompt.clone(),
                negative_prompt: negative_prompt.clone(),
            };
            cmd_describe(g, a, b, &opts, sampling)
        }
    }
}

fn descriptor(g: &Global) -> CliResult<BackendDescriptor> {
    let sources = [g.model.is_some(), g.endpoint.is_some(), g.fixture.is_some()];
    let kind = match g.backend {
        Some(k) => k,
        None => match sources {
            [true, false, false] => BackendArg::Ngram,
            [false, true, false] => BackendArg::Remote,
            [false, false, true] => BackendArg::Table,
            [false, false, false] => {
                return Err(Failure::usage(
                    "no backend source: pass --model, --endpoint or --fixture",
                ))
            }
            _ => {
                return Err(Failure::usage(
                    "pass exactly one of --model, --endpoint, --fixture",
                ))
            }
        },
    };
    let d = match kind {
        BackendArg::Ngram => {
            let model = g
                .model
                .as_ref()
                .ok_or_else(|| Failure::usage("--backend ngram needs --model"))?;
            let mut d = BackendDescriptor::ngram(model);
            if let BackendParameters::Ngram { cache_weight, .. } = &mut d.parameters {
                *cache_weight = g.cache_weight;
            }
            d
        }
        BackendArg::Remote => BackendDescriptor::remote(g.endpoint.as_ref().ok_or_else(|| {
            Failure::usage("--backend remote needs --endpoint or CCDAE_ENDPOINT")
        })?),
        BackendArg::Table => BackendDescriptor::table(
            g.fixture
                .as_ref()
                .ok_or_else(|| Failure::usage("--backend table needs --fixture"))?,
        ),
    };
    let extra = match kind {
        BackendArg::Ngram => g.fixture.is_some(),
        BackendArg::Remote => g.model.is_some() || g.fixture.is_some(),
        BackendArg::Table => g.model.is_some(),
    };
    if extra {
        return Err(Failure::usage(
            "pass exactly one of --model, --endpoint, --fixture",
        ));
    }
    Ok(d)
}

fn build_backend(g: &Global) -> CliResult<Box<dyn Backend>> {
    Ok(descriptor(g)?.build()?)
}

fn compare_config(g: &Global, s: &SamplingArgs, base: CompareConfig) -> CliResult<CompareConfig> {
    let lambda_grid: LambdaGrid = s
        .lambda
        .parse()
        .map_err(|e: Error| Failure::usage(e.to_string()))?;
    let c_max =
        match s.cmax.as_str() {
            "auto" => None,
            v => Some(v.parse::<f64>().map_err(|_| {
                Failure::usage(format!("--cmax '{v}' is neither 'auto' nor a number"))
            })?),
        };
    let config = CompareConfig {
        samples_per_input: s.samples.unwrap_or(base.samples_per_input),
        max_tokens: s.max_tokens.unwrap_or(base.max_tokens),
        temperature: s.temperature,
        seed: g.seed,
        pcode_mode: match s.pcode {
            PcodeArg::Proposal => PcodeMode::ProposalMix,
            PcodeArg::Lm => PcodeMode::LmCode,
        },
        loss_mode: match s.loss {
            LossArg::Encoder => LossMode::EncoderOnly,
            LossArg::Generative => LossMode::Generative,
        },
        lambda_grid,
        c_max,
        capacity_points: s.capacity_points,
        prompt: s.prompt.clone(),
        explain_lambda: s.explain_lambda,
        ..base
    };
    config.validate()?;
    Ok(config)
}

/// Reads `arg` as a file when it names one, otherwise uses it verbatim.
fn item(arg: &str) -> CliResult<String> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read {arg}: {e}")))?;
        Ok(text.trim_end_matches(['\n', '\r']).to_string())
    } else {
        Ok(arg.to_string())
    }
}

fn out_dir(g: &Global) -> CliResult<PathBuf> {
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Failure {
        code: 1,
        message: format!("cannot create {}: {e}", dir.display()),
    })?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Failure {
        code: 1,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn cmd_compare(g: &Global, a: &str, b: &str, s: &SamplingArgs) -> CliResult<()> {
    let config = compare_config(g, s, CompareConfig::default())?;
    let backend = build_backend(g)?;
    let (x1, x2) = (item(a)?, item(b)?);
    let report = compare(&x1, &x2, backend.as_ref(), &config)?;
    let units = Units::from(g.units);
    let curve = report.curve.in_units(units);
    let dir = out_dir(g)?;
    write(&dir.join("curve.csv"), &curve.to_csv())?;
    write(&dir.join("report.json"), &report.to_json(units))?;
    write(&dir.join("explanations.txt"), &report.explanation_table())?;
    println!("auc {:.6}", curve.auc);
    Ok(())
}

fn cmd_bench(
    g: &Global,
    kind: BenchKind,
    data: &Path,
    score: ScoreArg,
    capacity: Option<f64>,
    s: &SamplingArgs,
) -> CliResult<()> {
    let base = match kind {
        BenchKind::Pairs => CompareConfig::default(),
        BenchKind::Choice => CompareConfig::choice_defaults(),
    };
    let config = compare_config(g, s, base)?;
    let score = match score {
        ScoreArg::Auc => ScoreKind::Auc,
        ScoreArg::Dc => ScoreKind::DAtC {
            capacity: capacity.ok_or_else(|| Failure::usage("--score dc needs --capacity"))?,
        },
        ScoreArg::Traj => ScoreKind::Traj,
        ScoreArg::Condlik => ScoreKind::CondLik,
    };
    let backend = build_backend(g)?;
    let dir = out_dir(g)?;
    match kind {
        BenchKind::Pairs => {
            let loaded = load_pairs(data)?;
            let report = run_similarity_bench(&loaded.records, backend.as_ref(), &config, score)?;
            write(&dir.join("bench.csv"), &report.to_csv())?;
            write(&dir.join("bench_report.json"), &to_json(&report))?;
            println!("rho_x100 {:.2}", report.rho_x100);
        }
        BenchKind::Choice => {
            let loaded = load_choices(data)?;
            let report = run_choice_bench(&loaded.records, backend.as_ref(), &config, score)?;
            write(&dir.join("choice.csv"), &report.to_csv())?;
            write(&dir.join("choice_report.json"), &to_json(&report))?;
            println!("accuracy {:.4}", report.accuracy);
        }
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn cmd_ncd_demo(g: &Global, p: f64, dims: &[usize], pattern: &str) -> CliResult<()> {
    let pattern: Pattern = pattern.parse().map_err(Failure::usage)?;
    if !(p > 0.0 && p <= 0.5) {
        return Err(Failure::usage(format!("--p must lie in (0, 0.5], got {p}")));
    }
    if dims.is_empty() {
        return Err(Failure::usage("--dims is empty"));
    }
    let points = noise_experiment(pattern, p, dims, g.seed, &Deflate)?;
    let dir = out_dir(g)?;
    write(&dir.join("ncd.csv"), &noise_csv(&points))?;
    let last = points.last().expect("dims nonempty");
    println!(
        "D={} ncd_measured {:.4} ncd_predicted {:.4}",
        last.dimension, last.ncd, last.predicted
    );
    Ok(())
}

fn cmd_train_ngram(g: &Global, corpus: &Path, order: usize, alpha: f64) -> CliResult<()> {
    let out = g
        .out
        .as_ref()
        .ok_or_else(|| Failure::usage("train-ngram needs --out <model file>"))?;
    let text = fs::read_to_string(corpus)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", corpus.display())))?;
    let model = train_ngram(&text, order, alpha)?;
    write(out, &model.to_text())?;
    println!(
        "trained order-{} model over {} symbols -> {}",
        model.order(),
        model.symbol_count(),
        out.display()
    );
    Ok(())
}

struct DescribeOpts {
    atoms: usize,
    beam: BeamConfig,
    points: usize,
    atom_prompt: Option<String>,
    negative_prompt: Option<String>,
}

fn cmd_describe(
    g: &Global,
    a: &str,
    b: &str,
    opts: &DescribeOpts,
    s: &SamplingArgs,
) -> CliResult<()> {
    let mut config = compare_config(g, s, CompareConfig::default())?;
    config.pcode_mode = PcodeMode::LmCode;
    let backend = build_backend(g)?;
    let backend = backend.as_ref();
    let (x1, x2) = (item(a)?, item(b)?);
    let prompt = opts
        .atom_prompt
        .clone()
        .unwrap_or_else(|| DEFAULT_ATOM_PROMPT.to_string());
    let atoms = generate_pair_atoms(backend, &x1, &x2, opts.atoms, Some(&prompt), &config)?;
    log::info!("{} atoms", atoms.len());

    let mut texts: Vec<String> = Vec::new();
    let negative = |t: &str| -> ccdae_core::Result<f64> {
        match &opts.negative_prompt {
            Some(n) => Ok(backend
                .cond_logprob(n, None, &ccdae_core::Description::complete(t))?
                .total),
            None => Ok(0.0),
        }
    };
    for x in [&x1, &x2] {
        let proxy = |t: &str| -> ccdae_core::Result<f64> {
            let d = ccdae_core::Description::complete(t);
            let own = backend.cond_logprob(x, config.prompt.as_deref(), &d)?.total;
            let a1 = backend
                .cond_logprob(&x1, config.prompt.as_deref(), &d)?
                .total;
            let a2 = backend
                .cond_logprob(&x2, config.prompt.as_deref(), &d)?
                .total;
            Ok(own - ccdae_core::numeric::log_mean_exp2(a1, a2))
        };
        for level in beam_compose(&atoms, &proxy, Some(&negative), opts.beam)? {
            texts.extend(level.into_iter().map(|e| e.text));
        }
    }
    texts.sort();
    texts.dedup();
    let scored = score_descriptions(&texts, backend, &x1, &x2, &config)?;
    let grid = describe_capacity_grid(&scored, opts.points);
    let rows = best_single_description_curve(&scored, &grid);
    let dir = out_dir(g)?;
    write(
        &dir.join("describe.csv"),
        &curve_csv(&rows, Units::from(g.units).scale()),
    )?;
    println!(
        "{} candidate descriptions, {} capacity rows",
        scored.len(),
        rows.len()
    );
    Ok(())
}
