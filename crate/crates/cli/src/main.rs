use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use txpar::exec::Strategy;
use txpar::report::{self, CorpusSpec, ExperimentConfig, Format, InputSpec, PolicySpec, Report, RunMode};
use txpar::transforms::TransformStep;
use txpar::workload::{GasModel, MixComponent, Pattern};
use txpar::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "txpar", version, about = "Speedup bounds and OCC simulation for transaction batches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment config (JSON); flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated thread counts, e.g. 2,8,32.
    #[arg(long, global = true, value_delimiter = ',')]
    threads: Option<Vec<usize>>,
    /// Treat commutative adds as non-conflicting with each other.
    #[arg(long, global = true)]
    cadd_aware: bool,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Write report files here instead of printing them.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Args, Debug, Default)]
struct Input {
    /// Trace files.
    traces: Vec<PathBuf>,
    /// Generated corpus: `PATTERN:N[:COUNT]` or a JSON corpus spec
    /// (`@file` reads it from a file).
    #[arg(long = "gen")]
    generator: Option<String>,
    /// Transform step as JSON (or `@file`); repeat to chain.
    #[arg(long = "transform")]
    transforms: Vec<String>,
}

#[derive(Args, Debug, Default)]
struct SimArgs {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    baseline: Option<ModeArg>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a generated corpus as trace files.
    Generate(Input),
    /// Critical paths and bound speedups.
    Analyze(Input),
    /// Bound schedules with timelines.
    Bound(Input),
    /// Run an OCC scheduler over the corpus.
    Simulate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Apply transforms and write the rewritten traces.
    Transform(Input),
    /// Check OCC-DA determinism under randomized node timings.
    Probe {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Bucket speedups per thread count and variant.
    Histogram {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        buckets: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Bound,
    OccClassic,
    OccDetCommit,
    OccDa,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Bound => RunMode::Bound,
            ModeArg::OccClassic => RunMode::OccClassic,
            ModeArg::OccDetCommit => RunMode::OccDetCommit,
            ModeArg::OccDa => RunMode::OccDa,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    MinusOne,
    DepGraph,
}

impl From<PolicyArg> for PolicySpec {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::MinusOne => PolicySpec::MinusOne,
            PolicyArg::DepGraph => PolicySpec::DepGraph,
        }
    }
}

fn read_arg(text: &str) -> Result<String> {
    match text.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        }),
        None => Ok(text.to_owned()),
    }
}

fn shorthand_pattern(name: &str) -> Result<Pattern> {
    Ok(match name {
        "payments" => Pattern::Payments {
            gas: GasModel::fixed(21_000),
        },
        "token-distribution" => Pattern::TokenDistribution {
            senders: 1,
            track_total_supply: false,
            gas: GasModel::fixed(52_000),
        },
        "defi-fee" => Pattern::DefiFee {
            traders: 4,
            gas: GasModel::fixed(150_000),
        },
        "nft-mint" => Pattern::NftMint {
            gas: GasModel::fixed(120_000),
        },
        other => {
            return Err(Error::Validation(format!(
                "unknown pattern {other:?} (payments, token-distribution, defi-fee, nft-mint)"
            )))
        }
    })
}

fn parse_generator(spec: &str) -> Result<CorpusSpec> {
    let text = read_arg(spec)?;
    if text.trim_start().starts_with('{') {
        return serde_json::from_str(&text).map_err(|e| Error::Validation(format!("--gen: {e}")));
    }
    let parts: Vec<&str> = text.trim().split(':').collect();
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Validation(format!("--gen: {s:?} is not a count")))
    };
    match parts.as_slice() {
        [p, n] | [p, n, _] => Ok(CorpusSpec {
            components: vec![MixComponent::new(shorthand_pattern(p)?, 1.0)],
            n: num(n)?,
            n_min: None,
            count: parts.get(2).map(|c| num(c)).transpose()?.unwrap_or(1),
        }),
        _ => Err(Error::Validation(format!("--gen: expected PATTERN:N[:COUNT], got {text:?}"))),
    }
}

fn build_config(global: &Global, input: &Input) -> Result<ExperimentConfig> {
    let given = if !input.traces.is_empty() {
        Some(InputSpec::Traces(input.traces.clone()))
    } else {
        input.generator.as_deref().map(parse_generator).transpose()?.map(InputSpec::Generator)
    };
    let mut cfg = match (&global.config, given) {
        (Some(path), given) => {
            let mut cfg = ExperimentConfig::from_file(path)?;
            if let Some(i) = given {
                cfg.input = i;
            }
            cfg
        }
        (None, Some(i)) => ExperimentConfig::new(i),
        (None, None) => return Err(Error::Validation("no input: pass trace files, --gen, or --config".into())),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(t) = &global.threads {
        cfg.threads = t.clone();
    }
    if global.cadd_aware {
        cfg.cadd_aware = true;
    }
    if let Some(f) = global.format {
        cfg.format = match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        };
    }
    if let Some(out) = &global.out {
        cfg.out = Some(out.clone());
    }
    if global.sequential {
        cfg.strategy = Strategy::Sequential;
    }
    if !input.transforms.is_empty() {
        cfg.transforms = input
            .transforms
            .iter()
            .map(|t| {
                let text = read_arg(t)?;
                serde_json::from_str::<TransformStep>(&text)
                    .map_err(|e| Error::Validation(format!("--transform: {e}")))
            })
            .collect::<Result<_>>()?;
        cfg.variants.clear();
    }
    Ok(cfg)
}

fn apply_sim(cfg: &mut ExperimentConfig, sim: &SimArgs) {
    if let Some(m) = sim.mode {
        cfg.mode = m.into();
    }
    if let Some(b) = sim.baseline {
        cfg.baseline = Some(b.into());
    }
    if let Some(p) = sim.policy {
        cfg.policy = p.into();
    }
}

fn run(cli: &Cli) -> Result<(Report, Option<PathBuf>)> {
    let g = &cli.global;
    let (cfg, report) = match &cli.command {
        Command::Generate(input) => {
            let cfg = build_config(g, input)?;
            let r = report::generate(&cfg)?;
            (cfg, r)
        }
        Command::Analyze(input) => {
            let cfg = build_config(g, input)?;
            let r = report::analyze(&cfg)?;
            (cfg, r)
        }
        Command::Bound(input) => {
            let cfg = build_config(g, input)?;
            let r = report::bound(&cfg)?;
            (cfg, r)
        }
        Command::Simulate { input, sim } => {
            let mut cfg = build_config(g, input)?;
            apply_sim(&mut cfg, sim);
            if sim.mode.is_none() && cfg.mode == RunMode::Bound {
                cfg.mode = RunMode::OccDa;
            }
            let r = report::simulate(&cfg)?;
            (cfg, r)
        }
        Command::Transform(input) => {
            let cfg = build_config(g, input)?;
            let r = report::transform(&cfg)?;
            (cfg, r)
        }
        Command::Probe { input, policy, trials } => {
            let mut cfg = build_config(g, input)?;
            if let Some(p) = policy {
                cfg.policy = (*p).into();
            }
            if let Some(t) = trials {
                cfg.trials = *t;
            }
            let r = report::probe(&cfg)?;
            (cfg, r)
        }
        Command::Histogram { input, sim, buckets } => {
            let mut cfg = build_config(g, input)?;
            apply_sim(&mut cfg, sim);
            if buckets.is_some() {
                cfg.buckets = *buckets;
            }
            let r = report::histogram(&cfg)?;
            (cfg, r)
        }
    };
    Ok((report, cfg.out))
}

fn emit(report: &Report, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(dir) => {
            report.write_to(dir)?;
            for o in &report.outputs {
                println!("{}", dir.join(&o.name).display());
            }
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let many = report.outputs.len() > 1;
            let io = |e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            };
            for o in &report.outputs {
                if many {
                    writeln!(lock, "==> {} <==", o.name).map_err(io)?;
                }
                lock.write_all(o.contents.as_bytes()).map_err(io)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = run(&cli).and_then(|(report, out)| {
        emit(&report, out.as_ref())?;
        report.into_result()
    });
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("txpar: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
