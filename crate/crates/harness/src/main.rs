use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deltasketch::hashing::derive_seed;
use deltasketch::heavy_hitters::HhMode;
use deltasketch::stream::{
    generate_stream, write_stream, GenSpec, Norm, Shape, StreamConfig, StreamKind,
};
use deltasketch_harness::{
    emit_tradeoff_table, read_summary, run_experiment, AlgorithmSpec, ExperimentSpec, HarnessError,
    L1Mode, Result, StreamSource,
};

/// Tag separating stream-generation seeds from sketch seeds.
const GEN_TAG: u64 = 0x0067_656e;

#[derive(Parser)]
#[command(
    name = "deltasketch",
    version,
    about = "Run bounded-deletion sketch experiments"
)]
struct Cli {
    /// Root of every random draw.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// JSON-lines report path.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    trials: u64,
    /// Record wall time per trial; reports stop being byte-reproducible.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct StreamArgs {
    /// Stream file; generation flags are ignored when given.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 1 << 12)]
    n: u64,
    /// Unit-expanded stream length.
    #[arg(long, default_value_t = 100_000)]
    length: u64,
    /// α of the generated stream; defaults to the sketch's α.
    #[arg(long)]
    stream_alpha: Option<f64>,
    /// l0 or l1; defaults to the norm the algorithm assumes.
    #[arg(long)]
    norm: Option<String>,
    #[arg(long, default_value = "uniform")]
    shape: String,
    #[arg(long, default_value = "strict")]
    kind: String,
    #[arg(long, default_value_t = 1)]
    max_delta: u64,
    /// Final support size.
    #[arg(long)]
    support: Option<u64>,
    #[arg(long)]
    deletion_fraction: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stream file.
    Gen {
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
        /// Output path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// L1 heavy hitters.
    Hh {
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
        /// strict or general; follows the stream kind when absent.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Sampled Countsketch point queries.
    Csss {
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long, default_value_t = 64)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
    },
    /// Inner product of the stream with a second stream.
    Ip {
        #[command(flatten)]
        stream: StreamArgs,
        /// File for the second stream; generated like the first when absent.
        #[arg(long)]
        input2: Option<PathBuf>,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
        #[arg(long)]
        base: Option<u64>,
    },
    /// L1 sampling.
    L1sample {
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// L1 norm estimation.
    L1est {
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value = "strict")]
        mode: String,
        #[arg(long)]
        base: Option<u64>,
    },
    /// L0 estimation.
    L0est {
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
        /// Bins-per-row constant.
        #[arg(long)]
        c_k: Option<f64>,
    },
    /// Support sampling.
    Suppsample {
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
    },
    /// Re-run a serialized experiment spec.
    Run { spec: PathBuf },
    /// CSV trade-off table from report files.
    Table {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Output path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse<T: std::str::FromStr>(what: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| HarnessError::InvalidSpec(format!("unknown {what} `{v}`")))
}

impl StreamArgs {
    fn gen_spec(&self, alpha: f64, default_norm: Norm, seed: u64) -> Result<GenSpec> {
        let norm = match self.norm.as_deref() {
            None => default_norm,
            Some("l0") => Norm::L0,
            Some("l1") => Norm::L1,
            Some(other) => {
                return Err(HarnessError::InvalidSpec(format!("unknown norm `{other}`")))
            }
        };
        let shape = match self.shape.as_str() {
            "uniform" => Shape::Uniform,
            "zipf" => Shape::Zipf,
            "single-heavy" => Shape::SingleHeavy,
            "adversarial-cancel" => Shape::AdversarialCancel,
            other => {
                return Err(HarnessError::InvalidSpec(format!(
                    "unknown shape `{other}`"
                )))
            }
        };
        let kind: StreamKind = parse("stream kind", &self.kind)?;
        let config = StreamConfig::new(self.n, self.length, self.max_delta, kind)?;
        let mut g = GenSpec::new(
            config,
            self.stream_alpha.unwrap_or(alpha),
            norm,
            self.length,
            shape,
            seed,
        );
        g.support = self.support;
        g.deletion_fraction = self.deletion_fraction;
        Ok(g)
    }

    fn source(&self, alpha: f64, default_norm: Norm, seed: u64) -> Result<StreamSource> {
        Ok(match &self.input {
            Some(path) => StreamSource::File { path: path.clone() },
            None => StreamSource::Generated(self.gen_spec(alpha, default_norm, seed)?),
        })
    }
}

fn writer(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            HarnessError::Io {
                path: p.display().to_string(),
                source: e,
            }
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn experiment(cli: &Cli) -> Result<Option<ExperimentSpec>> {
    let gen_seed = derive_seed(cli.seed, GEN_TAG);
    let (algorithm, stream) = match &cli.command {
        Command::Gen { stream, alpha, out } => {
            let g = generate_stream(&stream.gen_spec(*alpha, Norm::L1, gen_seed)?)?;
            let mut w = writer(out)?;
            write_stream(&mut w, &g.config, &g.updates)?;
            w.flush().map_err(|e| HarnessError::Io {
                path: "stream".into(),
                source: e,
            })?;
            return Ok(None);
        }
        Command::Table { reports, out } => {
            let summaries = reports
                .iter()
                .map(|p| read_summary(p))
                .collect::<Result<Vec<_>>>()?;
            emit_tradeoff_table(&summaries, writer(out)?)?;
            return Ok(None);
        }
        Command::Run { spec } => {
            let f = File::open(spec).map_err(|e| HarnessError::Io {
                path: spec.display().to_string(),
                source: e,
            })?;
            let mut s: ExperimentSpec = serde_json::from_reader(io::BufReader::new(f))?;
            if cli.report.is_some() {
                s.output = cli.report.clone();
            }
            return Ok(Some(s));
        }
        Command::Hh {
            stream,
            eps,
            alpha,
            mode,
        } => {
            let mode = mode
                .as_deref()
                .map(|m| parse::<HhMode>("hh mode", m))
                .transpose()?;
            (
                AlgorithmSpec::Hh {
                    eps: *eps,
                    alpha: *alpha,
                    mode,
                },
                stream.source(*alpha, Norm::L1, gen_seed)?,
            )
        }
        Command::Csss {
            stream,
            k,
            eps,
            alpha,
        } => (
            AlgorithmSpec::Csss {
                k: *k,
                eps: *eps,
                alpha: *alpha,
            },
            stream.source(*alpha, Norm::L1, gen_seed)?,
        ),
        Command::Ip {
            stream,
            input2,
            eps,
            alpha,
            base,
        } => {
            let second = match input2 {
                Some(path) => StreamSource::File { path: path.clone() },
                None => {
                    let mut g = stream.clone();
                    g.input = None;
                    g.source(*alpha, Norm::L1, derive_seed(gen_seed, 2))?
                }
            };
            (
                AlgorithmSpec::Ip {
                    eps: *eps,
                    alpha: *alpha,
                    base: *base,
                    second,
                },
                stream.source(*alpha, Norm::L1, gen_seed)?,
            )
        }
        Command::L1sample {
            stream,
            eps,
            alpha,
            delta,
        } => (
            AlgorithmSpec::L1Sample {
                eps: *eps,
                alpha: *alpha,
                delta: *delta,
            },
            stream.source(*alpha, Norm::L1, gen_seed)?,
        ),
        Command::L1est {
            stream,
            eps,
            alpha,
            delta,
            mode,
            base,
        } => (
            AlgorithmSpec::L1Est {
                eps: *eps,
                alpha: *alpha,
                delta: *delta,
                mode: mode.parse::<L1Mode>()?,
                base: *base,
            },
            stream.source(*alpha, Norm::L1, gen_seed)?,
        ),
        Command::L0est {
            stream,
            eps,
            alpha,
            c_k,
        } => (
            AlgorithmSpec::L0Est {
                eps: *eps,
                alpha: *alpha,
                c_k: *c_k,
            },
            stream.source(*alpha, Norm::L0, gen_seed)?,
        ),
        Command::Suppsample {
            stream,
            k,
            delta,
            alpha,
        } => (
            AlgorithmSpec::SuppSample {
                k: *k,
                delta: *delta,
                alpha: *alpha,
            },
            stream.source(*alpha, Norm::L0, gen_seed)?,
        ),
    };
    let mut spec = ExperimentSpec::new(algorithm, stream, cli.trials, cli.seed);
    spec.output = cli.report.clone();
    spec.timing = cli.timing;
    Ok(Some(spec))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = experiment(&cli).and_then(|spec| match spec {
        None => Ok(()),
        Some(spec) => {
            let report = run_experiment(&spec)?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
