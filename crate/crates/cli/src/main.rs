//! `patch-defense` command-line tool.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 configuration or invalid
//! parameters, 5 image format, dimension or numeric failure.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use patch_defense::bench::{
    evaluate, generate_case, patched_corpus, BaseKind, CorpusFile, EvalOptions, PatchKind,
    SyntheticSpec,
};
use patch_defense::image_io::{encode_image, write_atomic, OutputFormat};
use patch_defense::pipeline::StageTimings;
use patch_defense::{defend, load_image, save_image, Error, PipelineConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_CONFIG: u8 = 4;
const EXIT_DATA: u8 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "patch-defense",
    version,
    about = "Detect and suppress adversarial patches in images",
    after_help = "Exit codes: 0 success, 2 usage, 3 I/O, 4 config/parameters, 5 format/dimension/numeric."
)]
struct Cli {
    /// Worker threads [default: number of cores]
    #[arg(long, global = true, value_name = "N", help_heading = "Global options")]
    workers: Option<usize>,

    /// More log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count, help_heading = "Global options")]
    verbose: u8,

    /// Only log errors
    #[arg(
        short,
        long,
        global = true,
        conflicts_with = "verbose",
        help_heading = "Global options"
    )]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Defend one image and write the processed result
    Defend {
        /// Input image (.png, .ppm, .pgm, .pnm, .jpg)
        input: PathBuf,
        /// Output image (.png, .ppm, .pgm, .pnm)
        #[arg(short, long)]
        output: PathBuf,
        /// Also write a binary mask of the flagged windows
        #[arg(long, value_name = "PATH")]
        mask: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineFlags,
    },
    /// Print per-chunk anomaly scores, highest first
    Score {
        /// Input image (.png, .ppm, .pgm, .pnm, .jpg)
        input: PathBuf,
        #[command(flatten)]
        pipeline: PipelineFlags,
    },
    /// Generate a synthetic test image
    Synth {
        /// Output image (.png, .ppm, .pgm, .pnm)
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        spec: SynthFlags,
    },
    /// Run the detection benchmark over a synthetic corpus
    Bench {
        /// Report file, one JSON record per line
        #[arg(short, long)]
        output: PathBuf,
        /// Corpus file (TOML with [[case]] entries and/or a [generate] section)
        #[arg(long, value_name = "PATH", conflicts_with_all = ["count", "corpus_seed"])]
        corpus: Option<PathBuf>,
        /// Size of the built-in patched corpus
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Seed of the built-in patched corpus
        #[arg(long, default_value_t = 1000)]
        corpus_seed: u64,
        /// Evaluate cases one at a time for cleaner timings
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        pipeline: PipelineFlags,
    },
}

#[derive(Args, Debug, Default)]
struct PipelineFlags {
    /// Pipeline config file (TOML)
    #[arg(short, long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Forest seed
    #[arg(long)]
    seed: Option<u64>,
    /// Window size in pixels
    #[arg(long)]
    kernel: Option<usize>,
    /// Window stride in pixels
    #[arg(long)]
    stride: Option<usize>,
    /// Trees in the forest
    #[arg(long)]
    trees: Option<usize>,
    /// Share of windows flagged (at least one)
    #[arg(long, value_name = "FRACTION")]
    outlier_fraction: Option<f64>,
    /// Singular-value mass kept when mitigating
    #[arg(long, value_name = "FRACTION")]
    info: Option<f64>,
    /// Histogram bins for mutual information
    #[arg(long)]
    bins: Option<usize>,
    /// Attributes tried per split [default: all]
    #[arg(long)]
    k_attrs: Option<usize>,
}

impl PipelineFlags {
    /// Defaults, then the config file, then explicit flags.
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.kernel {
            cfg.kernel = v;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if let Some(v) = self.trees {
            cfg.trees = v;
        }
        if let Some(v) = self.outlier_fraction {
            cfg.outlier_fraction = v;
        }
        if let Some(v) = self.info {
            cfg.info = v;
        }
        if let Some(v) = self.bins {
            cfg.bins = v;
        }
        if self.k_attrs.is_some() {
            cfg.k_attrs = self.k_attrs;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaseArg {
    Gradient,
    BandLimitedNoise,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PatchArg {
    None,
    UniformNoise,
    Checkerboard,
    Solid,
}

#[derive(Args, Debug)]
struct SynthFlags {
    #[arg(long, value_enum, default_value = "gradient")]
    base: BaseArg,
    #[arg(long, value_enum, default_value = "uniform-noise")]
    patch: PatchArg,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Patch side in pixels
    #[arg(long, default_value_t = 50)]
    patch_size: usize,
    /// Patch top-left corner as ROW,COL [default: random]
    #[arg(long, value_name = "ROW,COL", value_parser = parse_position)]
    position: Option<(usize, usize)>,
    #[arg(long, default_value_t = 224)]
    height: usize,
    #[arg(long, default_value_t = 224)]
    width: usize,
    /// 1 or 3
    #[arg(long, default_value_t = 3)]
    channels: usize,
}

fn parse_position(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(',').ok_or("expected ROW,COL")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(r)?, parse(c)?))
}

impl SynthFlags {
    fn to_spec(&self) -> SyntheticSpec {
        let base = match self.base {
            BaseArg::Gradient => BaseKind::Gradient,
            BaseArg::BandLimitedNoise => BaseKind::BandLimitedNoise,
        };
        let patch = match self.patch {
            PatchArg::None => PatchKind::None,
            PatchArg::UniformNoise => PatchKind::UniformNoise,
            PatchArg::Checkerboard => PatchKind::Checkerboard,
            PatchArg::Solid => PatchKind::Solid,
        };
        SyntheticSpec {
            patch_size: self.patch_size,
            position: self.position,
            height: self.height,
            width: self.width,
            channels: self.channels,
            ..SyntheticSpec::new(base, patch, self.seed)
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Config(_) | Error::Parameter(_) => EXIT_CONFIG,
        Error::Format(_)
        | Error::Dimension(_)
        | Error::DegenerateGrid { .. }
        | Error::UndefinedSplit { .. }
        | Error::Numeric(_) => EXIT_DATA,
    }
}

fn print_timings(t: &StageTimings) {
    println!(
        "timings (s): chunking {:.4}  features {:.4}  forest {:.4}  scoring {:.4}  mitigation {:.4}  total {:.4}",
        t.chunking, t.features, t.forest, t.scoring, t.mitigation, t.total
    );
}

fn cmd_defend(
    input: &Path,
    output: &Path,
    mask: Option<&Path>,
    flags: &PipelineFlags,
) -> Result<(), Error> {
    let config = flags.resolve()?;
    let image = load_image(input)?;
    let result = defend(&image, &config)?;
    let processed = encode_image(result.image(), OutputFormat::from_path(output)?)?;
    let mask_bytes = match mask {
        Some(path) => Some((
            path,
            encode_image(&result.anomaly_mask(), OutputFormat::from_path(path)?)?,
        )),
        None => None,
    };
    write_atomic(output, &processed)?;
    if let Some((path, bytes)) = mask_bytes {
        write_atomic(path, &bytes)?;
    }
    for f in result.flagged() {
        println!(
            "flagged chunk {} at ({}, {}) score {:.6}",
            f.index, f.position.top, f.position.left, f.score
        );
    }
    print_timings(&result.timings);
    Ok(())
}

fn cmd_score(input: &Path, flags: &PipelineFlags) -> Result<(), Error> {
    let config = flags.resolve()?;
    let image = load_image(input)?;
    let result = defend(&image, &config)?;
    let outcome = &result.outcome;
    let mut order: Vec<usize> = (0..outcome.scores.len()).collect();
    order.sort_by(|&a, &b| {
        outcome.scores[b]
            .total_cmp(&outcome.scores[a])
            .then(a.cmp(&b))
    });
    let mut text = String::from("index\trow\tcol\tscore\n");
    for i in order {
        let p = outcome.positions[i];
        let _ = writeln!(
            text,
            "{i}\t{}\t{}\t{:.6}",
            p.top / config.stride,
            p.left / config.stride,
            outcome.scores[i]
        );
    }
    emit(&text)
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<(), Error> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn cmd_synth(output: &Path, flags: &SynthFlags) -> Result<(), Error> {
    let (image, rect) = generate_case(&flags.to_spec())?;
    save_image(&image, output)?;
    match rect {
        Some(r) => println!(
            "patch top {} left {} height {} width {}",
            r.top, r.left, r.height, r.width
        ),
        None => println!("no patch"),
    }
    Ok(())
}

fn cmd_bench(
    output: &Path,
    corpus: Option<&Path>,
    count: usize,
    corpus_seed: u64,
    sequential: bool,
    flags: &PipelineFlags,
) -> Result<(), Error> {
    let config = flags.resolve()?;
    let cases = match corpus {
        Some(path) => CorpusFile::load(path)?,
        None => patched_corpus(count, corpus_seed),
    };
    let report = evaluate(&cases, &config, EvalOptions { sequential })?;
    write_atomic(output, report.to_json_lines().as_bytes())?;
    emit(&report.to_table())
}

fn run(cli: Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Defend {
            input,
            output,
            mask,
            pipeline,
        } => cmd_defend(input, output, mask.as_deref(), pipeline),
        Command::Score { input, pipeline } => cmd_score(input, pipeline),
        Command::Synth { output, spec } => cmd_synth(output, spec),
        Command::Bench {
            output,
            corpus,
            count,
            corpus_seed,
            sequential,
            pipeline,
        } => cmd_bench(
            output,
            corpus.as_deref(),
            *count,
            *corpus_seed,
            *sequential,
            pipeline,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, 2) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
