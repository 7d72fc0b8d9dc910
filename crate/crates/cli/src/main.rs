use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use inclusion_analytics::analysis::Analyzer;
use inclusion_analytics::embedding::{EmbeddingProvider, RemoteEmbedder, DEFAULT_EMBED_DIM};
use inclusion_analytics::epistemic::EpistemicConfig;
use inclusion_analytics::report::{compare, AnalysisReport, CompareLevel, Metric};
use inclusion_analytics::simgen::{generate_corpus, Dimension, SimCondition, Variant};
use inclusion_analytics::transcript::{load_transcripts, write_transcripts, Conversation, TranscriptFormat};
use inclusion_analytics::{CompiledLexicon, EndorsementLexicon, Error, PolitenessLexicon};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_PROVIDER: u8 = 3;

/// Inclusion metrics for multi-party chat transcripts.
#[derive(Parser)]
#[command(name = "inclusion", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Seed for the null baseline and the simulator.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Look-ahead window for politeness and semantic uptake.
    #[arg(long, global = true, default_value_t = 4)]
    window_k: usize,
    /// Look-ahead window for endorsement uptake.
    #[arg(long, global = true, default_value_t = 3)]
    endorse_k: usize,
    /// Per-turn decay for endorsement uptake, in (0, 1].
    #[arg(long, global = true, default_value_t = 0.7)]
    decay: f64,
    /// Monte Carlo rounds for the null baseline.
    #[arg(long, global = true, default_value_t = 100)]
    null_samples: usize,
    /// Minimum distance of null-baseline utterances; defaults to the window K.
    #[arg(long, global = true)]
    exclusion_radius: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = EmbedderKind::Test)]
    embedder: EmbedderKind,
    /// Embedding dimension (256 for the test embedder when omitted).
    #[arg(long, global = true)]
    embed_dim: Option<usize>,
    /// Endpoint of the remote embedding service.
    #[arg(long, global = true)]
    embed_url: Option<String>,
    /// Directory for the persistent embedding cache.
    #[arg(long, global = true)]
    embed_cache: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    politeness_lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    endorsement_lexicon: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderKind {
    /// Deterministic hashed bag-of-tokens vectors; offline.
    Test,
    /// HTTP service; credential read from INCLUSION_EMBED_API_KEY.
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Compute all metrics for one or more transcript files.
    Analyze {
        /// JSONL or CSV transcripts (format from the extension).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Generate a synthetic corpus.
    Simulate {
        #[arg(long, value_enum)]
        dimension: DimensionArg,
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[arg(long, default_value_t = 50)]
        teams: usize,
        /// Utterances per conversation (70 to 100); random per team when omitted.
        #[arg(long)]
        length: Option<usize>,
    },
    /// Compare a metric between two reports, or between roles within one.
    Compare {
        report_a: PathBuf,
        report_b: Option<PathBuf>,
        #[arg(long)]
        metric: Metric,
        #[arg(long, default_value = "conversation")]
        level: CompareLevel,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DimensionArg {
    Participation,
    Affect,
    Epistemic,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Balanced,
    Imbalanced,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain joined with `: `, skipping causes already spelled out by
/// the message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&msg)) {
            parts.push(msg);
        }
    }
    parts.join(": ")
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) if err.is_provider_error() => EXIT_PROVIDER,
        Some(Error::Config(_)) => EXIT_USAGE,
        Some(_) => EXIT_DATA,
        None if e.is::<UsageError>() => EXIT_USAGE,
        None => EXIT_DATA,
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Analyze { inputs } => analyze(g, inputs),
        Command::Simulate {
            dimension,
            variant,
            teams,
            length,
        } => simulate(g, *dimension, *variant, *teams, *length),
        Command::Compare {
            report_a,
            report_b,
            metric,
            level,
        } => compare_reports(g, report_a, report_b.as_deref(), *metric, *level),
    }
}

fn config(g: &GlobalOpts) -> anyhow::Result<EpistemicConfig> {
    let cfg = EpistemicConfig {
        window_k: g.window_k,
        endorse_k: g.endorse_k,
        decay: g.decay,
        null_samples: g.null_samples,
        exclusion_radius: g.exclusion_radius,
        seed: g.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn provider(g: &GlobalOpts) -> anyhow::Result<EmbeddingProvider> {
    let p = match g.embedder {
        EmbedderKind::Test => EmbeddingProvider::deterministic(g.embed_dim.unwrap_or(DEFAULT_EMBED_DIM))?,
        EmbedderKind::Remote => {
            let Some(url) = &g.embed_url else {
                return Err(UsageError("--embedder remote needs --embed-url".into()).into());
            };
            EmbeddingProvider::new(RemoteEmbedder::new(url).with_env_api_key().with_dimension(g.embed_dim))
        }
    };
    Ok(match &g.embed_cache {
        Some(dir) => p.with_cache_dir(dir)?,
        None => p,
    })
}

fn load_corpus(inputs: &[PathBuf]) -> anyhow::Result<Vec<Conversation>> {
    let mut corpus = Vec::new();
    let mut seen = HashSet::new();
    for path in inputs {
        let convs = load_transcripts(path, TranscriptFormat::from_path(path))
            .with_context(|| format!("reading {}", path.display()))?;
        for c in convs {
            if !seen.insert(c.id().to_string()) {
                bail!(Error::Conversation {
                    conversation_id: c.id().to_string(),
                    message: format!("appears in more than one input (again in {})", path.display()),
                });
            }
            corpus.push(c);
        }
    }
    Ok(corpus)
}

fn analyze(g: &GlobalOpts, inputs: &[PathBuf]) -> anyhow::Result<()> {
    if g.format == OutputFormat::Csv && g.out.is_none() {
        return Err(UsageError("--format csv needs --out".into()).into());
    }
    let cfg = config(g)?;
    let provider = provider(g)?;
    let corpus = load_corpus(inputs)?;

    let mut analyzer = Analyzer::new(&provider).with_config(cfg);
    if let Some(w) = g.workers {
        analyzer = analyzer.with_workers(w);
    }
    if let Some(path) = &g.politeness_lexicon {
        let lex = PolitenessLexicon::new(CompiledLexicon::from_path(path)?)?;
        analyzer = analyzer.with_politeness(lex, path.display().to_string());
    }
    if let Some(path) = &g.endorsement_lexicon {
        let lex = EndorsementLexicon::new(CompiledLexicon::from_path(path)?)?;
        analyzer = analyzer.with_endorsement(lex, path.display().to_string());
    }

    let report = analyzer.analyze(&corpus)?;
    provider.save_cache()?;
    match &g.out {
        Some(out) => {
            report.save(out)?;
            if g.format == OutputFormat::Csv {
                let (u, c) = report.save_csv(out)?;
                eprintln!("wrote {}, {} and {}", out.display(), u.display(), c.display());
            }
        }
        None => std::io::stdout().write_all(report.to_json()?.as_bytes())?,
    }
    Ok(())
}

fn simulate(
    g: &GlobalOpts,
    dimension: DimensionArg,
    variant: VariantArg,
    teams: usize,
    length: Option<usize>,
) -> anyhow::Result<()> {
    let condition = SimCondition {
        target_length: length,
        ..SimCondition::new(
            match dimension {
                DimensionArg::Participation => Dimension::Participation,
                DimensionArg::Affect => Dimension::Affect,
                DimensionArg::Epistemic => Dimension::Epistemic,
            },
            match variant {
                VariantArg::Balanced => Variant::Balanced,
                VariantArg::Imbalanced => Variant::Imbalanced,
            },
        )
    };
    let corpus = generate_corpus(&condition, teams, g.seed)?;
    let format = match g.format {
        OutputFormat::Json => TranscriptFormat::Jsonl,
        OutputFormat::Csv => TranscriptFormat::Csv,
    };
    match &g.out {
        Some(out) => {
            let f = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
            write_transcripts(std::io::BufWriter::new(f), &corpus, format)?;
        }
        None => write_transcripts(std::io::stdout().lock(), &corpus, format)?,
    }
    Ok(())
}

fn compare_reports(
    g: &GlobalOpts,
    a: &Path,
    b: Option<&Path>,
    metric: Metric,
    level: CompareLevel,
) -> anyhow::Result<()> {
    let ra = AnalysisReport::load(a)?;
    let rb = b.map(AnalysisReport::load).transpose()?;
    let cmp = compare(&ra, rb.as_ref(), metric, level)?;
    print!("{}", cmp.render());
    if let Some(out) = &g.out {
        let json = serde_json::to_string_pretty(&cmp)? + "\n";
        std::fs::write(out, json).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
