//! `tablefind` — search engine for tables in scientific articles.
//!
//! Pipeline commands: `ingest` XML into a record file, `index` records
//! into an on-disk index, then `search`/`explain`/`eval`/`sweep` against
//! it. `mine-units`, `train-quantity`, and `dump-stats` expose the
//! intermediate artifacts.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{ArgGroup, Parser, Subcommand};

use config::{Config, Ranker};

#[derive(Parser)]
#[command(name = "tablefind", version, about)]
struct Cli {
    /// Configuration file (TOML). Compiled-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed for every randomized procedure (cross-validation folds).
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ConceptsArg {
    Entity,
    NounPhrase,
}

impl From<ConceptsArg> for tablefind_core::query::ConceptMode {
    fn from(a: ConceptsArg) -> Self {
        match a {
            ConceptsArg::Entity => Self::Entity,
            ConceptsArg::NounPhrase => Self::NounPhrase,
        }
    }
}

/// Flag-level overrides applied on top of the configuration.
#[derive(clap::Args)]
struct ModelFlags {
    /// Ranking function.
    #[arg(long)]
    ranker: Option<Ranker>,
    /// Results per query.
    #[arg(long)]
    k: Option<usize>,
    /// Concept selection mode for the full ranker.
    #[arg(long)]
    concepts: Option<ConceptsArg>,
    /// Weight of the concept component.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the quantity component.
    #[arg(long)]
    beta: Option<f64>,
    /// Numeric-content prior on or off.
    #[arg(long)]
    prior: Option<bool>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a directory of table XML files into one record file.
    Ingest {
        /// Directory holding *.xml table files.
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        /// Output record file (JSON lines).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Build the on-disk index (and query intelligence) from records.
    Index {
        /// Record file produced by `ingest`.
        #[arg(long, value_name = "FILE")]
        records: PathBuf,
        /// Output index directory.
        #[arg(long, value_name = "DIR")]
        index: PathBuf,
    },
    /// Rank tables for a query or a topics file, as TREC run lines.
    #[command(group(ArgGroup::new("input").required(true).args(["query", "topics"])))]
    Search {
        #[arg(long, value_name = "DIR")]
        index: PathBuf,
        /// A single keyword query.
        #[arg(long)]
        query: Option<String>,
        /// Query id used in run lines for --query.
        #[arg(long, default_value = "1")]
        qid: String,
        /// TREC topics file; every topic is run.
        #[arg(long, value_name = "FILE")]
        topics: Option<PathBuf>,
        /// Run tag; defaults to the ranker name.
        #[arg(long)]
        tag: Option<String>,
        /// Write run lines here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: ModelFlags,
    },
    /// Show how a query is analyzed and the structured query it becomes.
    Explain {
        #[arg(long, value_name = "DIR")]
        index: PathBuf,
        #[arg(long)]
        query: String,
        #[command(flatten)]
        flags: ModelFlags,
    },
    /// Score a run file against qrels (AP, NDCG, ERR).
    Eval {
        #[arg(long, value_name = "FILE")]
        run: PathBuf,
        #[arg(long, value_name = "FILE")]
        qrels: PathBuf,
    },
    /// Cross-validated grid sweep over the component weights.
    Sweep {
        #[arg(long, value_name = "DIR")]
        index: PathBuf,
        #[arg(long, value_name = "FILE")]
        topics: PathBuf,
        #[arg(long, value_name = "FILE")]
        qrels: PathBuf,
        /// Number of folds; defaults to the config value.
        #[arg(long)]
        folds: Option<usize>,
        #[command(flatten)]
        flags: ModelFlags,
    },
    /// Dump (phrase, symbol, type) training pairs mined from records.
    MineUnits {
        #[arg(long, value_name = "FILE")]
        records: PathBuf,
        /// Write pairs here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train the quantity-type classifier from mined pairs.
    TrainQuantity {
        /// Pair file from `mine-units`.
        #[arg(long, value_name = "FILE")]
        pairs: PathBuf,
        /// Output model file (JSON).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Dump collection statistics as TSV: term, field, ctf, df.
    DumpStats {
        #[arg(long, value_name = "DIR")]
        index: PathBuf,
        /// Write the dump here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn main() {
    // Rust ignores SIGPIPE by default, so printing into a closed pipe
    // (e.g. `tablefind search … | head`) would panic. Restore the Unix
    // default so the process exits quietly instead.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = Config::load(cli.config.as_ref())?;
    match cli.command {
        Command::Ingest { corpus, out } => commands::ingest(&corpus, &out),
        Command::Index { records, index } => commands::index(&cfg, &records, &index),
        Command::Search {
            index,
            query,
            qid,
            topics,
            tag,
            out,
            flags,
        } => commands::search(
            &cfg,
            &index,
            query.as_deref(),
            &qid,
            topics.as_deref(),
            tag,
            out.as_deref(),
            &flags,
        ),
        Command::Explain {
            index,
            query,
            flags,
        } => commands::explain(&cfg, &index, &query, &flags),
        Command::Eval { run, qrels } => commands::eval(&cfg, &run, &qrels),
        Command::Sweep {
            index,
            topics,
            qrels,
            folds,
            flags,
        } => commands::sweep(&cfg, &index, &topics, &qrels, folds, &flags, cli.seed),
        Command::MineUnits { records, out } => commands::mine_units(&cfg, &records, out.as_deref()),
        Command::TrainQuantity { pairs, out } => commands::train_quantity(&cfg, &pairs, &out),
        Command::DumpStats { index, out } => commands::dump_stats(&index, out.as_deref()),
    }
}

/// Distinct exit codes per failure class: 3 missing input, 4 malformed
/// content, 5 empty query, 1 anything else. (Usage errors exit 2 via clap.)
fn exit_code(err: &anyhow::Error) -> i32 {
    use tablefind_core::Error as E;
    if let Some(e) = err.downcast_ref::<E>() {
        return match e {
            E::EmptyQuery | E::EmptyOperator(_) => 5,
            E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 3,
            E::Io(_) | E::Training(_) => 1,
            _ => 4,
        };
    }
    if let Some(io) = err.downcast_ref::<std::io::Error>() {
        return if io.kind() == std::io::ErrorKind::NotFound {
            3
        } else {
            1
        };
    }
    if err.downcast_ref::<toml::de::Error>().is_some() {
        return 4;
    }
    1
}
