//! Command-line front end.
//!
//! Exit codes: 0 success, 1 divergence found by `verify`, 2 unreadable or
//! malformed input, 64 bad usage.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::amie::{self, MinedRule, MinerConfig};
use crate::error::Error;
use crate::kg::KnowledgeGraph;
use crate::matrix;
use crate::metrics::{ConfidenceKind, Evaluator, PcaMode};
use crate::path_miner::{self, AnytimeConfig, RoundBudget};
use crate::predict::{self, CompletionQuery, ScoredRule};
use crate::ratio::{format_decimal, parse_ratio, Rational};
use crate::rule::Rule;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIVERGENCE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

pub const RULE_HEADER: &str =
    "rule\tsupport\tsupport_frac_hc\thead_coverage\tstd_conf\tpca_conf\tpca_direction\tstd_conf_frac\tpca_conf_frac";

#[derive(Parser, Debug)]
#[command(name = "hornforge", version, about = "Mine, verify and apply Horn rules over a knowledge graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mine rules and print one row per rule
    Mine(Box<MineArgs>),
    /// Cross-check index metrics against the matrix evaluator on all closed chain rules
    Verify(VerifyArgs),
    /// Rank completion candidates for a query such as `speaks(A._Merkel, ?)`
    Predict(PredictArgs),
    /// Print per-relation statistics
    Stats(InputArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Tab-separated triples
    #[arg(long)]
    input: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MinerKind {
    Amie,
    Anyburl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ConfidenceArg {
    Std,
    Pca,
}

impl From<ConfidenceArg> for ConfidenceKind {
    fn from(c: ConfidenceArg) -> Self {
        match c {
            ConfidenceArg::Std => ConfidenceKind::Std,
            ConfidenceArg::Pca => ConfidenceKind::Pca,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    Auto,
    Subject,
    Object,
}

impl From<DirectionArg> for PcaMode {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Auto => PcaMode::Auto,
            DirectionArg::Subject => PcaMode::SUBJECT,
            DirectionArg::Object => PcaMode::OBJECT,
        }
    }
}

#[derive(Args, Debug)]
struct MineArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "amie")]
    miner: MinerKind,
    /// Confidence used for filtering and ordering [default: pca for amie, std for anyburl]
    #[arg(long, value_enum)]
    confidence: Option<ConfidenceArg>,
    #[arg(long, value_enum, default_value = "subject")]
    pca_direction: DirectionArg,
    /// Distinct variables bind distinct entities
    #[arg(long)]
    object_identity: bool,
    /// Worker threads; output does not depend on it
    #[arg(long, env = "HORNFORGE_THREADS")]
    threads: Option<usize>,
    /// Write rows here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,

    /// Maximum rule length in atoms, head included [amie, default 3]
    #[arg(long)]
    max_len: Option<usize>,
    /// Minimum head coverage [amie, default 0.01]
    #[arg(long)]
    min_hc: Option<String>,
    /// Minimum standard confidence [amie, default 0.1]
    #[arg(long)]
    min_std_conf: Option<String>,
    /// Minimum PCA confidence [amie, default 0.1]
    #[arg(long)]
    min_pca_conf: Option<String>,
    /// Allow atoms with a constant argument [amie]
    #[arg(long)]
    instantiation: bool,
    /// Keep dominated rules and keep refining perfect ones [amie]
    #[arg(long)]
    no_skyline: bool,

    /// Number of rounds [anyburl, default 5]
    #[arg(long)]
    rounds: Option<usize>,
    /// Samples per round [anyburl, default 1000]
    #[arg(long, conflicts_with = "round_ms")]
    round_samples: Option<u64>,
    /// Wall-clock milliseconds per round instead of a sample count [anyburl]
    #[arg(long)]
    round_ms: Option<u64>,
    /// Seed for all sampling [anyburl, default 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Minimum support [anyburl, default 2]
    #[arg(long)]
    min_support: Option<u64>,
    /// Minimum confidence [anyburl, default 0.1]
    #[arg(long)]
    min_conf: Option<String>,
    /// Saturation at which paths grow by one edge [anyburl, default 0.9]
    #[arg(long)]
    saturation: Option<String>,
    /// Longest path in body edges [anyburl, default 2]
    #[arg(long)]
    max_path_len: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Longest chain rule checked, head included
    #[arg(long, default_value_t = 3)]
    max_len: usize,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Rules, one per line, or a table written by `mine`
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Confidence used for ranking
    #[arg(long, value_enum, default_value = "pca")]
    confidence: ConfidenceArg,
    #[arg(long, value_enum, default_value = "subject")]
    pca_direction: DirectionArg,
}

enum Failure {
    Usage(String),
    Input(String),
    Divergence(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::InvalidRatio(_) => Failure::Usage(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Mine(a) => mine(*a),
        Command::Verify(a) => verify(a),
        Command::Predict(a) => predict(a),
        Command::Stats(a) => stats(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            EXIT_INPUT
        }
        Err(Failure::Divergence(m)) => {
            eprintln!("{m}");
            EXIT_DIVERGENCE
        }
    }
}

fn load(path: &Path) -> Result<KnowledgeGraph, Failure> {
    KnowledgeGraph::load_path(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn ratio_flag(name: &str, value: &Option<String>, default: Rational) -> Result<Rational, Failure> {
    match value {
        None => Ok(default),
        Some(v) => parse_ratio(v)
            .map_err(|_| Failure::Usage(format!("--{name}: expected a ratio such as 0.1 or 1/10, got `{v}`"))),
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn reject_flags(miner: &str, flags: &[(&str, bool)]) -> Result<(), Failure> {
    match flags.iter().find(|f| f.1) {
        Some((name, _)) => Err(Failure::Usage(format!("--{name} does not apply to --miner {miner}"))),
        None => Ok(()),
    }
}

fn mine(a: MineArgs) -> Result<(), Failure> {
    let threads = a.threads.unwrap_or_else(default_threads);
    let pca_mode = PcaMode::from(a.pca_direction);
    let (rules, kg) = match a.miner {
        MinerKind::Amie => {
            reject_flags(
                "amie",
                &[
                    ("rounds", a.rounds.is_some()),
                    ("round-samples", a.round_samples.is_some()),
                    ("round-ms", a.round_ms.is_some()),
                    ("seed", a.seed.is_some()),
                    ("min-support", a.min_support.is_some()),
                    ("min-conf", a.min_conf.is_some()),
                    ("saturation", a.saturation.is_some()),
                    ("max-path-len", a.max_path_len.is_some()),
                ],
            )?;
            let d = MinerConfig::default();
            let config = MinerConfig {
                max_len: a.max_len.unwrap_or(d.max_len),
                min_head_coverage: ratio_flag("min-hc", &a.min_hc, d.min_head_coverage)?,
                min_std_confidence: ratio_flag("min-std-conf", &a.min_std_conf, d.min_std_confidence)?,
                min_pca_confidence: ratio_flag("min-pca-conf", &a.min_pca_conf, d.min_pca_confidence)?,
                instantiation: a.instantiation,
                confidence_kind: a.confidence.map_or(d.confidence_kind, Into::into),
                pca_mode,
                object_identity: a.object_identity,
                skyline: !a.no_skyline,
                threads,
            };
            config.validate()?;
            let kg = load(&a.input.input)?;
            (amie::mine(&kg, config)?, kg)
        }
        MinerKind::Anyburl => {
            reject_flags(
                "anyburl",
                &[
                    ("max-len", a.max_len.is_some()),
                    ("min-hc", a.min_hc.is_some()),
                    ("min-std-conf", a.min_std_conf.is_some()),
                    ("min-pca-conf", a.min_pca_conf.is_some()),
                    ("instantiation", a.instantiation),
                    ("no-skyline", a.no_skyline),
                ],
            )?;
            let d = AnytimeConfig::default();
            let budget = match (a.round_samples, a.round_ms) {
                (_, Some(ms)) => RoundBudget::Millis(ms),
                (Some(n), None) => RoundBudget::Samples(n),
                (None, None) => d.budget,
            };
            let config = AnytimeConfig {
                rounds: a.rounds.unwrap_or(d.rounds),
                budget,
                min_support: a.min_support.unwrap_or(d.min_support),
                min_confidence: ratio_flag("min-conf", &a.min_conf, d.min_confidence)?,
                confidence_kind: a.confidence.map_or(d.confidence_kind, Into::into),
                pca_mode,
                seed: a.seed.unwrap_or(d.seed),
                saturation_threshold: ratio_flag("saturation", &a.saturation, d.saturation_threshold)?,
                max_length: a.max_path_len.unwrap_or(d.max_length).max(d.initial_length),
                object_identity: a.object_identity,
                threads,
                ..d
            };
            config.validate()?;
            let kg = load(&a.input.input)?;
            (path_miner::mine_anytime(&kg, config)?, kg)
        }
    };
    match &a.output {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            write_rules(&mut out, &kg, &rules)?;
            out.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            write_rules(&mut out, &kg, &rules)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn frac(num: u64, den: u64) -> String {
    format!("{num}/{den}")
}

/// Writes the header and one row per rule.
pub fn write_rules(out: &mut impl Write, kg: &KnowledgeGraph, rules: &[MinedRule]) -> io::Result<()> {
    writeln!(out, "{RULE_HEADER}")?;
    for m in rules {
        let x = &m.metrics;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            m.rule.display(kg),
            x.support,
            frac(x.support, x.head_count),
            format_decimal(&x.head_coverage()),
            format_decimal(&x.std_confidence()),
            format_decimal(&x.pca_confidence()),
            x.pca_direction,
            frac(x.support, x.body_size_cwa),
            frac(x.support, x.body_size_pca),
        )?;
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<(), Failure> {
    if a.max_len < 2 {
        return Err(Failure::Usage("--max-len must be at least 2".into()));
    }
    let kg = load(&a.input.input)?;
    let ev = Evaluator::new(&kg);
    let rules = matrix::chain_rules(&kg, a.max_len);
    let mut diverged = Vec::new();
    for rule in &rules {
        let index = (ev.support(rule)?, ev.head_coverage(rule).ok(), ev.std_confidence(rule)?);
        let oracle = (
            matrix::matrix_support(&kg, rule)?,
            matrix::matrix_head_coverage(&kg, rule).ok(),
            matrix::matrix_std_confidence(&kg, rule)?,
        );
        if index != oracle {
            diverged.push(format!("diverged: {}  index={index:?} matrix={oracle:?}", rule.display(&kg)));
        }
    }
    println!("checked {} chain rules, {} divergent", rules.len(), diverged.len());
    if diverged.is_empty() {
        Ok(())
    } else {
        Err(Failure::Divergence(diverged.join("\n")))
    }
}

/// Rules from a `mine` table (first column) or one rule per line.
fn read_rules(path: &Path, kg: &KnowledgeGraph) -> Result<Vec<Rule>, Failure> {
    let file = File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let mut rules = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let text = line.split('\t').next().unwrap_or("").trim();
        if text.is_empty() || text.starts_with('#') || (i == 0 && text == "rule") {
            continue;
        }
        let rule =
            Rule::parse(text, kg).map_err(|e| Failure::Input(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        rules.push(rule);
    }
    Ok(rules)
}

fn predict(a: PredictArgs) -> Result<(), Failure> {
    let kg = load(&a.input.input)?;
    let rules = read_rules(&a.rules, &kg)?;
    let query = CompletionQuery::parse(&a.query, &kg)?;
    let ev = Evaluator::new(&kg);
    let kind = ConfidenceKind::from(a.confidence);
    let mode = PcaMode::from(a.pca_direction);
    let mut scored = Vec::with_capacity(rules.len());
    for rule in rules {
        let m = ev.evaluate(&rule, mode).map_err(|e| Failure::Input(format!("{}: {e}", rule.display(&kg))))?;
        scored.push(ScoredRule { confidence: m.confidence(kind), rule });
    }
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    writeln!(out, "rank\tcandidate\tconf_vector")?;
    for (rank, c) in predict::complete(&kg, &scored, &query).iter().take(a.top).enumerate() {
        let vector: Vec<String> = c.confidences.iter().map(format_decimal).collect();
        writeln!(out, "{}\t{}\t{}", rank + 1, kg.entity_label(c.entity), vector.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn stats(a: InputArgs) -> Result<(), Failure> {
    let kg = load(&a.input)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    writeln!(out, "relation\tfacts\tdistinct_subjects\tdistinct_objects\tfunctionality\tinverse_functionality")?;
    let mut rels: Vec<_> = kg.relation_ids().collect();
    rels.sort_by_key(|&r| kg.relation_label(r));
    for r in rels {
        let Ok(s) = kg.relation_stats(r) else { continue };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            kg.relation_label(r),
            s.fact_count,
            s.distinct_subjects,
            s.distinct_objects,
            format_decimal(&s.functionality),
            format_decimal(&s.inverse_functionality),
        )?;
    }
    out.flush()?;
    eprintln!("{} entities, {} relations, {} facts", kg.num_entities(), kg.num_relations(), kg.num_facts());
    Ok(())
}
