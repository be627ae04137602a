use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use num_rational::Ratio;
use serde_json::{json, Value};

use grokforge::augment::composition::{parse_graph, seed_composition_text};
use grokforge::augment::{
    run_comparison, run_composition, seed_comparison_corpus, ComparisonConfig, CompositionConfig, ExternalConfig,
    GenerationBackend, PipelineOutput,
};
use grokforge::bounds::{
    expected_path_count, expected_phi, min_branching_factor, min_node_count, phi_upper_bound, BoundParams,
    NodeCountBound, DEFAULT_SEARCH_CUTOFF,
};
use grokforge::corpus::{self, Kind, QAItem, Task};
use grokforge::phi::{parse_ratio, ratio_f64, ratio_str};
use grokforge::sim::{fmt_sig10, run_sweep, sweep_to_csv, GraphModel, GridPoint, SweepConfig, DEFAULT_WORK_BUDGET};
use grokforge::splitter::{emit_corpus, sha256_hex, split_id_ood, CorpusFormat, DatasetSplit, SplitPlan};
use grokforge::{compute_phi, Error, Generalizability, HopOrder, KnowledgeGraph, Mode};

const EXIT_TARGET_MISS: u8 = 4;
const EXIT_USAGE: u8 = 64;
const EXIT_INTERNAL: u8 = 70;

/// Boolean flags, which a config file can switch on with `key = true`.
const BOOL_FLAGS: &[&str] = &["ci", "debug", "plain"];

#[derive(Parser, Debug)]
#[command(
    name = "grokforge",
    version,
    about = "Inferred/atomic ratio analytics and multi-hop corpus augmentation for knowledge graphs"
)]
struct Cli {
    /// Master seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Refuse to run randomized commands without an explicit --seed.
    #[arg(long, global = true)]
    ci: bool,

    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Flat `key = value` file; keys are long flag names. Flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,

    /// Verbose logging, including external backend traffic.
    #[arg(long, global = true)]
    debug: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inferred/atomic ratios of a graph and its generalizability verdict
    /// (exit 0 full, 2 partial, 3 none).
    Analyze(AnalyzeArgs),
    /// Closed-form path-count and ratio bounds over a parameter grid.
    Bounds(BoundsArgs),
    /// Monte Carlo sweep of random graphs against the closed-form expectation.
    Simulate(SimulateArgs),
    /// Grow a seed corpus to target sizes (exit 4 when the ratio target is missed).
    Augment(AugmentArgs),
    /// Partition a corpus into train / ID-test / OOD-test files.
    Split(SplitArgs),
    /// Re-check a corpus or split directory against its contracts.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Triplet TSV (`head<TAB>relation<TAB>tail`) or numbered `<h; T><r><t; T>` lines.
    #[arg(long)]
    kg: PathBuf,
    /// Count only paths of exactly this many hops.
    #[arg(long, conflicts_with = "max_hops")]
    hops: Option<usize>,
    /// Count paths of 2 up to this many hops.
    #[arg(long)]
    max_hops: Option<usize>,
    #[arg(long, default_value = "directed")]
    mode: Mode,
    /// Generalization threshold; enables the verdict and its exit code.
    #[arg(long, value_parser = parse_ratio_arg)]
    phi_g: Option<Ratio<u64>>,
    /// Judge every relation's ratio, or only the global one.
    #[arg(long, value_enum, default_value_t = Verdict::PerRelation)]
    verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Verdict {
    PerRelation,
    Global,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// Node counts: `12,40`, ranges `10..100:10`, or `inf`.
    #[arg(long, default_value = "1000")]
    nodes: String,
    /// Branching factors, e.g. `2,1.5,18/5`.
    #[arg(long, default_value = "2")]
    b: String,
    /// Hop orders.
    #[arg(long, default_value = "3")]
    hops: String,
    /// Generalization thresholds.
    #[arg(long, default_value = "3.6")]
    phi_g: String,
    /// Largest node count the minimum-size search will consider.
    #[arg(long, default_value_t = DEFAULT_SEARCH_CUTOFF)]
    cutoff: u64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value = "10..100:10")]
    nodes: String,
    #[arg(long, default_value = "2")]
    b: String,
    #[arg(long, default_value = "3")]
    hops: String,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long, default_value = "exact-edge-count")]
    model: GraphModel,
    /// Path-counting convention for the empirical side.
    #[arg(long, default_value = "undirected")]
    mode: Mode,
    /// Rows whose expected enumeration work exceeds this are skipped.
    #[arg(long, default_value_t = DEFAULT_WORK_BUDGET)]
    budget: f64,
    /// CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Template,
    External,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[arg(long)]
    task: Task,
    /// Atomic facts in the output (default 1000 comparison, 800 composition).
    #[arg(long)]
    atomic: Option<usize>,
    /// Inferred items in the output (default 8000 comparison, 5000 composition).
    #[arg(long)]
    inferred: Option<usize>,
    /// Required inferred/atomic ratio (default 8 comparison, 6.25 composition).
    #[arg(long, value_parser = parse_ratio_arg)]
    phi_target: Option<Ratio<u64>>,
    /// Share of Yes answers among comparison questions.
    #[arg(long, value_parser = parse_ratio_arg, default_value = "1/2")]
    yes_fraction: Ratio<u64>,
    /// Comparison countries, comma separated.
    #[arg(long, default_value = "India,France,United States,Canada,Russia")]
    countries: String,
    /// Skip paragraph renderings of comparison facts.
    #[arg(long)]
    plain: bool,
    /// Number of seed paths standing in for the original composition questions.
    #[arg(long, default_value_t = 100)]
    seed_inferred: usize,
    /// Seed corpus: JSONL items (comparison) or graph text (composition).
    /// Built-in seeds are used when omitted.
    #[arg(long)]
    seed_corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BackendKind::Template)]
    backend: BackendKind,
    /// Chat-completion URL for the external backend.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent to the external backend.
    #[arg(long, default_value = "gpt-4o")]
    model: String,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// `corpus.jsonl`, or a directory containing it.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_parser = parse_ratio_arg, default_value = "4/5")]
    train_fraction: Ratio<u64>,
    #[arg(long, value_parser = parse_ratio_arg, default_value = "1/10")]
    ood_fraction: Ratio<u64>,
    /// Rendering of atomic facts in the training file.
    #[arg(long, default_value = "structured")]
    render: CorpusFormat,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Output directory of `augment` or `split`.
    dir: PathBuf,
}

fn parse_ratio_arg(s: &str) -> Result<Ratio<u64>, String> {
    parse_ratio(s).map_err(|e| e.to_string())
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Shortfall { .. }) => EXIT_TARGET_MISS,
            Some(Error::Io { source, .. }) if source.kind() != std::io::ErrorKind::NotFound => EXIT_INTERNAL,
            Some(Error::Json(_)) => EXIT_INTERNAL,
            Some(_) => EXIT_USAGE,
            None if error.downcast_ref::<std::io::Error>().is_some() => EXIT_INTERNAL,
            None => EXIT_USAGE,
        };
        Failure { code, error }
    }
}

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: anyhow!("{msg}"),
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let args = match merge_config(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.debug { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

/// Appends `--key value` for every config entry whose flag is not already on
/// the command line and that the chosen subcommand accepts.
fn merge_config(mut args: Vec<String>) -> anyhow::Result<Vec<String>> {
    let Some(path) = find_flag_value(&args, "config") else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let cmd = Cli::command();
    let sub_name = args
        .iter()
        .skip(1)
        .find(|a| cmd.get_subcommands().any(|s| s.get_name() == a.as_str()))
        .cloned();
    let mut accepted: BTreeSet<String> = cmd
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_owned))
        .collect();
    let mut known = accepted.clone();
    for sub in cmd.get_subcommands() {
        let longs = sub.get_arguments().filter_map(|a| a.get_long().map(str::to_owned));
        if Some(sub.get_name()) == sub_name.as_deref() {
            accepted.extend(longs);
        } else {
            known.extend(longs);
        }
    }
    known.extend(accepted.iter().cloned());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{path}:{}: expected `key = value`", i + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"').to_owned();
        if !known.contains(&key) || key == "config" {
            bail!("{path}:{}: unknown key `{key}`", i + 1);
        }
        if !accepted.contains(&key) || has_flag(&args, &key) {
            continue;
        }
        if BOOL_FLAGS.contains(&key.as_str()) {
            match value.as_str() {
                "true" => args.push(format!("--{key}")),
                "false" => {}
                other => bail!("{path}:{}: `{key}` expects true or false, got `{other}`", i + 1),
            }
        } else {
            args.push(format!("--{key}={value}"));
        }
    }
    Ok(args)
}

fn has_flag(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
}

fn find_flag_value(args: &[String], key: &str) -> Option<String> {
    let flag = format!("--{key}");
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if *a == flag {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix(&format!("{flag}=")) {
            return Some(v.to_owned());
        }
    }
    None
}

fn run(cli: &Cli) -> Outcome {
    let randomized = matches!(
        cli.command,
        Command::Simulate(_) | Command::Augment(_) | Command::Split(_)
    );
    if cli.ci && randomized && cli.seed.is_none() {
        return Err(usage("--ci requires an explicit --seed for randomized commands"));
    }
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Analyze(a) => analyze(a, cli.format),
        Command::Bounds(a) => bounds(a, cli.format),
        Command::Simulate(a) => simulate(a, seed),
        Command::Augment(a) => augment(a, seed),
        Command::Split(a) => split(a, seed),
        Command::Validate(a) => validate(a, cli.format),
    }
}

fn load_graph(path: &Path) -> Result<KnowledgeGraph, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::from(Error::Io {
            path: path.into(),
            source: e,
        })
    })?;
    let numbered = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(|l| l.contains('<'));
    let kg = if numbered {
        let parsed = parse_graph(&text)?;
        for (line, why) in &parsed.rejects {
            log::warn!("{}:{line}: skipped: {why}", path.display());
        }
        parsed.kg
    } else {
        KnowledgeGraph::read_tsv(text.as_bytes())?
    };
    if kg.edge_count() == 0 {
        return Err(usage(format!("{}: graph has no facts", path.display())));
    }
    Ok(kg)
}

fn analyze(a: &AnalyzeArgs, format: OutputFormat) -> Outcome {
    let kg = load_graph(&a.kg)?;
    let hop_order = match (a.hops, a.max_hops) {
        (_, Some(n)) => HopOrder::UpTo(n),
        (Some(n), None) => HopOrder::Exact(n),
        (None, None) => HopOrder::Exact(2),
    };
    let mut report = compute_phi(&kg, hop_order, a.mode)?;
    let verdict = a.phi_g.map(|g| {
        report = report.clone().with_threshold(g);
        match a.verdict {
            Verdict::PerRelation => report.verdict(g),
            Verdict::Global => match report.global_phi {
                Some(phi) if phi >= g => Generalizability::Full,
                _ => Generalizability::None,
            },
        }
    });
    match format {
        OutputFormat::Json => {
            let mut doc = report.to_json();
            if let Some(v) = verdict {
                doc["verdict"] = json!(v);
                doc["verdict_basis"] = json!(match a.verdict {
                    Verdict::PerRelation => "per-relation",
                    Verdict::Global => "global",
                });
            }
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        OutputFormat::Csv => print!("{}", report.to_csv()),
        OutputFormat::Text => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "entities: {}  facts: {}  b: {}",
                report.node_count,
                report.edge_count,
                ratio_str(&report.global_b)
            );
            let hops = match report.hop_order {
                HopOrder::Exact(n) => format!("{n} hops"),
                HopOrder::UpTo(n) => format!("2..={n} hops"),
            };
            let _ = writeln!(
                out,
                "inferred facts ({hops}, {}): {}",
                report.mode, report.inferred_count
            );
            match report.global_phi {
                Some(p) => {
                    let _ = writeln!(out, "phi: {} ({:.4})", ratio_str(&p), ratio_f64(&p));
                }
                None => out.push_str("phi: undefined\n"),
            }
            let _ = writeln!(
                out,
                "{:<24} {:>8} {:>9} {:>10} {:>10}",
                "relation", "atomic", "inferred", "b_r", "phi_r"
            );
            for (label, r) in &report.per_relation {
                let phi = r.phi.as_ref().map(ratio_str).unwrap_or_else(|| "undefined".into());
                let _ = writeln!(
                    out,
                    "{label:<24} {:>8} {:>9} {:>10} {:>10}",
                    r.atomic_count,
                    r.inferred_count,
                    ratio_str(&r.branching),
                    phi
                );
            }
            for w in &report.warnings {
                let _ = writeln!(out, "warning: {w}");
            }
            if let (Some(v), Some(g)) = (verdict, a.phi_g) {
                let basis = match a.verdict {
                    Verdict::PerRelation => "per relation",
                    Verdict::Global => "global",
                };
                let _ = writeln!(out, "verdict (phi_G = {}, {basis}): {}", ratio_str(&g), v.describe());
            }
            print!("{out}");
        }
    }
    Ok(verdict.map_or(0, |v| v.exit_code() as u8))
}

#[derive(Debug, Clone, Copy)]
enum NodeSpec {
    Finite(u64),
    Infinite,
}

/// `a,b,c` with `lo..hi:step` integer ranges (inclusive).
fn parse_u64_grid(s: &str) -> Result<Vec<u64>, Failure> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, rest)) = part.split_once("..") {
            let (hi, step) = rest.split_once(':').unwrap_or((rest, "1"));
            let parse = |x: &str| {
                x.trim()
                    .parse::<u64>()
                    .map_err(|_| usage(format!("malformed grid entry `{part}`")))
            };
            let (lo, hi, step) = (parse(lo)?, parse(hi)?, parse(step)?);
            if step == 0 || hi < lo {
                return Err(usage(format!("malformed grid range `{part}`")));
            }
            out.extend((lo..=hi).step_by(step as usize));
        } else {
            out.push(
                part.parse()
                    .map_err(|_| usage(format!("malformed grid entry `{part}`")))?,
            );
        }
    }
    if out.is_empty() {
        return Err(usage(format!("empty grid `{s}`")));
    }
    Ok(out)
}

fn parse_node_grid(s: &str) -> Result<Vec<NodeSpec>, Failure> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if matches!(part, "inf" | "infinite") {
            out.push(NodeSpec::Infinite);
        } else {
            out.extend(parse_u64_grid(part)?.into_iter().map(NodeSpec::Finite));
        }
    }
    if out.is_empty() {
        return Err(usage(format!("empty grid `{s}`")));
    }
    Ok(out)
}

fn parse_ratio_grid(s: &str) -> Result<Vec<Ratio<u64>>, Failure> {
    let out: Vec<Ratio<u64>> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| parse_ratio(p).map_err(|_| usage(format!("malformed ratio `{p}`"))))
        .collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err(usage(format!("empty grid `{s}`")));
    }
    Ok(out)
}

fn parse_hops_grid(s: &str) -> Result<Vec<usize>, Failure> {
    let hops: Vec<usize> = parse_u64_grid(s)?.into_iter().map(|n| n as usize).collect();
    if hops.contains(&0) {
        return Err(Error::HopOrder { min: 1, got: 0 }.into());
    }
    Ok(hops)
}

fn bounds(a: &BoundsArgs, format: OutputFormat) -> Outcome {
    let nodes = parse_node_grid(&a.nodes)?;
    let bs = parse_ratio_grid(&a.b)?;
    let hops = parse_hops_grid(&a.hops)?;
    let phis = parse_ratio_grid(&a.phi_g)?;
    if hops.contains(&1) {
        eprintln!("note: the minimum branching factor and minimum node count need n >= 2; shown as n/a for n = 1");
    }
    let mut rows = Vec::new();
    for &v in &nodes {
        for &b in &bs {
            for &n in &hops {
                for &g in &phis {
                    rows.push(bounds_row(v, b, n, g, a.cutoff)?);
                }
            }
        }
    }
    let columns = [
        "nodes",
        "b",
        "n",
        "phi_g",
        "expected_paths",
        "expected_phi",
        "phi_upper_bound",
        "min_branching_factor",
        "min_node_count",
    ];
    match format {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&Value::Array(rows))?),
        OutputFormat::Csv => {
            println!("{}", columns.join(","));
            for r in &rows {
                let cells: Vec<String> = columns.iter().map(|c| cell(&r[*c])).collect();
                println!("{}", cells.join(","));
            }
        }
        OutputFormat::Text => {
            println!(
                "{:>9} {:>6} {:>3} {:>6} {:>16} {:>14} {:>15} {:>14} {:>16}",
                "nodes", "b", "n", "phi_G", "E[paths]", "E[phi]", "phi_upper", "min_b", "min_nodes"
            );
            for r in &rows {
                let c: Vec<String> = columns.iter().map(|k| cell(&r[*k])).collect();
                println!(
                    "{:>9} {:>6} {:>3} {:>6} {:>16} {:>14} {:>15} {:>14} {:>16}",
                    c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8]
                );
            }
        }
    }
    Ok(0)
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => "n/a".into(),
        Value::String(s) => s.clone(),
        Value::Number(x) => match x.as_f64() {
            Some(f) if x.is_f64() => fmt_sig10(f),
            _ => x.to_string(),
        },
        other => other.to_string(),
    }
}

fn bounds_row(v: NodeSpec, b: Ratio<u64>, n: usize, g: Ratio<u64>, cutoff: u64) -> Result<Value, Failure> {
    let params = match v {
        NodeSpec::Finite(v) => BoundParams::new(v, b, n),
        NodeSpec::Infinite => BoundParams::infinite(b, n),
    }
    .with_phi_g(g);
    let finite = matches!(v, NodeSpec::Finite(_));
    let paths = if finite {
        Some(expected_path_count(&params)?)
    } else {
        None
    };
    let phi = if finite { Some(expected_phi(&params)?) } else { None };
    let upper = phi_upper_bound(&params).ok();
    let min_b = if n >= 2 {
        min_branching_factor(&params).ok()
    } else {
        None
    };
    let min_nodes = if n >= 2 {
        let map = BTreeMap::from([("r".to_string(), b)]);
        match min_node_count(g, &map, n, cutoff) {
            Ok(NodeCountBound::Found { nodes }) => json!(nodes),
            Ok(NodeCountBound::Infeasible { .. }) => json!("infeasible"),
            Ok(NodeCountBound::NotFoundBelowCutoff { cutoff }) => json!(format!("> {cutoff}")),
            Err(_) => Value::Null,
        }
    } else {
        Value::Null
    };
    let degenerate = paths.is_some_and(|p| p.degenerate);
    Ok(json!({
        "nodes": match v { NodeSpec::Finite(v) => json!(v), NodeSpec::Infinite => json!("inf") },
        "b": ratio_str(&b),
        "n": n,
        "phi_g": ratio_str(&g),
        "expected_paths": paths.map(|p| p.value),
        "expected_phi": phi.map(|p| p.value),
        "degenerate": degenerate,
        "phi_upper_bound": upper,
        "min_branching_factor": min_b,
        "min_node_count": min_nodes,
    }))
}

fn simulate(a: &SimulateArgs, seed: u64) -> Outcome {
    let nodes = parse_u64_grid(&a.nodes)?;
    let bs = parse_ratio_grid(&a.b)?;
    let hops = parse_hops_grid(&a.hops)?;
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let mut grid = Vec::new();
    for &b in &bs {
        for &n in &hops {
            for &v in &nodes {
                grid.push(GridPoint::new(v, b, n));
            }
        }
    }
    let mut config = SweepConfig::new(a.trials, a.model, a.mode, seed);
    config.work_budget = a.budget;
    let records = run_sweep(&grid, &config)?;
    let csv = sweep_to_csv(&records);
    match &a.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| {
            Failure::from(Error::Io {
                path: path.clone(),
                source: e,
            })
        })?,
        None => print!("{csv}"),
    }
    for r in records.iter().filter(|r| r.flag.as_str() == "skipped: budget") {
        eprintln!(
            "warning: row v={} b={} n={} skipped: over the work budget",
            r.node_count,
            ratio_str(&r.branching),
            r.hops
        );
    }
    Ok(0)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| {
        Failure::from(Error::Io {
            path: path.into(),
            source: e,
        })
    })
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    std::fs::write(path, body).map_err(|e| {
        Failure::from(Error::Io {
            path: path.into(),
            source: e,
        })
    })
}

fn augment(a: &AugmentArgs, seed: u64) -> Outcome {
    let backend = match a.backend {
        BackendKind::Template => GenerationBackend::template(),
        BackendKind::External => {
            let endpoint = a
                .endpoint
                .clone()
                .ok_or_else(|| usage("--backend external needs --endpoint"))?;
            let mut cfg = ExternalConfig::new(endpoint, a.model.clone());
            cfg.timeout = Duration::from_secs(a.timeout_secs);
            cfg.retries = a.retries;
            GenerationBackend::external(cfg)
        }
    };
    let (output, target, resolved) = match a.task {
        Task::Comparison => {
            let config = ComparisonConfig {
                atomic_target: a.atomic.unwrap_or(1000),
                inferred_target: a.inferred.unwrap_or(8000),
                countries: a
                    .countries
                    .split(',')
                    .map(|c| c.trim().to_owned())
                    .filter(|c| !c.is_empty())
                    .collect(),
                yes_fraction: a.yes_fraction,
                detailed: !a.plain,
                seed,
            };
            let (seed_atomic, seed_inferred) = match &a.seed_corpus {
                Some(path) => corpus::partition(corpus::load_jsonl(path)?),
                None => seed_comparison_corpus(),
            };
            let target = a.phi_target.unwrap_or(Ratio::from_integer(8));
            let resolved = json!({
                "atomic": config.atomic_target,
                "inferred": config.inferred_target,
                "countries": config.countries,
                "yes_fraction": ratio_str(&config.yes_fraction),
                "detailed": config.detailed,
            });
            (
                run_comparison(&config, seed_atomic, seed_inferred, &backend)?,
                target,
                resolved,
            )
        }
        Task::Composition => {
            let config = CompositionConfig {
                atomic_target: a.atomic.unwrap_or(800),
                inferred_target: a.inferred.unwrap_or(5000),
                seed_inferred: a.seed_inferred,
                phi_target: Some(a.phi_target.unwrap_or(Ratio::new(25, 4))),
                seed,
                ..CompositionConfig::default()
            };
            let text = match &a.seed_corpus {
                Some(path) => std::fs::read_to_string(path).map_err(|e| {
                    Failure::from(Error::Io {
                        path: path.clone(),
                        source: e,
                    })
                })?,
                None => seed_composition_text(),
            };
            let resolved = json!({
                "atomic": config.atomic_target,
                "inferred": config.inferred_target,
                "seed_inferred": config.seed_inferred,
                "hop_orders": config.hop_orders,
            });
            (
                run_composition(&config, &text, &backend)?,
                config.phi_target.expect("set above"),
                resolved,
            )
        }
    };
    let shortfalls = output.shortfalls(target);
    let manifest = write_augment_output(a, &output, target, &shortfalls, seed, resolved)?;
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    let phi = manifest["phi_value"].as_f64().unwrap_or(0.0);
    println!(
        "wrote {} atomic and {} inferred items to {} (phi = {})",
        output.atomic.len(),
        output.inferred.len(),
        a.out.display(),
        fmt_sig10(phi)
    );
    if shortfalls.is_empty() {
        Ok(0)
    } else {
        eprintln!("phi target {} not reached:", ratio_str(&target));
        for s in &shortfalls {
            eprintln!("  {s}");
        }
        Ok(EXIT_TARGET_MISS)
    }
}

fn write_augment_output(
    a: &AugmentArgs,
    output: &PipelineOutput,
    target: Ratio<u64>,
    shortfalls: &[String],
    seed: u64,
    resolved: Value,
) -> Result<Value, Failure> {
    std::fs::create_dir_all(&a.out).map_err(|e| {
        Failure::from(Error::Io {
            path: a.out.clone(),
            source: e,
        })
    })?;
    let items: Vec<QAItem> = output.items().cloned().collect();
    let body = corpus::to_jsonl_string(&items);
    write_file(&a.out.join("corpus.jsonl"), &body)?;
    let mut digests = serde_json::Map::new();
    digests.insert("corpus.jsonl".into(), json!(sha256_hex(body.as_bytes())));
    let mut acyclic = Value::Null;
    if let Some(kg) = &output.graph {
        let tsv = kg.to_tsv_string();
        write_file(&a.out.join("graph.tsv"), &tsv)?;
        digests.insert("graph.tsv".into(), json!(sha256_hex(tsv.as_bytes())));
        acyclic = json!(kg.is_acyclic());
    }
    let yes = output.inferred.iter().filter(|i| i.answer == "Yes").count();
    let report = &output.report;
    let manifest = json!({
        "task": match a.task { Task::Comparison => "comparison", Task::Composition => "composition" },
        "seed": seed,
        "counts": {
            "atomic": output.atomic.len(),
            "inferred": output.inferred.len(),
            "synthetic": items.iter().filter(|i| i.synthetic).count(),
            "yes": yes,
        },
        "phi": report.global_phi.as_ref().map(ratio_str),
        "phi_value": report.global_phi.as_ref().map(ratio_f64),
        "phi_target": ratio_str(&target),
        "phi_report": report.to_json(),
        "shortfalls": shortfalls,
        "acyclic": acyclic,
        "warnings": output.warnings,
        "digest": digests,
        "config": {
            "task": format!("{:?}", a.task).to_lowercase(),
            "sizes": resolved,
            "phi_target": ratio_str(&target),
            "backend": match a.backend { BackendKind::Template => "template", BackendKind::External => "external" },
            "endpoint": a.endpoint,
            "model": a.model,
            "timeout_secs": a.timeout_secs,
            "retries": a.retries,
            "seed_corpus_sha256": match &a.seed_corpus {
                Some(p) => Some(sha256_hex(&read_bytes(p)?)),
                None => None,
            },
            "seed": seed,
        },
    });
    write_file(
        &a.out.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    Ok(manifest)
}

fn split(a: &SplitArgs, seed: u64) -> Outcome {
    let path = if a.corpus.is_dir() {
        a.corpus.join("corpus.jsonl")
    } else {
        a.corpus.clone()
    };
    let digest = sha256_hex(&read_bytes(&path)?);
    let (atomic, inferred) = corpus::partition(corpus::load_jsonl(&path)?);
    let plan = SplitPlan {
        train_inferred_fraction: a.train_fraction,
        ood_atomic_fraction: a.ood_fraction,
        seed,
    };
    let split = split_id_ood(&atomic, &inferred, plan)?;
    let config = json!({
        "corpus_sha256": digest,
        "train_fraction": ratio_str(&a.train_fraction),
        "ood_fraction": ratio_str(&a.ood_fraction),
        "render": a.render.to_string(),
        "seed": seed,
    });
    let manifest = emit_corpus(&split, &a.out, a.render, config)?;
    for w in &split.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "train: {} atomic + {} inferred, id_test: {}, ood_test: {} (digest {})",
        split.train_atomic.len(),
        split.train_inferred.len(),
        split.id_test.len(),
        split.ood_test.len(),
        manifest["digest"]["sha256"].as_str().unwrap_or("")
    );
    Ok(0)
}

fn validate(a: &ValidateArgs, format: OutputFormat) -> Outcome {
    let dir = &a.dir;
    let problems = if dir.join("train.jsonl").exists() {
        validate_split(dir)?
    } else if dir.join("corpus.jsonl").exists() {
        validate_corpus(dir)?
    } else {
        return Err(usage(format!(
            "{}: neither train.jsonl nor corpus.jsonl found",
            dir.display()
        )));
    };
    match format {
        OutputFormat::Json => println!(
            "{}",
            serde_json::to_string_pretty(&json!({"ok": problems.is_empty(), "problems": problems}))?
        ),
        _ => {
            for p in &problems {
                println!("FAIL {p}");
            }
            if problems.is_empty() {
                println!("ok");
            }
        }
    }
    Ok(if problems.is_empty() { 0 } else { EXIT_TARGET_MISS })
}

fn read_manifest(dir: &Path) -> Result<Value, Failure> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Failure::from(Error::Io {
            path: path.clone(),
            source: e,
        })
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn check_digests(dir: &Path, files: &Value, problems: &mut Vec<String>) -> Result<(), Failure> {
    let Some(files) = files.as_object() else {
        problems.push("manifest has no file digests".into());
        return Ok(());
    };
    for (name, want) in files {
        let path = dir.join(name);
        let bytes = read_bytes(&path)?;
        if want.as_str() != Some(sha256_hex(&bytes).as_str()) {
            problems.push(format!("{name}: digest mismatch"));
        }
    }
    Ok(())
}

fn validate_split(dir: &Path) -> Result<Vec<String>, Failure> {
    let manifest = read_manifest(dir)?;
    let mut problems = Vec::new();
    check_digests(dir, &manifest["digest"]["files"], &mut problems)?;
    let (train_atomic, train_inferred) = corpus::partition(corpus::load_jsonl(dir.join("train.jsonl"))?);
    let split = DatasetSplit {
        train_atomic,
        train_inferred,
        id_test: corpus::load_jsonl(dir.join("id_test.jsonl"))?,
        ood_test: corpus::load_jsonl(dir.join("ood_test.jsonl"))?,
        reserved_facts: Vec::new(),
        reassigned: 0,
        plan: SplitPlan::default(),
        warnings: Vec::new(),
    };
    problems.extend(split.violations());
    for (name, list) in [("id_test", &split.id_test), ("ood_test", &split.ood_test)] {
        if list.iter().any(|i| i.kind != Kind::Inferred) {
            problems.push(format!("{name} contains atomic items"));
        }
        if manifest["counts"][name].as_u64() != Some(list.len() as u64) {
            problems.push(format!("{name}: count differs from manifest"));
        }
    }
    Ok(problems)
}

fn validate_corpus(dir: &Path) -> Result<Vec<String>, Failure> {
    let manifest = read_manifest(dir)?;
    let mut problems = Vec::new();
    check_digests(dir, &manifest["digest"], &mut problems)?;
    let items = corpus::load_jsonl(dir.join("corpus.jsonl"))?;
    let graph = if dir.join("graph.tsv").exists() {
        Some(KnowledgeGraph::load_tsv(dir.join("graph.tsv"))?)
    } else {
        None
    };
    let mut ids = BTreeSet::new();
    for item in &items {
        if !ids.insert(&item.id) {
            problems.push(format!("duplicate id {}", item.id));
        }
        if let Err(e) = item.validate() {
            problems.push(e.to_string());
            continue;
        }
        if item.kind != Kind::Inferred {
            continue;
        }
        match item.task {
            Task::Comparison => {
                let same = item.source_facts[0][2] == item.source_facts[1][2];
                if (item.answer == "Yes") != same {
                    problems.push(format!("item {}: answer disagrees with its source facts", item.id));
                }
            }
            Task::Composition => {
                let Some(path) = &item.path else {
                    problems.push(format!("item {}: composition item without a path", item.id));
                    continue;
                };
                if path.last() != Some(&item.answer) {
                    problems.push(format!("item {}: path does not end at the answer", item.id));
                }
                if let Some(kg) = &graph {
                    let replays = path.windows(3).step_by(2).all(|w| {
                        match (kg.entity_id(&w[0]), kg.relation_id(&w[1]), kg.entity_id(&w[2])) {
                            (Some(h), Some(r), Some(t)) => {
                                kg.inference_step(h, r, Mode::Directed).is_ok_and(|s| s.contains(&t))
                            }
                            _ => false,
                        }
                    });
                    if !replays {
                        problems.push(format!("item {}: path does not replay through graph.tsv", item.id));
                    }
                }
            }
        }
    }
    let (atomic, inferred) = corpus::partition(items);
    let report = corpus::corpus_phi(&atomic, &inferred);
    if manifest["phi"].as_str() != report.global_phi.as_ref().map(ratio_str).as_deref() {
        problems.push("manifest phi differs from the recomputed ratio".into());
    }
    if let Some(kg) = &graph {
        if !kg.is_acyclic() {
            problems.push("graph.tsv has a directed cycle".into());
        }
    }
    Ok(problems)
}
