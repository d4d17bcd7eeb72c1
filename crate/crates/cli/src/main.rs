use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sketchsynth::harness::{corpus_from, desk_problem, desk_suite, run_suite, RunSummary, SuiteConfig};
use sketchsynth::models::{ForestConfig, MarkovConfig, Models, TrainingCorpus, DEFAULT_THETA};
use sketchsynth::spec::{build_spec, open_oracle, parse_signature, ProblemSpec, SizeParam, SizeRelation};
use sketchsynth::synth::{synthesize, Mode, SearchConfig};

#[derive(Parser)]
#[command(name = "synth", version, about = "Black-box program synthesis from fragment sketches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample examples from an oracle and write a problem spec.
    Spec(SpecArgs),
    /// Synthesize a program for a spec.
    Run(RunArgs),
    /// Train both models from a corpus file.
    Train(TrainArgs),
    /// Write the annotated corpus of a built-in suite.
    Corpus(CorpusArgs),
    /// Run a benchmark suite and write its summary.
    Bench(BenchArgs),
    /// Print the summary of a finished suite run.
    Stats(StatsArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// C-style declaration, e.g. "float f(float *a, float *b, int n)".
    #[arg(long)]
    sig: String,
    /// `builtin:<name>` or `proc:<command>`.
    #[arg(long)]
    oracle: String,
    #[arg(long, default_value_t = 32)]
    examples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw char buffers as NUL-terminated strings.
    #[arg(long)]
    string_mode: bool,
    /// Size parameter as NAME=RELATION (len, len-minus-one, non-empty, sqrt).
    #[arg(long = "size", value_name = "NAME=RELATION")]
    sizes: Vec<String>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value = "markov")]
    mode: Mode,
    /// Wall-clock budget in seconds.
    #[arg(long, default_value_t = 60.0)]
    budget: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl SearchArgs {
    fn config(&self) -> Result<SearchConfig> {
        let cfg = SearchConfig {
            mode: self.mode,
            time_budget_secs: self.budget,
            seed: self.seed,
            workers: self.workers,
            ..Default::default()
        };
        cfg.check().map_err(anyhow::Error::msg)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Trained models; without them the search samples uniformly.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    /// Corpus file that a solved record is appended to.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Report destination; printed to stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    /// Markov blend weight.
    #[arg(long, default_value_t = 0.75)]
    blend: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long, default_value = "desk")]
    suite: String,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "desk")]
    suite: String,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    /// Comma-separated problem ids to run instead of the whole suite.
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    #[arg(long, default_value_t = 32)]
    examples: usize,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    dir: PathBuf,
    /// Print the summary JSON instead of tables.
    #[arg(long)]
    json: bool,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spec(a) => spec(a),
        Command::Run(a) => run_spec(a),
        Command::Train(a) => train(a),
        Command::Corpus(a) => corpus(a),
        Command::Bench(a) => bench(a),
        Command::Stats(a) => stats(a),
    }
}

fn parse_size(s: &str) -> Result<SizeParam> {
    let (name, rel) = s.split_once('=').with_context(|| format!("`{s}` is not NAME=RELATION"))?;
    let relation: SizeRelation =
        serde_json::from_value(serde_json::Value::String(rel.into())).with_context(|| format!("unknown relation `{rel}`"))?;
    Ok(SizeParam { name: name.into(), relation })
}

fn spec(a: SpecArgs) -> Result<()> {
    let sig = parse_signature(&a.sig)?;
    // built-in oracles from the desk suite bring their sampling overrides
    let mut sampling = desk_suite()
        .into_iter()
        .find(|p| p.oracle == a.oracle && p.signature.params().len() == sig.params().len())
        .map(|p| p.sampling)
        .unwrap_or_default();
    if a.string_mode {
        sampling.string_mode = true;
    }
    if !a.sizes.is_empty() {
        sampling.size_params = a.sizes.iter().map(|s| parse_size(s)).collect::<Result<_>>()?;
    }
    let sampling = sampling.with_examples(a.examples).with_seed(a.seed);
    let mut oracle = open_oracle(&a.oracle, Some(&sig))?;
    let spec = build_spec(&sig, oracle.as_mut(), &sampling)?;
    fs::write(&a.output, serde_json::to_string_pretty(&spec)?).with_context(|| format!("writing {}", a.output.display()))?;
    eprintln!("wrote {} examples to {}", spec.examples.len(), a.output.display());
    Ok(())
}

fn load_models(path: Option<&Path>) -> Result<Option<Models>> {
    path.map(|p| Models::load(p).with_context(|| format!("loading {}", p.display()))).transpose()
}

fn run_spec(a: RunArgs) -> Result<()> {
    let text = fs::read_to_string(&a.spec).with_context(|| format!("reading {}", a.spec.display()))?;
    let spec: ProblemSpec = serde_json::from_str(&text)?;
    let models = load_models(a.model.as_deref())?;
    let report = synthesize(&spec, models.as_ref(), &a.search.config()?);
    eprintln!(
        "{:?} after {} candidates in {} sketches ({:.2} s)",
        report.status, report.candidates_evaluated, report.sketches_tried, report.wall_time_secs
    );
    if let Some(sol) = &report.solution {
        eprintln!("{}", sol.c);
    }
    if let (Some(path), Some(rec)) = (&a.corpus, report.corpus_record(&spec.signature)) {
        TrainingCorpus::append(path, &rec)?;
    }
    let json = serde_json::to_string_pretty(&report)?;
    match &a.output {
        Some(p) => fs::write(p, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let corpus = TrainingCorpus::load(&a.corpus).with_context(|| format!("reading {}", a.corpus.display()))?;
    let markov = MarkovConfig { b: a.blend, ..Default::default() };
    let models = Models::train(&corpus, &ForestConfig::default(), a.theta, &markov)?;
    models.save(&a.output)?;
    eprintln!("trained on {} records", corpus.len());
    Ok(())
}

fn suite(name: &str) -> Result<Vec<sketchsynth::harness::BenchmarkProblem>> {
    match name {
        "desk" => Ok(desk_suite()),
        other => bail!("unknown suite `{other}`"),
    }
}

fn corpus(a: CorpusArgs) -> Result<()> {
    let c = corpus_from(&suite(&a.suite)?)?;
    fs::write(&a.output, c.to_text())?;
    eprintln!("wrote {} records", c.len());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut problems = suite(&a.suite)?;
    if !a.only.is_empty() {
        for id in &a.only {
            if desk_problem(id).is_none() {
                bail!("unknown problem `{id}`");
            }
        }
        let keep: BTreeSet<&String> = a.only.iter().collect();
        problems.retain(|p| keep.contains(&p.id));
    }
    let models = load_models(a.model.as_deref())?;
    let cfg = SuiteConfig {
        search: a.search.config()?,
        examples: a.examples,
        out_dir: Some(a.output.clone()),
        corpus_out: a.corpus,
        ..Default::default()
    };
    let summary = run_suite(&problems, models.as_ref(), &cfg)?;
    print_summary(&summary);
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let summary = RunSummary::load(&a.dir).with_context(|| format!("reading the summary in {}", a.dir.display()))?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print_summary(&summary);
    }
    Ok(())
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map_or("-".into(), |v| format!("{v:.digits$}"))
}

fn print_summary(s: &RunSummary) {
    println!("mode {:?}, {}", s.mode, s.budget_regime);
    println!("{:<12} {:<16} {:<10} {:>12} {:>8} {:>8}", "problem", "group", "status", "candidates", "time", "jaccard");
    for r in &s.rows {
        let (status, cands, time) = match (&r.report, &r.error) {
            (Some(rep), _) => (format!("{:?}", rep.status), rep.candidates_evaluated.to_string(), format!("{:.2}", rep.wall_time_secs)),
            (None, Some(_)) => ("error".into(), "-".into(), "-".into()),
            (None, None) => ("-".into(), "-".into(), "-".into()),
        };
        println!("{:<12} {:<16} {:<10} {:>12} {:>8} {:>8}", r.id, r.group.name(), status, cands, time, opt(r.jaccard, 2));
    }
    println!();
    for (g, c) in &s.coverage {
        println!("{:<16} {}/{} ({:.2})", g.name(), c.solved, c.attempted, c.coverage);
    }
    println!(
        "coverage {:.2}, candidates mean {} median {}, jaccard mean {}",
        s.overall_coverage,
        opt(s.mean_candidates, 1),
        opt(s.median_candidates, 1),
        opt(s.mean_jaccard, 3)
    );
    if let Some(st) = &s.stats {
        println!("\nfragment frequencies");
        for (g, row) in &st.frequencies {
            let cells: Vec<String> = row.iter().map(|(k, f)| format!("{k} {f:.2}")).collect();
            println!("  {:<16} {}", g.name(), cells.join(", "));
        }
        println!("\ntransitions (row -> column)");
        for (label, row) in st.rows.iter().zip(&st.matrix) {
            let cells: Vec<String> = st
                .columns
                .iter()
                .zip(row)
                .filter(|(_, p)| **p > 0.0)
                .map(|(c, p)| format!("{c} {p:.2}"))
                .collect();
            println!("  {label:<22} {}", cells.join(", "));
        }
    }
}
