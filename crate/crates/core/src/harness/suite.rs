//! Suite runs, summaries and fragment statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{true_f0, BenchmarkProblem, Group, HarnessError};
use crate::fragments::{Fragment, FragmentKey};
use crate::models::{jaccard, CorpusRecord, MarkovConfig, MarkovKey, MarkovModel, Models, TrainingCorpus};
use crate::spec::Signature;
use crate::synth::{synthesize, Mode, SearchConfig, SynthesisReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    /// Search settings; `time_budget_secs` is the per-problem timeout.
    pub search: SearchConfig,
    pub examples: usize,
    pub spec_seed: u64,
    /// Where rows and the summary are written. Existing rows are reused.
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    /// Corpus file that solved records are appended to.
    #[serde(skip)]
    pub corpus_out: Option<PathBuf>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { search: SearchConfig::default(), examples: 32, spec_seed: 0, out_dir: None, corpus_out: None }
    }
}

/// One problem's outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemRow {
    pub id: String,
    pub group: Group,
    pub signature: Signature,
    pub report: Option<SynthesisReport>,
    /// Set when the problem could not be attempted.
    pub error: Option<String>,
    /// Jaccard of the initial fragment set against the annotation.
    pub jaccard: Option<f64>,
}

impl ProblemRow {
    pub fn solved(&self) -> bool {
        self.report.as_ref().is_some_and(SynthesisReport::solved)
    }

    pub fn candidates(&self) -> Option<u64> {
        self.report.as_ref().map(|r| r.candidates_evaluated)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCoverage {
    pub attempted: usize,
    pub solved: usize,
    pub coverage: f64,
}

/// Per-group fragment frequencies and the transition matrix of a Markov
/// model trained on the solved sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragmentStats {
    /// Group -> fragment kind -> share of the group's solution atoms.
    pub frequencies: BTreeMap<Group, BTreeMap<String, f64>>,
    /// Row labels: `f_start` followed by every template.
    pub rows: Vec<String>,
    /// Column labels: every template followed by `f_end`.
    pub columns: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    /// Every problem gets the same wall-clock budget.
    pub budget_regime: String,
    pub rows: Vec<ProblemRow>,
    pub coverage: BTreeMap<Group, GroupCoverage>,
    pub overall_coverage: f64,
    /// Over solved problems.
    pub mean_candidates: Option<f64>,
    pub median_candidates: Option<f64>,
    pub mean_jaccard: Option<f64>,
    pub stats: Option<FragmentStats>,
}

impl RunSummary {
    /// Builds the summary and every aggregate from the rows.
    pub fn from_rows(rows: Vec<ProblemRow>, mode: Mode, budget_secs: f64) -> RunSummary {
        let mut coverage: BTreeMap<Group, GroupCoverage> = BTreeMap::new();
        for r in &rows {
            let c = coverage.entry(r.group).or_insert(GroupCoverage { attempted: 0, solved: 0, coverage: 0.0 });
            c.attempted += 1;
            c.solved += r.solved() as usize;
        }
        for c in coverage.values_mut() {
            c.coverage = c.solved as f64 / c.attempted as f64;
        }
        let solved = rows.iter().filter(|r| r.solved()).count();
        let overall_coverage = if rows.is_empty() { 0.0 } else { solved as f64 / rows.len() as f64 };
        let mut cands: Vec<u64> = rows.iter().filter(|r| r.solved()).filter_map(ProblemRow::candidates).collect();
        cands.sort_unstable();
        let mean_candidates = mean(cands.iter().map(|&c| c as f64));
        let median_candidates = match cands.len() {
            0 => None,
            n if n % 2 == 1 => Some(cands[n / 2] as f64),
            n => Some((cands[n / 2 - 1] + cands[n / 2]) as f64 / 2.0),
        };
        let mean_jaccard = mean(rows.iter().filter_map(|r| r.jaccard));
        let mut summary = RunSummary {
            mode,
            budget_regime: format!("single budget of {budget_secs} s per problem"),
            rows,
            coverage,
            overall_coverage,
            mean_candidates,
            median_candidates,
            mean_jaccard,
            stats: None,
        };
        summary.stats = fragment_stats(std::slice::from_ref(&summary)).ok();
        summary
    }

    /// Whether every aggregate matches a recomputation from the rows.
    pub fn is_consistent(&self) -> bool {
        let budget = self
            .budget_regime
            .strip_prefix("single budget of ")
            .and_then(|s| s.strip_suffix(" s per problem"))
            .and_then(|s| s.parse().ok())
            .unwrap_or(f64::NAN);
        RunSummary::from_rows(self.rows.clone(), self.mode, budget) == *self
    }

    pub fn solved_ids(&self) -> BTreeSet<String> {
        self.rows.iter().filter(|r| r.solved()).map(|r| r.id.clone()).collect()
    }

    pub fn load(dir: &Path) -> Result<RunSummary, HarnessError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join(SUMMARY_FILE))?)?)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

pub const SUMMARY_FILE: &str = "summary.json";
const CONFIG_FILE: &str = "config.json";
const ROWS_DIR: &str = "problems";

fn solved_records(summaries: &[RunSummary]) -> Vec<(Group, CorpusRecord)> {
    summaries
        .iter()
        .flat_map(|s| &s.rows)
        .filter_map(|r| Some((r.group, r.report.as_ref()?.corpus_record(&r.signature)?)))
        .collect()
}

/// Fragment frequencies per group and the base transition matrix of a
/// Markov model retrained on every solved sequence.
pub fn fragment_stats(summaries: &[RunSummary]) -> Result<FragmentStats, HarnessError> {
    let solved = solved_records(summaries);
    if solved.is_empty() {
        return Err(HarnessError::NoSolved);
    }
    let mut counts: BTreeMap<Group, BTreeMap<String, usize>> = BTreeMap::new();
    for (g, r) in &solved {
        let row = counts.entry(*g).or_default();
        for a in r.sequence.iter().flat_map(Fragment::atoms) {
            *row.entry(a.kind.name().to_string()).or_default() += 1;
        }
    }
    let frequencies = counts
        .into_iter()
        .map(|(g, row)| {
            let total: usize = row.values().sum();
            (g, row.into_iter().map(|(k, n)| (k, n as f64 / total as f64)).collect())
        })
        .collect();
    let corpus = TrainingCorpus { records: solved.into_iter().map(|(_, r)| r).collect() };
    let model = MarkovModel::train(&corpus, &MarkovConfig::default())?;
    let templates: Vec<MarkovKey> = model.support().iter().copied().filter(|k| matches!(k, MarkovKey::Frag(_))).collect();
    // with every template allowed the blend reduces to the base model
    let all: BTreeSet<FragmentKey> =
        templates.iter().filter_map(|k| if let MarkovKey::Frag(f) = k { Some(*f) } else { None }).collect();
    let row_keys: Vec<MarkovKey> = std::iter::once(MarkovKey::Start).chain(templates.iter().copied()).collect();
    let col_keys: Vec<MarkovKey> = templates.iter().copied().chain(std::iter::once(MarkovKey::End)).collect();
    let matrix = row_keys
        .iter()
        .map(|&a| col_keys.iter().map(|&b| model.transition_prob(a, b, &all)).collect())
        .collect();
    Ok(FragmentStats {
        frequencies,
        rows: row_keys.iter().map(ToString::to_string).collect(),
        columns: col_keys.iter().map(ToString::to_string).collect(),
        matrix,
    })
}

fn row_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(ROWS_DIR).join(format!("{id}.json"))
}

fn attempt(p: &BenchmarkProblem, models: Option<&Models>, cfg: &SuiteConfig) -> ProblemRow {
    let mut row = ProblemRow {
        id: p.id.clone(),
        group: p.group,
        signature: p.signature.clone(),
        report: None,
        error: None,
        jaccard: None,
    };
    let spec = match p.spec(cfg.examples, cfg.spec_seed) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("{}: {e}", p.id);
            row.error = Some(e.to_string());
            return row;
        }
    };
    let report = synthesize(&spec, models, &cfg.search);
    if report.mode != Mode::Uniform {
        let predicted: BTreeSet<Fragment> = report.initial_fragments.iter().cloned().collect();
        row.jaccard = true_f0(p, &spec).map(|t| jaccard(&predicted, &t));
    }
    log::info!("{}: {:?} after {} candidates", p.id, report.status, report.candidates_evaluated);
    row.report = Some(report);
    row
}

/// Runs the engine on every problem and writes the summary to
/// `cfg.out_dir` when set. Rows already present there are reused.
pub fn run_suite(problems: &[BenchmarkProblem], models: Option<&Models>, cfg: &SuiteConfig) -> Result<RunSummary, HarnessError> {
    if problems.is_empty() {
        return Err(HarnessError::Empty);
    }
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir.join(ROWS_DIR))?;
        let config = serde_json::to_string_pretty(cfg)?;
        let path = dir.join(CONFIG_FILE);
        match std::fs::read_to_string(&path) {
            Ok(old) if old != config => return Err(HarnessError::StaleOutput(path.display().to_string())),
            Ok(_) => {}
            Err(_) => std::fs::write(&path, config)?,
        }
    }
    let mut rows = Vec::with_capacity(problems.len());
    for p in problems {
        let cached = cfg
            .out_dir
            .as_ref()
            .and_then(|d| std::fs::read_to_string(row_path(d, &p.id)).ok())
            .and_then(|s| serde_json::from_str::<ProblemRow>(&s).ok());
        let row = match cached {
            Some(r) => r,
            None => {
                let r = attempt(p, models, cfg);
                if let Some(d) = &cfg.out_dir {
                    std::fs::write(row_path(d, &p.id), serde_json::to_string_pretty(&r)?)?;
                }
                if let (Some(path), Some(rec)) = (&cfg.corpus_out, r.report.as_ref().and_then(|x| x.corpus_record(&p.signature))) {
                    TrainingCorpus::append(path, &rec)?;
                }
                r
            }
        };
        rows.push(row);
    }
    let mode = match (cfg.search.mode, models) {
        (_, None) => Mode::Uniform,
        (m, Some(_)) => m,
    };
    let summary = RunSummary::from_rows(rows, mode, cfg.search.time_budget_secs);
    if let Some(dir) = &cfg.out_dir {
        std::fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(summary)
}
