//! Benchmark suite, training pipeline and metrics.

mod desk;
mod suite;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use desk::{desk_problem, desk_suite, BenchmarkProblem, Group};
pub use suite::{fragment_stats, run_suite, FragmentStats, GroupCoverage, ProblemRow, RunSummary, SuiteConfig};

use crate::fragments::{instantiate_population, Fragment};
use crate::models::{jaccard, output_fragments, CorpusRecord, ForestConfig, IidModel, ModelError, TrainingCorpus};
use crate::spec::{ProblemSpec, SpecError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("fraction {0} is outside (0, 1)")]
    Fraction(f64),
    #[error("no problems given")]
    Empty,
    #[error("training needs {need} annotated problems but only {have} carry a solution sequence")]
    InsufficientAnnotated { need: usize, have: usize },
    #[error("no solved problems")]
    NoSolved,
    #[error("output directory holds a run with a different configuration: {0}")]
    StaleOutput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Splits `problems` into a training set of `round(fraction * n)` annotated
/// problems (at least one, leaving at least one for evaluation) and the
/// rest. Both halves keep the input order.
pub fn train_eval_split(
    problems: &[BenchmarkProblem],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<BenchmarkProblem>, Vec<BenchmarkProblem>), HarnessError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(HarnessError::Fraction(fraction));
    }
    if problems.len() < 2 {
        return Err(HarnessError::Empty);
    }
    let n = problems.len();
    let need = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut annotated: Vec<usize> = (0..n).filter(|&i| problems[i].known_solution_sequence.is_some()).collect();
    if annotated.len() < need {
        return Err(HarnessError::InsufficientAnnotated { need, have: annotated.len() });
    }
    annotated.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let chosen: BTreeSet<usize> = annotated[..need].iter().copied().collect();
    let (train, eval): (Vec<_>, Vec<_>) = problems.iter().enumerate().partition(|(i, _)| chosen.contains(i));
    Ok((train.into_iter().map(|(_, p)| p.clone()).collect(), eval.into_iter().map(|(_, p)| p.clone()).collect()))
}

/// The training corpus formed by the annotated problems.
pub fn corpus_from(problems: &[BenchmarkProblem]) -> Result<TrainingCorpus, HarnessError> {
    let records = problems
        .iter()
        .filter_map(|p| p.known_solution_sequence.as_ref().map(|s| CorpusRecord::new(p.signature.clone(), s.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrainingCorpus { records })
}

/// Ground-truth initial fragment set: the atoms of the annotated sequence
/// plus the store-outputs the examples reveal.
pub fn true_f0(problem: &BenchmarkProblem, spec: &ProblemSpec) -> Option<BTreeSet<Fragment>> {
    let seq = problem.known_solution_sequence.as_ref()?;
    let mut set: BTreeSet<Fragment> = seq.iter().flat_map(Fragment::atoms).collect();
    set.extend(output_fragments(spec));
    Some(set)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct JaccardReport {
    pub per_problem: Vec<(String, f64)>,
    /// Problems without ground truth or whose spec could not be built.
    pub skipped: Vec<String>,
}

impl JaccardReport {
    pub fn mean(&self) -> Option<f64> {
        if self.per_problem.is_empty() {
            return None;
        }
        Some(self.per_problem.iter().map(|(_, j)| j).sum::<f64>() / self.per_problem.len() as f64)
    }
}

/// Jaccard similarity between the predicted and true initial fragment sets
/// of every evaluation problem.
pub fn evaluate_jaccard(iid: &IidModel, problems: &[BenchmarkProblem], examples: usize, seed: u64) -> JaccardReport {
    let mut out = JaccardReport::default();
    for p in problems {
        if p.known_solution_sequence.is_none() {
            log::warn!("{}: no annotated solution, skipped", p.id);
            out.skipped.push(p.id.clone());
            continue;
        }
        let spec = match p.spec(examples, seed) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{}: {e}, skipped", p.id);
                out.skipped.push(p.id.clone());
                continue;
            }
        };
        let truth = true_f0(p, &spec).expect("annotation checked above");
        let predicted = iid.predict_f0(&spec, &instantiate_population(&p.signature));
        out.per_problem.push((p.id.clone(), jaccard(&predicted, &truth)));
    }
    out
}

/// Trains on all annotated problems but one and scores the held-out one,
/// for every annotated problem.
pub fn leave_one_out_jaccard(
    problems: &[BenchmarkProblem],
    forest: &ForestConfig,
    theta: f64,
    examples: usize,
    seed: u64,
) -> Result<JaccardReport, HarnessError> {
    let mut out = JaccardReport::default();
    for (i, p) in problems.iter().enumerate() {
        if p.known_solution_sequence.is_none() {
            out.skipped.push(p.id.clone());
            continue;
        }
        let rest: Vec<BenchmarkProblem> =
            problems.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| q.clone()).collect();
        let iid = IidModel::train(&corpus_from(&rest)?, forest, theta)?;
        let r = evaluate_jaccard(&iid, std::slice::from_ref(p), examples, seed);
        out.per_problem.extend(r.per_problem);
        out.skipped.extend(r.skipped);
    }
    Ok(out)
}
