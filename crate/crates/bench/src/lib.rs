//! Shared fixtures for the criterion benchmarks.

use sketchsynth::harness::{corpus_from, desk_problem, desk_suite};
use sketchsynth::ir::Function;
use sketchsynth::models::{ForestConfig, MarkovConfig, Models, TrainingCorpus, DEFAULT_THETA};
use sketchsynth::spec::ProblemSpec;
use sketchsynth::synth::{search_sequence, SearchConfig};

pub fn desk_corpus() -> TrainingCorpus {
    corpus_from(&desk_suite()).expect("desk annotations are valid")
}

pub fn desk_models() -> Models {
    Models::train(&desk_corpus(), &ForestConfig::default(), DEFAULT_THETA, &MarkovConfig::default())
        .expect("desk corpus trains")
}

/// A desk problem's 32-example spec.
pub fn spec(id: &str) -> ProblemSpec {
    desk_problem(id).expect("known desk problem").spec(32, 0).expect("builtin oracle")
}

/// The solution found from a problem's annotated sequence.
pub fn annotated_solution(id: &str) -> Function {
    let p = desk_problem(id).expect("known desk problem");
    let r = search_sequence(&spec(id), p.known_solution_sequence.as_ref().unwrap(), &SearchConfig::default());
    r.solution.expect("annotated sequence is solvable").function
}
