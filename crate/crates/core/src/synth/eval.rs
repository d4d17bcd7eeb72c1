use serde::{Deserialize, Serialize};

use crate::ir::{execute, validate, Function, IrError, MemoryEnv, Outcome, PreparedInput};
use crate::spec::{equivalent, Example, Observation, ProblemSpec};

const SHORT_STEP_LIMIT: u64 = 2_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    /// Index of the first example the candidate disagrees with (division
    /// by zero counts as disagreement).
    FailAt(usize),
    OutOfBounds,
    /// Hit the step limit.
    Diverged,
}

/// Runs candidates against a spec, growing the buffer allocation on
/// out-of-bounds accesses.
pub(crate) struct Evaluator<'a> {
    spec: &'a ProblemSpec,
    levels: Vec<Vec<PreparedInput>>,
    step_limit: u64,
    tol: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(spec: &'a ProblemSpec, mem: MemoryEnv, step_limit: u64, tol: f64) -> Self {
        let mut levels = Vec::new();
        let mut m = mem;
        loop {
            levels.push(spec.examples.iter().map(|e| PreparedInput::new(&e.inputs, &m)).collect());
            if !m.grow() {
                break;
            }
        }
        Evaluator { spec, levels, step_limit, tol }
    }

    /// Runs every example under a short step limit first; examples still
    /// running then get the full limit, unless another example already
    /// disagreed. The verdict equals a single full-limit pass except that a
    /// disagreement may be reported ahead of an earlier divergence.
    fn run_level(&self, f: &Function, level: usize) -> Verdict {
        let short = self.step_limit.min(SHORT_STEP_LIMIT);
        let mut pending = Vec::new();
        for (i, (ex, input)) in self.spec.examples.iter().zip(&self.levels[level]).enumerate() {
            match self.check(f, ex, input, short, i) {
                None => {}
                Some(Verdict::Diverged) if short < self.step_limit => pending.push(i),
                Some(v) => return v,
            }
        }
        for i in pending {
            let (ex, input) = (&self.spec.examples[i], &self.levels[level][i]);
            if let Some(v) = self.check(f, ex, input, self.step_limit, i) {
                return v;
            }
        }
        Verdict::Pass
    }

    fn check(&self, f: &Function, ex: &Example, input: &PreparedInput, limit: u64, i: usize) -> Option<Verdict> {
        match execute(f, input, limit) {
            Outcome::Done { returned, out_buffers } => {
                (!equivalent(ex, &Observation { returned, out_buffers }, self.tol)).then_some(Verdict::FailAt(i))
            }
            Outcome::OutOfBounds { .. } => Some(Verdict::OutOfBounds),
            Outcome::DivByZero => Some(Verdict::FailAt(i)),
            Outcome::StepLimit => Some(Verdict::Diverged),
        }
    }

    /// Evaluates at the smallest allocation, doubling it after each
    /// out-of-bounds verdict until the limit.
    pub fn evaluate(&self, f: &Function) -> Verdict {
        let mut level = 0;
        loop {
            match self.run_level(f, level) {
                Verdict::OutOfBounds if level + 1 < self.levels.len() => level += 1,
                v => return v,
            }
        }
    }
}

/// Validates a fully bound candidate and checks it against every example
/// at a fixed allocation size, stopping at the first disagreement.
pub fn evaluate_candidate(f: &Function, spec: &ProblemSpec, mem: &MemoryEnv, tol: f64) -> Result<Verdict, IrError> {
    validate(f)?;
    let fixed = MemoryEnv { length: mem.length, max_length: mem.length };
    Ok(Evaluator::new(spec, fixed, crate::ir::DEFAULT_STEP_LIMIT, tol).evaluate(f))
}
