//! The search engine: sample sketches, fill their holes, bind their
//! placeholders and test every candidate against the spec.

mod bind;
mod eval;
mod fill;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::rc::Rc;
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fragments::{compile, format_sequence, instantiate_population, FragArg, Fragment, Sketch};
use crate::ir::{render_c, render_ir, DomTree, Function, MemoryEnv, DEFAULT_STEP_LIMIT};
use crate::models::{CorpusRecord, Models};
use crate::spec::{ProblemSpec, DEFAULT_TOLERANCE};

pub use eval::{evaluate_candidate, Verdict};

use bind::{domains, for_each_tuple};
use eval::Evaluator;
use fill::{Fill, FillPlan};

/// How sketches are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Markov sequences conditioned on the predicted initial set.
    Markov,
    /// Uniform sequences over the predicted initial set.
    IidOnly,
    /// Uniform sequences over the whole population; needs no models.
    Uniform,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "markov" => Ok(Mode::Markov),
            "iid-only" => Ok(Mode::IidOnly),
            "uniform" => Ok(Mode::Uniform),
            _ => Err(format!("unknown mode `{s}` (expected markov, iid-only or uniform)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub mode: Mode,
    pub max_sketches: usize,
    pub max_candidates_per_sketch: u64,
    pub max_instrs_per_hole: usize,
    /// Integer constants available to hole instructions. Fixed-loop
    /// bounds of the sketch are added per sketch.
    pub constant_pool: Vec<i64>,
    /// Constants available to placeholder bindings.
    pub placeholder_value_pool: Vec<i64>,
    pub max_bindings_per_fill: usize,
    /// Sequence length cap for the uniform samplers.
    pub max_sequence_len: usize,
    pub time_budget_secs: f64,
    pub seed: u64,
    /// 1 evaluates serially; more evaluates batches on a thread pool.
    pub workers: usize,
    pub batch_size: usize,
    pub memory: MemoryEnv,
    pub step_limit: u64,
    pub tolerance: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mode: Mode::Markov,
            max_sketches: 2000,
            max_candidates_per_sketch: 50_000,
            max_instrs_per_hole: 4,
            constant_pool: vec![0, 1, 2, -1],
            placeholder_value_pool: vec![0, 1, 2, -1],
            max_bindings_per_fill: 512,
            max_sequence_len: 8,
            time_budget_secs: 60.0,
            seed: 42,
            workers: 1,
            batch_size: 256,
            memory: MemoryEnv::default(),
            step_limit: DEFAULT_STEP_LIMIT,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

impl SearchConfig {
    pub fn check(&self) -> Result<(), String> {
        let positive = [
            ("max_sketches", self.max_sketches as u64),
            ("max_candidates_per_sketch", self.max_candidates_per_sketch),
            ("max_instrs_per_hole", self.max_instrs_per_hole as u64),
            ("max_bindings_per_fill", self.max_bindings_per_fill as u64),
            ("max_sequence_len", self.max_sequence_len as u64),
            ("workers", self.workers as u64),
            ("batch_size", self.batch_size as u64),
            ("step_limit", self.step_limit),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be at least 1"));
        }
        if self.constant_pool.is_empty() || self.placeholder_value_pool.is_empty() {
            return Err("constant pools must be nonempty".into());
        }
        if !(self.time_budget_secs >= 0.0) || self.memory.length == 0 || self.memory.length > self.memory.max_length {
            return Err("invalid time budget or memory sizes".into());
        }
        Ok(())
    }

    fn int_pool(&self, sketch: &Sketch) -> Vec<i64> {
        let mut pool = self.constant_pool.clone();
        for a in sketch.fragment.atoms() {
            if let Some(FragArg::Const(n)) = a.arg {
                if !pool.contains(&(n as i64)) {
                    pool.push(n as i64);
                }
            }
        }
        pool
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Solved,
    Exhausted,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// The solution with bounds checks removed.
    pub function: Function,
    pub ir: String,
    pub c: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub status: Status,
    pub solution: Option<Solution>,
    pub fragment_sequence: Option<Vec<Fragment>>,
    pub candidates_evaluated: u64,
    pub sketches_tried: u64,
    pub wall_time_secs: f64,
    /// Mode actually used (markov falls back to uniform without models).
    pub mode: Mode,
    pub initial_fragments: Vec<Fragment>,
}

impl SynthesisReport {
    pub fn solved(&self) -> bool {
        self.status == Status::Solved
    }

    /// The corpus record of a solved report.
    pub fn corpus_record(&self, sig: &crate::spec::Signature) -> Option<CorpusRecord> {
        let seq = self.fragment_sequence.clone().filter(|_| self.solved())?;
        CorpusRecord::new(sig.clone(), seq).ok()
    }
}

enum SketchResult {
    Found(Function),
    Exhausted,
    Timeout,
}

/// Collects candidates and evaluates them, serially or in batches.
struct Runner<'e> {
    eval: &'e Evaluator<'e>,
    pool: Option<&'e rayon::ThreadPool>,
    batch: Vec<Function>,
    batch_size: usize,
    deadline: Instant,
    budget: u64,
    /// Candidates passed over unevaluated; covered by an earlier visit.
    skip: u64,
    skipped: u64,
    evaluated: u64,
    found: Option<Function>,
    timed_out: bool,
    /// Stopped at `budget` rather than by running out of candidates.
    capped: bool,
}

impl<'e> Runner<'e> {
    fn new(
        eval: &'e Evaluator<'e>,
        pool: Option<&'e rayon::ThreadPool>,
        cfg: &SearchConfig,
        deadline: Instant,
        skip: u64,
    ) -> Self {
        Runner {
            eval,
            pool,
            batch: Vec::new(),
            batch_size: cfg.batch_size,
            deadline,
            budget: cfg.max_candidates_per_sketch,
            skip,
            skipped: 0,
            evaluated: 0,
            found: None,
            timed_out: false,
            capped: false,
        }
    }

    fn out_of_time(&mut self) -> bool {
        if Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        self.timed_out
    }

    fn accept(&mut self, f: &Function) -> bool {
        let stripped = f.strip_bounds_checks();
        if self.eval.evaluate(&stripped) == Verdict::Pass {
            self.found = Some(stripped);
            true
        } else {
            warn!("candidate passed but its stripped form did not; continuing");
            false
        }
    }

    fn offer(&mut self, f: &Function) -> ControlFlow<()> {
        if self.skipped < self.skip {
            self.skipped += 1;
            return if self.out_of_time() { ControlFlow::Break(()) } else { ControlFlow::Continue(()) };
        }
        if self.evaluated + self.batch.len() as u64 >= self.budget {
            self.capped = true;
            let _ = self.flush();
            return ControlFlow::Break(());
        }
        if self.out_of_time() {
            let _ = self.flush();
            return ControlFlow::Break(());
        }
        if self.pool.is_none() {
            self.evaluated += 1;
            if self.eval.evaluate(f) == Verdict::Pass && self.accept(f) {
                return ControlFlow::Break(());
            }
            return ControlFlow::Continue(());
        }
        self.batch.push(f.clone());
        if self.batch.len() >= self.batch_size {
            return self.flush();
        }
        ControlFlow::Continue(())
    }

    /// Evaluates the pending batch; the lowest passing index wins.
    fn flush(&mut self) -> ControlFlow<()> {
        let Some(pool) = self.pool else { return ControlFlow::Continue(()) };
        let batch = std::mem::take(&mut self.batch);
        if batch.is_empty() {
            return ControlFlow::Continue(());
        }
        let eval = self.eval;
        let hit = pool.install(|| batch.par_iter().position_first(|f| eval.evaluate(f) == Verdict::Pass));
        match hit {
            Some(i) => {
                self.evaluated += i as u64 + 1;
                if self.accept(&batch[i]) {
                    ControlFlow::Break(())
                } else {
                    // re-offer the rest of the batch serially through the pool path
                    let rest: Vec<Function> = batch[i + 1..].to_vec();
                    for f in &rest {
                        self.offer(f)?;
                    }
                    ControlFlow::Continue(())
                }
            }
            None => {
                self.evaluated += batch.len() as u64;
                ControlFlow::Continue(())
            }
        }
    }
}

/// Binding cost band `b`: rank sums `2^b - 1 ..= 2^(b+1) - 2`.
fn band(b: usize) -> (usize, usize) {
    ((1 << b) - 1, (1 << (b + 1)) - 2)
}

const MAX_BANDS: usize = 10;

fn hole_bits(ids: &[Vec<crate::ir::ValueId>]) -> (Vec<(crate::ir::ValueId, u64)>, u64) {
    let flat: Vec<_> = ids.iter().flatten().copied().collect();
    let bits = flat.iter().enumerate().map(|(i, v)| (*v, 1u64 << i)).collect();
    let full = if flat.is_empty() { 0 } else { u64::MAX >> (64 - flat.len()) };
    (bits, full)
}

/// Binding domains shared by all fills with the same instruction types.
struct FillShape {
    doms: Vec<bind::Domain>,
    costs: Vec<Vec<usize>>,
    full: u64,
    max_sum: usize,
    empty: bool,
}

/// Searches one sketch. Levels interleave fill size `k` with binding cost
/// band `b` (level = k + b), so small fills get expensive bindings no
/// earlier than larger fills get cheap ones.
fn search_sketch(sketch: &Sketch, cfg: &SearchConfig, runner: &mut Runner) -> SketchResult {
    let f = &sketch.function;
    let Ok(dom) = DomTree::compute(f) else { return SketchResult::Exhausted };
    let plan = FillPlan::new(f, dom, &cfg.int_pool(sketch), cfg.max_instrs_per_hole);
    let kmax = plan.holes.len() * cfg.max_instrs_per_hole;
    // per k: highest band that may still hold tuples
    let mut open_until = vec![MAX_BANDS; kmax + 1];
    let mut shapes: HashMap<Vec<u8>, Rc<FillShape>> = HashMap::new();
    for level in 0..=kmax + MAX_BANDS {
        for k in 0..=kmax.min(level) {
            let b = level - k;
            if b >= MAX_BANDS || b > open_until[k] {
                continue;
            }
            let (lo, hi) = band(b);
            let mut any_reachable = false;
            let flow = plan.for_each_fill(k, &mut |fill: &Fill| {
                if runner.out_of_time() {
                    return ControlFlow::Break(());
                }
                let key = plan.type_key(fill);
                let shape = shapes.entry(key).or_insert_with(|| {
                    let (func, ids) = plan.materialize(fill);
                    let (bits, full) = hole_bits(&ids);
                    let doms = domains(&func, &plan.dom, &cfg.placeholder_value_pool, &bits);
                    let costs: Vec<Vec<usize>> = doms.iter().map(|d| d.costs.clone()).collect();
                    let max_sum = costs.iter().map(|c| c.last().copied().unwrap_or(0)).sum();
                    let empty = costs.iter().any(|c| c.is_empty());
                    Rc::new(FillShape { doms, costs, full, max_sum, empty })
                });
                let shape = Rc::clone(shape);
                if shape.empty || shape.max_sum < lo {
                    return ControlFlow::Continue(());
                }
                any_reachable = true;
                let used_static = plan.static_uses(fill);
                let mut func: Option<Function> = None;
                // the cap counts offered candidates, not masked-out tuples
                let mut offered = 0;
                let (_, flow) = for_each_tuple(&shape.costs, lo, hi, usize::MAX, &mut |t| {
                    let mask = t.iter().zip(&shape.doms).fold(used_static, |m, (&i, d)| m | d.options[i].1);
                    if mask & shape.full != shape.full {
                        return ControlFlow::Continue(());
                    }
                    if offered == cfg.max_bindings_per_fill {
                        return ControlFlow::Break(());
                    }
                    offered += 1;
                    let func = func.get_or_insert_with(|| plan.materialize(fill).0);
                    for (&i, d) in t.iter().zip(&shape.doms) {
                        func.placeholders[d.id.0 as usize].binding = Some(d.options[i].0);
                    }
                    runner.offer(func)
                });
                if offered == cfg.max_bindings_per_fill {
                    return ControlFlow::Continue(());
                }
                flow
            });
            if flow.is_continue() && runner.flush().is_continue() {
                if !any_reachable {
                    open_until[k] = open_until[k].min(b);
                }
                continue;
            }
            return match (&runner.found, runner.timed_out) {
                (Some(f), _) => SketchResult::Found(f.clone()),
                (None, true) => SketchResult::Timeout,
                (None, false) => SketchResult::Exhausted,
            };
        }
    }
    match runner.flush() {
        ControlFlow::Break(()) if runner.found.is_some() => SketchResult::Found(runner.found.clone().unwrap()),
        _ if runner.timed_out => SketchResult::Timeout,
        _ => SketchResult::Exhausted,
    }
}

/// Filled functions of a sketch (placeholders unbound), by nondecreasing
/// instruction count.
pub fn fill_holes(sketch: &Sketch, cfg: &SearchConfig, visit: &mut dyn FnMut(&Function) -> ControlFlow<()>) {
    let f = &sketch.function;
    let Ok(dom) = DomTree::compute(f) else { return };
    let plan = FillPlan::new(f, dom, &cfg.int_pool(sketch), cfg.max_instrs_per_hole);
    for k in 0..=plan.holes.len() * cfg.max_instrs_per_hole {
        if plan.for_each_fill(k, &mut |fill| visit(&plan.materialize(fill).0)).is_break() {
            return;
        }
    }
}

/// Bindings of a filled function's placeholders, cheapest first, capped
/// at `max_bindings_per_fill`.
pub fn bind_placeholders(candidate: &Function, cfg: &SearchConfig, visit: &mut dyn FnMut(&Function) -> ControlFlow<()>) {
    let Ok(dom) = DomTree::compute(candidate) else { return };
    let doms = domains(candidate, &dom, &cfg.placeholder_value_pool, &[]);
    let costs: Vec<Vec<usize>> = doms.iter().map(|d| d.costs.clone()).collect();
    let mut f = candidate.clone();
    let _ = for_each_tuple(&costs, 0, usize::MAX, cfg.max_bindings_per_fill, &mut |t| {
        for (&i, d) in t.iter().zip(&doms) {
            f.placeholders[d.id.0 as usize].binding = Some(d.options[i].0);
        }
        visit(&f)
    });
}

fn sample_uniform<R: Rng>(pool: &[Fragment], max_len: usize, rng: &mut R) -> Vec<Fragment> {
    if pool.is_empty() {
        return Vec::new();
    }
    let n = rng.gen_range(1..=max_len);
    (0..n).map(|_| pool.choose(rng).unwrap().clone()).collect()
}

/// Runs the full search for one problem.
///
/// Each visit to a sketch evaluates at most `max_candidates_per_sketch`
/// candidates. Drawing a capped sketch again resumes its enumeration where
/// the last visit stopped; sketches with no candidates left are skipped.
pub fn synthesize(spec: &ProblemSpec, models: Option<&Models>, cfg: &SearchConfig) -> SynthesisReport {
    let start = Instant::now();
    let sig = &spec.signature;
    let mode = match (cfg.mode, models) {
        (Mode::Uniform, _) | (_, None) => Mode::Uniform,
        (m, Some(_)) => m,
    };
    let population = instantiate_population(sig);
    let f0: BTreeSet<Fragment> = match models {
        Some(m) if mode != Mode::Uniform => m.iid.predict_f0(spec, &population),
        _ => population.iter().cloned().collect(),
    };
    let mut report = SynthesisReport {
        status: Status::Exhausted,
        solution: None,
        fragment_sequence: None,
        candidates_evaluated: 0,
        sketches_tried: 0,
        wall_time_secs: 0.0,
        mode,
        initial_fragments: f0.iter().cloned().collect(),
    };
    let budget = Duration::try_from_secs_f64(cfg.time_budget_secs).unwrap_or(Duration::MAX);
    let deadline = start.checked_add(budget).unwrap_or(start + Duration::from_secs(86_400 * 365));
    if budget.is_zero() {
        report.status = Status::Timeout;
        return report;
    }
    let pool = (cfg.workers > 1)
        .then(|| rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().ok())
        .flatten();
    let evaluator = Evaluator::new(spec, cfg.memory, cfg.step_limit, cfg.tolerance);
    let f0_list: Vec<Fragment> = if f0.is_empty() { population.clone() } else { f0.iter().cloned().collect() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // sketches that ran out of candidates, and how far capped ones got
    let mut finished = HashSet::new();
    let mut resume: HashMap<String, u64> = HashMap::new();
    let max_draws = cfg.max_sketches.saturating_mul(50);
    let mut draws = 0;
    while (report.sketches_tried as usize) < cfg.max_sketches && draws < max_draws {
        if Instant::now() >= deadline {
            report.status = Status::Timeout;
            break;
        }
        draws += 1;
        let seq = match (mode, models) {
            (Mode::Markov, Some(m)) => m.markov.sample_sequence(sig, &f0, &mut rng),
            (Mode::IidOnly, _) => sample_uniform(&f0_list, cfg.max_sequence_len, &mut rng),
            _ => sample_uniform(&population, cfg.max_sequence_len, &mut rng),
        };
        let key = format_sequence(&seq);
        if seq.is_empty() || finished.contains(&key) {
            continue;
        }
        let Ok(sketch) = compile(sig, &seq) else {
            finished.insert(key);
            continue;
        };
        let skip = resume.get(&key).copied().unwrap_or(0);
        report.sketches_tried += 1;
        debug!("sketch {}: {}", report.sketches_tried, format_sequence(&seq));
        let mut runner = Runner::new(&evaluator, pool.as_ref(), cfg, deadline, skip);
        let result = search_sketch(&sketch, cfg, &mut runner);
        report.candidates_evaluated += runner.evaluated;
        match result {
            SketchResult::Found(func) => {
                info!("solved {} with {}", sig.name(), format_sequence(&seq));
                report.status = Status::Solved;
                report.solution = Some(Solution { ir: render_ir(&func), c: render_c(&func), function: func });
                report.fragment_sequence = Some(seq);
                break;
            }
            SketchResult::Timeout => {
                report.status = Status::Timeout;
                break;
            }
            SketchResult::Exhausted if runner.capped => {
                resume.insert(key, skip + runner.evaluated);
            }
            SketchResult::Exhausted => {
                finished.insert(key);
            }
        }
    }
    report.wall_time_secs = start.elapsed().as_secs_f64();
    report
}

/// Searches the single sketch compiled from `seq`, skipping sampling.
pub fn search_sequence(spec: &ProblemSpec, seq: &[Fragment], cfg: &SearchConfig) -> SynthesisReport {
    let start = Instant::now();
    let mut report = SynthesisReport {
        status: Status::Exhausted,
        solution: None,
        fragment_sequence: None,
        candidates_evaluated: 0,
        sketches_tried: 0,
        wall_time_secs: 0.0,
        mode: cfg.mode,
        initial_fragments: Vec::new(),
    };
    let budget = Duration::try_from_secs_f64(cfg.time_budget_secs).unwrap_or(Duration::MAX);
    let Ok(sketch) = compile(&spec.signature, seq) else { return report };
    if budget.is_zero() {
        report.status = Status::Timeout;
        return report;
    }
    let deadline = start.checked_add(budget).unwrap_or(start + Duration::from_secs(86_400 * 365));
    let evaluator = Evaluator::new(spec, cfg.memory, cfg.step_limit, cfg.tolerance);
    let pool = (cfg.workers > 1)
        .then(|| rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().ok())
        .flatten();
    let mut runner = Runner::new(&evaluator, pool.as_ref(), cfg, deadline, 0);
    report.sketches_tried = 1;
    let result = search_sketch(&sketch, cfg, &mut runner);
    report.candidates_evaluated = runner.evaluated;
    match result {
        SketchResult::Found(func) => {
            report.status = Status::Solved;
            report.solution = Some(Solution { ir: render_ir(&func), c: render_c(&func), function: func });
            report.fragment_sequence = Some(seq.to_vec());
        }
        SketchResult::Timeout => report.status = Status::Timeout,
        SketchResult::Exhausted => {}
    }
    report.wall_time_secs = start.elapsed().as_secs_f64();
    report
}

