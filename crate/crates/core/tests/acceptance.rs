//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sketchsynth::fragments::{check_sketch, compile, compose, Fragment, FragmentKey};
use sketchsynth::harness::{corpus_from, desk_suite, leave_one_out_jaccard, run_suite, RunSummary, SuiteConfig};
use sketchsynth::ir::{interpret, BlockId, DomTree, MemoryEnv, Outcome, Shape, DEFAULT_STEP_LIMIT};
use sketchsynth::models::{
    ForestConfig, MarkovConfig, MarkovKey, MarkovModel, Models, TrainingCorpus, DEFAULT_THETA,
};
use sketchsynth::spec::{
    build_spec, open_oracle, parse_signature, sample_inputs, Buffer, SamplingConfig, SizeParam, SizeRelation, Value,
};
use sketchsynth::synth::{bind_placeholders, evaluate_candidate, fill_holes, synthesize, Mode, SearchConfig, Verdict};

const TOL: f64 = 1e-5;

struct Ledger {
    failed: usize,
}

impl Ledger {
    fn report(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn desk_models() -> Models {
    let corpus = corpus_from(&desk_suite()).unwrap();
    Models::train(&corpus, &ForestConfig::default(), DEFAULT_THETA, &MarkovConfig::default()).unwrap()
}

fn worked_example(models: &Models) -> (bool, String) {
    let start = Instant::now();
    let sig = parse_signature("float f(float*, float*, int)").unwrap();
    let mut oracle = open_oracle("builtin:dot", Some(&sig)).unwrap();
    let sampling = SamplingConfig {
        size_params: vec![SizeParam { name: "p2".into(), relation: SizeRelation::Len }],
        ..Default::default()
    };
    let spec = build_spec(&sig, oracle.as_mut(), &sampling).unwrap();
    let cfg = SearchConfig { time_budget_secs: 120.0, ..Default::default() };
    let report = synthesize(&spec, Some(models), &cfg);
    let Some(sol) = report.solution else {
        return (false, format!("{:?} after {} candidates", report.status, report.candidates_evaluated));
    };
    let inputs = vec![
        Value::Buffer(Buffer::Float(vec![0.0, 1.2, -3.4, -5.6])),
        Value::Buffer(Buffer::Float(vec![-1.0, 1.2, 2.4, 3.2])),
        Value::Int(3),
    ];
    let ret = match interpret(&sol.function, &inputs, &MemoryEnv::default(), DEFAULT_STEP_LIMIT) {
        Ok(Outcome::Done { returned: Some(Value::Float(x)), .. }) => x,
        other => return (false, format!("worked inputs gave {other:?}")),
    };
    let verdict = evaluate_candidate(&sol.function, &spec, &MemoryEnv::default(), TOL).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = (ret + 6.72).abs() <= TOL && verdict == Verdict::Pass && spec.examples.len() == 32 && secs <= 120.0;
    (pass, format!("returned {ret:.6}, {:?} on {} examples, {secs:.1} s", verdict, spec.examples.len()))
}

fn suite_run(models: &Models, mode: Mode, budget: f64) -> RunSummary {
    let cfg = SuiteConfig {
        search: SearchConfig { mode, time_budget_secs: budget, ..Default::default() },
        ..Default::default()
    };
    run_suite(&desk_suite(), Some(models), &cfg).unwrap()
}

fn ablation(markov: &RunSummary, iid: &RunSummary) -> (bool, String) {
    let iid_rows: BTreeMap<&str, u64> =
        iid.rows.iter().filter(|r| r.solved()).map(|r| (r.id.as_str(), r.candidates().unwrap())).collect();
    let (mut m_total, mut i_total, mut both) = (0u64, 0u64, 0usize);
    for r in markov.rows.iter().filter(|r| r.solved()) {
        if let Some(&c) = iid_rows.get(r.id.as_str()) {
            m_total += r.candidates().unwrap();
            i_total += c;
            both += 1;
        }
    }
    let pass = both > 0 && (m_total as f64) <= 0.75 * i_total as f64;
    let ratio = if i_total > 0 { m_total as f64 / i_total as f64 } else { f64::NAN };
    (pass, format!("{both} problems solved in both, markov {m_total} vs iid-only {i_total} candidates (ratio {ratio:.3})"))
}

/// Fixed allocations of 4, 8, 16 and 32 elements; the first size that does
/// not go out of bounds decides, as in the search.
fn verify_with_growth(f: &sketchsynth::ir::Function, spec: &sketchsynth::spec::ProblemSpec) -> Verdict {
    let mut verdict = Verdict::OutOfBounds;
    for length in [4, 8, 16, 32] {
        verdict = evaluate_candidate(f, spec, &MemoryEnv { length, max_length: length }, TOL).unwrap();
        if verdict != Verdict::OutOfBounds {
            break;
        }
    }
    verdict
}

fn soundness(summary: &RunSummary) -> (bool, String) {
    let problems = desk_suite();
    let mut checked = 0;
    let mut bad = Vec::new();
    for row in summary.rows.iter().filter(|r| r.solved()) {
        let p = problems.iter().find(|p| p.id == row.id).unwrap();
        let fresh = p.spec(64, 1).unwrap();
        let f = &row.report.as_ref().unwrap().solution.as_ref().unwrap().function;
        match verify_with_growth(f, &fresh) {
            Verdict::Pass => checked += 1,
            other => bad.push(format!("{} ({other:?})", row.id)),
        }
    }
    (bad.is_empty() && checked > 0, format!("{checked} solutions re-verified on 64 fresh examples; failures: {bad:?}"))
}

// --- random generators ----------------------------------------------------

const STATES: [&str; 5] = ["linear", "gather(ptr-float)", "arg-loop(int)", "if", "accumulate"];

fn fkey(s: &str) -> FragmentKey {
    s.parse().unwrap()
}

fn arb_model() -> impl Strategy<Value = (MarkovModel, BTreeSet<FragmentKey>)> {
    (
        proptest::collection::vec((0usize..=5, 0usize..5, 1u64..6, any::<bool>()), 1..24),
        proptest::sample::subsequence(STATES.to_vec(), 0..=STATES.len()),
        0.0f64..=1.0,
    )
        .prop_map(|(edges, f0, b)| {
            let pairs = edges.into_iter().map(|(from, to, n, end)| {
                let a = if from == 5 { MarkovKey::Start } else { MarkovKey::Frag(fkey(STATES[from])) };
                let t = if end { MarkovKey::End } else { MarkovKey::Frag(fkey(STATES[to])) };
                (a, t, n)
            });
            let m = MarkovModel::from_pairs(pairs, MarkovConfig { b, max_len: 6 });
            (m, f0.into_iter().map(fkey).collect())
        })
}

fn arb_atom() -> impl Strategy<Value = Fragment> {
    prop_oneof![
        Just(Fragment::linear()),
        Just(Fragment::affine_index()),
        prop_oneof![Just("a"), Just("b")].prop_map(Fragment::gather),
        Just(Fragment::accumulate()),
        prop_oneof![Just("a"), Just("b")].prop_map(Fragment::store_output),
        (1u32..=8).prop_map(Fragment::fixed_loop),
        Just(Fragment::arg_loop("c")),
        Just(Fragment::while_loop()),
        Just(Fragment::if_()),
        Just(Fragment::if_else()),
        Just(Fragment::seq()),
    ]
}

fn arb_tree() -> impl Strategy<Value = Fragment> {
    arb_atom().prop_recursive(3, 24, 2, |inner| {
        (arb_atom(), proptest::collection::vec(inner, 0..=2)).prop_map(|(mut head, kids)| {
            head.children = kids.into_iter().take(head.kind.slots()).collect();
            head
        })
    })
}

fn arb_cfg() -> impl Strategy<Value = Vec<Vec<usize>>> {
    (1usize..=8).prop_flat_map(|n| {
        (proptest::collection::vec(proptest::collection::vec(0..n, 0..=2), n), proptest::collection::vec(any::<usize>(), n))
            .prop_map(move |(mut succs, parents)| {
                // a random spanning tree keeps every block reachable
                for b in 1..n {
                    let p = parents[b] % b;
                    if !succs[p].contains(&b) {
                        succs[p].push(b);
                    }
                }
                succs
            })
    })
}

fn headers(s: Option<&Shape>) -> usize {
    match s {
        None | Some(Shape::Block(_)) => 0,
        Some(Shape::Seq(v)) => v.iter().map(|x| headers(Some(x))).sum(),
        Some(Shape::Loop { body, .. }) => 1 + headers(Some(body)),
        Some(Shape::If { then, els, .. }) => headers(Some(then)) + headers(els.as_deref()),
    }
}

fn reachable_without(succs: &[Vec<usize>], removed: usize) -> Vec<bool> {
    let mut seen = vec![false; succs.len()];
    if removed == 0 {
        return seen;
    }
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(b) = stack.pop() {
        for &s in &succs[b] {
            if s != removed && !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
    }
    seen
}

fn atom_multiset(f: &Fragment) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for a in f.atoms() {
        *m.entry(a.to_string()).or_insert(0) += 1;
    }
    m
}

fn has_open_slot(f: &Fragment) -> bool {
    f.children.len() < f.kind.slots() || f.children.iter().any(has_open_slot)
}

fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn markov_normalization() -> Result<(), String> {
    run_property(1000, arb_model(), |(m, f0)| {
        let mut states: Vec<MarkovKey> = m.support().iter().copied().collect();
        states.push(MarkovKey::Start);
        for prev in states.iter().copied().filter(|&p| m.s(p) > 0) {
            let total: f64 = states.iter().map(|&n| m.transition_prob(prev, n, &f0)).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9, "{} sums to {}", prev, total);
        }
        Ok(())
    })
}

fn blend_endpoints() -> Result<(), String> {
    run_property(1000, arb_model(), |(m, f0)| {
        let mut base = m.clone();
        base.b = 0.0;
        let observed: BTreeSet<FragmentKey> =
            m.support().iter().filter_map(|k| if let MarkovKey::Frag(f) = k { Some(*f) } else { None }).collect();
        for &prev in m.support().iter().chain([&MarkovKey::Start]) {
            if m.s(prev) == 0 {
                continue;
            }
            for &next in m.support() {
                let raw = m.w(prev, next) as f64 / m.s(prev) as f64;
                prop_assert!((base.transition_prob(prev, next, &f0) - raw).abs() <= 1e-12);
                prop_assert!((m.transition_prob(prev, next, &observed) - raw).abs() <= 1e-12);
            }
        }
        Ok(())
    })
}

fn compose_compile() -> Result<(), String> {
    let sig = parse_signature("float f(float *a, float *b, int c)").unwrap();
    run_property(1000, (arb_tree(), arb_atom()), |(tree, atom)| {
        prop_assert!(tree.depth() <= 4);
        let s = compile(&sig, std::slice::from_ref(&tree)).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(check_sketch(&s.function).is_ok());
        let loops = tree.atoms().iter().filter(|a| a.kind.is_loop()).count();
        prop_assert_eq!(headers(s.function.shape.as_ref()), loops);

        let composed = compose(tree.clone(), atom.clone());
        let mut expect = atom_multiset(&tree);
        for (k, n) in atom_multiset(&atom) {
            *expect.entry(k).or_insert(0) += n;
        }
        if !has_open_slot(&tree) {
            *expect.entry("seq".into()).or_insert(0) += 1;
        }
        prop_assert_eq!(atom_multiset(&composed), expect);
        let s = compile(&sig, &[composed]).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(check_sketch(&s.function).is_ok());
        Ok(())
    })
}

fn nth<T: Clone>(visit: impl FnOnce(&mut dyn FnMut(&T) -> ControlFlow<()>), n: usize) -> Option<T> {
    let mut seen = 0;
    let mut last = None;
    visit(&mut |x: &T| {
        last = Some(x.clone());
        seen += 1;
        if seen > n {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    last
}

fn interpreter_safety() -> Result<(), String> {
    let sig = parse_signature("float f(float *a, float *b, int c)").unwrap();
    let cfg = SearchConfig { max_instrs_per_hole: 2, ..Default::default() };
    let mem = MemoryEnv::default();
    let strategy = (proptest::collection::vec(arb_atom(), 1..5), 0usize..40, 0usize..12, any::<u64>());
    run_property(10_000, strategy, |(seq, k, j, seed)| {
        let sketch = compile(&sig, &seq).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let Some(filled) = nth(|v| fill_holes(&sketch, &cfg, v), k) else { return Ok(()) };
        let Some(program) = nth(|v| bind_placeholders(&filled, &cfg, v), j) else { return Ok(()) };
        let inputs = sample_inputs(&sig, &mut ChaCha8Rng::seed_from_u64(seed), &SamplingConfig::default());
        let first = interpret(&program, &inputs, &mem, DEFAULT_STEP_LIMIT);
        let second = interpret(&program, &inputs, &mem, DEFAULT_STEP_LIMIT);
        prop_assert!(first.is_ok(), "bound program rejected: {:?}", first);
        prop_assert_eq!(&first, &second);
        if let Ok(Outcome::Done { out_buffers, .. }) = first {
            let lens: Vec<usize> = inputs.iter().filter_map(|v| v.as_buffer().map(Buffer::len)).collect();
            prop_assert_eq!(out_buffers.iter().map(Buffer::len).collect::<Vec<_>>(), lens);
        }
        Ok(())
    })
}

fn dominators() -> Result<(), String> {
    run_property(200, arb_cfg(), |succs| {
        let t = DomTree::from_successors(&succs).map_err(|b| TestCaseError::fail(format!("block {b} unreachable")))?;
        let n = succs.len();
        // d dominates b iff b is unreachable once d is removed
        let dom: Vec<Vec<bool>> =
            (0..n).map(|d| reachable_without(&succs, d).iter().enumerate().map(|(b, r)| b == d || !r).collect()).collect();
        for b in 0..n {
            for d in 0..n {
                prop_assert_eq!(t.dominates(BlockId(d as u32), BlockId(b as u32)), dom[d][b]);
            }
            let strict: Vec<usize> = (0..n).filter(|&d| d != b && dom[d][b]).collect();
            let idom = strict.iter().copied().find(|&d| strict.iter().all(|&o| dom[o][d]));
            prop_assert_eq!(t.idom(BlockId(b as u32)).map(BlockId::index), idom);
        }
        Ok(())
    })
}

fn sampling_fidelity() -> (bool, String) {
    let text = "int f(int n) ⊢ arg-loop(n) ∘ linear\nint f(int n) ⊢ arg-loop(n) ∘ linear\nint f(int n) ⊢ linear\n";
    let corpus = TrainingCorpus::parse(text).unwrap();
    let m = MarkovModel::train(&corpus, &MarkovConfig { b: 0.0, ..Default::default() }).unwrap();
    let sig = parse_signature("int f(int n)").unwrap();
    let f0: BTreeSet<Fragment> = [Fragment::arg_loop("n"), Fragment::linear()].into();
    let f0_keys: BTreeSet<FragmentKey> = f0.iter().map(|f| f.key(&sig)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 10_000;
    let mut counts: BTreeMap<MarkovKey, usize> = BTreeMap::new();
    for _ in 0..n {
        let first = m.sample_sequence(&sig, &f0, &mut rng).first().map_or(MarkovKey::End, |f| MarkovKey::Frag(f.key(&sig)));
        *counts.entry(first).or_insert(0) += 1;
    }
    let mut worst: f64 = 0.0;
    let mut keys: BTreeSet<MarkovKey> = counts.keys().copied().collect();
    keys.extend(m.support().iter().copied());
    for k in keys {
        let expected = m.transition_prob(MarkovKey::Start, k, &f0_keys);
        let got = counts.get(&k).copied().unwrap_or(0) as f64 / n as f64;
        worst = worst.max((expected - got).abs());
    }
    let loop_key = MarkovKey::Frag(Fragment::arg_loop("n").key(&sig));
    let p_loop = counts.get(&loop_key).copied().unwrap_or(0) as f64 / n as f64;
    let exact = (m.transition_prob(MarkovKey::Start, loop_key, &f0_keys) - 2.0 / 3.0).abs() <= 1e-12;
    (
        worst <= 0.03 && exact && (p_loop - 2.0 / 3.0).abs() <= 0.03,
        format!("empirical P(first = loop) {p_loop:.4} vs 2/3, largest deviation {worst:.4} over {n} samples"),
    )
}

fn main() {
    let mut ledger = Ledger { failed: 0 };
    let models = desk_models();

    let (pass, detail) = worked_example(&models);
    ledger.report("1 worked example", pass, detail);

    let start = Instant::now();
    let coverage = suite_run(&models, Mode::Markov, 60.0);
    let solved = coverage.rows.iter().filter(|r| r.solved()).count();
    ledger.report(
        "2 desk coverage",
        coverage.rows.len() >= 16 && coverage.overall_coverage >= 0.75,
        format!(
            "{solved}/{} solved at 60 s each ({:.2}) in {:.0} s",
            coverage.rows.len(),
            coverage.overall_coverage,
            start.elapsed().as_secs_f64()
        ),
    );

    let start = Instant::now();
    let markov = suite_run(&models, Mode::Markov, 20.0);
    let iid = suite_run(&models, Mode::IidOnly, 20.0);
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = ablation(&markov, &iid);
    ledger.report("3 model ablation", pass && secs <= 1800.0, format!("{detail}, both passes in {secs:.0} s"));

    let loo = leave_one_out_jaccard(&desk_suite(), &ForestConfig::default(), DEFAULT_THETA, 32, 0).unwrap();
    let mean = loo.mean().unwrap_or(0.0);
    let low: Vec<String> =
        loo.per_problem.iter().filter(|(_, j)| *j < 0.5).map(|(id, j)| format!("{id} {j:.2}")).collect();
    ledger.report(
        "4 leave-one-out jaccard",
        mean >= 0.6,
        format!("mean {mean:.4} over {} problems (floor 0.6); below 0.5: {}", loo.per_problem.len(), low.join(", ")),
    );

    let start = Instant::now();
    let suites: [(&str, fn() -> Result<(), String>); 5] = [
        ("markov normalization, 1000 cases", markov_normalization),
        ("blend endpoints, 1000 cases", blend_endpoints),
        ("compose/compile, 1000 trees", compose_compile),
        ("interpreter determinism and safety, 10000 programs", interpreter_safety),
        ("dominators vs brute force, 200 CFGs", dominators),
    ];
    let mut all = true;
    for (name, run) in suites {
        let t = Instant::now();
        let r = run();
        all &= r.is_ok();
        println!("  {name}: {} ({:.1} s)", r.as_ref().map_or_else(|e| format!("failed: {e}"), |_| "ok".into()), t.elapsed().as_secs_f64());
    }
    let (sound, detail) = soundness(&coverage);
    println!("  soundness: {detail}");
    let secs = start.elapsed().as_secs_f64();
    ledger.report("5 property suites", all && sound && secs <= 300.0, format!("finished in {secs:.1} s"));

    let (pass, detail) = sampling_fidelity();
    ledger.report("6 sampling fidelity", pass, detail);

    if ledger.failed > 0 {
        println!("{} criteria failed", ledger.failed);
        std::process::exit(1);
    }
}
