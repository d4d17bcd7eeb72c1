use std::collections::BTreeSet;
use std::ops::ControlFlow;

use sketchsynth::fragments::{compile, parse_sequence};
use sketchsynth::harness::{corpus_from, desk_problem, desk_suite};
use sketchsynth::ir::{
    BinOp, BlockId, Binding, Const, Function, InstKind, Item, MemoryEnv, Operand, Pred, Role, Terminator, ValueId,
};
use sketchsynth::models::{ForestConfig, MarkovConfig, Models, DEFAULT_THETA};
use sketchsynth::spec::{build_spec, builtin_oracle, floats_close, Oracle, SamplingConfig, Value};
use sketchsynth::synth::{
    bind_placeholders, evaluate_candidate, fill_holes, search_sequence, synthesize, Mode, SearchConfig, Status, Verdict,
};

fn models() -> Models {
    let corpus = corpus_from(&desk_suite()).unwrap();
    Models::train(&corpus, &ForestConfig::default(), DEFAULT_THETA, &MarkovConfig::default()).unwrap()
}

fn instructions(f: &Function) -> Vec<(Option<ValueId>, InstKind)> {
    f.blocks
        .iter()
        .flat_map(|b| &b.items)
        .filter_map(|it| if let Item::Inst(i) = it { Some((i.result, i.kind.clone())) } else { None })
        .collect()
}

#[test]
fn dot_fill_appears_in_enumeration() {
    let p = desk_problem("dot").unwrap();
    let sketch = compile(&p.signature, p.known_solution_sequence.as_ref().unwrap()).unwrap();
    let loads: BTreeSet<ValueId> = instructions(&sketch.function)
        .into_iter()
        .filter_map(|(r, k)| matches!(k, InstKind::Load { .. }).then_some(r).flatten())
        .collect();
    assert_eq!(loads.len(), 2);
    let mut seen = 0usize;
    let mut found = false;
    fill_holes(&sketch, &SearchConfig::default(), &mut |f| {
        seen += 1;
        let insts = instructions(f);
        let product = insts.iter().find_map(|(r, k)| match k {
            InstKind::Bin(BinOp::FMul, Operand::Value(x), Operand::Value(y)) if loads.contains(x) && loads.contains(y) => *r,
            _ => None,
        });
        if let Some(h) = product {
            found = insts.iter().any(|(_, k)| {
                matches!(k, InstKind::Bin(BinOp::FAdd, a, b) if *a == Operand::Value(h) || *b == Operand::Value(h))
            });
        }
        if found || seen > 200_000 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    assert!(found, "no h = d * e; g = g + h fill among {seen} candidates");
}

#[test]
fn zero_instruction_budget_yields_bare_skeleton() {
    let sig = sketchsynth::spec::parse_signature("int f(int x)").unwrap();
    let sketch = compile(&sig, &parse_sequence("linear").unwrap()).unwrap();
    let cfg = SearchConfig { max_instrs_per_hole: 0, ..Default::default() };
    let mut out = Vec::new();
    fill_holes(&sketch, &cfg, &mut |f| {
        out.push(f.clone());
        ControlFlow::Continue(())
    });
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].instruction_count(), sketch.function.instruction_count());
    assert!(out[0].holes().is_empty());
}

#[test]
fn fill_order_is_deterministic() {
    let p = desk_problem("count-eq").unwrap();
    let sketch = compile(&p.signature, p.known_solution_sequence.as_ref().unwrap()).unwrap();
    let take = |n: usize| {
        let mut out = Vec::new();
        fill_holes(&sketch, &SearchConfig::default(), &mut |f| {
            out.push(f.clone());
            if out.len() == n { ControlFlow::Break(()) } else { ControlFlow::Continue(()) }
        });
        out
    };
    let a = take(300);
    assert_eq!(a.len(), 300);
    assert_eq!(a, take(300));
    let sizes: Vec<usize> = a.iter().map(Function::instruction_count).collect();
    assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "{sizes:?}");
}

#[test]
fn strlen_condition_binding_is_enumerated() {
    let p = desk_problem("strlen").unwrap();
    let sketch = compile(&p.signature, p.known_solution_sequence.as_ref().unwrap()).unwrap();
    let cfg = SearchConfig::default();
    let mut found = false;
    let mut fills = 0;
    fill_holes(&sketch, &cfg, &mut |cand| {
        fills += 1;
        let loads: Vec<ValueId> = instructions(cand)
            .into_iter()
            .filter_map(|(r, k)| matches!(k, InstKind::Load { .. }).then_some(r).flatten())
            .collect();
        if !loads.is_empty() {
            bind_placeholders(cand, &cfg, &mut |f| {
                found = f.placeholders.iter().any(|ph| {
                    ph.role == Role::Cond
                        && matches!(ph.binding, Some(Binding::Compare(Pred::Ne, Operand::Value(v), Operand::Const(Const::Int(0))))
                            | Some(Binding::Compare(Pred::Ne, Operand::Const(Const::Int(0)), Operand::Value(v))) if loads.contains(&v))
                });
                if found { ControlFlow::Break(()) } else { ControlFlow::Continue(()) }
            });
        }
        if found || fills > 5_000 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) }
    });
    assert!(found, "cond = (s[i] != 0) not among bindings of {fills} fills");
}

#[test]
fn placeholder_free_candidate_binds_to_itself() {
    let mut f = Function::new(sketchsynth::spec::parse_signature("int f(int x)").unwrap());
    f.blocks[0].term = Terminator::Ret(Some(Operand::Value(f.param_value(0))));
    let mut out = Vec::new();
    bind_placeholders(&f, &SearchConfig::default(), &mut |g| {
        out.push(g.clone());
        ControlFlow::Continue(())
    });
    assert_eq!(out, vec![f]);
}

#[test]
fn accumulator_init_takes_each_pool_constant() {
    let sig = sketchsynth::spec::parse_signature("int f(int n)").unwrap();
    let sketch = compile(&sig, &parse_sequence("arg-loop(n) ∘ accumulate").unwrap()).unwrap();
    let cfg = SearchConfig { constant_pool: vec![0, 1], placeholder_value_pool: vec![0, 1], ..Default::default() };
    let mut first = None;
    fill_holes(&sketch, &cfg, &mut |f| {
        first = Some(f.clone());
        ControlFlow::Break(())
    });
    let mut inits = BTreeSet::new();
    bind_placeholders(&first.unwrap(), &cfg, &mut |f| {
        for ph in &f.placeholders {
            if let (Role::AccInit, Some(Binding::Operand(Operand::Const(Const::Int(c))))) = (ph.role, ph.binding) {
                inits.insert(c);
            }
        }
        ControlFlow::Continue(())
    });
    assert!(inits.contains(&0) && inits.contains(&1), "{inits:?}");
}

fn dot_spec(examples: usize, seed: u64) -> sketchsynth::spec::ProblemSpec {
    desk_problem("dot").unwrap().spec(examples, seed).unwrap()
}

#[test]
fn constant_zero_fails_at_first_nonzero_example() {
    let spec = dot_spec(32, 5);
    let mut f = Function::new(spec.signature.clone());
    f.blocks[0].term = Terminator::Ret(Some(Operand::Const(Const::Float(0.0))));
    let mut oracle = builtin_oracle("builtin:dot").unwrap();
    let expected = spec
        .examples
        .iter()
        .position(|e| match oracle.evaluate(&e.inputs).unwrap().returned {
            Some(Value::Float(x)) => !floats_close(x, 0.0, 1e-5),
            _ => true,
        })
        .expect("some dot product is nonzero");
    let cfg = SearchConfig::default();
    assert_eq!(evaluate_candidate(&f, &spec, &cfg.memory, cfg.tolerance).unwrap(), Verdict::FailAt(expected));
}

#[test]
fn load_one_past_the_end_is_out_of_bounds() {
    let mut spec = dot_spec(32, 5);
    // c = len(a), so a[c] is one past the last element
    for e in &mut spec.examples {
        let n = e.inputs[0].as_buffer().unwrap().len();
        e.inputs[2] = Value::Int(n as i64);
    }
    let mut f = Function::new(spec.signature.clone());
    let (a, c) = (Operand::Value(f.param_value(0)), Operand::Value(f.param_value(2)));
    let v = f.push_inst(BlockId(0), InstKind::Load { ptr: a, index: c, checked: true }, "v");
    f.blocks[0].term = Terminator::Ret(v.map(Operand::Value));
    // with no padding every buffer ends exactly at its length
    let tight = MemoryEnv { length: 1, max_length: 1 };
    assert_eq!(evaluate_candidate(&f, &spec, &tight, 1e-5).unwrap(), Verdict::OutOfBounds);
}

#[test]
fn unbound_candidate_is_rejected() {
    let p = desk_problem("dot").unwrap();
    let sketch = compile(&p.signature, p.known_solution_sequence.as_ref().unwrap()).unwrap();
    let cfg = SearchConfig::default();
    assert!(evaluate_candidate(&sketch.function, &dot_spec(8, 0), &cfg.memory, cfg.tolerance).is_err());
}

#[test]
fn zero_budget_times_out_immediately() {
    let cfg = SearchConfig { time_budget_secs: 0.0, ..Default::default() };
    let r = synthesize(&dot_spec(32, 0), Some(&models()), &cfg);
    assert_eq!(r.status, Status::Timeout);
    assert_eq!(r.candidates_evaluated, 0);
}

#[test]
fn uniform_mode_solves_identity() {
    let mut oracle = builtin_oracle("builtin:identity").unwrap();
    let sig = oracle.signature().clone();
    let spec = build_spec(&sig, &mut oracle, &SamplingConfig::default()).unwrap();
    let r = synthesize(&spec, None, &SearchConfig { time_budget_secs: 30.0, ..Default::default() });
    assert_eq!(r.mode, Mode::Uniform);
    assert_eq!(r.status, Status::Solved);
}

#[test]
fn dot_is_solved_and_sound() {
    let spec = dot_spec(32, 0);
    let r = synthesize(&spec, Some(&models()), &SearchConfig { time_budget_secs: 60.0, ..Default::default() });
    assert_eq!(r.status, Status::Solved);
    let sol = &r.solution.as_ref().unwrap().function;
    assert!(!sol.has_bounds_checks());
    let fresh = dot_spec(64, 1);
    let cfg = SearchConfig::default();
    assert_eq!(evaluate_candidate(sol, &fresh, &cfg.memory, cfg.tolerance).unwrap(), Verdict::Pass);
    let record = r.corpus_record(&spec.signature).unwrap();
    assert_eq!(Some(record.sequence), r.fragment_sequence);
}

#[test]
fn single_worker_runs_are_reproducible() {
    let spec = desk_problem("sum").unwrap().spec(32, 0).unwrap();
    let m = models();
    let cfg = SearchConfig { time_budget_secs: 60.0, ..Default::default() };
    let a = synthesize(&spec, Some(&m), &cfg);
    let b = synthesize(&spec, Some(&m), &cfg);
    assert_eq!(a.status, Status::Solved);
    assert_eq!((a.status, &a.solution, a.candidates_evaluated, a.sketches_tried), (b.status, &b.solution, b.candidates_evaluated, b.sketches_tried));
    let par = synthesize(&spec, Some(&m), &SearchConfig { workers: 2, ..cfg });
    assert_eq!((&par.solution, par.candidates_evaluated), (&a.solution, a.candidates_evaluated));
}

#[test]
fn budgets_are_respected() {
    let spec = desk_problem("matvec").unwrap().spec(32, 0).unwrap();
    let cfg = SearchConfig { max_sketches: 3, max_candidates_per_sketch: 200, time_budget_secs: 30.0, ..Default::default() };
    let r = synthesize(&spec, Some(&models()), &cfg);
    assert!(r.sketches_tried <= 3);
    assert!(r.candidates_evaluated <= 3 * 200);
    let cfg = SearchConfig { time_budget_secs: 1.0, ..Default::default() };
    let r = synthesize(&spec, Some(&models()), &cfg);
    assert!(r.wall_time_secs < 1.5, "{}", r.wall_time_secs);
}

#[test]
fn bad_configs_are_reported() {
    assert!(SearchConfig { constant_pool: vec![], ..Default::default() }.check().is_err());
    assert!(SearchConfig { max_sketches: 0, ..Default::default() }.check().is_err());
    assert!(SearchConfig::default().check().is_ok());
    assert_eq!("iid-only".parse::<Mode>().unwrap(), Mode::IidOnly);
}

#[test]
fn capped_sketches_resume_when_drawn_again() {
    let p = desk_problem("sum").unwrap();
    let spec = p.spec(32, 0).unwrap();
    let seq = p.known_solution_sequence.unwrap();
    let full = search_sequence(&spec, &seq, &SearchConfig::default());
    assert_eq!(full.status, Status::Solved);
    let cap = full.candidates_evaluated / 4;
    assert!(cap > 0);
    let cfg = SearchConfig { max_candidates_per_sketch: cap, time_budget_secs: 60.0, ..Default::default() };
    // one visit cannot reach the solution
    assert_eq!(search_sequence(&spec, &seq, &cfg).status, Status::Exhausted);
    let r = synthesize(&spec, Some(&models()), &cfg);
    assert_eq!(r.status, Status::Solved);
    assert!(r.candidates_evaluated <= r.sketches_tried * cap);
}
