//! Problem specifications: signatures, sampled inputs, oracle observations
//! and the observational-equivalence check.

mod builtins;
mod oracle;
mod sampling;
mod types;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtins::builtin_ids;
pub use oracle::{
    builtin_oracle, decode_request, decode_response, encode_request, encode_response, open_oracle,
    BuiltinFn, BuiltinOracle, Oracle, ProcessOracle,
};
pub use sampling::{sample_inputs, SamplingConfig, SizeParam, SizeRelation};
pub use types::{
    parse_signature, Buffer, Example, Observation, Param, ParamType, ReturnType, ScalarKind,
    Signature, Value,
};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("unsupported type `{0}`")]
    UnsupportedType(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("malformed signature: {0}")]
    Malformed(String),
    #[error("signature has no observable output (void return and no pointer params)")]
    Unobservable,
    #[error("value does not conform to signature: {0}")]
    Nonconforming(String),
    #[error("observation failed: {0}")]
    Observation(String),
    #[error("oracle is nondeterministic")]
    Nondeterministic,
    #[error("unknown oracle `{0}`")]
    UnknownOracle(String),
    #[error("invalid sampling configuration")]
    BadSampling,
}

/// Default relative tolerance for float comparisons.
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

/// A synthesis problem: the signature plus observed examples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub signature: Signature,
    pub examples: Vec<Example>,
    pub sampling: SamplingConfig,
}

impl ProblemSpec {
    pub fn new(signature: Signature, examples: Vec<Example>, sampling: SamplingConfig) -> Result<Self, SpecError> {
        if examples.is_empty() {
            return Err(SpecError::Nonconforming("a spec needs at least one example".into()));
        }
        for e in &examples {
            e.check_against(&signature)?;
        }
        Ok(ProblemSpec { signature, examples, sampling })
    }
}

/// Calls the oracle on a copy of `inputs` and records the outcome.
pub fn observe(oracle: &mut dyn Oracle, inputs: &[Value]) -> Result<Example, SpecError> {
    let obs = oracle.evaluate(inputs)?;
    let ex = Example {
        inputs: inputs.to_vec(),
        returned: obs.returned,
        out_buffers: obs.out_buffers,
    };
    ex.check_against(oracle.signature())?;
    Ok(ex)
}

/// Samples `cfg.example_count` inputs and records the oracle on each.
///
/// The first sample is evaluated twice as a determinism spot check.
pub fn build_spec(sig: &Signature, oracle: &mut dyn Oracle, cfg: &SamplingConfig) -> Result<ProblemSpec, SpecError> {
    if !cfg.is_valid() || cfg.example_count == 0 {
        return Err(SpecError::BadSampling);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut examples = Vec::with_capacity(cfg.example_count);
    for i in 0..cfg.example_count {
        let inputs = sample_inputs(sig, &mut rng, cfg);
        let ex = observe(oracle, &inputs)?;
        if i == 0 {
            let again = observe(oracle, &inputs)?;
            if !equivalent(&ex, &again.observation(), 0.0) {
                return Err(SpecError::Nondeterministic);
            }
        }
        examples.push(ex);
    }
    ProblemSpec::new(sig.clone(), examples, cfg.clone())
}

/// Float comparison: relative within `tol`, absolute `tol` near zero.
pub fn floats_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b || (a.is_nan() && b.is_nan()) {
        return true;
    }
    let m = a.abs().max(b.abs());
    if !m.is_finite() {
        return false;
    }
    if m < 1e-6 {
        (a - b).abs() <= tol.max(1e-12)
    } else {
        (a - b).abs() <= tol * m
    }
}

fn scalars_match(a: &Value, b: &Value, tol: f64) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => floats_close(*x, *y, tol),
        (Value::Char(x), Value::Char(y)) => x == y,
        (Value::Int(x), Value::Int(y)) => x == y,
        _ => false,
    }
}

/// Element-wise buffer comparison over `expected`'s length.
pub fn buffers_match(expected: &Buffer, got: &Buffer, tol: f64) -> bool {
    match (expected, got) {
        (Buffer::Float(x), Buffer::Float(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(a, b)| floats_close(*a, *b, tol))
        }
        _ => expected == got,
    }
}

/// Whether an observed result agrees with the recorded example.
pub fn equivalent(expected: &Example, got: &Observation, tol: f64) -> bool {
    let ret_ok = match (&expected.returned, &got.returned) {
        (None, None) => true,
        (Some(a), Some(b)) => scalars_match(a, b, tol),
        _ => false,
    };
    ret_ok
        && expected.out_buffers.len() == got.out_buffers.len()
        && expected
            .out_buffers
            .iter()
            .zip(&got.out_buffers)
            .all(|(a, b)| buffers_match(a, b, tol))
}

/// Parameter indices whose buffer contents changed in some example.
pub fn detect_output_params(spec: &ProblemSpec) -> BTreeSet<usize> {
    let ptrs = spec.signature.pointer_params();
    let mut out = BTreeSet::new();
    for ex in &spec.examples {
        for (slot, &param) in ptrs.iter().enumerate() {
            let before = ex.inputs[param].as_buffer();
            if before != Some(&ex.out_buffers[slot]) {
                out.insert(param);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dot_spec(n: usize, seed: u64) -> ProblemSpec {
        let mut o = builtin_oracle("builtin:dot").unwrap();
        let sig = o.signature().clone();
        let cfg = SamplingConfig {
            size_params: vec![SizeParam { name: "c".into(), relation: SizeRelation::Len }],
            ..Default::default()
        }
        .with_examples(n)
        .with_seed(seed);
        build_spec(&sig, &mut o, &cfg).unwrap()
    }

    #[test]
    fn observe_dot_worked_example() {
        let mut o = builtin_oracle("builtin:dot").unwrap();
        let ex = observe(
            &mut o,
            &[
                Value::Buffer(Buffer::Float(vec![0.0, 1.2, -3.4, -5.6])),
                Value::Buffer(Buffer::Float(vec![-1.0, 1.2, 2.4, 3.2])),
                Value::Int(3),
            ],
        )
        .unwrap();
        let got = ex.returned.as_ref().and_then(Value::as_float).unwrap();
        assert!(floats_close(got, -6.72, 1e-5));
        assert_eq!(ex.inputs.len(), 3);
    }

    #[test]
    fn build_spec_is_deterministic() {
        let a = dot_spec(32, 42);
        assert_eq!(a.examples.len(), 32);
        assert!(a.examples.iter().all(|e| e.inputs.len() == 3));
        assert_eq!(a, dot_spec(32, 42));
        assert_eq!(dot_spec(1, 5).examples.len(), 1);
    }

    #[test]
    fn nondeterministic_oracle_rejected() {
        use std::sync::atomic::{AtomicI64, Ordering};
        static COUNTER: AtomicI64 = AtomicI64::new(0);
        fn flaky(_: &mut [Value]) -> Option<Value> {
            Some(Value::Int(COUNTER.fetch_add(1, Ordering::SeqCst)))
        }
        let sig = parse_signature("int r(int x)").unwrap();
        let mut o = BuiltinOracle::new("flaky", sig.clone(), flaky);
        let err = build_spec(&sig, &mut o, &SamplingConfig::default()).unwrap_err();
        assert!(matches!(err, SpecError::Nondeterministic));
    }

    #[test]
    fn equivalence_rules() {
        let ex = Example {
            inputs: vec![],
            returned: Some(Value::Float(-6.72)),
            out_buffers: vec![Buffer::Int(vec![2, 4])],
        };
        assert!(equivalent(&ex, &ex.observation(), DEFAULT_TOLERANCE));
        let near = Observation {
            returned: Some(Value::Float(-6.7200001)),
            out_buffers: vec![Buffer::Int(vec![2, 4])],
        };
        assert!(equivalent(&ex, &near, 1e-5));
        let off = Observation {
            returned: Some(Value::Float(-6.72)),
            out_buffers: vec![Buffer::Int(vec![2, 5])],
        };
        assert!(!equivalent(&ex, &off, 1e-5));
        let shape = Observation { returned: None, out_buffers: vec![] };
        assert!(!equivalent(&ex, &shape, 1e-5));
    }

    #[test]
    fn output_detection() {
        assert!(detect_output_params(&dot_spec(16, 1)).is_empty());
        let mut o = builtin_oracle("builtin:scale").unwrap();
        let sig = o.signature().clone();
        let cfg = SamplingConfig {
            size_params: vec![SizeParam { name: "n".into(), relation: SizeRelation::Len }],
            ..Default::default()
        };
        let spec = build_spec(&sig, &mut o, &cfg).unwrap();
        assert_eq!(detect_output_params(&spec), BTreeSet::from([1]));

        // zeros in, zeros out: the write is invisible
        let zero = SamplingConfig { float_range: (0.0, 0.0), ..cfg };
        let spec = build_spec(&sig, &mut o, &zero).unwrap();
        assert!(detect_output_params(&spec).is_empty());
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<u8>().prop_map(Value::Char),
            any::<i64>().prop_map(Value::Int),
            (-1e6f64..1e6).prop_map(Value::Float),
        ]
    }

    proptest! {
        #[test]
        fn equivalence_reflexive_and_symmetric(a in arb_value(), b in arb_value(), xs in proptest::collection::vec(any::<i64>(), 1..6)) {
            let ea = Example { inputs: vec![], returned: Some(a.clone()), out_buffers: vec![Buffer::Int(xs.clone())] };
            prop_assert!(equivalent(&ea, &ea.observation(), DEFAULT_TOLERANCE));
            if !matches!(a, Value::Float(_)) {
                let eb = Example { inputs: vec![], returned: Some(b.clone()), out_buffers: vec![Buffer::Int(xs)] };
                prop_assert_eq!(
                    equivalent(&ea, &eb.observation(), DEFAULT_TOLERANCE),
                    equivalent(&eb, &ea.observation(), DEFAULT_TOLERANCE)
                );
            }
        }

        #[test]
        fn detected_outputs_are_pointer_params(seed in 0u64..50) {
            let spec = dot_spec(4, seed);
            let ptrs = spec.signature.pointer_params();
            prop_assert!(detect_output_params(&spec).iter().all(|i| ptrs.contains(i)));
        }
    }
}
