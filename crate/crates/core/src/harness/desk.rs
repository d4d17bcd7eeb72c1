//! The built-in desk benchmark suite.

use serde::{Deserialize, Serialize};

use crate::fragments::{parse_sequence, Fragment};
use crate::spec::{
    build_spec, builtin_oracle, open_oracle, parse_signature, Oracle, ProblemSpec, SamplingConfig, Signature,
    SizeParam, SizeRelation, SpecError,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Group {
    MakespeareLike,
    SimplInt,
    SimplArray,
    Lambda2,
    String,
    Mathfu,
    Blas,
    Dsp,
}

impl Group {
    pub const ALL: [Group; 8] = [
        Group::MakespeareLike,
        Group::SimplInt,
        Group::SimplArray,
        Group::Lambda2,
        Group::String,
        Group::Mathfu,
        Group::Blas,
        Group::Dsp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::MakespeareLike => "makespeare-like",
            Group::SimplInt => "simpl-int",
            Group::SimplArray => "simpl-array",
            Group::Lambda2 => "lambda2",
            Group::String => "string",
            Group::Mathfu => "mathfu",
            Group::Blas => "blas",
            Group::Dsp => "dsp",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkProblem {
    pub id: String,
    pub group: Group,
    pub signature: Signature,
    pub oracle: String,
    pub sampling: SamplingConfig,
    pub known_solution_sequence: Option<Vec<Fragment>>,
}

impl BenchmarkProblem {
    /// Builds the problem's spec with `examples` examples drawn from `seed`.
    pub fn spec(&self, examples: usize, seed: u64) -> Result<ProblemSpec, SpecError> {
        let cfg = self.sampling.clone().with_examples(examples).with_seed(seed);
        match builtin_oracle(&self.oracle) {
            Some(mut o) => build_spec(&self.signature, &mut o, &cfg),
            None => {
                let mut o: Box<dyn Oracle> = open_oracle(&self.oracle, Some(&self.signature))?;
                build_spec(&self.signature, o.as_mut(), &cfg)
            }
        }
    }

    /// Checks that the oracle resolves and the overrides name real int
    /// parameters.
    pub fn check(&self) -> Result<(), String> {
        let oracle = builtin_oracle(&self.oracle).ok_or_else(|| format!("{}: unknown oracle", self.id))?;
        if oracle.signature().params().len() != self.signature.params().len() {
            return Err(format!("{}: signature does not match the oracle", self.id));
        }
        for sp in &self.sampling.size_params {
            match self.signature.param(&sp.name) {
                Some(p) if p.ty == crate::spec::ParamType::Int => {}
                _ => return Err(format!("{}: size parameter `{}` is not an int parameter", self.id, sp.name)),
            }
        }
        if let Some(seq) = &self.known_solution_sequence {
            for f in seq {
                f.check(&self.signature).map_err(|e| format!("{}: {e}", self.id))?;
            }
        }
        Ok(())
    }
}

// id, group, declaration, size parameter, string mode, annotated sequence
type Row = (&'static str, Group, &'static str, Option<(&'static str, SizeRelation)>, bool, &'static str);

const DESK: &[Row] = &[
    ("sum", Group::MakespeareLike, "int sum(int *a, int n)", Some(("n", SizeRelation::Len)), false,
        "arg-loop(n) ∘ gather(a) ∘ accumulate ∘ linear"),
    ("max", Group::MakespeareLike, "int amax(int *a, int n)", Some(("n", SizeRelation::Len)), false,
        "arg-loop(n) ∘ gather(a) ∘ accumulate ∘ linear"),
    ("abs", Group::MakespeareLike, "int iabs(int x)", None, false, "if-else ∘ linear"),
    ("triangle", Group::SimplInt, "int tri(int n)", None, false, "arg-loop(n) ∘ accumulate ∘ linear"),
    ("factorial", Group::SimplInt, "int fact(int n)", None, false, "arg-loop(n) ∘ accumulate ∘ linear"),
    ("max2", Group::SimplInt, "int max2(int a, int b)", None, false, "linear"),
    ("count-eq", Group::SimplArray, "int count(int *a, int n, int x)", Some(("n", SizeRelation::Len)), false,
        "arg-loop(n) ∘ gather(a) ∘ accumulate ∘ if ∘ linear"),
    ("vadd", Group::SimplArray, "void vadd(int *a, int *b, int *out, int n)", Some(("n", SizeRelation::Len)), false,
        "arg-loop(n) ∘ gather(a) ∘ gather(b) ∘ store-output(out)"),
    ("last", Group::Lambda2, "int last(int *a, int n)", Some(("n", SizeRelation::NonEmpty)), false,
        "linear ∘ gather(a)"),
    ("incr", Group::Lambda2, "void incr(int *a, int n)", Some(("n", SizeRelation::Len)), false,
        "arg-loop(n) ∘ gather(a) ∘ store-output(a)"),
    ("strlen", Group::String, "int slen(char *s)", None, true, "while-loop"),
    ("strcpy", Group::String, "void scopy(char *dst, char *src)", None, true, "while-loop ∘ store-output(dst)"),
    ("countc", Group::String, "int countc(char *s, char c)", None, true, "while-loop ∘ accumulate ∘ if ∘ linear"),
    ("scale", Group::Mathfu, "void scale(float *in, float *out, int n)", Some(("n", SizeRelation::Len)), false,
        "arg-loop(n) ∘ gather(in) ∘ store-output(out)"),
    ("vsub", Group::Mathfu, "void vsub(float *a, float *b, float *out, int n)", Some(("n", SizeRelation::Len)), false,
        "arg-loop(n) ∘ gather(a) ∘ gather(b) ∘ store-output(out)"),
    ("dot", Group::Blas, "float dot(float *a, float *b, int c)", Some(("c", SizeRelation::Len)), false,
        "arg-loop(c) ∘ gather(a) ∘ gather(b) ∘ accumulate ∘ linear"),
    ("saxpy", Group::Blas, "void saxpy(float alpha, float *x, float *y, int n)", Some(("n", SizeRelation::Len)), false,
        "arg-loop(n) ∘ gather(x) ∘ gather(y) ∘ store-output(y)"),
    ("matvec", Group::Blas, "void matvec(float *m, float *x, float *y, int n)", Some(("n", SizeRelation::Sqrt)), false,
        "arg-loop(n) ∘ seq ∘ accumulate ∘ arg-loop(n) ∘ affine-index ∘ gather(m) ∘ gather(x) ∘ linear ∘ store-output(y)"),
    ("fir", Group::Dsp, "void fir(float *x, float *y, int n)", Some(("n", SizeRelation::LenMinusOne)), false,
        "arg-loop(n) ∘ gather(x) ∘ affine-index ∘ gather(x) ∘ store-output(y)"),
    ("energy", Group::Dsp, "float energy(float *x, int n)", Some(("n", SizeRelation::Len)), false,
        "arg-loop(n) ∘ gather(x) ∘ accumulate ∘ linear"),
];

/// The desk suite: every built-in except `identity`, with its annotated
/// solution sequence.
pub fn desk_suite() -> Vec<BenchmarkProblem> {
    DESK.iter()
        .map(|&(id, group, decl, size, string_mode, seq)| {
            let signature = parse_signature(decl).expect("desk signatures parse");
            // narrow alphabets so equal elements are common
            let char_range = if id == "countc" { (97, 100) } else { (32, 126) };
            let int_range = if id == "count-eq" { (-2, 2) } else { (-16, 16) };
            let sampling = SamplingConfig {
                string_mode,
                char_range,
                int_range,
                size_params: size.map(|(n, r)| vec![SizeParam { name: n.into(), relation: r }]).unwrap_or_default(),
                ..Default::default()
            };
            BenchmarkProblem {
                id: id.into(),
                group,
                signature,
                oracle: format!("builtin:{id}"),
                sampling,
                known_solution_sequence: Some(parse_sequence(seq).expect("desk sequences parse")),
            }
        })
        .collect()
}

/// Looks up one desk problem by id.
pub fn desk_problem(id: &str) -> Option<BenchmarkProblem> {
    desk_suite().into_iter().find(|p| p.id == id)
}
