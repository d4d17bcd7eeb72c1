//! The fragment library: composable pieces of program structure, their
//! textual notation, and compilation into IR sketches.

mod compile;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spec::{ParamType, Signature};

pub use compile::{check_sketch, compile, Sketch};

#[derive(Debug, Error, PartialEq)]
pub enum FragmentError {
    #[error("cannot parse fragment `{0}`")]
    Parse(String),
    #[error("fragment `{frag}` is not valid for this signature: {why}")]
    BadArgs { frag: String, why: String },
    #[error("`{0}` takes too many children")]
    TooManyChildren(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FragmentGroup {
    Computation,
    Iteration,
    ControlFlow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FragmentKind {
    Linear,
    AffineIndex,
    Gather,
    Accumulate,
    StoreOutput,
    FixedLoop,
    ArgLoop,
    WhileLoop,
    If,
    IfElse,
    Seq,
}

impl FragmentKind {
    pub const ALL: [FragmentKind; 11] = [
        FragmentKind::Linear,
        FragmentKind::AffineIndex,
        FragmentKind::Gather,
        FragmentKind::Accumulate,
        FragmentKind::StoreOutput,
        FragmentKind::FixedLoop,
        FragmentKind::ArgLoop,
        FragmentKind::WhileLoop,
        FragmentKind::If,
        FragmentKind::IfElse,
        FragmentKind::Seq,
    ];

    pub fn group(self) -> FragmentGroup {
        use FragmentKind::*;
        match self {
            Linear | AffineIndex | Gather | Accumulate | StoreOutput => FragmentGroup::Computation,
            FixedLoop | ArgLoop | WhileLoop => FragmentGroup::Iteration,
            If | IfElse | Seq => FragmentGroup::ControlFlow,
        }
    }

    /// Number of composition slots.
    pub fn slots(self) -> usize {
        use FragmentKind::*;
        match self {
            Linear | StoreOutput => 0,
            AffineIndex | Gather | Accumulate | FixedLoop | ArgLoop | WhileLoop | If => 1,
            IfElse | Seq => 2,
        }
    }

    pub fn is_loop(self) -> bool {
        self.group() == FragmentGroup::Iteration
    }

    pub fn name(self) -> &'static str {
        use FragmentKind::*;
        match self {
            Linear => "linear",
            AffineIndex => "affine-index",
            Gather => "gather",
            Accumulate => "accumulate",
            StoreOutput => "store-output",
            FixedLoop => "fixed-loop",
            ArgLoop => "arg-loop",
            WhileLoop => "while-loop",
            If => "if",
            IfElse => "if-else",
            Seq => "seq",
        }
    }

    pub fn from_name(s: &str) -> Option<FragmentKind> {
        FragmentKind::ALL.into_iter().find(|k| k.name() == s)
    }

    fn takes_param(self) -> bool {
        matches!(self, FragmentKind::Gather | FragmentKind::StoreOutput | FragmentKind::ArgLoop)
    }
}

/// Argument bound into a fragment template.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FragArg {
    Param(String),
    Const(u32),
}

/// A fragment: a template instance plus the fragments filling its slots.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Fragment {
    pub kind: FragmentKind,
    pub arg: Option<FragArg>,
    pub children: Vec<Fragment>,
}

/// Loop bounds used when instantiating fixed loops.
pub const FIXED_LOOP_BOUNDS: std::ops::RangeInclusive<u32> = 1..=8;

impl Fragment {
    pub fn atom(kind: FragmentKind, arg: Option<FragArg>) -> Self {
        Fragment { kind, arg, children: Vec::new() }
    }

    pub fn linear() -> Self {
        Self::atom(FragmentKind::Linear, None)
    }

    pub fn affine_index() -> Self {
        Self::atom(FragmentKind::AffineIndex, None)
    }

    pub fn gather(p: &str) -> Self {
        Self::atom(FragmentKind::Gather, Some(FragArg::Param(p.into())))
    }

    pub fn accumulate() -> Self {
        Self::atom(FragmentKind::Accumulate, None)
    }

    pub fn store_output(p: &str) -> Self {
        Self::atom(FragmentKind::StoreOutput, Some(FragArg::Param(p.into())))
    }

    pub fn fixed_loop(n: u32) -> Self {
        Self::atom(FragmentKind::FixedLoop, Some(FragArg::Const(n)))
    }

    pub fn arg_loop(p: &str) -> Self {
        Self::atom(FragmentKind::ArgLoop, Some(FragArg::Param(p.into())))
    }

    pub fn while_loop() -> Self {
        Self::atom(FragmentKind::WhileLoop, None)
    }

    pub fn if_() -> Self {
        Self::atom(FragmentKind::If, None)
    }

    pub fn if_else() -> Self {
        Self::atom(FragmentKind::IfElse, None)
    }

    pub fn seq() -> Self {
        Self::atom(FragmentKind::Seq, None)
    }

    /// This fragment with its children removed.
    pub fn head(&self) -> Fragment {
        Fragment::atom(self.kind, self.arg.clone())
    }

    pub fn param(&self) -> Option<&str> {
        match &self.arg {
            Some(FragArg::Param(p)) => Some(p),
            _ => None,
        }
    }

    pub fn contains_loop(&self) -> bool {
        self.kind.is_loop() || self.children.iter().any(Fragment::contains_loop)
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(Fragment::depth).max().unwrap_or(0)
    }

    /// Pre-order list of every node's head.
    pub fn atoms(&self) -> Vec<Fragment> {
        let mut out = vec![self.head()];
        for c in &self.children {
            out.extend(c.atoms());
        }
        out
    }

    /// Checks arguments against `sig` and child counts against slots.
    pub fn check(&self, sig: &Signature) -> Result<(), FragmentError> {
        let bad = |why: &str| FragmentError::BadArgs { frag: self.head().to_string(), why: why.into() };
        match (self.kind, &self.arg) {
            (FragmentKind::FixedLoop, Some(FragArg::Const(_))) => {}
            (FragmentKind::FixedLoop, _) => return Err(bad("fixed-loop needs a constant bound")),
            (k, Some(FragArg::Param(p))) if k.takes_param() => {
                let ty = sig.param(p).map(|p| p.ty).ok_or_else(|| bad("unknown parameter"))?;
                let ok = match k {
                    FragmentKind::ArgLoop => ty == ParamType::Int,
                    _ => ty.is_pointer(),
                };
                if !ok {
                    return Err(bad("parameter has the wrong type"));
                }
            }
            (k, _) if k.takes_param() => return Err(bad("missing parameter argument")),
            (_, Some(_)) => return Err(bad("takes no argument")),
            (_, None) => {}
        }
        if self.children.len() > self.kind.slots() {
            return Err(FragmentError::TooManyChildren(self.head().to_string()));
        }
        self.children.iter().try_for_each(|c| c.check(sig))
    }

    /// Template key of this fragment's head under `sig`.
    pub fn key(&self, sig: &Signature) -> FragmentKey {
        let shape = match &self.arg {
            None => None,
            Some(FragArg::Const(n)) => Some(KeyArg::Const(*n)),
            Some(FragArg::Param(p)) => sig.param(p).map(|p| KeyArg::Type(p.ty)),
        };
        FragmentKey { kind: self.kind, shape }
    }
}

fn insert_first_empty(node: &mut Fragment, b: &mut Option<Fragment>) -> bool {
    for c in node.children.iter_mut() {
        if insert_first_empty(c, b) {
            return true;
        }
    }
    if node.children.len() < node.kind.slots() {
        node.children.push(b.take().expect("fragment to insert"));
        return true;
    }
    false
}

/// `a ∘ b`: `b` goes into the first empty slot of `a` in depth-first,
/// left-to-right order; when `a` is full the result is `seq(a, b)`.
pub fn compose(a: Fragment, b: Fragment) -> Fragment {
    let mut a = a;
    let mut b = Some(b);
    if insert_first_empty(&mut a, &mut b) {
        a
    } else {
        Fragment { kind: FragmentKind::Seq, arg: None, children: vec![a, b.unwrap()] }
    }
}

/// Sequence element including the identity markers used by the Markov
/// model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Piece {
    Start,
    End,
    Frag(Fragment),
}

pub fn compose_pieces(a: Piece, b: Piece) -> Piece {
    match (a, b) {
        (Piece::Start | Piece::End, x) | (x, Piece::Start | Piece::End) => x,
        (Piece::Frag(a), Piece::Frag(b)) => Piece::Frag(compose(a, b)),
    }
}

/// Left fold of [`compose`]. `None` for an empty sequence.
pub fn compose_all<I: IntoIterator<Item = Fragment>>(seq: I) -> Option<Fragment> {
    seq.into_iter().reduce(compose)
}

/// Argument shape of a template key: the parameter type or the constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyArg {
    Type(ParamType),
    Const(u32),
}

/// A fragment up to the names of its arguments, e.g. `gather(ptr-float)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FragmentKey {
    pub kind: FragmentKind,
    pub shape: Option<KeyArg>,
}

impl FragmentKey {
    pub fn bare(kind: FragmentKind) -> Self {
        FragmentKey { kind, shape: None }
    }

    /// Every fragment under `sig` that has this key.
    pub fn instances(&self, sig: &Signature) -> Vec<Fragment> {
        match self.shape {
            None if !self.kind.takes_param() && self.kind != FragmentKind::FixedLoop => {
                vec![Fragment::atom(self.kind, None)]
            }
            Some(KeyArg::Const(n)) if self.kind == FragmentKind::FixedLoop => vec![Fragment::fixed_loop(n)],
            Some(KeyArg::Type(t)) if self.kind.takes_param() => sig
                .params()
                .iter()
                .filter(|p| p.ty == t)
                .map(|p| Fragment::atom(self.kind, Some(FragArg::Param(p.name.clone()))))
                .filter(|f| f.check(sig).is_ok())
                .collect(),
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for FragmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        match self.shape {
            None => Ok(()),
            Some(KeyArg::Type(t)) => write!(f, "({})", t.short()),
            Some(KeyArg::Const(n)) => write!(f, "({n})"),
        }
    }
}

impl FromStr for FragmentKey {
    type Err = FragmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || FragmentError::Parse(s.to_string());
        let s = s.trim();
        let (name, arg) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], Some(&s[i + 1..s.len() - 1])),
            Some(_) => return Err(err()),
            None => (s, None),
        };
        let kind = FragmentKind::from_name(name).ok_or_else(err)?;
        let shape = match arg {
            None => None,
            Some(a) => Some(match a.parse::<u32>() {
                Ok(n) => KeyArg::Const(n),
                Err(_) => KeyArg::Type(ParamType::from_short(a).ok_or_else(err)?),
            }),
        };
        Ok(FragmentKey { kind, shape })
    }
}

impl From<FragmentKey> for String {
    fn from(k: FragmentKey) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for FragmentKey {
    type Error = FragmentError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl fmt::Display for Fragment {
    /// `kind(arg)` for atoms, `kind(arg)[child, child]` for composed trees.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        match &self.arg {
            Some(FragArg::Param(p)) => write!(f, "({p})")?,
            Some(FragArg::Const(n)) => write!(f, "({n})")?,
            None => {}
        }
        if !self.children.is_empty() {
            f.write_str("[")?;
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str("]")?;
        }
        Ok(())
    }
}

struct TreeParser<'a> {
    src: &'a str,
    pos: usize,
}

impl TreeParser<'_> {
    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.src[self.pos..].chars().next().unwrap().len_utf8();
        }
    }

    fn err(&self) -> FragmentError {
        FragmentError::Parse(self.src.to_string())
    }

    fn fragment(&mut self) -> Result<Fragment, FragmentError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let name_len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
            .unwrap_or(rest.len());
        let kind = FragmentKind::from_name(&rest[..name_len]).ok_or_else(|| self.err())?;
        self.pos += name_len;
        let mut arg = None;
        if self.src[self.pos..].starts_with('(') {
            let close = self.src[self.pos..].find(')').ok_or_else(|| self.err())?;
            let a = self.src[self.pos + 1..self.pos + close].trim();
            arg = Some(match (kind, a.parse::<u32>()) {
                (FragmentKind::FixedLoop, Ok(n)) => FragArg::Const(n),
                _ if !a.is_empty() => FragArg::Param(a.to_string()),
                _ => return Err(self.err()),
            });
            self.pos += close + 1;
        }
        let mut children = Vec::new();
        self.skip_ws();
        if self.src[self.pos..].starts_with('[') {
            self.pos += 1;
            loop {
                children.push(self.fragment()?);
                self.skip_ws();
                if self.src[self.pos..].starts_with(',') {
                    self.pos += 1;
                } else if self.src[self.pos..].starts_with(']') {
                    self.pos += 1;
                    break;
                } else {
                    return Err(self.err());
                }
            }
        }
        Ok(Fragment { kind, arg, children })
    }
}

impl FromStr for Fragment {
    type Err = FragmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = TreeParser { src: s, pos: 0 };
        let f = p.fragment()?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(p.err());
        }
        Ok(f)
    }
}

impl From<Fragment> for String {
    fn from(f: Fragment) -> String {
        f.to_string()
    }
}

impl TryFrom<String> for Fragment {
    type Error = FragmentError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Separator of the sequence notation.
pub const COMPOSE_SEP: &str = " ∘ ";

/// Renders `a ∘ b ∘ c`.
pub fn format_sequence(seq: &[Fragment]) -> String {
    seq.iter().map(ToString::to_string).collect::<Vec<_>>().join(COMPOSE_SEP)
}

/// Parses `a ∘ b ∘ c`. An ASCII ` . ` is accepted as the separator too.
pub fn parse_sequence(s: &str) -> Result<Vec<Fragment>, FragmentError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(FragmentError::Parse(s.to_string()));
    }
    s.split('∘')
        .flat_map(|part| part.split(" . "))
        .map(|p| p.trim().parse())
        .collect()
}

/// Every template instantiated over every type-compatible argument of
/// `sig`, in a fixed order.
pub fn instantiate_population(sig: &Signature) -> Vec<Fragment> {
    let mut out = vec![
        Fragment::linear(),
        Fragment::affine_index(),
        Fragment::accumulate(),
        Fragment::while_loop(),
        Fragment::if_(),
        Fragment::if_else(),
        Fragment::seq(),
    ];
    for p in sig.params() {
        if p.ty.is_pointer() {
            out.push(Fragment::gather(&p.name));
            out.push(Fragment::store_output(&p.name));
        }
        if p.ty == ParamType::Int {
            out.push(Fragment::arg_loop(&p.name));
        }
    }
    out.extend(FIXED_LOOP_BOUNDS.map(Fragment::fixed_loop));
    let mut seen = BTreeSet::new();
    out.retain(|f| seen.insert(f.clone()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_signature;
    use proptest::prelude::*;

    fn dot_sig() -> Signature {
        parse_signature("float f(float *a, float *b, int c)").unwrap()
    }

    #[test]
    fn group_sizes() {
        let count = |g| FragmentKind::ALL.iter().filter(|k| k.group() == g).count();
        assert_eq!(count(FragmentGroup::Computation), 5);
        assert_eq!(count(FragmentGroup::Iteration), 3);
        assert_eq!(count(FragmentGroup::ControlFlow), 3);
    }

    #[test]
    fn compose_into_loop_body() {
        let f = compose(Fragment::fixed_loop(5), Fragment::linear());
        assert_eq!(f.kind, FragmentKind::FixedLoop);
        assert_eq!(f.children, vec![Fragment::linear()]);
    }

    #[test]
    fn compose_identities() {
        let g = Piece::Frag(Fragment::gather("a"));
        assert_eq!(compose_pieces(Piece::Start, g.clone()), g);
        assert_eq!(compose_pieces(g.clone(), Piece::End), g);
    }

    #[test]
    fn full_fragment_overflows_to_seq() {
        let f = compose(Fragment::linear(), Fragment::linear());
        assert_eq!(f.to_string(), "seq[linear, linear]");
    }

    #[test]
    fn dot_sequence_nests() {
        let seq = parse_sequence("arg-loop(c) ∘ gather(a) ∘ gather(b) ∘ accumulate ∘ linear").unwrap();
        let f = compose_all(seq.clone()).unwrap();
        assert_eq!(f.to_string(), "arg-loop(c)[gather(a)[gather(b)[accumulate[linear]]]]");
        assert_eq!(format_sequence(&seq), "arg-loop(c) ∘ gather(a) ∘ gather(b) ∘ accumulate ∘ linear");
        assert!(f.check(&dot_sig()).is_ok());
        assert_eq!(f.to_string().parse::<Fragment>().unwrap(), f);
    }

    #[test]
    fn bad_args_rejected() {
        let sig = dot_sig();
        assert!(Fragment::arg_loop("a").check(&sig).is_err());
        assert!(Fragment::gather("c").check(&sig).is_err());
        assert!(Fragment::gather("zz").check(&sig).is_err());
        assert!(Fragment::atom(FragmentKind::Linear, Some(FragArg::Const(1))).check(&sig).is_err());
    }

    #[test]
    fn population_for_dot() {
        let pop = instantiate_population(&dot_sig());
        for want in ["arg-loop(c)", "gather(a)", "gather(b)", "while-loop", "if", "linear", "affine-index"] {
            assert!(pop.iter().any(|f| f.to_string() == want), "{want}");
        }
        // 7 argument-free + 2 gathers + 2 stores + 1 arg-loop + 8 fixed loops
        assert_eq!(pop.len(), 20);
    }

    #[test]
    fn no_int_params_no_arg_loops() {
        let pop = instantiate_population(&parse_signature("float g(float *a, float x)").unwrap());
        assert!(pop.iter().all(|f| f.kind != FragmentKind::ArgLoop));
    }

    #[test]
    fn keys_round_trip_and_instantiate() {
        let sig = dot_sig();
        let k = Fragment::gather("b").key(&sig);
        assert_eq!(k.to_string(), "gather(ptr-float)");
        assert_eq!(k.to_string().parse::<FragmentKey>().unwrap(), k);
        assert_eq!(k.instances(&sig), vec![Fragment::gather("a"), Fragment::gather("b")]);
        let fl = Fragment::fixed_loop(3).key(&sig);
        assert_eq!(fl.to_string(), "fixed-loop(3)");
        assert_eq!(fl.instances(&sig), vec![Fragment::fixed_loop(3)]);
    }

    pub(crate) fn arb_atom() -> impl Strategy<Value = Fragment> {
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

    proptest! {
        #[test]
        fn composition_is_a_left_fold(a in arb_atom(), b in arb_atom(), c in arb_atom()) {
            let left = compose(compose(a.clone(), b.clone()), c.clone());
            prop_assert_eq!(compose_all([a, b, c]).unwrap(), left);
        }

        #[test]
        fn sequence_notation_round_trips(seq in proptest::collection::vec(arb_atom(), 1..6)) {
            let text = format_sequence(&seq);
            prop_assert_eq!(parse_sequence(&text).unwrap(), seq.clone());
            let tree = compose_all(seq).unwrap();
            prop_assert_eq!(tree.to_string().parse::<Fragment>().unwrap(), tree);
        }
    }
}
