//! Probabilistic models over fragments: per-template inclusion (IID) and
//! a bigram model over fragment sequences (Markov).

pub mod forest;
mod iid;
mod markov;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fragments::{format_sequence, parse_sequence, Fragment, FragmentError};
use crate::spec::{parse_signature, ParamType, ReturnType, Signature, SpecError};

pub use forest::{Forest, ForestConfig};
pub use iid::{output_fragments, IidModel, DEFAULT_THETA};
pub use markov::{MarkovConfig, MarkovKey, MarkovModel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("corpus line {line}: {msg}")]
    Corpus { line: usize, msg: String },
    #[error(transparent)]
    Fragment(#[from] FragmentError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid model parameter: {0}")]
    Param(String),
}

/// Number of features produced by [`featurize`].
pub const FEATURE_COUNT: usize = 12;

/// Signature features: one count per parameter type, arity, and a one-hot
/// return type. Parameter names do not matter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector(pub [u32; FEATURE_COUNT]);

impl FeatureVector {
    pub fn count(&self, t: ParamType) -> u32 {
        self.0[ParamType::ALL.iter().position(|&x| x == t).unwrap()]
    }

    pub fn arity(&self) -> u32 {
        self.0[7]
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&x| x as f64).collect()
    }
}

pub fn featurize(sig: &Signature) -> FeatureVector {
    let mut v = [0u32; FEATURE_COUNT];
    for p in sig.params() {
        v[ParamType::ALL.iter().position(|&t| t == p.ty).unwrap()] += 1;
    }
    v[7] = sig.arity() as u32;
    v[8 + ReturnType::ALL.iter().position(|&r| r == sig.ret()).unwrap()] = 1;
    FeatureVector(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusRecord {
    pub signature: Signature,
    pub sequence: Vec<Fragment>,
}

impl CorpusRecord {
    pub fn new(signature: Signature, sequence: Vec<Fragment>) -> Result<Self, ModelError> {
        if sequence.is_empty() {
            return Err(ModelError::Corpus { line: 0, msg: "empty fragment sequence".into() });
        }
        for f in &sequence {
            f.check(&signature)?;
        }
        Ok(CorpusRecord { signature, sequence })
    }

    /// The record's fragment set, used as its ground-truth initial set.
    pub fn fragment_set(&self) -> BTreeSet<Fragment> {
        self.sequence.iter().flat_map(Fragment::atoms).collect()
    }
}

/// Separator between the signature and the sequence in corpus files.
pub const CORPUS_SEP: &str = "⊢";

/// Solved programs as (signature, ordered fragment sequence) pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingCorpus {
    pub records: Vec<CorpusRecord>,
}

impl TrainingCorpus {
    /// Parses `SIGNATURE ⊢ frag ∘ frag ∘ …` lines. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut records = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| ModelError::Corpus { line: i + 1, msg };
            let (sig, seq) = line.split_once(CORPUS_SEP).ok_or_else(|| err(format!("missing `{CORPUS_SEP}`")))?;
            let sig = parse_signature(sig).map_err(|e| err(e.to_string()))?;
            if seq.trim().is_empty() {
                return Err(err("empty fragment sequence".into()));
            }
            let seq = parse_sequence(seq).map_err(|e| err(e.to_string()))?;
            records.push(CorpusRecord::new(sig, seq).map_err(|e| err(e.to_string()))?);
        }
        Ok(TrainingCorpus { records })
    }

    pub fn to_text(&self) -> String {
        self.records
            .iter()
            .map(|r| format!("{} {CORPUS_SEP} {}\n", r.signature, format_sequence(&r.sequence)))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Appends one record line to a corpus file, creating it if needed.
    pub fn append(path: &Path, record: &CorpusRecord) -> Result<(), ModelError> {
        use std::io::Write;
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(file, "{} {CORPUS_SEP} {}", record.signature, format_sequence(&record.sequence))?;
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}

/// |A ∩ B| / |A ∪ B|, and 1 when both are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Both trained models, as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub iid: IidModel,
    pub markov: MarkovModel,
}

impl Models {
    pub fn train(corpus: &TrainingCorpus, forest: &ForestConfig, theta: f64, markov: &MarkovConfig) -> Result<Self, ModelError> {
        Ok(Models {
            iid: IidModel::train(corpus, forest, theta)?,
            markov: MarkovModel::train(corpus, markov)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let m: Models = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        m.markov.check()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_of_dot() {
        let v = featurize(&parse_signature("float f(float *a, float *b, int c)").unwrap());
        assert_eq!(v.count(ParamType::PtrFloat), 2);
        assert_eq!(v.count(ParamType::Int), 1);
        assert_eq!(v.arity(), 3);
        assert_eq!(v.0[8 + 2], 1);
        assert_eq!(v.0.iter().take(7).sum::<u32>(), v.arity());
    }

    #[test]
    fn features_of_nullary() {
        let v = featurize(&parse_signature("int g()").unwrap());
        assert!(v.0[..8].iter().all(|&x| x == 0));
        assert_eq!(v.0[8 + 1], 1);
    }

    #[test]
    fn renaming_does_not_change_features() {
        let a = featurize(&parse_signature("int f(int *xs, int n)").unwrap());
        let b = featurize(&parse_signature("int g(int *ys, int len)").unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn jaccard_values() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
        assert!((jaccard(&s(&["a", "b"]), &s(&["a", "b", "c"])) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard(&s(&["x"]), &s(&["x"])), 1.0);
        assert_eq!(jaccard(&s(&["a"]), &s(&["b"])), 0.0);
        assert_eq!(jaccard(&s(&[]), &s(&[])), 1.0);
    }

    #[test]
    fn corpus_round_trip() {
        let text = "float f(float *a, float *b, int c) ⊢ arg-loop(c) ∘ gather(a) ∘ gather(b) ∘ accumulate ∘ linear\n# comment\n\nint g(int x) ⊢ linear\n";
        let c = TrainingCorpus::parse(text).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(TrainingCorpus::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn empty_sequence_rejected() {
        assert!(matches!(TrainingCorpus::parse("int g(int x) ⊢  "), Err(ModelError::Corpus { line: 1, .. })));
        assert!(TrainingCorpus::parse("int g(int x) ⊢ gather(x)").is_err());
    }
}
