use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, TrainingCorpus};
use crate::fragments::{Fragment, FragmentError, FragmentKey};
use crate::spec::Signature;

/// A state of the bigram model: a fragment template or one of the two
/// sequence markers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MarkovKey {
    Start,
    End,
    Frag(FragmentKey),
}

impl fmt::Display for MarkovKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarkovKey::Start => f.write_str("f_start"),
            MarkovKey::End => f.write_str("f_end"),
            MarkovKey::Frag(k) => k.fmt(f),
        }
    }
}

impl FromStr for MarkovKey {
    type Err = FragmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f_start" => Ok(MarkovKey::Start),
            "f_end" => Ok(MarkovKey::End),
            _ => s.parse().map(MarkovKey::Frag),
        }
    }
}

impl From<MarkovKey> for String {
    fn from(k: MarkovKey) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for MarkovKey {
    type Error = FragmentError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovConfig {
    /// Weight of the model restricted to the initial fragment set.
    pub b: f64,
    pub max_len: usize,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        MarkovConfig { b: 0.75, max_len: 10 }
    }
}

#[derive(Serialize, Deserialize)]
struct MarkovFile {
    pairs: Vec<(MarkovKey, MarkovKey, u64)>,
    b: f64,
    max_len: usize,
}

/// Bigram counts over fragment templates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarkovFile", into = "MarkovFile")]
pub struct MarkovModel {
    rows: BTreeMap<MarkovKey, BTreeMap<MarkovKey, u64>>,
    /// Every template state that occurs in the counts, plus `f_end`.
    support: BTreeSet<MarkovKey>,
    pub b: f64,
    pub max_len: usize,
}

impl From<MarkovModel> for MarkovFile {
    fn from(m: MarkovModel) -> Self {
        let pairs = m
            .rows
            .iter()
            .flat_map(|(a, row)| row.iter().map(move |(b, &n)| (*a, *b, n)))
            .collect();
        MarkovFile { pairs, b: m.b, max_len: m.max_len }
    }
}

impl TryFrom<MarkovFile> for MarkovModel {
    type Error = ModelError;

    fn try_from(f: MarkovFile) -> Result<Self, ModelError> {
        let m = MarkovModel::from_pairs(f.pairs, MarkovConfig { b: f.b, max_len: f.max_len });
        m.check()?;
        Ok(m)
    }
}

impl MarkovModel {
    /// Builds a model from explicit counts; repeated pairs are summed.
    pub fn from_pairs<I: IntoIterator<Item = (MarkovKey, MarkovKey, u64)>>(pairs: I, cfg: MarkovConfig) -> Self {
        let mut rows: BTreeMap<MarkovKey, BTreeMap<MarkovKey, u64>> = BTreeMap::new();
        let mut support = BTreeSet::from([MarkovKey::End]);
        for (a, b, n) in pairs {
            *rows.entry(a).or_default().entry(b).or_default() += n;
            for k in [a, b] {
                if matches!(k, MarkovKey::Frag(_)) {
                    support.insert(k);
                }
            }
        }
        MarkovModel { rows, support, b: cfg.b, max_len: cfg.max_len }
    }

    pub fn train(corpus: &TrainingCorpus, cfg: &MarkovConfig) -> Result<Self, ModelError> {
        if corpus.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        let mut pairs = Vec::new();
        for r in &corpus.records {
            let mut prev = MarkovKey::Start;
            for f in &r.sequence {
                let k = MarkovKey::Frag(f.key(&r.signature));
                pairs.push((prev, k, 1));
                prev = k;
            }
            pairs.push((prev, MarkovKey::End, 1));
        }
        let m = MarkovModel::from_pairs(pairs, *cfg);
        m.check()?;
        Ok(m)
    }

    pub(crate) fn check(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.b) {
            return Err(ModelError::Param(format!("b = {} outside [0, 1]", self.b)));
        }
        if self.max_len == 0 {
            return Err(ModelError::Param("max_len must be positive".into()));
        }
        if self.rows.contains_key(&MarkovKey::End) || self.rows.values().any(|r| r.contains_key(&MarkovKey::Start)) {
            return Err(ModelError::Param("counts into f_start or out of f_end".into()));
        }
        Ok(())
    }

    pub fn w(&self, a: MarkovKey, b: MarkovKey) -> u64 {
        self.rows.get(&a).and_then(|r| r.get(&b)).copied().unwrap_or(0)
    }

    pub fn s(&self, a: MarkovKey) -> u64 {
        self.rows.get(&a).map_or(0, |r| r.values().sum())
    }

    /// All template states with counts, plus `f_end`.
    pub fn support(&self) -> &BTreeSet<MarkovKey> {
        &self.support
    }

    fn allowed(next: MarkovKey, f0: &BTreeSet<FragmentKey>) -> bool {
        match next {
            MarkovKey::End => true,
            MarkovKey::Start => false,
            MarkovKey::Frag(k) => f0.contains(&k),
        }
    }

    /// Blended transition probability. `f0` holds the templates of the
    /// initial fragment set; `f_end` always counts as a member.
    ///
    /// States without outgoing counts fall back to a uniform distribution
    /// over the support.
    pub fn transition_prob(&self, prev: MarkovKey, next: MarkovKey, f0: &BTreeSet<FragmentKey>) -> f64 {
        if prev == MarkovKey::End || next == MarkovKey::Start {
            return 0.0;
        }
        let b = self.b;
        match self.rows.get(&prev).filter(|r| !r.is_empty()) {
            Some(row) => {
                let s: u64 = row.values().sum();
                let base = self.w(prev, next) as f64 / s as f64;
                let s_aug: u64 = row.iter().filter(|(k, _)| Self::allowed(**k, f0)).map(|(_, n)| n).sum();
                if s_aug == 0 {
                    return base;
                }
                let aug = if Self::allowed(next, f0) { self.w(prev, next) as f64 / s_aug as f64 } else { 0.0 };
                b * aug + (1.0 - b) * base
            }
            None => {
                if !self.support.contains(&next) {
                    return 0.0;
                }
                let base = 1.0 / self.support.len() as f64;
                let n_aug = self.support.iter().filter(|k| Self::allowed(**k, f0)).count();
                let aug = if Self::allowed(next, f0) { 1.0 / n_aug as f64 } else { 0.0 };
                b * aug + (1.0 - b) * base
            }
        }
    }

    /// Successors of `prev` with nonzero probability.
    pub fn distribution(&self, prev: MarkovKey, f0: &BTreeSet<FragmentKey>) -> Vec<(MarkovKey, f64)> {
        let candidates: Vec<MarkovKey> = match self.rows.get(&prev).filter(|r| !r.is_empty()) {
            Some(row) => row.keys().copied().collect(),
            None if prev == MarkovKey::End => Vec::new(),
            None => self.support.iter().copied().collect(),
        };
        candidates
            .into_iter()
            .map(|k| (k, self.transition_prob(prev, k, f0)))
            .filter(|&(_, p)| p > 0.0)
            .collect()
    }

    /// Samples a fragment sequence for `sig`. Templates are instantiated
    /// with a uniform choice among their instances, restricted to members
    /// of `f0` when any exist. Templates with no instance under `sig` are
    /// dropped from each step's distribution; an empty distribution ends
    /// the sequence.
    pub fn sample_sequence<R: Rng + ?Sized>(&self, sig: &Signature, f0: &BTreeSet<Fragment>, rng: &mut R) -> Vec<Fragment> {
        let f0_keys: BTreeSet<FragmentKey> = f0.iter().map(|f| f.key(sig)).collect();
        let mut out = Vec::new();
        let mut prev = MarkovKey::Start;
        let mut instances: BTreeMap<FragmentKey, Vec<Fragment>> = BTreeMap::new();
        while out.len() < self.max_len {
            let dist: Vec<(MarkovKey, f64)> = self
                .distribution(prev, &f0_keys)
                .into_iter()
                .filter(|(k, _)| match k {
                    MarkovKey::Frag(fk) => !instances.entry(*fk).or_insert_with(|| fk.instances(sig)).is_empty(),
                    _ => true,
                })
                .collect();
            let Ok(pick) = WeightedIndex::new(dist.iter().map(|d| d.1)) else { break };
            let next = dist[pick.sample(rng)].0;
            let MarkovKey::Frag(fk) = next else { break };
            let all = &instances[&fk];
            let preferred: Vec<&Fragment> = all.iter().filter(|f| f0.contains(f)).collect();
            let chosen = if preferred.is_empty() {
                all.choose(rng).unwrap()
            } else {
                *preferred.choose(rng).unwrap()
            };
            out.push(chosen.clone());
            prev = next;
        }
        out
    }
}
