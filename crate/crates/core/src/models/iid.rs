use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{featurize, Forest, ForestConfig, ModelError, TrainingCorpus};
use crate::fragments::{Fragment, FragmentKey, FragmentKind};
use crate::spec::{detect_output_params, ProblemSpec, Signature};

pub const DEFAULT_THETA: f64 = 0.5;

/// One inclusion forest per fragment template seen in training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidModel {
    pub theta: f64,
    #[serde(flatten)]
    pub forests: BTreeMap<FragmentKey, Forest>,
}

impl IidModel {
    pub fn train(corpus: &TrainingCorpus, cfg: &ForestConfig, theta: f64) -> Result<Self, ModelError> {
        if corpus.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(ModelError::Param(format!("theta {theta} outside [0, 1]")));
        }
        let xs: Vec<Vec<f64>> = corpus.records.iter().map(|r| featurize(&r.signature).as_f64()).collect();
        let used: Vec<BTreeSet<FragmentKey>> = corpus
            .records
            .iter()
            .map(|r| r.fragment_set().iter().map(|f| f.key(&r.signature)).collect())
            .collect();
        let keys: BTreeSet<FragmentKey> = used.iter().flatten().copied().collect();
        let forests = keys
            .into_iter()
            .enumerate()
            .map(|(i, key)| {
                let ys: Vec<bool> = used.iter().map(|u| u.contains(&key)).collect();
                let cfg = ForestConfig { seed: cfg.seed.wrapping_add(i as u64 * 0x9e37_79b9), ..*cfg };
                (key, Forest::fit(&xs, &ys, &cfg))
            })
            .collect();
        Ok(IidModel { theta, forests })
    }

    /// Inclusion probability of a template for `sig`; 0 for templates never
    /// seen in training.
    pub fn probability(&self, key: &FragmentKey, sig: &Signature) -> f64 {
        self.forests
            .get(key)
            .map_or(0.0, |f| f.probability(&featurize(sig).as_f64()))
    }

    /// Population members whose template probability reaches θ.
    /// Store-outputs are left to [`output_fragments`].
    pub fn predicted(&self, sig: &Signature, population: &[Fragment]) -> BTreeSet<Fragment> {
        let x = featurize(sig).as_f64();
        population
            .iter()
            .filter(|f| f.kind != FragmentKind::StoreOutput)
            .filter(|f| self.forests.get(&f.key(sig)).map_or(0.0, |m| m.probability(&x)) >= self.theta)
            .cloned()
            .collect()
    }

    /// The initial fragment set: store-outputs for every parameter the
    /// examples show being written, plus the predicted members.
    pub fn predict_f0(&self, spec: &ProblemSpec, population: &[Fragment]) -> BTreeSet<Fragment> {
        let mut f0 = output_fragments(spec);
        f0.extend(self.predicted(&spec.signature, population));
        f0
    }
}

/// Store-output fragments for every written parameter.
pub fn output_fragments(spec: &ProblemSpec) -> BTreeSet<Fragment> {
    detect_output_params(spec)
        .into_iter()
        .map(|i| Fragment::store_output(&spec.signature.params()[i].name))
        .collect()
}
