//! Gini decision trees and bagged random forests over small integer
//! feature vectors.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    /// Features tried per split; 0 means all of them.
    pub max_features: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { trees: 32, max_depth: 8, max_features: 4, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum Node {
    Leaf { pos: u32, n: u32 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Grower<'a, R> {
    xs: &'a [Vec<f64>],
    ys: &'a [bool],
    cfg: &'a ForestConfig,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let pos = rows.iter().filter(|&&r| self.ys[r]).count();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { pos: pos as u32, n: rows.len() as u32 });
        if depth >= self.cfg.max_depth || pos == 0 || pos == rows.len() {
            return id;
        }
        let nfeat = self.xs[0].len();
        let mut feats: Vec<usize> = (0..nfeat).collect();
        feats.shuffle(self.rng);
        let k = if self.cfg.max_features == 0 { nfeat } else { self.cfg.max_features.min(nfeat) };

        let parent = gini(pos, rows.len());
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &feats[..k] {
            let mut vals: Vec<f64> = rows.iter().map(|&r| self.xs[r][f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (mut ln, mut lp) = (0, 0);
                for &r in rows {
                    if self.xs[r][f] <= t {
                        ln += 1;
                        lp += self.ys[r] as usize;
                    }
                }
                let (rn, rp) = (rows.len() - ln, pos - lp);
                let n = rows.len() as f64;
                let score = (ln as f64 / n) * gini(lp, ln) + (rn as f64 / n) * gini(rp, rn);
                if score < parent - 1e-12 && best.map_or(true, |(s, ..)| score < s) {
                    best = Some((score, f, t));
                }
            }
        }
        let Some((_, feature, threshold)) = best else { return id };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| self.xs[r][feature] <= threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

impl Tree {
    pub fn fit<R: Rng>(xs: &[Vec<f64>], ys: &[bool], rows: &[usize], cfg: &ForestConfig, rng: &mut R) -> Tree {
        let mut g = Grower { xs, ys, cfg, rng, nodes: Vec::new() };
        g.grow(rows, 0);
        Tree { nodes: g.nodes }
    }

    /// Positive fraction of the training rows in the leaf reached by `x`.
    pub fn leaf_fraction(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { pos, n } => return if n == 0 { 0.0 } else { pos as f64 / n as f64 },
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Bagged trees, each on a bootstrap sample of the rows.
    pub fn fit(xs: &[Vec<f64>], ys: &[bool], cfg: &ForestConfig) -> Forest {
        assert!(!xs.is_empty() && xs.len() == ys.len(), "forest needs labelled rows");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = xs.len();
        let trees = (0..cfg.trees.max(1))
            .map(|_| {
                let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                Tree::fit(xs, ys, &rows, cfg, &mut rng)
            })
            .collect();
        Forest { trees }
    }

    /// Fraction of trees whose leaf has a strict positive majority.
    pub fn probability(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.leaf_fraction(x) > 0.5).count();
        votes as f64 / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_data_is_learned() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let ys: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let f = Forest::fit(&xs, &ys, &ForestConfig::default());
        assert!(f.probability(&[15.0, 0.0]) > 0.5);
        assert!(f.probability(&[2.0, 0.0]) < 0.5);
    }

    #[test]
    fn constant_labels_give_single_leaf() {
        let xs = vec![vec![1.0], vec![2.0]];
        let f = Forest::fit(&xs, &[true, true], &ForestConfig::default());
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
        assert_eq!(f.probability(&[7.0]), 1.0);
    }

    #[test]
    fn fitting_is_seeded() {
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![(i % 4) as f64, (i % 5) as f64]).collect();
        let ys: Vec<bool> = (0..12).map(|i| i % 3 == 0).collect();
        let cfg = ForestConfig { seed: 9, ..ForestConfig::default() };
        assert_eq!(Forest::fit(&xs, &ys, &cfg), Forest::fit(&xs, &ys, &cfg));
    }
}
