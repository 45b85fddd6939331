use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use crate::{Error, Result};

const FORMAT: &str = "termforge-forest-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    /// Features tried per split; `None` means `floor(sqrt(F))`.
    pub feature_subsample: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 100,
            max_depth: 12,
            feature_subsample: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        /// Share of positive training examples reaching this leaf.
        fraction: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { fraction } => return fraction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    format: String,
    pub n_features: usize,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    max_depth: usize,
    m: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        self.nodes.push(Node::Leaf {
            fraction: pos as f64 / idx.len().max(1) as f64,
        });
        self.nodes.len() - 1
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<BestSplit> {
        let n_features = self.x[0].len();
        let mut features = sample(&mut self.rng, n_features, self.m.min(n_features)).into_vec();
        features.sort_unstable();
        let total_pos = idx.iter().filter(|&&i| self.y[i]).count();
        let n = idx.len();
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for f in features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left_pos = 0;
            for k in 0..n - 1 {
                left_pos += usize::from(self.y[order[k]]);
                let (a, b) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if a.total_cmp(&b) != Ordering::Less {
                    continue;
                }
                let nl = k + 1;
                let impurity = (nl as f64 * gini(left_pos, nl) + (n - nl) as f64 * gini(total_pos - left_pos, n - nl)) / n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mut threshold = a / 2.0 + b / 2.0;
                    if !(threshold >= a && threshold < b) {
                        threshold = a;
                    }
                    best = Some(BestSplit {
                        impurity,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        let parent = gini(pos, idx.len());
        if depth >= self.max_depth || pos == 0 || pos == idx.len() {
            return self.leaf(idx);
        }
        let Some(split) = self.best_split(idx).filter(|s| s.impurity < parent - 1e-12) else {
            return self.leaf(idx);
        };
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { fraction: 0.0 });
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[me] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        me
    }
}

fn tree_seed(seed: u64, tree: usize) -> u64 {
    seed ^ (tree as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains `params.trees` CART trees (Gini impurity, midpoint thresholds) on
/// bootstrap samples. Each tree draws from its own seeded stream.
pub fn train_forest(x: &[Vec<f64>], y: &[bool], params: &ForestParams) -> Result<ForestModel> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 || y.iter().all(|&l| l) || y.iter().all(|&l| !l) {
        return Err(Error::DegenerateLabels);
    }
    let n_features = x[0].len();
    if n_features == 0 || x.iter().any(|r| r.len() != n_features) {
        return Err(Error::InvalidParameter("feature rows must share a non-zero width".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite feature value".into()));
    }
    if params.trees == 0 {
        return Err(Error::InvalidParameter("forest needs at least one tree".into()));
    }
    let m = params
        .feature_subsample
        .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
        .clamp(1, n_features);
    let trees = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(params.seed, t));
            let idx: Vec<usize> = if params.bootstrap {
                (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect()
            } else {
                (0..x.len()).collect()
            };
            let mut b = Builder {
                x,
                y,
                max_depth: params.max_depth,
                m,
                rng,
                nodes: Vec::new(),
            };
            b.build(&idx, 0);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel {
        format: FORMAT.into(),
        n_features,
        params: *params,
        trees,
    })
}

pub fn train_on_features(rows: &[FeatureVector], labels: &[bool], params: &ForestParams) -> Result<ForestModel> {
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.0.to_vec()).collect();
    train_forest(&x, labels, params)
}

impl ForestModel {
    pub fn from_trees(n_features: usize, trees: Vec<Tree>) -> Self {
        ForestModel {
            format: FORMAT.into(),
            n_features,
            params: ForestParams {
                trees: trees.len(),
                ..ForestParams::default()
            },
            trees,
        }
    }

    /// Mean positive fraction over the trees' leaves.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn score(&self, f: &FeatureVector) -> f64 {
        self.predict(&f.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forest serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ForestModel = serde_json::from_str(text)?;
        if model.format != FORMAT {
            return Err(Error::InvalidParameter(format!("unsupported forest format {:?}", model.format)));
        }
        if model.trees.is_empty() {
            return Err(Error::InvalidParameter("forest has no trees".into()));
        }
        Ok(model)
    }
}
