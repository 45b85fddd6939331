//! Parallel-corpus filtering: thirteen pair features, a random-forest
//! cleanliness classifier, uncertainty sampling for expert feedback, and
//! threshold selection.

mod features;
mod forest;
mod langid;

pub use features::{
    cognate_ratio, extract_features, features_from_tsv, features_to_tsv, hunalign, is_number_token, is_punct_token,
    translation_cross_entropy, zipporah, FeatureVector, FilterResources, FEATURE_NAMES, NUM_FEATURES,
    ZIPPORAH_EPSILON, ZIPPORAH_SENTINEL,
};
pub use forest::{train_forest, train_on_features, ForestModel, ForestParams, Node, Tree};
pub use langid::LangId;

use rayon::prelude::*;

use crate::{Error, Result};

pub const DEFAULT_ROUND_SIZE: usize = 20;
pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.5, 0.8];

pub fn extract_all(res: &FilterResources, bitext: &[(Vec<String>, Vec<String>)]) -> Vec<FeatureVector> {
    bitext.par_iter().map(|(s, t)| extract_features(res, s, t)).collect()
}

/// Indices of the `k` rows scored closest to 0.5, ties by index.
pub fn feedback_round(forest: &ForestModel, rows: &[FeatureVector], k: usize) -> Vec<usize> {
    let scores: Vec<f64> = rows.par_iter().map(|r| forest.score(r)).collect();
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| {
        (scores[a] - 0.5)
            .abs()
            .total_cmp(&(scores[b] - 0.5).abs())
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Indices (in input order) of rows scoring strictly above `threshold`.
pub fn apply_filter(forest: &ForestModel, rows: &[FeatureVector], threshold: f64) -> Vec<usize> {
    let keep: Vec<bool> = rows.par_iter().map(|r| forest.score(r) > threshold).collect();
    keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect()
}

/// Labels file: `index<TAB>label` with label 0 or 1.
pub fn labels_from_tsv(text: &str, origin: &str) -> Result<Vec<(usize, bool)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::parse(origin, n + 1, "expected `index<TAB>0|1`");
        let (i, l) = line.split_once('\t').ok_or_else(bad)?;
        let i: usize = i.trim().parse().map_err(|_| bad())?;
        let l = match l.trim() {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        out.push((i, l));
    }
    Ok(out)
}

pub fn labels_to_tsv(labels: &[(usize, bool)]) -> String {
    labels.iter().map(|(i, l)| format!("{i}\t{}\n", u8::from(*l))).collect()
}
