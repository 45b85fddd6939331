use std::collections::HashMap;

use crate::align::TranslationTable;
use crate::ngram_lm::{cross_entropy, NGramModel};
use crate::{Error, Result};

use super::langid::LangId;

pub const NUM_FEATURES: usize = 13;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "total_len",
    "len_ratio",
    "avg_tok_len",
    "upper_cmp",
    "punct_cmp",
    "num_cmp",
    "langid_src",
    "langid_tgt",
    "cognate",
    "lm_src",
    "lm_tgt",
    "zipporah",
    "hunalign",
];

/// Probability floor inside the adequacy logarithm.
pub const ZIPPORAH_EPSILON: f64 = 1e-6;
/// Adequacy reported when either side is empty: the worst attainable value.
pub const ZIPPORAH_SENTINEL: f64 = 13.815510557964274;
pub const HUNALIGN_SIGMA: f64 = 0.5;
/// Minimum dictionary probability for a token to count as covered.
pub const COVERAGE_MIN_PROB: f64 = 0.1;
pub const COGNATE_PREFIX: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Everything feature extraction needs besides the pair itself.
#[derive(Debug, Clone)]
pub struct FilterResources {
    pub src_lm: NGramModel,
    pub tgt_lm: NGramModel,
    /// p(target | source).
    pub dict_s2t: TranslationTable,
    /// p(source | target).
    pub dict_t2s: TranslationTable,
    pub langid: LangId,
    pub src_lang: String,
    pub tgt_lang: String,
}

fn multiset(tokens: &[String], keep: impl Fn(&str) -> bool) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens.iter().filter(|t| keep(t)) {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

/// Multiset Jaccard similarity; two empty multisets are identical.
fn jaccard(a: &HashMap<&str, usize>, b: &HashMap<&str, usize>) -> f64 {
    let (mut inter, mut union) = (0, 0);
    for (k, &x) in a {
        let y = b.get(k).copied().unwrap_or(0);
        inter += x.min(y);
        union += x.max(y);
    }
    union += b.iter().filter(|(k, _)| !a.contains_key(*k)).map(|(_, &y)| y).sum::<usize>();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn is_punct_token(t: &str) -> bool {
    !t.is_empty() && t.chars().all(|c| !c.is_alphanumeric() && !c.is_whitespace())
}

pub fn is_number_token(t: &str) -> bool {
    t.chars().any(char::is_numeric) && t.chars().all(|c| c.is_numeric() || c == '.' || c == ',')
}

fn uppercase_count(tokens: &[String]) -> usize {
    tokens.iter().flat_map(|t| t.chars()).filter(|c| c.is_uppercase()).count()
}

fn lower_prefix(t: &str) -> Option<String> {
    let lower: Vec<char> = t.to_lowercase().chars().collect();
    (lower.len() >= COGNATE_PREFIX).then(|| lower[..COGNATE_PREFIX].iter().collect())
}

/// Share of source tokens with an identical target token or one sharing a
/// lowercase prefix of at least four characters.
pub fn cognate_ratio(src: &[String], tgt: &[String]) -> f64 {
    if src.is_empty() {
        return 0.0;
    }
    let prefixes: Vec<Option<String>> = tgt.iter().map(|t| lower_prefix(t)).collect();
    let hits = src
        .iter()
        .filter(|s| {
            let p = lower_prefix(s);
            tgt.iter()
                .zip(&prefixes)
                .any(|(t, tp)| t == *s || (p.is_some() && p == *tp))
        })
        .count();
    hits as f64 / src.len() as f64
}

/// `-(1/|to|) * sum_w ln(mean_u p(w|u) + eps)` with `u` over `from`.
pub fn translation_cross_entropy(dict: &TranslationTable, from: &[String], to: &[String]) -> f64 {
    if from.is_empty() || to.is_empty() {
        return ZIPPORAH_SENTINEL;
    }
    let total: f64 = to
        .iter()
        .map(|w| {
            let mean = from.iter().map(|u| dict.get(u, w).unwrap_or(0.0)).sum::<f64>() / from.len() as f64;
            (mean + ZIPPORAH_EPSILON).ln()
        })
        .sum();
    -total / to.len() as f64
}

/// Symmetrized bag-of-words translation cross-entropy; lower is more adequate.
pub fn zipporah(res: &FilterResources, src: &[String], tgt: &[String]) -> f64 {
    0.5 * (translation_cross_entropy(&res.dict_s2t, src, tgt) + translation_cross_entropy(&res.dict_t2s, tgt, src))
}

fn covered(dict: &TranslationTable, from: &[String], to: &[String]) -> usize {
    from.iter()
        .filter(|u| to.iter().any(|w| dict.get(u, w).unwrap_or(0.0) >= COVERAGE_MIN_PROB))
        .count()
}

fn len_ratio(src: &[String], tgt: &[String]) -> f64 {
    src.len().max(1) as f64 / tgt.len().max(1) as f64
}

/// Dictionary coverage of both sides times a Gaussian penalty on the log
/// length ratio.
pub fn hunalign(res: &FilterResources, src: &[String], tgt: &[String]) -> f64 {
    if src.is_empty() || tgt.is_empty() {
        return 0.0;
    }
    let coverage = (covered(&res.dict_s2t, src, tgt) + covered(&res.dict_t2s, tgt, src)) as f64 / (src.len() + tgt.len()) as f64;
    let lr = len_ratio(src, tgt).ln();
    coverage * (-(lr * lr) / (2.0 * HUNALIGN_SIGMA * HUNALIGN_SIGMA)).exp()
}

pub fn extract_features(res: &FilterResources, src: &[String], tgt: &[String]) -> FeatureVector {
    let total_len = (src.len() + tgt.len()) as f64;
    let chars: usize = src.iter().chain(tgt).map(|t| t.chars().count()).sum();
    let avg_tok_len = if total_len > 0.0 { chars as f64 / total_len } else { 0.0 };
    let (us, ut) = (uppercase_count(src), uppercase_count(tgt));
    let upper_cmp = us.abs_diff(ut) as f64 / us.max(ut).max(1) as f64;
    let punct_cmp = jaccard(&multiset(src, is_punct_token), &multiset(tgt, is_punct_token));
    let num_cmp = jaccard(&multiset(src, is_number_token), &multiset(tgt, is_number_token));
    let langid_src = res.langid.log_odds(&src.join(" "), &res.src_lang);
    let langid_tgt = res.langid.log_odds(&tgt.join(" "), &res.tgt_lang);
    FeatureVector([
        total_len,
        len_ratio(src, tgt),
        avg_tok_len,
        upper_cmp,
        punct_cmp,
        num_cmp,
        langid_src,
        langid_tgt,
        cognate_ratio(src, tgt),
        cross_entropy(&res.src_lm, src),
        cross_entropy(&res.tgt_lm, tgt),
        zipporah(res, src, tgt),
        hunalign(res, src, tgt),
    ])
}

/// Features TSV with a header row of feature names.
pub fn features_to_tsv(rows: &[FeatureVector]) -> String {
    let mut out = FEATURE_NAMES.join("\t");
    out.push('\n');
    for r in rows {
        let vals: Vec<String> = r.0.iter().map(|v| v.to_string()).collect();
        out.push_str(&vals.join("\t"));
        out.push('\n');
    }
    out
}

pub fn features_from_tsv(text: &str, origin: &str) -> Result<Vec<FeatureVector>> {
    let mut lines = text.lines();
    if lines.next() != Some(FEATURE_NAMES.join("\t").as_str()) {
        return Err(Error::parse(origin, 1, "missing or wrong feature header"));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split('\t')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(origin, n + 2, "bad number"))?;
        let arr: [f64; NUM_FEATURES] = vals
            .try_into()
            .map_err(|_| Error::parse(origin, n + 2, format!("expected {NUM_FEATURES} columns")))?;
        rows.push(FeatureVector(arr));
    }
    Ok(rows)
}
