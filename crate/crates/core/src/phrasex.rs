//! Phrase-pair extraction from word-aligned bitext and the constraint
//! filtering chain: translation probability, domain relevance, then target
//! attestation in monolingual data.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::align::{Alignment, SentencePair};
use crate::constraints::{Constraint, Mode};
use crate::ngram_lm::{moore_lewis, NGramModel};
use crate::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 7;
pub const DEFAULT_PROB_THRESHOLD: f64 = 0.5;
pub const DEFAULT_DOMAIN_TOP_K: usize = 2000;
pub const DEFAULT_MIN_OCCURRENCE: usize = 1;

/// Inclusive source and target spans of a consistent phrase pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhraseSpan {
    pub src: (usize, usize),
    pub tgt: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhrasePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub count: u64,
    /// Relative frequency p(target | source).
    pub prob: f64,
}

/// Source phrase to its candidate translations, kept in sorted order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhraseTable {
    entries: BTreeMap<Vec<String>, Vec<PhrasePair>>,
}

/// All phrase spans consistent with `alignment`, each side at most `max_len`
/// tokens. A box is consistent when it contains a link and no link connects
/// its inside to its outside; unaligned target words at the box edges yield
/// the usual extended variants.
pub fn extract_spans(src_len: usize, tgt_len: usize, alignment: &Alignment, max_len: usize) -> Vec<PhraseSpan> {
    let mut tgt_aligned = vec![false; tgt_len];
    for &(_, j) in &alignment.links {
        tgt_aligned[j] = true;
    }
    let mut spans = Vec::new();
    for s1 in 0..src_len {
        for s2 in s1..src_len.min(s1 + max_len) {
            let mut t_min = usize::MAX;
            let mut t_max = 0;
            for &(i, j) in &alignment.links {
                if (s1..=s2).contains(&i) {
                    t_min = t_min.min(j);
                    t_max = t_max.max(j);
                }
            }
            if t_min == usize::MAX || t_max - t_min + 1 > max_len {
                continue;
            }
            let leaks = alignment
                .links
                .iter()
                .any(|&(i, j)| (t_min..=t_max).contains(&j) && !(s1..=s2).contains(&i));
            if leaks {
                continue;
            }
            let mut t1 = t_min;
            loop {
                let mut t2 = t_max;
                loop {
                    spans.push(PhraseSpan {
                        src: (s1, s2),
                        tgt: (t1, t2),
                    });
                    t2 += 1;
                    if t2 >= tgt_len || tgt_aligned[t2] || t2 - t1 + 1 > max_len {
                        break;
                    }
                }
                if t1 == 0 || tgt_aligned[t1 - 1] || t_max - (t1 - 1) + 1 > max_len {
                    break;
                }
                t1 -= 1;
            }
        }
    }
    spans
}

/// Consistent phrase pairs of one aligned sentence pair, as token sequences.
pub fn extract_phrases(
    src: &[String],
    tgt: &[String],
    alignment: &Alignment,
    max_len: usize,
) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    alignment.check_bounds(src.len(), tgt.len())?;
    Ok(extract_spans(src.len(), tgt.len(), alignment, max_len)
        .into_iter()
        .map(|sp| {
            (
                src[sp.src.0..=sp.src.1].to_vec(),
                tgt[sp.tgt.0..=sp.tgt.1].to_vec(),
            )
        })
        .collect())
}

/// Counts extracted pairs over a corpus and scores them by relative frequency.
pub fn build_phrase_table(bitext: &[SentencePair], alignments: &[Alignment], max_len: usize) -> Result<PhraseTable> {
    if bitext.len() != alignments.len() {
        return Err(Error::LengthMismatch {
            left: bitext.len(),
            right: alignments.len(),
        });
    }
    let per_sentence: Vec<Vec<(Vec<String>, Vec<String>)>> = bitext
        .par_iter()
        .zip(alignments.par_iter())
        .map(|((src, tgt), a)| extract_phrases(src, tgt, a, max_len))
        .collect::<Result<_>>()?;
    let mut counts: BTreeMap<Vec<String>, BTreeMap<Vec<String>, u64>> = BTreeMap::new();
    for (s, t) in per_sentence.into_iter().flatten() {
        *counts.entry(s).or_default().entry(t).or_insert(0) += 1;
    }
    let entries = counts
        .into_iter()
        .map(|(source, targets)| {
            let total: u64 = targets.values().sum();
            let pairs = targets
                .into_iter()
                .map(|(target, count)| PhrasePair {
                    source: source.clone(),
                    target,
                    count,
                    prob: count as f64 / total as f64,
                })
                .collect();
            (source, pairs)
        })
        .collect();
    Ok(PhraseTable { entries })
}

impl PhraseTable {
    pub fn from_pairs<I: IntoIterator<Item = PhrasePair>>(pairs: I) -> Self {
        let mut entries: BTreeMap<Vec<String>, Vec<PhrasePair>> = BTreeMap::new();
        for p in pairs {
            entries.entry(p.source.clone()).or_default().push(p);
        }
        for v in entries.values_mut() {
            v.sort_by(|a, b| a.target.cmp(&b.target));
        }
        PhraseTable { entries }
    }

    /// Number of phrase pairs.
    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn targets<S: AsRef<str>>(&self, source: &[S]) -> &[PhrasePair] {
        let key: Vec<String> = source.iter().map(|s| s.as_ref().to_owned()).collect();
        self.entries.get(&key).map_or(&[], Vec::as_slice)
    }

    /// All pairs, sorted by source then target.
    pub fn pairs(&self) -> impl Iterator<Item = &PhrasePair> {
        self.entries.values().flatten()
    }

    pub fn sources(&self) -> impl Iterator<Item = &Vec<String>> {
        self.entries.keys()
    }

    fn retain(&self, mut keep: impl FnMut(&PhrasePair) -> bool) -> PhraseTable {
        PhraseTable::from_pairs(self.pairs().filter(|p| keep(p)).cloned())
    }

    /// TSV `source phrase<TAB>target phrase<TAB>count<TAB>prob`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for p in self.pairs() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                p.source.join(" "),
                p.target.join(" "),
                p.count,
                p.prob
            );
        }
        out
    }

    pub fn from_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [s, t, c, p] = cols[..] else {
                return Err(Error::parse(origin, n + 1, "expected 4 tab-separated fields"));
            };
            let source: Vec<String> = s.split_whitespace().map(str::to_owned).collect();
            let target: Vec<String> = t.split_whitespace().map(str::to_owned).collect();
            if source.is_empty() || target.is_empty() {
                return Err(Error::parse(origin, n + 1, "empty phrase"));
            }
            pairs.push(PhrasePair {
                source,
                target,
                count: c.parse().map_err(|_| Error::parse(origin, n + 1, "bad count"))?,
                prob: p.parse().map_err(|_| Error::parse(origin, n + 1, "bad probability"))?,
            });
        }
        Ok(PhraseTable::from_pairs(pairs))
    }

    /// Exports every pair as an `always` constraint.
    pub fn to_constraints(&self) -> Vec<Constraint> {
        self.pairs()
            .map(|p| Constraint {
                source: p.source.clone(),
                target: p.target.clone(),
                mode: Mode::Always,
            })
            .collect()
    }
}

/// Keeps pairs with `prob > threshold`. With threshold 0.5 no source phrase
/// can keep two translations, since an exact 0.5/0.5 split removes both.
pub fn filter_by_prob(table: &PhraseTable, threshold: f64) -> PhraseTable {
    table.retain(|p| p.prob > threshold)
}

/// Keeps the `k` pairs whose source phrase has the lowest Moore-Lewis score;
/// ties go to the lexicographically smaller source, then target.
pub fn filter_by_domain(table: &PhraseTable, in_lm: &NGramModel, out_lm: &NGramModel, k: usize) -> PhraseTable {
    if k > table.len() {
        log::warn!("domain filter asked for {k} pairs but the table holds {}", table.len());
    }
    let scores: HashMap<&Vec<String>, f64> = table
        .sources()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|s| (*s, moore_lewis(in_lm, out_lm, s).0))
        .collect();
    let mut ranked: Vec<&PhrasePair> = table.pairs().collect();
    ranked.sort_by(|a, b| {
        scores[&a.source]
            .total_cmp(&scores[&b.source])
            .then_with(|| a.source.cmp(&b.source))
            .then_with(|| a.target.cmp(&b.target))
    });
    PhraseTable::from_pairs(ranked.into_iter().take(k).cloned())
}

/// Counts contiguous occurrences of each phrase within single sentences.
pub fn phrase_occurrences<S: AsRef<str>>(phrases: &[Vec<String>], corpus: &[Vec<S>]) -> HashMap<Vec<String>, usize> {
    let wanted: HashSet<&[String]> = phrases.iter().map(Vec::as_slice).collect();
    let lengths: std::collections::BTreeSet<usize> = phrases.iter().map(Vec::len).collect();
    let mut counts: HashMap<Vec<String>, usize> = HashMap::new();
    let mut window: Vec<String> = Vec::new();
    for sentence in corpus {
        for start in 0..sentence.len() {
            for &len in &lengths {
                if start + len > sentence.len() {
                    break;
                }
                window.clear();
                window.extend(sentence[start..start + len].iter().map(|t| t.as_ref().to_owned()));
                if wanted.contains(window.as_slice()) {
                    *counts.entry(window.clone()).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}

/// Keeps pairs whose target phrase occurs at least `min_count` times in the
/// monolingual corpus, never across sentence boundaries.
pub fn filter_by_occurrence<S: AsRef<str>>(table: &PhraseTable, mono: &[Vec<S>], min_count: usize) -> PhraseTable {
    let targets: Vec<Vec<String>> = table.pairs().map(|p| p.target.clone()).collect();
    let counts = phrase_occurrences(&targets, mono);
    table.retain(|p| counts.get(&p.target).copied().unwrap_or(0) >= min_count)
}
