use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use crate::{Error, Result};

/// End-of-word symbol appended to every word before segmentation.
pub const END_OF_WORD: &str = "</w>";

const HEADER: &str = "#bpe-v1";

type Pair = (String, String);

/// An ordered list of merge operations; the rank of a merge is its position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<Pair>,
    ranks: HashMap<Pair, usize>,
}

impl BpeModel {
    pub fn new(merges: Vec<Pair>) -> Result<Self> {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, pair) in merges.iter().enumerate() {
            if pair.0.is_empty() || pair.1.is_empty() {
                return Err(Error::InvalidParameter(format!("empty symbol in merge {rank}")));
            }
            if ranks.insert(pair.clone(), rank).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate merge {} {}",
                    pair.0, pair.1
                )));
            }
        }
        Ok(BpeModel { merges, ranks })
    }

    pub fn merges(&self) -> &[Pair] {
        &self.merges
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for (l, r) in &self.merges {
            let _ = writeln!(out, "{l} {r}");
        }
        out
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::parse(origin, 1, format!("missing {HEADER} header")));
        }
        let mut merges = Vec::new();
        for (n, line) in lines.enumerate() {
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_owned(), r.to_owned()))
                }
                _ => return Err(Error::parse(origin, n + 2, "expected `left right`")),
            }
        }
        Self::new(merges).map_err(|e| Error::parse(origin, 0, e.to_string()))
    }
}

fn initial_symbols(word: &str) -> Vec<String> {
    word.chars()
        .map(String::from)
        .chain(std::iter::once(END_OF_WORD.to_owned()))
        .collect()
}

/// Replaces every non-overlapping occurrence of `pair`, scanning left to right.
fn merge_symbols(symbols: &[String], pair: &Pair) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == pair.0 && symbols[i + 1] == pair.1 {
            out.push(format!("{}{}", pair.0, pair.1));
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}

struct PairStats {
    counts: HashMap<Pair, u64>,
    queue: BTreeSet<(Reverse<u64>, Pair)>,
    occurs_in: HashMap<Pair, BTreeSet<usize>>,
}

impl PairStats {
    fn adjust(&mut self, pair: &Pair, delta: i64, word: usize) {
        let count = self.counts.entry(pair.clone()).or_insert(0);
        if *count > 0 {
            self.queue.remove(&(Reverse(*count), pair.clone()));
        }
        *count = (*count as i64 + delta) as u64;
        if *count > 0 {
            self.queue.insert((Reverse(*count), pair.clone()));
        }
        if delta > 0 {
            self.occurs_in.entry(pair.clone()).or_default().insert(word);
        }
    }

    fn add_word(&mut self, symbols: &[String], freq: u64, word: usize, sign: i64) {
        for w in symbols.windows(2) {
            self.adjust(&(w[0].clone(), w[1].clone()), sign * freq as i64, word);
        }
    }
}

/// Learns up to `n_merges` merges by repeatedly joining the most frequent
/// adjacent symbol pair. Pair occurrences are counted at every position, ties
/// go to the lexicographically smallest pair, and learning stops once no pair
/// occurs at least twice.
pub fn bpe_learn(corpus: &BTreeMap<String, u64>, n_merges: usize) -> BpeModel {
    let mut words: Vec<Vec<String>> = Vec::new();
    let mut freqs = Vec::new();
    for (word, &freq) in corpus {
        if word.is_empty() || freq == 0 {
            continue;
        }
        words.push(initial_symbols(word));
        freqs.push(freq);
    }
    let mut stats = PairStats {
        counts: HashMap::new(),
        queue: BTreeSet::new(),
        occurs_in: HashMap::new(),
    };
    for (i, symbols) in words.iter().enumerate() {
        stats.add_word(symbols, freqs[i], i, 1);
    }

    let mut merges = Vec::new();
    while merges.len() < n_merges {
        let Some((Reverse(count), pair)) = stats.queue.first().cloned() else {
            break;
        };
        if count < 2 {
            break;
        }
        let affected: Vec<usize> = stats
            .occurs_in
            .remove(&pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        for idx in affected {
            let merged = merge_symbols(&words[idx], &pair);
            if merged.len() == words[idx].len() {
                continue;
            }
            let old = std::mem::replace(&mut words[idx], merged);
            stats.add_word(&old, freqs[idx], idx, -1);
            stats.add_word(&words[idx].clone(), freqs[idx], idx, 1);
        }
        merges.push(pair);
    }
    BpeModel::new(merges).expect("learned merges are unique")
}

fn segment_word(model: &BpeModel, word: &str) -> Vec<String> {
    let mut symbols = initial_symbols(word);
    loop {
        let best = symbols
            .windows(2)
            .filter_map(|w| {
                model
                    .ranks
                    .get(&(w[0].clone(), w[1].clone()))
                    .map(|&r| (r, (w[0].clone(), w[1].clone())))
            })
            .min_by_key(|(r, _)| *r);
        match best {
            Some((_, pair)) => symbols = merge_symbols(&symbols, &pair),
            None => return symbols,
        }
    }
}

/// Segments each token into subword units by applying merges in rank order.
/// The last unit of every word carries the [`END_OF_WORD`] suffix.
pub fn bpe_apply<S: AsRef<str>>(model: &BpeModel, sentence: &[S]) -> Vec<String> {
    let mut cache: HashMap<&str, Vec<String>> = HashMap::new();
    let mut out = Vec::new();
    for tok in sentence {
        let tok = tok.as_ref();
        let pieces = cache.entry(tok).or_insert_with(|| segment_word(model, tok));
        out.extend(pieces.iter().cloned());
    }
    out
}

/// Inverse of [`bpe_apply`]: concatenates units up to each end-of-word suffix.
pub fn bpe_decode<S: AsRef<str>>(units: &[S]) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for unit in units {
        let unit = unit.as_ref();
        match unit.strip_suffix(END_OF_WORD) {
            Some(stem) => {
                current.push_str(stem);
                out.push(std::mem::take(&mut current));
            }
            None => current.push_str(unit),
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Counts word frequencies over a tokenized corpus, for [`bpe_learn`].
pub fn word_counts<S: AsRef<str>>(corpus: &[Vec<S>]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for sentence in corpus {
        for tok in sentence {
            *counts.entry(tok.as_ref().to_owned()).or_insert(0) += 1;
        }
    }
    counts
}

/// Returns the set of distinct units a model can produce on `corpus`.
pub fn unit_vocabulary<S: AsRef<str>>(model: &BpeModel, corpus: &[Vec<S>]) -> BTreeSet<String> {
    let mut seen = HashSet::new();
    let mut vocab = BTreeSet::new();
    for sentence in corpus {
        for tok in sentence {
            if seen.insert(tok.as_ref().to_owned()) {
                vocab.extend(segment_word(model, tok.as_ref()));
            }
        }
    }
    vocab
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(entries: &[(&str, u64)]) -> BTreeMap<String, u64> {
        entries.iter().map(|(w, c)| (w.to_string(), *c)).collect()
    }

    fn pair(l: &str, r: &str) -> Pair {
        (l.to_owned(), r.to_owned())
    }

    #[test]
    fn overlapping_pair_learned_first() {
        // a a a b </w>: (a,a) twice, every other pair once.
        let model = bpe_learn(&counts(&[("aaab", 1)]), 1);
        assert_eq!(model.merges(), [pair("a", "a")]);
        // Merging is non-overlapping left to right: "aa a b </w>".
        assert_eq!(bpe_apply(&model, &["aaab"]), ["aa", "a", "b", "</w>"]);
    }

    #[test]
    fn zero_merges() {
        assert!(bpe_learn(&counts(&[("abab", 10)]), 0).merges().is_empty());
    }

    #[test]
    fn ties_break_lexicographically() {
        // Counts: (a,b)=5 (a,c)=5 (b,</w>)=5 (c,</w>)=5; "</w>" pairs sort after
        // ("a","b") and ("a","c").
        let model = bpe_learn(&counts(&[("ab", 5), ("ac", 5)]), 2);
        assert_eq!(model.merges(), [pair("a", "b"), pair("a", "c")]);
    }

    #[test]
    fn stops_when_no_pair_repeats() {
        let model = bpe_learn(&counts(&[("abc", 1)]), 10);
        assert!(model.merges().is_empty());
    }

    #[test]
    fn hand_traced_merge_sequence() {
        // low:5 lower:2 newest:6 widest:3, a classic hand-run.
        // Initial top pairs: (e,s)=9 (s,t)=9 (t,</w>)=9 -> (e,s) by order.
        // Then (es,t)=9 -> (est,</w>)=9 -> (l,o)=7 -> (lo,w)=7 -> (n,e)=6 ...
        let model = bpe_learn(
            &counts(&[("low", 5), ("lower", 2), ("newest", 6), ("widest", 3)]),
            6,
        );
        assert_eq!(
            model.merges(),
            [
                pair("e", "s"),
                pair("es", "t"),
                pair("est", "</w>"),
                pair("l", "o"),
                pair("lo", "w"),
                pair("e", "w"),
            ]
        );
    }

    #[test]
    fn no_merges_splits_into_characters() {
        let model = BpeModel::default();
        assert_eq!(bpe_apply(&model, &["ab", "c"]), ["a", "b", "</w>", "c", "</w>"]);
    }

    #[test]
    fn text_round_trip_is_byte_identical() {
        let model = bpe_learn(&counts(&[("low", 5), ("lower", 2), ("newest", 6)]), 20);
        let text = model.to_text();
        let reloaded = BpeModel::from_text(&text, "m").unwrap();
        assert_eq!(reloaded, model);
        assert_eq!(reloaded.to_text(), text);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(BpeModel::from_text("a b\n", "m").is_err());
        assert!(BpeModel::from_text("#bpe-v1\na b\na b\n", "m").is_err());
        assert!(BpeModel::from_text("#bpe-v1\nab\n", "m").is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_apply(
            corpus in prop::collection::vec("[a-e]{1,6}", 1..30),
            sentence in prop::collection::vec("[a-fé]{1,8}", 0..10),
            n in 0usize..40,
        ) {
            let model = bpe_learn(&word_counts(&[corpus]), n);
            let units = bpe_apply(&model, &sentence);
            prop_assert_eq!(bpe_decode(&units), sentence);
        }
    }
}
