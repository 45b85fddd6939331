//! Terminology constraints: loading, source-side matching, the named-entity
//! gate, a rule-based NE tagger and copy-candidate extraction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_COPY_MIN_COUNT: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Applied whenever the source phrase occurs in the sentence.
    Always,
    /// Applied only when the matched span lies inside a tagged named entity.
    NeGated,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Always => "always",
            Mode::NeGated => "ne_gated",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "always" => Ok(Mode::Always),
            "ne_gated" => Ok(Mode::NeGated),
            _ => Err(format!("unknown constraint mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub mode: Mode,
}

impl Constraint {
    pub fn new(source: &str, target: &str, mode: Mode) -> Self {
        Constraint {
            source: source.split_whitespace().map(str::to_owned).collect(),
            target: target.split_whitespace().map(str::to_owned).collect(),
            mode,
        }
    }

    pub fn to_tsv_line(&self) -> String {
        format!("{}\t{}\t{}", self.source.join(" "), self.target.join(" "), self.mode)
    }
}

/// Deduplicated constraints in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    items: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new<I: IntoIterator<Item = Constraint>>(items: I) -> Self {
        let mut seen = HashSet::new();
        let items = items.into_iter().filter(|c| seen.insert(c.clone())).collect();
        ConstraintSet { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Constraint> {
        self.items.iter()
    }

    pub fn get(&self, index: usize) -> &Constraint {
        &self.items[index]
    }

    /// Appends `other`, keeping first occurrences.
    pub fn merged(&self, other: &ConstraintSet) -> ConstraintSet {
        ConstraintSet::new(self.items.iter().chain(other.items.iter()).cloned())
    }

    pub fn to_tsv(&self) -> String {
        self.items.iter().map(|c| c.to_tsv_line() + "\n").collect()
    }
}

/// Parses `source<TAB>target<TAB>mode` lines.
pub fn load_constraints(text: &str, origin: &str) -> Result<ConstraintSet> {
    let mut items = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [src, tgt, mode] = cols[..] else {
            return Err(Error::parse(origin, n + 1, "expected `source<TAB>target<TAB>mode`"));
        };
        let mode = mode.trim().parse::<Mode>().map_err(|e| Error::parse(origin, n + 1, e))?;
        let c = Constraint::new(src, tgt, mode);
        if c.source.is_empty() || c.target.is_empty() {
            return Err(Error::parse(origin, n + 1, "empty constraint side"));
        }
        items.push(c);
    }
    Ok(ConstraintSet::new(items))
}

/// A constraint occurrence in a sentence; `end` is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Match {
    pub constraint: usize,
    pub start: usize,
    pub end: usize,
}

fn occurrences<S: AsRef<str>>(sentence: &[S], phrase: &[String]) -> Vec<usize> {
    let n = phrase.len();
    if n == 0 || n > sentence.len() {
        return Vec::new();
    }
    (0..=sentence.len() - n)
        .filter(|&i| sentence[i..i + n].iter().zip(phrase).all(|(a, b)| a.as_ref() == b))
        .collect()
}

fn find_matches<S: AsRef<str>>(sentence: &[S], set: &ConstraintSet, mode: Mode) -> Vec<Match> {
    let mut out = Vec::new();
    for (k, c) in set.iter().enumerate().filter(|(_, c)| c.mode == mode) {
        for start in occurrences(sentence, &c.source) {
            out.push(Match {
                constraint: k,
                start,
                end: start + c.source.len(),
            });
        }
    }
    out.sort();
    out
}

/// Every occurrence of an `always` constraint's source phrase (case-sensitive,
/// overlapping occurrences included).
pub fn match_always<S: AsRef<str>>(sentence: &[S], set: &ConstraintSet) -> Vec<Match> {
    find_matches(sentence, set, Mode::Always)
}

/// Gazetteer plus capitalization-pattern named-entity tagger.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeTagger {
    gazetteer: BTreeSet<Vec<String>>,
    max_entry_len: usize,
}

/// Half-open token span `[start, end)`.
pub type Span = (usize, usize);

fn is_capitalized(tok: &str) -> bool {
    tok.chars().next().is_some_and(char::is_uppercase)
}

impl NeTagger {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let gazetteer: BTreeSet<Vec<String>> = entries
            .into_iter()
            .map(|e| e.as_ref().split_whitespace().map(str::to_owned).collect::<Vec<_>>())
            .filter(|e| !e.is_empty())
            .collect();
        let max_entry_len = gazetteer.iter().map(Vec::len).max().unwrap_or(0);
        NeTagger {
            gazetteer,
            max_entry_len,
        }
    }

    /// One gazetteer entry per line.
    pub fn from_gazetteer_text(text: &str) -> Self {
        NeTagger::new(text.lines().filter(|l| !l.trim().is_empty()))
    }

    pub fn gazetteer_len(&self) -> usize {
        self.gazetteer.len()
    }

    /// Gazetteer spans first (longest match, left to right), then maximal runs
    /// of capitalized tokens over the remaining positions. Position 0 never
    /// starts a pattern run since sentence-initial capitals carry no signal.
    pub fn tag<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<Span> {
        let words: Vec<&str> = sentence.iter().map(|s| s.as_ref()).collect();
        let mut covered = vec![false; words.len()];
        let mut spans = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let longest = (1..=self.max_entry_len.min(words.len() - i)).rev().find(|&len| {
                let cand: Vec<String> = words[i..i + len].iter().map(|w| w.to_string()).collect();
                self.gazetteer.contains(&cand)
            });
            match longest {
                Some(len) => {
                    spans.push((i, i + len));
                    covered[i..i + len].iter_mut().for_each(|c| *c = true);
                    i += len;
                }
                None => i += 1,
            }
        }
        let mut i = 1;
        while i < words.len() {
            if !covered[i] && is_capitalized(words[i]) {
                let start = i;
                while i < words.len() && !covered[i] && is_capitalized(words[i]) {
                    i += 1;
                }
                spans.push((start, i));
            } else {
                i += 1;
            }
        }
        spans.sort();
        spans
    }
}

pub fn ne_tag<S: AsRef<str>>(sentence: &[S], tagger: &NeTagger) -> Vec<Span> {
    tagger.tag(sentence)
}

/// `ne_gated` constraint occurrences lying entirely inside one NE span.
pub fn match_ne_gated<S: AsRef<str>>(sentence: &[S], set: &ConstraintSet, tagger: &NeTagger) -> Vec<Match> {
    let spans = tagger.tag(sentence);
    find_matches(sentence, set, Mode::NeGated)
        .into_iter()
        .filter(|m| spans.iter().any(|&(s, e)| s <= m.start && m.end <= e))
        .collect()
}

/// All applicable matches for a sentence: `always` plus gated ones.
pub fn match_all<S: AsRef<str>>(sentence: &[S], set: &ConstraintSet, tagger: &NeTagger) -> Vec<Match> {
    let mut out = match_always(sentence, set);
    out.extend(match_ne_gated(sentence, set, tagger));
    out.sort();
    out
}

/// Occurrence counts of every tagged NE phrase in a corpus.
pub fn count_ne_phrases<S: AsRef<str>>(corpus: &[Vec<S>], tagger: &NeTagger) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for sentence in corpus {
        for (s, e) in tagger.tag(sentence) {
            let phrase = sentence[s..e].iter().map(|t| t.as_ref()).collect::<Vec<_>>().join(" ");
            *counts.entry(phrase).or_insert(0) += 1;
        }
    }
    counts
}

/// Contiguous occurrence counts of the given phrases in a corpus.
pub fn count_phrases<S: AsRef<str>>(phrases: &[String], corpus: &[Vec<S>]) -> BTreeMap<String, usize> {
    let split: Vec<Vec<String>> = phrases
        .iter()
        .map(|p| p.split_whitespace().map(str::to_owned).collect())
        .collect();
    let found = crate::phrasex::phrase_occurrences(&split, corpus);
    phrases
        .iter()
        .zip(&split)
        .map(|(p, s)| (p.clone(), found.get(s).copied().unwrap_or(0)))
        .collect()
}

/// NE phrases frequent on both sides become copy constraints `(p, p, ne_gated)`.
pub fn extract_copy_candidates(
    src_counts: &BTreeMap<String, usize>,
    tgt_counts: &BTreeMap<String, usize>,
    min_count: usize,
) -> ConstraintSet {
    ConstraintSet::new(
        src_counts
            .iter()
            .filter(|&(p, &c)| c >= min_count && tgt_counts.get(p).is_some_and(|&t| t >= min_count))
            .map(|(p, _)| Constraint::new(p, p, Mode::NeGated)),
    )
}

/// Counts cache TSV: `phrase<TAB>count`.
pub fn counts_to_tsv(counts: &BTreeMap<String, usize>) -> String {
    counts.iter().map(|(p, c)| format!("{p}\t{c}\n")).collect()
}

pub fn counts_from_tsv(text: &str, origin: &str) -> Result<BTreeMap<String, usize>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (p, c) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, n + 1, "expected `phrase<TAB>count`"))?;
        let c = c.parse().map_err(|_| Error::parse(origin, n + 1, "bad count"))?;
        out.insert(p.to_owned(), c);
    }
    Ok(out)
}

/// Groups matches by constraint target so duplicates reach the decoder once.
pub fn distinct_targets(matches: &[Match], set: &ConstraintSet) -> Vec<Vec<String>> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for m in matches {
        let target = &set.get(m.constraint).target;
        if seen.insert(target.clone(), ()).is_none() {
            out.push(target.clone());
        }
    }
    out
}

/// Per-line applied constraints as `line<TAB>source<TAB>target<TAB>mode`.
pub fn applied_to_tsv(per_line: &[Vec<Constraint>]) -> String {
    let mut out = String::new();
    for (i, cs) in per_line.iter().enumerate() {
        for c in cs {
            out.push_str(&format!("{i}\t{}\n", c.to_tsv_line()));
        }
    }
    out
}

/// Inverse of [`applied_to_tsv`] for a corpus of `n_lines` lines.
pub fn applied_from_tsv(text: &str, n_lines: usize, origin: &str) -> Result<Vec<Vec<Constraint>>> {
    let mut out = vec![Vec::new(); n_lines];
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (idx, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, n + 1, "expected `line<TAB>source<TAB>target<TAB>mode`"))?;
        let idx: usize = idx.parse().map_err(|_| Error::parse(origin, n + 1, "bad line index"))?;
        if idx >= n_lines {
            return Err(Error::parse(origin, n + 1, format!("line index {idx} beyond {n_lines} lines")));
        }
        let set = load_constraints(rest, origin).map_err(|e| Error::parse(origin, n + 1, e.to_string()))?;
        out[idx].push(set.get(0).clone());
    }
    Ok(out)
}
