//! Corpus BLEU with the reference implementation's 13a tokenization, and
//! terminology recall.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::constraints::Constraint;
use crate::decoder::contains_phrase;
use crate::{Error, Result};

const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tokenization {
    #[default]
    Thirteen,
    None,
}

impl FromStr for Tokenization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "13a" => Ok(Tokenization::Thirteen),
            "none" => Ok(Tokenization::None),
            _ => Err(format!("unknown tokenization {s:?} (expected 13a or none)")),
        }
    }
}

fn is_py_space(c: char) -> bool {
    c.is_whitespace() || ('\x1c'..='\x1f').contains(&c)
}

fn split_py(s: &str) -> Vec<String> {
    s.split(is_py_space).filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

fn is_13a_symbol(c: char) -> bool {
    matches!(c, '{'..='~' | '['..='`' | ' '..='&' | '('..='+' | ':'..='@' | '/')
}

/// Applies a two-character substitution rule left to right without overlap,
/// like a regex `sub` over a pattern of two single-character classes.
fn sub_pairs(chars: &[char], first: impl Fn(char) -> bool, second: impl Fn(char) -> bool, emit: impl Fn(&mut Vec<char>, char, char)) -> Vec<char> {
    let mut out = Vec::with_capacity(chars.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        if i + 1 < chars.len() && first(chars[i]) && second(chars[i + 1]) {
            emit(&mut out, chars[i], chars[i + 1]);
            i += 2;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// The mteval-v13a tokenizer as implemented by the reference BLEU tool.
pub fn tokenize_13a(line: &str) -> Vec<String> {
    let mut line = line.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if line.contains('&') {
        line = line
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let mut chars: Vec<char> = format!(" {line} ").chars().collect();

    let mut spaced = Vec::with_capacity(chars.len() * 2);
    for c in chars {
        if is_13a_symbol(c) {
            spaced.extend([' ', c, ' ']);
        } else {
            spaced.push(c);
        }
    }
    chars = spaced;
    let digit = |c: char| c.is_ascii_digit();
    let period = |c: char| c == '.' || c == ',';
    chars = sub_pairs(&chars, |c| !digit(c), period, |o, a, b| o.extend([a, ' ', b, ' ']));
    chars = sub_pairs(&chars, period, |c| !digit(c), |o, a, b| o.extend([' ', a, ' ', b]));
    chars = sub_pairs(&chars, digit, |c| c == '-', |o, a, b| o.extend([a, ' ', b, ' ']));
    split_py(&chars.into_iter().collect::<String>())
}

pub fn tokenize_for_bleu(line: &str, tok: Tokenization) -> Vec<String> {
    match tok {
        Tokenization::Thirteen => tokenize_13a(line),
        Tokenization::None => split_py(line),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    pub score: f64,
    /// Clipped n-gram precisions in [0, 1], orders 1 to 4.
    pub precisions: [f64; MAX_ORDER],
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuScore {
    pub fn ratio(&self) -> f64 {
        self.hyp_len as f64 / self.ref_len.max(1) as f64
    }
}

impl fmt::Display for BleuScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p: Vec<String> = self.precisions.iter().map(|p| format!("{:.1}", 100.0 * p)).collect();
        write!(
            f,
            "BLEU = {:.2} ({}, BP={:.3}, ratio={:.3})",
            self.score,
            p.join("/"),
            self.brevity_penalty,
            self.ratio()
        )
    }
}

#[derive(Default)]
struct Stats {
    hyp_len: usize,
    ref_len: usize,
    matches: [usize; MAX_ORDER],
    totals: [usize; MAX_ORDER],
}

impl Stats {
    fn add(mut self, other: Stats) -> Stats {
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

fn sentence_stats(hyp: &[String], reference: &[String]) -> Stats {
    let mut s = Stats {
        hyp_len: hyp.len(),
        ref_len: reference.len(),
        ..Stats::default()
    };
    for n in 1..=MAX_ORDER {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        s.totals[n - 1] = hyp.len().saturating_sub(n - 1);
        s.matches[n - 1] = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    }
    s
}

/// Corpus BLEU against a single reference per line, without smoothing.
pub fn bleu<H: AsRef<str> + Sync, R: AsRef<str> + Sync>(hyps: &[H], refs: &[R], tok: Tokenization) -> Result<BleuScore> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            left: hyps.len(),
            right: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::InvalidParameter("BLEU needs at least one line".into()));
    }
    let stats = hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, r)| {
            sentence_stats(
                &tokenize_for_bleu(h.as_ref(), tok),
                &tokenize_for_bleu(r.as_ref(), tok),
            )
        })
        .reduce(Stats::default, Stats::add);

    let mut precisions = [0.0; MAX_ORDER];
    for ((p, &m), &t) in precisions.iter_mut().zip(&stats.matches).zip(&stats.totals) {
        if t > 0 {
            *p = m as f64 / t as f64;
        }
    }
    let brevity_penalty = if stats.hyp_len == 0 {
        0.0
    } else if stats.hyp_len < stats.ref_len {
        (1.0 - stats.ref_len as f64 / stats.hyp_len as f64).exp()
    } else {
        1.0
    };
    let score = if stats.matches.contains(&0) {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * mean_log.exp()
    };
    Ok(BleuScore {
        score,
        precisions,
        matches: stats.matches,
        totals: stats.totals,
        brevity_penalty,
        hyp_len: stats.hyp_len,
        ref_len: stats.ref_len,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TermRecall {
    pub recall: f64,
    pub found: usize,
    pub applied: usize,
    /// No constraint was applied; recall is reported as 1.0.
    pub vacuous: bool,
    /// `target phrase -> (found, applied)`.
    pub per_constraint: BTreeMap<String, (usize, usize)>,
}

impl fmt::Display for TermRecall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "term recall = {:.4} ({}/{})", self.recall, self.found, self.applied)?;
        if self.vacuous {
            write!(f, " [vacuous]")?;
        }
        Ok(())
    }
}

/// Fraction of applied constraints whose target phrase occurs contiguously in
/// the corresponding hypothesis.
pub fn term_recall<S: AsRef<str>>(hyps: &[Vec<S>], applied: &[Vec<Constraint>]) -> Result<TermRecall> {
    if hyps.len() != applied.len() {
        return Err(Error::LengthMismatch {
            left: hyps.len(),
            right: applied.len(),
        });
    }
    let mut out = TermRecall::default();
    for (hyp, constraints) in hyps.iter().zip(applied) {
        for c in constraints {
            let hit = contains_phrase(hyp, &c.target);
            let entry = out.per_constraint.entry(c.target.join(" ")).or_insert((0, 0));
            entry.0 += usize::from(hit);
            entry.1 += 1;
            out.found += usize::from(hit);
            out.applied += 1;
        }
    }
    out.vacuous = out.applied == 0;
    out.recall = if out.vacuous {
        1.0
    } else {
        out.found as f64 / out.applied as f64
    };
    Ok(out)
}
