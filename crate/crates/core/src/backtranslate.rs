//! Constrained backtranslation: Moore-Lewis selection of monolingual lines,
//! decoding them into synthetic sources with or without the terminology
//! constraints they trigger, and emission of the synthetic parallel corpus.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{match_all, Constraint, ConstraintSet, NeTagger};
use crate::decoder::{beam_search, constrained_beam_search, contains_phrase, Scorer};
use crate::io::write_lines;
use crate::ngram_lm::{select_top, NGramModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BtMode {
    Constrained,
    Unconstrained,
}

impl FromStr for BtMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "constrained" => Ok(BtMode::Constrained),
            "unconstrained" => Ok(BtMode::Unconstrained),
            _ => Err(format!("unknown mode {s:?} (expected constrained or unconstrained)")),
        }
    }
}

impl fmt::Display for BtMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BtMode::Constrained => "constrained",
            BtMode::Unconstrained => "unconstrained",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    /// Index of the line in the monolingual input.
    pub line: usize,
    pub synthetic_source: Vec<String>,
    pub original_target: Vec<String>,
    /// One entry per matched span.
    pub applied_constraints: Vec<Constraint>,
    /// Decoded with the applied constraints enforced.
    pub constrained: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BtStats {
    pub lines_in: usize,
    pub sentences_selected: usize,
    pub sentences_processed: usize,
    pub sentences_with_constraints: usize,
    pub constraints_matched: usize,
    pub constraints_satisfied: usize,
    pub infeasible_fallbacks: usize,
    pub unfinished_warnings: usize,
    pub decode_failures: usize,
}

impl BtStats {
    /// Flat JSON object of counters.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize") + "\n"
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtParams {
    pub top_n: usize,
    pub mode: BtMode,
    pub beam: usize,
}

/// Output length cap for a line of `n` tokens.
pub fn max_len_for(n: usize) -> usize {
    (3 * n).div_ceil(2) + 5
}

enum LineOutcome {
    Pair { pair: SyntheticPair, fallback: bool, unfinished: bool },
    Failed,
}

fn decode_line<S: Scorer + ?Sized>(
    scorer: &S,
    line: usize,
    tokens: Vec<String>,
    set: &ConstraintSet,
    tagger: &NeTagger,
    params: &BtParams,
) -> LineOutcome {
    let matches = match_all(&tokens, set, tagger);
    let applied: Vec<Constraint> = matches.iter().map(|m| set.get(m.constraint).clone()).collect();
    let targets: Vec<Vec<String>> = applied.iter().map(|c| c.target.clone()).collect();
    let max_len = max_len_for(tokens.len());
    let constrained = params.mode == BtMode::Constrained && !targets.is_empty();
    let mut fallback = false;
    let result = if constrained {
        match constrained_beam_search(scorer, &tokens, &targets, params.beam, max_len) {
            Err(e @ (Error::ConstraintBudget { .. } | Error::InvalidParameter(_) | Error::Unsatisfiable)) => {
                log::warn!("line {line}: {e}; decoding without constraints");
                fallback = true;
                beam_search(scorer, &tokens, params.beam, max_len)
            }
            other => other,
        }
    } else {
        beam_search(scorer, &tokens, params.beam, max_len)
    };
    match result {
        Ok(hyp) => LineOutcome::Pair {
            unfinished: !hyp.finished,
            pair: SyntheticPair {
                line,
                synthetic_source: hyp.tokens,
                original_target: tokens,
                applied_constraints: applied,
                constrained: constrained && !fallback,
            },
            fallback,
        },
        Err(e) => {
            log::warn!("line {line}: decoding failed: {e}");
            LineOutcome::Failed
        }
    }
}

/// Selects the `top_n` most in-domain monolingual lines, gathers the
/// constraints each one triggers and decodes it into a synthetic source.
/// Lines that fail to decode are skipped and counted.
#[allow(clippy::too_many_arguments)]
pub fn run_backtranslation<L, S>(
    mono: &[L],
    in_lm: &NGramModel,
    out_lm: &NGramModel,
    scorer: &S,
    set: &ConstraintSet,
    tagger: &NeTagger,
    params: &BtParams,
) -> Result<(Vec<SyntheticPair>, BtStats)>
where
    L: AsRef<str> + Sync,
    S: Scorer + ?Sized,
{
    if params.beam == 0 {
        return Err(Error::InvalidParameter("beam must be at least 1".into()));
    }
    let selected = select_top(mono, in_lm, out_lm, params.top_n);
    let outcomes: Vec<LineOutcome> = selected
        .par_iter()
        .map(|&i| {
            let tokens = mono[i].as_ref().split_whitespace().map(str::to_owned).collect();
            decode_line(scorer, i, tokens, set, tagger, params)
        })
        .collect();

    let mut stats = BtStats {
        lines_in: mono.len(),
        sentences_selected: selected.len(),
        ..BtStats::default()
    };
    let mut pairs = Vec::new();
    for outcome in outcomes {
        match outcome {
            LineOutcome::Failed => stats.decode_failures += 1,
            LineOutcome::Pair { pair, fallback, unfinished } => {
                stats.sentences_processed += 1;
                stats.sentences_with_constraints += usize::from(!pair.applied_constraints.is_empty());
                stats.constraints_matched += pair.applied_constraints.len();
                stats.constraints_satisfied += pair
                    .applied_constraints
                    .iter()
                    .filter(|c| contains_phrase(&pair.synthetic_source, &c.target))
                    .count();
                stats.infeasible_fallbacks += usize::from(fallback);
                stats.unfinished_warnings += usize::from(unfinished);
                pairs.push(pair);
            }
        }
    }
    Ok((pairs, stats))
}

/// Writes the synthetic sources and the original targets as two line-aligned
/// files in input order.
pub fn emit_corpus(pairs: &[SyntheticPair], src_path: &Path, tgt_path: &Path) -> Result<()> {
    write_lines(src_path, pairs.iter().map(|p| p.synthetic_source.join(" ")))?;
    write_lines(tgt_path, pairs.iter().map(|p| p.original_target.join(" ")))
}
