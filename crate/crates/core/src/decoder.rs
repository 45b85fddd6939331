//! Beam search and lexically constrained beam search with dynamic beam
//! allocation, over a pluggable next-token scorer.
//!
//! Constraints are tracked with an Aho-Corasick automaton. A hypothesis is
//! binned by its *progress*: tokens of fully met constraints plus the depth of
//! the longest current partial match of a still-unmet constraint. Banks split
//! the beam evenly, the remainder going to the banks with most progress.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::align::TranslationTable;
use crate::ngram_lm::{NGramModel, EOS, UNK};
use crate::{Error, Result};

pub const DEFAULT_BEAM: usize = 5;
pub const DEFAULT_CONSTRAINED_BEAM: usize = 20;
pub const MAX_CONSTRAINTS: usize = 64;

const LOGSUM_TOLERANCE: f64 = 1e-6;

/// Next-token model. `vocab()[0]` must be the end-of-sentence token.
pub trait Scorer: Sync {
    fn vocab(&self) -> &[String];

    /// Log-probabilities aligned with `vocab()`; may contain `-inf`.
    fn next_logprobs(&self, source: &[String], prefix: &[String]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Output tokens, EOS excluded.
    pub tokens: Vec<String>,
    pub score: f64,
    pub finished: bool,
    /// Number of distinct constraints present in `tokens`.
    pub constraints_met: usize,
}

impl Hypothesis {
    /// Score divided by length; a finished hypothesis counts its EOS.
    pub fn normalized_score(&self) -> f64 {
        let len = self.tokens.len() + usize::from(self.finished);
        self.score / len.max(1) as f64
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Aho-Corasick automaton over constraint token sequences.
#[derive(Debug, Clone)]
pub struct ConstraintTrie {
    constraints: Vec<Vec<String>>,
    token_ids: HashMap<String, u32>,
    children: Vec<BTreeMap<u32, usize>>,
    fail: Vec<usize>,
    depth: Vec<usize>,
    /// Constraints ending at the node or anywhere on its failure chain.
    output: Vec<u64>,
    /// Constraints of which the node's path is a prefix.
    prefix_of: Vec<u64>,
}

/// Per-hypothesis constraint bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ConstraintState {
    node: usize,
    met: u64,
    tokens_met: usize,
}

impl ConstraintState {
    /// Tokens of fully satisfied constraints.
    pub fn tokens_met(&self) -> usize {
        self.tokens_met
    }

    pub fn met_mask(&self) -> u64 {
        self.met
    }

    pub fn node(&self) -> usize {
        self.node
    }
}

impl ConstraintTrie {
    /// Builds the automaton; duplicate constraints are collapsed.
    pub fn new<S: AsRef<str>>(constraints: &[Vec<S>]) -> Result<Self> {
        let mut uniq: Vec<Vec<String>> = Vec::new();
        let mut seen = HashSet::new();
        for c in constraints {
            let c: Vec<String> = c.iter().map(|t| t.as_ref().to_owned()).collect();
            if c.is_empty() {
                return Err(Error::InvalidParameter("empty constraint".into()));
            }
            if seen.insert(c.clone()) {
                uniq.push(c);
            }
        }
        if uniq.len() > MAX_CONSTRAINTS {
            return Err(Error::InvalidParameter(format!(
                "{} constraints exceed the per-sentence limit of {MAX_CONSTRAINTS}",
                uniq.len()
            )));
        }
        let mut trie = ConstraintTrie {
            constraints: uniq,
            token_ids: HashMap::new(),
            children: vec![BTreeMap::new()],
            fail: vec![0],
            depth: vec![0],
            output: vec![0],
            prefix_of: vec![0],
        };
        let mut ends = vec![0u64];
        for k in 0..trie.constraints.len() {
            let bit = 1u64 << k;
            let mut node = 0;
            trie.prefix_of[0] |= bit;
            for tok in trie.constraints[k].clone() {
                let next_id = trie.token_ids.len() as u32;
                let id = *trie.token_ids.entry(tok).or_insert(next_id);
                node = match trie.children[node].get(&id) {
                    Some(&child) => child,
                    None => {
                        let child = trie.children.len();
                        trie.children.push(BTreeMap::new());
                        trie.fail.push(0);
                        trie.depth.push(trie.depth[node] + 1);
                        trie.output.push(0);
                        trie.prefix_of.push(0);
                        ends.push(0);
                        trie.children[node].insert(id, child);
                        child
                    }
                };
                trie.prefix_of[node] |= bit;
            }
            ends[node] |= bit;
        }
        let mut queue = VecDeque::new();
        for &child in trie.children[0].values() {
            queue.push_back(child);
        }
        trie.output[0] = ends[0];
        while let Some(v) = queue.pop_front() {
            trie.output[v] = ends[v] | trie.output[trie.fail[v]];
            let kids: Vec<(u32, usize)> = trie.children[v].iter().map(|(&a, &c)| (a, c)).collect();
            for (a, child) in kids {
                let mut f = trie.fail[v];
                let target = loop {
                    if let Some(&g) = trie.children[f].get(&a) {
                        break g;
                    }
                    if f == 0 {
                        break 0;
                    }
                    f = trie.fail[f];
                };
                trie.fail[child] = target;
                queue.push_back(child);
            }
        }
        Ok(trie)
    }

    pub fn empty() -> Self {
        ConstraintTrie::new::<String>(&[]).expect("no constraints")
    }

    pub fn constraints(&self) -> &[Vec<String>] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Sum of constraint lengths; the highest bank index.
    pub fn total_tokens(&self) -> usize {
        self.constraints.iter().map(Vec::len).sum()
    }

    pub fn all_met_mask(&self) -> u64 {
        if self.constraints.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.constraints.len()) - 1
        }
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.token_ids.get(token).copied()
    }

    fn goto(&self, mut node: usize, token: Option<u32>) -> usize {
        let Some(a) = token else { return 0 };
        loop {
            if let Some(&next) = self.children[node].get(&a) {
                return next;
            }
            if node == 0 {
                return 0;
            }
            node = self.fail[node];
        }
    }

    fn advance_id(&self, state: &ConstraintState, token: Option<u32>) -> ConstraintState {
        let node = self.goto(state.node, token);
        let newly = self.output[node] & !state.met;
        let mut tokens_met = state.tokens_met;
        for (k, c) in self.constraints.iter().enumerate() {
            if newly >> k & 1 == 1 {
                tokens_met += c.len();
            }
        }
        ConstraintState {
            node,
            met: state.met | newly,
            tokens_met,
        }
    }

    pub fn advance(&self, state: &ConstraintState, token: &str) -> ConstraintState {
        self.advance_id(state, self.token_id(token))
    }

    /// Depth of the longest suffix of the output that is a proper prefix of
    /// some unmet constraint.
    pub fn partial_depth(&self, state: &ConstraintState) -> usize {
        let mut v = state.node;
        loop {
            if self.prefix_of[v] & !state.met != 0 {
                return self.depth[v];
            }
            if v == 0 {
                return 0;
            }
            v = self.fail[v];
        }
    }

    /// Bank index: `tokens_met` plus the current partial-match depth.
    pub fn progress(&self, state: &ConstraintState) -> usize {
        state.tokens_met + self.partial_depth(state)
    }

    pub fn all_met(&self, state: &ConstraintState) -> bool {
        state.met == self.all_met_mask()
    }

    /// Trie token ids whose emission would extend a match toward an unmet
    /// constraint from `state`.
    fn advancing_tokens(&self, state: &ConstraintState) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        for (k, c) in self.constraints.iter().enumerate() {
            if state.met >> k & 1 == 0 {
                out.insert(self.token_ids[&c[0]]);
            }
        }
        let mut v = state.node;
        while v != 0 {
            for (&a, &child) in &self.children[v] {
                if self.prefix_of[child] & !state.met != 0 {
                    out.insert(a);
                }
            }
            v = self.fail[v];
        }
        out
    }
}

/// Advances `state` by one emitted token.
pub fn advance_constraint_state(trie: &ConstraintTrie, state: &ConstraintState, token: &str) -> ConstraintState {
    trie.advance(state, token)
}

fn validate(dist: &[f64], vocab_len: usize, step: usize) -> Result<()> {
    let bad = |reason: String| Err(Error::InvalidDistribution { step, reason });
    if dist.len() != vocab_len {
        return bad(format!("{} values for a vocabulary of {vocab_len}", dist.len()));
    }
    if let Some(i) = dist.iter().position(|v| v.is_nan() || *v > 1e-9) {
        return bad(format!("entry {i} is {}", dist[i]));
    }
    let max = dist.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return bad("all entries are -inf".into());
    }
    let lse = max + dist.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    if lse.abs() > LOGSUM_TOLERANCE {
        return bad(format!("probabilities sum to {}", lse.exp()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Hyp {
    tokens: Vec<u32>,
    score: f64,
    state: ConstraintState,
}

struct Candidate {
    parent: usize,
    token: u32,
    score: f64,
}

struct Search<'a, S: Scorer + ?Sized> {
    scorer: &'a S,
    source: &'a [String],
    /// Rank of each vocab entry in string order, for tie-breaking.
    rank: Vec<u32>,
}

const EOS_INDEX: u32 = 0;

impl<'a, S: Scorer + ?Sized> Search<'a, S> {
    fn new(scorer: &'a S, source: &'a [String]) -> Result<Self> {
        let vocab = scorer.vocab();
        if vocab.first().map(String::as_str) != Some(EOS) {
            return Err(Error::InvalidParameter(format!("scorer vocabulary must start with {EOS}")));
        }
        let mut order: Vec<usize> = (0..vocab.len()).collect();
        order.sort_by(|&a, &b| vocab[a].cmp(&vocab[b]));
        let mut rank = vec![0u32; vocab.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r as u32;
        }
        Ok(Search { scorer, source, rank })
    }

    fn strings(&self, ids: &[u32]) -> Vec<String> {
        let vocab = self.scorer.vocab();
        ids.iter().map(|&i| vocab[i as usize].clone()).collect()
    }

    fn expand(&self, hyps: &[Hyp], step: usize) -> Result<Vec<Vec<f64>>> {
        let dists: Vec<Vec<f64>> = hyps
            .par_iter()
            .map(|h| self.scorer.next_logprobs(self.source, &self.strings(&h.tokens)))
            .collect();
        let n = self.scorer.vocab().len();
        for d in &dists {
            validate(d, n, step)?;
        }
        Ok(dists)
    }

    fn cmp_seq(&self, a: &[u32], b: &[u32]) -> Ordering {
        a.iter()
            .map(|&t| self.rank[t as usize])
            .cmp(b.iter().map(|&t| self.rank[t as usize]))
    }

    /// Score descending, then token sequence ascending.
    fn cmp_candidates(&self, hyps: &[Hyp], a: &Candidate, b: &Candidate) -> Ordering {
        b.score
            .total_cmp(&a.score)
            .then_with(|| self.cmp_seq(&hyps[a.parent].tokens, &hyps[b.parent].tokens))
            .then_with(|| self.rank[a.token as usize].cmp(&self.rank[b.token as usize]))
    }

    fn top_k(&self, hyps: &[Hyp], mut cands: Vec<Candidate>, k: usize) -> Vec<Candidate> {
        if cands.len() > k && k > 0 {
            cands.select_nth_unstable_by(k - 1, |a, b| self.cmp_candidates(hyps, a, b));
            cands.truncate(k);
        } else if k == 0 {
            cands.clear();
        }
        cands.sort_by(|a, b| self.cmp_candidates(hyps, a, b));
        cands
    }

    fn to_hypothesis(&self, h: &Hyp, finished: bool) -> Hypothesis {
        Hypothesis {
            tokens: self.strings(&h.tokens),
            score: h.score,
            finished,
            constraints_met: h.state.met.count_ones() as usize,
        }
    }

    /// Best by normalized score, ties to the lexicographically smaller output.
    fn pick_best(&self, pool: &[Hyp], finished: bool) -> Option<Hypothesis> {
        let norm = |h: &Hyp| h.score / (h.tokens.len() + usize::from(finished)).max(1) as f64;
        pool.iter()
            .min_by(|a, b| {
                norm(b)
                    .total_cmp(&norm(a))
                    .then_with(|| self.cmp_seq(&a.tokens, &b.tokens))
            })
            .map(|h| self.to_hypothesis(h, finished))
    }
}

fn check_args(beam: usize, max_len: usize) -> Result<()> {
    if beam == 0 {
        return Err(Error::InvalidParameter("beam must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(Error::InvalidParameter("max_len must be at least 1".into()));
    }
    Ok(())
}

/// Length-capped beam search. At most `max_len` tokens precede EOS; finished
/// hypotheses occupy beam slots in the step they finish.
pub fn beam_search<S: Scorer + ?Sized>(scorer: &S, source: &[String], beam: usize, max_len: usize) -> Result<Hypothesis> {
    check_args(beam, max_len)?;
    let search = Search::new(scorer, source)?;
    let mut active = vec![Hyp {
        tokens: Vec::new(),
        score: 0.0,
        state: ConstraintState::default(),
    }];
    let mut finished = Vec::new();
    let mut last_active = Vec::new();
    for step in 0..=max_len {
        if active.is_empty() {
            break;
        }
        let dists = search.expand(&active, step)?;
        let mut cands = Vec::new();
        for (p, (h, dist)) in active.iter().zip(&dists).enumerate() {
            for (w, &lp) in dist.iter().enumerate() {
                let w = w as u32;
                if lp == f64::NEG_INFINITY || (step == max_len && w != EOS_INDEX) {
                    continue;
                }
                cands.push(Candidate {
                    parent: p,
                    token: w,
                    score: h.score + lp,
                });
            }
        }
        let chosen = search.top_k(&active, cands, beam);
        let mut next = Vec::new();
        for c in chosen {
            let mut tokens = active[c.parent].tokens.clone();
            if c.token == EOS_INDEX {
                finished.push(Hyp {
                    tokens,
                    score: c.score,
                    state: ConstraintState::default(),
                });
            } else {
                tokens.push(c.token);
                next.push(Hyp {
                    tokens,
                    score: c.score,
                    state: ConstraintState::default(),
                });
            }
        }
        last_active = std::mem::replace(&mut active, next);
    }
    if let Some(best) = search.pick_best(&finished, true) {
        return Ok(best);
    }
    log::warn!("no hypothesis finished within max_len {max_len}");
    search.pick_best(&last_active, false).ok_or(Error::Unsatisfiable)
}

/// Splits `beam` slots over banks of the given sizes: evenly over non-empty
/// banks, remainder to higher banks, unused slots redistributed.
pub fn allocate_slots(sizes: &[usize], beam: usize) -> Vec<usize> {
    let mut alloc = vec![0; sizes.len()];
    let mut remaining = beam;
    loop {
        let open: Vec<usize> = (0..sizes.len()).filter(|&k| alloc[k] < sizes[k]).collect();
        if remaining == 0 || open.is_empty() {
            return alloc;
        }
        let n = open.len();
        let (base, extra) = (remaining / n, remaining % n);
        for (pos, &k) in open.iter().enumerate() {
            let give = base + usize::from(pos >= n - extra);
            let take = give.min(sizes[k] - alloc[k]);
            alloc[k] += take;
            remaining -= take;
        }
    }
}

/// Per-step record of the surviving hypotheses' banks, for invariant checks.
#[derive(Debug, Clone, Default)]
pub struct SearchTrace {
    /// For each step, `(tokens, bank, finished)` of every kept candidate.
    pub steps: Vec<Vec<(Vec<String>, usize, bool)>>,
}

/// Constrained beam search with dynamic beam allocation. EOS is only allowed
/// once every constraint occurs in the output.
pub fn constrained_beam_search<S: Scorer + ?Sized, C: AsRef<str>>(
    scorer: &S,
    source: &[String],
    constraints: &[Vec<C>],
    beam: usize,
    max_len: usize,
) -> Result<Hypothesis> {
    constrained_search_impl(scorer, source, constraints, beam, max_len, None)
}

/// As [`constrained_beam_search`], also recording bank membership per step.
pub fn constrained_beam_search_traced<S: Scorer + ?Sized, C: AsRef<str>>(
    scorer: &S,
    source: &[String],
    constraints: &[Vec<C>],
    beam: usize,
    max_len: usize,
) -> Result<(Hypothesis, SearchTrace)> {
    let mut trace = SearchTrace::default();
    let hyp = constrained_search_impl(scorer, source, constraints, beam, max_len, Some(&mut trace))?;
    Ok((hyp, trace))
}

fn constrained_search_impl<S: Scorer + ?Sized, C: AsRef<str>>(
    scorer: &S,
    source: &[String],
    constraints: &[Vec<C>],
    beam: usize,
    max_len: usize,
    mut trace: Option<&mut SearchTrace>,
) -> Result<Hypothesis> {
    check_args(beam, max_len)?;
    let trie = ConstraintTrie::new(constraints)?;
    let needed = trie.total_tokens();
    if needed > max_len {
        return Err(Error::ConstraintBudget { needed, max_len });
    }
    let search = Search::new(scorer, source)?;
    let vocab = scorer.vocab();
    let vocab_index: HashMap<&str, u32> = vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect();
    for c in trie.constraints() {
        if let Some(t) = c.iter().find(|t| !vocab_index.contains_key(t.as_str())) {
            return Err(Error::InvalidParameter(format!("constraint token {t:?} is not in the target vocabulary")));
        }
    }
    let to_trie: Vec<Option<u32>> = vocab.iter().map(|t| trie.token_id(t)).collect();
    let mut from_trie = vec![0u32; trie.token_ids.len()];
    for (t, &id) in &trie.token_ids {
        from_trie[id as usize] = vocab_index[t.as_str()];
    }

    let mut active = vec![Hyp {
        tokens: Vec::new(),
        score: 0.0,
        state: ConstraintState::default(),
    }];
    let mut finished = Vec::new();
    let mut last_active = Vec::new();
    for step in 0..=max_len {
        if active.is_empty() {
            break;
        }
        let dists = search.expand(&active, step)?;
        let legal = |h: &Hyp, w: u32, lp: f64| {
            lp != f64::NEG_INFINITY
                && if w == EOS_INDEX {
                    trie.all_met(&h.state)
                } else {
                    step < max_len
                }
        };

        let mut all = Vec::new();
        let mut extra = Vec::new();
        for (p, (h, dist)) in active.iter().zip(&dists).enumerate() {
            let mut best: Option<Candidate> = None;
            for (w, &lp) in dist.iter().enumerate() {
                let w = w as u32;
                if !legal(h, w, lp) {
                    continue;
                }
                let c = Candidate {
                    parent: p,
                    token: w,
                    score: h.score + lp,
                };
                if best.as_ref().is_none_or(|b| search.cmp_candidates(&active, &c, b) == Ordering::Less) {
                    best = Some(Candidate { ..c });
                }
                all.push(c);
            }
            extra.extend(best);
            if step < max_len {
                for a in trie.advancing_tokens(&h.state) {
                    let w = from_trie[a as usize];
                    let lp = dist[w as usize];
                    if legal(h, w, lp) {
                        extra.push(Candidate {
                            parent: p,
                            token: w,
                            score: h.score + lp,
                        });
                    }
                }
            }
        }
        let mut pool = search.top_k(&active, all, beam);
        let mut seen: HashSet<(usize, u32)> = pool.iter().map(|c| (c.parent, c.token)).collect();
        for c in extra {
            if seen.insert((c.parent, c.token)) {
                pool.push(c);
            }
        }

        let banks_n = trie.total_tokens() + 1;
        let mut banks: Vec<Vec<(Candidate, ConstraintState)>> = (0..banks_n).map(|_| Vec::new()).collect();
        for c in pool {
            let parent = &active[c.parent];
            let state = if c.token == EOS_INDEX {
                parent.state
            } else {
                trie.advance_id(&parent.state, to_trie[c.token as usize])
            };
            banks[trie.progress(&state)].push((c, state));
        }
        for bank in &mut banks {
            bank.sort_by(|a, b| search.cmp_candidates(&active, &a.0, &b.0));
        }
        let alloc = allocate_slots(&banks.iter().map(Vec::len).collect::<Vec<_>>(), beam);

        let mut kept: Vec<(Candidate, ConstraintState, usize)> = Vec::new();
        for (k, bank) in banks.into_iter().enumerate() {
            kept.extend(bank.into_iter().take(alloc[k]).map(|(c, s)| (c, s, k)));
        }
        kept.sort_by(|a, b| search.cmp_candidates(&active, &a.0, &b.0));

        let mut next = Vec::new();
        let mut record = Vec::new();
        for (c, state, bank) in kept {
            let mut tokens = active[c.parent].tokens.clone();
            let done = c.token == EOS_INDEX;
            if !done {
                tokens.push(c.token);
            }
            if trace.is_some() {
                record.push((search.strings(&tokens), bank, done));
            }
            let h = Hyp {
                tokens,
                score: c.score,
                state,
            };
            if done {
                finished.push(h);
            } else {
                next.push(h);
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.steps.push(record);
        }
        last_active = std::mem::replace(&mut active, next);
    }
    if let Some(best) = search.pick_best(&finished, true) {
        return Ok(best);
    }
    let complete: Vec<Hyp> = last_active.into_iter().filter(|h| trie.all_met(&h.state)).collect();
    match search.pick_best(&complete, false) {
        Some(best) => {
            log::warn!("no finished hypothesis within max_len {max_len}; returning an unfinished one");
            Ok(best)
        }
        None => Err(Error::Unsatisfiable),
    }
}

/// Mixture of a target language model and a bag-of-source-words lexical
/// model: `p(w) = λ p_LM(w | prefix) + (1 - λ) p_lex(w | source)`.
#[derive(Debug, Clone)]
pub struct ToyScorer {
    vocab: Vec<String>,
    /// LM id for each vocab entry; unknown words map to UNK.
    lm_ids: Vec<u32>,
    lexicon: TranslationTable,
    lm: NGramModel,
    lambda: f64,
}

/// Probability floor added to every lexical entry before renormalizing.
pub const LEXICAL_FLOOR: f64 = 1e-4;

pub fn toy_scorer(lexicon: TranslationTable, target_lm: NGramModel, lambda: f64) -> Result<ToyScorer> {
    ToyScorer::new(lexicon, target_lm, lambda, &[] as &[&str])
}

impl ToyScorer {
    /// `extra_vocab` adds producible tokens beyond the LM and lexicon
    /// vocabularies (for example constraint targets).
    pub fn new<S: AsRef<str>>(lexicon: TranslationTable, lm: NGramModel, lambda: f64, extra_vocab: &[S]) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} outside [0, 1]")));
        }
        let words: BTreeSet<String> = lm
            .vocab()
            .iter()
            .skip(3)
            .cloned()
            .chain(lexicon.targets().iter().filter(|t| t.as_str() != crate::align::NULL).cloned())
            .chain(extra_vocab.iter().map(|t| t.as_ref().to_owned()))
            .filter(|t| t != EOS && t != UNK && t != crate::ngram_lm::BOS)
            .collect();
        let mut vocab = vec![EOS.to_owned()];
        vocab.extend(words);
        let lm_ids = vocab
            .iter()
            .map(|t| if t == EOS { lm.eos_id() } else { lm.id(t) })
            .collect();
        Ok(ToyScorer {
            vocab,
            lm_ids,
            lexicon,
            lm,
            lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn lm_probs(&self, prefix: &[String]) -> Vec<f64> {
        let dist = self.lm.distribution(&self.lm.context_ids(prefix));
        let mut p: Vec<f64> = self.lm_ids.iter().map(|&id| dist[id as usize]).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        p
    }

    fn lex_probs(&self, source: &[String]) -> Vec<f64> {
        let mut p = vec![0.0; self.vocab.len()];
        if !source.is_empty() {
            let index: HashMap<&str, usize> = self.vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
            for s in source {
                if self.lexicon.contains_source(s) {
                    for (t, prob) in self.lexicon.row(s) {
                        if let Some(&i) = index.get(t) {
                            p[i] += prob;
                        }
                    }
                } else {
                    let u = 1.0 / self.lexicon.targets().len().max(1) as f64;
                    for t in self.lexicon.targets() {
                        if let Some(&i) = index.get(t.as_str()) {
                            p[i] += u;
                        }
                    }
                }
            }
            let n = source.len() as f64;
            p.iter_mut().for_each(|v| *v /= n);
        }
        p.iter_mut().for_each(|v| *v += LEXICAL_FLOOR);
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        p
    }
}

impl Scorer for ToyScorer {
    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn next_logprobs(&self, source: &[String], prefix: &[String]) -> Vec<f64> {
        let lm = if self.lambda > 0.0 {
            self.lm_probs(prefix)
        } else {
            vec![0.0; self.vocab.len()]
        };
        let lex = if self.lambda < 1.0 {
            self.lex_probs(source)
        } else {
            vec![0.0; self.vocab.len()]
        };
        lm.iter()
            .zip(&lex)
            .map(|(a, b)| (self.lambda * a + (1.0 - self.lambda) * b).ln())
            .collect()
    }
}

/// Synthetic scorer whose distribution is a pseudo-random softmax keyed on
/// the seed, source and prefix. Used for search tests and benchmarks.
#[derive(Debug, Clone)]
pub struct RandomScorer {
    vocab: Vec<String>,
    seed: u64,
    temperature: f64,
}

impl RandomScorer {
    /// `words` excludes EOS, which is prepended.
    pub fn new<S: AsRef<str>>(words: &[S], seed: u64, temperature: f64) -> Self {
        let mut vocab = vec![EOS.to_owned()];
        vocab.extend(words.iter().map(|w| w.as_ref().to_owned()));
        RandomScorer {
            vocab,
            seed,
            temperature,
        }
    }
}

impl Scorer for RandomScorer {
    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn next_logprobs(&self, source: &[String], prefix: &[String]) -> Vec<f64> {
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        self.seed.hash(&mut hasher);
        source.hash(&mut hasher);
        prefix.hash(&mut hasher);
        let mut rng = ChaCha8Rng::seed_from_u64(hasher.finish());
        let logits: Vec<f64> = (0..self.vocab.len())
            .map(|_| rng.gen_range(-1.0..1.0) * self.temperature)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        logits.iter().map(|l| l - lse).collect()
    }
}

/// True if `phrase` occurs contiguously in `tokens`.
pub fn contains_phrase<A: AsRef<str>, B: AsRef<str>>(tokens: &[A], phrase: &[B]) -> bool {
    phrase.is_empty()
        || tokens
            .windows(phrase.len())
            .any(|w| w.iter().zip(phrase).all(|(a, b)| a.as_ref() == b.as_ref()))
}
