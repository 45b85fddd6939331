//! Interpolated absolute-discounting n-gram language models and Moore-Lewis
//! cross-entropy difference scoring.
//!
//! A trained model is stored in backoff form: for every observed n-gram the
//! full interpolated log-probability, and for every observed context the log
//! of its interpolation weight. For absolute discounting the two forms are
//! equivalent, which is what makes the ARPA-like text format lossless.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const UNK_ID: u32 = 0;
const EOS_ID: u32 = 1;
const BOS_ID: u32 = 2;

const HEADER: &str = "#ngram-v1";

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_DISCOUNT: f64 = 0.4;

/// Log-probability and backoff of one model-file line.
type LineValues = (Option<f64>, Option<f64>);

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextNode {
    /// ln of the interpolation weight given to the shorter context.
    backoff: f64,
    /// ln p(w | context) for every w observed after this context.
    logprobs: HashMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    discount: f64,
    vocab: Vec<String>,
    ids: HashMap<String, u32>,
    contexts: HashMap<Vec<u32>, ContextNode>,
}

/// In-domain minus out-of-domain cross-entropy, in nats per token. Lower is
/// more in-domain.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DomainScore(pub f64);

fn build_vocab<I: IntoIterator<Item = String>>(tokens: I) -> (Vec<String>, HashMap<String, u32>) {
    let mut vocab = vec![UNK.to_owned(), EOS.to_owned(), BOS.to_owned()];
    let mut rest: Vec<String> = tokens
        .into_iter()
        .filter(|t| t != UNK && t != EOS && t != BOS)
        .collect();
    rest.sort();
    rest.dedup();
    vocab.extend(rest);
    let ids = vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    (vocab, ids)
}

/// Trains an interpolated absolute-discounting model:
/// `p(w|c) = max(n(c,w) - d, 0) / n(c) + d * types(c) / n(c) * p(w|c')`,
/// bottoming out at a uniform distribution over the vocabulary plus UNK and EOS.
pub fn lm_train<S: AsRef<str>>(corpus: &[Vec<S>], order: usize, discount: f64) -> Result<NGramModel> {
    if order == 0 {
        return Err(Error::InvalidParameter("order must be at least 1".into()));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "discount must lie in (0, 1), got {discount}"
        )));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (vocab, ids) = build_vocab(
        corpus
            .iter()
            .flat_map(|s| s.iter().map(|t| t.as_ref().to_owned())),
    );

    // counts[context][word]; BTreeMap keeps float accumulation order fixed.
    let mut counts: BTreeMap<Vec<u32>, BTreeMap<u32, u64>> = BTreeMap::new();
    for sentence in corpus {
        let mut padded = vec![BOS_ID; order - 1];
        padded.extend(sentence.iter().map(|t| ids[t.as_ref()]));
        padded.push(EOS_ID);
        for pos in order - 1..padded.len() {
            let w = padded[pos];
            for k in 1..=order {
                let ctx = padded[pos + 1 - k..pos].to_vec();
                *counts.entry(ctx).or_default().entry(w).or_insert(0) += 1;
            }
        }
    }

    let predicted = (vocab.len() - 1) as f64; // everything except BOS
    let mut contexts: HashMap<Vec<u32>, ContextNode> = HashMap::new();

    // Unigram level, interpolated with the uniform distribution.
    let uni = &counts[&Vec::new()];
    let total: u64 = uni.values().sum();
    let lambda = discount * uni.len() as f64 / total as f64;
    let mut root = ContextNode {
        backoff: lambda.ln(),
        logprobs: HashMap::new(),
    };
    for id in 0..vocab.len() as u32 {
        if id == BOS_ID {
            continue;
        }
        let c = uni.get(&id).copied().unwrap_or(0) as f64;
        let p = (c - discount).max(0.0) / total as f64 + lambda / predicted;
        root.logprobs.insert(id, p.ln());
    }
    contexts.insert(Vec::new(), root);

    // Higher orders, shortest contexts first so lower-order lookups resolve.
    let mut by_len: Vec<(&Vec<u32>, &BTreeMap<u32, u64>)> =
        counts.iter().filter(|(c, _)| !c.is_empty()).collect();
    by_len.sort_by_key(|(c, _)| c.len());
    for (ctx, words) in by_len {
        let total: u64 = words.values().sum();
        let lambda = discount * words.len() as f64 / total as f64;
        let mut node = ContextNode {
            backoff: lambda.ln(),
            logprobs: HashMap::with_capacity(words.len()),
        };
        for (&w, &c) in words {
            let lower = lookup(&contexts, &ctx[1..], w).exp();
            let p = (c as f64 - discount) / total as f64 + lambda * lower;
            node.logprobs.insert(w, p.ln());
        }
        contexts.insert(ctx.clone(), node);
    }

    Ok(NGramModel {
        order,
        discount,
        vocab,
        ids,
        contexts,
    })
}

fn lookup(contexts: &HashMap<Vec<u32>, ContextNode>, mut ctx: &[u32], w: u32) -> f64 {
    let mut acc = 0.0;
    loop {
        if let Some(node) = contexts.get(ctx) {
            if let Some(lp) = node.logprobs.get(&w) {
                return acc + lp;
            }
            if ctx.is_empty() {
                return f64::NEG_INFINITY;
            }
            acc += node.backoff;
        }
        if ctx.is_empty() {
            return f64::NEG_INFINITY;
        }
        ctx = &ctx[1..];
    }
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Vocabulary indexed by id. Ids 0, 1, 2 are UNK, EOS and BOS.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn unk_id(&self) -> u32 {
        UNK_ID
    }

    pub fn eos_id(&self) -> u32 {
        EOS_ID
    }

    pub fn bos_id(&self) -> u32 {
        BOS_ID
    }

    /// Context ids for predicting the token after `history`, BOS-padded.
    pub fn context_ids<S: AsRef<str>>(&self, history: &[S]) -> Vec<u32> {
        let n = self.order - 1;
        let start = history.len().saturating_sub(n);
        let mut ctx = vec![BOS_ID; n.saturating_sub(history.len())];
        ctx.extend(history[start..].iter().map(|t| self.id(t.as_ref())));
        ctx
    }

    /// ln p(w | context) for a context of at most `order - 1` ids.
    pub fn logprob_ids(&self, context: &[u32], w: u32) -> f64 {
        lookup(&self.contexts, context, w)
    }

    pub fn logprob<S: AsRef<str>>(&self, history: &[S], token: &str) -> f64 {
        let ctx = self.context_ids(history);
        let w = if token == EOS { EOS_ID } else { self.id(token) };
        self.logprob_ids(&ctx, w)
    }

    /// Full next-token distribution indexed by id; the BOS entry is 0.
    pub fn distribution(&self, context: &[u32]) -> Vec<f64> {
        let mut dist = match context.split_first() {
            None => {
                let root = &self.contexts[&Vec::new()];
                let mut d = vec![0.0; self.vocab.len()];
                for (&w, lp) in &root.logprobs {
                    d[w as usize] = lp.exp();
                }
                return d;
            }
            Some((_, shorter)) => self.distribution(shorter),
        };
        if let Some(node) = self.contexts.get(context) {
            let scale = node.backoff.exp();
            for p in dist.iter_mut() {
                *p *= scale;
            }
            for (&w, lp) in &node.logprobs {
                dist[w as usize] = lp.exp();
            }
        }
        dist
    }

    /// Serializes the model as `ngram<TAB>logprob<TAB>backoff` lines (natural
    /// logs). Contexts that were never predicted carry `-` as logprob; n-grams
    /// that never served as a context carry `-` as backoff.
    pub fn to_text(&self) -> String {
        let mut entries: BTreeMap<(usize, Vec<&str>), LineValues> = BTreeMap::new();
        let words = |ids: &[u32]| -> Vec<&str> { ids.iter().map(|&i| self.vocab[i as usize].as_str()).collect() };
        for (ctx, node) in &self.contexts {
            for (&w, &lp) in &node.logprobs {
                let mut gram = ctx.clone();
                gram.push(w);
                entries.entry((gram.len(), words(&gram))).or_default().0 = Some(lp);
            }
            if !ctx.is_empty() {
                entries.entry((ctx.len(), words(ctx))).or_default().1 = Some(node.backoff);
            }
        }
        let root_backoff = self.contexts[&Vec::new()].backoff;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{HEADER}\torder={}\tdiscount={}\troot_backoff={}",
            self.order, self.discount, root_backoff
        );
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| x.to_string());
        for ((_, gram), (lp, bo)) in entries {
            let _ = writeln!(out, "{}\t{}\t{}", gram.join(" "), fmt(lp), fmt(bo));
        }
        out
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or_default();
        let mut fields = header.split('\t');
        if fields.next() != Some(HEADER) {
            return Err(Error::parse(origin, 1, format!("missing {HEADER} header")));
        }
        let mut order = None;
        let mut discount = None;
        let mut root_backoff = None;
        for f in fields {
            let bad = || Error::parse(origin, 1, format!("bad header field {f:?}"));
            let (k, v) = f.split_once('=').ok_or_else(bad)?;
            match k {
                "order" => order = Some(v.parse::<usize>().map_err(|_| bad())?),
                "discount" => discount = Some(v.parse::<f64>().map_err(|_| bad())?),
                "root_backoff" => root_backoff = Some(v.parse::<f64>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let (Some(order), Some(discount), Some(root_backoff)) = (order, discount, root_backoff) else {
            return Err(Error::parse(origin, 1, "incomplete header"));
        };

        let mut rows = Vec::new();
        for (n, line) in lines {
            let cols: Vec<&str> = line.split('\t').collect();
            let [gram, lp, bo] = cols[..] else {
                return Err(Error::parse(origin, n + 1, "expected 3 tab-separated fields"));
            };
            let parse = |s: &str| -> Result<Option<f64>> {
                if s == "-" {
                    Ok(None)
                } else {
                    s.parse()
                        .map(Some)
                        .map_err(|_| Error::parse(origin, n + 1, format!("bad number {s:?}")))
                }
            };
            let gram: Vec<&str> = gram.split(' ').collect();
            if gram.is_empty() || gram.len() > order {
                return Err(Error::parse(origin, n + 1, "n-gram longer than model order"));
            }
            rows.push((gram, parse(lp)?, parse(bo)?));
        }
        let (vocab, ids) = build_vocab(rows.iter().flat_map(|(g, _, _)| g.iter().map(|t| t.to_string())));
        let mut contexts: HashMap<Vec<u32>, ContextNode> = HashMap::new();
        contexts.insert(
            Vec::new(),
            ContextNode {
                backoff: root_backoff,
                logprobs: HashMap::new(),
            },
        );
        for (gram, lp, bo) in rows {
            let gram: Vec<u32> = gram.iter().map(|t| ids[*t]).collect();
            if let Some(lp) = lp {
                let (w, ctx) = gram.split_last().expect("non-empty gram");
                contexts.entry(ctx.to_vec()).or_default().logprobs.insert(*w, lp);
            }
            if let Some(bo) = bo {
                contexts.entry(gram).or_default().backoff = bo;
            }
        }
        Ok(NGramModel {
            order,
            discount,
            vocab,
            ids,
            contexts,
        })
    }
}

/// Per-token cross-entropy in nats, including the EOS transition:
/// `-(1/(|s|+1)) * sum ln p(w_i | context_i)`.
pub fn cross_entropy<S: AsRef<str>>(model: &NGramModel, sentence: &[S]) -> f64 {
    let n = model.order - 1;
    let mut padded = vec![BOS_ID; n];
    padded.extend(sentence.iter().map(|t| model.id(t.as_ref())));
    padded.push(EOS_ID);
    let mut total = 0.0;
    for pos in n..padded.len() {
        total += model.logprob_ids(&padded[pos - n..pos], padded[pos]);
    }
    -total / (sentence.len() + 1) as f64
}

pub fn moore_lewis<S: AsRef<str>>(in_lm: &NGramModel, out_lm: &NGramModel, sentence: &[S]) -> DomainScore {
    DomainScore(cross_entropy(in_lm, sentence) - cross_entropy(out_lm, sentence))
}

/// Indices of the `n` lines with the lowest Moore-Lewis score, ties broken by
/// position, returned in original order. Lines are whitespace-tokenized.
pub fn select_top<S: AsRef<str> + Sync>(
    lines: &[S],
    in_lm: &NGramModel,
    out_lm: &NGramModel,
    n: usize,
) -> Vec<usize> {
    if n > lines.len() {
        log::warn!(
            "requested top {n} of only {} lines; returning all of them",
            lines.len()
        );
    }
    let scores: Vec<f64> = lines
        .par_iter()
        .map(|l| {
            let toks: Vec<&str> = l.as_ref().split_whitespace().collect();
            moore_lewis(in_lm, out_lm, &toks).0
        })
        .collect();
    let mut order: Vec<usize> = (0..lines.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order.truncate(n);
    order.sort_unstable();
    order
}
