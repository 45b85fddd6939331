//! Word alignment: IBM Model 1 EM, a diagonal-prior variant, Viterbi
//! alignment and bidirectional symmetrization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::{Error, Result};

/// Token standing for the empty source word.
pub const NULL: &str = "<null>";

pub const DEFAULT_TENSION: f64 = 4.0;

/// Prior probability of aligning a target word to NULL.
pub const NULL_PRIOR: f64 = 0.08;

/// A sentence pair of pre-tokenized source and target sides.
pub type SentencePair = (Vec<String>, Vec<String>);

/// Lexical translation probabilities p(target | source), NULL included.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationTable {
    src_vocab: Vec<String>,
    tgt_vocab: Vec<String>,
    src_ids: HashMap<String, u32>,
    tgt_ids: HashMap<String, u32>,
    /// Indexed by source id; id 0 is NULL.
    rows: Vec<BTreeMap<u32, f64>>,
}

fn intern(vocab: &mut Vec<String>, ids: &mut HashMap<String, u32>, tok: &str) -> u32 {
    if let Some(&id) = ids.get(tok) {
        return id;
    }
    let id = vocab.len() as u32;
    vocab.push(tok.to_owned());
    ids.insert(tok.to_owned(), id);
    id
}

impl TranslationTable {
    fn empty() -> Self {
        let mut t = TranslationTable {
            src_vocab: Vec::new(),
            tgt_vocab: Vec::new(),
            src_ids: HashMap::new(),
            tgt_ids: HashMap::new(),
            rows: Vec::new(),
        };
        intern(&mut t.src_vocab, &mut t.src_ids, NULL);
        t
    }

    /// p(target | source) if the pair co-occurred in training.
    pub fn get(&self, source: &str, target: &str) -> Option<f64> {
        let s = *self.src_ids.get(source)?;
        let t = *self.tgt_ids.get(target)?;
        self.rows[s as usize].get(&t).copied()
    }

    /// Translation probability with unseen tokens smoothed uniformly over the
    /// target vocabulary.
    pub fn prob(&self, source: &str, target: &str) -> f64 {
        match (self.src_ids.get(source), self.tgt_ids.get(target)) {
            (Some(&s), Some(&t)) => self.rows[s as usize].get(&t).copied().unwrap_or(0.0),
            _ => 1.0 / self.tgt_vocab.len().max(1) as f64,
        }
    }

    /// All (target, probability) entries for `source`, sorted by target.
    pub fn row(&self, source: &str) -> Vec<(&str, f64)> {
        let Some(&s) = self.src_ids.get(source) else {
            return Vec::new();
        };
        let mut row: Vec<(&str, f64)> = self.rows[s as usize]
            .iter()
            .map(|(&t, &p)| (self.tgt_vocab[t as usize].as_str(), p))
            .collect();
        row.sort_by(|a, b| a.0.cmp(b.0));
        row
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.src_vocab.iter().map(String::as_str)
    }

    pub fn targets(&self) -> &[String] {
        &self.tgt_vocab
    }

    pub fn contains_source(&self, source: &str) -> bool {
        self.src_ids.contains_key(source)
    }

    /// TSV `src<TAB>tgt<TAB>p`, sorted by source then target.
    pub fn to_tsv(&self) -> String {
        let mut lines = Vec::new();
        for (s, row) in self.rows.iter().enumerate() {
            for (&t, &p) in row {
                lines.push((
                    self.src_vocab[s].as_str(),
                    self.tgt_vocab[t as usize].as_str(),
                    p,
                ));
            }
        }
        lines.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out = String::new();
        for (s, t, p) in lines {
            let _ = writeln!(out, "{s}\t{t}\t{p}");
        }
        out
    }

    pub fn from_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut table = TranslationTable::empty();
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [s, t, p] = cols[..] else {
                return Err(Error::parse(origin, n + 1, "expected 3 tab-separated fields"));
            };
            let p: f64 = p
                .parse()
                .map_err(|_| Error::parse(origin, n + 1, "bad probability"))?;
            if !(p > 0.0 && p <= 1.0 + 1e-9) {
                return Err(Error::parse(origin, n + 1, "probability out of (0, 1]"));
            }
            let s = intern(&mut table.src_vocab, &mut table.src_ids, s);
            let t = intern(&mut table.tgt_vocab, &mut table.tgt_ids, t);
            entries.push((s, t, p));
        }
        table.rows = vec![BTreeMap::new(); table.src_vocab.len()];
        for (s, t, p) in entries {
            table.rows[s as usize].insert(t, p);
        }
        Ok(table)
    }
}

/// Translation table plus the fixed diagonal tension used in training.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalModel {
    pub table: TranslationTable,
    pub tension: f64,
}

struct Encoded {
    src: Vec<u32>,
    tgt: Vec<u32>,
}

fn encode(bitext: &[SentencePair]) -> (TranslationTable, Vec<Encoded>) {
    let mut table = TranslationTable::empty();
    let mut encoded = Vec::with_capacity(bitext.len());
    for (src, tgt) in bitext {
        let src = src
            .iter()
            .map(|t| intern(&mut table.src_vocab, &mut table.src_ids, t))
            .collect();
        let tgt = tgt
            .iter()
            .map(|t| intern(&mut table.tgt_vocab, &mut table.tgt_ids, t))
            .collect();
        encoded.push(Encoded { src, tgt });
    }
    (table, encoded)
}

/// Alignment prior over `[NULL, 0, .., m-1]` for target position `j` of `n`.
/// NULL keeps [`NULL_PRIOR`]; the rest is spread by `exp(-tension * |i/m - j/n|)`.
/// With tension 0 the real positions are uniform, i.e. plain Model 1.
fn position_prior(m: usize, n: usize, j: usize, tension: f64, out: &mut Vec<f64>) {
    out.clear();
    if m == 0 {
        out.push(1.0);
        return;
    }
    out.push(NULL_PRIOR);
    let real = 1.0 - NULL_PRIOR;
    if tension == 0.0 {
        out.extend(std::iter::repeat_n(real / m as f64, m));
        return;
    }
    let weights: Vec<f64> = (0..m)
        .map(|i| (-tension * (i as f64 / m as f64 - j as f64 / n as f64).abs()).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    out.extend(weights.iter().map(|w| real * w / z));
}

fn validate(bitext: &[SentencePair], iterations: usize, tension: f64) -> Result<()> {
    if bitext.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be at least 1".into()));
    }
    if !(tension >= 0.0 && tension.is_finite()) {
        return Err(Error::InvalidParameter(format!("tension must be >= 0, got {tension}")));
    }
    Ok(())
}

fn em(bitext: &[SentencePair], iterations: usize, tension: f64) -> Result<TranslationTable> {
    validate(bitext, iterations, tension)?;
    let (mut table, corpus) = encode(bitext);
    let n_src = table.src_vocab.len();

    // Uniform initialization over co-occurring pairs.
    let mut cooc: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); n_src];
    for pair in &corpus {
        for &f in &pair.tgt {
            cooc[0].insert(f, 0.0);
            for &e in &pair.src {
                cooc[e as usize].insert(f, 0.0);
            }
        }
    }
    for row in cooc.iter_mut() {
        let k = row.len() as f64;
        for p in row.values_mut() {
            *p = 1.0 / k;
        }
    }
    table.rows = cooc;

    let mut prior = Vec::new();
    let mut post = Vec::new();
    for _ in 0..iterations {
        let mut counts: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); n_src];
        for pair in &corpus {
            let m = pair.src.len();
            let n = pair.tgt.len();
            for (j, &f) in pair.tgt.iter().enumerate() {
                position_prior(m, n, j, tension, &mut prior);
                post.clear();
                post.push(table.rows[0][&f] * prior[0]);
                for (i, &e) in pair.src.iter().enumerate() {
                    post.push(table.rows[e as usize][&f] * prior[i + 1]);
                }
                let z: f64 = post.iter().sum();
                if z <= 0.0 {
                    continue;
                }
                *counts[0].entry(f).or_insert(0.0) += post[0] / z;
                for (i, &e) in pair.src.iter().enumerate() {
                    *counts[e as usize].entry(f).or_insert(0.0) += post[i + 1] / z;
                }
            }
        }
        for (s, row) in counts.into_iter().enumerate() {
            let total: f64 = row.values().sum();
            if total <= 0.0 {
                continue;
            }
            table.rows[s] = row
                .into_iter()
                .filter(|&(_, c)| c > 0.0)
                .map(|(t, c)| (t, c / total))
                .collect();
        }
    }
    Ok(table)
}

/// IBM Model 1 trained by EM from a uniform start over co-occurring pairs.
pub fn train_model1(bitext: &[SentencePair], iterations: usize) -> Result<TranslationTable> {
    em(bitext, iterations, 0.0)
}

/// Model 1 with a fixed log-linear diagonal alignment prior. `tension = 0`
/// reproduces [`train_model1`].
pub fn train_diag(bitext: &[SentencePair], iterations: usize, tension: f64) -> Result<DiagonalModel> {
    Ok(DiagonalModel {
        table: em(bitext, iterations, tension)?,
        tension,
    })
}

/// Corpus log-likelihood `sum_pairs sum_j ln sum_i prior(i|j) p(f_j | e_i)`.
pub fn log_likelihood(table: &TranslationTable, bitext: &[SentencePair], tension: f64) -> f64 {
    let mut prior = Vec::new();
    let mut ll = 0.0;
    for (src, tgt) in bitext {
        for (j, f) in tgt.iter().enumerate() {
            position_prior(src.len(), tgt.len(), j, tension, &mut prior);
            let mut p = prior[0] * table.prob(NULL, f);
            for (i, e) in src.iter().enumerate() {
                p += prior[i + 1] * table.prob(e, f);
            }
            ll += p.ln();
        }
    }
    ll
}

/// Posterior over `[NULL, 0, .., m-1]` for target position `j`.
pub fn link_posterior(
    table: &TranslationTable,
    tension: f64,
    src: &[String],
    tgt: &[String],
    j: usize,
) -> Vec<f64> {
    let mut prior = Vec::new();
    position_prior(src.len(), tgt.len(), j, tension, &mut prior);
    let f = &tgt[j];
    let mut post = Vec::with_capacity(src.len() + 1);
    post.push(prior[0] * table.prob(NULL, f));
    for (i, e) in src.iter().enumerate() {
        post.push(prior[i + 1] * table.prob(e, f));
    }
    let z: f64 = post.iter().sum();
    if z > 0.0 {
        post.iter_mut().for_each(|p| *p /= z);
    }
    post
}

/// Links every target position to its most probable source position; NULL
/// wins produce no link and ties go to the smallest index, NULL first.
pub fn viterbi_align(table: &TranslationTable, tension: f64, src: &[String], tgt: &[String]) -> Alignment {
    let mut links = BTreeSet::new();
    for j in 0..tgt.len() {
        let post = link_posterior(table, tension, src, tgt, j);
        let mut best = 0;
        for (k, &p) in post.iter().enumerate().skip(1) {
            if p > post[best] {
                best = k;
            }
        }
        if best > 0 {
            links.insert((best - 1, j));
        }
    }
    Alignment { links }
}

impl DiagonalModel {
    pub fn align(&self, src: &[String], tgt: &[String]) -> Alignment {
        viterbi_align(&self.table, self.tension, src, tgt)
    }
}

/// Source-major word alignment links `(i, j)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Alignment {
    pub links: BTreeSet<(usize, usize)>,
}

impl Alignment {
    pub fn new<I: IntoIterator<Item = (usize, usize)>>(links: I) -> Self {
        Alignment {
            links: links.into_iter().collect(),
        }
    }

    pub fn transpose(&self) -> Alignment {
        Alignment::new(self.links.iter().map(|&(i, j)| (j, i)))
    }

    pub fn check_bounds(&self, src_len: usize, tgt_len: usize) -> Result<()> {
        for &(i, j) in &self.links {
            if i >= src_len || j >= tgt_len {
                return Err(Error::AlignmentOutOfBounds {
                    i,
                    j,
                    src_len,
                    tgt_len,
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.links.contains(&(i, j))
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// Pharaoh format: space-separated `i-j` pairs.
impl fmt::Display for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (i, j)) in self.links.iter().enumerate() {
            if k > 0 {
                f.write_char(' ')?;
            }
            write!(f, "{i}-{j}")?;
        }
        Ok(())
    }
}

impl FromStr for Alignment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let mut links = BTreeSet::new();
        for item in s.split_whitespace() {
            let (i, j) = item
                .split_once('-')
                .ok_or_else(|| format!("bad link {item:?}"))?;
            let i = i.parse().map_err(|_| format!("bad link {item:?}"))?;
            let j = j.parse().map_err(|_| format!("bad link {item:?}"))?;
            links.insert((i, j));
        }
        Ok(Alignment { links })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Heuristic {
    Intersection,
    Union,
    #[default]
    GrowDiagFinalAnd,
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "intersection" => Ok(Heuristic::Intersection),
            "union" => Ok(Heuristic::Union),
            "grow-diag-final-and" => Ok(Heuristic::GrowDiagFinalAnd),
            _ => Err(format!("unknown symmetrization heuristic {s:?}")),
        }
    }
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, 0),
    (0, -1),
    (1, 0),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

struct Grid {
    links: BTreeSet<(usize, usize)>,
    src_aligned: Vec<bool>,
    tgt_aligned: Vec<bool>,
}

impl Grid {
    fn add(&mut self, i: usize, j: usize) {
        self.links.insert((i, j));
        self.src_aligned[i] = true;
        self.tgt_aligned[j] = true;
    }
}

/// Combines a forward and a (source-major) reverse alignment.
pub fn symmetrize(
    forward: &Alignment,
    reverse: &Alignment,
    src_len: usize,
    tgt_len: usize,
    heuristic: Heuristic,
) -> Result<Alignment> {
    forward.check_bounds(src_len, tgt_len)?;
    reverse.check_bounds(src_len, tgt_len)?;
    let inter: BTreeSet<_> = forward.links.intersection(&reverse.links).copied().collect();
    let union: BTreeSet<_> = forward.links.union(&reverse.links).copied().collect();
    match heuristic {
        Heuristic::Intersection => return Ok(Alignment { links: inter }),
        Heuristic::Union => return Ok(Alignment { links: union }),
        Heuristic::GrowDiagFinalAnd => {}
    }

    let mut grid = Grid {
        links: BTreeSet::new(),
        src_aligned: vec![false; src_len],
        tgt_aligned: vec![false; tgt_len],
    };
    for &(i, j) in &inter {
        grid.add(i, j);
    }

    // grow-diag
    loop {
        let mut added = false;
        for i in 0..src_len {
            for j in 0..tgt_len {
                if !grid.links.contains(&(i, j)) {
                    continue;
                }
                for (di, dj) in NEIGHBORS {
                    let (Some(ni), Some(nj)) = (i.checked_add_signed(di), j.checked_add_signed(dj)) else {
                        continue;
                    };
                    if ni >= src_len || nj >= tgt_len {
                        continue;
                    }
                    if (!grid.src_aligned[ni] || !grid.tgt_aligned[nj])
                        && union.contains(&(ni, nj))
                        && !grid.links.contains(&(ni, nj))
                    {
                        grid.add(ni, nj);
                        added = true;
                    }
                }
            }
        }
        if !added {
            break;
        }
    }

    // final-and, forward then reverse
    for directional in [forward, reverse] {
        for i in 0..src_len {
            for j in 0..tgt_len {
                if !grid.src_aligned[i] && !grid.tgt_aligned[j] && directional.contains(i, j) {
                    grid.add(i, j);
                }
            }
        }
    }
    Ok(Alignment { links: grid.links })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(s: &str, t: &str) -> SentencePair {
        (
            s.split_whitespace().map(str::to_owned).collect(),
            t.split_whitespace().map(str::to_owned).collect(),
        )
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn rows_sum_to_one(table: &TranslationTable) {
        for s in table.sources() {
            let row = table.row(s);
            if row.is_empty() {
                continue;
            }
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            assert!((sum - 1.0).abs() < 1e-9, "row {s} sums to {sum}");
            assert!(row.iter().all(|&(_, p)| p > 0.0));
        }
    }

    #[test]
    fn disambiguates_la() {
        let bitext = [pair("la maison", "the house"), pair("la", "the")];
        let table = train_model1(&bitext, 20).unwrap();
        assert!(table.get("la", "the").unwrap() >= 0.99);
        let a = viterbi_align(&table, 0.0, &toks("la maison"), &toks("the house"));
        assert_eq!(a, Alignment::new([(0, 0), (1, 1)]));
    }

    #[test]
    fn single_candidate_rows() {
        let table = train_model1(&[pair("a", "x")], 1).unwrap();
        assert_eq!(table.get("a", "x"), Some(1.0));
        assert_eq!(table.get(NULL, "x"), Some(1.0));
    }

    #[test]
    fn rows_stochastic_and_likelihood_monotone() {
        let bitext = [
            pair("la maison bleue", "the blue house"),
            pair("la maison", "the house"),
            pair("la fleur", "the flower"),
            pair("fleur bleue", "blue flower"),
        ];
        let mut prev = f64::NEG_INFINITY;
        for it in 1..=15 {
            for tension in [0.0, DEFAULT_TENSION] {
                let table = em(&bitext, it, tension).unwrap();
                rows_sum_to_one(&table);
            }
            let table = train_model1(&bitext, it).unwrap();
            let ll = log_likelihood(&table, &bitext, 0.0);
            assert!(ll >= prev - 1e-9, "iteration {it}: {ll} < {prev}");
            prev = ll;
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(train_model1(&[], 5), Err(Error::EmptyCorpus)));
        assert!(train_model1(&[pair("a", "b")], 0).is_err());
        assert!(train_diag(&[pair("a", "b")], 1, -1.0).is_err());
    }

    #[test]
    fn zero_tension_is_model1() {
        let bitext = [pair("a b c", "x y"), pair("b c", "y z"), pair("a", "x w")];
        let m1 = train_model1(&bitext, 7).unwrap();
        let diag = train_diag(&bitext, 7, 0.0).unwrap();
        for s in m1.sources() {
            for (t, p) in m1.row(s) {
                assert!((diag.table.get(s, t).unwrap() - p).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn diagonal_prior_breaks_symmetry() {
        let mut bitext: Vec<SentencePair> = (0..50).map(|_| pair("a b c", "x y z")).collect();
        bitext.push(pair("b", "q"));
        let diag = train_diag(&bitext, 10, 4.0).unwrap();
        assert_eq!(
            diag.align(&toks("a b c"), &toks("x y z")),
            Alignment::new([(0, 0), (1, 1), (2, 2)])
        );
    }

    #[test]
    fn tension_shrinks_off_diagonal_posterior() {
        let bitext = [pair("a b c d", "w x y z"), pair("a c", "w y")];
        let table = train_model1(&bitext, 5).unwrap();
        let (src, tgt) = (toks("a b c d"), toks("w x y z"));
        // Target position 0: source position 3 is the farthest from the diagonal.
        let mut prev = f64::INFINITY;
        for tension in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let post = link_posterior(&table, tension, &src, &tgt, 0);
            assert!(post[4] <= prev + 1e-15);
            prev = post[4];
        }
    }

    #[test]
    fn viterbi_edge_cases() {
        let table = train_model1(&[pair("a", "x")], 3).unwrap();
        assert!(viterbi_align(&table, 0.0, &toks("a"), &[]).is_empty());
        // Unseen tokens are smoothed rather than rejected.
        let a = viterbi_align(&table, 0.0, &toks("a zz"), &toks("x qq"));
        assert!(a.links.iter().all(|&(i, j)| i < 2 && j < 2));
        let again = viterbi_align(&table, 0.0, &toks("a zz"), &toks("x qq"));
        assert_eq!(a, again);
    }

    #[test]
    fn table_tsv_round_trip() {
        let table = train_model1(&[pair("la maison", "the house"), pair("la", "the")], 4).unwrap();
        let text = table.to_tsv();
        let back = TranslationTable::from_tsv(&text, "t").unwrap();
        assert_eq!(back.to_tsv(), text);
        assert_eq!(back.get("la", "the"), table.get("la", "the"));
    }

    #[test]
    fn pharaoh_format() {
        let a: Alignment = "0-0 2-1 1-1".parse().unwrap();
        assert_eq!(a.to_string(), "0-0 1-1 2-1");
        assert!("0-x".parse::<Alignment>().is_err());
        assert_eq!("".parse::<Alignment>().unwrap(), Alignment::default());
    }

    #[test]
    fn symmetrize_identity_and_disjoint() {
        let a = Alignment::new([(0, 0), (1, 2), (2, 1)]);
        for h in [Heuristic::Intersection, Heuristic::Union, Heuristic::GrowDiagFinalAnd] {
            assert_eq!(symmetrize(&a, &a, 3, 3, h).unwrap(), a);
        }
        let f = Alignment::new([(0, 0)]);
        let r = Alignment::new([(1, 1)]);
        assert!(symmetrize(&f, &r, 2, 2, Heuristic::Intersection).unwrap().is_empty());
        assert_eq!(
            symmetrize(&f, &r, 2, 2, Heuristic::Union).unwrap(),
            Alignment::new([(0, 0), (1, 1)])
        );
        assert!(symmetrize(&Alignment::new([(3, 0)]), &r, 2, 2, Heuristic::Union).is_err());
    }

    #[test]
    fn grow_diag_hand_traces() {
        // Intersection {0-0, 2-2}; the union point 1-1 is a diagonal neighbour
        // of 0-0 with both its row and column unaligned, so it is grown.
        let f = Alignment::new([(0, 0), (1, 1), (2, 2)]);
        let r = Alignment::new([(0, 0), (2, 2)]);
        assert_eq!(
            symmetrize(&f, &r, 3, 3, Heuristic::GrowDiagFinalAnd).unwrap(),
            Alignment::new([(0, 0), (1, 1), (2, 2)])
        );

        // 0-2 is in the union but row 0 and column 2 are both already aligned:
        // neither growing nor final-and may add it.
        let f = Alignment::new([(0, 0), (1, 1), (2, 2), (0, 2)]);
        let r = Alignment::new([(0, 0), (1, 1), (2, 2)]);
        assert_eq!(
            symmetrize(&f, &r, 3, 3, Heuristic::GrowDiagFinalAnd).unwrap(),
            Alignment::new([(0, 0), (1, 1), (2, 2)])
        );

        // Intersection {0-0}. Growing from 0-0 adds 1-0 (row 1 unaligned), then
        // 1-1 (column 1 unaligned), then 2-2 as the diagonal neighbour of 1-1.
        let f = Alignment::new([(0, 0), (1, 0), (2, 2)]);
        let r = Alignment::new([(0, 0), (1, 1)]);
        assert_eq!(
            symmetrize(&f, &r, 3, 3, Heuristic::GrowDiagFinalAnd).unwrap(),
            Alignment::new([(0, 0), (1, 0), (1, 1), (2, 2)])
        );
    }

    fn arb_alignment(n: usize, m: usize) -> impl Strategy<Value = Alignment> {
        prop::collection::btree_set((0..n, 0..m), 0..(n * m).min(10)).prop_map(|links| Alignment { links })
    }

    proptest! {
        #[test]
        fn symmetrization_is_sandwiched(
            (n, m, f, r) in (1usize..6, 1usize..6).prop_flat_map(|(n, m)| (Just(n), Just(m), arb_alignment(n, m), arb_alignment(n, m)))
        ) {
            let inter = symmetrize(&f, &r, n, m, Heuristic::Intersection).unwrap();
            let gdfa = symmetrize(&f, &r, n, m, Heuristic::GrowDiagFinalAnd).unwrap();
            let union = symmetrize(&f, &r, n, m, Heuristic::Union).unwrap();
            prop_assert!(inter.links.is_subset(&gdfa.links));
            prop_assert!(gdfa.links.is_subset(&union.links));
        }
    }
}
