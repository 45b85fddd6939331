use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::{Error, Result};

/// Preferred casing per lowercased form, with the supporting count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TruecaseModel {
    casing: BTreeMap<String, (String, u64)>,
}

impl TruecaseModel {
    pub fn len(&self) -> usize {
        self.casing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.casing.is_empty()
    }

    pub fn get(&self, lower: &str) -> Option<(&str, u64)> {
        self.casing.get(lower).map(|(s, c)| (s.as_str(), *c))
    }

    /// Builds a model from explicit entries, validating that each cased form
    /// lowercases to its key.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, u64)>,
    {
        let mut casing = BTreeMap::new();
        for (lower, cased, count) in entries {
            if cased.to_lowercase() != lower || count == 0 {
                return Err(Error::InvalidParameter(format!(
                    "bad truecase entry {lower:?} -> {cased:?} ({count})"
                )));
            }
            casing.insert(lower, (cased, count));
        }
        Ok(TruecaseModel { casing })
    }

    /// Serializes as `lower<TAB>cased<TAB>count` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (lower, (cased, count)) in &self.casing {
            let _ = writeln!(out, "{lower}\t{cased}\t{count}");
        }
        out
    }

    pub fn from_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [lower, cased, count] = fields[..] else {
                return Err(Error::parse(origin, n + 1, "expected 3 tab-separated fields"));
            };
            let count = count
                .parse()
                .map_err(|_| Error::parse(origin, n + 1, "count is not an integer"))?;
            entries.push((lower.to_owned(), cased.to_owned(), count));
        }
        Self::from_entries(entries)
    }
}

/// Learns the most frequent casing of every word from non-sentence-initial
/// positions. Ties go to the lexicographically smallest form.
pub fn truecase_train<S: AsRef<str>>(corpus: &[Vec<S>]) -> TruecaseModel {
    let mut counts: HashMap<String, HashMap<String, u64>> = HashMap::new();
    for sentence in corpus {
        for tok in sentence.iter().skip(1) {
            let tok = tok.as_ref();
            *counts
                .entry(tok.to_lowercase())
                .or_default()
                .entry(tok.to_owned())
                .or_insert(0) += 1;
        }
    }
    let casing = counts
        .into_iter()
        .map(|(lower, forms)| {
            let (best, count) = forms
                .into_iter()
                .min_by(|(a, ca), (b, cb)| cb.cmp(ca).then_with(|| a.cmp(b)))
                .expect("non-empty form map");
            (lower, (best, count))
        })
        .collect();
    TruecaseModel { casing }
}

/// Recases the sentence-initial token; all other tokens pass through.
pub fn truecase_apply<S: AsRef<str>>(model: &TruecaseModel, sentence: &[S]) -> Vec<String> {
    sentence
        .iter()
        .enumerate()
        .map(|(i, tok)| {
            let tok = tok.as_ref();
            if i == 0 {
                if let Some((cased, _)) = model.get(&tok.to_lowercase()) {
                    return cased.to_owned();
                }
            }
            tok.to_owned()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(rows: &[&[&str]]) -> Vec<Vec<String>> {
        rows.iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn counts_only_non_initial_positions() {
        let model = truecase_train(&corpus(&[&["Die", "Wahl"], &["die", "Wahl"], &["x", "die"]]));
        assert_eq!(model.get("die"), Some(("die", 1)));
        assert_eq!(model.get("wahl"), Some(("Wahl", 2)));
        // "x" only ever appears sentence-initially.
        assert_eq!(model.get("x"), None);
        assert_eq!(model.len(), 2);
    }

    #[test]
    fn empty_and_initial_only_corpora() {
        assert!(truecase_train::<String>(&[]).is_empty());
        assert!(truecase_train(&corpus(&[&["EU"]])).is_empty());
    }

    #[test]
    fn ties_prefer_smallest_form() {
        let model = truecase_train(&corpus(&[&["a", "Eu"], &["a", "EU"]]));
        assert_eq!(model.get("eu"), Some(("EU", 1)));
    }

    #[test]
    fn apply_touches_first_token_only() {
        let model = TruecaseModel::from_entries([("die".into(), "die".into(), 1)]).unwrap();
        assert_eq!(truecase_apply(&model, &["Die", "Wahl"]), ["die", "Wahl"]);
        assert_eq!(truecase_apply(&model, &["Wahl", "Die"]), ["Wahl", "Die"]);

        let eu = TruecaseModel::from_entries([("eu".into(), "EU".into(), 3)]).unwrap();
        assert_eq!(truecase_apply(&eu, &["eu", "sagt"]), ["EU", "sagt"]);
        assert_eq!(truecase_apply(&eu, &["sagt", "eu"]), ["sagt", "eu"]);

        let empty = TruecaseModel::default();
        assert_eq!(truecase_apply(&empty, &["Die", "Wahl"]), ["Die", "Wahl"]);
    }

    #[test]
    fn tsv_round_trip() {
        let model = truecase_train(&corpus(&[&["a", "EU", "Wahl"], &["b", "eu"]]));
        let text = model.to_tsv();
        assert_eq!(TruecaseModel::from_tsv(&text, "t").unwrap(), model);
        assert!(TruecaseModel::from_tsv("eu\tXY\t1\n", "t").is_err());
        assert!(TruecaseModel::from_tsv("eu\tEU\n", "t").is_err());
    }
}
