use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MAX_N: usize = 3;

/// Character n-gram (orders 1 to 3) Naive Bayes language identifier with
/// add-one smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangId {
    profiles: Vec<Profile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Profile {
    lang: String,
    counts: HashMap<String, u64>,
    total: u64,
}

fn char_ngrams(text: &str) -> Vec<String> {
    let chars: Vec<char> = format!(" {} ", text.to_lowercase()).chars().collect();
    let mut out = Vec::new();
    for n in 1..=MAX_N {
        for w in chars.windows(n) {
            out.push(w.iter().collect());
        }
    }
    out
}

impl LangId {
    /// Trains one profile per `(language, seed lines)` entry.
    pub fn train<S: AsRef<str>>(seeds: &[(&str, &[S])]) -> Result<Self> {
        if seeds.len() < 2 {
            return Err(Error::InvalidParameter("language identification needs at least two languages".into()));
        }
        let mut profiles = Vec::new();
        for (lang, lines) in seeds {
            let mut counts = HashMap::new();
            let mut total = 0;
            for line in lines.iter().filter(|l| !l.as_ref().trim().is_empty()) {
                for g in char_ngrams(line.as_ref()) {
                    *counts.entry(g).or_insert(0) += 1;
                    total += 1;
                }
            }
            if total == 0 {
                return Err(Error::EmptyCorpus);
            }
            profiles.push(Profile {
                lang: lang.to_string(),
                counts,
                total,
            });
        }
        Ok(LangId { profiles })
    }

    pub fn languages(&self) -> Vec<&str> {
        self.profiles.iter().map(|p| p.lang.as_str()).collect()
    }

    fn vocab_size(&self) -> f64 {
        let mut all: Vec<&String> = self.profiles.iter().flat_map(|p| p.counts.keys()).collect();
        all.sort();
        all.dedup();
        all.len() as f64 + 1.0
    }

    fn loglik(&self, profile: &Profile, grams: &[String], v: f64) -> f64 {
        grams
            .iter()
            .map(|g| {
                let c = profile.counts.get(g).copied().unwrap_or(0) as f64;
                ((c + 1.0) / (profile.total as f64 + v)).ln()
            })
            .sum()
    }

    /// Per-n-gram log-odds of `lang` against the best competing language;
    /// 0 for empty text or an unknown language.
    pub fn log_odds(&self, text: &str, lang: &str) -> f64 {
        let grams = char_ngrams(text.trim());
        let Some(target) = self.profiles.iter().find(|p| p.lang == lang) else {
            return 0.0;
        };
        if text.trim().is_empty() {
            return 0.0;
        }
        let v = self.vocab_size();
        let own = self.loglik(target, &grams, v);
        let other = self
            .profiles
            .iter()
            .filter(|p| p.lang != lang)
            .map(|p| self.loglik(p, &grams, v))
            .fold(f64::NEG_INFINITY, f64::max);
        (own - other) / grams.len() as f64
    }

    /// Most likely language.
    pub fn classify(&self, text: &str) -> &str {
        let grams = char_ngrams(text.trim());
        let v = self.vocab_size();
        self.profiles
            .iter()
            .map(|p| (self.loglik(p, &grams, v), p.lang.as_str()))
            .fold((f64::NEG_INFINITY, ""), |best, cur| if cur.0 > best.0 { cur } else { best })
            .1
    }
}
