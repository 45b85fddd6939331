use std::collections::HashMap;
use std::sync::OnceLock;

use unicode_normalization::UnicodeNormalization;

use crate::{Error, Result};

const PUNCTUATION_TABLE: &str = include_str!("../../data/punctuation.tsv");

fn punctuation_map() -> &'static HashMap<char, &'static str> {
    static MAP: OnceLock<HashMap<char, &'static str>> = OnceLock::new();
    MAP.get_or_init(|| {
        PUNCTUATION_TABLE
            .lines()
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let (from, to) = l.split_once('\t').expect("malformed punctuation table");
                let mut chars = from.chars();
                let c = chars.next().expect("empty punctuation key");
                assert!(chars.next().is_none(), "punctuation key must be one char");
                (c, to)
            })
            .collect()
    })
}

/// NFC-normalizes `text`, folds typographic quotes and dashes to ASCII and
/// collapses whitespace runs to single spaces.
pub fn normalize(text: &str) -> String {
    let map = punctuation_map();
    let mut folded = String::with_capacity(text.len());
    for c in text.nfc() {
        match map.get(&c) {
            Some(rep) => folded.push_str(rep),
            None => folded.push(c),
        }
    }
    let mut out = String::with_capacity(folded.len());
    for word in folded.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Like [`normalize`], but validates the encoding first.
pub fn normalize_bytes(bytes: &[u8]) -> Result<String> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Decode {
        offset: e.valid_up_to(),
    })?;
    Ok(normalize(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapses_whitespace() {
        assert_eq!(normalize("a  b "), "a b");
        assert_eq!(normalize("\t a\u{00A0}\u{00A0}b\n"), "a b");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn folds_guillemets() {
        assert_eq!(normalize("«Gelbwesten»"), "\"Gelbwesten\"");
        assert_eq!(normalize("l’ascension — vite…"), "l'ascension - vite...");
    }

    #[test]
    fn composes_to_nfc() {
        // e + combining acute
        assert_eq!(normalize("e\u{0301}lu"), "\u{00E9}lu");
    }

    #[test]
    fn reports_decode_offset() {
        let err = normalize_bytes(b"ab\xffcd").unwrap_err();
        assert!(matches!(err, Error::Decode { offset: 2 }));
        assert_eq!(normalize_bytes("«x»".as_bytes()).unwrap(), "\"x\"");
    }

    #[test]
    fn idempotent() {
        for s in ["«a»  —  b…", "x\u{2009}y", "", "  "] {
            let once = normalize(s);
            assert_eq!(normalize(&once), once);
        }
    }
}
