/// Letters, digits and combining marks form words; anything else that is not
/// whitespace is punctuation.
pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
        || matches!(c as u32,
            0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF | 0xFE20..=0xFE2F)
}

/// Splits normalized text into tokens.
///
/// Whitespace separates tokens; every punctuation character becomes its own
/// token, except a hyphen between two word characters (`Dupont-Aignan`) and a
/// period or comma between two ASCII digits (`3.5`, `1,2`).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let prev = i.checked_sub(1).map(|p| chars[p]);
            let next = chars.get(i + 1).copied();
            let keep = is_word_char(c)
                || (c == '-' && prev.is_some_and(is_word_char) && next.is_some_and(is_word_char))
                || ((c == '.' || c == ',')
                    && prev.is_some_and(|p| p.is_ascii_digit())
                    && next.is_some_and(|n| n.is_ascii_digit()));
            if keep {
                current.push(c);
            } else {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

fn attaches_left(tok: &str) -> bool {
    matches!(tok, "," | "." | ";" | ":" | "!" | "?" | ")" | "]" | "}" | "%")
}

fn attaches_right(tok: &str) -> bool {
    matches!(tok, "(" | "[" | "{")
}

/// Joins tokens back into text. Closing punctuation is glued to the preceding
/// token and opening brackets to the following one; `tokenize` recovers the
/// original token list from the result.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = false;
    for (i, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        if i > 0 && !glue_next && !attaches_left(tok) {
            out.push(' ');
        }
        out.push_str(tok);
        glue_next = attaches_right(tok);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::normalize;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn splits_punctuation() {
        assert_eq!(toks("Bonjour, monde."), ["Bonjour", ",", "monde", "."]);
        assert!(toks("").is_empty());
    }

    #[test]
    fn keeps_hyphenated_words_and_decimals() {
        assert_eq!(toks("Dupont-Aignan"), ["Dupont-Aignan"]);
        assert_eq!(toks("3.5 et 1,2 -x x-"), ["3.5", "et", "1,2", "-", "x", "x", "-"]);
        assert_eq!(toks("fin. 3."), ["fin", ".", "3", "."]);
        assert_eq!(toks("l'ascension"), ["l", "'", "ascension"]);
    }

    #[test]
    fn detokenize_glues_closing_punctuation() {
        let t = toks("Bonjour, monde (vraiment) !");
        assert_eq!(detokenize(&t), "Bonjour, monde (vraiment)!");
        assert_eq!(tokenize(&detokenize(&t)), t);
    }

    proptest! {
        #[test]
        fn detok_tokenize_normalize_idempotent(s in "[a-zA-Z0-9 .,;:!?()'\"«»\\-éÉ\\t]{0,40}") {
            let once = detokenize(&tokenize(&normalize(&s)));
            let twice = detokenize(&tokenize(&normalize(&once)));
            prop_assert_eq!(&once, &twice);
            let t = tokenize(&normalize(&s));
            prop_assert_eq!(tokenize(&detokenize(&t)), t.clone());
            for tok in &t {
                prop_assert!(!tok.is_empty() && !tok.chars().any(char::is_whitespace));
            }
        }
    }
}
