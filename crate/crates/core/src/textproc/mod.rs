//! Preprocessing: normalization, tokenization, truecasing and byte-pair encoding.
//!
//! Every other module consumes the output of this layer, so all functions here
//! are deterministic and total on valid UTF-8.

mod bpe;
mod normalize;
mod tokenize;
mod truecase;

pub use bpe::{bpe_apply, bpe_decode, bpe_learn, unit_vocabulary, word_counts, BpeModel, END_OF_WORD};
pub use normalize::{normalize, normalize_bytes};
pub use tokenize::{detokenize, is_word_char, tokenize};
pub use truecase::{truecase_apply, truecase_train, TruecaseModel};

/// Normalizes and tokenizes a raw line in one go.
pub fn preprocess(line: &str) -> Vec<String> {
    tokenize(&normalize(line))
}
