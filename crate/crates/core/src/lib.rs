//! Building blocks for terminology-controlled machine translation pipelines.
//!
//! The crate covers the whole chain from raw text to a constrained synthetic
//! parallel corpus:
//!
//! - [`textproc`]: normalization, tokenization, truecasing and BPE.
//! - [`ngram_lm`]: absolute-discounting n-gram models and Moore-Lewis selection.
//! - [`align`]: IBM Model 1, a diagonal-prior variant and symmetrization.
//! - [`phrasex`]: phrase-pair extraction and constraint filtering.
//! - [`corpusfilter`]: bitext features and a random-forest cleanliness classifier.
//! - [`decoder`]: beam search and lexically constrained beam search.
//! - [`constraints`]: constraint inventories, NE tagging and copy candidates.
//! - [`backtranslate`]: constrained backtranslation of monolingual data.
//! - [`eval`]: corpus BLEU and terminology recall.

pub mod align;
pub mod backtranslate;
pub mod constraints;
pub mod corpusfilter;
pub mod decoder;
mod error;
pub mod eval;
pub mod io;
pub mod ngram_lm;
pub mod phrasex;
pub mod textproc;

pub use error::{Error, Result};
