//! Corpora, tag conversions and span-level evaluation.

mod bio;
mod conll;
mod eval;
mod synth;

pub use bio::{bio_decode, bio_encode};
pub use conll::{
    parse_conll, read_conll, read_conll_with, read_predictions, read_tokens, write_conll,
    write_predictions, Corpus, PredictionRecord, Sentence, TaggedSentence,
};
pub use eval::{span_f1, Prf};
pub use synth::{synth_corpus, SynthConfig};
