//! Structured sequence segmentation with linear-chain, semi-Markov and
//! filtered semi-Markov conditional random fields.

pub mod bench;
pub mod boundary;
pub mod crf;
pub mod data;
pub mod decode;
pub mod error;
pub mod features;
pub mod filtered;
pub mod logspace;
pub mod oracle;
pub mod semicrf;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    entities_of, validate_segmentation, EntitySet, GradientSet, LabelSet, ScoreSet, Segment,
    Segmentation, Shape,
};

// Runs the code listings of the guide as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scores.md")]
    mod scores {}
    #[doc = include_str!("../../../book/src/crf.md")]
    mod crf {}
    #[doc = include_str!("../../../book/src/semicrf.md")]
    mod semicrf {}
    #[doc = include_str!("../../../book/src/filtered.md")]
    mod filtered {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/bindings.md")]
    mod bindings {}
}
