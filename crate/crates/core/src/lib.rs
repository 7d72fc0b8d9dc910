//! Interaction-level inclusion metrics for multi-party chat transcripts.
//!
//! Three families of measures operate on a [`Conversation`]:
//!
//! * participation: the inequality of turns or words across speakers;
//! * affect: how much politeness a speaker's utterances receive in reply;
//! * epistemic: how much of a speaker's content is echoed or endorsed.
//!
//! ```
//! use inclusion_analytics::{participation, Conversation};
//!
//! let conv = Conversation::from_pairs("demo", &[("A", "hi"), ("B", "hello there"), ("A", "ok")]).unwrap();
//! let profile = participation::participation_profile(&conv);
//! let ip = participation::inequality_of_participation(&profile, participation::Basis::Turns).unwrap();
//! assert!((ip - 1.0 / 3.0).abs() < 1e-12);
//! ```

pub mod affect;
pub mod analysis;
pub mod embedding;
pub mod epistemic;
pub mod error;
pub mod lexicon;
pub mod participation;
pub mod report;
pub mod simgen;
pub mod stats;
pub mod transcript;
pub mod window;

pub use analysis::Analyzer;
pub use embedding::EmbeddingProvider;
pub use error::{Error, Result};
pub use lexicon::{CompiledLexicon, EndorsementLexicon, PolitenessLexicon};
pub use report::AnalysisReport;
pub use transcript::{Conversation, Role, Turn, Utterance};

// Snippets in the guide and README run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/transcripts.md")]
    mod transcripts {}
    #[doc = include_str!("../../../book/src/participation.md")]
    mod participation {}
    #[doc = include_str!("../../../book/src/politeness.md")]
    mod politeness {}
    #[doc = include_str!("../../../book/src/semantic-uptake.md")]
    mod semantic_uptake {}
    #[doc = include_str!("../../../book/src/endorsement.md")]
    mod endorsement {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
