//! Runs every metric over a corpus and assembles an [`AnalysisReport`].
//!
//! Embeddings for the whole corpus are requested in one provider call, so a
//! remote backend sees full batches and the cache is filled before any metric
//! runs. Conversations are then processed on a bounded worker pool and merged
//! back in input order; no result depends on the number of workers.

use std::time::SystemTime;

use rayon::prelude::*;

use crate::affect::{politeness_uptake_all, politeness_vectors};
use crate::embedding::{EmbeddingProvider, EmbeddingVector};
use crate::epistemic::{adjusted_semantic_uptake_all, endorsement_flags, endorsement_uptake_from_flags, EpistemicConfig};
use crate::error::{Error, Result};
use crate::lexicon::{EndorsementLexicon, PolitenessLexicon};
use crate::participation::{inequality_of_participation, participation_profile, Basis};
use crate::report::{
    AnalysisReport, ConversationReport, LexiconInfo, LexiconsInfo, MetricSummary, ProviderInfo, RunMetadata,
    SpeakerReport, UtteranceReport, SCHEMA_VERSION,
};
use crate::simgen::SYNTHETIC_ID_PREFIX;
use crate::transcript::Conversation;

pub const BUILTIN_SOURCE: &str = "builtin";

pub struct Analyzer<'a> {
    provider: &'a EmbeddingProvider,
    politeness: PolitenessLexicon,
    politeness_source: String,
    endorsement: EndorsementLexicon,
    endorsement_source: String,
    config: EpistemicConfig,
    workers: usize,
}

impl<'a> Analyzer<'a> {
    /// An analyzer with the shipped lexicons, default parameters and one
    /// worker per available core.
    pub fn new(provider: &'a EmbeddingProvider) -> Self {
        Analyzer {
            provider,
            politeness: PolitenessLexicon::shipped(),
            politeness_source: BUILTIN_SOURCE.into(),
            endorsement: EndorsementLexicon::shipped(),
            endorsement_source: BUILTIN_SOURCE.into(),
            config: EpistemicConfig::default(),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }

    pub fn with_politeness(mut self, lexicon: PolitenessLexicon, source: impl Into<String>) -> Self {
        self.politeness = lexicon;
        self.politeness_source = source.into();
        self
    }

    pub fn with_endorsement(mut self, lexicon: EndorsementLexicon, source: impl Into<String>) -> Self {
        self.endorsement = lexicon;
        self.endorsement_source = source.into();
        self
    }

    pub fn with_config(mut self, config: EpistemicConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn config(&self) -> &EpistemicConfig {
        &self.config
    }

    pub fn analyze(&self, conversations: &[Conversation]) -> Result<AnalysisReport> {
        self.config.validate()?;
        let embeddings = self.embed_corpus(conversations)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        let results: Vec<Result<ConversationReport>> = pool.install(|| {
            conversations
                .par_iter()
                .zip(embeddings.par_iter())
                .map(|(c, e)| self.analyze_conversation(c, e).map_err(|err| err.in_conversation(c.id(), None)))
                .collect()
        });
        let conversations = results.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(AnalysisReport {
            schema_version: SCHEMA_VERSION.into(),
            metadata: self.metadata(),
            conversations,
        })
    }

    fn metadata(&self) -> RunMetadata {
        RunMetadata {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            generated_at: humantime::format_rfc3339_seconds(SystemTime::now()).to_string(),
            seed: self.config.seed,
            config: self.config.clone(),
            lexicons: LexiconsInfo {
                politeness: LexiconInfo {
                    source: self.politeness_source.clone(),
                    sha256: self.politeness.lexicon().digest().into(),
                },
                endorsement: LexiconInfo {
                    source: self.endorsement_source.clone(),
                    sha256: self.endorsement.lexicon().digest().into(),
                },
            },
            provider: ProviderInfo {
                kind: self.provider.kind(),
                config: self.provider.config().into(),
                config_hash: self.provider.config_hash().into(),
                dimension: self.provider.dimension(),
            },
        }
    }

    fn embed_corpus(&self, conversations: &[Conversation]) -> Result<Vec<Vec<EmbeddingVector>>> {
        let texts: Vec<&str> = conversations
            .iter()
            .flat_map(|c| c.utterances().iter().map(|u| u.text.as_str()))
            .collect();
        let flat = self.provider.embed_batch(&texts).map_err(|e| match &e {
            Error::Provider { failed_indices, .. } if !failed_indices.is_empty() => {
                let (c, i) = locate(conversations, failed_indices[0]);
                e.in_conversation(conversations[c].id(), Some(i))
            }
            _ => e,
        })?;
        let mut flat = flat.into_iter();
        Ok(conversations
            .iter()
            .map(|c| flat.by_ref().take(c.len()).collect())
            .collect())
    }

    fn analyze_conversation(&self, conv: &Conversation, embeddings: &[EmbeddingVector]) -> Result<ConversationReport> {
        let cfg = &self.config;
        let profile = participation_profile(conv);
        let ip = |basis| match inequality_of_participation(&profile, basis) {
            Ok(v) => Ok(Some(v)),
            Err(Error::TooFewSpeakers(_) | Error::ZeroTotal) => Ok(None),
            Err(e) => Err(e),
        };
        let ip_turns = ip(Basis::Turns)?;
        let ip_words = ip(Basis::Words)?;

        let vectors = politeness_vectors(&self.politeness, conv);
        let politeness = politeness_uptake_all(conv, &vectors, cfg.window_k);
        let semantic = adjusted_semantic_uptake_all(conv, embeddings, cfg)?;
        let flags = endorsement_flags(&self.endorsement, conv);

        let mut utterances = Vec::with_capacity(conv.len());
        for (i, u) in conv.utterances().iter().enumerate() {
            let e = endorsement_uptake_from_flags(conv, &flags, i, cfg.endorse_k, cfg.decay)
                .map_err(|err| err.in_conversation(conv.id(), Some(i)))?;
            let p = &politeness[i];
            let s = &semantic[i];
            utterances.push(UtteranceReport {
                index: i,
                speaker_id: u.speaker_id.clone(),
                role: u.role,
                tokens: u.tokens,
                politeness_uptake: p.value,
                politeness_defined: p.defined,
                politeness_window: p.contributing_count,
                semantic_uptake: s.raw,
                null_mean: s.null_mean,
                adjusted_uptake: s.adjusted,
                semantic_defined: s.adjusted.is_some(),
                semantic_window: s.contributing_count,
                null_samples_used: s.null_samples_used,
                endorsement_uptake: e.value,
                endorsement_distances: e.matched_turns.iter().map(|m| m.distance).collect(),
                is_endorsement: flags[i],
            });
        }

        let speakers = profile
            .speakers
            .iter()
            .map(|counts| {
                let own: Vec<&UtteranceReport> =
                    utterances.iter().filter(|u| u.speaker_id == counts.speaker_id).collect();
                let summary = |f: fn(&UtteranceReport) -> Option<f64>| {
                    MetricSummary::from_values(&own.iter().map(|u| f(u)).collect::<Vec<_>>())
                };
                SpeakerReport {
                    speaker_id: counts.speaker_id.clone(),
                    role: own.first().map(|u| u.role).unwrap_or_default(),
                    turns: counts.turns,
                    words: counts.words,
                    politeness_uptake: summary(|u| u.politeness_uptake),
                    semantic_uptake: summary(|u| u.semantic_uptake),
                    adjusted_uptake: summary(|u| u.adjusted_uptake),
                    endorsement_uptake: summary(|u| Some(u.endorsement_uptake)),
                }
            })
            .collect();

        Ok(ConversationReport {
            conversation_id: conv.id().into(),
            condition_label: conv.condition_label().map(str::to_string),
            content_note: conv
                .id()
                .starts_with(SYNTHETIC_ID_PREFIX)
                .then(|| "synthetic conversation assembled from built-in phrase templates".to_string()),
            n_speakers: conv.n_speakers(),
            n_utterances: conv.len(),
            ip_turns,
            ip_words,
            speakers,
            utterances,
        })
    }
}

/// Maps a position in the flattened corpus to (conversation, utterance).
fn locate(conversations: &[Conversation], mut flat: usize) -> (usize, usize) {
    for (c, conv) in conversations.iter().enumerate() {
        if flat < conv.len() {
            return (c, flat);
        }
        flat -= conv.len();
    }
    (conversations.len().saturating_sub(1), 0)
}

/// Report equality ignoring the generation timestamp.
pub fn same_results(a: &AnalysisReport, b: &AnalysisReport) -> bool {
    let mut b = b.clone();
    b.metadata.generated_at.clone_from(&a.metadata.generated_at);
    *a == b
}
