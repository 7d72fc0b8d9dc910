//! Idea uptake: semantic uptake with a Monte Carlo null baseline, and
//! decay-weighted endorsement uptake.
//!
//! * Semantic uptake `U_i` is the mean dot product between the unit
//!   embedding of utterance `i` and those of other-speaker utterances among
//!   the next `K` turns.
//! * The null mean `mu_i` estimates background topical similarity. The
//!   exclusion pool holds other-speaker utterances more than `delta` turns
//!   away from `i` (in either direction). Each of `N` rounds samples
//!   `min(K, |pool|)` pool members without replacement and averages their
//!   similarity to `i`; `mu_i` is the mean of the round means.
//! * Adjusted uptake is `A_i = U_i - mu_i`.
//! * Endorsement uptake `E_i` sums `lambda^(d-1)` over the other-speaker
//!   turns at distance `d = 1..=K` that match an endorsement pattern.
//!
//! # Sampling sequence
//!
//! Every utterance draws from its own ChaCha8 stream, seeded with
//! `SHA-256("inclusion-analytics/null-baseline/v1\0" || seed (u64 LE) ||
//! len(conversation_id) (u64 LE) || conversation_id || i (u64 LE))`, so results
//! do not depend on scheduling. The pool is kept in ascending index order.
//! A round copies the pool and runs a partial Fisher-Yates shuffle: for
//! `t = 0..m`, draw `r = next_u64()`, swap position `t` with
//! `t + r mod (|pool| - t)`. The first `m` entries, in that order, form the
//! sample. Rounds run back to back on the same stream.
//!
//! All semantic means, over the window, within a round and across rounds,
//! use [`incremental_mean`] and accumulate in index or sampling order.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::lexicon::EndorsementLexicon;
use crate::transcript::Conversation;
use crate::window::future_window;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpistemicConfig {
    pub window_k: usize,
    pub endorse_k: usize,
    pub decay: f64,
    pub null_samples: usize,
    /// Defaults to `window_k` when absent.
    pub exclusion_radius: Option<usize>,
    pub seed: u64,
}

impl Default for EpistemicConfig {
    fn default() -> Self {
        EpistemicConfig {
            window_k: 4,
            endorse_k: 3,
            decay: 0.7,
            null_samples: 100,
            exclusion_radius: None,
            seed: 0,
        }
    }
}

impl EpistemicConfig {
    pub fn exclusion_radius(&self) -> usize {
        self.exclusion_radius.unwrap_or(self.window_k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_k < 1 {
            return Err(Error::Config("window K must be at least 1".into()));
        }
        if self.endorse_k < 1 {
            return Err(Error::Config("endorsement K must be at least 1".into()));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        if self.null_samples < 1 {
            return Err(Error::Config("null sample count must be at least 1".into()));
        }
        if self.exclusion_radius() < self.window_k {
            return Err(Error::Config(format!(
                "exclusion radius {} is smaller than window K {}",
                self.exclusion_radius(),
                self.window_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticUptakeResult {
    pub raw: Option<f64>,
    pub null_mean: Option<f64>,
    pub adjusted: Option<f64>,
    pub contributing_count: usize,
    pub null_samples_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedTurn {
    pub distance: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndorsementUptakeResult {
    pub value: f64,
    pub matched_turns: Vec<MatchedTurn>,
}

fn check_embeddings(conversation: &Conversation, embeddings: &[EmbeddingVector]) -> Result<()> {
    if embeddings.len() != conversation.len() {
        return Err(Error::Config(format!(
            "{} embeddings for {} utterances",
            embeddings.len(),
            conversation.len()
        )));
    }
    Ok(())
}

/// `U_i`, or `None` when no other speaker talks within `k` turns.
pub fn semantic_uptake(
    conversation: &Conversation,
    embeddings: &[EmbeddingVector],
    i: usize,
    k: usize,
) -> Result<Option<f64>> {
    conversation.check_index(i)?;
    check_embeddings(conversation, embeddings)?;
    Ok(raw_uptake(conversation, embeddings, i, k).0)
}

/// Mean by incremental updates `m += (x - m) / k`. Unlike a sum divided by
/// the count, a run of equal values yields that value exactly, so `U_i` and
/// the null baseline agree bit for bit on identical texts.
pub fn incremental_mean(values: impl IntoIterator<Item = f64>) -> (Option<f64>, usize) {
    let mut mean = 0.0;
    let mut count = 0usize;
    for x in values {
        count += 1;
        mean += (x - mean) / count as f64;
    }
    ((count > 0).then_some(mean), count)
}

fn raw_uptake(conversation: &Conversation, embeddings: &[EmbeddingVector], i: usize, k: usize) -> (Option<f64>, usize) {
    incremental_mean(future_window(conversation, i, k).map(|j| embeddings[i].dot(&embeddings[j])))
}

/// Other-speaker utterances outside `[i - delta, i + delta]`, ascending.
pub fn exclusion_pool(conversation: &Conversation, i: usize, delta: usize) -> Vec<usize> {
    let speaker = conversation.speaker(i);
    (0..conversation.len())
        .filter(|&j| j.abs_diff(i) > delta && conversation.speaker(j) != speaker)
        .collect()
}

/// The per-utterance generator described in the module docs.
pub fn null_rng(seed: u64, conversation_id: &str, i: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"inclusion-analytics/null-baseline/v1\0");
    h.update(seed.to_le_bytes());
    h.update((conversation_id.len() as u64).to_le_bytes());
    h.update(conversation_id.as_bytes());
    h.update((i as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Partial Fisher-Yates draw of `m` distinct pool members.
pub fn sample_without_replacement(rng: &mut impl RngCore, pool: &[usize], m: usize) -> Vec<usize> {
    let mut work = pool.to_vec();
    let m = m.min(work.len());
    for t in 0..m {
        let span = (work.len() - t) as u64;
        let r = t + (rng.next_u64() % span) as usize;
        work.swap(t, r);
    }
    work.truncate(m);
    work
}

/// `mu_i`, or `None` when the exclusion pool is empty.
pub fn null_baseline(
    conversation: &Conversation,
    embeddings: &[EmbeddingVector],
    i: usize,
    k: usize,
    delta: usize,
    n: usize,
    seed: u64,
) -> Result<Option<f64>> {
    conversation.check_index(i)?;
    check_embeddings(conversation, embeddings)?;
    if delta < k {
        return Err(Error::Config(format!("exclusion radius {delta} is smaller than window K {k}")));
    }
    if n < 1 {
        return Err(Error::Config("null sample count must be at least 1".into()));
    }
    Ok(null_mean(conversation, embeddings, i, k, delta, n, seed))
}

fn null_mean(
    conversation: &Conversation,
    embeddings: &[EmbeddingVector],
    i: usize,
    k: usize,
    delta: usize,
    n: usize,
    seed: u64,
) -> Option<f64> {
    let pool = exclusion_pool(conversation, i, delta);
    if pool.is_empty() {
        return None;
    }
    let m = k.min(pool.len());
    let mut rng = null_rng(seed, conversation.id(), i);
    let rounds = (0..n).map(|_| {
        let sample = sample_without_replacement(&mut rng, &pool, m);
        incremental_mean(sample.iter().map(|&j| embeddings[i].dot(&embeddings[j]))).0.expect("m >= 1")
    });
    incremental_mean(rounds).0
}

pub fn adjusted_semantic_uptake(
    conversation: &Conversation,
    embeddings: &[EmbeddingVector],
    i: usize,
    config: &EpistemicConfig,
) -> Result<SemanticUptakeResult> {
    config.validate()?;
    conversation.check_index(i)?;
    check_embeddings(conversation, embeddings)?;
    Ok(adjusted_unchecked(conversation, embeddings, i, config))
}

fn adjusted_unchecked(
    conversation: &Conversation,
    embeddings: &[EmbeddingVector],
    i: usize,
    config: &EpistemicConfig,
) -> SemanticUptakeResult {
    let (raw, contributing_count) = raw_uptake(conversation, embeddings, i, config.window_k);
    let null = null_mean(
        conversation,
        embeddings,
        i,
        config.window_k,
        config.exclusion_radius(),
        config.null_samples,
        config.seed,
    );
    SemanticUptakeResult {
        raw,
        null_mean: null,
        adjusted: raw.zip(null).map(|(u, mu)| u - mu),
        contributing_count,
        null_samples_used: if null.is_some() { config.null_samples } else { 0 },
    }
}

/// Adjusted semantic uptake for every utterance, in parallel.
pub fn adjusted_semantic_uptake_all(
    conversation: &Conversation,
    embeddings: &[EmbeddingVector],
    config: &EpistemicConfig,
) -> Result<Vec<SemanticUptakeResult>> {
    config.validate()?;
    check_embeddings(conversation, embeddings)?;
    Ok((0..conversation.len())
        .into_par_iter()
        .map(|i| adjusted_unchecked(conversation, embeddings, i, config))
        .collect())
}

/// The endorsement indicator for every utterance.
pub fn endorsement_flags(lexicon: &EndorsementLexicon, conversation: &Conversation) -> Vec<bool> {
    conversation
        .utterances()
        .iter()
        .map(|u| lexicon.is_endorsement(&u.text))
        .collect()
}

pub fn endorsement_uptake(
    conversation: &Conversation,
    lexicon: &EndorsementLexicon,
    i: usize,
    k: usize,
    lambda: f64,
) -> Result<EndorsementUptakeResult> {
    let flags = endorsement_flags(lexicon, conversation);
    endorsement_uptake_from_flags(conversation, &flags, i, k, lambda)
}

/// `E_i` from precomputed indicator values, one per utterance.
pub fn endorsement_uptake_from_flags(
    conversation: &Conversation,
    flags: &[bool],
    i: usize,
    k: usize,
    lambda: f64,
) -> Result<EndorsementUptakeResult> {
    conversation.check_index(i)?;
    if k < 1 {
        return Err(Error::Config("endorsement K must be at least 1".into()));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Config(format!("decay must lie in (0, 1], got {lambda}")));
    }
    let matched_turns: Vec<MatchedTurn> = future_window(conversation, i, k)
        .filter(|&j| flags[j])
        .map(|j| {
            let distance = j - i;
            MatchedTurn {
                distance,
                weight: lambda.powi(distance as i32 - 1),
            }
        })
        .collect();
    let value = matched_turns.iter().map(|m| m.weight).fold(0.0, |acc, w| acc + w);
    Ok(EndorsementUptakeResult { value, matched_turns })
}
