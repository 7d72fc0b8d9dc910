//! Politeness vectors and politeness uptake.
//!
//! Each utterance gets an 11-dimensional vector of marker rates
//! (`count / tokens`). The uptake of utterance `i` is the mean similarity
//! between its vector and the vectors of the other-speaker utterances among
//! the next `K` turns. An utterance with no markers has undefined uptake (no
//! polite signal to take up); a marker-free reply contributes similarity 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lexicon::PolitenessLexicon;
use crate::transcript::{Conversation, Utterance};
use crate::window::future_window;

pub const DEFAULT_WINDOW_K: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PolitenessVector {
    pub rates: Vec<f64>,
}

impl PolitenessVector {
    pub fn norm(&self) -> f64 {
        self.rates.iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    /// True when every rate is zero (including utterances with no tokens).
    pub fn is_zero(&self) -> bool {
        self.rates.iter().all(|&r| r == 0.0)
    }

    pub fn normalized(&self) -> PolitenessVector {
        let n = self.norm();
        PolitenessVector {
            rates: self.rates.iter().map(|r| if n > 0.0 { r / n } else { 0.0 }).collect(),
        }
    }
}

/// A per-utterance score that may be undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UptakeScore {
    pub value: Option<f64>,
    pub defined: bool,
    pub contributing_count: usize,
}

impl UptakeScore {
    pub fn undefined(contributing_count: usize) -> Self {
        UptakeScore {
            value: None,
            defined: false,
            contributing_count,
        }
    }

    pub fn defined(value: f64, contributing_count: usize) -> Self {
        UptakeScore {
            value: Some(value),
            defined: true,
            contributing_count,
        }
    }
}

pub fn politeness_vector(lexicon: &PolitenessLexicon, utterance: &Utterance) -> PolitenessVector {
    let dims = lexicon.lexicon().categories().len();
    if utterance.tokens == 0 {
        return PolitenessVector { rates: vec![0.0; dims] };
    }
    let tokens = utterance.tokens as f64;
    PolitenessVector {
        rates: lexicon
            .lexicon()
            .count_matches(&utterance.text)
            .into_iter()
            .map(|c| c as f64 / tokens)
            .collect(),
    }
}

pub fn politeness_vectors(lexicon: &PolitenessLexicon, conversation: &Conversation) -> Vec<PolitenessVector> {
    conversation
        .utterances()
        .iter()
        .map(|u| politeness_vector(lexicon, u))
        .collect()
}

/// Cosine of two vectors with non-zero norms: `a.b / (|a| |b|)`, each sum
/// accumulated in index order.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Similarity between the source vector and one reply, given a non-zero source.
fn reply_similarity(source: &PolitenessVector, reply: &PolitenessVector) -> f64 {
    if reply.is_zero() {
        0.0
    } else {
        cosine(&source.rates, &reply.rates)
    }
}

pub fn politeness_uptake(
    conversation: &Conversation,
    vectors: &[PolitenessVector],
    i: usize,
    k: usize,
) -> Result<UptakeScore> {
    conversation.check_index(i)?;
    let window: Vec<usize> = future_window(conversation, i, k).collect();
    if vectors[i].is_zero() || window.is_empty() {
        return Ok(UptakeScore::undefined(window.len()));
    }
    let sum: f64 = window.iter().map(|&j| reply_similarity(&vectors[i], &vectors[j])).sum();
    Ok(UptakeScore::defined(sum / window.len() as f64, window.len()))
}

/// Uptake for every utterance, computed in parallel.
pub fn politeness_uptake_all(conversation: &Conversation, vectors: &[PolitenessVector], k: usize) -> Vec<UptakeScore> {
    (0..conversation.len())
        .into_par_iter()
        .map(|i| politeness_uptake(conversation, vectors, i, k).expect("index in range"))
        .collect()
}
