//! Inequality of Participation (IP) from turn and word counts.
//!
//! Per-speaker shares are sorted ascending and cumulated (Lorenz convention).
//! With `O_i` the cumulative observed share through rank `i` and `E_i = i/n`:
//!
//! ```text
//! IP = ( (2/n) * sum_i (E_i - O_i) ) / (1 - 1/n)
//! ```
//!
//! The factor 2 makes the index reach exactly 1 when one speaker holds every
//! turn (or word), and 0 under perfect equality. The sum is evaluated in exact
//! integer arithmetic, so both endpoints and scale invariance hold bit-for-bit.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transcript::Conversation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Turns,
    Words,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerCounts {
    pub speaker_id: String,
    pub turns: u64,
    pub words: u64,
}

/// Per-speaker turn and word counts, speakers in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipationProfile {
    pub speakers: Vec<SpeakerCounts>,
}

impl ParticipationProfile {
    pub fn n(&self) -> usize {
        self.speakers.len()
    }

    pub fn counts(&self, basis: Basis) -> Vec<u64> {
        self.speakers
            .iter()
            .map(|s| match basis {
                Basis::Turns => s.turns,
                Basis::Words => s.words,
            })
            .collect()
    }

    pub fn get(&self, speaker_id: &str) -> Option<&SpeakerCounts> {
        self.speakers.iter().find(|s| s.speaker_id == speaker_id)
    }
}

pub fn participation_profile(conversation: &Conversation) -> ParticipationProfile {
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut speakers: Vec<SpeakerCounts> = Vec::new();
    for u in conversation.utterances() {
        let k = *slot.entry(u.speaker_id.as_str()).or_insert_with(|| {
            speakers.push(SpeakerCounts {
                speaker_id: u.speaker_id.clone(),
                turns: 0,
                words: 0,
            });
            speakers.len() - 1
        });
        speakers[k].turns += 1;
        speakers[k].words += u.tokens as u64;
    }
    ParticipationProfile { speakers }
}

pub fn inequality_of_participation(profile: &ParticipationProfile, basis: Basis) -> Result<f64> {
    ip_from_counts(&profile.counts(basis))
}

/// IP for raw per-speaker counts. Zero counts stay in `n`.
pub fn ip_from_counts(counts: &[u64]) -> Result<f64> {
    let n = counts.len();
    if n < 2 {
        return Err(Error::TooFewSpeakers(n));
    }
    let total: u128 = counts.iter().map(|&c| c as u128).sum();
    if total == 0 {
        return Err(Error::ZeroTotal);
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();

    // sum_i (i/n - C_i/total) = sum_i (i*total - n*C_i) / (n*total)
    let n128 = n as u128;
    let mut cumulative: u128 = 0;
    let mut numerator: u128 = 0;
    for (rank, &c) in sorted.iter().enumerate() {
        cumulative += c as u128;
        // Ascending order keeps every term non-negative.
        numerator += (rank as u128 + 1) * total - n128 * cumulative;
    }
    // IP = 2 * numerator / (n * total * (n - 1))
    let denominator = n128 * total * (n128 - 1);
    let ip = (2 * numerator) as f64 / denominator as f64;
    Ok(ip.clamp(0.0, 1.0))
}
