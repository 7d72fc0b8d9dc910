//! Seeded, template-based three-person conversations about the NASA Moon
//! Survival ranking task, in balanced and imbalanced variants for each
//! inclusion dimension. `speaker_3` is the focal speaker:
//!
//! * participation, imbalanced: `speaker_3` takes about 5% of the turns;
//! * affect, imbalanced: `speaker_3` never uses a politeness marker, while
//!   the other two use more of them;
//! * epistemic, imbalanced: no other speaker echoes or endorses an idea from
//!   `speaker_3` within the next four turns.
//!
//! All phrase templates are our own construction; the content words and
//! skeletons carry no politeness or endorsement markers, so every marker in
//! the output comes from an explicit adornment or endorsement step.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::transcript::{tokenize, Conversation, Role, Turn};

pub const TEAM_SIZE: usize = 3;
pub const MIN_LENGTH: usize = 70;
pub const MAX_LENGTH: usize = 100;
pub const SPEAKERS: [&str; TEAM_SIZE] = ["speaker_1", "speaker_2", "speaker_3"];
pub const FOCAL_SPEAKER: &str = "speaker_3";
/// Every generated conversation id starts with this prefix.
pub const SYNTHETIC_ID_PREFIX: &str = "sim-";

/// Turns after a focal proposal that must not take it up (epistemic condition).
const IGNORE_HORIZON: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Participation,
    Affect,
    Epistemic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Balanced,
    Imbalanced,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Participation => "participation",
            Dimension::Affect => "affect",
            Dimension::Epistemic => "epistemic",
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Balanced => "balanced",
            Variant::Imbalanced => "imbalanced",
        })
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "participation" => Ok(Dimension::Participation),
            "affect" => Ok(Dimension::Affect),
            "epistemic" => Ok(Dimension::Epistemic),
            other => Err(Error::Config(format!(
                "unknown dimension {other:?} (expected participation, affect or epistemic)"
            ))),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "balanced" => Ok(Variant::Balanced),
            "imbalanced" => Ok(Variant::Imbalanced),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected balanced or imbalanced)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimCondition {
    pub dimension: Dimension,
    pub variant: Variant,
    pub team_size: usize,
    /// Fixed utterance count; drawn from 70..=100 per conversation when absent.
    pub target_length: Option<usize>,
}

impl SimCondition {
    pub fn new(dimension: Dimension, variant: Variant) -> Self {
        SimCondition {
            dimension,
            variant,
            team_size: TEAM_SIZE,
            target_length: None,
        }
    }

    pub fn with_length(mut self, length: usize) -> Self {
        self.target_length = Some(length);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.team_size != TEAM_SIZE {
            return Err(Error::Config(format!("team size must be {TEAM_SIZE}, got {}", self.team_size)));
        }
        if let Some(l) = self.target_length {
            if !(MIN_LENGTH..=MAX_LENGTH).contains(&l) {
                return Err(Error::Config(format!(
                    "target length must lie in {MIN_LENGTH}..={MAX_LENGTH}, got {l}"
                )));
            }
        }
        Ok(())
    }

    fn imbalanced(&self, dimension: Dimension) -> bool {
        self.dimension == dimension && self.variant == Variant::Imbalanced
    }
}

struct Item {
    name: &'static str,
    reasons: &'static [&'static str],
}

const ITEMS: &[Item] = &[
    Item { name: "oxygen tanks", reasons: &["there is no air up here", "breathing comes before everything"] },
    Item { name: "water", reasons: &["we lose water fast on the lit side", "dehydration kills in days"] },
    Item { name: "stellar map", reasons: &["navigation by the stars is the only option", "it shows the route to base"] },
    Item { name: "food concentrate", reasons: &["the walk takes energy", "hunger slows us down"] },
    Item { name: "radio receiver", reasons: &["we need contact with the mother ship", "it is solar powered"] },
    Item { name: "nylon rope", reasons: &["it helps on rough ground", "climbing cliffs needs it"] },
    Item { name: "first aid kit", reasons: &["injuries need treatment", "it has pills and bandages"] },
    Item { name: "parachute silk", reasons: &["it gives shade from the sun", "it works as a carrying sack"] },
    Item { name: "life raft", reasons: &["it carries gear across craters", "its gas bottles give thrust"] },
    Item { name: "signal flares", reasons: &["the base team needs to spot us", "they are useful near the end"] },
    Item { name: "pistols", reasons: &["their recoil gives propulsion", "they are mostly dead weight"] },
    Item { name: "powdered milk", reasons: &["it is food but needs water", "it is heavy for its value"] },
    Item { name: "heating unit", reasons: &["the lit side is hot already", "there is little use for heat"] },
    Item { name: "magnetic compass", reasons: &["there is no magnetic field to read", "the needle points nowhere"] },
    Item { name: "box of matches", reasons: &["nothing burns without air", "they are useless here"] },
];

const RANK_PHRASES: &[&str] = &[
    "goes first",
    "goes at number {n}",
    "near the top",
    "near the bottom",
    "at rank {n}",
    "dead last",
    "in the top five",
    "in the bottom half",
];

const PROPOSALS: &[&str] = &[
    "{item} {rank}",
    "put {item} {rank}",
    "{item} {rank}, {reason}",
    "{item} {rank} since {reason}",
    "what about {item}? {reason}",
    "{item} should be {rank}",
];

const FOLLOW_UPS: &[&str] = &[
    "{item} {rank} then",
    "so {item} {rank}, {reason}",
    "{item} again, {reason}",
    "yes {item}, {reason}",
    "ok {item} {rank}",
];

const COORDINATION: &[&str] = &[
    "next item",
    "ok moving on",
    "how much time is left",
    "let me update our list",
    "what is still unranked",
    "writing it down now",
    "we have about ten minutes",
];

/// Fallback turns for the epistemic condition; none of these tokens occur in
/// focal-speaker proposals.
const NEUTRAL_FALLBACK: &[&str] = &["hmm ok", "ok next", "hmm", "next"];

const ENDORSEMENTS: &[&str] = &[
    "sounds good",
    "i agree",
    "makes sense",
    "exactly",
    "good point",
    "for sure",
    "works for me",
    "that's smart",
    "i'm on board",
    "absolutely",
];

/// Endorsements with no politeness marker.
const PLAIN_ENDORSEMENTS: &[&str] = &["i agree", "makes sense", "exactly", "for sure", "works for me", "absolutely"];

const POLITE_PREFIXES: &[&str] = &[
    "thanks, ",
    "thank you, ",
    "sorry, ",
    "hi all, ",
    "hey, ",
    "please, ",
    "i think ",
    "maybe ",
    "by the way, ",
    "with respect, ",
    "i guess ",
    "nice, ",
    "could we say ",
    "i'm not sure but ",
];

const POLITE_SUFFIXES: &[&str] = &[" please", " thanks", " if possible", " maybe", " sorry"];

const BLUNT_PREFIXES: &[&str] = &["no. ", "wrong. ", "obviously ", "listen, ", ""];
const BLUNT_SUFFIXES: &[&str] = &[". end of story", ". obviously", "", ""];

fn fill(template: &str, item: &Item, rng: &mut ChaCha8Rng) -> String {
    let rank = RANK_PHRASES
        .choose(rng)
        .expect("non-empty")
        .replace("{n}", &rng.random_range(1..=15).to_string());
    template
        .replace("{item}", item.name)
        .replace("{rank}", &rank)
        .replace("{reason}", item.reasons.choose(rng).expect("non-empty"))
}

struct Generator {
    condition: SimCondition,
    rng: ChaCha8Rng,
}

#[derive(Clone, Copy)]
struct Proposal {
    position: usize,
    speaker: usize,
    item: usize,
}

impl Generator {
    fn politeness_rate(&self, speaker: usize) -> f64 {
        match (self.condition.imbalanced(Dimension::Affect), self.condition.dimension, speaker) {
            (true, _, 2) => 0.0,
            (true, _, _) => 0.8,
            (false, Dimension::Affect, _) => 0.6,
            _ => 0.5,
        }
    }

    fn schedule(&mut self, length: usize) -> Vec<usize> {
        if self.condition.imbalanced(Dimension::Participation) {
            let focal_turns = ((length as f64 * 0.05).round() as usize).max(1);
            let mut slots: Vec<usize> = (1..length).collect();
            let (picked, _) = slots.partial_shuffle(&mut self.rng, focal_turns);
            let focal: HashSet<usize> = picked.iter().copied().collect();
            let mut order = Vec::with_capacity(length);
            let mut next = self.rng.random_range(0..2);
            for t in 0..length {
                if focal.contains(&t) {
                    order.push(2);
                } else {
                    order.push(next);
                    // Mostly alternate, occasionally keep the floor.
                    if self.rng.random_bool(0.8) {
                        next = 1 - next;
                    }
                }
            }
            order
        } else {
            let mut order: Vec<usize> = Vec::with_capacity(length + TEAM_SIZE);
            while order.len() < length {
                let mut block = [0usize, 1, 2];
                loop {
                    // Fisher-Yates on the block.
                    for k in (1..TEAM_SIZE).rev() {
                        block.swap(k, self.rng.random_range(0..=k));
                    }
                    if order.last() != Some(&block[0]) {
                        break;
                    }
                }
                order.extend(block);
            }
            order.truncate(length);
            order
        }
    }

    fn adorn(&mut self, speaker: usize, text: String) -> String {
        if self.condition.imbalanced(Dimension::Affect) && speaker == 2 {
            let pre = BLUNT_PREFIXES.choose(&mut self.rng).expect("non-empty");
            let suf = BLUNT_SUFFIXES.choose(&mut self.rng).expect("non-empty");
            return format!("{pre}{text}{suf}");
        }
        if !self.rng.random_bool(self.politeness_rate(speaker)) {
            return text;
        }
        if self.rng.random_bool(0.65) {
            format!("{}{text}", POLITE_PREFIXES.choose(&mut self.rng).expect("non-empty"))
        } else {
            format!("{text}{}", POLITE_SUFFIXES.choose(&mut self.rng).expect("non-empty"))
        }
    }

    fn endorsement(&mut self, speaker: usize) -> &'static str {
        let pool = if self.condition.imbalanced(Dimension::Affect) && speaker == 2 {
            PLAIN_ENDORSEMENTS
        } else {
            ENDORSEMENTS
        };
        pool.choose(&mut self.rng).expect("non-empty")
    }

    /// Core content for one turn, before adornment.
    fn content(&mut self, speaker: usize, t: usize, proposals: &mut Vec<Proposal>, may_take_up: bool) -> String {
        let target = proposals
            .iter()
            .rev()
            .take_while(|p| t - p.position <= 2)
            .find(|p| p.speaker != speaker)
            .copied();
        if let (Some(p), true) = (target, may_take_up) {
            if self.rng.random_bool(0.65) {
                let item = &ITEMS[p.item];
                return match self.rng.random_range(0..3) {
                    0 => self.endorsement(speaker).to_string(),
                    1 => {
                        let e = self.endorsement(speaker);
                        let f = fill(FOLLOW_UPS.choose(&mut self.rng).expect("non-empty"), item, &mut self.rng);
                        format!("{e}, {f}")
                    }
                    _ => fill(FOLLOW_UPS.choose(&mut self.rng).expect("non-empty"), item, &mut self.rng),
                };
            }
        }
        if self.rng.random_bool(0.8) {
            let item = self.rng.random_range(0..ITEMS.len());
            proposals.push(Proposal { position: t, speaker, item });
            fill(PROPOSALS.choose(&mut self.rng).expect("non-empty"), &ITEMS[item], &mut self.rng)
        } else {
            COORDINATION.choose(&mut self.rng).expect("non-empty").to_string()
        }
    }

    fn generate(&mut self, conversation_id: String) -> Result<Conversation> {
        let length = match self.condition.target_length {
            Some(l) => l,
            None => self.rng.random_range(MIN_LENGTH..=MAX_LENGTH),
        };
        let order = self.schedule(length);
        let ignore_focal = self.condition.imbalanced(Dimension::Epistemic);

        let mut texts: Vec<String> = Vec::with_capacity(length);
        let mut proposals: Vec<Proposal> = Vec::new();
        for (t, &speaker) in order.iter().enumerate() {
            // Focal utterances whose window this turn falls into.
            let guarded: Vec<usize> = if ignore_focal && speaker != 2 {
                (t.saturating_sub(IGNORE_HORIZON)..t).filter(|&j| order[j] == 2).collect()
            } else {
                Vec::new()
            };
            if guarded.is_empty() {
                let core = self.content(speaker, t, &mut proposals, true);
                texts.push(self.adorn(speaker, core));
                continue;
            }
            let forbidden: HashSet<String> = guarded.iter().flat_map(|&j| tokenize(&texts[j])).collect();
            let mut chosen = None;
            for _ in 0..200 {
                let mut scratch = proposals.clone();
                let core = self.content(speaker, t, &mut scratch, false);
                let text = self.adorn(speaker, core);
                if tokenize(&text).iter().all(|tok| !forbidden.contains(tok)) {
                    proposals = scratch;
                    chosen = Some(text);
                    break;
                }
            }
            let text = match chosen {
                Some(text) => text,
                None => NEUTRAL_FALLBACK
                    .iter()
                    .find(|f| tokenize(f).iter().all(|tok| !forbidden.contains(tok)))
                    .expect("fallback tokens never appear in focal turns")
                    .to_string(),
            };
            texts.push(text);
        }

        Conversation::new(
            conversation_id,
            Some(self.condition.variant.to_string()),
            order
                .iter()
                .zip(texts)
                .map(|(&s, text)| Turn::new(SPEAKERS[s], text).with_role(Role::Human)),
        )
    }
}

pub fn generate_conversation(condition: &SimCondition, seed: u64) -> Result<Conversation> {
    condition.validate()?;
    let id = format!("{SYNTHETIC_ID_PREFIX}{}-{}-{seed}", condition.dimension, condition.variant);
    generate_with_id(condition, seed, id)
}

fn generate_with_id(condition: &SimCondition, seed: u64, id: String) -> Result<Conversation> {
    let mut g = Generator {
        condition: *condition,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    g.generate(id)
}

/// Seed for team `team` of a corpus generated with `seed`.
pub fn team_seed(seed: u64, team: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"inclusion-analytics/simgen-team/v1\0");
    h.update(seed.to_le_bytes());
    h.update((team as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn generate_corpus(condition: &SimCondition, teams: usize, seed: u64) -> Result<Vec<Conversation>> {
    condition.validate()?;
    if teams < 1 {
        return Err(Error::Config("corpus needs at least one team".into()));
    }
    (0..teams)
        .map(|t| {
            let id = format!("{SYNTHETIC_ID_PREFIX}{}-{}-{seed}-team{t:03}", condition.dimension, condition.variant);
            generate_with_id(condition, team_seed(seed, t), id)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{CompiledLexicon, EndorsementLexicon, PolitenessLexicon};

    fn all_conditions() -> Vec<SimCondition> {
        let mut v = Vec::new();
        for d in [Dimension::Participation, Dimension::Affect, Dimension::Epistemic] {
            for var in [Variant::Balanced, Variant::Imbalanced] {
                v.push(SimCondition::new(d, var));
            }
        }
        v
    }

    fn marker_free(text: &str, pol: &CompiledLexicon, end: &EndorsementLexicon) -> bool {
        pol.count_matches(text).iter().all(|&c| c == 0) && !end.is_endorsement(text)
    }

    #[test]
    fn templates_carry_no_markers() {
        let pol = PolitenessLexicon::shipped();
        let end = EndorsementLexicon::shipped();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for item in ITEMS {
            for r in item.reasons {
                assert!(marker_free(r, pol.lexicon(), &end), "{r}");
            }
            for t in PROPOSALS.iter().chain(FOLLOW_UPS) {
                for _ in 0..20 {
                    let s = fill(t, item, &mut rng);
                    assert!(marker_free(&s, pol.lexicon(), &end), "{s}");
                }
            }
        }
        for s in COORDINATION.iter().chain(NEUTRAL_FALLBACK).chain(BLUNT_PREFIXES).chain(BLUNT_SUFFIXES) {
            assert!(marker_free(s, pol.lexicon(), &end), "{s}");
        }
        for s in PLAIN_ENDORSEMENTS {
            assert!(pol.lexicon().count_matches(s).iter().all(|&c| c == 0), "{s}");
            assert!(end.is_endorsement(s), "{s}");
        }
        for s in ENDORSEMENTS {
            assert!(end.is_endorsement(s), "{s}");
        }
        for s in POLITE_PREFIXES.iter().chain(POLITE_SUFFIXES) {
            let text = format!("{}oxygen tanks", s.trim_start());
            let text = if s.starts_with(' ') { format!("oxygen tanks{s}") } else { text };
            assert!(pol.lexicon().count_matches(&text).iter().any(|&c| c > 0), "{s:?}");
            assert!(!end.is_endorsement(&text), "{s:?}");
        }
    }

    #[test]
    fn deterministic_and_in_range() {
        for c in all_conditions() {
            let a = generate_conversation(&c, 7).unwrap();
            let b = generate_conversation(&c, 7).unwrap();
            assert_eq!(a, b);
            assert!((MIN_LENGTH..=MAX_LENGTH).contains(&a.len()));
            assert_eq!(a.n_speakers(), 3);
            assert_ne!(a, generate_conversation(&c, 8).unwrap());
        }
    }

    #[test]
    fn balanced_participation_shares() {
        let c = generate_conversation(&SimCondition::new(Dimension::Participation, Variant::Balanced), 1).unwrap();
        for s in SPEAKERS {
            let share = c.utterances().iter().filter(|u| u.speaker_id == s).count() as f64 / c.len() as f64;
            assert!((share - 1.0 / 3.0).abs() <= 0.05, "{s}: {share}");
        }
    }

    #[test]
    fn imbalanced_participation_focal_share() {
        for seed in 0..20 {
            let c = generate_conversation(&SimCondition::new(Dimension::Participation, Variant::Imbalanced), seed).unwrap();
            let focal = c.utterances().iter().filter(|u| u.speaker_id == FOCAL_SPEAKER).count();
            let share = focal as f64 / c.len() as f64;
            assert!((0.03..=0.07).contains(&share), "seed {seed}: {share}");
        }
    }

    #[test]
    fn impolite_speaker_has_zero_vectors() {
        let pol = PolitenessLexicon::shipped();
        for seed in 0..10 {
            let c = generate_conversation(&SimCondition::new(Dimension::Affect, Variant::Imbalanced), seed).unwrap();
            for u in c.utterances().iter().filter(|u| u.speaker_id == FOCAL_SPEAKER) {
                assert!(pol.lexicon().count_matches(&u.text).iter().all(|&k| k == 0), "{}", u.text);
            }
        }
    }

    #[test]
    fn ignored_ideas_get_no_echo_or_endorsement() {
        let end = EndorsementLexicon::shipped();
        for seed in 0..10 {
            let c = generate_conversation(&SimCondition::new(Dimension::Epistemic, Variant::Imbalanced), seed).unwrap();
            let u = c.utterances();
            for i in (0..u.len()).filter(|&i| u[i].speaker_id == FOCAL_SPEAKER) {
                let focal: HashSet<String> = tokenize(&u[i].text).into_iter().collect();
                for j in i + 1..(i + 1 + IGNORE_HORIZON).min(u.len()) {
                    if u[j].speaker_id == FOCAL_SPEAKER {
                        continue;
                    }
                    assert!(!end.is_endorsement(&u[j].text), "{:?} after {:?}", u[j].text, u[i].text);
                    assert!(tokenize(&u[j].text).iter().all(|t| !focal.contains(t)), "{:?} echoes {:?}", u[j].text, u[i].text);
                }
            }
        }
    }

    #[test]
    fn corpus_ids_distinct_and_reproducible() {
        let cond = SimCondition::new(Dimension::Participation, Variant::Balanced);
        let a = generate_corpus(&cond, 50, 3).unwrap();
        assert_eq!(a.len(), 50);
        let ids: HashSet<&str> = a.iter().map(|c| c.id()).collect();
        assert_eq!(ids.len(), 50);
        assert_eq!(a, generate_corpus(&cond, 50, 3).unwrap());
    }

    #[test]
    fn invalid_conditions() {
        assert!("sideways".parse::<Dimension>().is_err());
        assert!("tilted".parse::<Variant>().is_err());
        let c = SimCondition::new(Dimension::Affect, Variant::Balanced).with_length(50);
        assert!(generate_conversation(&c, 1).is_err());
        let mut c = SimCondition::new(Dimension::Affect, Variant::Balanced);
        c.team_size = 4;
        assert!(generate_corpus(&c, 2, 1).is_err());
        assert!(generate_corpus(&SimCondition::new(Dimension::Affect, Variant::Balanced), 0, 1).is_err());
        let fixed = SimCondition::new(Dimension::Affect, Variant::Balanced).with_length(85);
        assert_eq!(generate_conversation(&fixed, 1).unwrap().len(), 85);
    }
}
