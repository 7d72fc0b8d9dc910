//! Conversation data model, transcript ingestion, and tokenization.
//!
//! A transcript file holds one utterance per record. Records are grouped by
//! `conversation_id` (in order of first appearance) and ordered within each
//! conversation by `turn_index` when every record carries one, otherwise by
//! file order. Each record is one turn; consecutive messages by the same
//! speaker are not merged.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Human,
    Ai,
    #[default]
    Unknown,
}

impl Role {
    /// Group used when splitting results by role. Unknown speakers count as human.
    pub fn reporting_group(self) -> Role {
        match self {
            Role::Ai => Role::Ai,
            Role::Human | Role::Unknown => Role::Human,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Human => "human",
            Role::Ai => "ai",
            Role::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub index: usize,
    pub speaker_id: String,
    pub role: Role,
    pub text: String,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    conversation_id: String,
    condition_label: Option<String>,
    utterances: Vec<Utterance>,
}

/// Speaker, role and text for one turn, used to build a [`Conversation`].
#[derive(Debug, Clone)]
pub struct Turn {
    pub speaker_id: String,
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn new(speaker_id: impl Into<String>, text: impl Into<String>) -> Self {
        Turn {
            speaker_id: speaker_id.into(),
            role: Role::Unknown,
            text: text.into(),
        }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }
}

impl Conversation {
    /// Builds a conversation, assigning contiguous indices and token counts.
    pub fn new(
        conversation_id: impl Into<String>,
        condition_label: Option<String>,
        turns: impl IntoIterator<Item = Turn>,
    ) -> Result<Self> {
        let conversation_id = conversation_id.into();
        let utterances: Vec<Utterance> = turns
            .into_iter()
            .enumerate()
            .map(|(index, t)| Utterance {
                index,
                tokens: token_count(&t.text),
                speaker_id: t.speaker_id,
                role: t.role,
                text: t.text,
            })
            .collect();
        if utterances.is_empty() {
            return Err(Error::Conversation {
                conversation_id,
                message: "conversation has no utterances".into(),
            });
        }
        Ok(Conversation {
            conversation_id,
            condition_label,
            utterances,
        })
    }

    /// Shorthand for tests and examples: `(speaker, text)` pairs.
    pub fn from_pairs<S: AsRef<str>, T: AsRef<str>>(
        conversation_id: &str,
        pairs: &[(S, T)],
    ) -> Result<Self> {
        Self::new(
            conversation_id,
            None,
            pairs
                .iter()
                .map(|(s, t)| Turn::new(s.as_ref(), t.as_ref())),
        )
    }

    pub fn id(&self) -> &str {
        &self.conversation_id
    }

    pub fn condition_label(&self) -> Option<&str> {
        self.condition_label.as_deref()
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    /// Always false; a conversation holds at least one utterance.
    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn speaker(&self, i: usize) -> &str {
        &self.utterances[i].speaker_id
    }

    /// Distinct speakers in order of first appearance.
    pub fn speakers(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.utterances
            .iter()
            .filter(|u| seen.insert(u.speaker_id.as_str()))
            .map(|u| u.speaker_id.as_str())
            .collect()
    }

    pub fn n_speakers(&self) -> usize {
        self.speakers().len()
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            })
        }
    }
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

/// Splits text into lowercased word tokens.
///
/// A token is a maximal run of letters, digits and apostrophes that contains
/// at least one letter or digit; everything else separates tokens.
///
/// ```
/// use inclusion_analytics::transcript::tokenize;
/// assert_eq!(tokenize("Thanks, you're right!"), ["thanks", "you're", "right"]);
/// assert_eq!(tokenize("100% agree :) idk"), ["100", "agree", "idk"]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    // Lowercase first: case mapping can emit combining marks, which must
    // split the same way on every pass.
    text.to_lowercase()
        .split(|c: char| !is_token_char(c))
        .filter(|run| run.chars().any(char::is_alphanumeric))
        .map(str::to_string)
        .collect()
}

pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptFormat {
    Jsonl,
    Csv,
}

impl TranscriptFormat {
    /// Guesses the format from a file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TranscriptFormat::Csv,
            _ => TranscriptFormat::Jsonl,
        }
    }
}

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub conversation_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_index: Option<u64>,
    pub speaker_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "de_role")]
    pub role: Option<Role>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_label: Option<String>,
}

fn de_role<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Role>, D::Error> {
    let raw: Option<String> = Option::deserialize(d)?;
    match raw.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => match s.to_ascii_lowercase().as_str() {
            "human" => Ok(Some(Role::Human)),
            "ai" => Ok(Some(Role::Ai)),
            "unknown" => Ok(Some(Role::Unknown)),
            other => Err(serde::de::Error::custom(format!(
                "unknown role {other:?} (expected \"human\" or \"ai\")"
            ))),
        },
    }
}

pub fn load_transcripts(path: impl AsRef<Path>, format: TranscriptFormat) -> Result<Vec<Conversation>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_transcripts(BufReader::new(file), format)
}

pub fn read_transcripts<R: Read>(reader: R, format: TranscriptFormat) -> Result<Vec<Conversation>> {
    let records = match format {
        TranscriptFormat::Jsonl => read_jsonl_records(BufReader::new(reader))?,
        TranscriptFormat::Csv => read_csv_records(reader)?,
    };
    group_records(records)
}

fn read_jsonl_records<R: BufRead>(reader: R) -> Result<Vec<(u64, TranscriptRecord)>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n as u64 + 1;
        let line = line.map_err(|e| Error::Record {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TranscriptRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, rec));
    }
    Ok(out)
}

fn read_csv_records<R: Read>(reader: R) -> Result<Vec<(u64, TranscriptRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Record {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Record {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let rec: TranscriptRecord = row.deserialize(Some(&headers)).map_err(|e| Error::Record {
            line,
            message: e.to_string(),
        })?;
        out.push((line, rec));
    }
    Ok(out)
}

fn group_records(records: Vec<(u64, TranscriptRecord)>) -> Result<Vec<Conversation>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(u64, TranscriptRecord)>> = HashMap::new();
    for (line, rec) in records {
        if rec.conversation_id.is_empty() {
            return Err(Error::Record {
                line,
                message: "empty conversation_id".into(),
            });
        }
        if !groups.contains_key(&rec.conversation_id) {
            order.push(rec.conversation_id.clone());
        }
        groups.entry(rec.conversation_id.clone()).or_default().push((line, rec));
    }

    order
        .into_iter()
        .map(|id| {
            let mut recs = groups.remove(&id).expect("grouped id");
            let with_index = recs.iter().filter(|(_, r)| r.turn_index.is_some()).count();
            if with_index != 0 && with_index != recs.len() {
                return Err(Error::Conversation {
                    conversation_id: id,
                    message: "turn_index present on some records but not others".into(),
                });
            }
            if with_index > 0 {
                let mut seen = HashSet::new();
                for (_, r) in &recs {
                    let t = r.turn_index.expect("checked above");
                    if !seen.insert(t) {
                        return Err(Error::DuplicateTurn {
                            conversation_id: id,
                            turn_index: t,
                        });
                    }
                }
                recs.sort_by_key(|(_, r)| r.turn_index);
            }

            let mut label: Option<String> = None;
            for (line, r) in &recs {
                match (&label, &r.condition_label) {
                    (None, Some(l)) => label = Some(l.clone()),
                    (Some(a), Some(b)) if a != b => {
                        return Err(Error::Record {
                            line: *line,
                            message: format!(
                                "conflicting condition_label {b:?} (conversation already labeled {a:?})"
                            ),
                        })
                    }
                    _ => {}
                }
            }

            Conversation::new(
                id,
                label,
                recs.into_iter().map(|(_, r)| Turn {
                    speaker_id: r.speaker_id,
                    role: r.role.unwrap_or_default(),
                    text: r.text,
                }),
            )
        })
        .collect()
}

/// Records that reproduce `conversations` exactly when read back.
pub fn to_records(conversations: &[Conversation]) -> Vec<TranscriptRecord> {
    conversations
        .iter()
        .flat_map(|c| {
            c.utterances.iter().map(move |u| TranscriptRecord {
                conversation_id: c.conversation_id.clone(),
                turn_index: Some(u.index as u64),
                speaker_id: u.speaker_id.clone(),
                role: match u.role {
                    Role::Unknown => None,
                    r => Some(r),
                },
                text: u.text.clone(),
                condition_label: c.condition_label.clone(),
            })
        })
        .collect()
}

pub fn write_transcripts<W: Write>(
    writer: W,
    conversations: &[Conversation],
    format: TranscriptFormat,
) -> Result<()> {
    let records = to_records(conversations);
    match format {
        TranscriptFormat::Jsonl => {
            let mut w = std::io::BufWriter::new(writer);
            for r in &records {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n").map_err(|e| Error::io("<transcript output>", e))?;
            }
            w.flush().map_err(|e| Error::io("<transcript output>", e))?;
        }
        TranscriptFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            w.write_record(["conversation_id", "turn_index", "speaker_id", "role", "text", "condition_label"])
                .map_err(csv_err)?;
            for r in &records {
                w.write_record([
                    r.conversation_id.as_str(),
                    &r.turn_index.map(|t| t.to_string()).unwrap_or_default(),
                    r.speaker_id.as_str(),
                    r.role.map(Role::as_str).unwrap_or(""),
                    r.text.as_str(),
                    r.condition_label.as_deref().unwrap_or(""),
                ])
                .map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io("<transcript output>", e))?;
        }
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Report(format!("csv: {e}"))
}

pub fn save_transcripts(path: impl AsRef<Path>, conversations: &[Conversation], format: TranscriptFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_transcripts(file, conversations, format)
}
