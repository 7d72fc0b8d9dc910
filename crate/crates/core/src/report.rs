//! The analysis report: schema, JSON and CSV serialization, and group
//! comparisons over reports.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::ProviderKind;
use crate::epistemic::EpistemicConfig;
use crate::error::{Error, Result};
use crate::stats::{mann_whitney_u, summarize_defined, GroupSummary, MwuResult};
use crate::transcript::Role;

pub const SCHEMA_VERSION: &str = "1.0";
const SCHEMA_MAJOR: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: String,
    pub metadata: RunMetadata,
    pub conversations: Vec<ConversationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub tool_version: String,
    /// RFC 3339 UTC; the only field that differs between identical runs.
    pub generated_at: String,
    pub seed: u64,
    pub config: EpistemicConfig,
    pub lexicons: LexiconsInfo,
    pub provider: ProviderInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconsInfo {
    pub politeness: LexiconInfo,
    pub endorsement: LexiconInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconInfo {
    /// `builtin` or the path the lexicon was loaded from.
    pub source: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub kind: ProviderKind,
    pub config: String,
    pub config_hash: String,
    pub dimension: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationReport {
    pub conversation_id: String,
    pub condition_label: Option<String>,
    /// Set for conversations produced by the built-in template generator.
    pub content_note: Option<String>,
    pub n_speakers: usize,
    pub n_utterances: usize,
    /// Absent with fewer than two speakers or no words at all.
    pub ip_turns: Option<f64>,
    pub ip_words: Option<f64>,
    pub speakers: Vec<SpeakerReport>,
    pub utterances: Vec<UtteranceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerReport {
    pub speaker_id: String,
    pub role: Role,
    pub turns: u64,
    pub words: u64,
    pub politeness_uptake: MetricSummary,
    pub semantic_uptake: MetricSummary,
    pub adjusted_uptake: MetricSummary,
    pub endorsement_uptake: MetricSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Utterances by the speaker, defined or not.
    pub n_total: usize,
    pub n_defined: usize,
    pub undefined_fraction: f64,
    pub summary: Option<GroupSummary>,
}

impl MetricSummary {
    pub fn from_values(values: &[Option<f64>]) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let n_total = values.len();
        MetricSummary {
            n_total,
            n_defined: defined.len(),
            undefined_fraction: if n_total == 0 {
                0.0
            } else {
                (n_total - defined.len()) as f64 / n_total as f64
            },
            summary: summarize_defined(&defined).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceReport {
    pub index: usize,
    pub speaker_id: String,
    pub role: Role,
    pub tokens: usize,
    pub politeness_uptake: Option<f64>,
    pub politeness_defined: bool,
    pub politeness_window: usize,
    pub semantic_uptake: Option<f64>,
    pub null_mean: Option<f64>,
    pub adjusted_uptake: Option<f64>,
    pub semantic_defined: bool,
    pub semantic_window: usize,
    pub null_samples_used: usize,
    pub endorsement_uptake: f64,
    pub endorsement_distances: Vec<usize>,
    pub is_endorsement: bool,
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a report, rejecting schema major versions other than the current one.
    pub fn from_json(json: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(json)?;
        let version = value
            .get("schema_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Report("missing schema_version".into()))?;
        let major: u64 = version
            .split('.')
            .next()
            .and_then(|m| m.parse().ok())
            .ok_or_else(|| Error::Report(format!("malformed schema_version {version:?}")))?;
        if major != SCHEMA_MAJOR {
            return Err(Error::Report(format!(
                "unsupported report schema version {version} (this tool reads {SCHEMA_MAJOR}.x)"
            )));
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw).map_err(|e| match e {
            Error::Report(m) => Error::Report(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn write_utterance_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.conversations {
            for u in &c.utterances {
                w.serialize(UtteranceRow {
                    conversation_id: &c.conversation_id,
                    condition_label: c.condition_label.as_deref(),
                    index: u.index,
                    speaker_id: &u.speaker_id,
                    role: u.role.as_str(),
                    tokens: u.tokens,
                    politeness_uptake: u.politeness_uptake,
                    politeness_defined: u.politeness_defined,
                    semantic_uptake: u.semantic_uptake,
                    null_mean: u.null_mean,
                    adjusted_uptake: u.adjusted_uptake,
                    semantic_defined: u.semantic_defined,
                    endorsement_uptake: u.endorsement_uptake,
                    is_endorsement: u.is_endorsement,
                })
                .map_err(csv_error)?;
            }
        }
        w.flush().map_err(|e| Error::Report(e.to_string()))
    }

    pub fn write_conversation_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.conversations {
            w.serialize(ConversationRow {
                conversation_id: &c.conversation_id,
                condition_label: c.condition_label.as_deref(),
                n_speakers: c.n_speakers,
                n_utterances: c.n_utterances,
                ip_turns: c.ip_turns,
                ip_words: c.ip_words,
            })
            .map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::Report(e.to_string()))
    }

    /// Writes `<stem>.utterances.csv` and `<stem>.conversations.csv` next to
    /// `out` and returns both paths.
    pub fn save_csv(&self, out: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let out = out.as_ref();
        let stem = out.with_extension("");
        let utt = PathBuf::from(format!("{}.utterances.csv", stem.display()));
        let conv = PathBuf::from(format!("{}.conversations.csv", stem.display()));
        let f = std::fs::File::create(&utt).map_err(|e| Error::io(&utt, e))?;
        self.write_utterance_csv(f)?;
        let f = std::fs::File::create(&conv).map_err(|e| Error::io(&conv, e))?;
        self.write_conversation_csv(f)?;
        Ok((utt, conv))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Report(format!("CSV export failed: {e}"))
}

#[derive(Serialize)]
struct UtteranceRow<'a> {
    conversation_id: &'a str,
    condition_label: Option<&'a str>,
    index: usize,
    speaker_id: &'a str,
    role: &'a str,
    tokens: usize,
    politeness_uptake: Option<f64>,
    politeness_defined: bool,
    semantic_uptake: Option<f64>,
    null_mean: Option<f64>,
    adjusted_uptake: Option<f64>,
    semantic_defined: bool,
    endorsement_uptake: f64,
    is_endorsement: bool,
}

#[derive(Serialize)]
struct ConversationRow<'a> {
    conversation_id: &'a str,
    condition_label: Option<&'a str>,
    n_speakers: usize,
    n_utterances: usize,
    ip_turns: Option<f64>,
    ip_words: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    IpTurns,
    IpWords,
    PolitenessUptake,
    SemanticUptake,
    AdjustedUptake,
    EndorsementUptake,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::IpTurns,
        Metric::IpWords,
        Metric::PolitenessUptake,
        Metric::SemanticUptake,
        Metric::AdjustedUptake,
        Metric::EndorsementUptake,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::IpTurns => "ip_turns",
            Metric::IpWords => "ip_words",
            Metric::PolitenessUptake => "politeness_uptake",
            Metric::SemanticUptake => "semantic_uptake",
            Metric::AdjustedUptake => "adjusted_uptake",
            Metric::EndorsementUptake => "endorsement_uptake",
        }
    }

    fn is_conversation_level(self) -> bool {
        matches!(self, Metric::IpTurns | Metric::IpWords)
    }

    fn utterance_value(self, u: &UtteranceReport) -> Option<f64> {
        match self {
            Metric::IpTurns | Metric::IpWords => None,
            Metric::PolitenessUptake => u.politeness_uptake,
            Metric::SemanticUptake => u.semantic_uptake,
            Metric::AdjustedUptake => u.adjusted_uptake,
            Metric::EndorsementUptake => Some(u.endorsement_uptake),
        }
    }

    /// Conversation value: IP directly, otherwise the mean of defined utterance values.
    fn conversation_value(self, c: &ConversationReport) -> Option<f64> {
        match self {
            Metric::IpTurns => c.ip_turns,
            Metric::IpWords => c.ip_words,
            _ => {
                let v: Vec<f64> = c.utterances.iter().filter_map(|u| self.utterance_value(u)).collect();
                summarize_defined(&v).ok().map(|s| s.mean)
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Metric::ALL.iter().map(|m| m.as_str()).collect();
                Error::Config(format!("unknown metric {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareLevel {
    /// One value per conversation; two reports.
    Conversation,
    /// Pooled utterance values; two reports.
    Utterance,
    /// Utterance values of one report split into human and ai speakers.
    Role,
}

impl fmt::Display for CompareLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompareLevel::Conversation => "conversation",
            CompareLevel::Utterance => "utterance",
            CompareLevel::Role => "role",
        })
    }
}

impl FromStr for CompareLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conversation" => Ok(CompareLevel::Conversation),
            "utterance" => Ok(CompareLevel::Utterance),
            "role" | "speaker-role" => Ok(CompareLevel::Role),
            other => Err(Error::Config(format!(
                "unknown level {other:?} (expected conversation, utterance or role)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonGroup {
    pub label: String,
    pub values: Vec<f64>,
    pub summary: GroupSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: Metric,
    pub level: CompareLevel,
    pub groups: [ComparisonGroup; 2],
    pub mwu: MwuResult,
}

fn report_label(report: &AnalysisReport, fallback: &str) -> String {
    let mut labels = report.conversations.iter().map(|c| c.condition_label.as_deref());
    match labels.next() {
        Some(Some(first)) if labels.all(|l| l == Some(first)) => first.to_string(),
        _ => fallback.to_string(),
    }
}

fn group(label: String, values: Vec<f64>, metric: Metric, level: CompareLevel) -> Result<ComparisonGroup> {
    let summary = summarize_defined(&values)
        .map_err(|_| Error::Report(format!("group {label:?} has no defined {metric} values at {level} level")))?;
    Ok(ComparisonGroup { label, values, summary })
}

/// Compares `metric` between two groups with a two-sided Mann-Whitney U test.
pub fn compare(a: &AnalysisReport, b: Option<&AnalysisReport>, metric: Metric, level: CompareLevel) -> Result<Comparison> {
    if level != CompareLevel::Conversation && metric.is_conversation_level() {
        return Err(Error::Report(format!("{metric} exists only at conversation level")));
    }
    let [ga, gb] = match level {
        CompareLevel::Conversation | CompareLevel::Utterance => {
            let b = b.ok_or_else(|| Error::Report(format!("{level}-level comparison needs two reports")))?;
            let values = |r: &AnalysisReport| -> Vec<f64> {
                if level == CompareLevel::Conversation {
                    r.conversations.iter().filter_map(|c| metric.conversation_value(c)).collect()
                } else {
                    r.conversations
                        .iter()
                        .flat_map(|c| c.utterances.iter().filter_map(|u| metric.utterance_value(u)))
                        .collect()
                }
            };
            let (mut la, mut lb) = (report_label(a, "A"), report_label(b, "B"));
            if la == lb {
                la = format!("{la} (A)");
                lb = format!("{lb} (B)");
            }
            [group(la, values(a), metric, level)?, group(lb, values(b), metric, level)?]
        }
        CompareLevel::Role => {
            if b.is_some() {
                return Err(Error::Report("role-level comparison reads a single report".into()));
            }
            let by_role = |role: Role| -> Vec<f64> {
                a.conversations
                    .iter()
                    .flat_map(|c| c.utterances.iter())
                    .filter(|u| u.role.reporting_group() == role)
                    .filter_map(|u| metric.utterance_value(u))
                    .collect()
            };
            [
                group("human".into(), by_role(Role::Human), metric, level)?,
                group("ai".into(), by_role(Role::Ai), metric, level)?,
            ]
        }
    };
    let mwu = mann_whitney_u(&ga.values, &gb.values)?;
    Ok(Comparison {
        metric,
        level,
        groups: [ga, gb],
        mwu,
    })
}

/// `p<.005` below 0.005, otherwise two decimals without the leading zero.
pub fn format_p(p: f64) -> String {
    if p < 0.005 {
        "p<.005".to_string()
    } else {
        let s = format!("{p:.2}");
        format!("p={}", s.strip_prefix('0').unwrap_or(&s))
    }
}

pub fn format_mean_sd(s: &GroupSummary) -> String {
    match s.sd {
        Some(sd) => format!("{:.2} ({:.2})", s.mean, sd),
        None => format!("{:.2} (n/a)", s.mean),
    }
}

impl Comparison {
    /// The comparison as a small text table: mean (sd) per group, then U and p.
    pub fn render(&self) -> String {
        let width = self.groups.iter().map(|g| g.label.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{} ({} level)\n", self.metric, self.level);
        out.push_str(&format!("{:<width$}  {:>5}  mean (sd)\n", "group", "n"));
        for g in &self.groups {
            out.push_str(&format!(
                "{:<width$}  {:>5}  {}\n",
                g.label,
                g.summary.n_defined,
                format_mean_sd(&g.summary)
            ));
        }
        out.push_str(&format!(
            "MWU U,p: {} ({}), {} method\n",
            self.mwu.u_statistic,
            format_p(self.mwu.p_value),
            match self.mwu.method {
                crate::stats::MwuMethod::Exact => "exact",
                crate::stats::MwuMethod::NormalApprox => "normal-approximation",
            }
        ));
        out
    }
}
