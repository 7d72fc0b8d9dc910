//! Named regular-expression categories for politeness and endorsement markers.
//!
//! Lexicons are JSON data files:
//!
//! ```json
//! {"categories": [{"name": "please", "anchored": false, "patterns": ["\\b(?:please|pls)\\b"]}]}
//! ```
//!
//! Patterns are compiled case-insensitively and run against the lowercased
//! raw utterance text. `\b` is rewritten so that word boundaries fall between
//! token characters (letters, digits, apostrophes) and everything else, the
//! same rule the tokenizer uses. Within a category, matches are counted
//! leftmost-first without overlap; categories are counted independently.

use std::collections::HashSet;
use std::path::Path;

use fancy_regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_POLITENESS: &str = include_str!("../lexicons/politeness.json");
pub const DEFAULT_ENDORSEMENT: &str = include_str!("../lexicons/endorsement.json");

/// Politeness categories in vector dimension order.
pub const POLITENESS_CATEGORIES: [&str; 11] = [
    "gratitude",
    "apology",
    "greeting",
    "deference",
    "please",
    "indirect",
    "counterfactual_modal",
    "indicative_modal",
    "hedging",
    "positive_lexicon",
    "first_person_start",
];

pub const ENDORSEMENT_CATEGORY: &str = "endorsement";

const TOKEN_CLASS: &str = r"[\p{Alphabetic}\p{N}'\u{2019}]";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LexiconFile {
    pub categories: Vec<CategorySpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    #[serde(default)]
    pub anchored: bool,
    pub patterns: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LexiconCategory {
    pub name: String,
    pub anchored: bool,
    pub patterns: Vec<String>,
    matchers: Vec<Regex>,
    /// The category's patterns with boundary assertions removed. It matches a
    /// superset of the real matchers and runs without backtracking, so a miss
    /// skips the expensive search.
    prefilter: Option<Regex>,
}

#[derive(Debug, Clone)]
pub struct CompiledLexicon {
    categories: Vec<LexiconCategory>,
    digest: String,
}

/// Rewrites `\b` and `\B` outside character classes into lookarounds over
/// token characters.
pub fn translate_pattern(pattern: &str) -> String {
    let boundary = format!("(?:(?<={t})(?!{t})|(?<!{t})(?={t}))", t = TOKEN_CLASS);
    let not_boundary = format!("(?:(?<={t})(?={t})|(?<!{t})(?!{t}))", t = TOKEN_CLASS);
    rewrite_boundaries(pattern, &boundary, &not_boundary)
}

fn rewrite_boundaries(pattern: &str, boundary: &str, not_boundary: &str) -> String {

    let mut out = String::with_capacity(pattern.len() * 2);
    let mut chars = pattern.chars().peekable();
    let mut class_depth = 0usize;
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some('b') if class_depth == 0 => out.push_str(boundary),
                Some('B') if class_depth == 0 => out.push_str(not_boundary),
                // Escaped punctuation such as `\%` is a plain literal.
                Some(p) if class_depth == 0 && p.is_ascii_punctuation() && !is_meta(p) => out.push(p),
                Some(n) => {
                    out.push('\\');
                    out.push(n);
                }
                None => out.push('\\'),
            },
            '[' => {
                class_depth += 1;
                out.push(c);
                // A leading `]` (after optional `^`) is literal.
                if chars.peek() == Some(&'^') {
                    out.push(chars.next().unwrap());
                }
                if chars.peek() == Some(&']') {
                    out.push(chars.next().unwrap());
                }
            }
            ']' if class_depth > 0 => {
                class_depth -= 1;
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

fn is_meta(c: char) -> bool {
    matches!(
        c,
        '\\' | '.' | '+' | '*' | '?' | '(' | ')' | '|' | '[' | ']' | '{' | '}' | '^' | '$' | '#' | '&' | '-' | '~'
    )
}

/// Text as seen by the matchers: lowercased, typographic apostrophes folded to `'`.
pub fn match_text(text: &str) -> String {
    text.to_lowercase().replace('\u{2019}', "'")
}

impl CompiledLexicon {
    pub fn compile(source: &str) -> Result<Self> {
        let file: LexiconFile =
            serde_json::from_str(source).map_err(|e| Error::LexiconFormat(e.to_string()))?;
        let mut digest = Sha256::new();
        digest.update(source.as_bytes());
        Self::from_specs(file.categories, hex::encode(digest.finalize()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::compile(&source)
    }

    pub fn default_politeness() -> Self {
        Self::compile(DEFAULT_POLITENESS).expect("shipped politeness lexicon compiles")
    }

    pub fn default_endorsement() -> Self {
        Self::compile(DEFAULT_ENDORSEMENT).expect("shipped endorsement lexicon compiles")
    }

    fn from_specs(specs: Vec<CategorySpec>, digest: String) -> Result<Self> {
        let mut names = HashSet::new();
        let mut categories = Vec::with_capacity(specs.len());
        for spec in specs {
            if !names.insert(spec.name.clone()) {
                return Err(Error::LexiconFormat(format!("duplicate category name {:?}", spec.name)));
            }
            if spec.patterns.is_empty() {
                return Err(Error::LexiconFormat(format!("category {:?} has no patterns", spec.name)));
            }
            let matchers = spec
                .patterns
                .iter()
                .enumerate()
                .map(|(index, p)| {
                    Regex::new(&format!("(?i){}", translate_pattern(p))).map_err(|e| Error::Pattern {
                        category: spec.name.clone(),
                        index,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let relaxed: Vec<String> = spec
                .patterns
                .iter()
                .map(|p| format!("(?:{})", rewrite_boundaries(p, "(?:)", "(?:)")))
                .collect();
            let prefilter = Regex::new(&format!("(?i){}", relaxed.join("|"))).ok();
            categories.push(LexiconCategory {
                name: spec.name,
                anchored: spec.anchored,
                patterns: spec.patterns,
                matchers,
                prefilter,
            });
        }
        Ok(CompiledLexicon { categories, digest })
    }

    pub fn categories(&self) -> &[LexiconCategory] {
        &self.categories
    }

    pub fn category_names(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|c| c.name.as_str())
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.name == name)
    }

    /// SHA-256 of the lexicon source bytes.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Per-category match counts, in category order.
    pub fn count_matches(&self, text: &str) -> Vec<usize> {
        let prepared = match_text(text);
        self.categories.iter().map(|c| c.count(&prepared)).collect()
    }

    pub fn count_category(&self, index: usize, text: &str) -> usize {
        self.categories[index].count(&match_text(text))
    }

    /// Whether any pattern of the category matches.
    pub fn matches_category(&self, index: usize, text: &str) -> bool {
        let category = &self.categories[index];
        let text = match_text(text);
        category.may_match(&text) && category.first_match(&text, 0).is_some()
    }
}

impl LexiconCategory {
    /// Earliest match at or after `pos` across this category's patterns; ties
    /// go to the earlier pattern.
    fn first_match(&self, text: &str, pos: usize) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        for re in &self.matchers {
            // Backtracking limits are only hit by pathological user patterns;
            // such a pattern simply does not match.
            if let Ok(Some(m)) = re.find_from_pos(text, pos) {
                if self.anchored && m.start() != 0 {
                    continue;
                }
                if best.is_none_or(|(s, _)| m.start() < s) {
                    best = Some((m.start(), m.end()));
                }
            }
        }
        best
    }

    fn may_match(&self, text: &str) -> bool {
        self.prefilter.as_ref().is_none_or(|pre| pre.is_match(text).unwrap_or(true))
    }

    fn count(&self, text: &str) -> usize {
        if !self.may_match(text) {
            return 0;
        }
        if self.anchored {
            return usize::from(self.first_match(text, 0).is_some());
        }
        let mut count = 0;
        let mut pos = 0;
        while pos <= text.len() {
            let Some((start, end)) = self.first_match(text, pos) else { break };
            count += 1;
            pos = if end > start {
                end
            } else {
                // Empty match: step one character forward.
                text[end..].chars().next().map_or(text.len() + 1, |c| end + c.len_utf8())
            };
        }
        count
    }
}

/// A lexicon with exactly the eleven politeness categories, reordered into
/// [`POLITENESS_CATEGORIES`] order.
#[derive(Debug, Clone)]
pub struct PolitenessLexicon(CompiledLexicon);

impl PolitenessLexicon {
    pub fn new(mut lexicon: CompiledLexicon) -> Result<Self> {
        let found: HashSet<&str> = lexicon.category_names().collect();
        let wanted: HashSet<&str> = POLITENESS_CATEGORIES.into_iter().collect();
        if found != wanted {
            let mut missing: Vec<_> = wanted.difference(&found).collect();
            let mut extra: Vec<_> = found.difference(&wanted).collect();
            missing.sort();
            extra.sort();
            return Err(Error::LexiconFormat(format!(
                "politeness lexicon must have exactly the 11 politeness categories (missing {missing:?}, unexpected {extra:?})"
            )));
        }
        lexicon.categories.sort_by_key(|c| {
            POLITENESS_CATEGORIES
                .iter()
                .position(|n| *n == c.name)
                .expect("validated above")
        });
        Ok(PolitenessLexicon(lexicon))
    }

    pub fn shipped() -> Self {
        Self::new(CompiledLexicon::default_politeness()).expect("shipped politeness lexicon is complete")
    }

    pub fn lexicon(&self) -> &CompiledLexicon {
        &self.0
    }
}

/// A lexicon containing an `endorsement` category.
#[derive(Debug, Clone)]
pub struct EndorsementLexicon {
    lexicon: CompiledLexicon,
    index: usize,
}

impl EndorsementLexicon {
    pub fn new(lexicon: CompiledLexicon) -> Result<Self> {
        let index = lexicon.category_index(ENDORSEMENT_CATEGORY).ok_or_else(|| {
            Error::LexiconFormat(format!("endorsement lexicon needs a {ENDORSEMENT_CATEGORY:?} category"))
        })?;
        Ok(EndorsementLexicon { lexicon, index })
    }

    pub fn shipped() -> Self {
        Self::new(CompiledLexicon::default_endorsement()).expect("shipped endorsement lexicon is complete")
    }

    pub fn lexicon(&self) -> &CompiledLexicon {
        &self.lexicon
    }

    /// The endorsement indicator: true iff any endorsement pattern matches.
    pub fn is_endorsement(&self, text: &str) -> bool {
        self.lexicon.matches_category(self.index, text)
    }
}
