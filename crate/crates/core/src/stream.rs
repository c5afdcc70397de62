//! Source token streams, transcripts, contexts and engine configuration.
//!
//! Transcripts are stored as JSON lines. The first line is a header naming
//! the language pair and, optionally, a reference translation:
//!
//! ```text
//! {"src":"ja","tgt":"en","ref":["Yesterday",",","I"]}
//! {"i":0,"tok":"私は","t_ms":0}
//! {"i":1,"tok":"昨日","t_ms":350,"final":true}
//! ```
//!
//! Tokens are supplied pre-segmented; nothing here splits raw text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Token;

/// One timestamped source token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenEvent {
    pub index: usize,
    pub surface: Token,
    pub t_ms: u64,
    pub is_final: bool,
}

impl TokenEvent {
    pub fn new(index: usize, surface: &str, t_ms: u64, is_final: bool) -> Self {
        Self {
            index,
            surface: Token::from(surface),
            t_ms,
            is_final,
        }
    }
}

/// A single utterance as delivered by the (simulated) transcription stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub source_lang: String,
    pub target_lang: String,
    pub events: Vec<TokenEvent>,
    pub reference: Option<Vec<Token>>,
}

/// Pre-loaded context handed to the predictor before the utterance starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDoc {
    pub id: String,
    #[serde(default)]
    pub body: Vec<Token>,
}

impl ContextDoc {
    pub fn new(id: impl Into<String>, body: Vec<Token>) -> Self {
        Self {
            id: id.into(),
            body,
        }
    }
}

impl Default for ContextDoc {
    fn default() -> Self {
        Self::new("default", Vec::new())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StreamError {
    #[error("line {0}: malformed record")]
    MalformedRecord(usize),
    #[error("line {0}: timestamp decreases")]
    NonMonotonicTime(usize),
    #[error("transcript has no final event")]
    MissingFinalMarker,
    #[error("line {0}: token index out of sequence")]
    IndexGap(usize),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    src: String,
    tgt: String,
    #[serde(rename = "ref")]
    reference: Option<Vec<Token>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    i: usize,
    tok: Token,
    t_ms: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    r#final: bool,
}

/// Parses a JSON-lines transcript and checks every event invariant.
///
/// Line numbers in errors are 1-based and count the header. Blank lines are
/// ignored.
pub fn parse_transcript(text: &str) -> Result<Transcript, StreamError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (header_line, header) = lines.next().ok_or(StreamError::MissingFinalMarker)?;
    let header: Header =
        serde_json::from_str(header).map_err(|_| StreamError::MalformedRecord(header_line))?;
    if header.src.trim().is_empty() || header.tgt.trim().is_empty() {
        return Err(StreamError::MalformedRecord(header_line));
    }

    let mut events: Vec<TokenEvent> = Vec::new();
    let mut seen_final = false;
    for (line_no, line) in lines {
        let rec: Record =
            serde_json::from_str(line).map_err(|_| StreamError::MalformedRecord(line_no))?;
        if seen_final || rec.tok.is_empty() {
            return Err(StreamError::MalformedRecord(line_no));
        }
        if rec.i != events.len() {
            return Err(StreamError::IndexGap(line_no));
        }
        if let Some(prev) = events.last() {
            if rec.t_ms < prev.t_ms {
                return Err(StreamError::NonMonotonicTime(line_no));
            }
        }
        seen_final = rec.r#final;
        events.push(TokenEvent {
            index: rec.i,
            surface: rec.tok,
            t_ms: rec.t_ms,
            is_final: rec.r#final,
        });
    }
    if !seen_final {
        return Err(StreamError::MissingFinalMarker);
    }
    Ok(Transcript {
        source_lang: header.src,
        target_lang: header.tgt,
        events,
        reference: header.reference,
    })
}

impl Transcript {
    /// Renders the transcript in the same JSON-lines form `parse_transcript`
    /// accepts.
    pub fn to_jsonl(&self) -> String {
        let mut header = serde_json::Map::new();
        header.insert("src".into(), self.source_lang.clone().into());
        header.insert("tgt".into(), self.target_lang.clone().into());
        if let Some(r) = &self.reference {
            header.insert("ref".into(), serde_json::to_value(r).expect("tokens serialize"));
        }
        let mut out = serde_json::Value::Object(header).to_string();
        out.push('\n');
        for ev in &self.events {
            let rec = Record {
                i: ev.index,
                tok: ev.surface.clone(),
                t_ms: ev.t_ms,
                r#final: ev.is_final,
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn source_tokens(&self) -> Vec<Token> {
        self.events.iter().map(|e| e.surface.clone()).collect()
    }
}

/// Engine knobs. Field names double as the JSON config file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Max named children per expansion.
    pub k: usize,
    /// Max tree depth in expansion rounds.
    pub d: usize,
    /// Prune threshold on path probability.
    pub epsilon: f64,
    /// Commit threshold on cumulative hypothesis mass.
    pub tau: f64,
    /// Max buffered events before a catch-up translation.
    pub buffer_limit: usize,
    /// Perplexity ratio that counts as a context shift.
    pub drift_ratio: f64,
    /// Tokens per drift check.
    pub drift_window: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k: 4,
            d: 3,
            epsilon: 0.05,
            tau: 0.9,
            buffer_limit: 8,
            drift_ratio: 2.0,
            drift_window: 16,
        }
    }
}

/// A single broken config invariant, rendered as the violated relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigViolation(pub &'static str);

impl std::fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config violates {}", self.0)
    }
}

impl std::error::Error for ConfigViolation {}

/// Lists every violated invariant; an empty list means the config is usable.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn validate_config(cfg: &EngineConfig) -> Result<(), Vec<ConfigViolation>> {
    let mut v = Vec::new();
    // Written as negated comparisons so NaN fails them.
    if !(cfg.epsilon > 0.0) {
        v.push(ConfigViolation("0 < epsilon"));
    }
    if !(cfg.epsilon < cfg.tau) {
        v.push(ConfigViolation("epsilon < tau"));
    }
    if !(cfg.tau <= 1.0) {
        v.push(ConfigViolation("tau ≤ 1"));
    }
    if cfg.k < 1 {
        v.push(ConfigViolation("k ≥ 1"));
    }
    if cfg.d < 1 {
        v.push(ConfigViolation("d ≥ 1"));
    }
    if cfg.buffer_limit < 1 {
        v.push(ConfigViolation("buffer_limit ≥ 1"));
    }
    if !(cfg.drift_ratio > 1.0) {
        v.push(ConfigViolation("drift_ratio > 1"));
    }
    if cfg.drift_window < 1 {
        v.push(ConfigViolation("drift_window ≥ 1"));
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}
