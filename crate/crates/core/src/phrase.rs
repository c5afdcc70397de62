//! Longest-match phrase-table translation.
//!
//! File format, one entry per line, UTF-8:
//!
//! ```text
//! 買い物 に 行った<TAB>went shopping
//! 骨 を 折る<TAB>go out of one's way<TAB>atomic
//! ```
//!
//! Tokens are space-separated inside each field. The optional third field
//! `atomic` marks an idiom whose target side must be emitted in one piece.
//! Blank lines and lines starting with `#` are skipped.

use std::collections::HashMap;

use thiserror::Error;

use crate::Token;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    target: Vec<Token>,
    atomic: bool,
}

#[derive(Debug, Clone, Default)]
pub struct PhraseTable {
    entries: HashMap<Vec<Token>, Entry>,
    max_source_len: usize,
    idioms: HashMap<Vec<Token>, ()>,
    max_idiom_len: usize,
}

/// Target-token range `[start, end)` covered by an atomic entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct IdiomSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PhraseError {
    #[error("line {0}: empty source phrase")]
    EmptySource(usize),
    #[error("line {0}: expected `source<TAB>target[<TAB>atomic]`")]
    Malformed(usize),
    #[error("line {0}: duplicate source phrase")]
    DuplicateSource(usize),
}

impl PhraseTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry; an empty source key is rejected.
    pub fn insert(&mut self, source: Vec<Token>, target: Vec<Token>, atomic: bool) -> bool {
        if source.is_empty() {
            return false;
        }
        self.max_source_len = self.max_source_len.max(source.len());
        if atomic && !target.is_empty() {
            self.max_idiom_len = self.max_idiom_len.max(target.len());
            self.idioms.insert(target.clone(), ());
        }
        self.entries.insert(source, Entry { target, atomic });
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses the TSV format, stopping at the first problem.
    pub fn parse(text: &str) -> Result<Self, PhraseError> {
        let mut table = Self::new();
        for line in parse_lines(text) {
            let (_, source, target, atomic) = line?;
            table.insert(source, target, atomic);
        }
        Ok(table)
    }

    /// Every problem in a phrase-table file, in line order.
    pub fn lint(text: &str) -> Vec<PhraseError> {
        parse_lines(text).filter_map(Result::err).collect()
    }

    /// Greedy leftmost, longest-match translation. Unknown tokens pass
    /// through unchanged.
    pub fn translate(&self, source: &[Token]) -> Vec<Token> {
        let mut out = Vec::with_capacity(source.len());
        self.translate_into(source, &mut out);
        out
    }

    /// Same as [`translate`](Self::translate), appending to `out`, and
    /// returning the source positions at which each applied segment started.
    pub fn translate_into(&self, source: &[Token], out: &mut Vec<Token>) -> Vec<usize> {
        let mut starts = Vec::new();
        let mut i = 0;
        while i < source.len() {
            starts.push(i);
            match self.longest_match(source, i) {
                Some((len, entry)) => {
                    out.extend(entry.target.iter().cloned());
                    i += len;
                }
                None => {
                    out.push(source[i].clone());
                    i += 1;
                }
            }
        }
        starts
    }

    /// Length of the longest source key matching at `pos`, if any.
    pub fn match_len(&self, source: &[Token], pos: usize) -> Option<usize> {
        self.longest_match(source, pos).map(|(len, _)| len)
    }

    pub fn max_source_len(&self) -> usize {
        self.max_source_len
    }

    fn longest_match(&self, source: &[Token], pos: usize) -> Option<(usize, &Entry)> {
        let max = self.max_source_len.min(source.len() - pos);
        (1..=max)
            .rev()
            .find_map(|len| self.entries.get(&source[pos..pos + len]).map(|e| (len, e)))
    }

    /// Leftmost-longest, non-overlapping occurrences of atomic targets.
    pub fn idiom_spans(&self, target: &[Token]) -> Vec<IdiomSpan> {
        let mut spans = Vec::new();
        if self.idioms.is_empty() {
            return spans;
        }
        let mut i = 0;
        while i < target.len() {
            let max = self.max_idiom_len.min(target.len() - i);
            match (1..=max)
                .rev()
                .find(|&len| self.idioms.contains_key(&target[i..i + len]))
            {
                Some(len) => {
                    spans.push(IdiomSpan {
                        start: i,
                        end: i + len,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        spans
    }

    pub fn is_atomic(&self, source: &[Token]) -> bool {
        self.entries.get(source).is_some_and(|e| e.atomic)
    }
}

type Line = (usize, Vec<Token>, Vec<Token>, bool);

fn parse_lines(text: &str) -> impl Iterator<Item = Result<Line, PhraseError>> + '_ {
    let mut seen: HashMap<Vec<Token>, ()> = HashMap::new();
    text.lines().enumerate().filter_map(move |(n, raw)| {
        let line_no = n + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            return None;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let atomic = match fields.get(2).map(|f| f.trim()) {
            None | Some("") => false,
            Some("atomic") => true,
            Some(_) => return Some(Err(PhraseError::Malformed(line_no))),
        };
        if fields.len() < 2 || fields.len() > 3 {
            return Some(Err(PhraseError::Malformed(line_no)));
        }
        let source = crate::tokens(fields[0]);
        if source.is_empty() {
            return Some(Err(PhraseError::EmptySource(line_no)));
        }
        if seen.insert(source.clone(), ()).is_some() {
            return Some(Err(PhraseError::DuplicateSource(line_no)));
        }
        Some(Ok((line_no, source, crate::tokens(fields[1]), atomic)))
    })
}
