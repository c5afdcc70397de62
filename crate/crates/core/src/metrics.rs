//! Session metrics, computed purely from an event log.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EventKind, OutputEvent};
use crate::Token;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no target tokens were emitted")]
    EmptyEmission,
    #[error("source length is zero")]
    EmptySource,
    #[error("emission timeline must be non-decreasing and bounded by the source length")]
    BadTimeline,
}

/// Average lagging over a per-target-token timeline `g`, where `g[j]` is the
/// number of source tokens heard when target token `j + 1` was emitted.
pub fn average_lagging(g: &[usize], src_len: usize) -> Result<f64, MetricError> {
    let t = g.len();
    if t == 0 {
        return Err(MetricError::EmptyEmission);
    }
    if src_len == 0 {
        return Err(MetricError::EmptySource);
    }
    if g.windows(2).any(|w| w[0] > w[1]) || g[t - 1] > src_len {
        return Err(MetricError::BadTimeline);
    }
    let gamma = t as f64 / src_len as f64;
    let tau = g.iter().position(|&x| x == src_len).map_or(t, |j| j + 1);
    let sum: f64 = g[..tau]
        .iter()
        .enumerate()
        .map(|(j, &gj)| gj as f64 - j as f64 / gamma)
        .sum();
    Ok(sum / tau as f64)
}

/// Token-level Levenshtein distance.
pub fn levenshtein(a: &[Token], b: &[Token]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// `1 − lev / max(len)`; two empty sequences score 1.
pub fn accuracy(output: &[Token], reference: &[Token]) -> f64 {
    let m = output.len().max(reference.len());
    if m == 0 {
        return 1.0;
    }
    1.0 - levenshtein(output, reference) as f64 / m as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    /// `None` when nothing was emitted.
    pub al: Option<f64>,
    pub hit_rate: f64,
    pub divergences: usize,
    pub conflicts: usize,
    pub catchups: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub emitted_len: usize,
    pub source_len: usize,
    /// AL of a system that stays silent until the source ends.
    pub al_wait_until_end: Option<f64>,
    /// AL of a system that emits target tokens at an even pace with the source.
    pub al_per_token: Option<f64>,
}

/// Per-emitted-token source counts plus the concatenated output.
pub fn timeline(events: &[OutputEvent]) -> (Vec<usize>, Vec<Token>) {
    let mut g = Vec::new();
    let mut out = Vec::new();
    for ev in events {
        if let EventKind::Emit { toks } = &ev.kind {
            g.extend(std::iter::repeat_n(ev.src, toks.len()));
            out.extend(toks.iter().cloned());
        }
    }
    (g, out)
}

pub fn compute_report(events: &[OutputEvent], reference: Option<&[Token]>) -> SessionReport {
    let (g, out) = timeline(events);
    let count = |f: fn(&EventKind) -> bool| events.iter().filter(|e| f(&e.kind)).count();
    let source_len = events.iter().map(|e| e.src).max().unwrap_or(0);
    let hits = events
        .iter()
        .rev()
        .find_map(|e| match e.kind {
            EventKind::End { hits } => Some(hits),
            _ => None,
        })
        .unwrap_or(0);
    let t = g.len();
    let al_wait_until_end = average_lagging(&vec![source_len; t], source_len).ok();
    let even: Vec<usize> = (1..=t)
        .map(|j| (j * source_len).div_ceil(t.max(1)).min(source_len))
        .collect();
    SessionReport {
        al: average_lagging(&g, source_len).ok(),
        hit_rate: if source_len == 0 {
            1.0
        } else {
            hits as f64 / source_len as f64
        },
        divergences: count(|k| matches!(k, EventKind::Diverge)),
        conflicts: count(|k| matches!(k, EventKind::Conflict { .. })),
        catchups: count(|k| matches!(k, EventKind::Catchup { .. })),
        accuracy: reference.map(|r| accuracy(&out, r)),
        emitted_len: out.len(),
        source_len,
        al_wait_until_end,
        al_per_token: average_lagging(&even, source_len).ok(),
    }
}
