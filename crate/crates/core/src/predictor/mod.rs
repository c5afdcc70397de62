//! Continuation predictors.
//!
//! A predictor looks at the observed source prefix (plus pre-loaded context)
//! and proposes up to `k` full continuations, each with a probability and a
//! target translation of the whole hypothetical sentence. Whatever mass the
//! named continuations leave over is the "other" bucket.

mod ngram;
mod remote;
mod scripted;

pub use ngram::{NgramError, NgramModel, NgramPredictor, BOS};
pub use remote::RemotePredictor;
pub use scripted::{FixtureError, ScriptedFixture};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{ContextDoc, Token, MASS_EPS};

/// One predicted continuation of the observed prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub continuation: Vec<Token>,
    pub p: f64,
    pub translation: Vec<Token>,
}

impl Prediction {
    pub fn new(continuation: Vec<Token>, p: f64, translation: Vec<Token>) -> Self {
        Self {
            continuation,
            p,
            translation,
        }
    }

    /// True if the continuation runs to the end of the utterance.
    pub fn is_complete(&self) -> bool {
        self.continuation.last().is_some_and(|t| &**t == crate::END)
    }
}

/// Ranked predictions plus residual mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    items: Vec<Prediction>,
    other_mass: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SetViolation {
    #[error("prediction {0} has an empty continuation")]
    EmptyContinuation(usize),
    #[error("prediction {0} has probability {1} outside (0, 1]")]
    BadProbability(usize, f64),
    #[error("probabilities sum to {0} > 1")]
    MassOverflow(f64),
}

/// Orders predictions by probability, descending, then by continuation.
pub(crate) fn rank(a: &Prediction, b: &Prediction) -> Ordering {
    b.p.total_cmp(&a.p)
        .then_with(|| a.continuation.cmp(&b.continuation))
}

impl PredictionSet {
    /// Validates, sorts and keeps the `k` most probable items. Mass dropped
    /// by the truncation moves into `other_mass`.
    pub fn new(mut items: Vec<Prediction>, k: usize) -> Result<Self, SetViolation> {
        let violations = Self::violations(&items);
        if let Some(v) = violations.into_iter().next() {
            return Err(v);
        }
        items.sort_by(rank);
        items.truncate(k);
        let sum: f64 = items.iter().map(|p| p.p).sum();
        Ok(Self {
            items,
            other_mass: (1.0 - sum).max(0.0),
        })
    }

    /// All invariant violations of a raw item list.
    pub fn violations(items: &[Prediction]) -> Vec<SetViolation> {
        let mut out = Vec::new();
        for (i, p) in items.iter().enumerate() {
            if p.continuation.is_empty() {
                out.push(SetViolation::EmptyContinuation(i));
            }
            if !(p.p > 0.0 && p.p <= 1.0) {
                out.push(SetViolation::BadProbability(i, p.p));
            }
        }
        let sum: f64 = items.iter().map(|p| p.p).sum();
        if sum > 1.0 + MASS_EPS {
            out.push(SetViolation::MassOverflow(sum));
        }
        out
    }

    /// The set used when a backend has nothing to say: all mass is "other".
    pub fn empty() -> Self {
        Self {
            items: Vec::new(),
            other_mass: 1.0,
        }
    }

    pub fn items(&self) -> &[Prediction] {
        &self.items
    }

    pub fn into_items(self) -> Vec<Prediction> {
        self.items
    }

    pub fn other_mass(&self) -> f64 {
        self.other_mass
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Everything a backend gets to see for one prediction.
#[derive(Debug, Clone, Copy)]
pub struct PredictQuery<'a> {
    pub context: &'a ContextDoc,
    /// Recent source window passed along after a context shift.
    pub aux: &'a [Token],
    pub prefix: &'a [Token],
    pub k: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("no prediction available")]
    NoPrediction,
    #[error("predictor unreachable: {0}")]
    Unreachable(String),
    #[error("malformed predictor response: {0}")]
    MalformedResponse(String),
    #[error("predictor exceeded its {0} ms budget")]
    Timeout(u64),
}

/// A continuation backend. Implementations are read-only after
/// construction and may be shared between sessions.
pub trait Predictor: Send + Sync {
    fn predict(&self, query: &PredictQuery<'_>) -> Result<PredictionSet, PredictError>;

    /// Perplexity of `window` under the backend's model, if it has one.
    fn perplexity(&self, _window: &[Token]) -> Option<f64> {
        None
    }
}

/// Wire form of a prediction, shared by fixture files and the remote protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireItem {
    pub cont: Vec<Token>,
    pub p: f64,
    #[serde(default)]
    pub tr: Vec<Token>,
}

impl From<WireItem> for Prediction {
    fn from(w: WireItem) -> Self {
        Prediction::new(w.cont, w.p, w.tr)
    }
}

impl From<&Prediction> for WireItem {
    fn from(p: &Prediction) -> Self {
        WireItem {
            cont: p.continuation.clone(),
            p: p.p,
            tr: p.translation.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokens;

    #[test]
    fn sorted_with_lexicographic_ties_and_truncated() {
        let items = vec![
            Prediction::new(tokens("c"), 0.2, vec![]),
            Prediction::new(tokens("b"), 0.3, vec![]),
            Prediction::new(tokens("a"), 0.2, vec![]),
            Prediction::new(tokens("d"), 0.1, vec![]),
        ];
        let set = PredictionSet::new(items, 3).unwrap();
        let order: Vec<_> = set.items().iter().map(|p| crate::join(&p.continuation)).collect();
        assert_eq!(order, ["b", "a", "c"]);
        assert!((set.other_mass() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn rejects_overflow_and_bad_items() {
        let items = vec![
            Prediction::new(tokens("a"), 0.7, vec![]),
            Prediction::new(tokens("b"), 0.5, vec![]),
        ];
        assert!(matches!(
            PredictionSet::new(items, 4),
            Err(SetViolation::MassOverflow(_))
        ));
        let items = vec![
            Prediction::new(vec![], 0.1, vec![]),
            Prediction::new(tokens("b"), 0.0, vec![]),
        ];
        assert_eq!(
            PredictionSet::violations(&items),
            vec![
                SetViolation::EmptyContinuation(0),
                SetViolation::BadProbability(1, 0.0)
            ]
        );
    }

    #[test]
    fn exact_unit_mass_has_zero_other() {
        let set = PredictionSet::new(vec![Prediction::new(tokens("a"), 1.0, vec![])], 4).unwrap();
        assert_eq!(set.other_mass(), 0.0);
        assert_eq!(PredictionSet::empty().other_mass(), 1.0);
    }
}
