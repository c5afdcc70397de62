//! Deterministic fixture-backed predictor.
//!
//! Fixture files are JSON:
//!
//! ```json
//! {
//!   "contexts": [{"id": "friends", "body": ["友達", "と"]}],
//!   "entries": [
//!     {"context": "friends",
//!      "prefix": ["私は", "昨日"],
//!      "items": [{"cont": ["映画", "を", "見", "に", "行った", "</s>"],
//!                 "p": 0.4,
//!                 "tr": ["Yesterday", ",", "I", "went", "to", "see", "a", "movie"]}]}
//!   ]
//! }
//! ```
//!
//! `contexts` is optional. Each entry is keyed by the exact pair
//! (context id, observed prefix); `other_mass` is implied as `1 − Σp`.
//! A continuation ending in `</s>` runs to the end of the utterance.

use std::collections::HashMap;

use serde::Deserialize;
use thiserror::Error;

use super::{PredictError, PredictQuery, Prediction, PredictionSet, Predictor, SetViolation, WireItem};
use crate::{ContextDoc, Token};

#[derive(Debug, Clone, Default)]
pub struct ScriptedFixture {
    contexts: Vec<ContextDoc>,
    entries: HashMap<String, HashMap<Vec<Token>, PredictionSet>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    #[serde(default)]
    contexts: Vec<ContextDoc>,
    entries: Vec<FixtureEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureEntry {
    context: String,
    prefix: Vec<Token>,
    items: Vec<WireItem>,
}

#[derive(Debug, Error, PartialEq)]
pub enum FixtureError {
    #[error("fixture is not valid JSON: {0}")]
    Json(String),
    #[error("entry {entry}: {violation}")]
    Invalid { entry: usize, violation: SetViolation },
    #[error("entry {0}: duplicate (context, prefix) key")]
    Duplicate(usize),
    #[error("context id `{0}` declared twice")]
    DuplicateContext(String),
}

impl ScriptedFixture {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores the set for `(context_id, prefix)`, replacing any earlier one.
    pub fn insert(&mut self, context_id: &str, prefix: Vec<Token>, set: PredictionSet) {
        self.entries
            .entry(context_id.to_string())
            .or_default()
            .insert(prefix, set);
    }

    pub fn add_context(&mut self, ctx: ContextDoc) {
        self.contexts.push(ctx);
    }

    pub fn contexts(&self) -> &[ContextDoc] {
        &self.contexts
    }

    pub fn context(&self, id: &str) -> Option<&ContextDoc> {
        self.contexts.iter().find(|c| c.id == id)
    }

    pub fn parse(text: &str) -> Result<Self, FixtureError> {
        let errs = Self::lint(text);
        if let Some(e) = errs.into_iter().next() {
            return Err(e);
        }
        let file: FixtureFile =
            serde_json::from_str(text).map_err(|e| FixtureError::Json(e.to_string()))?;
        let mut fx = Self::new();
        fx.contexts = file.contexts;
        for entry in file.entries {
            let items = entry.items.into_iter().map(Prediction::from).collect();
            let set = PredictionSet::new(items, usize::MAX).expect("linted above");
            fx.insert(&entry.context, entry.prefix, set);
        }
        Ok(fx)
    }

    /// Every violation in a fixture file.
    pub fn lint(text: &str) -> Vec<FixtureError> {
        let file: FixtureFile = match serde_json::from_str(text) {
            Ok(f) => f,
            Err(e) => return vec![FixtureError::Json(e.to_string())],
        };
        let mut out = Vec::new();
        let mut ids = HashMap::new();
        for c in &file.contexts {
            if ids.insert(c.id.clone(), ()).is_some() {
                out.push(FixtureError::DuplicateContext(c.id.clone()));
            }
        }
        let mut keys = HashMap::new();
        for (n, entry) in file.entries.iter().enumerate() {
            let items: Vec<Prediction> = entry.items.iter().cloned().map(Prediction::from).collect();
            out.extend(
                PredictionSet::violations(&items)
                    .into_iter()
                    .map(|violation| FixtureError::Invalid {
                        entry: n,
                        violation,
                    }),
            );
            if keys
                .insert((entry.context.clone(), entry.prefix.clone()), ())
                .is_some()
            {
                out.push(FixtureError::Duplicate(n));
            }
        }
        out
    }
}

impl Predictor for ScriptedFixture {
    fn predict(&self, q: &PredictQuery<'_>) -> Result<PredictionSet, PredictError> {
        let set = self
            .entries
            .get(&q.context.id)
            .and_then(|m| m.get(q.prefix))
            .ok_or(PredictError::NoPrediction)?;
        Ok(PredictionSet::new(set.items().to_vec(), q.k).expect("stored sets are valid"))
    }
}
