//! Speculative simultaneous interpretation.
//!
//! The engine consumes a timestamped source-token stream, keeps a tree of
//! predicted continuations whose probability mass always sums to one, and
//! commits target-language output as soon as enough of that mass agrees on
//! it. When the speaker leaves every predicted path the tree collapses to its
//! residual "other" branch and is rebuilt from the observed prefix.
//!
//! Module map:
//!
//! - [`stream`]: tokens, transcripts, contexts and engine configuration.
//! - [`predictor`]: continuation backends (scripted fixtures, n-gram, remote).
//! - [`phrase`]: longest-match phrase-table translation and idiom spans.
//! - [`tree`]: the mass-conserving prediction tree.
//! - [`confirm`]: consensus templates, monotone refinement and emission.
//! - [`engine`]: per-utterance sessions tying everything together.
//! - [`metrics`]: average lagging, accuracy and session reports.
//! - [`replay`]: deterministic transcript replay under a lag profile.

pub mod confirm;
pub mod engine;
pub mod metrics;
pub mod phrase;
pub mod predictor;
pub mod replay;
pub mod stream;
pub mod tree;

pub use confirm::{RevisionConflict, Slot, TargetTemplate};
pub use engine::{EngineError, EventKind, OutputEvent, Session};
pub use metrics::SessionReport;
pub use phrase::{IdiomSpan, PhraseTable};
pub use predictor::{
    NgramModel, NgramPredictor, PredictError, PredictQuery, Prediction, PredictionSet, Predictor,
    RemotePredictor, ScriptedFixture,
};
pub use replay::{replay, LagProfile, ReplayOutcome};
pub use stream::{ContextDoc, EngineConfig, TokenEvent, Transcript};
pub use tree::{MatchOutcome, PredictionTree, TreeNode};

use std::sync::Arc;

/// A source or target token. Cheap to clone; sequences of tokens are shared
/// heavily between tree nodes, hypotheses and templates.
pub type Token = Arc<str>;

/// Splits whitespace-separated text into tokens.
pub fn tokens(text: &str) -> Vec<Token> {
    text.split_whitespace().map(Token::from).collect()
}

/// Joins tokens with single spaces.
pub fn join(toks: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in toks.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

/// Internal end-of-utterance symbol used by predictors. Never appears in
/// transcripts; a continuation ending in it is a complete hypothesis.
pub const END: &str = "</s>";

/// Tolerance used for all probability-mass comparisons.
pub const MASS_EPS: f64 = 1e-9;
