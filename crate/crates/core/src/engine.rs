//! The per-utterance pipeline.
//!
//! A [`Session`] ingests source tokens, keeps the prediction tree conditioned
//! on them, folds the tree's consensus into the committed template and emits
//! whatever the template has fixed. Events are delivered and processed in two
//! steps ([`Session::deliver`], [`Session::pump`]) so a harness can simulate a
//! translator that falls behind: when more than `buffer_limit` events pile up
//! unprocessed, the backlog is translated directly instead.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confirm::{consensus, emittable, refine, RevisionConflict, TargetTemplate};
use crate::metrics::{compute_report, SessionReport};
use crate::predictor::{PredictQuery, PredictionSet, Predictor};
use crate::stream::{validate_config, ConfigViolation, ContextDoc, EngineConfig, TokenEvent};
use crate::tree::{MatchOutcome, PredictionTree, TreeError};
use crate::{IdiomSpan, PhraseTable, Token};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Newly committed target tokens, never empty.
    Emit { toks: Vec<Token> },
    Diverge,
    Repredict,
    /// The buffered source span that was translated directly.
    Catchup { toks: Vec<Token> },
    ContextShift,
    Conflict {
        slot: usize,
        committed: Option<Token>,
        fresh: Option<Token>,
    },
    /// Closes the log; `hits` counts tokens matched by a named branch.
    End { hits: usize },
}

/// One log record. `src` is the number of source tokens heard so far,
/// buffered ones included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEvent {
    #[serde(flatten)]
    pub kind: EventKind,
    pub t_ms: u64,
    pub src: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid config: {}", list(.0))]
    InvalidConfig(Vec<ConfigViolation>),
    #[error(transparent)]
    OutOfOrder(#[from] TreeError),
    #[error("the session has already been finalized")]
    Finished,
    #[error("event {0} is not marked final")]
    NotFinal(usize),
}

fn list(v: &[ConfigViolation]) -> String {
    v.iter().map(|c| c.0).collect::<Vec<_>>().join(", ")
}

pub struct Session {
    config: EngineConfig,
    context: ContextDoc,
    predictor: Arc<dyn Predictor>,
    table: Arc<PhraseTable>,
    aux: Vec<Token>,
    tree: PredictionTree,
    template: TargetTemplate,
    buffer: VecDeque<TokenEvent>,
    delivered: usize,
    emitted: Vec<Token>,
    log: Vec<OutputEvent>,
    hits: usize,
    divergences: usize,
    conflicts: usize,
    catchups: usize,
    drift_events: usize,
    finished: bool,
}

impl Session {
    pub fn start(
        config: EngineConfig,
        context: ContextDoc,
        predictor: Arc<dyn Predictor>,
        table: Arc<PhraseTable>,
    ) -> Result<Self, EngineError> {
        validate_config(&config).map_err(EngineError::InvalidConfig)?;
        let mut s = Self {
            tree: PredictionTree::other_only(Vec::new(), config.d),
            config,
            context,
            predictor,
            table,
            aux: Vec::new(),
            template: TargetTemplate::open(),
            buffer: VecDeque::new(),
            delivered: 0,
            emitted: Vec::new(),
            log: Vec::new(),
            hits: 0,
            divergences: 0,
            conflicts: 0,
            catchups: 0,
            drift_events: 0,
            finished: false,
        };
        s.tree = s.rebuild(Vec::new());
        Ok(s)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn tree(&self) -> &PredictionTree {
        &self.tree
    }

    pub fn template(&self) -> &TargetTemplate {
        &self.template
    }

    pub fn emitted(&self) -> &[Token] {
        &self.emitted
    }

    pub fn log(&self) -> &[OutputEvent] {
        &self.log
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn divergences(&self) -> usize {
        self.divergences
    }

    pub fn conflicts(&self) -> usize {
        self.conflicts
    }

    pub fn catchups(&self) -> usize {
        self.catchups
    }

    pub fn drift_events(&self) -> usize {
        self.drift_events
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Queues an event without processing it.
    pub fn deliver(&mut self, ev: TokenEvent) -> Result<(), EngineError> {
        if self.finished {
            return Err(EngineError::Finished);
        }
        if ev.index != self.delivered {
            return Err(TreeError::OutOfOrderToken {
                expected: self.delivered,
                got: ev.index,
            }
            .into());
        }
        self.delivered += 1;
        self.buffer.push_back(ev);
        Ok(())
    }

    /// Works through the queue: a direct catch-up translation when the
    /// backlog is over the limit, otherwise event by event.
    pub fn pump(&mut self) -> Vec<OutputEvent> {
        let start = self.log.len();
        if self.buffer.len() > self.config.buffer_limit {
            self.catchup();
        } else {
            while let Some(ev) = self.buffer.pop_front() {
                self.process(ev);
            }
        }
        self.log[start..].to_vec()
    }

    pub fn feed(&mut self, ev: TokenEvent) -> Result<Vec<OutputEvent>, EngineError> {
        self.deliver(ev)?;
        Ok(self.pump())
    }

    /// Processes the final event and closes the session.
    pub fn finalize(&mut self, ev: TokenEvent) -> Result<Vec<OutputEvent>, EngineError> {
        if !ev.is_final {
            return Err(EngineError::NotFinal(ev.index));
        }
        let t_ms = ev.t_ms;
        let start = self.log.len();
        self.deliver(ev)?;
        self.pump();
        self.finish(t_ms);
        Ok(self.log[start..].to_vec())
    }

    /// Resolves the template against the observed source, emits the rest
    /// and closes the log. Pending events are processed first.
    pub fn finish(&mut self, t_ms: u64) -> Vec<OutputEvent> {
        let start = self.log.len();
        if self.finished {
            return Vec::new();
        }
        while let Some(ev) = self.buffer.pop_front() {
            self.process(ev);
        }
        let fresh = self.final_translation();
        match refine(&self.template, &TargetTemplate::fixed(&fresh)) {
            Ok(t) => self.template = t,
            Err(c) => {
                self.record_conflict(c, t_ms);
                fill_conflicted(&mut self.template, &fresh);
            }
        }
        self.emit(t_ms);
        self.push(EventKind::End { hits: self.hits }, t_ms);
        self.finished = true;
        self.log[start..].to_vec()
    }

    pub fn report(&self, reference: Option<&[Token]>) -> SessionReport {
        compute_report(&self.log, reference)
    }

    fn final_translation(&self) -> Vec<Token> {
        if self.divergences == 0 {
            if let Some((t, _)) = self.tree.finished_hypotheses().first() {
                return t.to_vec();
            }
        }
        self.table.translate(self.tree.observed())
    }

    fn push(&mut self, kind: EventKind, t_ms: u64) {
        self.log.push(OutputEvent {
            kind,
            t_ms,
            src: self.delivered,
        });
    }

    fn predict(&self, prefix: &[Token]) -> Option<PredictionSet> {
        let q = PredictQuery {
            context: &self.context,
            aux: &self.aux,
            prefix,
            k: self.config.k,
        };
        self.predictor.predict(&q).ok()
    }

    fn rebuild(&self, prefix: Vec<Token>) -> PredictionTree {
        match self.predict(&prefix) {
            Some(ps) => PredictionTree::build(prefix, ps, self.config.d),
            None => PredictionTree::other_only(prefix, self.config.d),
        }
    }

    fn process(&mut self, ev: TokenEvent) {
        let outcome = self
            .tree
            .advance(ev.index, &ev.surface)
            .expect("deliver enforces ordering");
        match outcome {
            MatchOutcome::Matched { survivors } => {
                if survivors > 0 {
                    self.hits += 1;
                }
                self.expand();
                self.tree.prune(self.config.epsilon, self.config.k);
                if !self.tree.has_pending() {
                    // Every named path is used up (or gone): re-anchor on the
                    // prefix before the next token would wipe them out.
                    self.tree = self.rebuild(self.tree.observed().to_vec());
                }
            }
            MatchOutcome::Diverged => {
                self.divergences += 1;
                self.push(EventKind::Diverge, ev.t_ms);
                self.tree = self.rebuild(self.tree.observed().to_vec());
                self.push(EventKind::Repredict, ev.t_ms);
            }
        }
        self.commit(ev.t_ms);
        self.check_drift(ev.t_ms);
    }

    fn expand(&mut self) {
        let leaves = self.tree.expandable_leaves();
        if leaves.is_empty() {
            return;
        }
        let ps = self.predict(self.tree.observed());
        for path in leaves {
            self.tree.expand_with(&path, ps.as_ref());
        }
    }

    fn commit(&mut self, t_ms: u64) {
        let fresh = consensus(&self.tree.hypotheses(), self.config.tau);
        match refine(&self.template, &fresh) {
            Ok(t) => self.template = t,
            Err(c) => self.record_conflict(c, t_ms),
        }
        self.emit(t_ms);
    }

    fn record_conflict(&mut self, c: RevisionConflict, t_ms: u64) {
        self.conflicts += 1;
        self.push(
            EventKind::Conflict {
                slot: c.slot,
                committed: c.committed,
                fresh: c.contradicting,
            },
            t_ms,
        );
    }

    fn emit(&mut self, t_ms: u64) {
        let spans = self.idiom_spans();
        let toks = emittable(&mut self.template, &spans);
        if !toks.is_empty() {
            self.emitted.extend(toks.iter().cloned());
            self.push(EventKind::Emit { toks }, t_ms);
        }
    }

    /// Atomic target spans touching the emittable run. The run is scanned
    /// on its own and, when a Hole follows it, as continued by every
    /// hypothesis that agrees with the committed prefix, so an idiom that
    /// straddles the Hole still holds back its first words.
    fn idiom_spans(&self) -> Vec<IdiomSpan> {
        let from = self.template.emit_ptr();
        let upto = self.template.hole_index().unwrap_or(self.template.len());
        if from >= upto {
            return Vec::new();
        }
        let rendering = self.template.rendering();
        let mut texts: Vec<&[Token]> = vec![&rendering[from..upto]];
        let hyps = if upto < rendering.len() {
            self.tree.hypotheses()
        } else {
            Vec::new()
        };
        for (t, _) in &hyps {
            if t.len() > upto && t[..upto] == rendering[..upto] {
                texts.push(&t[from..]);
            }
        }
        let mut spans = Vec::new();
        for text in texts {
            spans.extend(
                self.table
                    .idiom_spans(text)
                    .into_iter()
                    .filter(|s| s.start < upto - from)
                    .map(|s| IdiomSpan {
                        start: s.start + from,
                        end: s.end + from,
                    }),
            );
        }
        spans
    }

    fn catchup(&mut self) {
        let span: Vec<TokenEvent> = self.buffer.drain(..).collect();
        let t_ms = span.last().map_or(0, |e| e.t_ms);
        let source: Vec<Token> = span.iter().map(|e| e.surface.clone()).collect();
        let direct = self.table.translate(&source);
        if !self.template.fill_hole_front(&direct) {
            let c = RevisionConflict {
                slot: self.template.len().saturating_sub(1),
                committed: self.template.fixed_tokens().last().cloned(),
                contradicting: direct.first().cloned(),
            };
            self.record_conflict(c, t_ms);
        }
        self.emit(t_ms);
        let mut prefix = self.tree.observed().to_vec();
        prefix.extend(source.iter().cloned());
        self.tree = self.rebuild(prefix);
        self.catchups += 1;
        self.push(EventKind::Catchup { toks: source }, t_ms);
        let before = self.tree.observed().len() - span.len();
        let w = self.config.drift_window;
        if (before + 1..=self.tree.observed().len()).any(|n| n % w == 0) {
            self.drift_check(t_ms);
        }
    }

    fn check_drift(&mut self, t_ms: u64) {
        if self.tree.observed().len().is_multiple_of(self.config.drift_window) {
            self.drift_check(t_ms);
        }
    }

    /// Compares the perplexity of the latest window with that of the opening
    /// of the context document; a large ratio means the talk has moved on.
    fn drift_check(&mut self, t_ms: u64) {
        let w = self.config.drift_window;
        let observed = self.tree.observed();
        if observed.len() < w || self.context.body.is_empty() {
            return;
        }
        let window = &observed[observed.len() - w..];
        let sample = &self.context.body[..w.min(self.context.body.len())];
        let (Some(pw), Some(pc)) = (
            self.predictor.perplexity(window),
            self.predictor.perplexity(sample),
        ) else {
            return;
        };
        if pc > 0.0 && pw / pc > self.config.drift_ratio {
            self.aux = window.to_vec();
            self.drift_events += 1;
            self.push(EventKind::ContextShift, t_ms);
        }
    }
}

/// Last-resort fill after the final translation contradicted the template:
/// keep every committed slot and put whatever of `fresh` lies between the
/// parts that do agree into the Hole.
fn fill_conflicted(template: &mut TargetTemplate, fresh: &[Token]) {
    let Some(h) = template.hole_index() else {
        return;
    };
    let r = template.rendering();
    let (a, b) = (&r[..h], &r[h + 1..]);
    let lcp = fresh.iter().zip(a).take_while(|(x, y)| x == y).count();
    let lcs = fresh
        .iter()
        .rev()
        .zip(b.iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let end = lcp.max(fresh.len() - lcs);
    template.close_hole(&fresh[lcp..end]);
}

/// One JSON object per line.
pub fn events_to_jsonl(events: &[OutputEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&serde_json::to_string(ev).expect("events serialize"));
        out.push('\n');
    }
    out
}

pub fn events_from_jsonl(text: &str) -> Result<Vec<OutputEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
