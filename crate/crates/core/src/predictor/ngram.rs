//! Additive-smoothing n-gram model and the predictor built on it.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PredictError, PredictQuery, Prediction, PredictionSet, Predictor};
use crate::{PhraseTable, Token, END};

/// Sentence-start padding symbol. Used in histories, never predicted.
pub const BOS: &str = "<s>";

#[derive(Debug, Error, PartialEq)]
pub enum NgramError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("order must be at least 1")]
    InvalidOrder,
    #[error("alpha must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("malformed model file: {0}")]
    Malformed(String),
}

/// Counts for every history length `0..order`, with additive smoothing at
/// query time.
///
/// `P(w | h) = (c(h, w) + α) / (c(h) + α·V)` over the vocabulary (which
/// includes the end symbol but not the start symbol). A history that was
/// never observed backs off to its suffix one token shorter until a seen
/// history is found; since all of the distribution then comes from the
/// shorter history, the backoff weight cancels and the result is still a
/// proper distribution.
#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    alpha: f64,
    vocab: Vec<Token>,
    counts: BTreeMap<Vec<Token>, BTreeMap<Token, u64>>,
    totals: HashMap<Vec<Token>, u64>,
    bos: Token,
    end: Token,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    order: usize,
    alpha: f64,
    vocab: Vec<Token>,
    counts: Vec<HistoryCounts>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryCounts {
    h: Vec<Token>,
    next: BTreeMap<Token, u64>,
}

impl NgramModel {
    /// A model with no training data; every conditional is uniform.
    pub fn empty(order: usize, alpha: f64) -> Result<Self, NgramError> {
        Self::check_params(order, alpha)?;
        let end = Token::from(END);
        Ok(Self {
            order,
            alpha,
            vocab: vec![end.clone()],
            counts: BTreeMap::new(),
            totals: HashMap::new(),
            bos: Token::from(BOS),
            end,
        })
    }

    fn check_params(order: usize, alpha: f64) -> Result<(), NgramError> {
        if order < 1 {
            return Err(NgramError::InvalidOrder);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(NgramError::InvalidAlpha(alpha));
        }
        Ok(())
    }

    pub fn train(corpus: &[Vec<Token>], order: usize, alpha: f64) -> Result<Self, NgramError> {
        if corpus.is_empty() {
            return Err(NgramError::EmptyCorpus);
        }
        let mut model = Self::empty(order, alpha)?;
        let mut vocab: BTreeSet<Token> = BTreeSet::new();
        vocab.insert(model.end.clone());
        for sentence in corpus {
            let mut padded: Vec<Token> = vec![model.bos.clone(); order - 1];
            padded.extend(sentence.iter().cloned());
            padded.push(model.end.clone());
            vocab.extend(sentence.iter().cloned());
            for i in order - 1..padded.len() {
                for m in 0..order {
                    let h = padded[i - m..i].to_vec();
                    *model
                        .counts
                        .entry(h)
                        .or_default()
                        .entry(padded[i].clone())
                        .or_insert(0) += 1;
                }
            }
        }
        model.vocab = vocab.into_iter().collect();
        model.rebuild_totals();
        Ok(model)
    }

    /// Parses a corpus file: one sentence per line, whitespace-separated.
    pub fn parse_corpus(text: &str) -> Vec<Vec<Token>> {
        text.lines()
            .map(crate::tokens)
            .filter(|s| !s.is_empty())
            .collect()
    }

    fn rebuild_totals(&mut self) {
        self.totals = self
            .counts
            .iter()
            .map(|(h, next)| (h.clone(), next.values().sum()))
            .collect();
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab(&self) -> &[Token] {
        &self.vocab
    }

    /// Raw count of `next` after `history`.
    pub fn count(&self, history: &[Token], next: &str) -> u64 {
        self.counts
            .get(history)
            .and_then(|m| m.get(next))
            .copied()
            .unwrap_or(0)
    }

    /// The `order − 1` tokens conditioning the next prediction after
    /// `context`, padded with start symbols.
    pub fn history(&self, context: &[Token]) -> Vec<Token> {
        let want = self.order - 1;
        let have = context.len().min(want);
        let mut h = vec![self.bos.clone(); want - have];
        h.extend_from_slice(&context[context.len() - have..]);
        h
    }

    /// Longest suffix of `history` that was observed in training.
    fn seen_suffix<'h>(&self, history: &'h [Token]) -> Option<&'h [Token]> {
        let mut h = history;
        loop {
            if self.totals.contains_key(h) {
                return Some(h);
            }
            if h.is_empty() {
                return None;
            }
            h = &h[1..];
        }
    }

    /// Smoothed `P(word | history)`; `history` is normally `order − 1` long.
    pub fn conditional(&self, history: &[Token], word: &str) -> f64 {
        let v = self.vocab.len() as f64;
        match self.seen_suffix(history) {
            Some(h) => {
                let c = self.count(h, word) as f64;
                (c + self.alpha) / (self.totals[h] as f64 + self.alpha * v)
            }
            None => 1.0 / v,
        }
    }

    /// The full conditional distribution over the vocabulary, in vocab order.
    pub fn distribution(&self, history: &[Token]) -> Vec<(Token, f64)> {
        let v = self.vocab.len() as f64;
        match self.seen_suffix(history) {
            Some(h) => {
                let next = &self.counts[h];
                let denom = self.totals[h] as f64 + self.alpha * v;
                self.vocab
                    .iter()
                    .map(|w| {
                        let c = next.get(w).copied().unwrap_or(0) as f64;
                        (w.clone(), (c + self.alpha) / denom)
                    })
                    .collect()
            }
            None => self.vocab.iter().map(|w| (w.clone(), 1.0 / v)).collect(),
        }
    }

    /// `exp(−mean log P)` over `window`, conditioning each token on the
    /// window tokens before it (start-padded). `None` for an empty window.
    pub fn perplexity(&self, window: &[Token]) -> Option<f64> {
        if window.is_empty() {
            return None;
        }
        let total: f64 = (0..window.len())
            .map(|i| {
                let h = self.history(&window[..i]);
                self.conditional(&h, &window[i]).ln()
            })
            .sum();
        Some((-total / window.len() as f64).exp())
    }

    /// Best-first enumeration of continuations of `prefix`.
    ///
    /// A continuation ends at the end symbol or after `max_len` tokens; its
    /// probability is the product of its conditionals. Returns the `k` most
    /// probable (ties broken lexicographically), with `other_mass` holding
    /// the rest.
    pub fn continuations(&self, prefix: &[Token], k: usize, max_len: usize) -> PredictionSet {
        if k == 0 {
            return PredictionSet::new(Vec::new(), 0).expect("empty set is valid");
        }
        let max_len = max_len.max(1);
        let mut heap = BinaryHeap::new();
        heap.push(Partial {
            p: 1.0,
            toks: Vec::new(),
        });
        let mut done: Vec<Partial> = Vec::new();
        let mut context: Vec<Token> = self.history(prefix);
        let base = context.len();

        while let Some(top) = heap.pop() {
            if done.len() >= k && top.p < done[k - 1].p {
                break;
            }
            let complete = top.toks.len() >= max_len || top.toks.last() == Some(&self.end);
            if complete {
                done.push(top);
                continue;
            }
            context.truncate(base);
            context.extend(top.toks.iter().cloned());
            let h = self.history(&context);
            for (w, c) in self.distribution(&h) {
                let p = top.p * c;
                if done.len() >= k && p < done[k - 1].p {
                    continue;
                }
                let mut toks = top.toks.clone();
                toks.push(w);
                heap.push(Partial { p, toks });
            }
        }

        let items = done
            .into_iter()
            .map(|d| Prediction::new(d.toks, d.p, Vec::new()))
            .collect();
        PredictionSet::new(items, k).expect("products of conditionals form a valid set")
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            order: self.order,
            alpha: self.alpha,
            vocab: self.vocab.clone(),
            counts: self
                .counts
                .iter()
                .map(|(h, next)| HistoryCounts {
                    h: h.clone(),
                    next: next.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NgramError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| NgramError::Malformed(e.to_string()))?;
        let mut model = Self::empty(file.order, file.alpha)?;
        let vocab: BTreeSet<Token> = file.vocab.into_iter().collect();
        if !vocab.contains(END) {
            return Err(NgramError::Malformed("vocabulary lacks the end symbol".into()));
        }
        for hc in file.counts {
            if hc.h.len() >= file.order {
                return Err(NgramError::Malformed("history longer than order − 1".into()));
            }
            if let Some(w) = hc.next.keys().find(|w| !vocab.contains(*w)) {
                return Err(NgramError::Malformed(format!("`{w}` missing from vocabulary")));
            }
            model.counts.insert(hc.h, hc.next);
        }
        model.vocab = vocab.into_iter().collect();
        model.rebuild_totals();
        Ok(model)
    }
}

#[derive(Debug)]
struct Partial {
    p: f64,
    toks: Vec<Token>,
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Partial {}

impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partial {
    // Max-heap: higher probability first, then lexicographically smaller.
    fn cmp(&self, other: &Self) -> Ordering {
        self.p
            .total_cmp(&other.p)
            .then_with(|| other.toks.cmp(&self.toks))
    }
}

/// N-gram continuations translated through a phrase table.
pub struct NgramPredictor {
    model: Arc<NgramModel>,
    table: Arc<PhraseTable>,
    horizon: usize,
    cache: Mutex<StablePrefix>,
}

/// Translation of a source prefix up to the point where no extension of the
/// prefix can change the greedy segmentation.
#[derive(Default)]
struct StablePrefix {
    source: Vec<Token>,
    target: Vec<Token>,
}

impl NgramPredictor {
    pub fn new(model: Arc<NgramModel>, table: Arc<PhraseTable>, horizon: usize) -> Self {
        Self {
            model,
            table,
            horizon: horizon.max(1),
            cache: Mutex::new(StablePrefix::default()),
        }
    }

    pub fn model(&self) -> &NgramModel {
        &self.model
    }

    /// Extends the cached stable prefix as far as `prefix` allows and
    /// returns the cache, locked.
    fn stable_translation(&self, prefix: &[Token]) -> std::sync::MutexGuard<'_, StablePrefix> {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        let reuse = cache.source.len() <= prefix.len() && prefix.starts_with(&cache.source);
        if !reuse {
            *cache = StablePrefix::default();
        }
        let start = cache.source.len();
        let tail = &prefix[start..];
        let window = self.table.max_source_len().max(1);
        let mut scratch = Vec::new();
        let starts = self.table.translate_into(tail, &mut scratch);
        // A segment starting at s is final once s + window ≤ |tail|.
        let cut = starts
            .iter()
            .copied()
            .find(|&s| s + window > tail.len())
            .unwrap_or(tail.len());
        if cut > 0 {
            let stable = self.table.translate(&tail[..cut]);
            cache.target.extend(stable);
            cache.source.extend_from_slice(&tail[..cut]);
        }
        cache
    }
}

impl Predictor for NgramPredictor {
    fn predict(&self, q: &PredictQuery<'_>) -> Result<PredictionSet, PredictError> {
        let set = self.model.continuations(q.prefix, q.k, self.horizon);
        let stable = self.stable_translation(q.prefix);
        let tail = &q.prefix[stable.source.len()..];
        let items = set
            .items()
            .iter()
            .map(|p| {
                let mut source: Vec<Token> = tail.to_vec();
                source.extend(p.continuation.iter().filter(|t| &***t != END).cloned());
                // Phrases rarely expand more than a few target tokens each.
                let mut translation = Vec::with_capacity(stable.target.len() + 4 * source.len());
                translation.extend_from_slice(&stable.target);
                self.table.translate_into(&source, &mut translation);
                Prediction::new(p.continuation.clone(), p.p, translation)
            })
            .collect();
        Ok(PredictionSet::new(items, q.k).expect("translations keep the set valid"))
    }

    fn perplexity(&self, window: &[Token]) -> Option<f64> {
        self.model.perplexity(window)
    }
}
