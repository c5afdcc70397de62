//! Committed target output.
//!
//! A [`TargetTemplate`] is a run of Fixed tokens with at most one Hole, e.g.
//! `Yesterday , I [*] with my friend`. Fixed slots never change once
//! committed; refinement only ever replaces the Hole, and emission walks a
//! pointer forward over the Fixed slots in front of it.

use std::fmt;

use crate::{IdiomSpan, Token, MASS_EPS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Slot {
    Fixed(Token),
    Hole(u32),
}

impl Slot {
    pub fn token(&self) -> Option<&Token> {
        match self {
            Slot::Fixed(t) => Some(t),
            Slot::Hole(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetTemplate {
    slots: Vec<Slot>,
    emit_ptr: usize,
    next_hole: u32,
}

/// A fresh template contradicted a committed Fixed slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevisionConflict {
    pub slot: usize,
    /// `None` when the fresh template runs past the end of a closed one.
    pub committed: Option<Token>,
    /// `None` when the fresh template has no token to put there.
    pub contradicting: Option<Token>,
}

impl fmt::Display for RevisionConflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |t: &Option<Token>| t.as_ref().map_or("nothing".to_string(), |t| format!("`{t}`"));
        write!(
            f,
            "slot {}: committed {}, got {}",
            self.slot,
            show(&self.committed),
            show(&self.contradicting)
        )
    }
}

impl std::error::Error for RevisionConflict {}

pub const HOLE_MARK: &str = "[*]";

impl TargetTemplate {
    /// Nothing known yet: a single Hole.
    pub fn open() -> Self {
        Self {
            slots: vec![Slot::Hole(0)],
            emit_ptr: 0,
            next_hole: 1,
        }
    }

    pub fn fixed(tokens: &[Token]) -> Self {
        Self {
            slots: tokens.iter().cloned().map(Slot::Fixed).collect(),
            emit_ptr: 0,
            next_hole: 0,
        }
    }

    /// `prefix [*] suffix`.
    pub fn with_hole(prefix: &[Token], suffix: &[Token]) -> Self {
        let mut slots: Vec<Slot> = prefix.iter().cloned().map(Slot::Fixed).collect();
        slots.push(Slot::Hole(0));
        slots.extend(suffix.iter().cloned().map(Slot::Fixed));
        Self {
            slots,
            emit_ptr: 0,
            next_hole: 1,
        }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn emit_ptr(&self) -> usize {
        self.emit_ptr
    }

    pub fn hole_index(&self) -> Option<usize> {
        self.slots.iter().position(|s| matches!(s, Slot::Hole(_)))
    }

    pub fn fixed_count(&self) -> usize {
        self.slots.iter().filter(|s| s.token().is_some()).count()
    }

    /// Fixed tokens verbatim, the Hole as `[*]`.
    pub fn rendering(&self) -> Vec<Token> {
        let mark = Token::from(HOLE_MARK);
        self.slots
            .iter()
            .map(|s| s.token().cloned().unwrap_or_else(|| mark.clone()))
            .collect()
    }

    /// All Fixed tokens in order; for a template without a Hole this is the
    /// complete translation.
    pub fn fixed_tokens(&self) -> Vec<Token> {
        self.slots.iter().filter_map(Slot::token).cloned().collect()
    }

    fn fixed_run(&self, range: std::ops::Range<usize>) -> impl Iterator<Item = &Token> {
        self.slots[range].iter().filter_map(Slot::token)
    }

    /// Split around the Hole as (prefix, suffix) Fixed tokens.
    fn halves(&self, hole: usize) -> (Vec<&Token>, Vec<&Token>) {
        (
            self.fixed_run(0..hole).collect(),
            self.fixed_run(hole + 1..self.slots.len()).collect(),
        )
    }

    fn rebuild(&self, prefix: Vec<Token>, hole: bool, suffix: Vec<Token>) -> Self {
        let mut slots: Vec<Slot> = prefix.into_iter().map(Slot::Fixed).collect();
        let mut next_hole = self.next_hole;
        if hole {
            slots.push(Slot::Hole(next_hole));
            next_hole += 1;
        }
        slots.extend(suffix.into_iter().map(Slot::Fixed));
        Self {
            slots,
            emit_ptr: self.emit_ptr,
            next_hole,
        }
    }

    /// Inserts `tokens` as Fixed content at the front of the Hole, which stays
    /// open after them. Returns false when there is no Hole to fill.
    pub fn fill_hole_front(&mut self, tokens: &[Token]) -> bool {
        let Some(h) = self.hole_index() else {
            return false;
        };
        self.slots
            .splice(h..h, tokens.iter().cloned().map(Slot::Fixed));
        true
    }

    /// Replaces the Hole with `tokens`, closing the template.
    pub fn close_hole(&mut self, tokens: &[Token]) -> bool {
        let Some(h) = self.hole_index() else {
            return false;
        };
        self.slots
            .splice(h..h + 1, tokens.iter().cloned().map(Slot::Fixed));
        true
    }
}

impl fmt::Display for TargetTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::join(&self.rendering()))
    }
}

fn common_prefix(a: &[Token], b: &[Token]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

fn common_suffix(a: &[Token], b: &[Token]) -> usize {
    a.iter()
        .rev()
        .zip(b.iter().rev())
        .take_while(|(x, y)| x == y)
        .count()
}

/// Mass-weighted consensus over `(translation, mass)` hypotheses.
///
/// Takes the smallest most-probable group whose cumulative mass reaches
/// `tau` and commits its longest common prefix and suffix around one Hole.
/// The prefix wins when the two would overlap in the shortest member.
pub fn consensus(hyps: &[(&[Token], f64)], tau: f64) -> TargetTemplate {
    let total: f64 = hyps.iter().map(|h| h.1).sum();
    if total + MASS_EPS < tau {
        return TargetTemplate::open();
    }
    let mut sorted: Vec<(&[Token], f64)> = hyps.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut cum = 0.0;
    let mut cover = None;
    for (i, (_, m)) in sorted.iter().enumerate() {
        cum += m;
        if cum + MASS_EPS >= tau {
            cover = Some(i + 1);
            break;
        }
    }
    let Some(n) = cover else {
        return TargetTemplate::open();
    };
    let group = &sorted[..n];
    let first = group[0].0;
    if group.iter().all(|(t, _)| *t == first) {
        return TargetTemplate::fixed(first);
    }
    let min_len = group.iter().map(|(t, _)| t.len()).min().unwrap_or(0);
    let lcp = group[1..]
        .iter()
        .map(|(t, _)| common_prefix(first, t))
        .min()
        .unwrap_or(first.len());
    let lcs = group[1..]
        .iter()
        .map(|(t, _)| common_suffix(first, t))
        .min()
        .unwrap_or(0)
        .min(min_len - lcp);
    TargetTemplate::with_hole(&first[..lcp], &first[first.len() - lcs..])
}

fn conflict(slot: usize, committed: &Token, got: Option<&Token>) -> RevisionConflict {
    RevisionConflict {
        slot,
        committed: Some(committed.clone()),
        contradicting: got.cloned(),
    }
}

/// Checks that `fresh` agrees with committed Fixed tokens `prefix` (aligned
/// left from slot 0) and `suffix` (aligned right, ending at slot
/// `suffix_end`).
fn check_halves(
    prefix: &[&Token],
    suffix: &[&Token],
    suffix_end: usize,
    fresh_prefix: &[&Token],
    fresh_suffix: &[&Token],
) -> Result<(), RevisionConflict> {
    for (i, c) in prefix.iter().enumerate() {
        if let Some(f) = fresh_prefix.get(i) {
            if f != c {
                return Err(conflict(i, c, Some(f)));
            }
        }
    }
    for j in 0..suffix.len() {
        let c = suffix[suffix.len() - 1 - j];
        if let Some(f) = fresh_suffix.len().checked_sub(j + 1).map(|k| fresh_suffix[k]) {
            if f != c {
                return Err(conflict(suffix_end - j, c, Some(f)));
            }
        }
    }
    Ok(())
}

/// Folds a freshly computed template into the committed one.
///
/// Committed Fixed slots are immutable. The committed Hole takes whatever
/// `fresh` says lies between the committed prefix and suffix; a Hole in
/// `fresh` is simply less information. Any contradiction leaves `committed`
/// untouched and is reported.
pub fn refine(
    committed: &TargetTemplate,
    fresh: &TargetTemplate,
) -> Result<TargetTemplate, RevisionConflict> {
    let last = committed.slots.len().saturating_sub(1);
    match (committed.hole_index(), fresh.hole_index()) {
        (None, None) => {
            let c: Vec<&Token> = committed.fixed_run(0..committed.slots.len()).collect();
            let f: Vec<&Token> = fresh.fixed_run(0..fresh.slots.len()).collect();
            if let Some(i) = (0..c.len()).find(|&i| f.get(i) != Some(&c[i])) {
                return Err(conflict(i, c[i], f.get(i).copied()));
            }
            if f.len() > c.len() {
                // Fresh claims more words after a closed template.
                return Err(RevisionConflict {
                    slot: c.len(),
                    committed: None,
                    contradicting: Some(f[c.len()].clone()),
                });
            }
            Ok(committed.clone())
        }
        (None, Some(fh)) => {
            let c: Vec<&Token> = committed.fixed_run(0..committed.slots.len()).collect();
            let (fx, fy) = fresh.halves(fh);
            if fx.len() + fy.len() > c.len() {
                let i = fx.len().min(c.len());
                return Err(RevisionConflict {
                    slot: i,
                    committed: c.get(i).map(|t| (*t).clone()),
                    contradicting: fx.get(i).map(|t| (*t).clone()),
                });
            }
            check_halves(&c, &c, last, &fx, &fy)?;
            Ok(committed.clone())
        }
        (Some(h), None) => {
            let (a, b) = committed.halves(h);
            let t: Vec<&Token> = fresh.fixed_run(0..fresh.slots.len()).collect();
            check_halves(&a, &b, last, &t, &t)?;
            if t.len() < a.len() {
                // Fresh stops before the committed prefix does.
                return Err(conflict(t.len(), a[t.len()], None));
            }
            if t.len() < a.len() + b.len() {
                // Long enough on each side but the two would overlap.
                let j = a.len() + b.len() - t.len() - 1;
                return Err(conflict(h + 1 + j, b[j], None));
            }
            let middle: Vec<Token> = t[a.len()..t.len() - b.len()].iter().map(|t| (*t).clone()).collect();
            let mut prefix: Vec<Token> = a.into_iter().cloned().collect();
            prefix.extend(middle);
            Ok(committed.rebuild(prefix, false, b.into_iter().cloned().collect()))
        }
        (Some(h), Some(fh)) => {
            let (a, b) = committed.halves(h);
            let (x, y) = fresh.halves(fh);
            check_halves(&a, &b, last, &x, &y)?;
            let mut prefix: Vec<Token> = a.iter().map(|t| (*t).clone()).collect();
            prefix.extend(x.iter().skip(a.len()).map(|t| (*t).clone()));
            let extra = y.len().saturating_sub(b.len());
            let mut suffix: Vec<Token> = y[..extra].iter().map(|t| (*t).clone()).collect();
            suffix.extend(b.iter().map(|t| (*t).clone()));
            Ok(committed.rebuild(prefix, true, suffix))
        }
    }
}

/// Advances the emit pointer over the Fixed run in front of the Hole, never
/// stopping strictly inside an idiom span. Returns the newly emitted tokens.
pub fn emittable(template: &mut TargetTemplate, idioms: &[IdiomSpan]) -> Vec<Token> {
    let mut end = template.hole_index().unwrap_or(template.slots.len());
    loop {
        let inside = idioms.iter().find(|s| s.start < end && end < s.end);
        match inside {
            Some(s) => end = s.start,
            None => break,
        }
    }
    if end <= template.emit_ptr {
        return Vec::new();
    }
    let out: Vec<Token> = template.fixed_run(template.emit_ptr..end).cloned().collect();
    template.emit_ptr = end;
    out
}
