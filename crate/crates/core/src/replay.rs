//! Deterministic transcript replay under simulated lag.

use std::str::FromStr;

use crate::engine::{EngineError, OutputEvent, Session};
use crate::metrics::SessionReport;
use crate::stream::Transcript;

/// Events delivered per logical tick before the engine gets to run. The last
/// entry repeats, so `[1]` is no lag at all and `[3, 1]` delivers a burst of
/// three and then one at a time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagProfile(Vec<usize>);

impl LagProfile {
    pub fn new(per_tick: Vec<usize>) -> Option<Self> {
        (!per_tick.is_empty() && per_tick.iter().all(|&n| n > 0)).then_some(Self(per_tick))
    }

    pub fn none() -> Self {
        Self(vec![1])
    }

    pub fn at(&self, tick: usize) -> usize {
        self.0[tick.min(self.0.len() - 1)]
    }
}

impl Default for LagProfile {
    fn default() -> Self {
        Self::none()
    }
}

impl FromStr for LagProfile {
    type Err = String;

    /// Comma-separated positive counts, e.g. `3,1`.
    fn from_str(s: &str) -> Result<Self, String> {
        let v = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(v).ok_or_else(|| "lag profile needs at least one positive count".to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub events: Vec<OutputEvent>,
    pub report: SessionReport,
}

/// Feeds `transcript` through `session` tick by tick and finalizes it.
pub fn replay(
    session: &mut Session,
    transcript: &Transcript,
    lag: &LagProfile,
) -> Result<ReplayOutcome, EngineError> {
    let events = &transcript.events;
    let mut next = 0;
    let mut tick = 0;
    while next < events.len() {
        let end = (next + lag.at(tick)).min(events.len());
        for ev in &events[next..end] {
            if ev.is_final {
                session.finalize(ev.clone())?;
            } else {
                session.deliver(ev.clone())?;
            }
        }
        if !session.is_finished() {
            session.pump();
        }
        next = end;
        tick += 1;
    }
    if !session.is_finished() {
        let t = events.last().map_or(0, |e| e.t_ms);
        session.finish(t);
    }
    Ok(ReplayOutcome {
        events: session.log().to_vec(),
        report: session.report(transcript.reference.as_deref()),
    })
}
