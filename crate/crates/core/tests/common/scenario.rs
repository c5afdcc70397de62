//! Randomized scripted sessions replayed tick by tick.

use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use specinterp_core::stream::TokenEvent;
use specinterp_core::{
    tokens, ContextDoc, EngineConfig, EventKind, LagProfile, PhraseTable, Prediction, PredictionSet,
    ScriptedFixture, Session, Token, Transcript, END,
};

const WORDS: [&str; 4] = ["a", "b", "c", "d"];

pub fn table() -> PhraseTable {
    let mut t = PhraseTable::new();
    for w in WORDS {
        t.insert(tokens(w), vec![Token::from(w.to_uppercase())], false);
    }
    t.insert(tokens("a b"), tokens("AB"), false);
    t.insert(tokens("c d"), tokens("kick the bucket"), true);
    t
}

/// One scripted entry: the prefix length it is keyed on and its items, each
/// either the true future (`None`) or a made-up continuation, possibly with a
/// made-up translation.
#[derive(Debug, Clone)]
struct Entry {
    at: usize,
    items: Vec<(Option<Vec<usize>>, bool, bool, u32)>,
    slack: u32,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub source: Vec<usize>,
    entries: Vec<Entry>,
    k: usize,
    d: usize,
    tau: f64,
    epsilon: f64,
    buffer_limit: usize,
    lag: Vec<usize>,
}

pub fn arb_scenario() -> impl Strategy<Value = Scenario> {
    let word = 0..WORDS.len();
    let item = (
        prop::option::weighted(0.4, prop::collection::vec(word.clone(), 1..4)),
        any::<bool>(),
        prop::bool::weighted(0.15),
        1u32..10,
    );
    let entry = (0usize..10, prop::collection::vec(item, 0..4), 0u32..6)
        .prop_map(|(at, items, slack)| Entry { at, items, slack });
    (
        prop::collection::vec(word, 1..10),
        prop::collection::vec(entry, 0..8),
        1usize..=4,
        1usize..=3,
        prop::sample::select(vec![0.5, 0.7, 0.9, 1.0]),
        prop::sample::select(vec![0.01, 0.05, 0.2]),
        1usize..=4,
        prop::collection::vec(1usize..=4, 1..3),
    )
        .prop_map(|(source, entries, k, d, tau, epsilon, buffer_limit, lag)| Scenario {
            source,
            entries,
            k,
            d,
            tau,
            epsilon,
            buffer_limit,
            lag,
        })
}

pub fn toks(ix: &[usize]) -> Vec<Token> {
    ix.iter().map(|&i| Token::from(WORDS[i])).collect()
}

pub fn build(s: &Scenario) -> (Session, Transcript) {
    let table = table();
    let source = toks(&s.source);
    let mut fx = ScriptedFixture::new();
    for e in &s.entries {
        let at = e.at.min(source.len());
        let prefix = source[..at].to_vec();
        let total: u32 = e.items.iter().map(|i| i.3).sum::<u32>() + e.slack;
        let items = e
            .items
            .iter()
            .map(|(cont, end, junk, w)| {
                let mut c = match cont {
                    Some(ix) => toks(ix),
                    None => source[at..].to_vec(),
                };
                if *end || c.is_empty() {
                    c.push(Token::from(END));
                }
                let mut full = prefix.clone();
                full.extend(c.iter().filter(|t| &***t != END).cloned());
                let tr = if *junk {
                    tokens("zz yy")
                } else {
                    table.translate(&full)
                };
                Prediction::new(c, *w as f64 / total.max(1) as f64, tr)
            })
            .collect();
        fx.insert("default", prefix, PredictionSet::new(items, usize::MAX).unwrap());
    }
    let cfg = EngineConfig {
        k: s.k,
        d: s.d,
        tau: s.tau,
        epsilon: s.epsilon,
        buffer_limit: s.buffer_limit,
        ..EngineConfig::default()
    };
    let session = Session::start(cfg, ContextDoc::default(), Arc::new(fx), Arc::new(table)).unwrap();
    let n = source.len();
    let events = source
        .iter()
        .enumerate()
        .map(|(i, t)| TokenEvent {
            index: i,
            surface: t.clone(),
            t_ms: 100 * i as u64,
            is_final: i + 1 == n,
        })
        .collect();
    let transcript = Transcript {
        source_lang: "x".into(),
        target_lang: "y".into(),
        events,
        reference: None,
    };
    (session, transcript)
}

/// Replays tick by tick like the harness does, recording `emitted()` after
/// every step.
pub fn run(s: &Scenario) -> (Session, Vec<Vec<Token>>) {
    let (mut session, transcript) = build(s);
    let lag = LagProfile::new(s.lag.clone()).unwrap();
    let mut snapshots = vec![session.emitted().to_vec()];
    let mut next = 0;
    let mut tick = 0;
    let evs = &transcript.events;
    while next < evs.len() {
        let end = (next + lag.at(tick)).min(evs.len());
        for ev in &evs[next..end] {
            if ev.is_final {
                session.finalize(ev.clone()).unwrap();
            } else {
                session.deliver(ev.clone()).unwrap();
            }
        }
        if !session.is_finished() {
            session.pump();
        }
        snapshots.push(session.emitted().to_vec());
        next = end;
        tick += 1;
    }
    (session, snapshots)
}

/// Emitted output only ever grows and always equals the Emit events joined.
pub fn append_only(cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&arb_scenario(), |s| {
            let (session, snaps) = run(&s);
            let last = snaps.last().unwrap();
            for w in snaps.windows(2) {
                prop_assert!(w[1].starts_with(&w[0]), "{:?} -> {:?}", w[0], w[1]);
            }
            let from_log: Vec<Token> = session
                .log()
                .iter()
                .filter_map(|e| match &e.kind {
                    EventKind::Emit { toks } => Some(toks.clone()),
                    _ => None,
                })
                .flatten()
                .collect();
            prop_assert_eq!(&from_log, last);
            for e in session.log() {
                if let EventKind::Emit { toks } = &e.kind {
                    prop_assert!(!toks.is_empty());
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}
