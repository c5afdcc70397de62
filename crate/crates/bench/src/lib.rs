//! Shared inputs for the benchmarks and the throughput acceptance check.
//!
//! Everything is built from the toy corpus and phrase table under
//! `fixtures/toy`, compiled into the crate so benchmarks need no paths.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use specinterp_core::{
    ContextDoc, EngineConfig, NgramModel, NgramPredictor, PhraseTable, Session, TokenEvent,
    Transcript,
};

pub const TOY_CORPUS: &str = include_str!("../../../fixtures/toy/corpus.txt");
pub const TOY_PHRASES: &str = include_str!("../../../fixtures/toy/phrases.tsv");

pub fn toy_table() -> PhraseTable {
    PhraseTable::parse(TOY_PHRASES).expect("toy phrase table parses")
}

pub fn toy_model(order: usize) -> NgramModel {
    NgramModel::train(&NgramModel::parse_corpus(TOY_CORPUS), order, 0.1).expect("toy corpus trains")
}

/// Corpus sentences drawn with replacement and concatenated until the
/// transcript holds `len` tokens, 100 ms apart. The same seed always gives
/// the same transcript.
pub fn synthetic_transcript(len: usize, seed: u64) -> Transcript {
    let sentences = NgramModel::parse_corpus(TOY_CORPUS);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(len);
    while events.len() < len {
        let s = sentences.choose(&mut rng).expect("toy corpus is not empty");
        for tok in s.iter().take(len - events.len()) {
            let i = events.len();
            events.push(TokenEvent::new(i, tok, 100 * i as u64, i + 1 == len));
        }
    }
    Transcript {
        source_lang: "en".into(),
        target_lang: "fr".into(),
        events,
        reference: None,
    }
}

/// A session over the toy n-gram model with k = 4 and d = 2.
pub fn ngram_session(model: Arc<NgramModel>) -> Session {
    let table = Arc::new(toy_table());
    let predictor = Arc::new(NgramPredictor::new(model, table.clone(), 4));
    let config = EngineConfig {
        k: 4,
        d: 2,
        ..EngineConfig::default()
    };
    Session::start(config, ContextDoc::default(), predictor, table).expect("valid config")
}
