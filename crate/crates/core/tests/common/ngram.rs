//! N-gram continuations checked against exhaustive enumeration.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use specinterp_core::{NgramModel, Token, END};

const WORDS: [&str; 5] = ["a", "b", "c", "d", "e"];

fn arb_corpus() -> impl Strategy<Value = Vec<Vec<Token>>> {
    (1usize..=WORDS.len()).prop_flat_map(|v| {
        prop::collection::vec(
            prop::collection::vec(prop::sample::select(WORDS[..v].to_vec()), 1..=5),
            1..=6,
        )
        .prop_map(|c| {
            c.into_iter()
                .map(|s| s.into_iter().map(Token::from).collect())
                .collect()
        })
    })
}

/// Every sequence that ends in the end symbol within `max_len` tokens or
/// reaches `max_len` without it, with its chain-rule probability.
fn enumerate(model: &NgramModel, prefix: &[Token], max_len: usize) -> Vec<(Vec<Token>, f64)> {
    let mut out = Vec::new();
    let mut stack = vec![(Vec::<Token>::new(), 1.0)];
    while let Some((seq, p)) = stack.pop() {
        if seq.len() == max_len || seq.last().is_some_and(|t| &**t == END) {
            out.push((seq, p));
            continue;
        }
        let mut ctx = prefix.to_vec();
        ctx.extend(seq.iter().cloned());
        let h = model.history(&ctx);
        for w in model.vocab() {
            let mut next = seq.clone();
            next.push(w.clone());
            stack.push((next, p * model.conditional(&h, w)));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Top-k continuations agree with brute-force enumeration of every path.
pub fn enumeration(cases: u32) -> Result<(), String> {
    let strategy = (
        arb_corpus(),
        1usize..=3,
        prop::sample::select(vec![0.1, 0.5, 1.0]),
        prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..3),
        1usize..=4,
        1usize..=5,
    );
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, |(corpus, order, alpha, prefix, max_len, k)| {
            let model = NgramModel::train(&corpus, order, alpha).unwrap();
            prop_assume!(model.vocab().len() <= 6);
            let prefix: Vec<Token> = prefix.into_iter().map(Token::from).collect();
            let all = enumerate(&model, &prefix, max_len);
            let total: f64 = all.iter().map(|x| x.1).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9, "enumerated mass {total}");

            let set = model.continuations(&prefix, k, max_len);
            let want = &all[..k.min(all.len())];
            prop_assert_eq!(set.len(), want.len());
            for (got, (seq, p)) in set.items().iter().zip(want) {
                prop_assert_eq!(&got.continuation, seq);
                prop_assert!((got.p - p).abs() <= 1e-9);
            }
            let rest: f64 = all[want.len()..].iter().map(|x| x.1).sum();
            prop_assert!((set.other_mass() - rest).abs() <= 1e-9);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Every conditional distribution, seen history or not, sums to one.
pub fn distributions_sum_to_one(cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(
            &(arb_corpus(), 1usize..=4, prop::sample::select(vec![0.01, 0.1, 1.0])),
            |(corpus, order, alpha)| {
                let model = NgramModel::train(&corpus, order, alpha).unwrap();
                // All histories of length order−1 over the vocabulary plus
                // start padding, seen or not.
                let mut symbols: Vec<Token> = model.vocab().to_vec();
                symbols.push(Token::from("<s>"));
                symbols.push(Token::from("zz-unseen"));
                let mut histories: Vec<Vec<Token>> = vec![Vec::new()];
                for _ in 0..order - 1 {
                    histories = histories
                        .into_iter()
                        .flat_map(|h| {
                            symbols.iter().map(move |s| {
                                let mut h = h.clone();
                                h.push(s.clone());
                                h
                            })
                        })
                        .collect();
                }
                for h in &histories {
                    let sum: f64 = model.distribution(h).iter().map(|x| x.1).sum();
                    prop_assert!((sum - 1.0).abs() <= 1e-9, "history {h:?} sums to {sum}");
                    let by_word: f64 = model.vocab().iter().map(|w| model.conditional(h, w)).sum();
                    prop_assert!((by_word - 1.0).abs() <= 1e-9);
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}
