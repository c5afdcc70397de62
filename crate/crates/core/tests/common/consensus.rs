//! Consensus templates checked against a quadratic oracle.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use specinterp_core::confirm::consensus;
use specinterp_core::{TargetTemplate, Token, MASS_EPS};

/// Quadratic oracle: scan every candidate prefix and suffix length.
pub fn oracle(hyps: &[(Vec<Token>, f64)], tau: f64) -> TargetTemplate {
    let mut sorted = hyps.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut cum = 0.0;
    let mut n = None;
    for (i, (_, m)) in sorted.iter().enumerate() {
        cum += m;
        if cum + MASS_EPS >= tau {
            n = Some(i + 1);
            break;
        }
    }
    let Some(n) = n else { return TargetTemplate::open() };
    let group: Vec<&Vec<Token>> = sorted[..n].iter().map(|(t, _)| t).collect();
    if group.iter().all(|t| *t == group[0]) {
        return TargetTemplate::fixed(group[0]);
    }
    let min_len = group.iter().map(|t| t.len()).min().unwrap();
    let mut p = 0;
    for len in 0..=min_len {
        if group.iter().all(|t| t[..len] == group[0][..len]) {
            p = len;
        }
    }
    let mut s = 0;
    for len in 0..=(min_len - p) {
        if group
            .iter()
            .all(|t| t[t.len() - len..] == group[0][group[0].len() - len..])
        {
            s = len;
        }
    }
    let g = group[0];
    TargetTemplate::with_hole(&g[..p], &g[g.len() - s..])
}

fn arb_hyps() -> impl Strategy<Value = Vec<(Vec<Token>, f64)>> {
    prop::collection::vec(
        (
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 0..=12),
            1u32..=10,
        ),
        0..=6,
    )
    .prop_map(|v| {
        let total: u32 = v.iter().map(|x| x.1).sum::<u32>().max(10);
        v.into_iter()
            .map(|(t, w)| (t.into_iter().map(Token::from).collect(), w as f64 / total as f64))
            .collect()
    })
}

/// `consensus` equals the oracle on random weighted hypothesis lists.
pub fn matches_oracle(cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&(arb_hyps(), 0.05f64..=1.0), |(h, tau)| {
            let borrowed: Vec<(&[Token], f64)> = h.iter().map(|(t, m)| (t.as_slice(), *m)).collect();
            prop_assert_eq!(consensus(&borrowed, tau), oracle(&h, tau));
            Ok(())
        })
        .map_err(|e| e.to_string())
}
