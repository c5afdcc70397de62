//! Prediction-tree operation sequences and their oracles.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use specinterp_core::tree::NodeKind;
use specinterp_core::{MatchOutcome, Prediction, PredictionSet, PredictionTree, Token, TreeNode, END};

const VOCAB: [&str; 3] = ["a", "b", "c"];

fn arb_set(k: usize) -> impl Strategy<Value = PredictionSet> {
    prop::collection::vec(
        (
            prop::collection::vec(prop::sample::select(VOCAB.to_vec()), 1..=3),
            any::<bool>(),
            1u32..=20,
        ),
        0..=k,
    )
    .prop_flat_map(|raw| (Just(raw), 0u32..=20))
    .prop_map(move |(raw, slack)| {
        let total: u32 = raw.iter().map(|r| r.2).sum::<u32>() + slack;
        let items = raw
            .into_iter()
            .enumerate()
            .map(|(i, (words, end, w))| {
                let mut cont: Vec<Token> = words.into_iter().map(Token::from).collect();
                if end {
                    cont.push(Token::from(END));
                }
                let tr = vec![Token::from(format!("t{i}"))];
                Prediction::new(cont, w as f64 / total.max(1) as f64, tr)
            })
            .collect();
        PredictionSet::new(items, k).unwrap()
    })
}

#[derive(Debug, Clone)]
enum Op {
    Advance(usize),
    Expand(Option<PredictionSet>),
    Prune(f64, usize),
}

fn arb_op(k: usize) -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0..VOCAB.len()).prop_map(Op::Advance),
        2 => prop::option::weighted(0.8, arb_set(k)).prop_map(Op::Expand),
        1 => (0.0f64..0.3, 1usize..=5).prop_map(|(e, k)| Op::Prune(e, k)),
    ]
}

fn arb_scenario() -> impl Strategy<Value = (usize, usize, PredictionSet, Vec<Op>)> {
    (1usize..=5, 1usize..=3).prop_flat_map(|(k, d)| {
        (
            Just(k),
            Just(d),
            arb_set(k),
            prop::collection::vec(arb_op(k), 1..20),
        )
    })
}

fn apply(tree: &mut PredictionTree, op: &Op) -> Option<MatchOutcome> {
    match op {
        Op::Advance(w) => {
            let i = tree.observed().len();
            Some(tree.advance(i, &Token::from(VOCAB[*w])).unwrap())
        }
        Op::Expand(ps) => {
            for path in tree.expandable_leaves() {
                tree.expand_with(&path, ps.as_ref());
            }
            None
        }
        Op::Prune(e, k) => {
            tree.prune(*e, *k);
            None
        }
    }
}

/// Total mass stays 1 and the tree invariants hold after every operation.
pub fn mass_conservation(cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&arb_scenario(), |(k, d, set, ops)| {
            let mut tree = PredictionTree::build(Vec::new(), set, d);
            prop_assert!(tree.check().is_ok(), "{:?}", tree.check());
            for op in &ops {
                apply(&mut tree, op);
                let total = tree.total_mass();
                prop_assert!((total - 1.0).abs() <= 1e-9, "mass {total} after {op:?} (k={k})");
                prop_assert!(tree.check().is_ok(), "{:?}", tree.check());
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Leaf view of a tree: named leaves with the next token they predict (or
/// `None` once their edge is used up) and the total Other mass.
pub struct Leaves {
    pub named: Vec<(Option<Token>, f64)>,
    pub other: f64,
}

fn leaves(node: &TreeNode, out: &mut Leaves) {
    for c in &node.children {
        if !c.children.is_empty() {
            leaves(c, out);
        } else if c.kind == NodeKind::Other {
            out.other += c.path_p;
        } else {
            out.named.push((c.edge.get(c.edge_pos).cloned(), c.path_p));
        }
    }
}

pub fn leaf_view(tree: &PredictionTree) -> Leaves {
    let mut l = Leaves {
        named: Vec::new(),
        other: 0.0,
    };
    leaves(tree.root(), &mut l);
    l
}

/// Advancing renormalizes exactly the matching leaves and the residual.
pub fn bayes_advance(cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&(arb_scenario(), 0..VOCAB.len()), |((_, d, set, ops), w)| {
            let mut tree = PredictionTree::build(Vec::new(), set, d);
            for op in &ops {
                apply(&mut tree, op);
            }
            let before = leaf_view(&tree);
            let token = Token::from(VOCAB[w]);

            // Oracle: matching named leaves keep their prior; Others and used-up
            // named leaves keep theirs as Other; everything else is zeroed.
            let mut kept: Vec<f64> = before
                .named
                .iter()
                .filter(|(next, _)| next.as_ref() == Some(&token))
                .map(|(_, m)| *m)
                .collect();
            let other = before.other
                + before
                    .named
                    .iter()
                    .filter(|(next, _)| next.is_none())
                    .map(|(_, m)| m)
                    .sum::<f64>();
            let z: f64 = kept.iter().sum::<f64>() + other;

            let outcome = tree.advance(tree.observed().len(), &token).unwrap();
            let after = leaf_view(&tree);
            if kept.is_empty() {
                let expect = if before.named.is_empty() {
                    MatchOutcome::Matched { survivors: 0 }
                } else {
                    MatchOutcome::Diverged
                };
                prop_assert_eq!(outcome, expect);
                prop_assert!(after.named.is_empty());
                prop_assert!((after.other - 1.0).abs() <= 1e-9);
                return Ok(());
            }
            prop_assert_eq!(outcome, MatchOutcome::Matched { survivors: kept.len() });
            for m in &mut kept {
                *m /= z;
            }
            kept.sort_by(f64::total_cmp);
            let mut got: Vec<f64> = after.named.iter().map(|(_, m)| *m).collect();
            got.sort_by(f64::total_cmp);
            prop_assert_eq!(got.len(), kept.len());
            for (g, e) in got.iter().zip(&kept) {
                prop_assert!((g - e).abs() <= 1e-9, "{got:?} vs {kept:?}");
            }
            prop_assert!((after.other - other / z).abs() <= 1e-9);
            Ok(())
        })
        .map_err(|e| e.to_string())
}
