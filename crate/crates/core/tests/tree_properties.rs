//! Randomized checks of the prediction tree against brute-force oracles.

mod common;

use common::tree::leaf_view;
use specinterp_core::{Prediction, PredictionSet, PredictionTree, Token, END};

#[test]
fn mass_is_conserved_through_random_operation_sequences() {
    common::tree::mass_conservation(1000).unwrap();
}

#[test]
fn advance_is_bayesian_conditioning() {
    common::tree::bayes_advance(500).unwrap();
}

#[test]
fn single_match_against_residual_other() {
    let set = PredictionSet::new(
        vec![
            Prediction::new(vec![Token::from("x"), Token::from(END)], 0.4, vec![]),
            Prediction::new(vec![Token::from("y"), Token::from(END)], 0.5, vec![]),
        ],
        4,
    )
    .unwrap();
    let mut t = PredictionTree::build(Vec::new(), set, 3);
    t.advance(0, &Token::from("x")).unwrap();
    let v = leaf_view(&t);
    assert_eq!(v.named.len(), 1);
    assert!((v.named[0].1 - 0.8).abs() < 1e-12);
    assert!((v.other - 0.2).abs() < 1e-12);
}
