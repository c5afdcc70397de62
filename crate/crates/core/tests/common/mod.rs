//! Property checks shared by the core test targets and the acceptance suite.
#![allow(dead_code)]

pub mod consensus;
pub mod ngram;
pub mod scenario;
pub mod tree;
