//! A desk-scale lab for CTR-driven ad text generation.
//!
//! Candidates come from exemplar-guided stylization ([`generators`]) or a
//! unigram sampling baseline. A simulated A/B/n test with a mirrored AA
//! group ([`sim`]) turns them into click feedback, which [`pref`] converts
//! into gain- and confidence-weighted preference pairs. [`optim`] trains a
//! log-linear discrete-choice policy on those pairs with a weighted DPO
//! objective, and [`metrics`] scores diversity and win rates. [`pipeline`]
//! chains the stages over JSONL files.

pub mod corpus;
pub mod error;
pub mod generators;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod pref;
pub mod seed;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};
