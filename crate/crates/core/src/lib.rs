//! Multi-label text classification toolkit.
//!
//! The crate is organised the way an experiment flows:
//!
//! * [`corpus`]: label spaces, label sets, datasets, JSONL ingestion, statistics
//!   and the vote-threshold filter used to turn raw reaction counts into labels.
//! * [`textprep`]: normalisation, token replacement, stopwords, stemming,
//!   TF-IDF and embedding-sequence encoding.
//! * [`learners`]: single-label probabilistic base learners (multinomial naive
//!   Bayes, random forest, linear max-margin, kNN).
//! * [`lstm`]: a single-layer LSTM binary classifier with a certified backward pass.
//! * [`transforms`]: BR, CC, LP, RAkEL, HOMER, CLR and MLkNN behind one
//!   fit / score / predict contract.
//! * [`evaluation`]: hamming loss, micro-F1, fold plans, cross-validation,
//!   paired t-test and report writers.
//! * [`cli`]: the batch front end (`stats`, `prep`, `run`, `gradcheck`).

pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod learners;
pub mod lstm;
pub mod rng;
pub mod sparse;
pub mod synthetic;
pub mod textprep;
pub mod transforms;

pub use error::{Error, Result};
