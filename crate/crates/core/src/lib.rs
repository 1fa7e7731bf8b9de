//! Affect-infused representation learning with supervised contrastive
//! pretraining, evaluated on high/low arousal classification.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affect;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod numcore;
pub mod supcon;
pub mod training;

pub use error::{Error, Result};
