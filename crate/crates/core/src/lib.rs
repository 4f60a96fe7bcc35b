//! Bias-aware GloVe training: co-occurrence counting, GloVe with AdaGrad,
//! WEAT and analogy metrics, influence-based differential bias per
//! document, and self-correcting debiasing driven by it.

// `!(x > 0.0)` rejects NaN as well; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod biasmetrics;
pub mod cooccurrence;
pub mod corpus;
pub mod error;
pub mod glove;
pub mod influence;
pub mod linalg;
pub mod oracle;
pub mod scglove;
pub mod synthetic;

pub use error::{Error, Result};
