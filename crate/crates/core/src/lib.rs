//! Continuous emotion manifolds for text.
//!
//! Discrete emotion labels are placed in a low-dimensional space by running
//! classical MDS over their class centroids; documents are mapped into the
//! same space by a least-squares linear projection; and classifiers then work
//! on those manifold coordinates instead of on the raw bag of words.

pub mod classify;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod manifold;
pub mod pipeline;
pub mod plot;
pub mod projection;
pub mod synth;

pub use error::{Error, Result};
