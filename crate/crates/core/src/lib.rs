//! Speaker-embedding (d-vector) toolkit: MFCC front-end, LSTM speaker
//! encoder, embedding store, embedding-space analyses, and the fixed-shift
//! cross-lingual transform with accent scaling, plus a synthetic oracle for
//! checking all of them against known truth.

pub mod analysis;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod features;
pub mod oracle;
pub mod store;
pub mod transform;

pub use embedding::Embedding;
pub use error::{Error, Result};
