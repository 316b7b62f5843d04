pub mod aggregate;
pub mod corpus;
pub mod error;
pub mod jsonl;
pub mod nereval;
pub mod pipeline;
pub mod stats;
pub mod tagcodec;
pub mod weaklabel;

pub use error::{Error, Result};
