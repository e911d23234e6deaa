pub mod align;
pub mod error;
pub mod eval;
pub mod layer;
pub mod mention;
pub mod pipeline;
pub mod spans;
pub mod stats;
pub mod ucca;

pub use error::{Error, Result};
