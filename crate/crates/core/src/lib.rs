pub mod bench;
pub mod cli;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod projection;
pub mod providers;
pub mod query;
pub mod rasterizer;
pub mod scene;
pub mod vecstore;

pub use error::{Error, Result};
