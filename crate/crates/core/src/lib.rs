pub mod audio;
pub mod annotation;
pub mod backends;
pub mod dataset;
pub mod error;
pub mod features;
pub mod models;
pub mod pipeline;
pub mod projection;
pub mod synth;

pub use error::{Error, Result};
