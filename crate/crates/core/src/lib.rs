pub mod cli;
pub mod data;
pub mod eval;
pub mod model;
pub mod numeric;
pub mod training;
mod binio;
mod error;

pub use error::{Error, Result};
