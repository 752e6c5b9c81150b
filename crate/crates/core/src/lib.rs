pub mod error;
pub mod acquisition;
pub mod data;
pub mod engine;
pub mod evidential;
pub mod model;
pub mod special;

pub use error::{Error, FieldError, Result};
