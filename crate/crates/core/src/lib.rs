pub mod config;
pub mod error;
pub mod expr;
pub mod fmo;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod observability;
pub mod phi;
pub mod pipeline;
pub mod schedule;

pub use error::{Error, Result};
