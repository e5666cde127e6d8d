pub mod avoidance;
pub mod contour;
pub mod distance;
pub mod error;
pub mod flow;
pub mod grid;
pub mod interpolation;
pub mod oracle;
pub mod scenario;
pub mod svg;

pub use error::{Error, Result};
