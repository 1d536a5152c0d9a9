//! Zero-dimensional extended affine Deligne-Lusztig varieties for the
//! tamely ramified torus of GL2 over F_q((t)), with exact arithmetic.

pub mod adlv;
pub mod chars;
pub mod error;
pub mod field;
pub mod gl2;
pub mod rep;
pub mod series;
pub mod suite;

pub use error::{Error, Result};
pub use field::{Field, FieldParams, Fq};
pub use series::Series;
