pub mod error;
pub mod expr;
pub mod geometry;
pub mod control;
pub mod dynamics;
pub mod lagrangian;
pub mod reduction;
pub mod report;
pub mod symmetry;
pub mod sysdef;

pub use error::{Error, Result};
