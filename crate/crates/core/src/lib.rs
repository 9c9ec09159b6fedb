//! Layer-compressed global routing with learned net ordering.
//!
//! The pipeline compresses a multilayer grid to one layer, routes every net
//! there, lifts the 2D trees back onto the layers one net at a time, and
//! ranks every net ordering by the quality of the lifted result. Those
//! rankings train small dense networks that predict the best ordering from
//! features of the 2D solution.

pub mod assign;
pub mod datagen;
pub mod error;
pub mod features;
pub mod grid;
pub mod learn;
pub mod ordering;
pub mod route;

pub use error::{Error, Result};
