pub mod config;
pub mod error;
pub mod geometry;
pub mod grid_lemma;
pub mod preferences;
pub mod sperner;
pub mod triangulation;
pub mod verifier;

pub use error::{Error, Result};
