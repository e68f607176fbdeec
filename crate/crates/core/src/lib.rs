pub mod error;
pub mod kinetic_series;
pub mod mechanics;
pub mod numerics;
pub mod reduced_action;
pub mod schrodinger;
pub mod trajectory;

pub use error::{Error, Result};
