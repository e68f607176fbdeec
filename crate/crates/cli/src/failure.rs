//! Errors tagged with the exit code they map to.

use std::fmt::Display;

#[derive(Debug)]
pub enum Failure {
    /// Unreadable, malformed or invalid input; exit 2.
    Config(anyhow::Error),
    /// The computation itself broke down; exit 3.
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn config(msg: impl Display) -> Self {
        Failure::Config(anyhow::anyhow!("{msg}"))
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Numerical(e) => e,
        }
    }
}

/// Attaches the phase an error happened in.
pub trait Phase<T> {
    fn in_config(self) -> Result<T, Failure>;
    fn in_numerics(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Phase<T> for Result<T, E> {
    fn in_config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn in_numerics(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Numerical(e.into()))
    }
}
