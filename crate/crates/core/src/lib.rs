//! PALPS: a process algebra with locations for population systems.
//!
//! Models are parsed from text ([`parser`]), given a probabilistic
//! operational semantics ([`semantics`]), explored into Markov decision
//! processes ([`statespace`]) and then either model checked against PCTL
//! properties ([`pctl`]) or sampled ([`simulator`]).

pub mod ast;
pub mod corpus;
pub mod env;
pub mod number;
pub mod parser;
pub mod pctl;
pub mod semantics;
pub mod simulator;
pub mod statespace;

pub use ast::Model;
pub use number::Real;
pub use parser::{parse_formula, parse_model, ParseError};

/// Top-level error for operations that touch files or combine stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("cannot read {path}: {source}")]
    Read { path: std::path::PathBuf, source: std::io::Error },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("model is not well-formed:\n{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    IllFormed(Vec<ast::Diagnostic>),
    #[error(transparent)]
    Build(#[from] statespace::BuildError),
    #[error(transparent)]
    Check(#[from] pctl::CheckError),
    #[error(transparent)]
    Simulate(#[from] simulator::SimError),
}

impl Error {
    /// Whether the error signals a broken invariant of the implementation
    /// rather than a problem with the input.
    pub fn is_internal(&self) -> bool {
        match self {
            Error::Build(e) => e.is_internal(),
            Error::Simulate(simulator::SimError::Semantics(e)) => e.is_internal(),
            _ => false,
        }
    }
}

/// Reads and parses a model file and rejects it if it is not well-formed.
/// With `close_channels`, every replication and predation channel is
/// restricted at the top level.
pub fn load_model(path: &std::path::Path, close_channels: bool) -> Result<Model, Error> {
    let mut m = parser::parse_model_file(path)?;
    let errors = ast::check_wellformed(&m);
    if !errors.is_empty() {
        return Err(Error::IllFormed(errors));
    }
    if close_channels {
        m.close_channels();
    }
    Ok(m)
}
