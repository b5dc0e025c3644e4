//! The model interface shared by the ideal oracle and external adapters.

use thiserror::Error;

use crate::ideal::{PosteriorTable, SequenceState};
use crate::tasks::{TaskError, TaskInstance};

#[derive(Debug, Error)]
pub enum ModelError {
    /// No valid completion exists; decoding against the ideal model never
    /// reaches such a state, so this indicates a bug upstream.
    #[error("inconsistent state: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("transport: {0}")]
    Io(#[from] std::io::Error),
}

/// Answers one posterior query: marginals for all masked positions of `state`.
pub trait PosteriorModel {
    fn posterior(&mut self, instance: &TaskInstance, state: &SequenceState) -> Result<PosteriorTable, ModelError>;
}

impl<M: PosteriorModel + ?Sized> PosteriorModel for &mut M {
    fn posterior(&mut self, instance: &TaskInstance, state: &SequenceState) -> Result<PosteriorTable, ModelError> {
        (**self).posterior(instance, state)
    }
}
