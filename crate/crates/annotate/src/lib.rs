//! Annotation campaign service: assigns batches of stimuli to annotators,
//! records their choices durably, applies quality control and aggregates the
//! approved votes into an annotation matrix.

mod config;
mod server;
mod store;

pub use config::{Campaign, CampaignConfig};
pub use server::{router, serve};
pub use store::{
    Ack, Aggregate, AnnotationRecord, CampaignStatus, Incomplete, Next, Progress, Session, SessionStatus, Store,
    quality_control,
};

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid answer: {0}")]
    Validation(String),
    #[error("out of sequence: {0}")]
    Sequencing(String),
    #[error("campaign complete: every stimulus has reached its annotation target")]
    CampaignComplete,
    #[error("unauthorized")]
    Unauthorized,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("corrupt campaign data: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] civet_core::Error),
}
