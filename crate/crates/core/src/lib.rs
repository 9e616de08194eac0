//! Controlled visual stimuli for evaluating vision-language models.
//!
//! Worlds (objects placed on a 9x9 grid) are enumerated exhaustively per
//! setting, rendered deterministically, and paired with closed-ended
//! questions whose ground truth comes from structural oracles. The metrics
//! module scores model or human answers against that ground truth.

pub mod answer;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod par;
pub mod question;
pub mod render;
pub mod replay;
pub mod report;
pub mod world;

pub use error::{Error, Result};
