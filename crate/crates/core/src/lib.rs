//! Cloze-test scoring: normalization and edit distance, POS and embedding
//! providers, the per-gap evaluator, and the statistics used to calibrate
//! the similarity threshold and check agreement with human raters.

pub mod agreement;
pub mod backends;
pub mod calibration;
pub mod evaluator;
pub mod io;
pub mod metrics;
pub mod model;
pub mod textnorm;
