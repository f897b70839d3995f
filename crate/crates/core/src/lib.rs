//! Pump-and-dump detection for social-media stock discussion.
//!
//! The pipeline pairs posts with daily market bars, flags posts whose
//! symbol shows an abnormal price and volume jump with a gentle rise,
//! propagates those labels to comments, and trains classifiers on the
//! resulting bag-of-words corpus.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod error;
pub mod evaluation;
pub mod explain;
pub mod features;
pub mod ingestion;
pub mod labeling;
pub mod market_events;
pub mod models;
pub mod scalar;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Bar = ingestion::OhlcvBar<f64>;
pub type Window = ingestion::EventWindow<f64>;
pub type Verdict = market_events::AnomalyVerdict<f64>;
pub type Vector = features::SparseVector<f64>;
pub type LogReg = models::LogRegModel<f64>;
pub type Mlp = models::MlpModel<f64>;
pub type Model = models::Classifier<f64>;
