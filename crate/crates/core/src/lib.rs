//! Multimodal surgical workflow recognition.
//!
//! Video frames are split into spatial, wavelet and Fourier views, each
//! encoded by a CNN and a temporal convolution network; kinematics pass
//! through an LSTM and a TCN. The four embeddings meet in a graph-attention
//! layer, are aligned by an adversarial discriminator, and are decoded
//! frame by frame under a calibrated cross-entropy.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod corrupt;
pub mod dataset;
pub mod decoder;
pub mod encoders;
pub mod eval;
pub mod error;
pub mod freq;
pub mod gat;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod synth;
pub mod train;
pub mod vka;

pub use error::{GradError, Result};
pub use model::{GradModel, Modality, ModelConfig};
