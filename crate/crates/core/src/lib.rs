//! Generative adversarial wavelet neural operators (GAWNO) for unsupervised
//! fault detection and isolation in multivariate time series.
//!
//! The crate is organized bottom-up:
//!
//! - [`autodiff`], [`optim`]: tensors with reverse-mode differentiation and Adam.
//! - [`wavelet`]: Daubechies filter banks, multilevel DWT, downlift/uplift.
//! - [`wib`]: wavelet integral blocks.
//! - [`network`]: U-Net shaped generator and discriminator operators.
//! - [`train`]: adversarial training loop and checkpoints.
//! - [`fdi`]: reconstruction-error detection, isolation and metrics.
//! - [`data`]: CSV ingestion, normalization, windowing and synthetic faults.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod fdi;
pub mod gradcheck;
mod kernels;
pub mod optim;
pub mod par;
pub mod tensor;
pub mod train;
pub mod wavelet;
pub mod network;
pub mod wib;

pub use error::{GawnoError, Result};
pub use tensor::{Tensor, TimeSeriesBatch};
