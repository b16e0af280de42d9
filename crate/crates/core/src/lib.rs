//! Anti-aliased downsampling for residual networks: non-trainable blur
//! filters in four placement variants, a reverse-mode autodiff network
//! builder, spectral aliasing diagnostics, shift-consistency measurement,
//! corruption-error metrics, and a minimal few-shot NCC evaluator.
//!
//! Core math is generic over the scalar type ([`scalar::Scalar`], f32 or
//! f64); the aliases below pin the f64 instantiation that the CLI, the
//! checkpoint format, and the gradient checks use.

pub mod activation;
pub mod antialias;
pub mod dataset;
pub mod dft;
pub mod error;
pub mod fewshot;
pub mod network;
pub mod robustness;
pub mod scalar;
pub mod spectral;
pub mod tensor;

pub use activation::Activation;
pub use antialias::{BlurSpec, Variant};
pub use dataset::LabeledImages;
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use spectral::{AliasReport, ConsistencyReport};
pub use tensor::PaddingMode;

/// Default 64-bit tensor used by the network stack and the CLI.
pub type Tensor = tensor::Tensor<f64>;
/// 32-bit tensor for callers that trade precision for footprint.
pub type Tensor32 = tensor::Tensor<f32>;
/// Default 64-bit spectrum.
pub type Spectrum = dft::Spectrum<f64>;
