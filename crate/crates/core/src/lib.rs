//! Desk-scale FMCW radar micro-Doppler classification pipeline.
//!
//! The crate covers the whole chain from synthetic ADC samples to an
//! explained classification:
//!
//! ```text
//! scene ──synth──▶ AdcCube ──range/Doppler FFT──▶ RdCube ──CA-CFAR──▶ detections
//!   ──group/angle FFT/cluster──▶ centroids ──crop+stack──▶ BboxCube ──STFT──▶ MdsTensor
//!   ──reduce──▶ ReducedMds ──ViT──▶ logits ──Grad-CAM──▶ RelevanceMap
//! ```
//!
//! Every stage is a pure function of its inputs; all randomness is derived
//! from explicit 64-bit seeds (see [`seed`]).

pub mod dsp;
pub mod error;
pub mod io;
pub mod mds;
pub mod nn;
pub mod pipeline;
pub mod radar;
pub mod rva;
pub mod scene;
pub mod seed;
pub mod train;
pub mod xai;

pub use error::{Error, Result};
pub use num_complex::Complex64;
