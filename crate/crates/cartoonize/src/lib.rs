//! Reference-guided photo cartoonization.
//!
//! A photo and a reference cartoon image are each mapped to a four-scale
//! *feature model* by a frozen encoder ([`modeling`]), the photo's model is
//! aligned to the reference's channel statistics through gated blending
//! ([`coordination`]), and the result is decoded back to an image
//! ([`rendering`]). Training ([`train`]) is unpaired and adversarial
//! ([`adversary`], [`losses`]); inference ([`infer`]) includes a two-pass
//! tiled mode for images far larger than memory allows end-to-end.
//!
//! See the `examples/` directory for one runnable program per capability
//! and the `cartoonize` binary for the command-line surface.

pub mod adversary;
pub mod archive;
pub mod checkpoint;
pub mod coordination;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod image_io;
pub mod infer;
pub mod losses;
pub mod modeling;
pub mod nn;
pub mod rendering;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
