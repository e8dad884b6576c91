//! Low-precision linear algebra for CNN inference.
//!
//! The crate multiplies matrices of 4-bit (or 8-bit) unsigned quantized values
//! using micro-kernels that accumulate element products in 16-bit lanes. The
//! zero-point cross terms that a direct `(q - z)` product would need are pulled
//! out of the inner loop and applied afterwards as row/column corrections, so
//! the hot loop is a plain unsigned widening multiply-accumulate.
//!
//! Modules:
//!
//! * [`quant`] — linear quantization to/from low-bit unsigned grids.
//! * [`pack`] — operand reordering into the layout the micro-kernels consume.
//! * [`kernel`] — the 8x4 and 24x4 register-tile micro-kernels.
//! * [`qgemm`] — the full corrected matrix product built on top of the above.
//! * [`nn`] — tensors, im2col, quantized/float convolution layers, model files.
//! * [`reference`] — deliberately naive oracles used by tests and verification.

pub mod error;
pub mod kernel;
pub mod nn;
pub mod pack;
pub mod qgemm;
pub mod quant;
pub mod reference;

pub use error::Error;
