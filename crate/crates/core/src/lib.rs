//! Bit-exact inference for ultra-compact 1D binary neural networks.
//!
//! Activations are packed one bit per element in time-major order, so a
//! convolution window of `K` timesteps over `C_in` channels is a run of
//! `K * C_in` consecutive bits regardless of whether `C_in` fills a word.
//! Every layer is checked against the plain-arithmetic definitions in
//! [`oracle`].

pub mod bitpack;
pub mod cli;
pub mod layers;
pub mod oracle;
pub mod model;
pub mod rf;
pub mod synth;
