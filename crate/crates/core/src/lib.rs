//! Learned bit-depth scalable video codec for HDR content: a base layer
//! coding tone-mapped LDR video and an enhancement layer coding 12-bit PQ
//! HDR video, conditioned on the base layer through a dynamic-range-prior
//! guided bit-depth enhancement module. Includes the training stack, the
//! bitstream container, PU-domain quality metrics, BD-rate, and dataset
//! diversity statistics.

pub mod codec;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod frame;
pub mod nn;
pub mod prior;
pub mod stats;
pub mod synth;
pub mod train;
pub mod transfer;

pub use error::{Error, Result};
