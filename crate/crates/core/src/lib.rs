//! Learning systematic linear block codes for few-iteration belief-propagation
//! decoding, and testing them against random code search.
//!
//! The crate is organised bottom-up:
//!
//! * [`code`], [`gf2`], [`io`]: standard-form codes `H = [W | I]`, GF(2)
//!   encoding, JSON and alist files.
//! * [`bp`]: sum-product decoding, its gated differentiable form and the
//!   hand-written reverse pass.
//! * [`channel`]: controlled-error training samples, AWGN transmission and
//!   Agresti-Coull sequential BLER estimation.
//! * [`optim`]: gradient-quantization optimizers and the straight-through
//!   baseline.
//! * [`train`]: the training loop with validation and early stopping.
//! * [`search`]: random-code campaigns, empirical CDFs and beat probabilities.
//! * [`graph`]: Tanner-graph girth and degree statistics.

pub mod bp;
pub mod channel;
pub mod code;
pub mod error;
pub mod gf2;
pub mod graph;
pub mod io;
pub mod optim;
pub mod rng;
pub mod search;
pub mod train;

pub use code::{build_generator, encode, sample_w, CodeDimensions, DensitySpec, GeneratorMatrix, ParityCheckMatrix};
pub use error::{Error, Result};
