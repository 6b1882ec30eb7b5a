//! Keyed inference on linearly transformed images.
//!
//! A convolutional network made only of linear layers and ReLU is lowered to
//! a chain of sparse affine matrices `W_i`. Each layer boundary gets a secret
//! key `A_i`, a nonnegative generalized doubly stochastic matrix, and the
//! published network holds only the products `A_i W_i A_{i-1}^-1`. Running
//! it on an image encoded as `A_0 x` yields `A_k N(x)`, so inference never
//! sees the raw image.
//!
//! Modules:
//! - [`sparsekit`]: COO and tiled sparse kernels plus their blob formats.
//! - [`keys`]: key generation with analytically sparse inverses.
//! - [`netir`]: network description, Toeplitz lowering, plain forward pass.
//! - [`keynet`]: key chains, keyed network construction, keyed inference,
//!   verification and memory statistics.
//! - [`sensor`]: fiber-bundle and CMOS simulation of the optical key.
//! - [`analysis`]: chosen-plaintext key recovery, nonnegative split, SSIM.

pub mod analysis;
pub mod dense;
pub mod error;
pub mod exec;
pub mod imageio;
pub mod keynet;
pub mod keys;
pub mod netir;
pub mod rng;
pub mod sensor;
pub mod sparsekit;
pub mod store;

pub use error::{Error, Result};
pub use exec::Exec;
