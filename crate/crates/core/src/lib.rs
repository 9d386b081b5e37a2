//! Unsupervised segmentation of photovoltaic thermal images by differentiable
//! feature clustering.
//!
//! A small fixed convolutional network maps a grayscale frame to a per-pixel
//! response over `q_max` channels. The argmax of that response is used as a
//! pseudo-label, and the network is trained on its own labels with a
//! cross-entropy term plus an L1 total-variation term until the label map
//! settles. All gradients are derived by hand; [`gradcheck`] verifies them
//! against central finite differences.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and run manifests live in the `pvseg` companion crate.
//!
//! ## Features
//!
//! * `std` (default): runtime CPU feature detection for the matrix kernels.
//! * `serde`: `Serialize`/`Deserialize` for configuration and result types.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_op_in_unsafe_fn)]

extern crate alloc;

mod error;
mod gemm;
mod math;

pub mod eval;
pub mod gradcheck;
pub mod image;
pub mod loss;
pub mod net;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use image::{ImageGray, ImageRgb};
pub use loss::{LossBreakdown, Reduction};
pub use net::{LabelMap, NetworkParams, ResponseMap, TrainConfig};
pub use tensor::{ConvSpec, Tensor};
pub use train::{SegmentationResult, StopReason};
