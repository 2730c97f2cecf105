//! Weakly supervised land-cover mapping from coarse labels to fine imagery.
//!
//! The crate covers the whole chain: fusing several coarse land-cover
//! products and road vectors into training labels ([`fusion`]), a
//! resolution-preserving convolutional backbone with hand-written gradients
//! ([`net`]), the confident-area masked cross-entropy and vague-area feature
//! loss ([`loss`]), training and seamless tiled prediction ([`train`],
//! [`mosaic`]), accuracy assessment ([`assess`]) and synthetic scenes for
//! testing all of it ([`synth`]).

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assess;
pub mod config;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod loss;
pub mod mosaic;
pub mod net;
pub mod scheme;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod vector;

pub use error::{Error, Result};
pub use grid::{GeoRef, PixelRect, RasterGrid};
pub use net::{NetParams, RPBackboneConfig};
pub use scheme::{ClassScheme, UNLABELED};
pub use tensor::TensorMap;
