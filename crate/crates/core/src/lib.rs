//! Euler characteristic curves of 2D and 3D grayscale images.
//!
//! The curve is computed from the vector of changes in the Euler
//! characteristic (VCEC): each voxel adds the signed count of the cubical
//! faces it introduces to the histogram bin of its value, and a prefix sum
//! over the bins gives χ at every threshold. Images larger than memory are
//! streamed in padded slabs along axis 0.
//!
//! ```
//! use vcec::{curve, engine, exec::Workers, grid::{Dims, Image}};
//!
//! let ring = Image::from_u8(Dims::new(3, 3, 1)?, vec![0, 0, 0, 0, 9, 0, 0, 0, 0])?;
//! let plan = engine::ChunkPlan::single(ring.dims());
//! let vcec = engine::image_vcec(&ring, &plan, &Workers::sequential())?;
//! let ecc = curve::vcec_to_ecc(&vcec)?;
//! let chi: Vec<i64> = ecc.points().iter().map(|p| p.chi).collect();
//! assert_eq!(chi, [0, 1]);
//! # Ok::<(), vcec::Error>(())
//! ```

pub mod curve;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod exec;
pub mod grid;
pub mod index;
pub mod kernel;
pub mod oracle;
pub mod cli;
pub mod report;

pub use error::{Error, Result};
