//! Shape primitive histogram (SPH) descriptors for grayscale face images,
//! together with the evaluation pipeline around them: PCA/LDA reduction,
//! nearest-neighbour and collaborative-representation classifiers,
//! cross-validation protocols, parameter sweeps and extraction benchmarks.
//!
//! ```
//! use sph::descriptor::{extract_sph, SphParams};
//! use sph::imageio::GrayImage;
//!
//! let img = GrayImage::from_fn(32, 32, |x, y| ((x * 7) ^ (y * 13)) as u8).unwrap();
//! let d = extract_sph(&img, &SphParams::default()).unwrap();
//! assert_eq!(d.len(), 735);
//! ```

pub mod classify;
pub mod cli;
pub mod descriptor;
pub mod error;
pub mod experiments;
pub mod features;
pub mod imageio;
pub mod primitives;
pub mod subspace;

pub use error::{Error, Result};
