//! Binary hyperdimensional classifiers for identifying what kind of input
//! corruption a deployed network is facing.
//!
//! The crate covers the whole laboratory: packed hypervectors, random and
//! MLP-learned projections, single-pass and retrained class banks, image
//! corruptions, feature tapping from a surrogate network, the sliding-window
//! accuracy trigger, and SSIM-based analysis of corruption similarity.
//!
//! ```
//! use debughd::{encoding::ProjectionMatrix, dataset::{LabeledFeatureSet, Split}, hdc};
//!
//! let samples = vec![
//!     (vec![1.0, 0.0, 0.2], 0),
//!     (vec![0.9, 0.1, 0.0], 0),
//!     (vec![0.0, 1.0, 0.8], 1),
//!     (vec![0.1, 0.9, 1.0], 1),
//! ];
//! let names = vec!["left".to_string(), "right".to_string()];
//! let set = LabeledFeatureSet::new(samples, names, Split::Train).unwrap();
//! let proj = ProjectionMatrix::random(3, 512, 7).unwrap();
//! let bank = hdc::train_single_pass(&proj, &set).unwrap();
//! assert_eq!(bank.classify(&[1.0, 0.05, 0.1]).unwrap().top1(), 0);
//! ```

pub mod analysis;
pub mod corpus;
pub mod corruptions;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod experiment;
pub mod hdc;
pub mod hypervec;
pub mod image;
pub mod linalg;
pub mod mlp;
pub mod model;
pub mod monitor;
pub mod pipeline;
pub mod seed;

pub use error::{Error, Result};
pub use hypervec::{AccumulatorVector, Hypervector};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/hypervectors.md")]
    mod hypervectors {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/corruptions.md")]
    mod corruptions {}
    #[doc = include_str!("../../../book/src/monitor.md")]
    mod monitor {}
    #[doc = include_str!("../../../book/src/similarity.md")]
    mod similarity {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
