//! Outlier-exposure contrastive learning (OECL) laboratory.
//!
//! A small, fully deterministic stack for studying how the ℓ₂-norm of
//! contrastive features separates in-distribution data from outliers:
//!
//! - [`tensor`]: dense tensors with reverse-mode autodiff
//! - [`encoder`]: MLP encoder + projection producing contrastive features
//! - [`losses`]: NT-Xent, alignment/uniformity, and OE norm-penalty losses
//! - [`data`]: synthetic datasets, augmentations, distribution shifts
//! - [`scoring`]: anomaly scores, norm statistics, exact AUROC
//! - [`theory`]: Monte Carlo / quadrature verification of the cosine bounds
//! - [`harness`]: training loop, experiment drivers, config, CSV output

pub mod data;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod losses;
pub mod rng;
pub mod scoring;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use tensor::Tensor;
