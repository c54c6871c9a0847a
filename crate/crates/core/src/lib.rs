//! One-vs-All information bottleneck (OVA-IB) for contrastive alignment of
//! an arbitrary number of modalities.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense matrices and the closed-form ridge projection.
//! - [`info_oracle`]: exact entropies, TC, DTC, DV bounds and Gaussian KL.
//! - [`autodiff`]: a small reverse-mode engine, MLP encoders and Adam.
//! - [`losses`]: One-vs-All InfoNCE with projection or MLP scoring, the
//!   minimality regulariser, their sum, and the pairwise CLIP baseline.
//! - [`synth`]: linear-Gaussian essence/nuisance datasets.
//! - [`eval`]: retrieval mAP and linear probes.
//! - [`pipeline`]: run configs, training, checkpoints and evaluation runs.
//! - [`verify`]: the numerical certification sweeps.

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod info_oracle;
pub mod linalg;
pub mod losses;
pub mod pipeline;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
