//! Reduced-lead ECG super-diagnostic classification with embedding alignment.
//!
//! A 12-lead teacher (InceptionTime encoder, metadata concatenation, linear
//! projection, MLP pseudo-classifier) is trained first. Reduced-lead students
//! then reuse the teacher's frozen pseudo-classifier and are trained with a
//! classification loss plus an `alpha`-weighted distance between their
//! embeddings and the teacher's embeddings of the same record.

pub mod dataset;
pub mod error;
pub mod loss;
pub mod metadata;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod registry;
pub mod training;

pub use error::{Error, Result};

/// The five PTB-XL diagnostic superclasses, in label-vector order.
pub const SUPERCLASSES: [&str; 5] = ["NORM", "MI", "STTC", "CD", "HYP"];

/// Number of superclasses.
pub const N_CLASSES: usize = SUPERCLASSES.len();
