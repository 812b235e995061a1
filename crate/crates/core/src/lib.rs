//! Building blocks for studying transformation-based self-supervised GAN
//! objectives: a small reverse-mode autodiff engine, transformation sets,
//! exact finite-space oracles, MLP models, training losses and evaluation
//! metrics.
pub mod autodiff;
pub mod gradcheck;
pub mod method;
pub mod metrics;
pub mod models;
pub mod objectives;
pub mod optim;
pub mod oracle;
pub mod transform;

pub use autodiff::{AutodiffError, Tape, Tensor, Var};
pub use method::{GenLoss, LossForm, Method};
pub use optim::{adam_step, AdamConfig, AdamState, OptimError};
pub use oracle::{ClassifierTable, FiniteDistribution, MixtureWeights};
pub use transform::{Permutation, Transformation, TransformationSet};
