//! Discriminative dictionary learning with a low-rank shared dictionary.
//!
//! The crate is organised bottom-up:
//!
//! * [`blockmat`]: block-partitioned matrix primitives (the block-diagonal
//!   doubling operator, column means, soft and singular value thresholding,
//!   spectral bounds, atom normalisation).
//! * [`solvers`]: generic iterative engines (FISTA, the ODL column update,
//!   ADMM loops for nuclear-norm and incoherence regularised dictionaries).
//! * [`fddl`], [`lrsdl`], [`dlsi_copar`]: the learning methods built on top.
//! * [`synthdata`]: text matrix/label I/O and the shared-feature generator.
//! * [`bench`] and [`complexity`]: convergence harness and the analytic
//!   operation-count tables.

pub mod bench;
pub mod blockmat;
pub mod complexity;
pub mod dlsi_copar;
mod error;
pub mod fddl;
pub mod linalg;
pub mod lrsdl;
pub mod model;
pub mod pipeline;
pub mod solvers;
pub mod synthdata;

pub use blockmat::BlockLayout;
pub use error::{Error, Result};
pub use model::{CoefficientMatrix, DictionaryModel, HyperParams, LabeledDataset, Method};
