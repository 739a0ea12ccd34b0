//! Text matrix/label I/O and the synthetic shared-feature data generator.

mod generate;
mod io;

pub use generate::{generate, generate_instance, recovery_correlation, GroundTruth, SynthData, SynthSpec};
pub use io::{read_labels, read_matrix, write_labels, write_matrix};
