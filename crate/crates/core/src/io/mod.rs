//! Dataset loading, structure files and CSV output.

pub mod csv;
pub mod mnist;
pub mod structure;
pub mod synthetic;

pub use self::csv::{write_csv, CsvSchema};
pub use mnist::{load_mnist_dir, load_mnist_idx};
pub use structure::{load_structure, save_structure, StructureFile, StructureMeta};
pub use synthetic::synthetic_gaussians;

/// Environment variable naming the default MNIST directory.
pub const DATA_DIR_ENV: &str = "SPARSELAB_DATA_DIR";
