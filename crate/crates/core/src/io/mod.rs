//! Files in and out: dataset CSVs, draws, run configs and manifests.

pub mod config;
pub mod dataset;
pub mod draws;
pub mod float_or_string;

pub use config::{parse_split_by, FileEntry, Manifest, ModelKind, RunConfig};
pub use dataset::{parse_cells_csv, parse_dataset_csv, parse_dataset_csv_with_layout, write_dataset_csv};
pub use draws::{read_draws, write_draws};
