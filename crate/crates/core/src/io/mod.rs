//! Dataset file formats.

mod csv_import;
mod dataset_file;
mod idx;

pub use csv_import::{import_csv, LabelDictionary};
pub use dataset_file::{read_dataset, write_dataset};
pub use idx::{load_idx_dataset, read_idx_images, read_idx_labels, IdxImages, IDX1_MAGIC, IDX3_MAGIC};
