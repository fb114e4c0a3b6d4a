//! File formats: the model interchange format, the tensor container, and report artifacts.

mod model_file;
mod report;
mod tensor_file;

pub use model_file::{load_model, model_to_files, save_model, Manifest, FORMAT_VERSION};
pub use report::{format_float, read_csv, write_csv, write_heatmap, write_pgm, HeatmapScale};
pub use tensor_file::{read_tensor, read_tensor_bytes, tensor_bytes, write_tensor, Dtype};
