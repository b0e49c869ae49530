//! Dense matrix value types and the embedding file formats (VFEB, CSV).

mod csv;
mod dense;
mod embedding;
mod labels;
mod vfeb;

pub use self::csv::{parse_csv, read_csv, write_csv};
pub use dense::{DenseMatrix, Element};
pub use embedding::{EmbeddingMatrix, NORM_TOLERANCE};
pub use labels::{parse_labels, read_labels, write_labels, LabelVector, ShotSet};
pub use vfeb::{decode_vfeb, encode_vfeb, read_vfeb, write_vfeb, FLAG_NORMALIZED, MAGIC, VERSION};

pub(crate) use embedding::row_norm;
