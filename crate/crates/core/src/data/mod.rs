//! Loading, encoding, splitting, and group-noise handling.

mod encode;
mod noise;
mod split;
mod table;

pub use encode::{
    bucket_of, encode, quartile_edges, EncodedColumn, EncodedDataset, Encoder, FeatureMatrix,
    TrainView,
};
pub use noise::{estimate_noise_model, load_group_pairs, NoiseModel};
pub use split::{flip_count, inject_noise, split, split_indices, SplitSpec};
pub use table::{load_csv, read_csv, Cell, ColumnKind, ColumnSpec, RawTable, Schema};
