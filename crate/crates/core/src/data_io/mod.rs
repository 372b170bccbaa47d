//! MNIST IDX ingestion, subsampling and splitting.

mod dataset;
mod idx;

pub use dataset::{split, subsample, LabeledDataset, Standardizer};
pub use idx::{
    encode_idx_images, encode_idx_labels, load_idx_images, load_idx_labels, parse_idx_images, parse_idx_labels, IdxImages,
    IMAGE_MAGIC, LABEL_MAGIC,
};

/// Standard MNIST file names inside a data directory.
pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];
