//! Bundled sample images: a small class-balanced excerpt of the MNIST
//! handwritten-digit set (600 train / 100 test), embedded so demos,
//! self-tests and smoke tests run without any downloaded data.

use crate::data::{dataset_from_idx, Dataset, Split};

const TRAIN_IMAGES: &[u8] = include_bytes!("../assets/sample-train-images.idx");
const TRAIN_LABELS: &[u8] = include_bytes!("../assets/sample-train-labels.idx");
const TEST_IMAGES: &[u8] = include_bytes!("../assets/sample-test-images.idx");
const TEST_LABELS: &[u8] = include_bytes!("../assets/sample-test-labels.idx");

/// The embedded training split.
pub fn train() -> Dataset {
    dataset_from_idx("sample", Split::Train, TRAIN_IMAGES, Some(TRAIN_LABELS))
        .expect("embedded sample data is well-formed")
}

/// The embedded test split.
pub fn test() -> Dataset {
    dataset_from_idx("sample", Split::Test, TEST_IMAGES, Some(TEST_LABELS))
        .expect("embedded sample data is well-formed")
}
