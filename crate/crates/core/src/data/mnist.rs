//! Locating and loading the MNIST IDX files.

use std::fs;
use std::path::Path;

use crate::data::idx::{parse_idx_images, parse_idx_labels};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Shape;

pub const NUM_CLASSES: usize = 10;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// SHA-256 of each uncompressed file.
pub const CHECKSUMS: [(&str, &str); 4] = [
    (TRAIN_IMAGES, "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db"),
    (TRAIN_LABELS, "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5"),
    (TEST_IMAGES, "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7"),
    (TEST_LABELS, "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn files(self) -> (&'static str, &'static str) {
        match self {
            Split::Train => (TRAIN_IMAGES, TRAIN_LABELS),
            Split::Test => (TEST_IMAGES, TEST_LABELS),
        }
    }
}

/// Builds a dataset from raw image and label IDX bytes.
pub fn assemble(name: &str, image_bytes: &[u8], label_bytes: &[u8], num_classes: usize) -> Result<Dataset> {
    let images = parse_idx_images(image_bytes)?;
    let labels = parse_idx_labels(label_bytes)?;
    if labels.len() != images.count {
        return Err(Error::input(format!("{} images but {} labels", images.count, labels.len())));
    }
    Dataset::new(
        name,
        Shape::new(1, images.rows, images.cols),
        num_classes,
        images.pixels,
        labels.into_iter().map(usize::from).collect(),
    )
}

pub fn load(dir: &Path, split: Split) -> Result<Dataset> {
    let (img, lbl) = split.files();
    let read = |name: &str| {
        fs::read(dir.join(name))
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.join(name).display()))))
    };
    let name = match split {
        Split::Train => "mnist-train",
        Split::Test => "mnist-test",
    };
    assemble(name, &read(img)?, &read(lbl)?, NUM_CLASSES)
}
