//! Image datasets, loaders, open-set splits and batching.
//!
//! Expected layout under a data root:
//!
//! ```text
//! <root>/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]
//! <root>/fashion-mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]
//! <root>/cifar-10-batches-bin/{data_batch_1..5,test_batch}.bin
//! <root>/cifar-100-binary/{train,test}.bin
//! ```

mod batch;
mod cifar;
mod idx;
mod split;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use batch::{Batch, Batches};
pub use cifar::{load_cifar10, load_cifar100, parse_cifar, CIFAR_IMAGE_BYTES};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use split::{make_cross_split, make_split, make_split_with_unknowns, OpenSetSplit, UNKNOWN_LABEL};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Images in [0, 1] with their original class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImages {
    /// (n, C, H, W) row-major, byte / 255.
    pub images: Vec<f32>,
    /// (C, H, W)
    pub dims: (usize, usize, usize),
    pub labels: Vec<usize>,
    /// Number of classes of the source; labels lie in [0, classes).
    pub classes: usize,
    pub source: String,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.images[i * n..(i + 1) * n]
    }

    /// Stack the selected images into a (B, C, H, W) tensor.
    pub fn gather(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| f64::from(v)));
        }
        let (c, h, w) = self.dims;
        Tensor::new(vec![indices.len(), c, h, w], data)
    }

    /// Indices of samples whose class is in `classes`, in file order.
    pub fn indices_of(&self, classes: &[usize]) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect()
    }

    /// The first `per_class` samples of every class, in file order.
    pub fn take_per_class(&self, per_class: usize) -> LabeledImages {
        let mut seen = vec![0usize; self.classes.max(1)];
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (i, &y) in self.labels.iter().enumerate() {
            if y >= seen.len() {
                seen.resize(y + 1, 0);
            }
            if seen[y] < per_class {
                seen[y] += 1;
                images.extend_from_slice(self.image(i));
                labels.push(y);
            }
        }
        LabeledImages {
            images,
            dims: self.dims,
            labels,
            classes: self.classes,
            source: self.source.clone(),
        }
    }
}

/// Byte to [0, 1] scaling shared by every loader.
pub(crate) fn scale_byte(b: u8) -> f32 {
    (f64::from(b) / 255.0) as f32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetName {
    Mnist,
    FashionMnist,
    Cifar10,
    Cifar100,
}

impl DatasetName {
    pub fn classes(self) -> usize {
        match self {
            DatasetName::Cifar100 => 100,
            _ => 10,
        }
    }

    /// (channels, height, width) of one image.
    pub fn dims(self) -> (usize, usize, usize) {
        match self {
            DatasetName::Mnist | DatasetName::FashionMnist => (1, 28, 28),
            DatasetName::Cifar10 | DatasetName::Cifar100 => (3, 32, 32),
        }
    }

    /// Directory name under the data root.
    pub fn dir(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::FashionMnist => "fashion-mnist",
            DatasetName::Cifar10 => "cifar-10-batches-bin",
            DatasetName::Cifar100 => "cifar-100-binary",
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetName::Mnist => "mnist",
            DatasetName::FashionMnist => "fashion-mnist",
            DatasetName::Cifar10 => "cifar10",
            DatasetName::Cifar100 => "cifar100",
        })
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetName::Mnist),
            "fashion-mnist" | "fashionmnist" => Ok(DatasetName::FashionMnist),
            "cifar10" => Ok(DatasetName::Cifar10),
            "cifar100" => Ok(DatasetName::Cifar100),
            other => Err(Error::config(format!("unknown dataset {other:?}"))),
        }
    }
}

/// Train and test partitions of one source.
#[derive(Clone, Debug)]
pub struct DatasetPair {
    pub train: LabeledImages,
    pub test: LabeledImages,
}

fn existing(dir: &Path, name: &str) -> Result<PathBuf> {
    for candidate in [dir.join(name), dir.join(format!("{name}.gz"))] {
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{} not found (also tried .gz)", dir.join(name).display()),
    )))
}

/// Whether the files of `name` are present under `root`.
pub fn dataset_available(name: DatasetName, root: &Path) -> bool {
    let dir = root.join(name.dir());
    let files: &[&str] = match name {
        DatasetName::Mnist | DatasetName::FashionMnist => &[
            "train-images-idx3-ubyte",
            "train-labels-idx1-ubyte",
            "t10k-images-idx3-ubyte",
            "t10k-labels-idx1-ubyte",
        ],
        DatasetName::Cifar10 => &[
            "data_batch_1.bin",
            "data_batch_2.bin",
            "data_batch_3.bin",
            "data_batch_4.bin",
            "data_batch_5.bin",
            "test_batch.bin",
        ],
        DatasetName::Cifar100 => &["train.bin", "test.bin"],
    };
    files.iter().all(|f| existing(&dir, f).is_ok())
}

pub fn load_dataset(name: DatasetName, root: &Path) -> Result<DatasetPair> {
    let dir = root.join(name.dir());
    let mut pair = match name {
        DatasetName::Mnist | DatasetName::FashionMnist => DatasetPair {
            train: load_idx(
                &existing(&dir, "train-images-idx3-ubyte")?,
                &existing(&dir, "train-labels-idx1-ubyte")?,
            )?,
            test: load_idx(
                &existing(&dir, "t10k-images-idx3-ubyte")?,
                &existing(&dir, "t10k-labels-idx1-ubyte")?,
            )?,
        },
        DatasetName::Cifar10 => {
            let train: Vec<PathBuf> = (1..=5)
                .map(|i| existing(&dir, &format!("data_batch_{i}.bin")))
                .collect::<Result<_>>()?;
            DatasetPair {
                train: load_cifar10(&train)?,
                test: load_cifar10(&[existing(&dir, "test_batch.bin")?])?,
            }
        }
        DatasetName::Cifar100 => DatasetPair {
            train: load_cifar100(&[existing(&dir, "train.bin")?])?,
            test: load_cifar100(&[existing(&dir, "test.bin")?])?,
        },
    };
    for part in [&mut pair.train, &mut pair.test] {
        if let Some(&bad) = part.labels.iter().find(|&&y| y >= name.classes()) {
            return Err(Error::Format(format!("{name} label {bad} out of range")));
        }
        part.classes = name.classes();
        part.source = name.to_string();
    }
    Ok(pair)
}
