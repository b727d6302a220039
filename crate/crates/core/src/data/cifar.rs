//! CIFAR binary batches: fixed-size records of label byte(s) followed by
//! 3072 channel-major pixel bytes (1024 red, 1024 green, 1024 blue).

use std::path::Path;

use super::{scale_byte, LabeledImages};
use crate::error::{Error, Result};

pub const CIFAR_IMAGE_BYTES: usize = 3 * 32 * 32;

/// Parse records with `label_bytes` leading label bytes; the last of them is
/// the class id (CIFAR-100's fine label).
pub fn parse_cifar(bytes: &[u8], label_bytes: usize, classes: usize, into: &mut LabeledImages) -> Result<()> {
    let record = label_bytes + CIFAR_IMAGE_BYTES;
    if bytes.len() % record != 0 {
        return Err(Error::Format(format!(
            "CIFAR file length {} is not a multiple of the {record}-byte record",
            bytes.len()
        )));
    }
    for rec in bytes.chunks_exact(record) {
        let label = usize::from(rec[label_bytes - 1]);
        if label >= classes {
            return Err(Error::Format(format!("CIFAR label {label} out of range")));
        }
        into.labels.push(label);
        into.images.extend(rec[label_bytes..].iter().map(|&b| scale_byte(b)));
    }
    Ok(())
}

fn load(paths: &[impl AsRef<Path>], label_bytes: usize, classes: usize, source: &str) -> Result<LabeledImages> {
    let mut out = LabeledImages {
        images: Vec::new(),
        dims: (3, 32, 32),
        labels: Vec::new(),
        classes,
        source: source.to_string(),
    };
    for p in paths {
        let bytes = std::fs::read(p.as_ref())?;
        parse_cifar(&bytes, label_bytes, classes, &mut out)?;
    }
    Ok(out)
}

/// CIFAR-10: 1 label byte + 3072 pixel bytes per record.
pub fn load_cifar10(paths: &[impl AsRef<Path>]) -> Result<LabeledImages> {
    load(paths, 1, 10, "cifar10")
}

/// CIFAR-100: coarse label byte, fine label byte, 3072 pixel bytes.
pub fn load_cifar100(paths: &[impl AsRef<Path>]) -> Result<LabeledImages> {
    load(paths, 2, 100, "cifar100")
}
