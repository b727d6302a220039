//! IDX files (MNIST, FashionMNIST): big-endian u32 magic, big-endian u32
//! dimension sizes, then unsigned bytes. Files ending in `.gz` are
//! decompressed first.

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use super::{scale_byte, LabeledImages};
use crate::error::{Error, Result};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut buf)?;
    } else {
        io::BufReader::new(file).read_to_end(&mut buf)?;
    }
    Ok(buf)
}

fn truncated(what: &str) -> Error {
    Error::Io(io::Error::new(
        io::ErrorKind::UnexpectedEof,
        format!("truncated IDX {what}"),
    ))
}

/// Magic and dimension sizes, plus the payload slice that follows them.
fn header(bytes: &[u8], magic: u32, ndims: usize) -> Result<(Vec<usize>, &[u8])> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| truncated("header"))
    };
    let observed = word(0)?;
    if observed != magic {
        return Err(Error::Format(format!(
            "bad IDX magic {observed:#010x}, expected {magic:#010x}"
        )));
    }
    let dims = (1..=ndims).map(|i| word(i).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    Ok((dims, &bytes[4 * (ndims + 1)..]))
}

fn payload<'a>(rest: &'a [u8], dims: &[usize]) -> Result<&'a [u8]> {
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("IDX dims {dims:?} overflow")))?;
    rest.get(..len).ok_or_else(|| truncated("payload"))
}

/// Parse an image file: returns (count, rows, cols, pixels scaled to [0, 1]).
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>)> {
    let (dims, rest) = header(bytes, IDX_IMAGE_MAGIC, 3)?;
    let data = payload(rest, &dims)?;
    Ok((dims[0], dims[1], dims[2], data.iter().map(|&b| scale_byte(b)).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let (dims, rest) = header(bytes, IDX_LABEL_MAGIC, 1)?;
    Ok(payload(rest, &dims)?.iter().map(|&b| usize::from(b)).collect())
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledImages> {
    let (n, rows, cols, images) = parse_idx_images(&read_file(images_path)?)?;
    let labels = parse_idx_labels(&read_file(labels_path)?)?;
    if labels.len() != n {
        return Err(Error::Consistency(format!(
            "{} has {n} images but {} has {} labels",
            images_path.display(),
            labels_path.display(),
            labels.len()
        )));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(LabeledImages {
        images,
        dims: (1, rows, cols),
        labels,
        classes,
        source: images_path.display().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend(d.to_be_bytes());
        }
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn parses_synthetic_image() {
        let bytes = idx_bytes(IDX_IMAGE_MAGIC, &[1, 2, 2], &[0, 128, 255, 64]);
        let (n, r, c, px) = parse_idx_images(&bytes).unwrap();
        assert_eq!((n, r, c), (1, 2, 2));
        let expect = [0.0, 0.50196, 1.0, 0.25098];
        for (a, b) in px.iter().zip(expect) {
            assert!((f64::from(*a) - b).abs() < 1e-5);
        }
        assert_eq!(px[1], (128.0f64 / 255.0) as f32);
    }

    #[test]
    fn wrong_magic_names_observed_value() {
        let bytes = idx_bytes(IDX_IMAGE_MAGIC, &[1], &[3]);
        let err = parse_idx_labels(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("0x00000803"), "{err}");
    }

    #[test]
    fn zero_items_is_empty() {
        let (n, _, _, px) = parse_idx_images(&idx_bytes(IDX_IMAGE_MAGIC, &[0, 28, 28], &[])).unwrap();
        assert_eq!(n, 0);
        assert!(px.is_empty());
        assert!(parse_idx_labels(&idx_bytes(IDX_LABEL_MAGIC, &[0], &[])).unwrap().is_empty());
    }

    #[test]
    fn truncation_is_io_error() {
        let bytes = idx_bytes(IDX_IMAGE_MAGIC, &[2, 2, 2], &[1, 2, 3, 4, 5]);
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Io(_))));
        assert!(matches!(parse_idx_images(&bytes[..6]), Err(Error::Io(_))));
        assert!(matches!(parse_idx_labels(&[]), Err(Error::Io(_))));
    }

    #[test]
    fn count_mismatch_is_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        std::fs::write(&img, idx_bytes(IDX_IMAGE_MAGIC, &[2, 1, 1], &[1, 2])).unwrap();
        std::fs::write(&lab, idx_bytes(IDX_LABEL_MAGIC, &[3], &[0, 1, 2])).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::Consistency(_))));
    }

    #[test]
    fn reads_gzip_and_raw_identically() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let img_bytes = idx_bytes(IDX_IMAGE_MAGIC, &[2, 1, 2], &[9, 8, 7, 6]);
        let lab_bytes = idx_bytes(IDX_LABEL_MAGIC, &[2], &[4, 1]);
        std::fs::write(dir.path().join("i"), &img_bytes).unwrap();
        std::fs::write(dir.path().join("l"), &lab_bytes).unwrap();
        let mut gz = GzEncoder::new(Vec::new(), flate2::Compression::default());
        gz.write_all(&img_bytes).unwrap();
        std::fs::write(dir.path().join("i.gz"), gz.finish().unwrap()).unwrap();
        let raw = load_idx(&dir.path().join("i"), &dir.path().join("l")).unwrap();
        let zipped = load_idx(&dir.path().join("i.gz"), &dir.path().join("l")).unwrap();
        assert_eq!(raw.images, zipped.images);
        assert_eq!(raw.labels, vec![4, 1]);
        assert_eq!(raw.dims, (1, 1, 2));
    }
}
