use proptest::prelude::*;
use rpl::data::{parse_cifar, parse_idx_images, parse_idx_labels, LabeledImages, CIFAR_IMAGE_BYTES, IDX_IMAGE_MAGIC};
use rpl::harness::{ArrayData, Checkpoint, NamedArray};
use rpl::Error;

fn idx_images(n: u32, rows: u32, cols: u32) -> Vec<u8> {
    let mut b = Vec::new();
    for w in [IDX_IMAGE_MAGIC, n, rows, cols] {
        b.extend(w.to_be_bytes());
    }
    b.extend((0..n * rows * cols).map(|i| (i % 256) as u8));
    b
}

fn empty_cifar() -> LabeledImages {
    LabeledImages {
        images: Vec::new(),
        dims: (3, 32, 32),
        labels: Vec::new(),
        classes: 10,
        source: "cifar10".into(),
    }
}

fn structured(e: &Error) -> bool {
    matches!(e, Error::Format(_) | Error::Checksum { .. })
        || matches!(e, Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof)
}

#[test]
fn idx_round_trip_and_scaling() {
    let (n, r, c, px) = parse_idx_images(&idx_images(2, 3, 2)).unwrap();
    assert_eq!((n, r, c, px.len()), (2, 3, 2, 12));
    assert_eq!(px[0], 0.0);
    assert!((px[11] - 11.0 / 255.0).abs() < 1e-7);
}

#[test]
fn every_idx_truncation_is_a_structured_error() {
    let full = idx_images(3, 4, 4);
    for len in 0..full.len() {
        let e = parse_idx_images(&full[..len]).unwrap_err();
        assert!(structured(&e), "len {len}: {e}");
    }
}

#[test]
fn idx_wrong_magic_is_a_format_error() {
    let mut b = idx_images(1, 2, 2);
    b[3] = 0x01;
    assert!(matches!(parse_idx_images(&b), Err(Error::Format(_))));
    // a label file is not an image file and vice versa
    assert!(matches!(parse_idx_labels(&idx_images(1, 2, 2)), Err(Error::Format(_))));
}

#[test]
fn cifar_partial_records_and_bad_labels_are_rejected() {
    let mut rec = vec![3u8];
    rec.extend(std::iter::repeat(7u8).take(CIFAR_IMAGE_BYTES));
    let mut out = empty_cifar();
    parse_cifar(&rec, 1, 10, &mut out).unwrap();
    assert_eq!(out.labels, vec![3]);
    for cut in [1, 100, rec.len() - 1] {
        let e = parse_cifar(&rec[..cut], 1, 10, &mut empty_cifar()).unwrap_err();
        assert!(matches!(e, Error::Format(_)), "{e}");
    }
    rec[0] = 10;
    assert!(matches!(parse_cifar(&rec, 1, 10, &mut empty_cifar()), Err(Error::Format(_))));
}

fn sample_checkpoint() -> Checkpoint {
    let mut c = Checkpoint::new([9; 32]);
    c.arrays.push(NamedArray::new("w", vec![2, 2], ArrayData::F64(vec![1.0, -2.5, 0.0, 1e-300])).unwrap());
    c.arrays.push(NamedArray::new("k", vec![3], ArrayData::I64(vec![0, 5, -1])).unwrap());
    c.arrays.push(NamedArray::bytes("meta.config", b"mode=rpl\n"));
    c
}

#[test]
fn checkpoint_corruption_is_caught() {
    let bytes = sample_checkpoint().to_bytes();
    assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), sample_checkpoint());
    for i in 0..bytes.len() {
        let mut b = bytes.clone();
        b[i] ^= 0x40;
        let e = Checkpoint::from_bytes(&b).unwrap_err();
        assert!(structured(&e), "byte {i}: {e}");
    }
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(Checkpoint::from_bytes(&longer).is_err());
}

proptest! {
    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..4096)) {
        let _ = parse_idx_images(&bytes);
        let _ = parse_idx_labels(&bytes);
        let _ = parse_cifar(&bytes, 1, 10, &mut empty_cifar());
        let _ = parse_cifar(&bytes, 2, 100, &mut empty_cifar());
        let _ = Checkpoint::from_bytes(&bytes);
    }

    #[test]
    fn idx_header_with_random_dims_never_panics(n in any::<u32>(), r in any::<u32>(), c in any::<u32>(), tail in 0usize..64) {
        let mut b = Vec::new();
        for w in [IDX_IMAGE_MAGIC, n, r, c] {
            b.extend(w.to_be_bytes());
        }
        b.extend(std::iter::repeat(1u8).take(tail));
        if let Err(e) = parse_idx_images(&b) {
            prop_assert!(structured(&e), "{}", e);
        }
    }
}
