use std::path::{Path, PathBuf};

use oesnn_harness::mnist::{load_mnist, parse_images, write_idx, IdxError};
use oesnn_harness::{ErrorKind, HarnessError};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn reads_fixture_written_by_python() {
    let d = load_mnist(
        &fixture("tiny-images-idx3-ubyte"),
        &fixture("tiny-labels-idx1-ubyte"),
    )
    .unwrap();
    assert_eq!((d.rows, d.cols, d.len()), (2, 3, 3));
    assert_eq!(d.labels, vec![7, 0, 9]);
    assert_eq!(d.image(1), &[6, 7, 8, 9, 10, 11]);
    assert_eq!(d.normalized(0)[5], 5.0 / 255.0);
}

#[test]
fn writer_matches_fixture_bytes() {
    let pixels: Vec<u8> = (0..18).collect();
    let (img, lab) = write_idx(2, 3, &pixels, &[7, 0, 9]);
    assert_eq!(
        img,
        std::fs::read(fixture("tiny-images-idx3-ubyte")).unwrap()
    );
    assert_eq!(
        lab,
        std::fs::read(fixture("tiny-labels-idx1-ubyte")).unwrap()
    );
}

#[test]
fn bad_magic_reports_offset_and_value() {
    let err = load_mnist(
        &fixture("bad-magic-images-idx3-ubyte"),
        &fixture("tiny-labels-idx1-ubyte"),
    )
    .unwrap_err();
    match &err {
        IdxError::BadMagic {
            offset,
            found,
            expected,
            ..
        } => assert_eq!((*offset, *found, *expected), (0, 0x802, 0x803)),
        other => panic!("{other}"),
    }
    assert!(err.to_string().contains("0x00000802"));
}

#[test]
fn truncation_reports_offset() {
    let err = load_mnist(
        &fixture("truncated-images-idx3-ubyte"),
        &fixture("tiny-labels-idx1-ubyte"),
    )
    .unwrap_err();
    match err {
        IdxError::Truncated {
            offset,
            needed,
            len,
            ..
        } => assert_eq!((offset, needed, len), (16, 34, 30)),
        other => panic!("{other}"),
    }
    let err = parse_images(Path::new("x"), &[0, 0, 8]).unwrap_err();
    assert!(matches!(err, IdxError::Truncated { offset: 0, .. }));
}

#[test]
fn count_mismatch_and_bad_label_are_distinct() {
    let err = load_mnist(
        &fixture("tiny-images-idx3-ubyte"),
        &fixture("short-labels-idx1-ubyte"),
    )
    .unwrap_err();
    assert!(
        matches!(
            err,
            IdxError::CountMismatch {
                images: 3,
                labels: 2,
                ..
            }
        ),
        "{err}"
    );
    let err = load_mnist(
        &fixture("tiny-images-idx3-ubyte"),
        &fixture("bad-value-labels-idx1-ubyte"),
    )
    .unwrap_err();
    assert!(
        matches!(
            err,
            IdxError::BadLabel {
                offset: 9,
                value: 12,
                ..
            }
        ),
        "{err}"
    );
    let err = load_mnist(&fixture("missing"), &fixture("tiny-labels-idx1-ubyte")).unwrap_err();
    assert!(matches!(err, IdxError::Io { .. }));
}

#[test]
fn idx_errors_map_to_data_exit_code() {
    let err = load_mnist(
        &fixture("truncated-images-idx3-ubyte"),
        &fixture("tiny-labels-idx1-ubyte"),
    )
    .unwrap_err();
    let h: HarnessError = err.into();
    assert_eq!(h.kind, ErrorKind::Data);
    assert_eq!(h.kind.exit_code(), 3);
}
