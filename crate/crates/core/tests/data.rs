use std::io::Write;
use std::path::Path;

use lutnet_core::data::{load_csv, load_dataset, load_idx, synthetic, DataFormat, SplitOptions, SyntheticKind, SyntheticSpec};
use lutnet_core::Error;

fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::File::create(&p).unwrap().write_all(bytes).unwrap();
    p
}

fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut v = vec![0, 0, 8, 3];
    for d in [n, rows, cols] {
        v.extend(d.to_be_bytes());
    }
    v.extend(pixels);
    v
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut v = vec![0, 0, 8, 1];
    v.extend((labels.len() as u32).to_be_bytes());
    v.extend(labels);
    v
}

#[test]
fn idx_pair_loads_and_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<u8> = (0..8 * 4).map(|i| (i * 8) as u8).collect();
    let images = write(dir.path(), "tiny-images-idx3-ubyte", &idx_images(8, 2, 2, &pixels));
    write(dir.path(), "tiny-labels-idx1-ubyte", &idx_labels(&[0, 1, 2, 1, 0, 2, 1, 0]));
    let split = SplitOptions { test_fraction: 0.25, seed: 1 };
    let d = load_dataset(images.to_str().unwrap(), None, &split).unwrap();
    assert_eq!((d.len(), d.width, d.classes), (8, 4, 3));
    assert_eq!((d.train.len(), d.test.len()), (6, 2));
    assert!(d.features.iter().all(|v| (0.0..=1.0).contains(v)));
    let mut all: Vec<usize> = d.train.iter().chain(&d.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..8).collect::<Vec<_>>());
}

#[test]
fn idx_errors() {
    let dir = tempfile::tempdir().unwrap();
    let labels = write(dir.path(), "l", &idx_labels(&[0, 1]));
    let short = write(dir.path(), "a", &idx_images(3, 2, 2, &[0; 11]));
    let split = SplitOptions::default();
    assert!(matches!(load_idx(&short, &labels, &split), Err(Error::Parse { .. })));
    let bad_magic = write(dir.path(), "b", &[1, 2, 3, 4]);
    assert!(matches!(load_idx(&bad_magic, &labels, &split), Err(Error::Parse { .. })));
    let three = write(dir.path(), "c", &idx_images(3, 2, 2, &[0; 12]));
    assert!(matches!(load_idx(&three, &labels, &split), Err(Error::Dataset(_))));
    assert!(matches!(load_idx(&dir.path().join("missing"), &labels, &split), Err(Error::Io(_))));
}

#[test]
fn csv_with_header_and_named_classes() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "t.csv", b"a,b,label\n0,10,cat\n1,20,dog\n2,30,cat\n3,40,eel\n");
    let d = load_csv(&p, &SplitOptions { test_fraction: 0.25, seed: 0 }).unwrap();
    assert_eq!((d.len(), d.width, d.classes), (4, 2, 3));
    assert_eq!(d.labels, vec![0, 1, 0, 2]);
}

#[test]
fn csv_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let split = SplitOptions::default();
    let cases: [(&[u8], usize); 3] = [
        (b"a,b,y\n1,2,0\n3,x,1\n", 3),
        (b"1,2,0\n3,4,1\n5,0\n1,1,1\n", 3),
        (b"1,2,0\n3,4,1\n5,6,1\n1,inf,0\n", 4),
    ];
    for (k, (body, line)) in cases.iter().enumerate() {
        let p = write(dir.path(), &format!("bad{k}.csv"), body);
        match load_csv(&p, &split) {
            Err(Error::Parse { line: got, .. }) => assert_eq!(got, *line, "case {k}"),
            other => panic!("case {k}: {:?}", other.map(|d| d.len())),
        }
    }
    let empty = write(dir.path(), "empty.csv", b"a,b,c\n");
    assert!(load_csv(&empty, &split).is_err());
}

#[test]
fn shipped_csv_loads() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/jsc-mini.csv");
    assert_eq!(DataFormat::infer(path).unwrap(), DataFormat::CsvTabular);
    let d = load_dataset(path, None, &SplitOptions::default()).unwrap();
    assert_eq!((d.len(), d.width, d.classes), (1000, 16, 5));
    assert_eq!(d.test.len(), 250);
}

#[test]
fn synthetic_is_seeded() {
    let split = SplitOptions::default();
    let a = synthetic(&SyntheticSpec::parse("synthetic-digits8x8:samples=300").unwrap(), &split).unwrap();
    let b = load_dataset("synthetic-digits8x8:samples=300", None, &split).unwrap();
    assert_eq!(a.features, b.features);
    assert_eq!((a.width, a.classes), (64, 10));
    let c = load_dataset("synthetic-digits8x8:samples=300,seed=9", None, &split).unwrap();
    assert_ne!(a.features, c.features);
    assert_eq!(SyntheticSpec::parse("synthetic-nonlinear").unwrap().kind, SyntheticKind::Nonlinear);
    assert!(SyntheticSpec::parse("synthetic-moons").is_err());
    assert!(SyntheticSpec::parse("synthetic-blobs:dims=x").is_err());
}
