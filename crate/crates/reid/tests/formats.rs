use proptest::prelude::*;
use reid::formats::*;
use reid::reid_core::knn::topk_neighbors;
use reid::reid_core::rerank::local_rerank;
use reid::reid_core::{ClusterAssignment, DistanceTable, FeatureMatrix, LabelTable, Metric};
use reid::Error;

fn sample_matrix(n: usize, d: usize) -> FeatureMatrix {
    let data = (0..n * d).map(|i| ((i as f32) * 0.731).sin() * 3.0).collect();
    FeatureMatrix::new(n, d, data).unwrap()
}

#[test]
fn fvec_layout_is_exact() {
    let m = FeatureMatrix::from_rows(&[[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
    let bytes = encode_features(&m);
    assert_eq!(&bytes[..4], b"FVEC");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
    assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
    assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), 1.0);
    assert_eq!(f32::from_le_bytes(bytes[44..48].try_into().unwrap()), 6.0);
    assert_eq!(decode_features(&bytes).unwrap(), m);

    let one = FeatureMatrix::new(1, 1, vec![0.0]).unwrap();
    assert_eq!(encode_features(&one).len(), HEADER_BYTES + 4);
}

#[test]
fn fvec_errors_are_distinct() {
    let good = encode_features(&sample_matrix(4, 2));
    let mut magic = good.clone();
    magic[..4].copy_from_slice(b"XXXX");
    assert!(matches!(decode_features(&magic), Err(Error::BadMagic { .. })));
    // declares 4x2 but carries 6 floats
    assert!(matches!(decode_features(&good[..good.len() - 8]), Err(Error::Truncated { .. })));
    assert!(matches!(decode_features(&good[..10]), Err(Error::Truncated { .. })));
    let mut nan = good.clone();
    nan[24 + 4 * 5..24 + 4 * 6].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(decode_features(&nan), Err(Error::NonFinite { row: 2, col: 1 })));
    let mut inf = good.clone();
    inf[24..28].copy_from_slice(&f32::INFINITY.to_le_bytes());
    assert!(matches!(decode_features(&inf), Err(Error::NonFinite { row: 0, col: 0 })));
    let mut zero = good.clone();
    zero[16..24].copy_from_slice(&0u64.to_le_bytes());
    assert!(matches!(decode_features(&zero), Err(Error::ZeroDims { .. })));
    let mut version = good.clone();
    version[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(decode_features(&version), Err(Error::UnsupportedVersion { .. })));
    let mut extra = good;
    extra.push(0);
    assert!(matches!(decode_features(&extra), Err(Error::TrailingBytes { .. })));
}

#[test]
fn file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let m = sample_matrix(100, 8);
    save_features(&m, dir.path().join("f.fvec")).unwrap();
    assert_eq!(load_features(dir.path().join("f.fvec")).unwrap(), m);

    let nn = topk_neighbors(&m, 5, Metric::Euclidean).unwrap();
    save_neighbors(&nn, dir.path().join("n.nnlk")).unwrap();
    assert_eq!(load_neighbors(dir.path().join("n.nnlk")).unwrap(), nn);
    let bytes = encode_neighbors(&nn);
    assert_eq!(&bytes[..4], b"NNLK");
    assert_eq!(bytes.len(), HEADER_BYTES + 100 * 5 * 12);

    let r = local_rerank(&m, 5, Metric::Cosine).unwrap();
    save_refined(&r, dir.path().join("r.srdm")).unwrap();
    assert_eq!(load_refined(dir.path().join("r.srdm")).unwrap(), r);
    assert_eq!(&encode_refined(&r)[..4], b"SRDM");
    assert!(matches!(decode_refined(&encode_neighbors(&nn)), Err(Error::BadMagic { .. })));

    let t = DistanceTable::new(2, 3, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5]).unwrap();
    save_table(&t, dir.path().join("t.fvec")).unwrap();
    assert_eq!(load_table(dir.path().join("t.fvec")).unwrap(), t);

    let a = ClusterAssignment::from_labels(vec![0, -1, 1, 0]).unwrap();
    save_assignment(&a, dir.path().join("a.csv")).unwrap();
    assert_eq!(load_assignment(dir.path().join("a.csv")).unwrap(), a);

    save_sample(&[5, 2, 9], dir.path().join("s.csv")).unwrap();
    assert_eq!(load_sample(dir.path().join("s.csv")).unwrap(), vec![5, 2, 9]);

    let sched = vec![(0, 0.5), (1, 0.6123456789012345)];
    save_schedule(&sched, dir.path().join("e.csv")).unwrap();
    assert_eq!(load_schedule(dir.path().join("e.csv")).unwrap(), sched);

    let labels = LabelTable::from_raw(&[7, 7, 9], &[2, 3, 2]).unwrap();
    save_labels(&labels, dir.path().join("l.csv")).unwrap();
    assert_eq!(load_labels(dir.path().join("l.csv")).unwrap(), labels);
}

#[test]
fn unwritable_path_is_an_io_error() {
    let err = save_features(&sample_matrix(1, 1), "/nonexistent-dir/x.fvec").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

fn labels(text: &str) -> reid::Result<LabelTable> {
    parse_labels(text.as_bytes())
}

#[test]
fn labels_are_densified() {
    let t = labels("index,identity,camera\n0,7,2\n1,7,3\n2,9,2\n").unwrap();
    assert_eq!(t.identities(), &[0, 0, 1]);
    assert_eq!(t.cameras(), &[0, 1, 0]);
    assert_eq!(t.original_identity(2), 9);
    // rows may come in any order
    let shuffled = labels("index,identity,camera\n2,9,2\n0,7,2\n1,7,3\n").unwrap();
    assert_eq!(shuffled, t);
}

#[test]
fn label_errors() {
    assert!(matches!(labels("index,identity,camera\n0,1,1\n0,2,2\n"), Err(Error::DuplicateIndex(0))));
    assert!(matches!(labels("index,identity,camera\n0,1,1\n2,2,2\n"), Err(Error::MissingIndex(1))));
    assert!(matches!(labels("index,identity,camera\n0,-1,1\n"), Err(Error::Csv { line: 2, .. })));
    assert!(matches!(labels("index,identity,camera\n"), Err(Error::Empty)));
    assert!(matches!(labels("index,id,camera\n0,1,1\n"), Err(Error::Csv { line: 1, .. })));
    assert!(matches!(labels("index,identity,camera\n0,x,1\n"), Err(Error::Csv { .. })));
}

proptest! {
    #[test]
    fn fvec_round_trip_is_bit_exact(
        (n, d, data) in (1usize..20, 1usize..10).prop_flat_map(|(n, d)| {
            (Just(n), Just(d), proptest::collection::vec(proptest::num::f32::NORMAL | proptest::num::f32::ZERO | proptest::num::f32::SUBNORMAL, n * d))
        })
    ) {
        let m = FeatureMatrix::new(n, d, data).unwrap();
        let back = decode_features(&encode_features(&m)).unwrap();
        let same = back.as_slice().iter().zip(m.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn truncation_anywhere_is_detected(cut in 0usize..48) {
        let bytes = encode_features(&FeatureMatrix::new(2, 3, vec![1.0; 6]).unwrap());
        prop_assert!(decode_features(&bytes[..cut]).is_err());
    }
}
