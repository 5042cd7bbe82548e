mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use vortex::interchange::{
    load_manifest, plain_record_bytes, read_vtd, read_vte, save_manifest, write_vtd, write_vte, Fold,
    InterchangeError, ManifestError, Protocol, VteIndex, VteReader,
};
use vortex::{DescriptorRecord, EmbeddingRecord, SplitManifest};

fn record_strategy() -> impl Strategy<Value = EmbeddingRecord> {
    (1usize..4, 1usize..6, 1usize..9, "[a-z0-9_/.]{1,16}", any::<bool>()).prop_flat_map(|(l, n, d, id, cls)| {
        (
            prop::collection::vec(-1e6f32..1e6, l * n * d),
            prop::collection::vec(-1f32..1.0, d),
            Just((l, n, d, id, cls)),
        )
            .prop_map(|(data, cls_values, (l, n, d, id, cls))| {
                let r = EmbeddingRecord::new(id, l, n, d, data).unwrap();
                if cls {
                    r.with_cls(cls_values).unwrap().with_metadata("{\"source\":\"prop\"}")
                } else {
                    r
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn vte_round_trips(records in prop::collection::vec(record_strategy(), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.vte");
        write_vte(&records, &path).unwrap();
        prop_assert_eq!(read_vte(&path).unwrap(), records.clone());
        let index = VteIndex::build(&path).unwrap();
        prop_assert_eq!(index.len(), records.len());
        for (i, r) in records.iter().enumerate().rev() {
            prop_assert_eq!(&index.read(i).unwrap(), r);
        }
    }

    #[test]
    fn vtd_round_trips(
        rows in prop::collection::vec((-1i32..50, prop::collection::vec(-1e9f64..1e9, 7)), 0..10)
    ) {
        let records: Vec<DescriptorRecord> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (label, f))| DescriptorRecord::new(format!("img{i}"), label, f))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.vtd");
        write_vtd(&records, &path).unwrap();
        prop_assert_eq!(read_vtd(&path).unwrap(), records);
    }
}

#[test]
fn plain_file_size_is_header_plus_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plain.vte");
    let mut rng = common::rng(1);
    let records: Vec<EmbeddingRecord> = (0..5)
        .map(|i| common::random_record(&mut rng, &format!("image_{i:04}"), 3, 7, 5))
        .collect();
    write_vte(&records, &path).unwrap();
    let expected: u64 = 8 + records
        .iter()
        .map(|r| plain_record_bytes(&r.image_id, r.layers, r.tokens, r.dim))
        .sum::<u64>();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), expected);
}

#[test]
fn vit_base_dataset_size_is_computed_not_written() {
    // 680 records of 12 layers x 196 tokens x 768 float32, ids "img_0000".."img_0679"
    let payload: u64 = 680 * 12 * 196 * 768 * 4;
    assert_eq!(payload, 4_913_233_920);
    let headers: u64 = 680 * (4 + 8 + 12);
    let total = 8 + (0..680)
        .map(|i| plain_record_bytes(&format!("img_{i:04}"), 12, 196, 768))
        .sum::<u64>();
    assert_eq!(total, 8 + headers + payload);
}

#[test]
fn index_serves_concurrent_readers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("many.vte");
    let mut rng = common::rng(2);
    let records: Vec<EmbeddingRecord> = (0..40)
        .map(|i| common::random_record(&mut rng, &format!("r{i}"), 2, 9, 6))
        .collect();
    write_vte(&records, &path).unwrap();
    let index = Arc::new(VteIndex::build(&path).unwrap());
    let records = Arc::new(records);
    let handles: Vec<_> = (0..8)
        .map(|t| {
            let (index, records) = (Arc::clone(&index), Arc::clone(&records));
            std::thread::spawn(move || {
                for i in (t..40).step_by(3) {
                    assert_eq!(index.read(i).unwrap(), records[i]);
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert!(matches!(index.read(40), Err(InterchangeError::OutOfRange { .. })));
    assert_eq!(index.position("r17"), Some(17));
}

#[test]
fn streaming_reader_stops_after_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.vte");
    let mut rng = common::rng(3);
    let records: Vec<EmbeddingRecord> = (0..3)
        .map(|i| common::random_record(&mut rng, &format!("r{i}"), 1, 4, 4))
        .collect();
    write_vte(&records, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
    let items: Vec<_> = VteReader::open(&path).unwrap().collect();
    assert_eq!(items.len(), 3);
    assert!(items[0].is_ok() && items[1].is_ok());
    assert!(matches!(items[2], Err(InterchangeError::Truncated { .. })));
    assert!(matches!(VteIndex::build(&path), Err(InterchangeError::Truncated { .. })));
}

fn class_names(c: usize) -> Vec<String> {
    (0..c).map(|i| format!("{i:03}")).collect()
}

#[test]
fn outex_style_single_split() {
    // 24 classes, 20 training and 160 test images each
    let (mut labels, mut train, mut test) = (BTreeMap::new(), Vec::new(), Vec::new());
    for c in 0..24 {
        for i in 0..180 {
            let id = format!("{:06}.bmp", c * 180 + i);
            labels.insert(id.clone(), c);
            if i < 20 {
                train.push(id);
            } else {
                test.push(id);
            }
        }
    }
    let fold = Fold {
        fold_id: 0,
        train_ids: train,
        test_ids: test,
    };
    let m = SplitManifest::new("Outex10", class_names(24), labels, Protocol::SingleSplit, vec![fold]).unwrap();
    assert_eq!(m.num_classes(), 24);
    assert_eq!(m.folds.len(), 1);
    assert_eq!(m.folds[0].train_ids.len(), 480);
    assert_eq!(m.folds[0].test_ids.len(), 3840);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("outex10.json");
    save_manifest(&m, &path).unwrap();
    let back = load_manifest(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.folds[0].hash(), m.folds[0].hash());
}

#[test]
fn kth_style_four_sample_folds() {
    // 11 materials, 4 samples each; fold f trains on sample f and tests on the rest
    let mut labels = BTreeMap::new();
    let id = |c: usize, s: usize, i: usize| format!("m{c:02}/sample_{s}/{i:03}.png");
    for c in 0..11 {
        for s in 0..4 {
            for i in 0..6 {
                labels.insert(id(c, s, i), c);
            }
        }
    }
    let folds: Vec<Fold> = (0..4)
        .map(|f| {
            let (mut train_ids, mut test_ids) = (Vec::new(), Vec::new());
            for c in 0..11 {
                for s in 0..4 {
                    for i in 0..6 {
                        if s == f {
                            train_ids.push(id(c, s, i));
                        } else {
                            test_ids.push(id(c, s, i));
                        }
                    }
                }
            }
            Fold {
                fold_id: f,
                train_ids,
                test_ids,
            }
        })
        .collect();
    let m = SplitManifest::new("KTH-TIPS2-b", class_names(11), labels, Protocol::KFold { k: 4 }, folds).unwrap();
    assert_eq!(m.num_classes(), 11);
    assert_eq!(m.folds.len(), 4);
    let hashes: std::collections::HashSet<String> = m.folds.iter().map(Fold::hash).collect();
    assert_eq!(hashes.len(), 4);
    assert_eq!(SplitManifest::from_json(&m.to_json()).unwrap(), m);
}

#[test]
fn id_in_train_and_test_is_rejected() {
    let labels: BTreeMap<String, usize> = [("a", 0), ("b", 1), ("c", 0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let fold = Fold {
        fold_id: 0,
        train_ids: vec!["a".into(), "b".into()],
        test_ids: vec!["b".into(), "c".into()],
    };
    let err = SplitManifest::new("t", class_names(2), labels, Protocol::SingleSplit, vec![fold]).unwrap_err();
    assert!(matches!(err, ManifestError::Overlap { ref id, .. } if id == "b"), "{err}");
}

#[test]
fn manifest_json_with_unknown_class_is_rejected() {
    let text = r#"{
        "dataset_name": "t",
        "class_names": ["x", "y"],
        "labels": {"a": "x", "b": "z"},
        "protocol": {"kind": "single-split"},
        "folds": [{"fold_id": 0, "train_ids": ["a"], "test_ids": ["b"]}]
    }"#;
    assert!(matches!(
        SplitManifest::from_json(text),
        Err(ManifestError::UnknownClass { .. })
    ));
}
