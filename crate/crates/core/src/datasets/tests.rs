use super::*;
use crate::error::Error;

fn four_class(seed: u64) -> Dataset {
    let mut ds = make_gaussian_split(4, 6, 20, 4.0, seed, Split::Train).unwrap();
    ds.extend(&make_gaussian_split(4, 6, 10, 4.0, seed, Split::TestId).unwrap())
        .unwrap();
    ds
}

fn mean_of(ds: &Dataset) -> Vec<f64> {
    let mut m = vec![0.0; ds.dim];
    for x in &ds.features {
        for (a, v) in m.iter_mut().zip(x.data()) {
            *a += v / ds.len() as f64;
        }
    }
    m
}

#[test]
fn class_means_are_equidistant() {
    let means = class_means(4, 7, 3.0).unwrap();
    for a in 0..4 {
        assert_eq!(means[a][4..], [0.0; 3]);
        for b in 0..a {
            let d: f64 = means[a].iter().zip(&means[b]).map(|(x, y)| (x - y).powi(2)).sum();
            assert!((d.sqrt() - 3.0).abs() < 1e-12);
        }
    }
    assert!(class_means(4, 3, 1.0).is_err());
    assert!(class_means(1, 3, 1.0).is_err());
}

#[test]
fn generation_is_deterministic_and_splits_differ() {
    let a = make_gaussian_classes(3, 4, 5, 2.0, 9).unwrap();
    let b = make_gaussian_classes(3, 4, 5, 2.0, 9).unwrap();
    assert_eq!(write_csv(&a), write_csv(&b));
    let t = make_gaussian_split(3, 4, 5, 2.0, 9, Split::TestId).unwrap();
    assert_ne!(a.features[0], t.features[0]);
    assert_eq!(a.len(), 15);
    assert!(a.splits.iter().all(|&s| s == Split::Train));
}

#[test]
fn far_ood_null_case_and_degree_monotonicity() {
    let id = make_gaussian_split(3, 5, 400, 3.0, 1, Split::TestId).unwrap();
    let zero = make_far_ood(&id, 0.0, 1200, 2).unwrap();
    let (mi, mz) = (mean_of(&id), mean_of(&zero));
    for (a, b) in mi.iter().zip(&mz) {
        assert!((a - b).abs() < 0.15, "{a} vs {b}");
    }
    let mut last = -1.0;
    for degree in [0.0, 2.0, 5.0, 10.0] {
        let ood = make_far_ood(&id, degree, 500, 3).unwrap();
        let d: f64 = mean_of(&ood)
            .iter()
            .zip(&mi)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(d >= last, "degree {degree}: {d} < {last}");
        last = d;
    }
    assert_eq!(
        make_far_ood(&id, 4.0, 10, 5).unwrap(),
        make_far_ood(&id, 4.0, 10, 5).unwrap()
    );
    let ood = make_far_ood(&id, 4.0, 10, 5).unwrap();
    assert!(ood.labels.iter().all(|l| l.is_none()) && ood.splits.iter().all(|&s| s == Split::Ood));
    assert!(make_far_ood(&id, -1.0, 10, 5).is_err());
}

#[test]
fn semantic_split_keeps_even_classes() {
    let ds = four_class(0);
    let (id, ood) = make_semantic_split(&ds).unwrap();
    assert_eq!(id.num_classes, 2);
    // classes 0 and 2 (20 train + 10 test each) stay; 1 and 3 test become OOD
    assert_eq!(id.len(), 60);
    assert_eq!(ood.len(), 20);
    assert!(ood.labels.iter().all(|l| l.is_none()));
    let orig_class2: Vec<&Tensor> = (0..ds.len())
        .filter(|&i| ds.labels[i] == Some(2))
        .map(|i| &ds.features[i])
        .collect();
    let new_class1: Vec<&Tensor> = (0..id.len())
        .filter(|&i| id.labels[i] == Some(1))
        .map(|i| &id.features[i])
        .collect();
    assert_eq!(orig_class2, new_class1);
    let three = make_gaussian_classes(3, 4, 2, 1.0, 0).unwrap();
    assert!(make_semantic_split(&three).is_err());
    let five = make_gaussian_classes(5, 5, 2, 1.0, 0).unwrap();
    let (id5, _) = make_semantic_split(&five).unwrap();
    let mut seen: Vec<usize> = id5.labels.iter().map(|l| l.unwrap()).collect();
    seen.dedup();
    assert_eq!(seen, vec![0, 1, 2]);
}

#[test]
fn background_shift_degree_zero_is_identity() {
    let ds = make_gaussian_classes(2, 3, 4, 2.0, 0).unwrap();
    let same = make_background_shift(&ds, 0.0, 4).unwrap();
    assert_eq!(same.features, ds.features);
    assert_eq!(same.labels, ds.labels);
    let moved = make_background_shift(&ds, 0.5, 4).unwrap();
    assert_ne!(moved.features, ds.features);
    assert_eq!(moved, make_background_shift(&ds, 0.5, 4).unwrap());
}

#[test]
fn two_class_simplification() {
    let two = make_gaussian_classes(2, 2, 3, 1.0, 0).unwrap();
    let s = simplify_to_two_classes(&two, 0, 1).unwrap();
    assert_eq!(s.features, two.features);
    assert_eq!(s.labels, two.labels);
    let ds = four_class(1);
    let s = simplify_to_two_classes(&ds, 3, 1).unwrap();
    assert_eq!(s.labels.iter().filter(|&&l| l == Some(0)).count(), 30);
    assert_eq!(s.labels.iter().filter(|&&l| l == Some(1)).count(), 30);
    assert!(simplify_to_two_classes(&ds, 2, 2).is_err());
    assert!(simplify_to_two_classes(&ds, 0, 4).is_err());
}

#[test]
fn subsampling() {
    let id = make_gaussian_classes(2, 2, 10, 1.0, 0).unwrap();
    let ood = make_far_ood(&id, 3.0, 20, 1).unwrap();
    let same = subsample_ood_to_test_size(&ood, 20, 7).unwrap();
    let mut a: Vec<String> = same.features.iter().map(|x| format!("{:?}", x.data())).collect();
    let mut b: Vec<String> = ood.features.iter().map(|x| format!("{:?}", x.data())).collect();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    assert!(subsample_ood_to_test_size(&ood, 0, 7).unwrap().is_empty());
    assert_eq!(
        subsample_ood_to_test_size(&ood, 5, 7).unwrap(),
        subsample_ood_to_test_size(&ood, 5, 7).unwrap()
    );
    assert!(subsample_ood_to_test_size(&ood, 21, 7).is_err());
}

#[test]
fn csv_round_trip() {
    let mut ds = four_class(3);
    ds.extend(&make_far_ood(&ds, 2.0, 5, 1).unwrap()).unwrap();
    ds.features[0].data_mut()[0] = 0.1 + 0.2;
    ds.features[1].data_mut()[1] = -1e-300;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    save_csv(&ds, &path).unwrap();
    let back = load_csv(&path).unwrap();
    assert_eq!(back, ds);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# blood-dataset v1\n"));
    assert!(text.contains("\nood,-1,"));
}

#[test]
fn csv_errors() {
    let good = write_csv(&make_gaussian_classes(2, 2, 2, 1.0, 0).unwrap());
    let lines: Vec<&str> = good.lines().collect();
    let mut bad = lines.clone();
    let row_line = bad.len();
    bad[row_line - 1] = "train,0,1.0";
    let err = parse_csv(&bad.join("\n")).unwrap_err();
    assert!(
        matches!(err, Error::Parse { line, .. } if line == row_line as u64),
        "{err}"
    );
    let mut bad = lines.clone();
    bad[row_line - 1] = "train,0,1.0,abc";
    assert!(matches!(parse_csv(&bad.join("\n")), Err(Error::Parse { .. })));
    assert!(matches!(parse_csv(""), Err(Error::Empty(_))));
    let header_only = lines[..lines.len() - 4].join("\n");
    assert!(matches!(parse_csv(&header_only), Err(Error::Empty(_))));
    assert!(matches!(parse_csv("x,y\n1,2"), Err(Error::Parse { line: 1, .. })));
}
