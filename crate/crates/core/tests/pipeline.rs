use std::path::PathBuf;

use afsearch::data::{load_dataset, train_test_split, DataFormat, LabelColumn};
use afsearch::harness::{evaluate_architecture, search_once, ScaledSplit};
use afsearch::seed::rng_from_seed;
use afsearch::{Architecture, Method, TrainConfig};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn csv_and_arff_fixtures_agree() {
    let csv = load_dataset(&fixture("tiny.csv"), DataFormat::Csv, &LabelColumn::Last).unwrap();
    let arff = load_dataset(&fixture("tiny.arff"), DataFormat::Arff, &LabelColumn::Last).unwrap();
    for ds in [&csv, &arff] {
        assert_eq!((ds.n_samples(), ds.n_features(), ds.n_classes()), (36, 3, 3));
        assert_eq!(ds.class_names, ["setosa", "versicolor", "virginica"]);
    }
    assert_eq!(csv.y, arff.y);
    for (a, b) in csv.x.column(0).iter().zip(arff.x.column(0)) {
        assert_eq!(a, b);
    }
}

#[test]
fn named_label_column() {
    let ds = load_dataset(&fixture("tiny.csv"), DataFormat::Csv, &LabelColumn::Named("colour".into())).unwrap();
    assert_eq!(ds.n_classes(), 3);
    assert_eq!(ds.class_names, ["blue", "green", "red"]);
    assert_eq!(ds.feature_names, ["x1", "x2", "species"]);
}

#[test]
fn fixture_trains_and_searches() {
    let ds = load_dataset(&fixture("tiny.csv"), DataFormat::Csv, &LabelColumn::Last).unwrap();
    let split = train_test_split(&ds, &mut rng_from_seed(5)).unwrap();
    let data = ScaledSplit::new(&ds, &split).unwrap();
    let scores = evaluate_architecture(&Architecture::standard(3).unwrap(), &data, 1, &TrainConfig::default()).unwrap();
    assert!(!scores.failed);
    assert!(scores.train_accuracy > 0.8, "{scores:?}");
    assert_eq!(data.test_reads(), 1);

    let cfg = TrainConfig { max_epochs: 60, ..TrainConfig::default() };
    let (a, trials_a) = search_once(&ds, 3, Method::Tpe, 12, 9, &cfg).unwrap();
    let (b, trials_b) = search_once(&ds, 3, Method::Tpe, 12, 9, &cfg).unwrap();
    assert_eq!(trials_a.len(), 12);
    assert_eq!(a.architecture, b.architecture);
    assert_eq!(a.score, b.score);
    assert_eq!(trials_a.iter().map(|t| t.objective).collect::<Vec<_>>(), trials_b.iter().map(|t| t.objective).collect::<Vec<_>>());
}

#[test]
fn missing_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b,label\n1,2,x\n3,?,y\n").unwrap();
    let err = load_dataset(&path, DataFormat::Csv, &LabelColumn::Last).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
}
