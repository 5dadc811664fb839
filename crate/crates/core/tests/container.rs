use dash_core::bench::BenchmarkConfig;
use dash_core::container::{load_dash_result, load_dataset, load_shap, read_matrix, save_dash_result, save_dataset, save_shap, write_matrix};
use dash_core::data::{split_four_way, DEFAULT_FRACTIONS};
use dash_core::pipeline::{run_dash, PipelineConfig};
use dash_core::treeshap::ShapMatrix;
use dash_core::Matrix;

#[test]
fn matrix_bits_survive() {
    let dir = tempfile::tempdir().unwrap();
    let m = Matrix::from_rows(&[vec![0.1, -0.0, f64::MIN_POSITIVE], vec![1e300, -3.5, 1.0 / 3.0]]).unwrap();
    let path = dir.path().join("m.bin");
    write_matrix(&path, &m).unwrap();
    let back = read_matrix(&path, 2, 3).unwrap();
    let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&m));
    assert!(read_matrix(&path, 3, 3).is_err());
}

#[test]
fn dataset_and_split_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = BenchmarkConfig::desk();
    cfg.n = 300;
    let ds = cfg.dgp_spec(0.7, 9).unwrap().generate().unwrap();
    let split = split_four_way(300, DEFAULT_FRACTIONS, 2).unwrap();
    let manifest = save_dataset(dir.path(), "d", &ds, Some(&split)).unwrap();
    let (back, back_split) = load_dataset(&manifest).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back_split, Some(split));
    let bare = save_dataset(dir.path(), "bare", &ds, None).unwrap();
    assert_eq!(load_dataset(&bare).unwrap().1, None);
}

#[test]
fn shap_and_dash_result_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = ShapMatrix {
        values: Matrix::from_rows(&[vec![0.1, 0.2], vec![-0.3, 1.0 / 7.0]]).unwrap(),
        base_value: 0.1 + 0.2,
        model_id: "model-00003".into(),
        background_ids: vec![4, 9],
    };
    let manifest = save_shap(dir.path(), "s", &m).unwrap();
    assert_eq!(load_shap(&manifest).unwrap(), m);

    let mut cfg = BenchmarkConfig::desk();
    cfg.n = 400;
    let ds = cfg.dgp_spec(0.9, 1).unwrap().generate().unwrap();
    let split = split_four_way(400, DEFAULT_FRACTIONS, 1).unwrap();
    let pcfg = PipelineConfig { population_size: 6, background_size: 10, n_estimators_max: 60, ..PipelineConfig::default() };
    let res = run_dash(&ds, &split, &pcfg).unwrap();
    let manifest = save_dash_result(dir.path(), "r", &res).unwrap();
    assert_eq!(load_dash_result(&manifest).unwrap(), res);
}

#[test]
fn rejects_foreign_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.json");
    std::fs::write(&path, r#"{"format":"other","version":1,"kind":"dataset"}"#).unwrap();
    assert!(load_dataset(&path).is_err());
    assert!(load_shap(dir.path().join("missing.json")).is_err());
}
