use cogeffort::dataprep::{prepare, PrepConfig};
use cogeffort::evalcore::classification_metrics;
use cogeffort::neuralnet::{train, Dataset, ModelConfig};
use cogeffort::synthgen::{generate_cohort, CohortSpec};

#[test]
fn default_cohort_is_learnable() {
    let spec = CohortSpec { seed: 42, ..Default::default() };
    let trials = generate_cohort(&spec).unwrap();
    let prep = prepare(&trials, &PrepConfig::default(), 42).unwrap();
    let cfg = ModelConfig { seed: 42, ..Default::default() };
    let tr = Dataset::from_rows(&prep.train_balanced).unwrap();
    let va = Dataset::from_rows(&prep.validation).unwrap();
    let te = Dataset::from_rows(&prep.test).unwrap();
    let model = train(&cfg, &tr, &va).unwrap();
    let pred = model.network.predict(&te.x).unwrap();
    let m = classification_metrics(&te.y, &pred).unwrap();
    let ones = te.y.iter().filter(|&&l| l == 1).count() as f64 / te.len() as f64;
    let majority = ones.max(1.0 - ones);
    eprintln!("epochs {} best {} test acc {} majority {}", model.history.len(), model.best_epoch, m.accuracy, majority);
    assert!(m.accuracy >= 0.90);
    assert!(m.accuracy > majority);
}
