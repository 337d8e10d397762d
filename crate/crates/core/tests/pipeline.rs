//! Generate, train, persist and predict through the public API.

use weimix_core::dataio::{load_csv, write_csv};
use weimix_core::metrics::{concordance_index, predict_mean_lifetime, survival_at_horizon};
use weimix_core::nn::{load_model, save_model, train, TrainConfig};
use weimix_core::synthgen::{generate, FunctionId, GeneratorSpec};

fn small_config(p: usize) -> TrainConfig {
    TrainConfig {
        n_components: p,
        learning_rate: 1e-3,
        batch_size: 64,
        max_epochs: 40,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn csv_round_trip_preserves_the_dataset() {
    let spec = GeneratorSpec {
        n: 200,
        ..GeneratorSpec::new(FunctionId::Cubic, 2, 4)
    };
    let (data, _) = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&data, &path).unwrap();
    let back = load_csv(&path, data.schema()).unwrap();
    assert_eq!(back.times(), data.times());
    assert_eq!(back.events(), data.events());
    assert_eq!(back.features(), data.features());
    assert_eq!(back.feature_names(), data.feature_names());
}

#[test]
fn trained_model_ranks_synthetic_data_and_reloads_exactly() {
    let spec = GeneratorSpec {
        n: 1500,
        ..GeneratorSpec::new(FunctionId::Linear, 1, 2)
    };
    let (data, _) = generate(&spec).unwrap();
    let outcome = train(&data, &small_config(1)).unwrap();
    let model = outcome.model;

    let x = model.standardize(data.features()).unwrap();
    let mu = predict_mean_lifetime(&model, &x).unwrap();
    let c = concordance_index(data.times(), &mu, data.events()).unwrap();
    assert!(c.c_index > 0.6, "C-index {}", c.c_index);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(predict_mean_lifetime(&loaded, &x).unwrap(), mu);
    assert_eq!(survival_at_horizon(&loaded, &x, 1.0).unwrap(), survival_at_horizon(&model, &x, 1.0).unwrap());
    let again = dir.path().join("m2.json");
    save_model(&loaded, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn training_is_bitwise_reproducible() {
    let spec = GeneratorSpec {
        n: 600,
        ..GeneratorSpec::new(FunctionId::Quadratic, 2, 8)
    };
    let (data, _) = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in 0..2 {
        let outcome = train(&data, &small_config(2)).unwrap();
        let path = dir.path().join(format!("{run}.json"));
        save_model(&outcome.model, &path).unwrap();
        files.push((std::fs::read(path).unwrap(), outcome.trace));
    }
    assert_eq!(files[0], files[1]);

    let mut other = small_config(2);
    other.seed += 1;
    let path = dir.path().join("other.json");
    save_model(&train(&data, &other).unwrap().model, &path).unwrap();
    assert_ne!(std::fs::read(path).unwrap(), files[0].0);
}
