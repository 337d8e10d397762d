//! End-to-end runs of the `weimix` binary on small synthetic data.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use weimix_core::dataio::write_csv;
use weimix_core::synthgen::{generate, FunctionId, GeneratorSpec};

const FAST: &str = "max_epochs = 8\nbatch_size = 64\nlearning_rate = 0.001\nn_samples = 500\nfolds = 3\n";

fn weimix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weimix"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
    data: PathBuf,
    schema: PathBuf,
    config: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let spec = GeneratorSpec {
        n: 300,
        ..GeneratorSpec::new(FunctionId::Linear, 2, 3)
    };
    let (data, _) = generate(&spec).unwrap();
    let data_path = dir.path().join("data.csv");
    let schema = dir.path().join("schema.toml");
    let config = dir.path().join("run.toml");
    write_csv(&data, &data_path).unwrap();
    std::fs::write(&schema, data.schema().to_toml_string()).unwrap();
    std::fs::write(&config, FAST).unwrap();
    Fixture {
        data: data_path,
        schema,
        config,
        dir,
    }
}

/// Data rows of a report, skipping `#` comment lines and the header.
fn table(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn train(f: &Fixture, out: &Path) -> Output {
    weimix(&[
        "train", "--config", s(&f.config), "--data", s(&f.data), "--schema", s(&f.schema), "--p", "2", "--out-dir",
        s(out),
    ])
}

#[test]
fn train_reports_every_fold_and_saves_a_model() {
    let f = fixture();
    let out = f.dir.path().join("train");
    let run = train(&f, &out);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let rows = table(&out.join("report.csv"));
    let labels: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels, ["1", "2", "3", "mean", "ci95_lower", "ci95_upper"]);
    for r in &rows {
        let c: f64 = r[1].parse().unwrap();
        assert!((0.0..=1.0).contains(&c));
    }
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.contains("# max_epochs = 8"));
    assert!(report.contains("# p = 2"));
    assert!(out.join("model.json").exists());
    assert!(!table(&out.join("loss_trace.csv")).is_empty());
}

#[test]
fn predictions_are_monotone_and_survive_a_model_round_trip() {
    let f = fixture();
    let out = f.dir.path().join("train");
    assert_eq!(code(&train(&f, &out)), 0);
    let model = out.join("model.json");

    let predict = |model: &Path, dir: &Path| {
        let run = weimix(&[
            "predict", "--model", s(model), "--data", s(&f.data), "--schema", s(&f.schema), "--horizons", "0.5,1,2",
            "--out-dir", s(dir),
        ]);
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
        std::fs::read(dir.join("predictions.csv")).unwrap()
    };
    let first = predict(&model, &f.dir.path().join("p1"));
    let text = String::from_utf8(first.clone()).unwrap();
    assert!(text.starts_with("row,mean_lifetime,survival_at_0.5,survival_at_1,survival_at_2\n"));
    let rows = table(&f.dir.path().join("p1/predictions.csv"));
    assert_eq!(rows.len(), 300);
    for r in &rows {
        let v: Vec<f64> = r[1..].iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[0] > 0.0);
        assert!(v[1] >= v[2] && v[2] >= v[3], "survival must not increase with the horizon: {r:?}");
    }

    // Load and save the model again; predictions must not change by a bit.
    let copy = f.dir.path().join("copy.json");
    let loaded = weimix_core::nn::load_model(&model).unwrap();
    weimix_core::nn::save_model(&loaded, &copy).unwrap();
    assert_eq!(first, predict(&copy, &f.dir.path().join("p2")));
}

#[test]
fn sensitivity_writes_one_row_per_quantile_and_horizon() {
    let f = fixture();
    let out = f.dir.path().join("sens");
    let run = weimix(&[
        "sensitivity", "--config", s(&f.config), "--data", s(&f.data), "--schema", s(&f.schema), "--quantiles",
        "0.5,0.35", "--horizons", "0.5,1,1.5", "--out-dir", s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let rows = table(&out.join("report.csv"));
    assert_eq!(rows.len(), 2 * 3);
    assert!(String::from_utf8_lossy(&run.stdout).contains("quantile 0.35"));
}

#[test]
fn synth_validate_exit_code_follows_the_gap_threshold() {
    let f = fixture();
    let loose = f.dir.path().join("loose.toml");
    std::fs::write(&loose, format!("{FAST}max_relative_gap = 10.0\n")).unwrap();
    let out = f.dir.path().join("sv");
    let run = weimix(&[
        "synth-validate", "--config", s(&loose), "--function", "linear", "--p", "1", "--out-dir", s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(table(&out.join("report.csv")).len(), 1);

    let strict = f.dir.path().join("strict.toml");
    std::fs::write(&strict, format!("{FAST}max_relative_gap = 1e-12\n")).unwrap();
    let run = weimix(&[
        "synth-validate", "--config", s(&strict), "--function", "linear", "--p", "1", "--out-dir", s(&out),
    ]);
    assert_eq!(code(&run), 5);
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let f = fixture();
    let bad = f.dir.path().join("bad.toml");
    std::fs::write(&bad, "learning_rate = 0.001\nlearnig_rate = 0.01\n").unwrap();
    let run = weimix(&["train", "--config", s(&bad), "--data", s(&f.data), "--schema", s(&f.schema)]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("learnig_rate"));

    let run = weimix(&["train", "--data", s(&f.data), "--schema", s(&f.schema), "--p", "0"]);
    assert_eq!(code(&run), 2);
}

#[test]
fn data_errors_exit_with_code_3_and_name_the_line() {
    let f = fixture();
    let text = std::fs::read_to_string(&f.data).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // Third data row gets a negative time; the header is line 1.
    let header: Vec<&str> = lines[0].split(',').collect();
    let time_col = header.iter().position(|h| *h == "time").unwrap();
    let mut cells: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    cells[time_col] = "-1".into();
    lines[3] = cells.join(",");
    let broken = f.dir.path().join("broken.csv");
    std::fs::write(&broken, lines.join("\n") + "\n").unwrap();

    let run = weimix(&["train", "--data", s(&broken), "--schema", s(&f.schema)]);
    assert_eq!(code(&run), 3);
    assert!(String::from_utf8_lossy(&run.stderr).contains("line 4"), "{}", String::from_utf8_lossy(&run.stderr));

    let missing = f.dir.path().join("absent.csv");
    let run = weimix(&["train", "--data", s(&missing), "--schema", s(&f.schema)]);
    assert_eq!(code(&run), 3);
}

#[test]
fn qualitative_features_are_one_hot_encoded_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let schema = dir.path().join("s.toml");
    let mut csv = String::from("t,e,age,grade\n");
    for i in 0..240 {
        let grade = ["low", "mid", "high"][i % 3];
        let age = 40.0 + (i % 17) as f64;
        let t = 1.0 + (i % 3) as f64 + (i % 7) as f64 * 0.3;
        csv.push_str(&format!("{t},{},{age},{grade}\n", u8::from(i % 4 != 0)));
    }
    std::fs::write(&data, csv).unwrap();
    std::fs::write(
        &schema,
        "time = \"t\"\nevent = \"e\"\n\n[[feature]]\nname = \"age\"\nkind = \"quantitative\"\n\n\
         [[feature]]\nname = \"grade\"\nkind = \"qualitative\"\n",
    )
    .unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, FAST).unwrap();
    let out = dir.path().join("out");
    let run = weimix(&["train", "--config", s(&config), "--data", s(&data), "--schema", s(&schema), "--out-dir", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let model = weimix_core::nn::load_model(&out.join("model.json")).unwrap();
    assert_eq!(model.feature_names(), ["age", "grade=high", "grade=low", "grade=mid"]);
}
