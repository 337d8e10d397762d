//! Survival datasets: CSV ingestion, feature standardization and
//! cross-validation splits.
//!
//! A schema (TOML) names the time column, the event column and every
//! feature with its kind:
//!
//! ```toml
//! time = "time"
//! event = "event"
//!
//! [[feature]]
//! name = "age"
//! kind = "quantitative"
//!
//! [[feature]]
//! name = "grade"
//! kind = "qualitative"
//! ```
//!
//! Qualitative features are one-hot expanded at load time into one column per
//! distinct level (levels sorted lexicographically), named `feature=level`.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowIssue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Quantitative,
    Qualitative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub time: String,
    pub event: String,
    #[serde(rename = "feature", default)]
    pub features: Vec<FeatureSpec>,
}

impl Schema {
    /// Schema with `time`/`event` columns and quantitative features.
    pub fn quantitative<S: AsRef<str>>(names: &[S]) -> Self {
        Self {
            time: "time".into(),
            event: "event".into(),
            features: names
                .iter()
                .map(|n| FeatureSpec {
                    name: n.as_ref().to_string(),
                    kind: FeatureKind::Quantitative,
                })
                .collect(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Config("schema declares no features".into()));
        }
        let mut seen = BTreeSet::new();
        for name in std::iter::once(&self.time)
            .chain(std::iter::once(&self.event))
            .chain(self.features.iter().map(|f| &f.name))
        {
            if name.is_empty() {
                return Err(Error::Config("schema column names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("column `{name}` appears twice in the schema")));
            }
        }
        Ok(())
    }
}

/// One column of the feature matrix. One-hot columns carry their level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub source: String,
    pub level: Option<String>,
}

impl FeatureColumn {
    pub fn quantitative(name: &str) -> Self {
        Self {
            name: name.to_string(),
            source: name.to_string(),
            level: None,
        }
    }

    pub fn one_hot(source: &str, level: &str) -> Self {
        Self {
            name: format!("{source}={level}"),
            source: source.to_string(),
            level: Some(level.to_string()),
        }
    }

    pub fn is_qualitative(&self) -> bool {
        self.level.is_some()
    }
}

/// Covariates, observed times and event indicators of `n` records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    times: Vec<f64>,
    events: Vec<bool>,
    columns: Vec<FeatureColumn>,
    schema: Schema,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        times: Vec<f64>,
        events: Vec<bool>,
        columns: Vec<FeatureColumn>,
        schema: Schema,
    ) -> Result<Self> {
        let n = features.nrows();
        if times.len() != n || events.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} feature rows, {} times, {} events",
                times.len(),
                events.len()
            )));
        }
        if columns.len() != features.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature columns, {} column descriptors",
                features.ncols(),
                columns.len()
            )));
        }
        if let Some(i) = times.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Domain(format!("record {i}: time must be finite and > 0, got {}", times[i])));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("features must be finite".into()));
        }
        Ok(Self {
            features,
            times,
            events,
            columns,
            schema,
        })
    }

    /// A dataset whose features are all quantitative.
    pub fn from_quantitative(
        features: Array2<f64>,
        times: Vec<f64>,
        events: Vec<bool>,
        names: &[&str],
    ) -> Result<Self> {
        let columns = names.iter().map(|n| FeatureColumn::quantitative(n)).collect();
        Self::new(features, times, events, columns, Schema::quantitative(names))
    }

    pub fn n_rows(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn qualitative_mask(&self) -> Vec<bool> {
        self.columns.iter().map(FeatureColumn::is_qualitative).collect()
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            times: indices.iter().map(|&i| self.times[i]).collect(),
            events: indices.iter().map(|&i| self.events[i]).collect(),
            columns: self.columns.clone(),
            schema: self.schema.clone(),
        }
    }

    pub fn with_events(&self, events: Vec<bool>) -> Result<Self> {
        Self::new(self.features.clone(), self.times.clone(), events, self.columns.clone(), self.schema.clone())
    }

    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        Self::new(features, self.times.clone(), self.events.clone(), self.columns.clone(), self.schema.clone())
    }

    /// Reorders the feature columns to `names`. One-hot columns for levels
    /// absent from this dataset are filled with zeros; anything else that
    /// does not line up is a schema mismatch.
    pub fn align_features(&self, names: &[String]) -> Result<Self> {
        let mut columns = Vec::with_capacity(names.len());
        let mut features = Array2::zeros((self.n_rows(), names.len()));
        for (j, name) in names.iter().enumerate() {
            match self.columns.iter().position(|c| &c.name == name) {
                Some(src) => {
                    features.column_mut(j).assign(&self.features.column(src));
                    columns.push(self.columns[src].clone());
                }
                None => {
                    let (source, level) = name.split_once('=').ok_or_else(|| {
                        Error::SchemaMismatch(format!("model feature `{name}` is missing from the data"))
                    })?;
                    if !self.columns.iter().any(|c| c.source == source && c.is_qualitative()) {
                        return Err(Error::SchemaMismatch(format!(
                            "model feature `{name}` is missing from the data"
                        )));
                    }
                    columns.push(FeatureColumn::one_hot(source, level));
                }
            }
        }
        if let Some(extra) = self.columns.iter().find(|c| !names.contains(&c.name)) {
            return Err(Error::SchemaMismatch(format!(
                "data feature `{}` was not seen by the model",
                extra.name
            )));
        }
        Self::new(features, self.times.clone(), self.events.clone(), columns, self.schema.clone())
    }
}

fn parse_number(raw: &str, line: usize, column: &str) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| Error::UnparsableCell {
        line,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

/// Reads a comma-separated file with a header row.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let bytes = std::fs::read(path)?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
    let headers = reader.headers()?.clone();
    let index_of = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let time_idx = index_of(&schema.time)?;
    let event_idx = index_of(&schema.event)?;
    let feature_idx = schema
        .features
        .iter()
        .map(|f| index_of(&f.name))
        .collect::<Result<Vec<_>>>()?;

    let mut times = Vec::new();
    let mut events = Vec::new();
    // Per feature: numeric value, or the level string for qualitative ones.
    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); schema.features.len()];
    let mut levels: Vec<Vec<String>> = vec![Vec::new(); schema.features.len()];
    let mut issues = Vec::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cell = |idx: usize| record.get(idx).map(str::trim).unwrap_or("");
        let mut row_issues = Vec::new();

        let time_raw = cell(time_idx);
        let time = if time_raw.is_empty() {
            row_issues.push(format!("missing `{}`", schema.time));
            f64::NAN
        } else {
            let t = parse_number(time_raw, line, &schema.time)?;
            if !(t.is_finite() && t > 0.0) {
                row_issues.push(format!("time must be > 0, got {time_raw}"));
            }
            t
        };

        let event_raw = cell(event_idx);
        let event = if event_raw.is_empty() {
            row_issues.push(format!("missing `{}`", schema.event));
            false
        } else {
            let e = parse_number(event_raw, line, &schema.event)?;
            if e != 0.0 && e != 1.0 {
                row_issues.push(format!("event must be 0 or 1, got {event_raw}"));
            }
            e == 1.0
        };

        let mut row_numeric = Vec::with_capacity(feature_idx.len());
        let mut row_levels = Vec::with_capacity(feature_idx.len());
        for (spec, &idx) in schema.features.iter().zip(&feature_idx) {
            let raw = cell(idx);
            if raw.is_empty() {
                row_issues.push(format!("missing `{}`", spec.name));
                row_numeric.push(0.0);
                row_levels.push(String::new());
                continue;
            }
            match spec.kind {
                FeatureKind::Quantitative => {
                    let v = parse_number(raw, line, &spec.name)?;
                    if !v.is_finite() {
                        row_issues.push(format!("`{}` is not finite", spec.name));
                    }
                    row_numeric.push(v);
                    row_levels.push(String::new());
                }
                FeatureKind::Qualitative => {
                    row_numeric.push(0.0);
                    row_levels.push(raw.to_string());
                }
            }
        }

        if row_issues.is_empty() {
            times.push(time);
            events.push(event);
            for (j, (v, l)) in row_numeric.into_iter().zip(row_levels).enumerate() {
                numeric[j].push(v);
                levels[j].push(l);
            }
        } else {
            issues.push(RowIssue {
                line,
                reason: row_issues.join("; "),
            });
        }
    }

    if !issues.is_empty() {
        return Err(Error::RejectedRows(issues));
    }
    if times.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }

    let mut columns = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (j, spec) in schema.features.iter().enumerate() {
        match spec.kind {
            FeatureKind::Quantitative => {
                columns.push(FeatureColumn::quantitative(&spec.name));
                values.push(std::mem::take(&mut numeric[j]));
            }
            FeatureKind::Qualitative => {
                let distinct: BTreeSet<&str> = levels[j].iter().map(String::as_str).collect();
                for level in distinct {
                    columns.push(FeatureColumn::one_hot(&spec.name, level));
                    values.push(levels[j].iter().map(|l| f64::from(u8::from(l == level))).collect());
                }
            }
        }
    }
    let n = times.len();
    let features = Array2::from_shape_fn((n, values.len()), |(i, j)| values[j][i]);
    Dataset::new(features, times, events, columns, schema.clone())
}

/// Writes the dataset in the layout of its schema, collapsing one-hot
/// groups back to their level strings.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let schema = dataset.schema();
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec![schema.time.clone(), schema.event.clone()];
    header.extend(schema.features.iter().map(|f| f.name.clone()));
    writer.write_record(&header)?;

    let mut plan: Vec<Vec<usize>> = Vec::with_capacity(schema.features.len());
    for spec in &schema.features {
        let idx: Vec<usize> = dataset
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.source == spec.name)
            .map(|(j, _)| j)
            .collect();
        if idx.is_empty() {
            return Err(Error::SchemaMismatch(format!("no columns for feature `{}`", spec.name)));
        }
        plan.push(idx);
    }

    for i in 0..dataset.n_rows() {
        let mut row = vec![dataset.times[i].to_string(), if dataset.events[i] { "1" } else { "0" }.to_string()];
        for (spec, idx) in schema.features.iter().zip(&plan) {
            let value = match spec.kind {
                FeatureKind::Quantitative => dataset.features[[i, idx[0]]].to_string(),
                FeatureKind::Qualitative => idx
                    .iter()
                    .find(|&&j| dataset.features[[i, j]] == 1.0)
                    .and_then(|&j| dataset.columns[j].level.clone())
                    .ok_or_else(|| {
                        Error::SchemaMismatch(format!("row {i} has no level set for `{}`", spec.name))
                    })?,
            };
            row.push(value);
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Per-column standardization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
}

impl ScalerStats {
    pub fn fit(features: &Array2<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::DatasetTooSmall("cannot fit a scaler on zero rows".into()));
        }
        let mean = features.mean_axis(Axis(0)).expect("non-empty");
        let std = features.std_axis(Axis(0), 0.0);
        Ok(Self {
            mean: mean.to_vec(),
            std: std.to_vec(),
        })
    }

    /// `(x - mean) / std`; zero-variance columns are divided by 1.
    pub fn transform(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "scaler has {} columns, data has {}",
                self.mean.len(),
                features.ncols()
            )));
        }
        let mut out = features.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let divisor = if self.std[j] > 0.0 { self.std[j] } else { 1.0 };
            let mean = self.mean[j];
            col.mapv_inplace(|v| (v - mean) / divisor);
        }
        Ok(out)
    }
}

pub fn fit_scaler(train: &Dataset) -> Result<ScalerStats> {
    ScalerStats::fit(train.features())
}

pub fn apply_scaler(stats: &ScalerStats, dataset: &Dataset) -> Result<Dataset> {
    dataset.with_features(stats.transform(dataset.features())?)
}

/// Train/validation/test indices of one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// `k` disjoint test folds covering every record, with a validation
/// hold-out carved from each training portion.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    k: usize,
    val_fraction: f64,
    folds: Vec<FoldSplit>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn val_fraction(&self) -> f64 {
        self.val_fraction
    }

    pub fn folds(&self) -> &[FoldSplit] {
        &self.folds
    }

    pub fn fold(&self, i: usize) -> &FoldSplit {
        &self.folds[i]
    }

    /// Fold index of every record.
    pub fn assignments(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for (f, split) in self.folds.iter().enumerate() {
            for &i in &split.test {
                out[i] = f;
            }
        }
        out
    }
}

/// Number of validation rows held out of `n_train` training rows.
pub fn validation_size(n_train: usize, val_fraction: f64) -> usize {
    ((n_train as f64 * val_fraction).round() as usize).min(n_train.saturating_sub(2))
}

/// Splits indices into a training part and a validation part of
/// `val_fraction`, shuffled under `seed`.
pub fn split_validation(indices: &[usize], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = validation_size(shuffled.len(), val_fraction);
    let train = shuffled.split_off(n_val);
    (train, shuffled)
}

pub fn make_folds(n: usize, k: usize, val_fraction: f64, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!("validation fraction must be in [0, 1), got {val_fraction}")));
    }
    if n < k {
        return Err(Error::DatasetTooSmall(format!("{n} records cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let base = n / k;
    let extra = n % k;
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for f in 0..k {
        bounds.push(bounds[f] + base + usize::from(f < extra));
    }

    let folds = (0..k)
        .map(|f| {
            let test = order[bounds[f]..bounds[f + 1]].to_vec();
            let rest: Vec<usize> = order[..bounds[f]].iter().chain(&order[bounds[f + 1]..]).copied().collect();
            let n_val = validation_size(rest.len(), val_fraction);
            FoldSplit {
                validation: rest[..n_val].to_vec(),
                train: rest[n_val..].to_vec(),
                test,
            }
        })
        .collect();
    Ok(FoldPlan { k, val_fraction, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn mixed_schema() -> Schema {
        Schema::from_toml_str(
            r#"
            time = "t"
            event = "d"
            [[feature]]
            name = "age"
            kind = "quantitative"
            [[feature]]
            name = "grade"
            kind = "qualitative"
            "#,
        )
        .unwrap()
    }

    #[test]
    fn loads_well_formed_file_with_one_hot() {
        let f = write_file("t,d,age,grade\n1.5,1,40,b\n2,0,55.5,a\n0.25,1,61,b\n");
        let ds = load_csv(f.path(), &mixed_schema()).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.feature_names(), vec!["age", "grade=a", "grade=b"]);
        assert_eq!(ds.qualitative_mask(), vec![false, true, true]);
        assert_eq!(ds.times(), &[1.5, 2.0, 0.25]);
        assert_eq!(ds.events(), &[true, false, true]);
        assert_eq!(ds.features().row(1).to_vec(), vec![55.5, 1.0, 0.0]);
    }

    #[test]
    fn distinct_errors() {
        let schema = mixed_schema();
        let empty = write_file("");
        assert!(matches!(load_csv(empty.path(), &schema), Err(Error::EmptyFile(_))));
        let header_only = write_file("t,d,age,grade\n");
        assert!(matches!(load_csv(header_only.path(), &schema), Err(Error::EmptyFile(_))));
        let missing = write_file("t,d,age\n1,1,3\n");
        assert!(matches!(load_csv(missing.path(), &schema), Err(Error::MissingColumn(c)) if c == "grade"));
        let bad = write_file("t,d,age,grade\n1,1,old,a\n");
        match load_csv(bad.path(), &schema) {
            Err(Error::UnparsableCell { line, column, value }) => {
                assert_eq!((line, column.as_str(), value.as_str()), (2, "age", "old"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejected_rows_list_line_numbers() {
        let f = write_file("t,d,age,grade\n1,1,3,a\n0,1,3,a\n2,,3,a\n3,2,4,b\n-1,0,,a\n");
        match load_csv(f.path(), &mixed_schema()) {
            Err(Error::RejectedRows(rows)) => {
                let lines: Vec<usize> = rows.iter().map(|r| r.line).collect();
                assert_eq!(lines, vec![3, 4, 5, 6]);
                assert!(rows[0].reason.contains("time"));
                assert!(rows[1].reason.contains("missing `d`"));
                assert!(rows[2].reason.contains("0 or 1"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn export_round_trips() {
        let f = write_file("t,d,age,grade\n1.5,1,40.125,b\n2,0,55.5,a\n0.1,1,-61,c\n");
        let ds = load_csv(f.path(), &mixed_schema()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, out.path()).unwrap();
        assert_eq!(load_csv(out.path(), ds.schema()).unwrap(), ds);
    }

    #[test]
    fn schema_toml_round_trips() {
        let schema = mixed_schema();
        assert_eq!(Schema::from_toml_str(&schema.to_toml_string()).unwrap(), schema);
        assert!(Schema::from_toml_str("time = \"t\"\nevent = \"t\"\n[[feature]]\nname=\"x\"\nkind=\"quantitative\"").is_err());
    }

    #[test]
    fn align_fills_absent_levels_and_rejects_unknowns() {
        let f = write_file("t,d,age,grade\n1,1,3,b\n2,0,4,b\n");
        let ds = load_csv(f.path(), &mixed_schema()).unwrap();
        let names: Vec<String> = ["age", "grade=a", "grade=b"].iter().map(|s| s.to_string()).collect();
        let aligned = ds.align_features(&names).unwrap();
        assert_eq!(aligned.features().row(0).to_vec(), vec![3.0, 0.0, 1.0]);
        let missing: Vec<String> = vec!["age".into(), "grade=a".into(), "size".into()];
        assert!(matches!(ds.align_features(&missing), Err(Error::SchemaMismatch(_))));
        let narrow: Vec<String> = vec!["age".into(), "grade=a".into()];
        assert!(matches!(ds.align_features(&narrow), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn scaler_standardizes_and_handles_constants() {
        let x = ndarray::array![[1.0, 5.0, 2.0], [2.0, 5.0, 4.0], [3.0, 5.0, 9.0], [6.0, 5.0, 1.0]];
        let stats = ScalerStats::fit(&x).unwrap();
        let z = stats.transform(&x).unwrap();
        assert!(z.column(1).iter().all(|&v| v == 0.0));
        for j in [0, 2] {
            let col = z.column(j);
            assert!(col.mean().unwrap().abs() < 1e-10);
            assert!((col.std(0.0) - 1.0).abs() < 1e-10);
        }
        // Idempotent on the training set.
        let again = ScalerStats::fit(&z).unwrap().transform(&z).unwrap();
        assert!((&again - &z).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn scaler_uses_only_fitted_statistics() {
        let a = ndarray::array![[1.0], [3.0]];
        let stats = ScalerStats::fit(&a).unwrap();
        let b = ndarray::array![[10.0], [0.0]];
        let mut mutated = b.clone();
        mutated[[1, 0]] = 1000.0;
        let zb = stats.transform(&b).unwrap();
        let zm = stats.transform(&mutated).unwrap();
        assert_eq!(zb[[0, 0]], zm[[0, 0]]);
        assert_eq!(zb[[0, 0]], 8.0);
    }

    #[test]
    fn folds_of_ten() {
        let plan = make_folds(10, 5, 0.2, 3).unwrap();
        assert!(plan.folds().iter().all(|f| f.test.len() == 2));
        assert_eq!(plan, make_folds(10, 5, 0.2, 3).unwrap());
        assert!(matches!(make_folds(4, 5, 0.2, 0), Err(Error::DatasetTooSmall(_))));
        assert!(make_folds(10, 1, 0.2, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_the_data(n in 5usize..300, k in 2usize..6, seed in any::<u64>(), vf in 0.0f64..0.5) {
            prop_assume!(n >= k);
            let plan = make_folds(n, k, vf, seed).unwrap();
            let mut seen = vec![0usize; n];
            for split in plan.folds() {
                for &i in &split.test {
                    seen[i] += 1;
                }
                let mut all: Vec<usize> = split.train.iter().chain(&split.validation).chain(&split.test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = plan.folds().iter().map(|f| f.test.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
