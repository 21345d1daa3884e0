//! Typed tabular data: feature schema, CSV ingestion, target sets and splits.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::rect::{bound_from_json, Interval};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

/// One input column. Categorical values are coded `0..categories.len()`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Continuous,
            categories: Vec::new(),
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    pub fn encode(&self, raw: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == raw)
    }

    pub fn decode(&self, code: usize) -> Option<&str> {
        self.categories.get(code).map(String::as_str)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

/// The response column. `classes` is filled in at ingestion when left empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
}

impl TargetSpec {
    pub fn classification<S: Into<String>>(name: impl Into<String>, classes: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            task: Task::Classification,
            classes: classes.into_iter().map(Into::into).collect(),
        }
    }

    pub fn regression(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            task: Task::Regression,
            classes: Vec::new(),
        }
    }
}

/// JSON sidecar describing a CSV file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    #[serde(default)]
    pub target: Option<TargetSpec>,
}

impl Schema {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let schema: Schema = serde_json::from_str(&text)?;
        validate_features(&schema.features)?;
        Ok(schema)
    }
}

fn validate_features(features: &[FeatureSpec]) -> Result<()> {
    if features.is_empty() {
        return Err(Error::Schema("at least one feature is required".into()));
    }
    let mut seen = HashSet::new();
    for f in features {
        if !seen.insert(f.name.as_str()) {
            return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
        }
        if f.is_categorical() && f.categories.len() < 2 {
            return Err(Error::Schema(format!(
                "categorical feature `{}` needs at least two categories",
                f.name
            )));
        }
    }
    Ok(())
}

/// Immutable n x p table with a target vector. Class targets are stored as codes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dataset<T> {
    features: Vec<FeatureSpec>,
    target: TargetSpec,
    x: Vec<T>,
    y: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset from a row-major matrix, checking every invariant.
    pub fn new(features: Vec<FeatureSpec>, target: TargetSpec, x: Vec<T>, y: Vec<T>) -> Result<Self> {
        validate_features(&features)?;
        let p = features.len();
        if y.is_empty() {
            return Err(Error::EmptyInput("dataset has no rows".into()));
        }
        if x.len() != y.len() * p {
            return Err(Error::InvalidParameter(format!(
                "matrix has {} cells, expected {} rows x {p} features",
                x.len(),
                y.len()
            )));
        }
        for (cell, v) in x.iter().enumerate() {
            let (row, j) = (cell / p, cell % p);
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "row {row}, feature `{}`: non-finite value",
                    features[j].name
                )));
            }
            let f = &features[j];
            if f.is_categorical() {
                let ok = v.fract() == T::zero() && *v >= T::zero() && v.as_f64() < f.categories.len() as f64;
                if !ok {
                    return Err(Error::InvalidParameter(format!(
                        "row {row}, feature `{}`: {v} is not a category code",
                        f.name
                    )));
                }
            }
        }
        for (row, v) in y.iter().enumerate() {
            let ok = match target.task {
                Task::Regression => v.is_finite(),
                Task::Classification => {
                    v.fract() == T::zero() && *v >= T::zero() && v.as_f64() < target.classes.len() as f64
                }
            };
            if !ok {
                return Err(Error::InvalidParameter(format!("row {row}: invalid target value {v}")));
            }
        }
        Ok(Self { features, target, x, y })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn target(&self) -> &TargetSpec {
        &self.target
    }

    pub fn task(&self) -> Task {
        self.target.task
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_classes(&self) -> usize {
        self.target.classes.len()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let p = self.n_features();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.x.chunks_exact(self.n_features())
    }

    pub fn value(&self, i: usize, j: usize) -> T {
        self.x[i * self.n_features() + j]
    }

    pub fn matrix(&self) -> &[T] {
        &self.x
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Human-readable rendering of a cell value.
    pub fn decode(&self, j: usize, v: T) -> String {
        let f = &self.features[j];
        match f.kind {
            FeatureKind::Categorical => v
                .to_usize()
                .and_then(|c| f.decode(c))
                .map(str::to_owned)
                .unwrap_or_else(|| v.to_string()),
            FeatureKind::Continuous => v.to_string(),
        }
    }

    pub fn class_name(&self, code: usize) -> Option<&str> {
        self.target.classes.get(code).map(String::as_str)
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut x = Vec::with_capacity(rows.len() * self.n_features());
        let mut y = Vec::with_capacity(rows.len());
        for &i in rows {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Self {
            features: self.features.clone(),
            target: self.target.clone(),
            x,
            y,
        }
    }

    /// Same features, new response column (e.g. a query model's predictions).
    pub fn with_targets(&self, target: TargetSpec, y: Vec<T>) -> Result<Self> {
        Self::new(self.features.clone(), target, self.x.clone(), y)
    }

    /// Same rows with replaced feature values; categorical codes must stay valid.
    pub fn with_matrix(&self, x: Vec<T>) -> Result<Self> {
        Self::new(self.features.clone(), self.target.clone(), x, self.y.clone())
    }
}

/// Reads a CSV with a header row. Categorical cells are coded in schema order.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, features: &[FeatureSpec], target: &TargetSpec) -> Result<Dataset<T>> {
    let path = path.as_ref();
    validate_features(features)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let header = reader.headers()?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let cols: Vec<usize> = features.iter().map(|f| column(&f.name)).collect::<Result<_>>()?;
    let target_col = column(&target.name)?;

    let ingest = |row: usize, column: &str, reason: String| Error::Ingest {
        path: path.to_path_buf(),
        row,
        column: column.to_owned(),
        reason,
    };

    let mut x = Vec::new();
    let mut raw_targets = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (f, &c) in features.iter().zip(&cols) {
            let cell = record.get(c).unwrap_or("");
            if cell.is_empty() {
                return Err(ingest(row, &f.name, "empty cell".into()));
            }
            let v = match f.kind {
                FeatureKind::Continuous => cell
                    .parse::<T>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ingest(row, &f.name, format!("cannot parse `{cell}` as a number")))?,
                FeatureKind::Categorical => {
                    let code = f
                        .encode(cell)
                        .ok_or_else(|| ingest(row, &f.name, format!("unknown category `{cell}`")))?;
                    T::of_usize(code)
                }
            };
            x.push(v);
        }
        let cell = record.get(target_col).unwrap_or("");
        if cell.is_empty() {
            return Err(ingest(row, &target.name, "empty cell".into()));
        }
        raw_targets.push((row, cell.to_owned()));
    }
    if raw_targets.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no data rows", path.display())));
    }

    let mut spec = target.clone();
    let y = match spec.task {
        Task::Regression => raw_targets
            .iter()
            .map(|(row, cell)| {
                cell.parse::<T>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ingest(*row, &spec.name, format!("cannot parse `{cell}` as a number")))
            })
            .collect::<Result<Vec<T>>>()?,
        Task::Classification => {
            if spec.classes.is_empty() {
                let seen: BTreeSet<&str> = raw_targets.iter().map(|(_, c)| c.as_str()).collect();
                spec.classes = seen.into_iter().map(str::to_owned).collect();
            }
            raw_targets
                .iter()
                .map(|(row, cell)| {
                    spec.classes
                        .iter()
                        .position(|c| c == cell)
                        .map(T::of_usize)
                        .ok_or_else(|| ingest(*row, &spec.name, format!("unknown class `{cell}`")))
                })
                .collect::<Result<Vec<T>>>()?
        }
    };
    Dataset::new(features.to_vec(), spec, x, y)
}

/// Row indices of a seeded random train/test partition, each part sorted.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidParameter("splitting needs at least two rows".into()));
    }
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx.split_off(n_train);
    idx.sort_unstable();
    test.sort_unstable();
    Ok((idx, test))
}

/// Seeded random partition into train and test parts; rows keep their relative order.
pub fn split<T: Scalar>(ds: &Dataset<T>, train_fraction: f64, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    let (train, test) = split_indices(ds.n_rows(), train_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Desired outcome: one class, or an interval of real responses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetSet<T> {
    Class(usize),
    Interval(Interval<T>),
}

impl<T: Scalar> TargetSet<T> {
    /// Regression target `[lo, hi]`. A single point needs `allow_point`.
    pub fn interval(lo: T, hi: T, allow_point: bool) -> Result<Self> {
        let iv = Interval::new(lo, hi)?;
        if iv.is_point() && !allow_point {
            return Err(Error::InvalidParameter(format!(
                "target interval [{lo}, {hi}] is a single point"
            )));
        }
        Ok(Self::Interval(iv))
    }

    pub fn class(code: usize) -> Self {
        Self::Class(code)
    }

    /// Checks the target against the dataset's response column.
    pub fn validate(&self, target: &TargetSpec) -> Result<()> {
        match (self, target.task) {
            (Self::Class(c), Task::Classification) if *c < target.classes.len() => Ok(()),
            (Self::Class(c), Task::Classification) => Err(Error::InvalidParameter(format!(
                "class code {c} outside 0..{}",
                target.classes.len()
            ))),
            (Self::Interval(_), Task::Regression) => Ok(()),
            _ => Err(Error::InvalidParameter("target kind does not match the task".into())),
        }
    }

    pub fn contains(&self, y: T) -> bool {
        match self {
            Self::Class(c) => y == T::of_usize(*c),
            Self::Interval(iv) => iv.contains(y),
        }
    }

    /// `"<class name>"` for classification, `"lo,hi"` for regression (`inf` allowed).
    pub fn parse(text: &str, target: &TargetSpec) -> Result<Self> {
        match target.task {
            Task::Classification => target
                .classes
                .iter()
                .position(|c| c == text.trim())
                .map(Self::Class)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown class `{text}`"))),
            Task::Regression => {
                let trimmed = text.trim().trim_start_matches('[').trim_end_matches(']');
                let parts: Vec<&str> = trimmed.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(Error::InvalidParameter(format!("expected `lo,hi`, got `{text}`")));
                }
                let bound = |s: &str| -> Result<T> {
                    let v = s
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(|v| json!(v))
                        .unwrap_or_else(|| Value::String(s.to_owned()));
                    bound_from_json(&v)
                };
                Self::interval(bound(parts[0])?, bound(parts[1])?, false)
            }
        }
    }

    pub fn to_json(&self, target: &TargetSpec) -> Value {
        match self {
            Self::Class(c) => json!({ "class": target.classes.get(*c).cloned().unwrap_or_else(|| c.to_string()) }),
            Self::Interval(iv) => json!({ "interval": iv }),
        }
    }

    pub fn from_json(value: &Value, target: &TargetSpec) -> Result<Self> {
        if let Some(c) = value.get("class").and_then(Value::as_str) {
            return Self::parse(c, target);
        }
        if let Some(iv) = value.get("interval") {
            let iv: Interval<T> = serde_json::from_value(iv.clone())?;
            return Ok(Self::Interval(iv));
        }
        Err(Error::Format(format!("unrecognised target {value}")))
    }
}

/// Min-max scaling of continuous features onto `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MinMaxScaler<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
    pub categorical: Vec<bool>,
}

impl<T: Scalar> MinMaxScaler<T> {
    pub fn fit(ds: &Dataset<T>) -> Self {
        let p = ds.n_features();
        let mut min = vec![T::infinity(); p];
        let mut max = vec![T::neg_infinity(); p];
        for row in ds.rows() {
            for j in 0..p {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        let categorical = ds.features().iter().map(FeatureSpec::is_categorical).collect();
        Self { min, max, categorical }
    }

    pub fn scale_value(&self, j: usize, v: T) -> T {
        if self.categorical[j] {
            return v;
        }
        let range = self.max[j] - self.min[j];
        if range > T::zero() {
            (v - self.min[j]) / range
        } else {
            T::zero()
        }
    }

    pub fn transform(&self, ds: &Dataset<T>) -> Result<Dataset<T>> {
        let p = ds.n_features();
        let x = ds
            .matrix()
            .iter()
            .enumerate()
            .map(|(cell, &v)| self.scale_value(cell % p, v))
            .collect();
        ds.with_matrix(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn schema() -> Vec<FeatureSpec> {
        vec![FeatureSpec::continuous("age"), FeatureSpec::categorical("sex", ["F", "M"])]
    }

    #[test]
    fn loads_and_codes_categoricals() {
        let f = write_csv("age,sex,y\n31,M,0\n45,F,1\n22,M,1\n");
        let ds: Dataset<f64> = load_csv(f.path(), &schema(), &TargetSpec::classification("y", ["0", "1"])).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.row(0), &[31.0, 1.0]);
        assert_eq!(ds.row(1), &[45.0, 0.0]);
        assert_eq!(ds.y(), &[0.0, 1.0, 1.0]);
        assert_eq!(ds.decode(1, 1.0), "M");
    }

    #[test]
    fn empty_cell_names_row_and_column() {
        let f = write_csv("age,sex,y\n31,M,0\n,F,1\n");
        let err = load_csv::<f64>(f.path(), &schema(), &TargetSpec::regression("y")).unwrap_err();
        match err {
            Error::Ingest { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_category_and_missing_column() {
        let f = write_csv("age,sex,y\n31,X,0\n");
        let err = load_csv::<f64>(f.path(), &schema(), &TargetSpec::regression("y")).unwrap_err();
        assert!(err.to_string().contains("unknown category"));
        let f = write_csv("age,y\n31,0\n");
        let err = load_csv::<f64>(f.path(), &schema(), &TargetSpec::regression("y")).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "sex"));
    }

    #[test]
    fn infers_classes_when_schema_is_silent() {
        let f = write_csv("age,sex,y\n31,M,yes\n45,F,no\n");
        let ds: Dataset<f32> = load_csv(f.path(), &schema(), &TargetSpec::classification("y", Vec::<String>::new())).unwrap();
        assert_eq!(ds.target().classes, vec!["no", "yes"]);
        assert_eq!(ds.y(), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_schemas() {
        let dup = vec![FeatureSpec::continuous("a"), FeatureSpec::continuous("a")];
        assert!(Dataset::<f64>::new(dup, TargetSpec::regression("y"), vec![0.0, 0.0], vec![0.0]).is_err());
        let thin = vec![FeatureSpec::categorical("c", ["only"])];
        assert!(Dataset::<f64>::new(thin, TargetSpec::regression("y"), vec![0.0], vec![0.0]).is_err());
        let bad_code = vec![FeatureSpec::categorical("c", ["a", "b"])];
        assert!(Dataset::<f64>::new(bad_code, TargetSpec::regression("y"), vec![2.0], vec![0.0]).is_err());
    }

    fn numbered(n: usize) -> Dataset<f64> {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        Dataset::new(vec![FeatureSpec::continuous("i")], TargetSpec::regression("y"), x.clone(), x).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = numbered(100);
        let (a, b) = split(&ds, 0.75, 0).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (75, 25));
        let (a2, b2) = split(&ds, 0.75, 0).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        let (c, d) = split(&numbered(2), 0.5, 3).unwrap();
        assert_eq!((c.n_rows(), d.n_rows()), (1, 1));
        assert!(split(&ds, 1.0, 0).is_err());
        assert!(split(&ds, 0.0, 0).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let ds = numbered(57);
        let (a, b) = split(&ds, 0.3, 11).unwrap();
        let mut all: Vec<f64> = a.y().iter().chain(b.y()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, ds.y());
    }

    #[test]
    fn target_parsing() {
        let reg = TargetSpec::regression("price");
        let t = TargetSet::<f64>::parse("2.0, 2.5", &reg).unwrap();
        assert!(t.contains(2.2) && !t.contains(2.6));
        let open = TargetSet::<f64>::parse("3,inf", &reg).unwrap();
        assert!(open.contains(1e12));
        assert!(TargetSet::<f64>::parse("2,2", &reg).is_err());
        assert!(TargetSet::<f64>::interval(2.0, 2.0, true).is_ok());
        let cls = TargetSpec::classification("y", ["no", "yes"]);
        let t = TargetSet::<f64>::parse("yes", &cls).unwrap();
        assert_eq!(t, TargetSet::Class(1));
        assert!(t.contains(1.0) && !t.contains(0.0));
        let round = TargetSet::<f64>::from_json(&t.to_json(&cls), &cls).unwrap();
        assert_eq!(round, t);
    }

    #[test]
    fn scaler_maps_continuous_onto_unit_interval() {
        let ds = numbered(11);
        let scaled = MinMaxScaler::fit(&ds).transform(&ds).unwrap();
        assert_eq!(scaled.value(0, 0), 0.0);
        assert_eq!(scaled.value(10, 0), 1.0);
        assert!((scaled.value(5, 0) - 0.5).abs() < 1e-12);
    }
}
