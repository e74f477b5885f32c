//! CSV datasets, JSON model files and experiment outputs.
//!
//! Floating point values are written with 17 significant digits so every `f64` survives
//! a write/read round trip bit for bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Label, LabeledSample};
use crate::error::{Error, Result};
use crate::experiment::{ExperimentResult, Failure, Method, Record, Summary};
use crate::partition::{interval_index, Boundaries, IntervalIndex};
use crate::simulate::SettingId;
use crate::solver::{sigmoid, LinearModel};
use crate::surrogate::{SurrogateDocument, SurrogateSpec};

/// `v` in scientific notation with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Data(format!("malformed CSV: {kind:?}")),
    }
}

/// Features, optional labels and optional true probabilities read from a CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub dim: usize,
    /// Row-major.
    pub features: Vec<f64>,
    pub labels: Option<Vec<Label>>,
    pub true_probs: Option<Vec<f64>>,
}

impl Table {
    pub fn rows(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Converts to a labelled sample; fails if the table has no `y` column.
    pub fn into_sample(self) -> Result<LabeledSample> {
        let labels = self
            .labels
            .ok_or_else(|| Error::Data("missing required column `y`".into()))?;
        let sample = LabeledSample::new(self.features, self.dim, labels)?;
        match self.true_probs {
            Some(p) => sample.with_true_probs(p),
            None => Ok(sample),
        }
    }
}

/// Reads a table with header `x1, …, xp[, y][, true_prob]` in any column order.
/// Unknown columns are rejected.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.is_empty() {
        return Err(Error::Data("missing header row".into()));
    }
    let mut feature_cols: Vec<(usize, usize)> = Vec::new();
    let (mut y_col, mut prob_col) = (None, None);
    for (col, name) in headers.iter().enumerate() {
        match name {
            "y" => y_col = Some(col),
            "true_prob" => prob_col = Some(col),
            _ => match name.strip_prefix('x').and_then(|n| n.parse::<usize>().ok()) {
                Some(j) if j >= 1 => feature_cols.push((j, col)),
                _ => return Err(Error::Data(format!("unexpected column `{name}` (column {})", col + 1))),
            },
        }
    }
    feature_cols.sort_unstable();
    if feature_cols.is_empty() {
        return Err(Error::Data("missing feature columns `x1`, `x2`, …".into()));
    }
    for (i, &(j, _)) in feature_cols.iter().enumerate() {
        if j != i + 1 {
            return Err(Error::Data(format!("missing feature column `x{}`", i + 1)));
        }
    }
    let dim = feature_cols.len();
    let mut features = Vec::new();
    let mut labels = y_col.map(|_| Vec::new());
    let mut probs = prob_col.map(|_| Vec::new());
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row = r + 1;
        let field = |col: usize| -> Result<&str> {
            record.get(col).ok_or_else(|| {
                Error::Data(format!(
                    "row {row}: expected {} fields, found {}",
                    headers.len(),
                    record.len()
                ))
            })
        };
        let number = |col: usize| -> Result<f64> {
            let text = field(col)?;
            text.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::Data(format!(
                    "row {row}, column `{}`: `{text}` is not a finite number",
                    &headers[col]
                ))
            })
        };
        for &(_, col) in &feature_cols {
            features.push(number(col)?);
        }
        if let (Some(col), Some(labels)) = (y_col, labels.as_mut()) {
            let text = field(col)?;
            let y = text
                .parse::<f64>()
                .ok()
                .and_then(|v| {
                    if v == 1.0 {
                        Some(Label::Pos)
                    } else if v == -1.0 {
                        Some(Label::Neg)
                    } else {
                        None
                    }
                })
                .ok_or_else(|| Error::Data(format!("row {row}, column `y`: label `{text}` is not -1 or 1")))?;
            labels.push(y);
        }
        if let (Some(col), Some(probs)) = (prob_col, probs.as_mut()) {
            let p = number(col)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Data(format!(
                    "row {row}, column `true_prob`: {p} is not in [0, 1]"
                )));
            }
            probs.push(p);
        }
    }
    Ok(Table {
        dim,
        features,
        labels,
        true_probs: probs,
    })
}

pub fn read_table_file(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_table(file).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads a labelled dataset; the `y` column is required.
pub fn read_dataset(path: &Path) -> Result<LabeledSample> {
    read_table_file(path)?.into_sample().map_err(|e| match e {
        Error::Data(msg) if !msg.starts_with(&*path.display().to_string()) => {
            Error::Data(format!("{}: {msg}", path.display()))
        }
        other => other,
    })
}

/// Writes `x1..xp, y` and, when known, `true_prob`.
pub fn write_dataset<W: Write>(writer: W, data: &LabeledSample) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=data.dim()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    if data.true_probs().is_some() {
        header.push("true_prob".into());
    }
    w.write_record(&header).map_err(csv_error)?;
    for (i, x) in data.rows().enumerate() {
        let mut row: Vec<String> = x.iter().map(|&v| format_f64(v)).collect();
        row.push(data.labels()[i].as_i8().to_string());
        if let Some(p) = data.true_probs() {
            row.push(format_f64(p[i]));
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_file(path: &Path, data: &LabeledSample) -> Result<()> {
    write_dataset(File::create(path)?, data)
}

/// Serialized fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub w: Vec<f64>,
    pub b: f64,
    pub pi: Boundaries,
    pub delta: Vec<f64>,
    pub loss: Method,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<SurrogateDocument>,
}

impl ModelDocument {
    pub fn new(model: &LinearModel, spec: &SurrogateSpec, method: Method, lambda: f64) -> Self {
        Self {
            w: model.w.clone(),
            b: model.b,
            pi: spec.boundaries().clone(),
            delta: spec.deltas().to_vec(),
            loss: method,
            lambda,
            surrogate: (method == Method::Piecewise).then(|| spec.to_document()),
        }
    }

    pub fn model(&self) -> LinearModel {
        LinearModel {
            w: self.w.clone(),
            b: self.b,
        }
    }

    /// The surrogate stored in the file, or the logistic-derived one for `pi`.
    pub fn spec(&self) -> Result<SurrogateSpec> {
        match &self.surrogate {
            Some(doc) => SurrogateSpec::from_document(doc),
            None => SurrogateSpec::logistic(&self.pi),
        }
    }

    /// Interval chosen for margin `f`: through `delta` for the piecewise method and
    /// through `σ(f)` for logistic.
    pub fn interval(&self, f: f64) -> Result<IntervalIndex> {
        match self.loss {
            Method::Piecewise => Ok(crate::loss::interval_from_margin(f, &self.delta)),
            Method::Logistic => interval_index(sigmoid(f), &self.pi),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.w.is_empty() {
            return Err(Error::Data("model has no coefficients".into()));
        }
        if self.w.iter().chain([&self.b, &self.lambda]).any(|v| !v.is_finite()) {
            return Err(Error::Data("model contains non-finite values".into()));
        }
        crate::loss::validate_thresholds(&self.delta, &self.pi).map_err(|e| Error::Data(e.to_string()))
    }
}

pub fn write_model(path: &Path, doc: &ModelDocument) -> Result<()> {
    let text = serde_json::to_string_pretty(doc).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<ModelDocument> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let doc: ModelDocument =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    doc.validate()?;
    Ok(doc)
}

/// One row of a predictions file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub f: f64,
    pub interval: IntervalIndex,
    pub lo: f64,
    pub hi: f64,
}

/// Margins and intervals for every row of `table`.
pub fn predict_table(doc: &ModelDocument, table: &Table) -> Result<Vec<Prediction>> {
    if table.dim != doc.w.len() {
        return Err(Error::Data(format!(
            "data has {} feature columns, model expects {}",
            table.dim,
            doc.w.len()
        )));
    }
    let model = doc.model();
    (0..table.rows())
        .map(|i| {
            let f = crate::solver::predict_margin(&model, table.row(i))?;
            let interval = doc.interval(f)?;
            let (lo, hi) = doc.pi.interval_bounds(interval);
            Ok(Prediction { f, interval, lo, hi })
        })
        .collect()
}

pub fn write_predictions<W: Write>(writer: W, predictions: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["f", "interval_index", "interval_lo", "interval_hi"])
        .map_err(csv_error)?;
    for p in predictions {
        w.write_record([
            format_f64(p.f),
            p.interval.get().to_string(),
            format_f64(p.lo),
            format_f64(p.hi),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-record results table `setting, p, replication, method, lambda, test_loss`.
pub fn write_results<W: Write>(writer: W, records: &[Record]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["setting", "p", "replication", "method", "lambda", "test_loss"])
        .map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.setting.to_string(),
            r.p.to_string(),
            r.replication.to_string(),
            r.method.to_string(),
            format_f64(r.lambda),
            format_f64(r.test_loss),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// JSON block accompanying the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub setting: SettingId,
    pub boundaries: Boundaries,
    pub bayes_floor: f64,
    pub summaries: Vec<Summary>,
    pub nonconverged_records: usize,
    pub failures: Vec<Failure>,
}

impl From<&ExperimentResult> for SummaryDocument {
    fn from(r: &ExperimentResult) -> Self {
        Self {
            setting: r.setting,
            boundaries: r.boundaries.clone(),
            bayes_floor: r.bayes_floor,
            summaries: r.summaries.clone(),
            nonconverged_records: r.records.iter().filter(|r| !r.converged).count(),
            failures: r.failures.clone(),
        }
    }
}

/// Writes `results.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_experiment(dir: &Path, result: &ExperimentResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_results(File::create(dir.join("results.csv"))?, &result.records)?;
    let text = serde_json::to_string_pretty(&SummaryDocument::from(result)).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Table> {
        read_table(text.as_bytes())
    }

    #[test]
    fn reads_any_column_order() {
        let t = read("y,x2,x1\n1,2.5,-1\n-1,0,3\n").unwrap();
        assert_eq!(t.dim, 2);
        assert_eq!(t.features, vec![-1.0, 2.5, 3.0, 0.0]);
        assert_eq!(t.labels.unwrap(), vec![Label::Pos, Label::Neg]);
    }

    #[test]
    fn diagnostics_name_row_and_column() {
        let e = read("x1,y\n1,1\nabc,1\n").unwrap_err().to_string();
        assert!(e.contains("row 2") && e.contains("x1"), "{e}");
        let e = read("x1,y\n1,0\n").unwrap_err().to_string();
        assert!(e.contains("`y`"), "{e}");
        let e = read("x1,x3,y\n1,2,1\n").unwrap_err().to_string();
        assert!(e.contains("x2"), "{e}");
        let e = read("x1,z\n1,2\n").unwrap_err().to_string();
        assert!(e.contains("`z`"), "{e}");
        let e = read("x1\n1\n").unwrap().into_sample().unwrap_err().to_string();
        assert!(e.contains("`y`"), "{e}");
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let values = vec![0.1, -1.0 / 3.0, std::f64::consts::PI, 1e-300, -5e300, 2.0 / 7.0];
        let data = LabeledSample::new(values, 2, vec![Label::Pos, Label::Neg, Label::Pos])
            .unwrap()
            .with_true_probs(vec![0.25, 1.0 / 6.0, 0.875])
            .unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        let back = read_table(buf.as_slice()).unwrap().into_sample().unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn header_only_is_empty_table() {
        let t = read("x1,x2,y\n").unwrap();
        assert_eq!(t.rows(), 0);
        assert_eq!(t.dim, 2);
    }

    #[test]
    fn model_predictions() {
        let pi = Boundaries::new(vec![0.5]).unwrap();
        let spec = SurrogateSpec::logistic(&pi).unwrap();
        let doc = ModelDocument::new(&LinearModel { w: vec![1.0], b: 0.0 }, &spec, Method::Piecewise, 0.01);
        assert_eq!(doc.delta, vec![0.0]);
        let table = read("x1\n-1\n0\n2\n").unwrap();
        let p = predict_table(&doc, &table).unwrap();
        assert_eq!((p[0].interval.get(), p[0].lo, p[0].hi), (0, 0.0, 0.5));
        assert_eq!(p[1].interval.get(), 0);
        assert_eq!((p[2].interval.get(), p[2].lo, p[2].hi), (1, 0.5, 1.0));
        assert!(predict_table(&doc, &read("x1,x2\n1,2\n").unwrap()).is_err());
        let json = serde_json::to_string(&doc).unwrap();
        let back: ModelDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.spec().unwrap().deltas(), spec.deltas());
    }
}
