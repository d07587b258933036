//! Attack scoring with Link as the positive class, cross-dataset grids and
//! report emission.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pairs::LinkLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prediction {
    Link,
    Unlink,
    Unparseable,
}

impl From<LinkLabel> for Prediction {
    fn from(l: LinkLabel) -> Self {
        match l {
            LinkLabel::Link => Prediction::Link,
            LinkLabel::Unlink => Prediction::Unlink,
        }
    }
}

impl From<bool> for Prediction {
    fn from(link: bool) -> Self {
        if link {
            Prediction::Link
        } else {
            Prediction::Unlink
        }
    }
}

/// What to do with predictions that carry no verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnparseablePolicy {
    /// Score as the wrong answer: FN for a Link, FP for an Unlink.
    #[default]
    CountAsWrong,
    /// Leave out of the confusion matrix.
    Exclude,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn scored(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackId {
    pub method: String,
    pub dataset: String,
    pub setting: String,
    pub seed: u64,
}

impl AttackId {
    pub fn new(method: impl Into<String>, dataset: impl Into<String>, setting: impl Into<String>, seed: u64) -> Self {
        AttackId { method: method.into(), dataset: dataset.into(), setting: setting.into(), seed }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub attack_id: AttackId,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    pub n_test: usize,
    pub unparseable_count: usize,
    /// Test items left out of the confusion matrix (excluded verdicts and
    /// pairs whose metric was undefined).
    pub excluded_count: usize,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl AttackReport {
    pub fn with_id(mut self, id: AttackId) -> Self {
        self.attack_id = id;
        self
    }

    pub fn flag(mut self, note: impl Into<String>) -> Self {
        self.flags.push(note.into());
        self
    }

    fn from_confusion(c: Confusion, n_test: usize, unparseable: usize, excluded: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        AttackReport {
            attack_id: AttackId::default(),
            accuracy: ratio(c.tp + c.tn, c.scored()),
            precision,
            recall,
            f1,
            confusion: c,
            n_test,
            unparseable_count: unparseable,
            excluded_count: excluded,
            flags: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{what}: {left} vs {right}")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
    #[error("nothing to score")]
    Empty,
    #[error("duplicate cross-matrix cell ({train}, {eval})")]
    DuplicateCell { train: String, eval: String },
    #[error("expected {expected} reports, got {found}")]
    Cardinality { expected: usize, found: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Serialize(String),
}

/// Scores `predictions` against `gold`, Link positive.
pub fn compute_metrics(
    predictions: &[Prediction],
    gold: &[LinkLabel],
    policy: UnparseablePolicy,
) -> Result<AttackReport, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch { what: "predictions vs gold labels", left: predictions.len(), right: gold.len() });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut c = Confusion::default();
    let (mut unparseable, mut excluded) = (0, 0);
    for (&p, &g) in predictions.iter().zip(gold) {
        let predicted_link = match p {
            Prediction::Link => true,
            Prediction::Unlink => false,
            Prediction::Unparseable => {
                unparseable += 1;
                match policy {
                    UnparseablePolicy::Exclude => {
                        excluded += 1;
                        continue;
                    }
                    UnparseablePolicy::CountAsWrong => g != LinkLabel::Link,
                }
            }
        };
        match (predicted_link, g) {
            (true, LinkLabel::Link) => c.tp += 1,
            (true, LinkLabel::Unlink) => c.fp += 1,
            (false, LinkLabel::Unlink) => c.tn += 1,
            (false, LinkLabel::Link) => c.fn_ += 1,
        }
    }
    Ok(AttackReport::from_confusion(c, predictions.len(), unparseable, excluded))
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Accuracy and F1 across seeds, as `mean ± std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub method: String,
    pub dataset: String,
    pub setting: String,
    pub seeds: Vec<u64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

pub fn summarize_seeds(reports: &[AttackReport]) -> Result<SeedSummary, EvalError> {
    let first = reports.first().ok_or(EvalError::Empty)?;
    let acc: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    let f1: Vec<f64> = reports.iter().map(|r| r.f1).collect();
    let (accuracy_mean, accuracy_std) = mean_std(&acc);
    let (f1_mean, f1_std) = mean_std(&f1);
    Ok(SeedSummary {
        method: first.attack_id.method.clone(),
        dataset: first.attack_id.dataset.clone(),
        setting: first.attack_id.setting.clone(),
        seeds: reports.iter().map(|r| r.attack_id.seed).collect(),
        accuracy_mean,
        accuracy_std,
        f1_mean,
        f1_std,
    })
}

/// Train-dataset × eval-dataset grid. Absent cells are reported as missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub train_datasets: Vec<String>,
    pub eval_datasets: Vec<String>,
    cells: BTreeMap<String, BTreeMap<String, AttackReport>>,
}

impl CrossMatrix {
    pub fn get(&self, train: &str, eval: &str) -> Option<&AttackReport> {
        self.cells.get(train).and_then(|row| row.get(eval))
    }

    pub fn missing_cells(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for t in &self.train_datasets {
            for e in &self.eval_datasets {
                if self.get(t, e).is_none() {
                    out.push((t.clone(), e.clone()));
                }
            }
        }
        out
    }

    fn grid_csv(&self, value: impl Fn(&AttackReport) -> f64) -> String {
        let mut s = String::from("train\\eval");
        for e in &self.eval_datasets {
            s.push(',');
            s.push_str(e);
        }
        s.push('\n');
        for t in &self.train_datasets {
            s.push_str(t);
            for e in &self.eval_datasets {
                s.push(',');
                if let Some(r) = self.get(t, e) {
                    s.push_str(&format!("{:.4}", value(r)));
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn accuracy_csv(&self) -> String {
        self.grid_csv(|r| r.accuracy)
    }

    pub fn f1_csv(&self) -> String {
        self.grid_csv(|r| r.f1)
    }

    /// One row per cell: `train,eval,same_dataset,accuracy,f1,n_test`.
    pub fn long_csv(&self) -> String {
        let mut s = String::from("train,eval,same_dataset,accuracy,f1,n_test\n");
        for t in &self.train_datasets {
            for e in &self.eval_datasets {
                match self.get(t, e) {
                    Some(r) => s.push_str(&format!("{t},{e},{},{:.4},{:.4},{}\n", t == e, r.accuracy, r.f1, r.n_test)),
                    None => s.push_str(&format!("{t},{e},{},,,\n", t == e)),
                }
            }
        }
        s
    }

    /// Writes `accuracy.csv`, `f1.csv` and `cells.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir).map_err(|source| EvalError::Io { path: dir.to_path_buf(), source })?;
        for (name, body) in [("accuracy.csv", self.accuracy_csv()), ("f1.csv", self.f1_csv()), ("cells.csv", self.long_csv())] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|source| EvalError::Io { path, source })?;
        }
        Ok(())
    }
}

/// Assembles a grid from `(train, eval, report)` cells. Axis order follows
/// first appearance.
pub fn cross_matrix(cells: Vec<(String, String, AttackReport)>) -> Result<CrossMatrix, EvalError> {
    let mut train_datasets: Vec<String> = Vec::new();
    let mut eval_datasets: Vec<String> = Vec::new();
    let mut grid: BTreeMap<String, BTreeMap<String, AttackReport>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (t, e, r) in cells {
        if !seen.insert((t.clone(), e.clone())) {
            return Err(EvalError::DuplicateCell { train: t, eval: e });
        }
        if !train_datasets.contains(&t) {
            train_datasets.push(t.clone());
        }
        if !eval_datasets.contains(&e) {
            eval_datasets.push(e.clone());
        }
        grid.entry(t).or_default().insert(e, r);
    }
    let m = CrossMatrix { train_datasets, eval_datasets, cells: grid };
    for (t, e) in m.missing_cells() {
        log::warn!("cross matrix cell ({t}, {e}) is missing");
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const REPORT_CSV_HEADER: &str =
    "method,dataset,setting,seed,accuracy,precision,recall,f1,tp,fp,tn,fn,n_test,unparseable,excluded,flags";

pub fn report_csv_row(r: &AttackReport) -> String {
    let id = &r.attack_id;
    let c = &r.confusion;
    format!(
        "{},{},{},{},{:.4},{:.4},{:.4},{:.4},{},{},{},{},{},{},{},{}",
        id.method,
        id.dataset,
        id.setting,
        id.seed,
        r.accuracy,
        r.precision,
        r.recall,
        r.f1,
        c.tp,
        c.fp,
        c.tn,
        c.fn_,
        r.n_test,
        r.unparseable_count,
        r.excluded_count,
        r.flags.join(";")
    )
}

/// Writes reports as CSV (4 decimals) or JSON (full precision).
pub fn emit_report(reports: &[AttackReport], format: ReportFormat, path: &Path) -> Result<(), EvalError> {
    let io = |source| EvalError::Io { path: path.to_path_buf(), source };
    let mut f = File::create(path).map_err(io)?;
    match format {
        ReportFormat::Csv => {
            writeln!(f, "{REPORT_CSV_HEADER}").map_err(io)?;
            for r in reports {
                writeln!(f, "{}", report_csv_row(r)).map_err(io)?;
            }
        }
        ReportFormat::Json => {
            let json = serde_json::to_string_pretty(reports).map_err(|e| EvalError::Serialize(e.to_string()))?;
            f.write_all(json.as_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_json_reports(path: &Path) -> Result<Vec<AttackReport>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| EvalError::Serialize(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use LinkLabel::{Link as L, Unlink as U};

    #[test]
    fn hand_counted_confusion() {
        let preds = [Prediction::Link, Prediction::Link, Prediction::Unlink, Prediction::Unlink];
        let r = compute_metrics(&preds, &[L, U, L, U], UnparseablePolicy::default()).unwrap();
        assert_eq!(r.confusion, Confusion { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (0.5, 0.5, 0.5, 0.5));
    }

    #[test]
    fn constant_link_on_balanced() {
        let r = compute_metrics(&[Prediction::Link; 4], &[L, U, L, U], UnparseablePolicy::default()).unwrap();
        assert_eq!((r.accuracy, r.recall, r.precision), (0.5, 1.0, 0.5));
        assert_eq!(r.f1, 2.0 / 3.0);
    }

    #[test]
    fn unparseable_policies() {
        let preds = [Prediction::Unparseable, Prediction::Unparseable, Prediction::Link];
        let gold = [L, U, L];
        let wrong = compute_metrics(&preds, &gold, UnparseablePolicy::CountAsWrong).unwrap();
        assert_eq!(wrong.confusion, Confusion { tp: 1, fp: 1, tn: 0, fn_: 1 });
        assert_eq!(wrong.unparseable_count, 2);
        let excl = compute_metrics(&preds, &gold, UnparseablePolicy::Exclude).unwrap();
        assert_eq!(excl.confusion.scored() + excl.excluded_count, excl.n_test);
        assert_eq!(excl.accuracy, 1.0);
    }

    #[test]
    fn no_positive_predictions_gives_zero_f1() {
        let r = compute_metrics(&[Prediction::Unlink; 2], &[L, U], UnparseablePolicy::default()).unwrap();
        assert_eq!(r.f1, 0.0);
        assert!(compute_metrics(&[Prediction::Link], &[L, U], UnparseablePolicy::default()).is_err());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    fn report(acc: f64) -> AttackReport {
        AttackReport { accuracy: acc, f1: acc, n_test: 10, ..Default::default() }
    }

    #[test]
    fn grid_with_missing_cell() {
        let m = cross_matrix(vec![
            ("cora".into(), "cora".into(), report(0.9)),
            ("cora".into(), "pubmed".into(), report(0.7)),
            ("pubmed".into(), "pubmed".into(), report(0.8)),
        ])
        .unwrap();
        assert_eq!(m.accuracy_csv(), "train\\eval,cora,pubmed\ncora,0.9000,0.7000\npubmed,,0.8000\n");
        assert_eq!(m.missing_cells(), vec![("pubmed".to_string(), "cora".to_string())]);
        assert!(m.long_csv().contains("cora,cora,true,0.9000,0.9000,10\n"));
        let dup = cross_matrix(vec![("a".into(), "a".into(), report(1.0)), ("a".into(), "a".into(), report(1.0))]);
        assert!(matches!(dup, Err(EvalError::DuplicateCell { .. })));
    }

    #[test]
    fn json_round_trip_and_csv_rows() {
        let dir = tempfile::tempdir().unwrap();
        let r = compute_metrics(&[Prediction::Link, Prediction::Unlink, Prediction::Link], &[L, U, U], UnparseablePolicy::default())
            .unwrap()
            .with_id(AttackId::new("mlp-pp", "cora", "white-box", 1));
        let json = dir.path().join("r.json");
        emit_report(std::slice::from_ref(&r), ReportFormat::Json, &json).unwrap();
        assert_eq!(read_json_reports(&json).unwrap(), vec![r.clone()]);
        let csv = dir.path().join("r.csv");
        emit_report(&[r], ReportFormat::Csv, &csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("mlp-pp,cora,white-box,1,0.6667,0.5000,1.0000,0.6667,1,1,1,0,3,0,0,"));
    }
}
