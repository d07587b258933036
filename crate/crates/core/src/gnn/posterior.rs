use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::GnnError;
use crate::scalar::Scalar;

/// Row-stochastic matrix of per-node class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix<T> {
    rows: Array2<T>,
    pub source_model: String,
    pub dataset: String,
}

impl<T: Scalar> PosteriorMatrix<T> {
    /// Row-sum tolerance. `f32` softmax over many classes can drift past
    /// 1e-6, so the bound widens with the machine epsilon and width.
    pub fn tolerance(width: usize) -> f64 {
        1e-6_f64.max(4.0 * width as f64 * T::epsilon().as_f64())
    }

    pub fn new(rows: Array2<T>, source_model: impl Into<String>, dataset: impl Into<String>) -> Result<Self, GnnError> {
        let tol = Self::tolerance(rows.ncols());
        for (i, row) in rows.rows().into_iter().enumerate() {
            if let Some(bad) = row.iter().find(|v| !(v.as_f64() >= 0.0 && v.as_f64() <= 1.0)) {
                return Err(GnnError::Posterior(format!("row {i}: entry {bad} outside [0, 1]")));
            }
            let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
            if (sum - 1.0).abs() > tol {
                return Err(GnnError::Posterior(format!("row {i} sums to {sum}")));
            }
        }
        Ok(PosteriorMatrix { rows, source_model: source_model.into(), dataset: dataset.into() })
    }

    pub fn rows(&self) -> &Array2<T> {
        &self.rows
    }

    pub fn into_rows(self) -> Array2<T> {
        self.rows
    }

    pub fn node_count(&self) -> usize {
        self.rows.nrows()
    }

    pub fn width(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, node: usize) -> ndarray::ArrayView1<'_, T> {
        self.rows.row(node)
    }

    /// Copies of the rows for `ids`, in order. Panics on an out-of-range id.
    pub fn select(&self, ids: &[usize]) -> Array2<T> {
        self.rows.select(ndarray::Axis(0), ids)
    }

    pub fn cast<U: Scalar>(&self) -> PosteriorMatrix<U> {
        PosteriorMatrix {
            rows: self.rows.mapv(|v| U::lit(v.as_f64())),
            source_model: self.source_model.clone(),
            dataset: self.dataset.clone(),
        }
    }

    /// CSV with header `node_id,p_0,...,p_{C-1}`, shortest round-trip floats.
    pub fn write_csv(&self, path: &Path) -> Result<(), GnnError> {
        let io = |source| GnnError::Io { path: path.to_path_buf(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let header: Vec<String> =
            std::iter::once("node_id".to_string()).chain((0..self.width()).map(|c| format!("p_{c}"))).collect();
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for (i, row) in self.rows.rows().into_iter().enumerate() {
            write!(w, "{i}").map_err(io)?;
            for v in row {
                write!(w, ",{}", v.as_f64()).map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads the [`write_csv`](Self::write_csv) layout. Node ids must be
    /// `0..n` in order.
    pub fn read_csv(path: &Path, source_model: &str, dataset: &str) -> Result<Self, GnnError> {
        let parse_err = |line: usize, message: String| GnnError::Parse { path: path.to_path_buf(), line, message };
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => GnnError::Io { path: path.to_path_buf(), source },
            other => parse_err(1, format!("{other:?}")),
        })?;
        let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if headers.get(0) != Some("node_id") {
            return Err(parse_err(1, "first column must be node_id".into()));
        }
        for (c, h) in headers.iter().skip(1).enumerate() {
            if h != format!("p_{c}") {
                return Err(parse_err(1, format!("expected column p_{c}, found {h}")));
            }
        }
        let width = headers.len() - 1;
        let mut values = Vec::new();
        let mut n = 0;
        for (k, rec) in reader.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
            if rec.len() != width + 1 {
                return Err(parse_err(line, format!("expected {} fields, found {}", width + 1, rec.len())));
            }
            let id: usize = rec[0].trim().parse().map_err(|_| parse_err(line, format!("bad node id `{}`", &rec[0])))?;
            if id != n {
                return Err(parse_err(line, format!("node ids must be dense and ordered; expected {n}, found {id}")));
            }
            for field in rec.iter().skip(1) {
                let v: f64 = field.trim().parse().map_err(|_| parse_err(line, format!("bad probability `{field}`")))?;
                values.push(T::lit(v));
            }
            n += 1;
        }
        let rows = Array2::from_shape_vec((n, width), values).map_err(|e| parse_err(0, e.to_string()))?;
        Self::new(rows, source_model, dataset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(PosteriorMatrix::new(array![[0.5, 0.6]], "m", "d").is_err());
        assert!(PosteriorMatrix::new(array![[1.2, -0.2]], "m", "d").is_err());
        assert!(PosteriorMatrix::new(array![[0.25, 0.75]], "m", "d").is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let p = PosteriorMatrix::new(array![[0.1, 0.2, 0.7], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]], "m", "d").unwrap();
        p.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("node_id,p_0,p_1,p_2\n0,"));
        let back = PosteriorMatrix::<f64>::read_csv(&path, "m", "d").unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn csv_rejects_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "node_id,p_0,p_1\n0,0.5,0.5\n2,0.5,0.5\n").unwrap();
        let err = PosteriorMatrix::<f64>::read_csv(&path, "m", "d").unwrap_err();
        assert!(matches!(err, GnnError::Parse { line: 3, .. }), "{err}");
    }
}
