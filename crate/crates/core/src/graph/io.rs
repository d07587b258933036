//! On-disk dataset layout:
//!
//! ```text
//! <dir>/meta.json     name, classes, feature_dim, link_convention, ...
//! <dir>/nodes.jsonl   {"id":0,"label":3,"features":[...],"title":?,"abstract":?}
//! <dir>/edges.csv     header `u,v`, one edge per row
//! <dir>/splits.json   optional {"train":[..],"val":[..],"test":[..],"seed":n}
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{validate, DatasetMeta, Graph, LinkConvention, NodeText, SplitSpec, ValidationReport};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("missing dataset file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("ragged feature rows: node {node} has {found} values, expected {expected}")]
    RaggedFeatures { node: usize, expected: usize, found: usize },
    #[error("node ids are not dense 0-based integers: {0}")]
    NodeIds(String),
    #[error("dataset failed validation: {0}")]
    Validation(ValidationReport),
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaFile {
    name: String,
    classes: usize,
    feature_dim: usize,
    #[serde(default)]
    link_convention: LinkConvention,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    links: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    whitebox_link_budget: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    label: usize,
    features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    #[serde(default, rename = "abstract", skip_serializing_if = "Option::is_none")]
    abstract_text: Option<String>,
}

#[derive(Debug, Deserialize)]
struct EdgeRow {
    u: usize,
    v: usize,
}

fn open(path: &Path) -> Result<File, GraphError> {
    File::open(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            GraphError::MissingFile(path.to_path_buf())
        } else {
            GraphError::Io { path: path.to_path_buf(), source }
        }
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GraphError + '_ {
    move |source| GraphError::Io { path: path.to_path_buf(), source }
}

/// Loads and validates a dataset directory.
pub fn load_dataset<T: Scalar>(dir: impl AsRef<Path>) -> Result<Graph<T>, GraphError> {
    let dir = dir.as_ref();

    let meta_path = dir.join("meta.json");
    let meta: MetaFile = serde_json::from_reader(BufReader::new(open(&meta_path)?)).map_err(|e| {
        GraphError::Parse { path: meta_path.clone(), line: e.line(), message: e.to_string() }
    })?;

    let nodes_path = dir.join("nodes.jsonl");
    let mut records: Vec<Option<NodeRecord>> = Vec::new();
    for (lineno, line) in BufReader::new(open(&nodes_path)?).lines().enumerate() {
        let line = line.map_err(io_err(&nodes_path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NodeRecord = serde_json::from_str(&line).map_err(|e| GraphError::Parse {
            path: nodes_path.clone(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if rec.features.len() != meta.feature_dim {
            return Err(GraphError::RaggedFeatures {
                node: rec.id,
                expected: meta.feature_dim,
                found: rec.features.len(),
            });
        }
        let id = rec.id;
        if id >= records.len() {
            records.resize_with(id + 1, || None);
        }
        if records[id].is_some() {
            return Err(GraphError::NodeIds(format!("id {id} appears twice")));
        }
        records[id] = Some(rec);
    }
    if let Some(gap) = records.iter().position(Option::is_none) {
        return Err(GraphError::NodeIds(format!("id {gap} missing")));
    }
    let records: Vec<NodeRecord> = records.into_iter().flatten().collect();
    let n = records.len();

    let mut features = Array2::<T>::zeros((n, meta.feature_dim));
    let mut labels = Vec::with_capacity(n);
    let mut text = Vec::with_capacity(n);
    for (i, rec) in records.into_iter().enumerate() {
        for (j, x) in rec.features.into_iter().enumerate() {
            features[[i, j]] = T::from_f64(x).unwrap_or_else(T::nan);
        }
        labels.push(rec.label);
        text.push(match (rec.title, rec.abstract_text) {
            (None, None) => None,
            (title, abstract_text) => Some(NodeText {
                title: title.unwrap_or_default(),
                abstract_text: abstract_text.unwrap_or_default(),
            }),
        });
    }

    let edges_path = dir.join("edges.csv");
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(&edges_path)?);
    let mut raw_edges = Vec::new();
    for (i, row) in reader.deserialize::<EdgeRow>().enumerate() {
        let row = row.map_err(|e| GraphError::Parse { path: edges_path.clone(), line: i + 2, message: e.to_string() })?;
        raw_edges.push((row.u, row.v));
    }

    let declared = DatasetMeta {
        nodes: n,
        feats: meta.feature_dim,
        links: meta.links,
        classes: meta.classes,
        whitebox_link_budget: meta.whitebox_link_budget,
        link_convention: meta.link_convention,
    };
    let mut graph = Graph::from_parts(meta.name, features, labels, meta.classes, raw_edges)
        .with_text(text)
        .with_meta(declared);

    let splits_path = dir.join("splits.json");
    if splits_path.exists() {
        let split: SplitSpec = serde_json::from_reader(BufReader::new(open(&splits_path)?)).map_err(|e| {
            GraphError::Parse { path: splits_path.clone(), line: e.line(), message: e.to_string() }
        })?;
        graph = graph.with_declared_split(split);
    }

    let stats = graph.load_stats();
    log::info!(
        "loaded {}: {} nodes, {} edges ({} raw rows, {} self-loops dropped, {} duplicates merged)",
        graph.name(),
        n,
        graph.edge_count(),
        stats.raw_edges,
        stats.self_loops_dropped,
        stats.duplicates_merged
    );

    let report = validate(&graph);
    if !report.is_ok() {
        return Err(GraphError::Validation(report));
    }
    Ok(graph)
}

/// Writes `graph` in the layout [`load_dataset`] reads. Edges are written
/// in canonical form.
pub fn export_dataset<T: Scalar>(graph: &Graph<T>, dir: impl AsRef<Path>) -> Result<(), GraphError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let meta = MetaFile {
        name: graph.name().to_string(),
        classes: graph.num_categories(),
        feature_dim: graph.feature_dim(),
        link_convention: graph.meta().map(|m| m.link_convention).unwrap_or_default(),
        links: graph.meta().and_then(|m| m.links),
        whitebox_link_budget: graph.meta().and_then(|m| m.whitebox_link_budget),
    };
    let meta_path = dir.join("meta.json");
    let file = File::create(&meta_path).map_err(io_err(&meta_path))?;
    serde_json::to_writer_pretty(file, &meta).map_err(|e| GraphError::Parse {
        path: meta_path.clone(),
        line: 0,
        message: e.to_string(),
    })?;

    let nodes_path = dir.join("nodes.jsonl");
    let mut out = BufWriter::new(File::create(&nodes_path).map_err(io_err(&nodes_path))?);
    for i in 0..graph.node_count() {
        let text = graph.text(i);
        let rec = NodeRecord {
            id: i,
            label: graph.labels()[i],
            features: graph.features().row(i).iter().map(|x| x.as_f64()).collect(),
            title: text.map(|t| t.title.clone()),
            abstract_text: text.map(|t| t.abstract_text.clone()),
        };
        let line = serde_json::to_string(&rec).expect("node record serializes");
        writeln!(out, "{line}").map_err(io_err(&nodes_path))?;
    }
    out.flush().map_err(io_err(&nodes_path))?;

    let edges_path = dir.join("edges.csv");
    let mut out = BufWriter::new(File::create(&edges_path).map_err(io_err(&edges_path))?);
    writeln!(out, "u,v").map_err(io_err(&edges_path))?;
    for &(u, v) in graph.edges() {
        writeln!(out, "{u},{v}").map_err(io_err(&edges_path))?;
    }
    out.flush().map_err(io_err(&edges_path))?;

    if let Some(split) = graph.declared_split() {
        let splits_path = dir.join("splits.json");
        let file = File::create(&splits_path).map_err(io_err(&splits_path))?;
        serde_json::to_writer(file, split).map_err(|e| GraphError::Parse {
            path: splits_path.clone(),
            line: 0,
            message: e.to_string(),
        })?;
    }
    Ok(())
}
