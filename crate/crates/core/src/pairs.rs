//! Balanced node-pair datasets: white-box Link/Unlink pairs drawn under a
//! known-link budget, and black-box Same/Different shadow pairs.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gnn::PosteriorMatrix;
use crate::graph::Graph;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkLabel {
    Link,
    Unlink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShadowLabel {
    Same,
    Different,
}

/// Where a pair set's labels came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelingSource {
    GroundTruthLink,
    ArgmaxPosteriorClass,
    GroundTruthClass,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    other => Err(format!("unknown {} `{other}`", stringify!($ty))),
                }
            }
        }
    };
}

text_enum!(LinkLabel { Link => "Link", Unlink => "Unlink" });
text_enum!(ShadowLabel { Same => "Same", Different => "Different" });
text_enum!(LabelingSource {
    GroundTruthLink => "ground-truth-link",
    ArgmaxPosteriorClass => "argmax-posterior-class",
    GroundTruthClass => "ground-truth-class",
});

/// An unordered node pair stored as `u < v`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodePair {
    pub u: usize,
    pub v: usize,
    /// `None` for shadow pairs, whose sampler never looks at edges.
    pub link_label: Option<LinkLabel>,
    pub shadow_label: Option<ShadowLabel>,
    pub dataset: String,
}

impl NodePair {
    /// Canonicalizes the endpoint order. Panics if `a == b`.
    pub fn new(a: usize, b: usize, dataset: impl Into<String>) -> Self {
        assert_ne!(a, b, "self-pair ({a}, {a})");
        NodePair { u: a.min(b), v: a.max(b), link_label: None, shadow_label: None, dataset: dataset.into() }
    }

    pub fn with_link(mut self, label: LinkLabel) -> Self {
        self.link_label = Some(label);
        self
    }

    pub fn with_shadow(mut self, label: ShadowLabel) -> Self {
        self.shadow_label = Some(label);
        self
    }

    pub fn key(&self) -> (usize, usize) {
        (self.u, self.v)
    }

    /// Binary target used for stratification and supervised attacks: the
    /// link label when present, otherwise the shadow label (Same ↦ positive).
    pub fn positive(&self) -> Option<bool> {
        match (self.link_label, self.shadow_label) {
            (Some(l), _) => Some(l == LinkLabel::Link),
            (None, Some(s)) => Some(s == ShadowLabel::Same),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<NodePair>,
    /// Positive count (Link, or Same for shadow sets).
    pub n_link: usize,
    pub n_unlink: usize,
    pub seed: u64,
    pub source_graph: String,
    pub labeling_source: LabelingSource,
}

impl PairSet {
    pub fn from_pairs(pairs: Vec<NodePair>, seed: u64, source_graph: impl Into<String>, labeling_source: LabelingSource) -> Self {
        let n_link = pairs.iter().filter(|p| p.positive() == Some(true)).count();
        let n_unlink = pairs.iter().filter(|p| p.positive() == Some(false)).count();
        PairSet { pairs, n_link, n_unlink, seed, source_graph: source_graph.into(), labeling_source }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Distinct datasets in first-seen order.
    pub fn datasets(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for p in &self.pairs {
            if !seen.contains(&p.dataset.as_str()) {
                seen.push(&p.dataset);
            }
        }
        seen
    }

    /// Checks the set against its source graph: canonical order, no
    /// duplicates, Link pairs are edges and Unlink pairs are not.
    pub fn check_against<T: Scalar>(&self, graph: &Graph<T>) -> Result<(), PairError> {
        let mut seen = HashSet::with_capacity(self.pairs.len());
        let n = graph.node_count();
        for p in &self.pairs {
            if p.v >= n {
                return Err(PairError::InvalidNode { node: p.v, node_count: n });
            }
            if p.u >= p.v {
                return Err(PairError::Contract(format!("pair ({}, {}) is not canonical", p.u, p.v)));
            }
            if !seen.insert(p.key()) {
                return Err(PairError::Contract(format!("duplicate pair ({}, {})", p.u, p.v)));
            }
            match p.link_label {
                Some(LinkLabel::Link) if !graph.has_edge(p.u, p.v) => {
                    return Err(PairError::Contract(format!("Link pair ({}, {}) is not an edge", p.u, p.v)))
                }
                Some(LinkLabel::Unlink) if graph.has_edge(p.u, p.v) => {
                    return Err(PairError::Contract(format!("Unlink pair ({}, {}) is an edge", p.u, p.v)))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Links the white-box attacker knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBudget {
    pub known_links: usize,
}

impl KnowledgeBudget {
    pub fn new(known_links: usize) -> Self {
        KnowledgeBudget { known_links }
    }

    /// Published budgets for the four citation benchmarks.
    pub fn for_dataset(name: &str) -> Option<Self> {
        let known_links = match name.to_ascii_lowercase().as_str() {
            "cora" | "citeseer" => 2000,
            "pubmed" => 5000,
            "ogbn-arxiv" | "ogbn_arxiv" | "arxiv" => 30000,
            _ => return None,
        };
        Some(KnowledgeBudget { known_links })
    }

    /// Dataset metadata first, then the published table.
    pub fn resolve<T: Scalar>(graph: &Graph<T>) -> Option<Self> {
        graph
            .meta()
            .and_then(|m| m.whitebox_link_budget)
            .map(KnowledgeBudget::new)
            .or_else(|| Self::for_dataset(graph.name()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PairError {
    #[error("budget {budget} exceeds the graph's {edges} edges")]
    BudgetExceedsEdges { budget: usize, edges: usize },
    #[error("{available} non-edges available, {requested} requested")]
    InsufficientNonEdges { available: usize, requested: usize },
    #[error("{available} {kind} pairs available, {requested} requested")]
    InsufficientShadowPairs { kind: ShadowLabel, available: usize, requested: usize },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    Fraction(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("node id {node} out of range for {node_count} nodes")]
    InvalidNode { node: usize, node_count: usize },
    #[error("pair contract violated: {0}")]
    Contract(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

fn unordered_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// `budget` distinct edges, uniformly without replacement.
pub fn sample_link_pairs<T: Scalar>(graph: &Graph<T>, budget: usize, rng: &mut ChaCha8Rng) -> Result<Vec<NodePair>, PairError> {
    let edges = graph.edges();
    if budget > edges.len() {
        return Err(PairError::BudgetExceedsEdges { budget, edges: edges.len() });
    }
    Ok(rand::seq::index::sample(rng, edges.len(), budget)
        .into_iter()
        .map(|i| {
            let (u, v) = edges[i];
            NodePair::new(u, v, graph.name()).with_link(LinkLabel::Link)
        })
        .collect())
}

/// `budget` distinct non-adjacent pairs, uniformly without replacement from
/// the complement of the full edge set. Rejection sampling when non-edges
/// are plentiful, enumeration otherwise.
pub fn sample_unlink_pairs<T: Scalar>(graph: &Graph<T>, budget: usize, rng: &mut ChaCha8Rng) -> Result<Vec<NodePair>, PairError> {
    let n = graph.node_count();
    let available = unordered_pairs(n) - graph.edge_count();
    if budget > available {
        return Err(PairError::InsufficientNonEdges { available, requested: budget });
    }
    let make = |u, v| NodePair::new(u, v, graph.name()).with_link(LinkLabel::Unlink);
    if available < budget.saturating_mul(4) {
        let mut all = Vec::with_capacity(available);
        for u in 0..n {
            for v in u + 1..n {
                if !graph.has_edge(u, v) {
                    all.push((u, v));
                }
            }
        }
        return Ok(rand::seq::index::sample(rng, all.len(), budget).into_iter().map(|i| make(all[i].0, all[i].1)).collect());
    }
    let mut visited = HashSet::with_capacity(budget);
    let mut out = Vec::with_capacity(budget);
    while out.len() < budget {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if graph.has_edge(key.0, key.1) || !visited.insert(key) {
            continue;
        }
        out.push(make(key.0, key.1));
    }
    Ok(out)
}

/// `budget` Link pairs followed by `budget` Unlink pairs.
pub fn sample_pairs<T: Scalar>(graph: &Graph<T>, budget: KnowledgeBudget, seed: u64) -> Result<PairSet, PairError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = sample_link_pairs(graph, budget.known_links, &mut rng)?;
    pairs.extend(sample_unlink_pairs(graph, budget.known_links, &mut rng)?);
    Ok(PairSet::from_pairs(pairs, seed, graph.name(), LabelingSource::GroundTruthLink))
}

/// Stratified train/test split. Each label stratum contributes
/// `floor(train_fraction · size)` train pairs; the pairs still needed to
/// reach `round(train_fraction · total)` go to the strata with the largest
/// fractional parts (ties to the positive stratum).
pub fn split_pairs(set: &PairSet, train_fraction: f64, seed: u64) -> Result<(PairSet, PairSet), PairError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(PairError::Fraction(train_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strata_keys = [Some(true), Some(false), None];
    let mut strata: Vec<Vec<&NodePair>> =
        strata_keys.iter().map(|k| set.pairs.iter().filter(|p| p.positive() == *k).collect()).collect();
    let exact: Vec<f64> = strata.iter().map(|s| s.len() as f64 * train_fraction).collect();
    let mut take: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let target = (set.len() as f64 * train_fraction).round() as usize;
    let mut order: Vec<usize> = (0..strata.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut missing = target.saturating_sub(take.iter().sum());
    for &k in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if take[k] < strata[k].len() {
            take[k] += 1;
            missing -= 1;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (k, stratum) in strata.iter_mut().enumerate() {
        stratum.shuffle(&mut rng);
        train.extend(stratum[..take[k]].iter().map(|p| (*p).clone()));
        test.extend(stratum[take[k]..].iter().map(|p| (*p).clone()));
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((
        PairSet::from_pairs(train, seed, set.source_graph.clone(), set.labeling_source),
        PairSet::from_pairs(test, seed, set.source_graph.clone(), set.labeling_source),
    ))
}

pub(crate) fn argmax_row<T: Scalar>(row: ndarray::ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Black-box shadow pairs: node pairs drawn uniformly without looking at
/// edges, labeled Same/Different by category (predicted or true), `budget`
/// of each.
pub fn shadow_sameclass_pairs<T: Scalar>(
    graph: &Graph<T>,
    posteriors: Option<&PosteriorMatrix<T>>,
    budget: usize,
    seed: u64,
    labeling_source: LabelingSource,
) -> Result<PairSet, PairError> {
    let n = graph.node_count();
    let category: Vec<usize> = match labeling_source {
        LabelingSource::ArgmaxPosteriorClass => {
            let p = posteriors.ok_or_else(|| {
                PairError::Config("argmax-posterior-class labeling needs a posterior matrix".into())
            })?;
            if p.node_count() != n {
                return Err(PairError::Config(format!(
                    "posterior matrix covers {} nodes, graph has {n}",
                    p.node_count()
                )));
            }
            (0..n).map(|v| argmax_row(p.row(v))).collect()
        }
        LabelingSource::GroundTruthClass => graph.labels().to_vec(),
        LabelingSource::GroundTruthLink => {
            return Err(PairError::Config("shadow pairs are labeled by category, not by links".into()))
        }
    };

    let width = category.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; width];
    for &c in &category {
        counts[c] += 1;
    }
    let same_available: usize = counts.iter().map(|&c| unordered_pairs(c)).sum();
    let diff_available = unordered_pairs(n) - same_available;
    for (kind, available) in [(ShadowLabel::Same, same_available), (ShadowLabel::Different, diff_available)] {
        if available < budget {
            return Err(PairError::InsufficientShadowPairs { kind, available, requested: budget });
        }
    }

    let label_of = |u: usize, v: usize| {
        if category[u] == category[v] {
            ShadowLabel::Same
        } else {
            ShadowLabel::Different
        }
    };
    let make = |u: usize, v: usize| NodePair::new(u, v, graph.name()).with_shadow(label_of(u, v));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let pairs = if same_available.min(diff_available) < budget.saturating_mul(4) {
        let mut same = Vec::new();
        let mut diff = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                match label_of(u, v) {
                    ShadowLabel::Same => same.push((u, v)),
                    ShadowLabel::Different => diff.push((u, v)),
                }
            }
        }
        let mut out: Vec<NodePair> =
            rand::seq::index::sample(&mut rng, same.len(), budget).into_iter().map(|i| make(same[i].0, same[i].1)).collect();
        out.extend(rand::seq::index::sample(&mut rng, diff.len(), budget).into_iter().map(|i| make(diff[i].0, diff[i].1)));
        out
    } else {
        let mut visited = HashSet::new();
        let (mut same, mut diff) = (Vec::with_capacity(budget), Vec::with_capacity(budget));
        while same.len() < budget || diff.len() < budget {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b || !visited.insert((a.min(b), a.max(b))) {
                continue;
            }
            let pair = make(a, b);
            match pair.shadow_label {
                Some(ShadowLabel::Same) if same.len() < budget => same.push(pair),
                Some(ShadowLabel::Different) if diff.len() < budget => diff.push(pair),
                _ => {}
            }
        }
        same.extend(diff);
        same
    };
    Ok(PairSet::from_pairs(pairs, seed, graph.name(), labeling_source))
}

/// CSV with header `u,v,link_label,shadow_label,dataset`; absent labels are
/// empty fields.
pub fn export_pairs_csv(set: &PairSet, path: &Path) -> Result<(), PairError> {
    let io = |source| PairError::Io { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    w.write_record(["u", "v", "link_label", "shadow_label", "dataset"]).map_err(|e| io(e.into()))?;
    for p in &set.pairs {
        let link = p.link_label.map(|l| l.to_string()).unwrap_or_default();
        let shadow = p.shadow_label.map(|l| l.to_string()).unwrap_or_default();
        w.write_record([p.u.to_string(), p.v.to_string(), link, shadow, p.dataset.clone()]).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

pub fn import_pairs_csv(path: &Path) -> Result<Vec<NodePair>, PairError> {
    let parse = |line: usize, message: String| PairError::Parse { path: path.to_path_buf(), line, message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => PairError::Io { path: path.to_path_buf(), source },
        other => parse(1, format!("{other:?}")),
    })?;
    let header = reader.headers().map_err(|e| parse(1, e.to_string()))?;
    if header != vec!["u", "v", "link_label", "shadow_label", "dataset"] {
        return Err(parse(1, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| parse(line, e.to_string()))?;
        let id = |i: usize| rec[i].parse::<usize>().map_err(|_| parse(line, format!("bad node id `{}`", &rec[i])));
        let (u, v) = (id(0)?, id(1)?);
        if u >= v {
            return Err(parse(line, format!("pair ({u}, {v}) must satisfy u < v")));
        }
        let link = match &rec[2] {
            "" => None,
            s => Some(s.parse::<LinkLabel>().map_err(|e| parse(line, e))?),
        };
        let shadow = match &rec[3] {
            "" => None,
            s => Some(s.parse::<ShadowLabel>().map_err(|e| parse(line, e))?),
        };
        out.push(NodePair { u, v, link_label: link, shadow_label: shadow, dataset: rec[4].to_string() });
    }
    Ok(out)
}
