//! Chat prompts for pair queries: rendering, fine-tuning and inference
//! records, corpus merging and JSONL transport.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gnn::PosteriorMatrix;
use crate::graph::Graph;
use crate::pairs::{LinkLabel, NodePair, PairSet, ShadowLabel};
use crate::scalar::Scalar;

pub const SYSTEM_PREAMBLE: &str =
    "You are given two papers from a citation network and answer the question about them with Yes or No.";
pub const LINK_QUESTION: &str = "do they have a link?";
pub const SAME_CATEGORY_QUESTION: &str = "Do they belong to the same category?";
pub const TRUNCATION_MARKER: char = '…';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    WhiteBox,
    BlackBox,
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setting::WhiteBox => "white-box",
            Setting::BlackBox => "black-box",
        })
    }
}

/// User-text layout.
///
/// `V1` interleaves each paper's text and posterior line. `V2` renders both
/// text blocks first and the posterior lines after them, so the text-free
/// rendering of a pair is a literal substring of the full one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateVersion {
    V1,
    #[default]
    V2,
}

impl TemplateVersion {
    pub fn id(self) -> &'static str {
        match self {
            TemplateVersion::V1 => "prompt_template_v1",
            TemplateVersion::V2 => "prompt_template_v2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub probability_precision: usize,
    pub max_abstract_chars: usize,
    pub include_posteriors: bool,
    pub include_text: bool,
    pub setting: Setting,
    pub template: TemplateVersion,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            probability_precision: 2,
            max_abstract_chars: 1500,
            include_posteriors: true,
            include_text: true,
            setting: Setting::WhiteBox,
            template: TemplateVersion::default(),
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.probability_precision < 1 {
            return Err(PromptError::Config("probability_precision must be at least 1".into()));
        }
        if !self.include_posteriors && !self.include_text {
            return Err(PromptError::Config("at least one of include_posteriors / include_text must be set".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionKind {
    Link,
    SameCategory,
}

impl QuestionKind {
    pub fn text(self) -> &'static str {
        match self {
            QuestionKind::Link => LINK_QUESTION,
            QuestionKind::SameCategory => SAME_CATEGORY_QUESTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub dataset: String,
    pub u: usize,
    pub v: usize,
    pub question_kind: QuestionKind,
}

/// One chat transcript. Fine-tuning records end with the gold assistant
/// answer; inference records stop at the user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub messages: Vec<Message>,
    pub meta: RecordMeta,
}

impl PromptRecord {
    pub fn user_text(&self) -> Option<&str> {
        self.messages.iter().find(|m| m.role == Role::User).map(|m| m.content.as_str())
    }

    pub fn answer(&self) -> Option<&str> {
        self.messages.iter().find(|m| m.role == Role::Assistant).map(|m| m.content.as_str())
    }

    pub fn is_inference(&self) -> bool {
        self.answer().is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSet {
    pub records: Vec<PromptRecord>,
    /// Record count per dataset.
    pub source_datasets: BTreeMap<String, usize>,
    pub shuffle_seed: Option<u64>,
}

impl FinetuneSet {
    pub fn from_records(records: Vec<PromptRecord>, shuffle_seed: Option<u64>) -> Self {
        let mut source_datasets = BTreeMap::new();
        for r in &records {
            *source_datasets.entry(r.meta.dataset.clone()).or_insert(0) += 1;
        }
        FinetuneSet { records, source_datasets, shuffle_seed }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn yes_count(&self) -> usize {
        self.records.iter().filter(|r| r.answer() == Some("Yes")).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("prompt configuration error: {0}")]
    Config(String),
    #[error("pair ({u}, {v}) lacks the label a {setting} record needs")]
    MissingLabel { u: usize, v: usize, setting: Setting },
    #[error("no posterior row for node {node} of {dataset}")]
    MissingPosterior { node: usize, dataset: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

/// Fixed-precision rendering with ties to even, e.g. `[0.05, 0.07, 0.58]`.
pub fn format_probabilities<T: Scalar>(row: ndarray::ArrayView1<'_, T>, precision: usize) -> String {
    let mut s = String::with_capacity(2 + row.len() * (precision + 4));
    s.push('[');
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        write!(s, "{}", round_half_even(v.as_f64(), precision)).expect("write to string");
    }
    s.push(']');
    s
}

/// Rounds the exact binary value of `x` to `precision` decimals, ties to
/// even. Rust's float formatting already rounds exactly with ties to even;
/// the wrapper pins that contract and strips negative zero.
fn round_half_even(x: f64, precision: usize) -> String {
    let s = format!("{x:.precision$}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Truncates to `max_chars` characters plus the marker; reports whether it cut.
pub fn truncate_abstract(text: &str, max_chars: usize) -> (String, bool) {
    match text.char_indices().nth(max_chars) {
        Some((cut, _)) => {
            let mut s = text[..cut].to_string();
            s.push(TRUNCATION_MARKER);
            (s, true)
        }
        None => (text.to_string(), false),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPair {
    /// User text without the question line.
    pub body: String,
    pub truncated: bool,
}

/// Renders the paper blocks for `pair` (Paper 1 is always the smaller id).
/// Text is left out when the dataset has none.
pub fn render_pair_info<T: Scalar>(
    pair: &NodePair,
    graph: &Graph<T>,
    posteriors: &PosteriorMatrix<T>,
    config: &PromptConfig,
) -> Result<RenderedPair, PromptError> {
    config.validate()?;
    let use_text = config.include_text && graph.has_text();
    if !use_text && !config.include_posteriors {
        return Err(PromptError::Config(format!(
            "dataset {} has no text and posteriors are disabled; nothing to render",
            graph.name()
        )));
    }
    let nodes = [pair.u.min(pair.v), pair.u.max(pair.v)];
    let mut truncated = false;
    let mut text_lines = Vec::with_capacity(2);
    let mut prob_lines = Vec::with_capacity(2);
    for node in nodes {
        if use_text {
            let (title, abstract_text) = graph.text(node).map_or(("", ""), |t| (t.title.as_str(), t.abstract_text.as_str()));
            let (abs, cut) = truncate_abstract(abstract_text, config.max_abstract_chars);
            truncated |= cut;
            text_lines.push(format!("title: {title}\nabstract: {abs}"));
        }
        if config.include_posteriors {
            if node >= posteriors.node_count() {
                return Err(PromptError::MissingPosterior { node, dataset: pair.dataset.clone() });
            }
            prob_lines.push(format_probabilities(posteriors.row(node), config.probability_precision));
        }
    }

    let mut body = String::new();
    match config.template {
        TemplateVersion::V1 => {
            for k in 0..2 {
                write!(body, "Paper {}:\n", k + 1).expect("write to string");
                if use_text {
                    body.push_str(&text_lines[k]);
                    body.push('\n');
                }
                if config.include_posteriors {
                    write!(body, "posterior probabilities: {}\n", prob_lines[k]).expect("write to string");
                }
                body.push('\n');
            }
        }
        TemplateVersion::V2 => {
            if use_text {
                for (k, block) in text_lines.iter().enumerate() {
                    write!(body, "Paper {}:\n{block}\n\n", k + 1).expect("write to string");
                }
            }
            if config.include_posteriors {
                for (k, line) in prob_lines.iter().enumerate() {
                    write!(body, "Paper {} posterior probabilities: {line}\n", k + 1).expect("write to string");
                }
                body.push('\n');
            }
        }
    }
    Ok(RenderedPair { body, truncated })
}

fn user_text(body: &str, kind: QuestionKind) -> String {
    format!("{body}Question: {} Answer Yes or No.", kind.text())
}

fn record<T: Scalar>(
    pair: &NodePair,
    graph: &Graph<T>,
    posteriors: &PosteriorMatrix<T>,
    config: &PromptConfig,
    kind: QuestionKind,
    answer: Option<&str>,
) -> Result<PromptRecord, PromptError> {
    let rendered = render_pair_info(pair, graph, posteriors, config)?;
    let mut messages = vec![
        Message { role: Role::System, content: SYSTEM_PREAMBLE.to_string() },
        Message { role: Role::User, content: user_text(&rendered.body, kind) },
    ];
    if let Some(a) = answer {
        messages.push(Message { role: Role::Assistant, content: a.to_string() });
    }
    Ok(PromptRecord {
        messages,
        meta: RecordMeta { dataset: pair.dataset.clone(), u: pair.u.min(pair.v), v: pair.u.max(pair.v), question_kind: kind },
    })
}

/// White-box records ask the link question and answer from the link label;
/// black-box records ask the category question and answer from the shadow
/// label.
pub fn build_finetune_record<T: Scalar>(
    pair: &NodePair,
    config: &PromptConfig,
    graph: &Graph<T>,
    posteriors: &PosteriorMatrix<T>,
) -> Result<PromptRecord, PromptError> {
    let missing = || PromptError::MissingLabel { u: pair.u, v: pair.v, setting: config.setting };
    let (kind, yes) = match config.setting {
        Setting::WhiteBox => (QuestionKind::Link, pair.link_label.ok_or_else(missing)? == LinkLabel::Link),
        Setting::BlackBox => (QuestionKind::SameCategory, pair.shadow_label.ok_or_else(missing)? == ShadowLabel::Same),
    };
    record(pair, graph, posteriors, config, kind, Some(if yes { "Yes" } else { "No" }))
}

/// Always the link question, whatever the setting; no assistant turn.
pub fn build_inference_record<T: Scalar>(
    pair: &NodePair,
    config: &PromptConfig,
    graph: &Graph<T>,
    posteriors: &PosteriorMatrix<T>,
) -> Result<PromptRecord, PromptError> {
    record(pair, graph, posteriors, config, QuestionKind::Link, None)
}

pub fn build_finetune_set<T: Scalar>(
    pairs: &PairSet,
    config: &PromptConfig,
    graph: &Graph<T>,
    posteriors: &PosteriorMatrix<T>,
) -> Result<FinetuneSet, PromptError> {
    let records =
        pairs.pairs.iter().map(|p| build_finetune_record(p, config, graph, posteriors)).collect::<Result<Vec<_>, _>>()?;
    Ok(FinetuneSet::from_records(records, None))
}

pub fn build_inference_records<T: Scalar>(
    pairs: &PairSet,
    config: &PromptConfig,
    graph: &Graph<T>,
    posteriors: &PosteriorMatrix<T>,
) -> Result<Vec<PromptRecord>, PromptError> {
    pairs.pairs.iter().map(|p| build_inference_record(p, config, graph, posteriors)).collect()
}

/// Union of all records, shuffled with `seed`. Posterior widths may differ
/// between sets.
pub fn merge_finetune_sets(sets: &[FinetuneSet], seed: u64) -> FinetuneSet {
    let mut records: Vec<PromptRecord> = sets.iter().flat_map(|s| s.records.iter().cloned()).collect();
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    FinetuneSet::from_records(records, Some(seed))
}

/// One JSON object per line; returns the number written.
pub fn export_jsonl(records: &[PromptRecord], path: &Path) -> Result<usize, PromptError> {
    let io = |source| PromptError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        w.write_all(line.as_bytes()).map_err(io)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(records.len())
}

pub fn import_jsonl(path: &Path) -> Result<FinetuneSet, PromptError> {
    let io = |source| PromptError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut records = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        let record: PromptRecord = serde_json::from_str(&line)
            .map_err(|e| PromptError::Parse { path: path.to_path_buf(), line: k + 1, message: e.to_string() })?;
        records.push(record);
    }
    Ok(FinetuneSet::from_records(records, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeText;
    use ndarray::{arr1, array, Array2};

    fn fixture(with_text: bool) -> (Graph<f64>, PosteriorMatrix<f64>) {
        let mut g = Graph::from_parts("d", Array2::zeros((3, 1)), vec![0, 1, 0], 3, vec![(0, 1)]);
        if with_text {
            g = g.with_text(vec![
                Some(NodeText { title: "Alpha".into(), abstract_text: "First abstract.".into() }),
                Some(NodeText { title: "Beta".into(), abstract_text: "x".repeat(5000) }),
                None,
            ]);
        }
        let p = PosteriorMatrix::new(array![[0.125, 0.375, 0.5], [0.05, 0.07, 0.88], [1.0, 0.0, 0.0]], "m", "d").unwrap();
        (g, p)
    }

    #[test]
    fn probability_rendering() {
        let row = arr1(&[0.05, 0.07, 0.08, 0.12, 0.58, 0.10]);
        assert_eq!(format_probabilities(row.view(), 2), "[0.05, 0.07, 0.08, 0.12, 0.58, 0.10]");
        // 0.125 and 0.375 are exact binary ties.
        assert_eq!(format_probabilities(arr1(&[0.125, 0.375, 0.5]).view(), 2), "[0.12, 0.38, 0.50]");
        assert_eq!(format_probabilities(arr1(&[-1e-9]).view(), 2), "[0.00]");
    }

    #[test]
    fn truncation_keeps_exact_char_count() {
        let (t, cut) = truncate_abstract(&"é".repeat(5000), 1500);
        assert!(cut);
        assert_eq!(t.chars().count(), 1501);
        assert!(t.ends_with(TRUNCATION_MARKER));
        assert_eq!(truncate_abstract("short", 1500), ("short".to_string(), false));
    }

    #[test]
    fn white_and_black_box_questions() {
        let (g, p) = fixture(true);
        let link = NodePair::new(1, 0, "d").with_link(LinkLabel::Link).with_shadow(ShadowLabel::Different);
        let wb = build_finetune_record(&link, &PromptConfig::default(), &g, &p).unwrap();
        assert!(wb.user_text().unwrap().ends_with("Question: do they have a link? Answer Yes or No."));
        assert_eq!(wb.answer(), Some("Yes"));
        let bb_cfg = PromptConfig { setting: Setting::BlackBox, ..Default::default() };
        let bb = build_finetune_record(&link, &bb_cfg, &g, &p).unwrap();
        assert!(bb.user_text().unwrap().contains("Do they belong to the same category?"));
        assert_eq!(bb.answer(), Some("No"));
        let unlink = NodePair::new(0, 2, "d").with_link(LinkLabel::Unlink);
        assert_eq!(build_finetune_record(&unlink, &PromptConfig::default(), &g, &p).unwrap().answer(), Some("No"));
        assert!(matches!(build_finetune_record(&unlink, &bb_cfg, &g, &p), Err(PromptError::MissingLabel { .. })));
    }

    #[test]
    fn inference_ignores_setting() {
        let (g, p) = fixture(true);
        let pair = NodePair::new(0, 2, "d");
        let wb = build_inference_record(&pair, &PromptConfig::default(), &g, &p).unwrap();
        let bb = build_inference_record(&pair, &PromptConfig { setting: Setting::BlackBox, ..Default::default() }, &g, &p).unwrap();
        assert_eq!(wb, bb);
        assert!(wb.is_inference());
        assert_eq!(wb.meta.question_kind, QuestionKind::Link);
    }

    #[test]
    fn v2_layout_and_containment() {
        let (g, p) = fixture(true);
        let pair = NodePair::new(0, 1, "d");
        let full = render_pair_info(&pair, &g, &p, &PromptConfig::default()).unwrap();
        let bare = render_pair_info(&pair, &g, &p, &PromptConfig { include_text: false, ..Default::default() }).unwrap();
        assert!(full.truncated);
        assert!(full.body.starts_with("Paper 1:\ntitle: Alpha\nabstract: First abstract.\n\nPaper 2:\ntitle: Beta\n"));
        assert_eq!(bare.body, "Paper 1 posterior probabilities: [0.12, 0.38, 0.50]\nPaper 2 posterior probabilities: [0.05, 0.07, 0.88]\n\n");
        assert!(full.body.contains(&bare.body));
    }

    #[test]
    fn v1_layout() {
        let (g, p) = fixture(true);
        let cfg = PromptConfig { template: TemplateVersion::V1, max_abstract_chars: 3, ..Default::default() };
        let r = build_inference_record(&NodePair::new(0, 1, "d"), &cfg, &g, &p).unwrap();
        assert_eq!(
            r.user_text().unwrap(),
            "Paper 1:\ntitle: Alpha\nabstract: Fir…\nposterior probabilities: [0.12, 0.38, 0.50]\n\n\
             Paper 2:\ntitle: Beta\nabstract: xxx…\nposterior probabilities: [0.05, 0.07, 0.88]\n\n\
             Question: do they have a link? Answer Yes or No."
        );
    }

    #[test]
    fn textless_dataset_without_posteriors_is_rejected() {
        let (g, p) = fixture(false);
        let cfg = PromptConfig { include_posteriors: false, ..Default::default() };
        assert!(matches!(render_pair_info(&NodePair::new(0, 1, "d"), &g, &p, &cfg), Err(PromptError::Config(_))));
        assert!(PromptConfig { include_text: false, include_posteriors: false, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn jsonl_shape_and_errors() {
        let (g, p) = fixture(false);
        let pair = NodePair::new(0, 1, "d").with_link(LinkLabel::Link);
        let rec = build_finetune_record(&pair, &PromptConfig::default(), &g, &p).unwrap();
        let line = serde_json::to_string(&rec).unwrap();
        assert!(line.starts_with(r#"{"messages":[{"role":"system","content":"#));
        assert!(line.ends_with(r#"{"role":"assistant","content":"Yes"}],"meta":{"dataset":"d","u":0,"v":1,"question_kind":"link"}}"#));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        assert_eq!(export_jsonl(&[], &path).unwrap(), 0);
        assert!(import_jsonl(&path).unwrap().is_empty());
        std::fs::write(&path, format!("{line}\n{}\n", &line[..line.len() / 2])).unwrap();
        assert!(matches!(import_jsonl(&path), Err(PromptError::Parse { line: 2, .. })));
    }

    #[test]
    fn merge_counts_and_order() {
        let (g, p) = fixture(false);
        let mk = |ds: &str, n: usize| {
            FinetuneSet::from_records(
                (0..n)
                    .map(|i| {
                        let pair = NodePair::new(0, 1 + i % 2, ds).with_link(LinkLabel::Unlink);
                        build_finetune_record(&pair, &PromptConfig::default(), &g, &p).unwrap()
                    })
                    .collect(),
                None,
            )
        };
        let merged = merge_finetune_sets(&[mk("a", 3), mk("b", 5)], 7);
        assert_eq!(merged.len(), 8);
        assert_eq!(merged.source_datasets, BTreeMap::from([("a".into(), 3), ("b".into(), 5)]));
        assert_eq!(merged, merge_finetune_sets(&[mk("a", 3), mk("b", 5)], 7));
    }
}
