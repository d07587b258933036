use std::path::{Path, PathBuf};

use linksteal_core::baselines::{FeatureMode, MlpConfig};
use linksteal_core::eval::UnparseablePolicy;
use linksteal_core::gnn::ModelConfig;
use linksteal_core::graph::synthetic::PlantedPartition;
use linksteal_core::pairs::LabelingSource;
use linksteal_core::prompt::PromptConfig;
use linksteal_llm::EndpointConfig;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// One pipeline run, read from a single TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seeds: Vec<u64>,
    pub datasets: Vec<DatasetEntry>,
    /// Target-model node split `(train, val, test)`.
    pub node_split: [f64; 3],
    /// Share of the sampled pairs the attacker trains on; the rest are
    /// scored.
    pub pair_train_fraction: f64,
    /// Skip prompts and the LLM attack.
    pub baselines_only: bool,
    pub unparseable_policy: UnparseablePolicy,
    /// How black-box shadow pairs are labeled.
    pub shadow_labeling: LabelingSource,
    /// Evaluate every (train dataset, eval dataset) cell rather than only the
    /// diagonal.
    pub cross_dataset: bool,
    pub model: ModelConfig,
    pub baselines: BaselineConfig,
    pub prompt: PromptConfig,
    pub endpoint: EndpointConfig,
    /// In-process mock endpoint; overrides `endpoint.base_url` when set.
    pub mock: Option<MockConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seeds: vec![0, 1, 2],
            datasets: Vec::new(),
            node_split: [0.6, 0.2, 0.2],
            pair_train_fraction: 0.8,
            baselines_only: false,
            unparseable_policy: UnparseablePolicy::default(),
            shadow_labeling: LabelingSource::ArgmaxPosteriorClass,
            cross_dataset: false,
            model: ModelConfig::default(),
            baselines: BaselineConfig::default(),
            prompt: PromptConfig::default(),
            endpoint: EndpointConfig::default(),
            mock: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    /// Directory in the on-disk dataset layout. Relative paths resolve
    /// against the config file's directory.
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    /// Overrides the per-dataset default link budget.
    pub known_links: Option<usize>,
}

/// Planted-partition graph generated in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub avg_degree: f64,
    pub homophily: f64,
    pub feature_noise: f64,
    pub with_text: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let p = PlantedPartition::new("", 500, 5, 32);
        SyntheticSpec {
            nodes: p.nodes,
            classes: p.classes,
            feature_dim: p.feature_dim,
            avg_degree: p.avg_degree,
            homophily: p.homophily,
            feature_noise: p.feature_noise,
            with_text: p.with_text,
            seed: p.seed,
        }
    }
}

impl SyntheticSpec {
    pub fn planted_partition(&self, name: &str) -> PlantedPartition {
        PlantedPartition {
            avg_degree: self.avg_degree,
            homophily: self.homophily,
            feature_noise: self.feature_noise,
            with_text: self.with_text,
            seed: self.seed,
            ..PlantedPartition::new(name, self.nodes, self.classes, self.feature_dim)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// All eight distance-threshold attacks plus their mean/max summary.
    pub similarity: bool,
    pub mlp_modes: Vec<FeatureMode>,
    pub mlp: MlpConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            similarity: true,
            mlp_modes: vec![FeatureMode::Feature, FeatureMode::Pp, FeatureMode::PpFeature],
            mlp: MlpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockKind {
    Oracle,
    ConstantYes,
    PosteriorCosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockConfig {
    pub mode: MockKind,
    /// Posterior-cosine threshold. When absent, the cosine rule fitted on
    /// each dataset's training pairs is used.
    pub tau: Option<f64>,
    #[serde(default)]
    pub fail_first: usize,
    #[serde(default)]
    pub latency_ms: u64,
}

impl PipelineConfig {
    /// Parses a TOML document; relative dataset paths resolve against
    /// `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for d in &mut cfg.datasets {
            if let Some(p) = &d.path {
                if p.is_relative() {
                    d.path = Some(base_dir.join(p));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.datasets.is_empty() {
            return bad("at least one [[datasets]] entry is required".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for d in &self.datasets {
            if !names.insert(d.name.as_str()) {
                return bad(format!("dataset `{}` listed twice", d.name));
            }
            if d.path.is_some() == d.synthetic.is_some() {
                return bad(format!("dataset `{}` needs exactly one of `path` or `synthetic`", d.name));
            }
        }
        if !(self.pair_train_fraction > 0.0 && self.pair_train_fraction < 1.0) {
            return bad(format!("pair_train_fraction must lie in (0, 1), got {}", self.pair_train_fraction));
        }
        if self.shadow_labeling == LabelingSource::GroundTruthLink {
            return bad("shadow_labeling must be a category source".into());
        }
        self.model.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.baselines.mlp.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.prompt.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.endpoint.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(MockConfig { tau: Some(t), .. }) = &self.mock {
            if !t.is_finite() {
                return bad("mock tau must be finite".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seeds = [3]
node_split = [0.5, 0.25, 0.25]

[[datasets]]
name = "cora"
path = "data/cora"

[[datasets]]
name = "toy"
known_links = 50
[datasets.synthetic]
nodes = 120
classes = 3
with_text = true

[model]
arch = "sage"
epochs = 20

[baselines]
mlp_modes = ["pp"]

[prompt]
template = "v1"

[endpoint]
max_in_flight = 2

[mock]
mode = "posterior-cosine"
tau = 0.25
"#;

    #[test]
    fn parses_sample_and_resolves_paths() {
        let cfg = PipelineConfig::from_toml_str(SAMPLE, Path::new("/base")).unwrap();
        assert_eq!(cfg.seeds, vec![3]);
        assert_eq!(cfg.datasets[0].path.as_deref(), Some(Path::new("/base/data/cora")));
        let syn = cfg.datasets[1].synthetic.as_ref().unwrap();
        assert_eq!((syn.nodes, syn.classes, syn.feature_dim), (120, 3, 32));
        assert_eq!(cfg.model.arch, linksteal_core::gnn::Arch::Sage);
        assert_eq!(cfg.model.hidden_dim, 16);
        assert_eq!(cfg.baselines.mlp_modes, vec![FeatureMode::Pp]);
        assert_eq!(cfg.endpoint.max_in_flight, 2);
        assert_eq!(cfg.mock.as_ref().unwrap().mode, MockKind::PosteriorCosine);
        assert_eq!(cfg.pair_train_fraction, 0.8);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = PipelineConfig::from_toml_str(SAMPLE, Path::new("/base")).unwrap();
        let again = PipelineConfig::from_toml_str(&cfg.to_toml_string(), Path::new("/elsewhere")).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_documents() {
        let cases = [
            ("seeds = []\n[[datasets]]\nname = \"a\"\n[datasets.synthetic]\n", "seed"),
            ("[[datasets]]\nname = \"a\"\n", "exactly one"),
            ("pair_train_fraction = 1.0\n[[datasets]]\nname = \"a\"\n[datasets.synthetic]\n", "pair_train_fraction"),
            ("bogus = 1\n", "bogus"),
            ("[[datasets]]\nname = \"a\"\n[datasets.synthetic]\n[[datasets]]\nname = \"a\"\n[datasets.synthetic]\n", "twice"),
        ];
        for (doc, needle) in cases {
            let err = PipelineConfig::from_toml_str(doc, Path::new(".")).unwrap_err().to_string();
            assert!(err.contains(needle), "{err}");
        }
    }
}
