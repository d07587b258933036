//! End-to-end run: for every seed and dataset, train the target model,
//! extract posteriors, sample and split pairs, run the baselines, build the
//! prompt corpora, query the endpoint and score everything. Each stage
//! persists its outputs under `out/seed-{s}/{dataset}/`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use chrono::Utc;
use linksteal_core::baselines::{
    aggregate_mean_max, mlp_attack, similarity_attack, MeanMax, MetricKind, MlpConfig, PairSource, SourceRegistry,
};
use linksteal_core::eval::{
    compute_metrics, cross_matrix, emit_report, summarize_seeds, AttackId, AttackReport, CrossMatrix, ReportFormat,
    SeedSummary,
};
use linksteal_core::gnn::{accuracy_on, forward, save_checkpoint, train_target, ModelConfig, PosteriorMatrix};
use linksteal_core::graph::{load_dataset, train_test_node_split, validate, Graph};
use linksteal_core::pairs::{
    export_pairs_csv, sample_pairs, shadow_sameclass_pairs, split_pairs, KnowledgeBudget, LinkLabel, PairSet,
};
use linksteal_core::prompt::{
    build_finetune_set, build_inference_records, export_jsonl, merge_finetune_sets, FinetuneSet, PromptRecord, Setting,
};
use linksteal_llm::{serve_mock, ChatClient, EndpointConfig, MockMode, MockOptions, Verdict};
use serde::{Deserialize, Serialize};

use crate::config::{DatasetEntry, MockConfig, MockKind, PipelineConfig};
use crate::manifest::{graph_digest, DatasetRecord, RunManifest, StageRecord, TargetRecord};
use crate::{HarnessError, Stage};

/// Mean/max over the eight similarity attacks for one seed and dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMaxRow {
    pub seed: u64,
    pub dataset: String,
    #[serde(flatten)]
    pub summary: MeanMax,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    /// Baseline reports and the diagonal LLM cells, in run order.
    pub reports: Vec<AttackReport>,
    pub summaries: Vec<SeedSummary>,
    pub mean_max: Vec<MeanMaxRow>,
    /// One train × eval grid per seed (absent when no LLM stage ran).
    pub cross: Vec<(u64, CrossMatrix)>,
}

struct Loaded {
    entry: DatasetEntry,
    graph: Graph<f64>,
    budget: KnowledgeBudget,
}

struct SeedState {
    posteriors: PosteriorMatrix<f64>,
    train: PairSet,
    test: PairSet,
    finetune: Option<FinetuneSet>,
    inference: Vec<PromptRecord>,
}

/// Loads (or generates) one configured dataset and checks it.
pub fn load_entry(entry: &DatasetEntry) -> anyhow::Result<Graph<f64>> {
    let graph = match (&entry.path, &entry.synthetic) {
        (Some(path), _) => {
            let g = load_dataset::<f64>(path).with_context(|| format!("loading {}", path.display()))?;
            if g.name() != entry.name {
                return Err(anyhow!("config names the dataset at {} `{}` but its files declare `{}`", path.display(), entry.name, g.name()));
            }
            g
        }
        (None, Some(spec)) => spec.planted_partition(&entry.name).generate::<f64>(),
        (None, None) => return Err(anyhow!("dataset `{}` has neither path nor synthetic spec", entry.name)),
    };
    let report = validate(&graph);
    if !report.is_ok() {
        return Err(anyhow!("dataset `{}` failed validation: {report}", entry.name));
    }
    Ok(graph)
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    manifest: RunManifest,
}

impl Runner<'_> {
    fn timed<R>(
        &mut self,
        stage: Stage,
        seed: Option<u64>,
        dataset: Option<&str>,
        f: impl FnOnce() -> anyhow::Result<R>,
    ) -> Result<R, HarnessError> {
        let start = Instant::now();
        let result = f();
        let seconds = start.elapsed().as_secs_f64();
        self.manifest.stages.push(StageRecord {
            stage: stage.name().to_string(),
            seed,
            dataset: dataset.map(str::to_string),
            seconds,
        });
        log::info!("{stage}{} took {seconds:.2}s", dataset.map(|d| format!(" [{d}]")).unwrap_or_default());
        result.map_err(|source| HarnessError::Stage { stage, seed, dataset: dataset.map(str::to_string), source })
    }

    fn dir(&self, seed: u64, dataset: &str) -> Result<PathBuf, HarnessError> {
        let d = self.out.join(format!("seed-{seed}")).join(dataset);
        std::fs::create_dir_all(&d).map_err(|e| HarnessError::io(&d, e))?;
        Ok(d)
    }
}

/// Runs the configured experiment and writes all artifacts under `out`.
/// A failing stage aborts the run; the manifest is still written with the
/// failure recorded.
pub fn run_pipeline(config: &PipelineConfig, out: &Path) -> Result<PipelineOutcome, HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let snapshot = out.join("config.toml");
    std::fs::write(&snapshot, config.to_toml_string()).map_err(|e| HarnessError::io(&snapshot, e))?;

    let mut runner = Runner { cfg: config, out: out.to_path_buf(), manifest: RunManifest::new(config) };
    let result = execute(&mut runner);
    runner.manifest.finished_at = Some(Utc::now());
    if let Err(e) = &result {
        runner.manifest.failure = Some(e.to_string());
    }
    runner.manifest.write(&out.join("manifest.json"))?;
    let (reports, summaries, mean_max, cross) = result?;
    Ok(PipelineOutcome { run_dir: out.to_path_buf(), manifest: runner.manifest, reports, summaries, mean_max, cross })
}

type Collected = (Vec<AttackReport>, Vec<SeedSummary>, Vec<MeanMaxRow>, Vec<(u64, CrossMatrix)>);

fn execute(r: &mut Runner<'_>) -> Result<Collected, HarnessError> {
    let cfg = r.cfg;
    let mut datasets = Vec::new();
    for entry in &cfg.datasets {
        let loaded = r.timed(Stage::LoadDataset, None, Some(&entry.name), || {
            let graph = load_entry(entry)?;
            let budget = entry
                .known_links
                .map(KnowledgeBudget::new)
                .or_else(|| KnowledgeBudget::resolve(&graph))
                .ok_or_else(|| anyhow!("no known-link budget for `{}`; set `known_links`", entry.name))?;
            Ok(Loaded { entry: entry.clone(), graph, budget })
        })?;
        r.manifest.datasets.push(DatasetRecord {
            name: entry.name.clone(),
            source: match (&entry.path, &entry.synthetic) {
                (Some(p), _) => p.display().to_string(),
                _ => "synthetic planted partition".to_string(),
            },
            sha256: graph_digest(&loaded.graph),
            nodes: loaded.graph.node_count(),
            edges: loaded.graph.edge_count(),
            classes: loaded.graph.num_categories(),
            feature_dim: loaded.graph.feature_dim(),
            has_text: loaded.graph.has_text(),
            known_links: loaded.budget.known_links,
        });
        if cfg.prompt.include_text && !cfg.baselines_only && !loaded.graph.has_text() {
            r.manifest.warn(format!("dataset `{}` has no node text; prompts carry posteriors only", entry.name));
        }
        datasets.push(loaded);
    }

    let runtime = if cfg.baselines_only {
        None
    } else {
        Some(
            tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .map_err(|e| HarnessError::Config(format!("cannot start async runtime: {e}")))?,
        )
    };

    let mut reports = Vec::new();
    let mut mean_max = Vec::new();
    let mut cross = Vec::new();
    for &seed in &cfg.seeds {
        let mut states = Vec::new();
        for d in &datasets {
            let (state, seed_reports, mm) = run_dataset(r, d, seed)?;
            reports.extend(seed_reports);
            mean_max.extend(mm);
            states.push(state);
        }
        if let Some(rt) = &runtime {
            finetune_export(r, &datasets, &states, seed)?;
            let (diagonal, matrix) = attack_llm(r, rt, &datasets, &states, seed)?;
            let seed_dir = r.out.join(format!("seed-{seed}"));
            r.timed(Stage::CrossMatrix, Some(seed), None, || {
                for (t, e) in matrix.missing_cells() {
                    log::debug!("cell ({t}, {e}) not evaluated");
                }
                Ok(matrix.write(&seed_dir.join("cross"))?)
            })?;
            for (t, e) in matrix.missing_cells() {
                r.manifest.warn(format!("seed {seed}: cross-matrix cell ({t}, {e}) was not evaluated and is left empty"));
            }
            reports.extend(diagonal);
            cross.push((seed, matrix));
        }
    }

    let out = r.out.clone();
    let summaries = r.timed(Stage::Evaluate, None, None, || {
        emit_report(&reports, ReportFormat::Csv, &out.join("reports.csv"))?;
        emit_report(&reports, ReportFormat::Json, &out.join("reports.json"))?;
        let summaries = summarize(&reports)?;
        write_summaries(&summaries, &out.join("summary.csv"))?;
        write_mean_max(&mean_max, &out.join("similarity_mean_max.csv"))?;
        Ok(summaries)
    })?;
    if cfg.seeds.len() < 3 {
        r.manifest.warn(format!("only {} seed(s); standard deviations are not meaningful", cfg.seeds.len()));
    }
    Ok((reports, summaries, mean_max, cross))
}

fn run_dataset(
    r: &mut Runner<'_>,
    d: &Loaded,
    seed: u64,
) -> Result<(SeedState, Vec<AttackReport>, Option<MeanMaxRow>), HarnessError> {
    let cfg = r.cfg;
    let name = d.entry.name.as_str();
    let g = &d.graph;
    let dir = r.dir(seed, name)?;
    let model_cfg = ModelConfig { seed, ..cfg.model.clone() };

    let model = r.timed(Stage::TrainTarget, Some(seed), Some(name), || {
        let [a, b, c] = cfg.node_split;
        let split = train_test_node_split(g, (a, b, c), seed)?;
        std::fs::write(dir.join("split.json"), serde_json::to_string(&split)?)?;
        let model = train_target(g, &split, &model_cfg)?;
        save_checkpoint(&model, &dir.join("target.json"))?;
        let test_accuracy = accuracy_on(&model, g, &split.test_node_ids)?;
        Ok((model, split, test_accuracy))
    })?;
    let (model, split, test_accuracy) = model;
    let majority = g.majority_share(&split.test_node_ids);
    if test_accuracy <= majority {
        r.manifest.warn(format!(
            "seed {seed}, {name}: target test accuracy {test_accuracy:.4} does not beat the majority share {majority:.4}"
        ));
    }
    r.manifest.targets.push(TargetRecord {
        seed,
        dataset: name.to_string(),
        arch: cfg.model.arch.to_string(),
        test_accuracy,
        majority_baseline: majority,
        final_train_loss: model.training_log.last().map_or(f64::NAN, |e| e.loss),
    });

    let posteriors = r.timed(Stage::ExtractPosteriors, Some(seed), Some(name), || {
        let p = forward(&model, g)?;
        p.write_csv(&dir.join("posteriors.csv"))?;
        Ok(p)
    })?;

    let (train, test) = r.timed(Stage::SamplePairs, Some(seed), Some(name), || {
        let all = sample_pairs(g, d.budget, seed)?;
        let (train, test) = split_pairs(&all, cfg.pair_train_fraction, seed)?;
        export_pairs_csv(&train, &dir.join("pairs_train.csv"))?;
        export_pairs_csv(&test, &dir.join("pairs_test.csv"))?;
        Ok((train, test))
    })?;

    let mut reports = Vec::new();
    let mut mm = None;
    if cfg.baselines.similarity {
        let sim = r.timed(Stage::AttackSimilarity, Some(seed), Some(name), || {
            let mut out = Vec::new();
            for metric in MetricKind::ALL {
                out.push(similarity_attack(&train, &test, &posteriors, metric)?.report);
            }
            let summary = aggregate_mean_max(&out)?;
            Ok((out, summary))
        })?;
        reports.extend(sim.0);
        mm = Some(MeanMaxRow { seed, dataset: name.to_string(), summary: sim.1 });
    }
    if !cfg.baselines.mlp_modes.is_empty() {
        let mlp_cfg = MlpConfig { seed, ..cfg.baselines.mlp.clone() };
        let mlp = r.timed(Stage::AttackMlp, Some(seed), Some(name), || {
            let mut registry = SourceRegistry::new();
            registry.insert(name.to_string(), PairSource { graph: g, posteriors: &posteriors });
            let mut out = Vec::new();
            for &mode in &cfg.baselines.mlp_modes {
                out.push(mlp_attack(&train, &test, mode, &mlp_cfg, &registry)?.report);
            }
            Ok(out)
        })?;
        reports.extend(mlp);
    }
    emit_report(&reports, ReportFormat::Json, &dir.join("baseline_reports.json"))
        .map_err(|e| HarnessError::Stage { stage: Stage::Evaluate, seed: Some(seed), dataset: Some(name.into()), source: e.into() })?;

    let mut state = SeedState { posteriors, train, test, finetune: None, inference: Vec::new() };
    if !cfg.baselines_only {
        let (finetune, inference) = r.timed(Stage::BuildPrompts, Some(seed), Some(name), || {
            let finetune = match cfg.prompt.setting {
                Setting::WhiteBox => build_finetune_set(&state.train, &cfg.prompt, g, &state.posteriors)?,
                Setting::BlackBox => {
                    let shadow = shadow_sameclass_pairs(
                        g,
                        Some(&state.posteriors),
                        d.budget.known_links,
                        seed,
                        cfg.shadow_labeling,
                    )?;
                    export_pairs_csv(&shadow, &dir.join("pairs_shadow.csv"))?;
                    build_finetune_set(&shadow, &cfg.prompt, g, &state.posteriors)?
                }
            };
            export_jsonl(&finetune.records, &dir.join("finetune.jsonl"))?;
            let inference = build_inference_records(&state.test, &cfg.prompt, g, &state.posteriors)?;
            export_jsonl(&inference, &dir.join("inference.jsonl"))?;
            Ok((finetune, inference))
        })?;
        state.finetune = Some(finetune);
        state.inference = inference;
    }
    Ok((state, reports, mm))
}

/// The merged multi-dataset corpus handed to an external fine-tuning step.
fn finetune_export(r: &mut Runner<'_>, datasets: &[Loaded], states: &[SeedState], seed: u64) -> Result<(), HarnessError> {
    let path = r.out.join(format!("seed-{seed}")).join("finetune_all.jsonl");
    let names: Vec<&str> = datasets.iter().map(|d| d.entry.name.as_str()).collect();
    r.timed(Stage::FinetuneExport, Some(seed), None, || {
        let sets: Vec<FinetuneSet> = states.iter().filter_map(|s| s.finetune.clone()).collect();
        let merged = merge_finetune_sets(&sets, seed);
        let n = export_jsonl(&merged.records, &path)?;
        log::info!("fine-tune corpus for {}: {n} records", names.join(", "));
        Ok(())
    })
}

fn mock_mode(mock: &MockConfig, d: &Loaded, state: &SeedState) -> anyhow::Result<MockMode> {
    let name = d.entry.name.clone();
    Ok(match mock.mode {
        MockKind::ConstantYes => MockMode::ConstantYes,
        MockKind::Oracle => {
            let edges: HashSet<(usize, usize)> = d.graph.edges().iter().copied().collect();
            MockMode::Oracle { edges: HashMap::from([(name, edges)]) }
        }
        MockKind::PosteriorCosine => {
            let tau = match mock.tau {
                Some(t) => t,
                None => similarity_attack(&state.train, &state.test, &state.posteriors, MetricKind::Cosine)?.rule.tau,
            };
            MockMode::PosteriorCosine { tau, posteriors: HashMap::from([(name, state.posteriors.clone())]) }
        }
    })
}

fn gold_labels(set: &PairSet) -> anyhow::Result<Vec<LinkLabel>> {
    set.pairs
        .iter()
        .map(|p| p.link_label.ok_or_else(|| anyhow!("test pair ({}, {}) has no link label", p.u, p.v)))
        .collect()
}

fn write_predictions(path: &Path, records: &[PromptRecord], verdicts: &[Verdict]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dataset", "u", "v", "verdict", "raw_text"])?;
    for (rec, v) in records.iter().zip(verdicts) {
        let m = &rec.meta;
        w.write_record([m.dataset.clone(), m.u.to_string(), m.v.to_string(), format!("{:?}", v.kind), v.raw_text.clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// Queries the endpoint for every evaluated (train, eval) cell. With
/// `cross_dataset` off only the diagonal is evaluated.
fn attack_llm(
    r: &mut Runner<'_>,
    rt: &tokio::runtime::Runtime,
    datasets: &[Loaded],
    states: &[SeedState],
    seed: u64,
) -> Result<(Vec<AttackReport>, CrossMatrix), HarnessError> {
    let cfg = r.cfg;
    let mut diagonal = Vec::new();
    let mut cells = Vec::new();
    let train_names: Vec<String> = datasets.iter().map(|d| d.entry.name.clone()).collect();
    for (d, state) in datasets.iter().zip(states) {
        let eval = d.entry.name.as_str();
        let dir = r.dir(seed, eval)?;
        let server = match &cfg.mock {
            Some(mock) => {
                let server = r.timed(Stage::ServeMock, Some(seed), Some(eval), || {
                    let mode = mock_mode(mock, d, state)?;
                    let options = MockOptions {
                        fail_first: mock.fail_first,
                        latency: Duration::from_millis(mock.latency_ms),
                        malformed_responses: false,
                    };
                    let addr: SocketAddr = "127.0.0.1:0".parse().expect("literal address");
                    Ok(rt.block_on(serve_mock(mode, addr, options))?)
                })?;
                Some(server)
            }
            None => None,
        };
        let base_url = server.as_ref().map_or_else(|| cfg.endpoint.base_url.clone(), |s| s.base_url());
        r.manifest.endpoint_url = Some(if cfg.mock.is_some() { "in-process mock".into() } else { base_url.clone() });

        let trains: Vec<&String> =
            if cfg.cross_dataset { train_names.iter().collect() } else { train_names.iter().filter(|t| *t == eval).collect() };
        let result = (|| {
            for t in trains {
                let endpoint = EndpointConfig {
                    base_url: base_url.clone(),
                    model_name: cfg.endpoint.model_name.replace("{train}", t),
                    ..cfg.endpoint.clone()
                };
                let report = r.timed(Stage::AttackLlm, Some(seed), Some(eval), || {
                    let client = ChatClient::new(endpoint)?;
                    let run = rt.block_on(client.run_attack(&state.inference))?;
                    let file = if t == eval { "llm_predictions.csv".to_string() } else { format!("llm_predictions_from_{t}.csv") };
                    write_predictions(&dir.join(file), &state.inference, &run.verdicts)?;
                    let gold = gold_labels(&state.test)?;
                    let method = if t == eval { "llm".to_string() } else { format!("llm-from-{t}") };
                    let report = compute_metrics(&run.predictions(), &gold, cfg.unparseable_policy)?
                        .with_id(AttackId::new(method, eval, cfg.prompt.setting.to_string(), seed));
                    Ok(report)
                })?;
                if t == eval {
                    diagonal.push(report.clone());
                }
                cells.push((t.clone(), eval.to_string(), report));
            }
            Ok::<_, HarnessError>(())
        })();
        if let Some(server) = server {
            let stats = server.stats();
            log::info!("mock for {eval}: {} requests, peak {} in flight", stats.requests, stats.max_in_flight);
            rt.block_on(server.shutdown());
        }
        result?;
    }
    let mut matrix = r.timed(Stage::CrossMatrix, Some(seed), None, || Ok(cross_matrix(cells)?))?;
    if !cfg.cross_dataset {
        matrix = complete_axes(matrix, &train_names);
    }
    Ok((diagonal, matrix))
}

/// Re-keys a diagonal-only grid so both axes list every dataset and the
/// off-diagonal cells show up as missing.
fn complete_axes(m: CrossMatrix, names: &[String]) -> CrossMatrix {
    let mut cells = Vec::new();
    for t in names {
        for e in names {
            if let Some(rep) = m.get(t, e) {
                cells.push((t.clone(), e.clone(), rep.clone()));
            }
        }
    }
    let mut full = cross_matrix(cells).expect("keys are unique");
    full.train_datasets = names.to_vec();
    full.eval_datasets = names.to_vec();
    full
}

fn summarize(reports: &[AttackReport]) -> anyhow::Result<Vec<SeedSummary>> {
    let mut groups: BTreeMap<(String, String, String), Vec<AttackReport>> = BTreeMap::new();
    let mut order = Vec::new();
    for rep in reports {
        let id = &rep.attack_id;
        let key = (id.method.clone(), id.dataset.clone(), id.setting.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(rep.clone());
    }
    order.into_iter().map(|k| Ok(summarize_seeds(&groups[&k])?)).collect()
}

fn write_summaries(rows: &[SeedSummary], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "dataset", "setting", "n_seeds", "accuracy_mean", "accuracy_std", "f1_mean", "f1_std"])?;
    for s in rows {
        w.write_record([
            s.method.clone(),
            s.dataset.clone(),
            s.setting.clone(),
            s.seeds.len().to_string(),
            format!("{:.4}", s.accuracy_mean),
            format!("{:.4}", s.accuracy_std),
            format!("{:.4}", s.f1_mean),
            format!("{:.4}", s.f1_std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_mean_max(rows: &[MeanMaxRow], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "dataset", "mean_accuracy", "max_accuracy", "max_accuracy_method", "mean_f1", "max_f1"])?;
    for row in rows {
        let s = &row.summary;
        w.write_record([
            row.seed.to_string(),
            row.dataset.clone(),
            format!("{:.4}", s.mean_accuracy),
            format!("{:.4}", s.max_accuracy),
            s.max_accuracy_method.clone(),
            format!("{:.4}", s.mean_f1),
            format!("{:.4}", s.max_f1),
        ])?;
    }
    w.flush()?;
    Ok(())
}
