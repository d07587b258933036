use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use linksteal_core::baselines::{mlp_attack, similarity_attack, FeatureMode, MetricKind, PairSource, SourceRegistry};
use linksteal_core::eval::{
    compute_metrics, cross_matrix, emit_report, read_json_reports, AttackId, AttackReport, Prediction, ReportFormat,
    UnparseablePolicy,
};
use linksteal_core::gnn::{forward, load_checkpoint, save_checkpoint, train_target, Arch, PosteriorMatrix};
use linksteal_core::graph::{load_dataset, train_test_node_split, Graph};
use linksteal_core::pairs::{
    export_pairs_csv, import_pairs_csv, sample_pairs, shadow_sameclass_pairs, split_pairs, KnowledgeBudget,
    LabelingSource, PairSet,
};
use linksteal_core::prompt::{
    build_finetune_set, build_inference_records, export_jsonl, import_jsonl, merge_finetune_sets, Setting,
    TemplateVersion,
};
use linksteal_harness::{run_pipeline, PipelineConfig};
use linksteal_llm::{serve_mock, ChatClient, MockMode, MockOptions};

#[derive(Parser)]
#[command(name = "linksteal", version, about = "Link-stealing attacks against graph neural networks")]
struct Cli {
    /// Seed for every randomized step (overrides the config's seeds).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline configuration (TOML). Its sections supply defaults for the
    /// single-stage commands too.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "linksteal-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a target GNN and save its checkpoint and node split.
    TrainTarget {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        arch: Option<Arch>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Write the posterior matrix of a trained checkpoint.
    ExtractPosteriors {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Sample balanced Link/Unlink pairs and split them into train/test.
    SamplePairs {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        known_links: Option<usize>,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
    /// Distance-threshold attacks on posteriors.
    AttackSimilarity {
        #[command(flatten)]
        pairs: PairArgs,
        #[arg(long)]
        posteriors: PathBuf,
        /// Metric name, or `all`.
        #[arg(long, default_value = "all")]
        metric: String,
    },
    /// Supervised MLP attacks.
    AttackMlp {
        #[command(flatten)]
        pairs: PairArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        posteriors: PathBuf,
        #[arg(long = "mode", value_enum, default_values_t = [ModeArg::Pp])]
        modes: Vec<ModeArg>,
    },
    /// Render fine-tuning and inference prompt corpora.
    BuildPrompts {
        #[command(flatten)]
        pairs: PairArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        posteriors: PathBuf,
        #[arg(long, value_enum)]
        setting: Option<SettingArg>,
        #[arg(long, value_enum)]
        template: Option<TemplateArg>,
        #[arg(long)]
        no_text: bool,
        #[arg(long)]
        no_posteriors: bool,
    },
    /// Merge fine-tuning corpora (possibly of different posterior widths)
    /// into one shuffled JSONL file.
    FinetuneExport {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Serve a mock chat-completion endpoint until Ctrl-C.
    ServeMock {
        #[arg(long, value_enum)]
        mode: MockArg,
        /// Dataset directories whose edges back the oracle.
        #[arg(long = "dataset")]
        datasets: Vec<PathBuf>,
        /// `dataset=path/to/posteriors.csv`, for posterior-cosine.
        #[arg(long = "posteriors")]
        posteriors: Vec<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 8089)]
        port: u16,
        #[arg(long, default_value_t = 0)]
        fail_first: usize,
        #[arg(long, default_value_t = 0)]
        latency_ms: u64,
    },
    /// Query an endpoint with inference prompts; scores them when the
    /// matching test pairs are given.
    AttackLlm {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        base_url: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        max_in_flight: Option<usize>,
    },
    /// Score a predictions CSV against labeled pairs.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value = "llm")]
        method: String,
        #[arg(long)]
        exclude_unparseable: bool,
    },
    /// Assemble a train × eval grid from report files.
    CrossMatrix {
        /// `TRAIN:EVAL=reports.json` (the file must hold one report).
        #[arg(long = "cell", required = true)]
        cells: Vec<String>,
    },
    /// Run the whole configured experiment.
    RunPipeline,
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    train_pairs: PathBuf,
    #[arg(long)]
    test_pairs: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Feature,
    Pp,
    PpFeature,
}

impl From<ModeArg> for FeatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Feature => FeatureMode::Feature,
            ModeArg::Pp => FeatureMode::Pp,
            ModeArg::PpFeature => FeatureMode::PpFeature,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    WhiteBox,
    BlackBox,
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateArg {
    V1,
    V2,
}

#[derive(Clone, Copy, ValueEnum)]
enum MockArg {
    Oracle,
    ConstantYes,
    PosteriorCosine,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        // Library errors already embed their io source in Display.
        let mut msg = String::new();
        for cause in e.chain().map(|c| c.to_string()) {
            if !msg.ends_with(&cause) {
                msg = if msg.is_empty() { cause } else { format!("{msg}: {cause}") };
            }
        }
        eprintln!("error: {msg}");
        std::process::exit(1);
    }
}

fn base_config(cli: &Cli) -> Result<PipelineConfig> {
    match &cli.config {
        Some(path) => Ok(PipelineConfig::load(path)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn seed_of(cli: &Cli, cfg: &PipelineConfig) -> u64 {
    cli.seed.or_else(|| cfg.seeds.first().copied()).unwrap_or(0)
}

fn ensure_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn load_pairs(path: &Path, seed: u64) -> Result<PairSet> {
    let pairs = import_pairs_csv(path)?;
    let dataset = pairs.first().map(|p| p.dataset.clone()).ok_or_else(|| anyhow!("{} holds no pairs", path.display()))?;
    if pairs.iter().any(|p| p.dataset != dataset) {
        bail!("{} mixes datasets", path.display());
    }
    let source = if pairs.iter().all(|p| p.link_label.is_some()) {
        LabelingSource::GroundTruthLink
    } else {
        LabelingSource::GroundTruthClass
    };
    Ok(PairSet::from_pairs(pairs, seed, dataset, source))
}

fn load_posteriors(path: &Path, dataset: &str) -> Result<PosteriorMatrix<f64>> {
    Ok(PosteriorMatrix::read_csv(path, &path.display().to_string(), dataset)?)
}

fn print_reports(reports: &[AttackReport]) {
    for r in reports {
        println!(
            "{:<24} {:<12} acc {:.4}  f1 {:.4}  n {}",
            r.attack_id.method, r.attack_id.dataset, r.accuracy, r.f1, r.n_test
        );
    }
}

fn write_reports(reports: &[AttackReport], out: &Path, stem: &str) -> Result<()> {
    emit_report(reports, ReportFormat::Csv, &out.join(format!("{stem}.csv")))?;
    emit_report(reports, ReportFormat::Json, &out.join(format!("{stem}.json")))?;
    print_reports(reports);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = base_config(&cli)?;
    let seed = seed_of(&cli, &cfg);
    let out = cli.out.clone();
    match cli.command {
        Command::TrainTarget { dataset, arch, epochs } => {
            ensure_out(&out)?;
            let g = load_dataset::<f64>(&dataset)?;
            let mut model_cfg = cfg.model.clone();
            model_cfg.seed = seed;
            if let Some(a) = arch {
                model_cfg.arch = a;
            }
            if let Some(e) = epochs {
                model_cfg.epochs = e;
            }
            let [a, b, c] = cfg.node_split;
            let split = train_test_node_split(&g, (a, b, c), seed)?;
            let model = train_target(&g, &split, &model_cfg)?;
            let acc = linksteal_core::gnn::accuracy_on(&model, &g, &split.test_node_ids)?;
            save_checkpoint(&model, &out.join("target.json"))?;
            std::fs::write(out.join("split.json"), serde_json::to_string(&split)?)?;
            println!("{} on {}: test accuracy {acc:.4} (majority {:.4})", model_cfg.arch, g.name(), g.majority_share(&split.test_node_ids));
        }
        Command::ExtractPosteriors { dataset, checkpoint } => {
            ensure_out(&out)?;
            let g = load_dataset::<f64>(&dataset)?;
            let model = load_checkpoint::<f64>(&checkpoint)?;
            let p = forward(&model, &g)?;
            p.write_csv(&out.join("posteriors.csv"))?;
            println!("{} x {} posteriors written", p.node_count(), p.width());
        }
        Command::SamplePairs { dataset, known_links, train_fraction } => {
            ensure_out(&out)?;
            let g = load_dataset::<f64>(&dataset)?;
            let budget = known_links
                .map(KnowledgeBudget::new)
                .or_else(|| KnowledgeBudget::resolve(&g))
                .ok_or_else(|| anyhow!("no default budget for `{}`; pass --known-links", g.name()))?;
            let all = sample_pairs(&g, budget, seed)?;
            let (train, test) = split_pairs(&all, train_fraction, seed)?;
            export_pairs_csv(&train, &out.join("pairs_train.csv"))?;
            export_pairs_csv(&test, &out.join("pairs_test.csv"))?;
            println!("{} train / {} test pairs", train.len(), test.len());
        }
        Command::AttackSimilarity { pairs, posteriors, metric } => {
            ensure_out(&out)?;
            let train = load_pairs(&pairs.train_pairs, seed)?;
            let test = load_pairs(&pairs.test_pairs, seed)?;
            let p = load_posteriors(&posteriors, &test.source_graph)?;
            let metrics: Vec<MetricKind> = if metric == "all" {
                MetricKind::ALL.to_vec()
            } else {
                vec![MetricKind::ALL
                    .into_iter()
                    .find(|m| m.name() == metric.to_lowercase())
                    .ok_or_else(|| anyhow!("unknown metric `{metric}`"))?]
            };
            let reports = metrics
                .into_iter()
                .map(|m| Ok(similarity_attack(&train, &test, &p, m)?.report))
                .collect::<Result<Vec<_>>>()?;
            write_reports(&reports, &out, "similarity_reports")?;
        }
        Command::AttackMlp { pairs, dataset, posteriors, modes } => {
            ensure_out(&out)?;
            let g = load_dataset::<f64>(&dataset)?;
            let train = load_pairs(&pairs.train_pairs, seed)?;
            let test = load_pairs(&pairs.test_pairs, seed)?;
            let p = load_posteriors(&posteriors, g.name())?;
            let mut registry = SourceRegistry::new();
            registry.insert(g.name().to_string(), PairSource { graph: &g, posteriors: &p });
            let mlp = linksteal_core::baselines::MlpConfig { seed, ..cfg.baselines.mlp.clone() };
            let reports = modes
                .into_iter()
                .map(|m| Ok(mlp_attack(&train, &test, m.into(), &mlp, &registry)?.report))
                .collect::<Result<Vec<_>>>()?;
            write_reports(&reports, &out, "mlp_reports")?;
        }
        Command::BuildPrompts { pairs, dataset, posteriors, setting, template, no_text, no_posteriors } => {
            ensure_out(&out)?;
            let g = load_dataset::<f64>(&dataset)?;
            let p = load_posteriors(&posteriors, g.name())?;
            let mut prompt = cfg.prompt.clone();
            if let Some(s) = setting {
                prompt.setting = match s {
                    SettingArg::WhiteBox => Setting::WhiteBox,
                    SettingArg::BlackBox => Setting::BlackBox,
                };
            }
            if let Some(t) = template {
                prompt.template = match t {
                    TemplateArg::V1 => TemplateVersion::V1,
                    TemplateArg::V2 => TemplateVersion::V2,
                };
            }
            prompt.include_text &= !no_text;
            prompt.include_posteriors &= !no_posteriors;
            prompt.validate()?;
            let train = load_pairs(&pairs.train_pairs, seed)?;
            let test = load_pairs(&pairs.test_pairs, seed)?;
            let finetune = match prompt.setting {
                Setting::WhiteBox => build_finetune_set(&train, &prompt, &g, &p)?,
                Setting::BlackBox => {
                    let shadow = shadow_sameclass_pairs(&g, Some(&p), train.n_link, seed, cfg.shadow_labeling)?;
                    export_pairs_csv(&shadow, &out.join("pairs_shadow.csv"))?;
                    build_finetune_set(&shadow, &prompt, &g, &p)?
                }
            };
            let n_ft = export_jsonl(&finetune.records, &out.join("finetune.jsonl"))?;
            let n_inf = export_jsonl(&build_inference_records(&test, &prompt, &g, &p)?, &out.join("inference.jsonl"))?;
            println!("{n_ft} fine-tuning records, {n_inf} inference records ({})", prompt.template.id());
        }
        Command::FinetuneExport { inputs } => {
            ensure_out(&out)?;
            let sets = inputs.iter().map(|p| Ok(import_jsonl(p)?)).collect::<Result<Vec<_>>>()?;
            let merged = merge_finetune_sets(&sets, seed);
            let n = export_jsonl(&merged.records, &out.join("finetune_all.jsonl"))?;
            println!("{n} records merged from {} corpora ({} Yes)", sets.len(), merged.yes_count());
        }
        Command::ServeMock { mode, datasets, posteriors, tau, port, fail_first, latency_ms } => {
            let mode = match mode {
                MockArg::ConstantYes => MockMode::ConstantYes,
                MockArg::Oracle => {
                    if datasets.is_empty() {
                        bail!("oracle mode needs at least one --dataset");
                    }
                    let mut edges = HashMap::new();
                    for dir in &datasets {
                        let g: Graph<f64> = load_dataset(dir)?;
                        edges.insert(g.name().to_string(), g.edges().iter().copied().collect::<HashSet<_>>());
                    }
                    MockMode::Oracle { edges }
                }
                MockArg::PosteriorCosine => {
                    let tau = tau.ok_or_else(|| anyhow!("posterior-cosine mode needs --tau"))?;
                    let mut map = HashMap::new();
                    for spec in &posteriors {
                        let (name, path) =
                            spec.split_once('=').ok_or_else(|| anyhow!("expected dataset=path, got `{spec}`"))?;
                        map.insert(name.to_string(), load_posteriors(Path::new(path), name)?);
                    }
                    if map.is_empty() {
                        bail!("posterior-cosine mode needs at least one --posteriors dataset=path");
                    }
                    MockMode::PosteriorCosine { tau, posteriors: map }
                }
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let addr = SocketAddr::from(([127, 0, 0, 1], port));
                let options = MockOptions {
                    fail_first,
                    latency: Duration::from_millis(latency_ms),
                    malformed_responses: false,
                };
                let server = serve_mock(mode, addr, options).await?;
                println!("mock endpoint at {} (Ctrl-C to stop)", server.base_url());
                server.run_until_ctrl_c().await;
                Ok::<_, anyhow::Error>(())
            })?;
        }
        Command::AttackLlm { records, pairs, base_url, model, max_in_flight } => {
            ensure_out(&out)?;
            let set = import_jsonl(&records)?;
            let mut endpoint = cfg.endpoint.clone();
            if let Some(u) = base_url {
                endpoint.base_url = u;
            }
            if let Some(m) = model {
                endpoint.model_name = m;
            }
            if let Some(k) = max_in_flight {
                endpoint.max_in_flight = k;
            }
            let client = ChatClient::new(endpoint)?;
            let rt = tokio::runtime::Runtime::new()?;
            let run = rt.block_on(client.run_attack(&set.records))?;
            let path = out.join("llm_predictions.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["dataset", "u", "v", "verdict", "raw_text"])?;
            for (rec, v) in set.records.iter().zip(&run.verdicts) {
                let m = &rec.meta;
                w.write_record([m.dataset.clone(), m.u.to_string(), m.v.to_string(), format!("{:?}", v.kind), v.raw_text.clone()])?;
            }
            w.flush()?;
            println!("{} verdicts ({} unparseable) written to {}", run.verdicts.len(), run.unparseable(), path.display());
            if let Some(pairs) = pairs {
                let report = score(&path, &pairs, "llm", cfg.unparseable_policy, seed)?;
                write_reports(&[report], &out, "llm_report")?;
            }
        }
        Command::Evaluate { predictions, pairs, method, exclude_unparseable } => {
            ensure_out(&out)?;
            let policy = if exclude_unparseable { UnparseablePolicy::Exclude } else { cfg.unparseable_policy };
            let report = score(&predictions, &pairs, &method, policy, seed)?;
            write_reports(&[report], &out, "evaluation")?;
        }
        Command::CrossMatrix { cells } => {
            let mut parsed = Vec::new();
            for spec in &cells {
                let (key, path) = spec.split_once('=').ok_or_else(|| anyhow!("expected TRAIN:EVAL=path, got `{spec}`"))?;
                let (train, eval) = key.split_once(':').ok_or_else(|| anyhow!("expected TRAIN:EVAL, got `{key}`"))?;
                let mut reports = read_json_reports(Path::new(path))?;
                if reports.len() != 1 {
                    bail!("{path} holds {} reports; a cell needs exactly one", reports.len());
                }
                parsed.push((train.to_string(), eval.to_string(), reports.remove(0)));
            }
            let matrix = cross_matrix(parsed)?;
            matrix.write(&out.join("cross"))?;
            print!("{}", matrix.accuracy_csv());
            for (t, e) in matrix.missing_cells() {
                eprintln!("warning: cell ({t}, {e}) missing");
            }
        }
        Command::RunPipeline => {
            let path = cli.config.as_ref().ok_or_else(|| anyhow!("run-pipeline needs --config"))?;
            let mut cfg = PipelineConfig::load(path)?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let outcome = run_pipeline(&cfg, &out)?;
            for s in &outcome.summaries {
                println!(
                    "{:<24} {:<14} {:<10} acc {:.4} ± {:.4}  f1 {:.4} ± {:.4}",
                    s.method, s.dataset, s.setting, s.accuracy_mean, s.accuracy_std, s.f1_mean, s.f1_std
                );
            }
            for w in &outcome.manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!("artifacts in {}", outcome.run_dir.display());
        }
    }
    Ok(())
}

/// Joins a predictions CSV (`dataset,u,v,verdict,...`) to labeled pairs by
/// position and checks the keys agree.
fn score(predictions: &Path, pairs: &Path, method: &str, policy: UnparseablePolicy, seed: u64) -> Result<AttackReport> {
    let set = load_pairs(pairs, seed)?;
    let mut rdr = csv::Reader::from_path(predictions)?;
    let mut preds = Vec::new();
    let mut gold = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let pair = set.pairs.get(k).ok_or_else(|| anyhow!("more predictions than pairs"))?;
        let (u, v): (usize, usize) = (row[1].parse()?, row[2].parse()?);
        if (u.min(v), u.max(v)) != pair.key() || row[0] != pair.dataset {
            bail!("prediction {k} is for ({u}, {v}) but pair {k} is ({}, {})", pair.u, pair.v);
        }
        preds.push(match &row[3] {
            "Link" => Prediction::Link,
            "Unlink" => Prediction::Unlink,
            _ => Prediction::Unparseable,
        });
        gold.push(pair.link_label.ok_or_else(|| anyhow!("pair {k} has no link label"))?);
    }
    if preds.len() != set.len() {
        bail!("{} predictions for {} pairs", preds.len(), set.len());
    }
    Ok(compute_metrics(&preds, &gold, policy)?.with_id(AttackId::new(method, set.source_graph.clone(), "white-box", seed)))
}
