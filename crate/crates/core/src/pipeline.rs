//! File-based pipeline stages over one output directory.
//!
//! Layout under `out/`:
//! `config.json`, `graph/`, `kge/`, `hasp/`, `model/`, `eval/`, `augment/`,
//! `infer/`, `manifest.json`. Each stage directory carries a `stage.json`
//! with the config hash and the hashes of the inputs it consumed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::embfile;
use crate::evalkit::{
    augment_eels, evaluate, evaluate_inductive, reinfer, shuffled_rows, AugmentMode, EvalError,
    EvalReport, Setting, SimilarityGroundTruth,
};
use crate::hasp::{build_plan, plan_report, HaspConfig, HaspError, HaspPlan};
use crate::kge::{
    filtered_tail_mrr, fold_in_features, input_features, pretrain, Corrupter, EntityInit,
    KgeConfig, KgeError, KgeModel,
};
use crate::kgraph::{load_graph, save_graph, GraphError, HeteroGraph, NodeId};
use crate::numcore::Matrix;
use crate::rgnn::{RGnnConfig, RGnnModel, RgnnError};
use crate::seeds::{child_seed, sha256_hex};
use crate::syngen::{generate, split_inductive, PlantedTruth, SynGenConfig, SynGenError};
use crate::trainer::{
    entity_rows, infer, train, write_log, EmbeddingArtifact, Provenance, TrainConfig, TrainError,
    TrainInput,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunSetting {
    #[default]
    Transductive,
    Inductive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub entity_init: EntityInit,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            entity_init: EntityInit::Kge,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Inductive runs pretrain and train on the split's train graph.
    pub setting: RunSetting,
    pub holdout_fraction: f64,
    pub top_k: usize,
    pub directed_augment: bool,
    /// Entities with EEL degree above this are "popular" in directed
    /// augmentation.
    pub popular_min_degree: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            setting: RunSetting::Transductive,
            holdout_fraction: 0.2,
            top_k: 3,
            directed_augment: false,
            popular_min_degree: 6,
        }
    }
}

/// One document configuring every stage. Module seeds are derived from
/// `seed`; any seed given inside a section is overwritten.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub syngen: SynGenConfig,
    pub kge: KgeConfig,
    pub rgnn: RGnnConfig,
    pub train: TrainConfig,
    pub hasp: HaspConfig,
    pub features: FeatureConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    /// Copy with every module seed replaced by `child_seed(seed, module)`.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.syngen.seed = child_seed(self.seed, "syngen");
        c.kge.seed = child_seed(self.seed, "kge");
        c.rgnn.seed = child_seed(self.seed, "rgnn");
        c.train.seed = child_seed(self.seed, "trainer");
        c.hasp.seed = child_seed(self.seed, "hasp");
        for (i, r) in c.hasp.rules.iter_mut().enumerate() {
            r.seed = child_seed(self.seed, &format!("hasp.rule.{i}"));
        }
        c
    }

    /// sha256 of the resolved config's JSON.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(&self.resolved()).expect("config serializes"))
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.eval;
        if !(e.holdout_fraction > 0.0 && e.holdout_fraction < 1.0) {
            return Err(PipelineError::Config(format!(
                "eval.holdout_fraction {} is not in (0, 1)",
                e.holdout_fraction
            )));
        }
        if self.hasp.partitions == 0 {
            return Err(PipelineError::Config("hasp.partitions must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing input {path} ({what}); run `{stage}` first")]
    MissingInput {
        path: String,
        what: &'static str,
        stage: &'static str,
    },
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("io: {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("kgraph: {0}")]
    Graph(#[from] GraphError),
    #[error("syngen: {0}")]
    SynGen(#[from] SynGenError),
    #[error("kge: {0}")]
    Kge(#[from] KgeError),
    #[error("rgnn: {0}")]
    Rgnn(#[from] RgnnError),
    #[error("hasp: {0}")]
    Hasp(#[from] HaspError),
    #[error("trainer: {0}")]
    Train(#[from] TrainError),
    #[error("evalkit: {0}")]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::MissingInput { .. } => "missing_input",
            PipelineError::Mismatch(_) => "mismatch",
            PipelineError::Io { .. } => "io",
            PipelineError::Graph(_) => "kgraph",
            PipelineError::SynGen(_) => "syngen",
            PipelineError::Kge(_) => "kge",
            PipelineError::Rgnn(_) => "rgnn",
            PipelineError::Hasp(_) => "hasp",
            PipelineError::Train(_) => "trainer",
            PipelineError::Eval(_) => "evalkit",
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| io_err(path, e))
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn require(path: PathBuf, what: &'static str, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingInput {
            path: path.display().to_string(),
            what,
            stage,
        })
    }
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| io_err(path, e))?))
}

pub fn model_hash(model: &RGnnModel) -> String {
    sha256_hex(&model.to_bytes())
}

/// Paths of one output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
    pub fn graph_dir(&self) -> PathBuf {
        self.dir("graph")
    }
    pub fn nodes(&self) -> PathBuf {
        self.graph_dir().join("nodes.tsv")
    }
    pub fn edges(&self) -> PathBuf {
        self.graph_dir().join("edges.tsv")
    }
    pub fn truth(&self) -> PathBuf {
        self.graph_dir().join("truth.json")
    }
    pub fn split(&self) -> PathBuf {
        self.graph_dir().join("split.json")
    }
    pub fn kge_dir(&self) -> PathBuf {
        self.dir("kge")
    }
    pub fn plan(&self) -> PathBuf {
        self.dir("hasp").join("hasp_plan.json")
    }
    pub fn model_dir(&self) -> PathBuf {
        self.dir("model")
    }
    pub fn features(&self) -> PathBuf {
        self.model_dir().join("features.bin")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

/// Held-out entities of the inductive split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    pub holdout_fraction: f64,
    pub holdout: Vec<u32>,
    pub hash: String,
}

fn split_hash(holdout: &[NodeId]) -> String {
    let bytes: Vec<u8> = holdout.iter().flat_map(|v| v.0.to_le_bytes()).collect();
    sha256_hex(&bytes)
}

#[derive(Serialize)]
struct StageRecord<'a> {
    stage: &'a str,
    config_hash: String,
    inputs: BTreeMap<&'a str, String>,
}

fn write_stage(dir: &Path, stage: &str, cfg: &PipelineConfig, inputs: &[(&'static str, String)]) -> Result<()> {
    let rec = StageRecord {
        stage,
        config_hash: cfg.hash(),
        inputs: inputs.iter().cloned().collect(),
    };
    write_json(&dir.join("stage.json"), &rec)
}

/// Graphs loaded from `graph/`: the full graph, the one training sees, and
/// the holdout (empty when transductive).
pub struct GraphSet {
    pub full: HeteroGraph,
    pub train: HeteroGraph,
    pub holdout: Vec<NodeId>,
    pub split_hash: String,
}

pub fn load_graphs(out: &Layout, setting: RunSetting) -> Result<GraphSet> {
    let nodes = require(out.nodes(), "graph nodes", "gen")?;
    let edges = require(out.edges(), "graph edges", "gen")?;
    let full = load_graph(&nodes, &edges)?;
    match setting {
        RunSetting::Transductive => Ok(GraphSet {
            train: full.clone(),
            full,
            holdout: Vec::new(),
            split_hash: String::new(),
        }),
        RunSetting::Inductive => {
            let path = require(out.split(), "inductive split", "gen")?;
            let split: SplitFile = read_json(&path)?;
            let holdout: Vec<NodeId> = split.holdout.iter().map(|&v| NodeId(v)).collect();
            if holdout.iter().any(|v| v.idx() >= full.entity_count()) {
                return Err(PipelineError::Mismatch(format!(
                    "{} names entities outside the graph",
                    path.display()
                )));
            }
            if split_hash(&holdout) != split.hash {
                return Err(PipelineError::Mismatch(format!("{} hash is stale", path.display())));
            }
            let removed = holdout.iter().copied().collect();
            Ok(GraphSet {
                train: full.without_entity_edges(&removed),
                full,
                split_hash: split.hash,
                holdout,
            })
        }
    }
}

pub fn load_truths(out: &Layout, g: &HeteroGraph) -> Result<Vec<SimilarityGroundTruth>> {
    let truth = PlantedTruth::load(&require(out.truth(), "ground truth", "gen")?)?;
    Ok(SimilarityGroundTruth::from_truth(&truth, g.entity_count())?)
}

fn write_config(out: &Layout, cfg: &PipelineConfig) -> Result<()> {
    make_dir(&out.root)?;
    write_json(&out.root.join("config.json"), &cfg.resolved())
}

/// Generates the synthetic graph, its ground truth and the inductive split.
pub fn stage_gen(cfg: &PipelineConfig, out: &Layout) -> Result<()> {
    cfg.validate()?;
    let c = cfg.resolved();
    write_config(out, cfg)?;
    let dir = out.graph_dir();
    make_dir(&dir)?;
    let (g, truth) = generate(&c.syngen)?;
    save_graph(&g, &out.nodes(), &out.edges())?;
    truth.save(&out.truth())?;
    let (_, holdout) = split_inductive(&g, c.eval.holdout_fraction, child_seed(cfg.seed, "split"))?;
    let split = SplitFile {
        holdout_fraction: c.eval.holdout_fraction,
        holdout: holdout.iter().map(|v| v.0).collect(),
        hash: split_hash(&holdout),
    };
    write_json(&out.split(), &split)?;
    write_stage(&dir, "gen", cfg, &[("graph_hash", g.content_hash())])?;
    log::info!(
        "gen: {} entities, {} concepts, {} EELs",
        g.entity_count(),
        g.concept_count(),
        g.eel_edges().len()
    );
    Ok(())
}

/// TransE over the training graph's semantic triples.
pub fn stage_pretrain(cfg: &PipelineConfig, out: &Layout) -> Result<()> {
    let c = cfg.resolved();
    let gs = load_graphs(out, c.eval.setting)?;
    let dir = out.kge_dir();
    make_dir(&dir)?;
    let outcome = pretrain(&gs.train, &c.kge)?;
    let prov = json!({
        "config_hash": cfg.hash(),
        "graph_hash": gs.train.content_hash(),
        "split_hash": gs.split_hash,
    });
    outcome.model.save(&dir, &prov)?;
    let mut summary = json!({
        "initial_loss": outcome.initial_loss,
        "epoch_losses": outcome.epoch_losses,
    });
    if !outcome.heldout.is_empty() {
        let known = Corrupter::new(&gs.train, 1).known().clone();
        let r = filtered_tail_mrr(&outcome.model, &gs.train, &outcome.heldout, &known);
        log::info!("pretrain: held-out MRR {:.4} (random {:.4})", r.mrr, r.random_mrr);
        summary["heldout_mrr"] = json!(r.mrr);
        summary["random_mrr"] = json!(r.random_mrr);
        summary["heldout_count"] = json!(r.count);
    }
    write_json(&dir.join("kge_summary.json"), &summary)?;
    write_stage(&dir, "pretrain", cfg, &[("graph_hash", gs.train.content_hash())])
}

/// HASP plan over the training graph.
pub fn stage_partition(cfg: &PipelineConfig, out: &Layout) -> Result<()> {
    let c = cfg.resolved();
    let gs = load_graphs(out, c.eval.setting)?;
    let dir = out.dir("hasp");
    make_dir(&dir)?;
    let plan = build_plan(&gs.train, &c.hasp)?;
    let hash = gs.train.content_hash();
    plan.save(&out.plan(), &hash)?;
    let report = plan_report(&plan, c.rgnn.dim);
    log::info!(
        "partition: N={} cut {} EELs ({:.3}), balance {:.3}",
        report.partition_count,
        report.cut_eels,
        report.cut_ratio,
        report.balance_factor
    );
    write_json(&dir.join("hasp_report.json"), &report)?;
    write_stage(&dir, "partition", cfg, &[("graph_hash", hash)])
}

fn load_kge(out: &Layout, train_hash: &str) -> Result<Option<KgeModel>> {
    let meta = out.kge_dir().join("kge_embeddings.meta.json");
    if !meta.exists() {
        return Ok(None);
    }
    let (model, prov) = KgeModel::load(&out.kge_dir())?;
    if prov.get("graph_hash").and_then(|v| v.as_str()) != Some(train_hash) {
        return Err(PipelineError::Mismatch(format!(
            "{} was pretrained on a different graph",
            meta.display()
        )));
    }
    Ok(Some(model))
}

/// GNN input features for every node of the full graph. Held-out entities
/// get fold-in rows from the frozen KGE model when entity init is `kge`.
pub fn build_features(cfg: &PipelineConfig, out: &Layout, gs: &GraphSet) -> Result<Matrix> {
    let c = cfg.resolved();
    let init = c.features.entity_init;
    let kge = load_kge(out, &gs.train.content_hash())?;
    if kge.is_none() && init == EntityInit::Kge {
        require(out.kge_dir().join("kge_embeddings.bin"), "KGE features file", "pretrain")?;
    }
    let mut features = input_features(
        &gs.full,
        kge.as_ref(),
        init,
        c.rgnn.dim,
        child_seed(cfg.seed, "features"),
    )?;
    if let (Some(m), EntityInit::Kge) = (&kge, init) {
        fold_in_features(m, &gs.full, &gs.holdout, &mut features);
    }
    Ok(features)
}

/// Trains the GNN (on the HASP plan when `hasp.partitions > 1`) and writes
/// the model, its input features and the entity embedding artifact.
pub fn stage_train(cfg: &PipelineConfig, out: &Layout) -> Result<()> {
    let c = cfg.resolved();
    let gs = load_graphs(out, c.eval.setting)?;
    let features = build_features(cfg, out, &gs)?;
    let dir = out.model_dir();
    make_dir(&dir)?;
    let model = RGnnModel::for_graph(c.rgnn.clone(), features.cols(), &gs.train)?;
    let graph_hash = gs.train.content_hash();
    let plan: Option<HaspPlan> = if c.hasp.partitions > 1 {
        let path = require(out.plan(), "HASP plan", "partition")?;
        let (plan, hash) = HaspPlan::load(&path, &gs.train)?;
        if hash != graph_hash {
            return Err(PipelineError::Mismatch(format!(
                "{} was built for a different graph",
                path.display()
            )));
        }
        if plan.partition_count != c.hasp.partitions {
            return Err(PipelineError::Mismatch(format!(
                "{} has N={} but the config asks for {}",
                path.display(),
                plan.partition_count,
                c.hasp.partitions
            )));
        }
        Some(plan)
    } else {
        None
    };
    let input = match &plan {
        Some(p) => TrainInput::Plan(&gs.train, p),
        None => TrainInput::Graph(&gs.train),
    };
    let outcome = train(input, &features, model, &c.train)?;
    let mhash = model_hash(&outcome.model);
    embfile::write_matrix(&out.features(), &features).map_err(TrainError::from)?;
    let prov = Provenance {
        config_hash: cfg.hash(),
        graph_hash: graph_hash.clone(),
        model_hash: mhash,
        split_hash: gs.split_hash.clone(),
    };
    outcome
        .model
        .save(&dir, serde_json::to_value(&prov).expect("provenance serializes"))?;
    let emb = entity_rows(&outcome.node_embeddings, gs.train.entity_count());
    EmbeddingArtifact::new(&gs.train, emb, prov)?.save(&dir, "embeddings")?;
    write_log(&dir.join("train_log.jsonl"), &outcome.log)?;
    write_stage(
        &dir,
        "train",
        cfg,
        &[
            ("graph_hash", graph_hash),
            ("features_hash", file_hash(&out.features())?),
        ],
    )
}

/// Trained model, its features and artifact, with every hash cross-checked
/// against the graph in `graph/`.
pub struct TrainedRun {
    pub graphs: GraphSet,
    pub model: RGnnModel,
    pub features: Matrix,
    pub artifact: EmbeddingArtifact,
    pub provenance: Provenance,
}

pub fn load_trained(out: &Layout, setting: RunSetting) -> Result<TrainedRun> {
    let dir = out.model_dir();
    require(dir.join("rgnn_model.bin"), "trained model", "train")?;
    let (model, prov) = RGnnModel::load(&dir)?;
    let prov: Provenance = serde_json::from_value(prov)
        .map_err(|e| PipelineError::Mismatch(format!("model provenance: {e}")))?;
    if setting == RunSetting::Inductive && prov.split_hash.is_empty() {
        return Err(PipelineError::Mismatch(
            "inductive evaluation needs a model trained on the inductive split, but this model \
             was trained transductively (split hash is empty)"
                .into(),
        ));
    }
    let graphs = load_graphs(out, setting)?;
    if setting == RunSetting::Inductive && prov.split_hash != graphs.split_hash {
        return Err(PipelineError::Mismatch(
            "model was trained on a different inductive split".into(),
        ));
    }
    let train_hash = graphs.train.content_hash();
    if prov.graph_hash != train_hash {
        return Err(PipelineError::Mismatch(format!(
            "model graph hash {} does not match graph/ ({})",
            prov.graph_hash, train_hash
        )));
    }
    if prov.model_hash != model_hash(&model) {
        return Err(PipelineError::Mismatch("model bytes do not match recorded model hash".into()));
    }
    require(dir.join("embeddings.bin"), "embedding artifact", "train")?;
    let artifact = EmbeddingArtifact::load(&dir, "embeddings")?;
    if artifact.provenance.graph_hash != train_hash || artifact.provenance.model_hash != prov.model_hash {
        return Err(PipelineError::Mismatch(
            "embedding artifact was produced by a different graph or model".into(),
        ));
    }
    let features = embfile::read_matrix(&require(out.features(), "GNN input features", "train")?)
        .map_err(TrainError::from)?;
    if features.rows() != graphs.full.node_count() {
        return Err(PipelineError::Mismatch(format!(
            "features have {} rows for {} nodes",
            features.rows(),
            graphs.full.node_count()
        )));
    }
    Ok(TrainedRun {
        graphs,
        model,
        features,
        artifact,
        provenance: prov,
    })
}

/// MAP@{10,50,100} report. Transductive evaluates the trained artifact;
/// inductive re-encodes the full graph and queries the holdout, plus a
/// shuffled-embedding baseline.
pub fn stage_eval(cfg: &PipelineConfig, out: &Layout, setting: RunSetting) -> Result<EvalReport> {
    let run = load_trained(out, setting)?;
    let truths = load_truths(out, &run.graphs.full)?;
    let groups = run.graphs.full.degree_groups();
    let dir = out.dir("eval");
    make_dir(&dir)?;
    let artifact_hash = file_hash(&out.model_dir().join("embeddings.bin"))?;
    let report = match setting {
        RunSetting::Transductive => evaluate(
            &run.artifact.embeddings,
            &truths,
            &groups,
            Setting::Transductive,
            None,
            &artifact_hash,
        )?,
        RunSetting::Inductive => {
            let (report, emb) = evaluate_inductive(
                &run.model,
                &run.graphs.full,
                &run.features,
                &run.graphs.holdout,
                &truths,
                &groups,
                &artifact_hash,
            )?;
            let queries: Vec<usize> = run.graphs.holdout.iter().map(|v| v.idx()).collect();
            let baseline = evaluate(
                &shuffled_rows(&emb, child_seed(cfg.seed, "eval.shuffle")),
                &truths,
                &groups,
                Setting::Inductive,
                Some(&queries),
                &artifact_hash,
            )?;
            baseline.save(&dir, "inductive_baseline")?;
            report
        }
    };
    let stem = match setting {
        RunSetting::Transductive => "report",
        RunSetting::Inductive => "inductive_report",
    };
    report.save(&dir, stem)?;
    write_stage(
        &dir,
        "eval",
        cfg,
        &[
            ("graph_hash", run.provenance.graph_hash.clone()),
            ("model_hash", run.provenance.model_hash.clone()),
            ("artifact_hash", artifact_hash),
        ],
    )?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub top_k: usize,
    pub directed: bool,
    pub eels_before: usize,
    pub eels_after: usize,
    pub added_undirected: usize,
    pub added_directed: usize,
    pub dropped: usize,
    pub growth_factor: f64,
}

/// Adds top-k L2 nearest-neighbour EELs, re-encodes with frozen weights and
/// evaluates the new embeddings.
pub fn stage_augment(cfg: &PipelineConfig, out: &Layout) -> Result<AugmentSummary> {
    let c = cfg.resolved();
    let run = load_trained(out, RunSetting::Transductive)?;
    if !run.provenance.split_hash.is_empty() {
        return Err(PipelineError::Mismatch(
            "augmentation runs on a transductively trained model".into(),
        ));
    }
    let g = &run.graphs.full;
    let mode = if c.eval.directed_augment {
        AugmentMode::Directed {
            popular_min_degree: c.eval.popular_min_degree,
        }
    } else {
        AugmentMode::Undirected
    };
    let aug = augment_eels(&run.artifact.embeddings, g, c.eval.top_k, mode)?;
    let dir = out.dir("augment");
    make_dir(&dir)?;
    save_graph(&aug.graph, &dir.join("nodes.tsv"), &dir.join("edges.tsv"))?;
    let emb = reinfer(&run.model, &aug.graph, &run.features)?;
    let prov = Provenance {
        graph_hash: aug.graph.content_hash(),
        ..run.provenance.clone()
    };
    let artifact = EmbeddingArtifact::new(&aug.graph, emb, prov)?;
    artifact.save(&dir, "embeddings")?;
    let truths = load_truths(out, g)?;
    let report = evaluate(
        &artifact.embeddings,
        &truths,
        &g.degree_groups(),
        Setting::Augmented,
        None,
        &file_hash(&dir.join("embeddings.bin"))?,
    )?;
    report.save(&dir, "report")?;
    let summary = AugmentSummary {
        top_k: c.eval.top_k,
        directed: c.eval.directed_augment,
        eels_before: aug.eels_before,
        eels_after: aug.eels_after,
        added_undirected: aug.added_undirected,
        added_directed: aug.added_directed,
        dropped: aug.dropped,
        growth_factor: aug.eels_after as f64 / aug.eels_before.max(1) as f64,
    };
    log::info!(
        "augment: EELs {} -> {} (x{:.3})",
        summary.eels_before,
        summary.eels_after,
        summary.growth_factor
    );
    write_json(&dir.join("augment_summary.json"), &summary)?;
    write_stage(
        &dir,
        "augment",
        cfg,
        &[
            ("graph_hash", g.content_hash()),
            ("model_hash", run.provenance.model_hash.clone()),
        ],
    )?;
    Ok(summary)
}

/// Frozen-weight encode of the full graph in `graph/`.
pub fn stage_infer(cfg: &PipelineConfig, out: &Layout) -> Result<()> {
    let c = cfg.resolved();
    let run = load_trained(out, c.eval.setting)?;
    let g = &run.graphs.full;
    let emb = infer(&run.model, g, &run.features)?;
    let dir = out.dir("infer");
    make_dir(&dir)?;
    let prov = Provenance {
        graph_hash: g.content_hash(),
        ..run.provenance.clone()
    };
    EmbeddingArtifact::new(g, emb, prov)?.save(&dir, "embeddings")?;
    write_stage(
        &dir,
        "infer",
        cfg,
        &[
            ("graph_hash", g.content_hash()),
            ("model_hash", run.provenance.model_hash.clone()),
        ],
    )
}

/// Relative path → sha256 for every file under the output directory except
/// the manifest and timing logs.
pub fn manifest(out: &Layout) -> Result<BTreeMap<String, String>> {
    fn walk(dir: &Path, root: &Path, acc: &mut BTreeMap<String, String>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
            let path = entry.map_err(|e| io_err(dir, e))?.path();
            if path.is_dir() {
                walk(&path, root, acc)?;
                continue;
            }
            let rel = path
                .strip_prefix(root)
                .expect("walk stays under root")
                .to_string_lossy()
                .replace('\\', "/");
            if rel == "manifest.json" || rel.ends_with(".jsonl") {
                continue;
            }
            acc.insert(rel, file_hash(&path)?);
        }
        Ok(())
    }
    let mut acc = BTreeMap::new();
    walk(&out.root, &out.root, &mut acc)?;
    Ok(acc)
}

/// gen → pretrain → partition → train → eval, then the manifest.
pub fn run_all(cfg: &PipelineConfig, out: &Layout) -> Result<BTreeMap<String, String>> {
    stage_gen(cfg, out)?;
    stage_pretrain(cfg, out)?;
    stage_partition(cfg, out)?;
    stage_train(cfg, out)?;
    stage_eval(cfg, out, cfg.eval.setting)?;
    let files = manifest(out)?;
    write_json(
        &out.manifest(),
        &json!({ "config_hash": cfg.hash(), "files": files }),
    )?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_json(r#"{"seed": 3}"#).is_ok());
        let err = PipelineConfig::from_json(r#"{"seed": 3, "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let err = PipelineConfig::from_json(r#"{"kge": {"dimm": 4}}"#).unwrap_err();
        assert!(err.to_string().contains("dimm"));
    }

    #[test]
    fn seeds_follow_root() {
        let a = PipelineConfig { seed: 1, ..PipelineConfig::default() };
        let b = PipelineConfig { seed: 2, ..PipelineConfig::default() };
        assert_ne!(a.resolved().kge.seed, b.resolved().kge.seed);
        assert_ne!(a.resolved().kge.seed, a.resolved().rgnn.seed);
        assert_eq!(a.resolved().syngen.seed, child_seed(1, "syngen"));
        let mut c = a.clone();
        c.kge.seed = 999;
        assert_eq!(c.hash(), a.hash());
        assert_ne!(a.hash(), b.hash());
    }
}
