//! Link-prediction training over EELs.
//!
//! Each epoch walks the subgraphs in a shuffled schedule. Training proceeds in
//! synchronous rounds: in round `r` every subgraph that still has a batch
//! contributes the gradient of its `r`-th batch, computed against the same
//! parameter snapshot; the gradients are averaged in schedule order and
//! applied once. `parallel_workers` only decides how many of those gradients
//! are computed concurrently, so results do not depend on it.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embfile::{self, EmbFileError};
use crate::hasp::{HaspError, HaspPlan};
use crate::kgraph::{HeteroGraph, NodeId};
use crate::numcore::{sigmoid, Matrix, NumError, Optimizer, OptimizerKind, Tape, Var};
use crate::rgnn::{MessageIndex, RGnnModel, RgnnError};
use crate::seeds::stream_seed;

/// Floor applied inside every log of the loss.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub negatives_per_positive: usize,
    /// EELs per parameter update, summed over the subgraphs of a round.
    pub batch_size: usize,
    pub parallel_workers: usize,
    pub max_negative_retries: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            negatives_per_positive: 1,
            batch_size: 1024,
            parallel_workers: 1,
            max_negative_retries: 1000,
            seed: 19,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no positive pairs")]
    NoPositives,
    #[error("entity {0} has no valid negative partner")]
    NoNegatives(NodeId),
    #[error("no negative found for entity {0} after {1} attempts")]
    NegativesExhausted(NodeId, usize),
    #[error(transparent)]
    Rgnn(#[from] RgnnError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Hasp(#[from] HaspError),
    #[error(transparent)]
    File(#[from] EmbFileError),
    #[error("{0}")]
    Format(String),
}

/// Mean binary cross-entropy of `sigmoid(h_i · h_j)` over positives (label 1)
/// and negatives (label 0).
pub fn link_prediction_loss(
    h: &Matrix,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<f64, TrainError> {
    if positives.is_empty() {
        return Err(TrainError::NoPositives);
    }
    let mut tape = Tape::new();
    let hv = tape.leaf(h.clone());
    let loss = loss_on_tape(&mut tape, hv, positives, negatives)?;
    Ok(tape.scalar(loss))
}

fn loss_on_tape(
    tape: &mut Tape,
    h: Var,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<Var, NumError> {
    let split = |pairs: &[(usize, usize)]| -> (Arc<[usize]>, Arc<[usize]>) {
        (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
    };
    let (pi, pj) = split(positives);
    let s = tape.gather_row_dot(h, pi, h, pj)?;
    let p = tape.sigmoid(s);
    let lp = tape.log_clamped(p, LOG_FLOOR);
    let mut total = tape.reduce_sum(lp);
    if !negatives.is_empty() {
        let (ni, nj) = split(negatives);
        let s = tape.gather_row_dot(h, ni, h, nj)?;
        // 1 - sigmoid(s) == sigmoid(-s), without cancellation.
        let neg = tape.scale(s, -1.0);
        let q = tape.sigmoid(neg);
        let lq = tape.log_clamped(q, LOG_FLOOR);
        let sq = tape.reduce_sum(lq);
        total = tape.add(total, sq)?;
    }
    Ok(tape.scale(total, -1.0 / (positives.len() + negatives.len()) as f64))
}

/// For each positive `(i, j)`, `k` pairs `(i, j')` with `j'` drawn uniformly
/// from the graph's entities, `j' != i` and `(i, j')` not an EEL.
pub fn sample_negatives<R: Rng + ?Sized>(
    g: &HeteroGraph,
    positives: &[(NodeId, NodeId)],
    k: usize,
    rng: &mut R,
) -> Result<Vec<(NodeId, NodeId)>, TrainError> {
    let pairs: Vec<(usize, usize)> = positives.iter().map(|&(a, b)| (a.idx(), b.idx())).collect();
    let out = sample_in_pool(g, g.entity_count(), &pairs, k, rng, 1000)?;
    Ok(out
        .into_iter()
        .map(|(a, b)| (NodeId::from_idx(a), NodeId::from_idx(b)))
        .collect())
}

/// Negatives drawn from entities `0..pool`.
fn sample_in_pool<R: Rng + ?Sized>(
    g: &HeteroGraph,
    pool: usize,
    positives: &[(usize, usize)],
    k: usize,
    rng: &mut R,
    max_retries: usize,
) -> Result<Vec<(usize, usize)>, TrainError> {
    let eel = g.relations().eel();
    let excluded = |i: usize| {
        g.adjacency()[i]
            .iter()
            .filter(|nb| nb.relation == eel && nb.node.idx() < pool)
            .map(|nb| nb.node)
            .collect::<std::collections::HashSet<_>>()
            .len()
    };
    let mut checked = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(positives.len() * k);
    for &(i, _) in positives {
        if checked.insert(i) && pool <= 1 + excluded(i) {
            return Err(TrainError::NoNegatives(NodeId::from_idx(i)));
        }
        for _ in 0..k {
            let mut found = None;
            for _ in 0..max_retries.max(1) {
                let j = rng.gen_range(0..pool);
                if j != i && !g.has_eel(NodeId::from_idx(i), NodeId::from_idx(j)) {
                    found = Some(j);
                    break;
                }
            }
            match found {
                Some(j) => out.push((i, j)),
                None => {
                    return Err(TrainError::NegativesExhausted(
                        NodeId::from_idx(i),
                        max_retries.max(1),
                    ))
                }
            }
        }
    }
    Ok(out)
}

/// One unit of training data: a (sub)graph with its features and the EELs
/// supervised in it.
#[derive(Clone, Debug)]
pub struct TrainShard {
    pub id: usize,
    pub graph: HeteroGraph,
    pub index: MessageIndex,
    pub features: Matrix,
    /// Local EEL pairs, graph order.
    pub positives: Vec<(usize, usize)>,
    /// Negatives are drawn from local entities `0..pool`.
    pub pool: usize,
}

pub enum TrainInput<'a> {
    Graph(&'a HeteroGraph),
    Plan(&'a HeteroGraph, &'a HaspPlan),
}

impl TrainInput<'_> {
    pub fn graph(&self) -> &HeteroGraph {
        match self {
            TrainInput::Graph(g) | TrainInput::Plan(g, _) => g,
        }
    }
}

pub fn build_shards(
    input: &TrainInput<'_>,
    features: &Matrix,
    model: &RGnnModel,
) -> Result<Vec<TrainShard>, TrainError> {
    let g = input.graph();
    if features.rows() != g.node_count() {
        return Err(RgnnError::FeatureRows {
            expected: g.node_count(),
            got: features.rows(),
        }
        .into());
    }
    match input {
        TrainInput::Graph(g) => Ok(vec![TrainShard {
            id: 0,
            graph: (*g).clone(),
            index: model.message_index(g)?,
            features: features.clone(),
            positives: g.eel_edges().iter().map(|&(a, b)| (a.idx(), b.idx())).collect(),
            pool: g.entity_count(),
        }]),
        TrainInput::Plan(g, plan) => (0..plan.partition_count)
            .map(|i| {
                let sg = plan.materialize(g, i)?;
                let rows: Vec<usize> = sg.global.iter().map(|v| v.idx()).collect();
                Ok(TrainShard {
                    id: i,
                    index: model.message_index(&sg.graph)?,
                    features: features.select_rows(&rows),
                    positives: sg
                        .graph
                        .eel_edges()
                        .iter()
                        .map(|&(a, b)| (a.idx(), b.idx()))
                        .collect(),
                    pool: sg.owned,
                    graph: sg.graph,
                })
            })
            .collect(),
    }
}

/// Loss and parameter gradients (in [`RGnnModel::params`] order) for one
/// batch on one shard.
pub fn shard_gradients(
    model: &RGnnModel,
    shard: &TrainShard,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<(f64, Vec<Matrix>), TrainError> {
    if positives.is_empty() {
        return Err(TrainError::NoPositives);
    }
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let x = tape.leaf(shard.features.clone());
    let h = model.encode_on_tape(&mut tape, &vars, x, &shard.index)?;
    let loss = loss_on_tape(&mut tape, h, positives, negatives)?;
    let value = tape.scalar(loss);
    let mut grads = tape.backward(loss)?;
    Ok((value, vars.all().into_iter().map(|v| grads.take(v)).collect()))
}

/// Loss over every positive of every shard with fixed negatives; used to
/// compare models before and after training.
pub fn evaluate_loss(model: &RGnnModel, shards: &[TrainShard], cfg: &TrainConfig) -> Result<f64, TrainError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in shards.iter().filter(|s| !s.positives.is_empty()) {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[u64::MAX - 2, s.id as u64]));
        let neg = sample_in_pool(
            &s.graph,
            s.pool,
            &s.positives,
            cfg.negatives_per_positive,
            &mut rng,
            cfg.max_negative_retries,
        )?;
        let h = model.encode_with_index(&s.index, &s.features)?;
        let n = s.positives.len() + neg.len();
        total += link_prediction_loss(&h, &s.positives, &neg)? * n as f64;
        count += n;
    }
    if count == 0 {
        return Err(TrainError::NoPositives);
    }
    Ok(total / count as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub cut_eel_count: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: RGnnModel,
    /// Full-graph embeddings for every node of the input graph.
    pub node_embeddings: Matrix,
    pub log: Vec<EpochRecord>,
    pub updates_per_epoch: Vec<usize>,
    pub cut_eel_count: usize,
}

fn validate(cfg: &TrainConfig) -> Result<(), TrainError> {
    let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
    if cfg.negatives_per_positive == 0 {
        return bad("negatives_per_positive must be at least 1");
    }
    if cfg.batch_size == 0 {
        return bad("batch_size must be positive");
    }
    if cfg.parallel_workers == 0 {
        return bad("parallel_workers must be at least 1");
    }
    if !(cfg.lr > 0.0) || !cfg.lr.is_finite() {
        return bad("lr must be positive");
    }
    Ok(())
}

struct Task<'a> {
    shard: &'a TrainShard,
    positives: &'a [(usize, usize)],
    seed: u64,
}

fn run_task(model: &RGnnModel, t: &Task<'_>, cfg: &TrainConfig) -> Result<(f64, Vec<Matrix>), TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
    let neg = sample_in_pool(
        &t.shard.graph,
        t.shard.pool,
        t.positives,
        cfg.negatives_per_positive,
        &mut rng,
        cfg.max_negative_retries,
    )?;
    shard_gradients(model, t.shard, t.positives, &neg)
}

fn run_round(
    model: &RGnnModel,
    tasks: &[Task<'_>],
    cfg: &TrainConfig,
) -> Result<Vec<(f64, Vec<Matrix>)>, TrainError> {
    let workers = cfg.parallel_workers.min(tasks.len()).max(1);
    if workers == 1 {
        return tasks.iter().map(|t| run_task(model, t, cfg)).collect();
    }
    let mut slots: Vec<Option<Result<(f64, Vec<Matrix>), TrainError>>> = Vec::new();
    slots.resize_with(tasks.len(), || None);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..tasks.len())
                        .step_by(workers)
                        .map(|i| (i, run_task(model, &tasks[i], cfg)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker thread panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every task ran")).collect()
}

/// Trains `model` on the graph or on the subgraphs of a plan and returns the
/// trained model with full-graph embeddings.
pub fn train(
    input: TrainInput<'_>,
    features: &Matrix,
    mut model: RGnnModel,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    validate(cfg)?;
    let shards = build_shards(&input, features, &model)?;
    for s in shards.iter().filter(|s| s.positives.is_empty()) {
        log::warn!("subgraph {} has no EELs; skipped", s.id);
    }
    if shards.iter().all(|s| s.positives.is_empty()) {
        return Err(TrainError::NoPositives);
    }
    let cut = match &input {
        TrainInput::Graph(_) => 0,
        TrainInput::Plan(_, p) => p.cut_eels.len(),
    };
    let per_shard = cfg.batch_size.div_ceil(shards.len());
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, &model.param_shapes());
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut updates = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let e = epoch as u64;
        let mut schedule: Vec<usize> = (0..shards.len()).collect();
        schedule.shuffle(&mut ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[e, u64::MAX - 1])));
        let orders: Vec<Vec<(usize, usize)>> = shards
            .iter()
            .map(|s| {
                let mut p = s.positives.clone();
                p.shuffle(&mut ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[e, s.id as u64, u64::MAX])));
                p
            })
            .collect();
        let rounds = orders.iter().map(|p| p.len().div_ceil(per_shard)).max().unwrap_or(0);
        let (mut loss_sum, mut loss_count, mut steps) = (0.0, 0usize, 0usize);
        for round in 0..rounds {
            let tasks: Vec<Task<'_>> = schedule
                .iter()
                .filter_map(|&s| {
                    let batch = orders[s].chunks(per_shard).nth(round)?;
                    Some(Task {
                        shard: &shards[s],
                        positives: batch,
                        seed: stream_seed(cfg.seed, &[e, s as u64, round as u64]),
                    })
                })
                .collect();
            let results = run_round(&model, &tasks, cfg)?;
            let scale = 1.0 / results.len() as f64;
            let mut avg: Option<Vec<Matrix>> = None;
            for (loss, grads) in results {
                loss_sum += loss;
                loss_count += 1;
                match &mut avg {
                    None => avg = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.add_assign(g)?;
                        }
                    }
                }
            }
            let mut avg = avg.expect("round has tasks");
            if scale != 1.0 {
                avg.iter_mut().for_each(|g| g.scale_in_place(scale));
            }
            opt.step(&mut model.params_mut(), &avg)?;
            steps += 1;
        }
        let loss = loss_sum / loss_count.max(1) as f64;
        log::info!("epoch {epoch}: loss {loss:.6} ({steps} updates)");
        log.push(EpochRecord {
            epoch,
            loss,
            cut_eel_count: cut,
            seconds: started.elapsed().as_secs_f64(),
        });
        updates.push(steps);
    }
    let node_embeddings = model.encode(input.graph(), features)?;
    Ok(TrainOutcome {
        model,
        node_embeddings,
        log,
        updates_per_epoch: updates,
        cut_eel_count: cut,
    })
}

/// Frozen-weight encode; returns entity rows only.
pub fn infer(model: &RGnnModel, g: &HeteroGraph, features: &Matrix) -> Result<Matrix, TrainError> {
    let all = model.encode(g, features)?;
    Ok(entity_rows(&all, g.entity_count()))
}

pub fn entity_rows(m: &Matrix, entity_count: usize) -> Matrix {
    let rows: Vec<usize> = (0..entity_count).collect();
    m.select_rows(&rows)
}

pub fn write_log(path: &Path, log: &[EpochRecord]) -> Result<(), TrainError> {
    let io = |e: std::io::Error| TrainError::Format(format!("{}: {e}", path.display()));
    let mut f = fs::File::create(path).map_err(io)?;
    for r in log {
        writeln!(f, "{}", serde_json::to_string(r).expect("record serializes")).map_err(io)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub graph_hash: String,
    pub model_hash: String,
    /// Hash of the train/holdout split, empty when training saw every entity.
    pub split_hash: String,
}

/// Final entity embeddings keyed by external id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingArtifact {
    pub embeddings: Matrix,
    pub external_ids: Vec<String>,
    pub provenance: Provenance,
}

const ARTIFACT_FORMAT: &str = "semgnn-embeddings/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArtifactMeta {
    format: String,
    rows: usize,
    cols: usize,
    external_ids: Vec<String>,
    provenance: Provenance,
}

impl EmbeddingArtifact {
    pub fn new(g: &HeteroGraph, embeddings: Matrix, provenance: Provenance) -> Result<Self, TrainError> {
        if embeddings.rows() != g.entity_count() {
            return Err(TrainError::Format(format!(
                "{} embedding rows for {} entities",
                embeddings.rows(),
                g.entity_count()
            )));
        }
        if !embeddings.is_finite() {
            return Err(NumError::NonFinite("embedding".into()).into());
        }
        Ok(Self {
            embeddings,
            external_ids: g.external_ids()[..g.entity_count()].to_vec(),
            provenance,
        })
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), TrainError> {
        embfile::write_matrix(&dir.join(format!("{stem}.bin")), &self.embeddings)?;
        let meta = ArtifactMeta {
            format: ARTIFACT_FORMAT.into(),
            rows: self.embeddings.rows(),
            cols: self.embeddings.cols(),
            external_ids: self.external_ids.clone(),
            provenance: self.provenance.clone(),
        };
        let path = dir.join(format!("{stem}.meta.json"));
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        fs::write(&path, text).map_err(|e| TrainError::Format(format!("{}: {e}", path.display())))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self, TrainError> {
        let path = dir.join(format!("{stem}.meta.json"));
        let text = fs::read_to_string(&path)
            .map_err(|e| TrainError::Format(format!("{}: {e}", path.display())))?;
        let meta: ArtifactMeta = serde_json::from_str(&text)
            .map_err(|e| TrainError::Format(format!("{}: {e}", path.display())))?;
        if meta.format != ARTIFACT_FORMAT {
            return Err(TrainError::Format(format!("unsupported format {}", meta.format)));
        }
        let embeddings = embfile::read_matrix(&dir.join(format!("{stem}.bin")))?;
        if embeddings.shape() != (meta.rows, meta.cols) || meta.external_ids.len() != meta.rows {
            return Err(TrainError::Format("embedding shape disagrees with metadata".into()));
        }
        Ok(Self {
            embeddings,
            external_ids: meta.external_ids,
            provenance: meta.provenance,
        })
    }
}

/// BCE computed directly from probabilities; kept for comparisons with the
/// tape version.
pub fn bce_reference(h: &Matrix, positives: &[(usize, usize)], negatives: &[(usize, usize)]) -> f64 {
    let d = |i: usize, j: usize| crate::numcore::dot(h.row(i), h.row(j));
    let lp: f64 = positives.iter().map(|&(i, j)| sigmoid(d(i, j)).max(LOG_FLOOR).ln()).sum();
    let ln: f64 = negatives
        .iter()
        .map(|&(i, j)| (1.0 - sigmoid(d(i, j))).max(LOG_FLOOR).ln())
        .sum();
    -(lp + ln) / (positives.len() + negatives.len()) as f64
}
