//! TransE pretraining over semantic triples.
//!
//! Scores are plausibilities, `f(h, r, t) = -‖h + r - t‖₂`, so the margin loss
//! `[f(neg) - f(pos) + γ]_+` pushes true triples above corrupted ones. Rows of
//! the node table are pulled back into the unit ball after every step.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embfile::{self, EmbFileError};
use crate::kgraph::{HeteroGraph, NodeId, RelationId, SemanticEdge};
use crate::numcore::{Matrix, NumError, Optimizer, OptimizerKind, Tape};
use crate::seeds::stream_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KgeConfig {
    pub dim: usize,
    pub margin: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub max_corruption_retries: usize,
    /// Fraction of triples withheld for the ranking check; 0 trains on all.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for KgeConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            margin: 1.0,
            lr: 0.01,
            optimizer: OptimizerKind::Adam,
            epochs: 30,
            batch_size: 1024,
            negatives_per_positive: 1,
            max_corruption_retries: 100,
            holdout_fraction: 0.0,
            seed: 11,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KgeError {
    #[error("invalid KGE config: {0}")]
    InvalidConfig(String),
    #[error("graph has no semantic triples")]
    NoTriples,
    #[error("no valid corruption of ({0}, {1}, {2}) after {3} attempts")]
    CorruptionExhausted(NodeId, u16, NodeId, usize),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    File(#[from] EmbFileError),
    #[error("{0}")]
    Meta(String),
}

/// A semantic triple `(entity, relation, concept)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: NodeId,
    pub relation: RelationId,
    pub tail: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorruptedSide {
    Head,
    Tail,
}

pub fn transe_score(h: &[f64], r: &[f64], t: &[f64]) -> Result<f64, KgeError> {
    if h.len() != r.len() {
        return Err(KgeError::Dimension(h.len(), r.len()));
    }
    if h.len() != t.len() {
        return Err(KgeError::Dimension(h.len(), t.len()));
    }
    let sq: f64 = h
        .iter()
        .zip(r)
        .zip(t)
        .map(|((a, b), c)| {
            let x = a + b - c;
            x * x
        })
        .sum();
    Ok(-sq.sqrt())
}

pub fn graph_triples(g: &HeteroGraph) -> Vec<Triple> {
    g.semantic_edges()
        .iter()
        .map(|e| Triple {
            head: e.entity,
            relation: e.relation,
            tail: e.concept,
        })
        .collect()
}

/// Corruption pools for a graph. Heads are replaced by entities and tails by
/// concepts, so every corruption is still a well-typed triple.
#[derive(Clone, Debug)]
pub struct Corrupter {
    entity_count: usize,
    node_count: usize,
    known: HashSet<Triple>,
    max_retries: usize,
}

impl Corrupter {
    pub fn new(g: &HeteroGraph, max_retries: usize) -> Self {
        Self {
            entity_count: g.entity_count(),
            node_count: g.node_count(),
            known: graph_triples(g).into_iter().collect(),
            max_retries,
        }
    }

    pub fn known(&self) -> &HashSet<Triple> {
        &self.known
    }

    pub fn corrupt<R: Rng + ?Sized>(
        &self,
        t: Triple,
        rng: &mut R,
    ) -> Result<(Triple, CorruptedSide), KgeError> {
        // The side is drawn once; rejections resample within it so filtering
        // does not skew the head/tail split.
        let side = if rng.gen_bool(0.5) {
            CorruptedSide::Head
        } else {
            CorruptedSide::Tail
        };
        for _ in 0..self.max_retries.max(1) {
            let cand = match side {
                CorruptedSide::Head => Triple {
                    head: NodeId::from_idx(rng.gen_range(0..self.entity_count)),
                    ..t
                },
                CorruptedSide::Tail => Triple {
                    tail: NodeId::from_idx(rng.gen_range(self.entity_count..self.node_count)),
                    ..t
                },
            };
            if !self.known.contains(&cand) {
                return Ok((cand, side));
            }
        }
        Err(KgeError::CorruptionExhausted(
            t.head,
            t.relation.0,
            t.tail,
            self.max_retries.max(1),
        ))
    }
}

pub fn corrupt_triple<R: Rng + ?Sized>(
    t: Triple,
    rng: &mut R,
    g: &HeteroGraph,
    max_retries: usize,
) -> Result<Triple, KgeError> {
    Corrupter::new(g, max_retries).corrupt(t, rng).map(|(c, _)| c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KgeModel {
    /// One row per graph node (entities then concepts).
    pub node_embeddings: Matrix,
    /// One row per semantic relation, indexed by `RelationTable::semantic_index`.
    pub relation_embeddings: Matrix,
    pub relation_names: Vec<String>,
    pub margin: f64,
}

impl KgeModel {
    pub fn dim(&self) -> usize {
        self.node_embeddings.cols()
    }

    pub fn score(&self, t: Triple) -> f64 {
        let r = t.relation.idx() - 1;
        transe_score(
            self.node_embeddings.row(t.head.idx()),
            self.relation_embeddings.row(r),
            self.node_embeddings.row(t.tail.idx()),
        )
        .expect("rows share the model dimension")
    }

    /// Hinge for one (positive, negative) pair.
    pub fn pair_loss(&self, pos: Triple, neg: Triple) -> f64 {
        (self.score(neg) - self.score(pos) + self.margin).max(0.0)
    }

    pub fn save(&self, dir: &Path, provenance: &serde_json::Value) -> Result<(), KgeError> {
        embfile::write_matrix(&dir.join("kge_embeddings.bin"), &self.node_embeddings)?;
        embfile::write_matrix(&dir.join("kge_relations.bin"), &self.relation_embeddings)?;
        let meta = KgeMeta {
            format: KGE_FORMAT.to_string(),
            rows: self.node_embeddings.rows(),
            dim: self.dim(),
            margin: self.margin,
            relation_names: self.relation_names.clone(),
            provenance: provenance.clone(),
        };
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        let path = dir.join("kge_embeddings.meta.json");
        fs::write(&path, text).map_err(|e| KgeError::Meta(format!("{}: {e}", path.display())))
    }

    pub fn load(dir: &Path) -> Result<(Self, serde_json::Value), KgeError> {
        let path = dir.join("kge_embeddings.meta.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| KgeError::Meta(format!("{}: {e}", path.display())))?;
        let meta: KgeMeta = serde_json::from_str(&text)
            .map_err(|e| KgeError::Meta(format!("{}: {e}", path.display())))?;
        if meta.format != KGE_FORMAT {
            return Err(KgeError::Meta(format!("unsupported format {}", meta.format)));
        }
        let node_embeddings = embfile::read_matrix(&dir.join("kge_embeddings.bin"))?;
        let relation_embeddings = embfile::read_matrix(&dir.join("kge_relations.bin"))?;
        if node_embeddings.shape() != (meta.rows, meta.dim)
            || relation_embeddings.shape() != (meta.relation_names.len(), meta.dim)
        {
            return Err(KgeError::Meta("embedding shapes disagree with metadata".into()));
        }
        Ok((
            Self {
                node_embeddings,
                relation_embeddings,
                relation_names: meta.relation_names,
                margin: meta.margin,
            },
            meta.provenance,
        ))
    }
}

const KGE_FORMAT: &str = "semgnn-kge/1";

#[derive(Serialize, Deserialize)]
struct KgeMeta {
    format: String,
    rows: usize,
    dim: usize,
    margin: f64,
    relation_names: Vec<String>,
    provenance: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub model: KgeModel,
    /// Mean hinge per positive, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean hinge of the initial model on the first epoch's pairs.
    pub initial_loss: f64,
    pub heldout: Vec<Triple>,
}

fn unit_rows<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Matrix {
    let bound = 6.0 / (dim as f64).sqrt();
    let mut m = Matrix::uniform(rows, dim, bound, rng);
    for r in 0..rows {
        let row = m.row_mut(r);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    m
}

fn validate(cfg: &KgeConfig) -> Result<(), KgeError> {
    let bad = |m: &str| Err(KgeError::InvalidConfig(m.to_string()));
    if cfg.dim == 0 {
        return bad("dim must be positive");
    }
    if !(cfg.margin > 0.0) || !cfg.margin.is_finite() {
        return bad("margin must be a positive finite number");
    }
    if !(cfg.lr > 0.0) {
        return bad("lr must be positive");
    }
    if cfg.batch_size == 0 || cfg.negatives_per_positive == 0 {
        return bad("batch_size and negatives_per_positive must be positive");
    }
    if !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return bad("holdout_fraction must be in [0, 1)");
    }
    Ok(())
}

/// Trains TransE on the graph's semantic triples.
pub fn pretrain(g: &HeteroGraph, cfg: &KgeConfig) -> Result<PretrainOutcome, KgeError> {
    validate(cfg)?;
    let mut triples = graph_triples(g);
    if triples.is_empty() {
        return Err(KgeError::NoTriples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let heldout = if cfg.holdout_fraction > 0.0 {
        triples.shuffle(&mut rng);
        let n = ((triples.len() as f64) * cfg.holdout_fraction).round() as usize;
        let n = n.min(triples.len() - 1);
        let mut h = triples.split_off(triples.len() - n);
        h.sort_unstable();
        triples.sort_unstable();
        h
    } else {
        Vec::new()
    };
    // Held-out triples stay in the filter so they are never used as negatives.
    let corrupter = Corrupter::new(g, cfg.max_corruption_retries);

    let mut nodes = unit_rows(g.node_count(), cfg.dim, &mut rng);
    let mut rels = unit_rows(g.relations().semantic_count(), cfg.dim, &mut rng);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, &[nodes.shape(), rels.shape()]);

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut initial_loss = f64::NAN;
    let mut order: Vec<usize> = (0..triples.len()).collect();
    for epoch in 0..cfg.epochs.max(1) {
        let mut erng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[epoch as u64]));
        order.shuffle(&mut erng);
        let mut pos = Vec::with_capacity(order.len() * cfg.negatives_per_positive);
        let mut neg = Vec::with_capacity(pos.capacity());
        for &i in &order {
            for _ in 0..cfg.negatives_per_positive {
                pos.push(triples[i]);
                neg.push(corrupter.corrupt(triples[i], &mut erng)?.0);
            }
        }
        if epoch == 0 {
            initial_loss = mean_pair_loss(&nodes, &rels, cfg.margin, &pos, &neg);
            if cfg.epochs == 0 {
                break;
            }
        }
        let mut total = 0.0;
        let chunk = cfg.batch_size * cfg.negatives_per_positive;
        for (p, n) in pos.chunks(chunk).zip(neg.chunks(chunk)) {
            let (loss, gn, gr) = batch_gradients(&nodes, &rels, cfg.margin, p, n)?;
            total += loss;
            opt.step(&mut [&mut nodes, &mut rels], &[gn, gr])?;
            nodes.clamp_row_norms(1.0);
        }
        let mean = total / pos.len() as f64;
        log::debug!("kge epoch {epoch}: mean hinge {mean:.6}");
        epoch_losses.push(mean);
    }

    let names = g
        .relations()
        .iter()
        .skip(1)
        .map(|t| t.name.clone())
        .collect();
    Ok(PretrainOutcome {
        model: KgeModel {
            node_embeddings: nodes,
            relation_embeddings: rels,
            relation_names: names,
            margin: cfg.margin,
        },
        epoch_losses,
        initial_loss,
        heldout,
    })
}

fn mean_pair_loss(nodes: &Matrix, rels: &Matrix, margin: f64, pos: &[Triple], neg: &[Triple]) -> f64 {
    let dist = |t: &Triple| {
        -transe_score(
            nodes.row(t.head.idx()),
            rels.row(t.relation.idx() - 1),
            nodes.row(t.tail.idx()),
        )
        .expect("shared dimension")
    };
    let s: f64 = pos
        .iter()
        .zip(neg)
        .map(|(p, n)| (dist(p) - dist(n) + margin).max(0.0))
        .sum();
    s / pos.len().max(1) as f64
}

/// Summed hinge over the batch and its gradients w.r.t. both tables.
fn batch_gradients(
    nodes: &Matrix,
    rels: &Matrix,
    margin: f64,
    pos: &[Triple],
    neg: &[Triple],
) -> Result<(f64, Matrix, Matrix), KgeError> {
    let mut tape = Tape::new();
    let e = tape.leaf(nodes.clone());
    let r = tape.leaf(rels.clone());
    let dist = |tape: &mut Tape, ts: &[Triple]| -> Result<_, NumError> {
        let h: Arc<[usize]> = ts.iter().map(|t| t.head.idx()).collect();
        let rr: Arc<[usize]> = ts.iter().map(|t| t.relation.idx() - 1).collect();
        let t: Arc<[usize]> = ts.iter().map(|t| t.tail.idx()).collect();
        let hv = tape.row_gather(e, h)?;
        let rv = tape.row_gather(r, rr)?;
        let tv = tape.row_gather(e, t)?;
        let s = tape.add(hv, rv)?;
        let d = tape.sub(s, tv)?;
        Ok(tape.l2_norm_rows(d))
    };
    let dp = dist(&mut tape, pos)?;
    let dn = dist(&mut tape, neg)?;
    // f(neg) - f(pos) = d(pos) - d(neg)
    let diff = tape.sub(dp, dn)?;
    let h = tape.hinge(diff, margin);
    let loss = tape.reduce_sum(h);
    let value = tape.scalar(loss);
    let mut grads = tape.backward(loss)?;
    Ok((value, grads.take(e), grads.take(r)))
}

/// Filtered tail-ranking MRR over all concepts, with the analytic
/// random-ranking MRR for the same candidate-set sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankingResult {
    pub mrr: f64,
    pub random_mrr: f64,
    pub count: usize,
}

pub fn filtered_tail_mrr(
    model: &KgeModel,
    g: &HeteroGraph,
    test: &[Triple],
    known: &HashSet<Triple>,
) -> RankingResult {
    use rayon::prelude::*;
    let concepts: Vec<NodeId> = g.concepts().collect();
    let per: Vec<(f64, f64)> = test
        .par_iter()
        .map(|&t| {
            let target = model.score(t);
            let mut better = 0usize;
            let mut candidates = 0usize;
            for &c in &concepts {
                let cand = Triple { tail: c, ..t };
                if c != t.tail && known.contains(&cand) {
                    continue;
                }
                candidates += 1;
                if c != t.tail && model.score(cand) > target {
                    better += 1;
                }
            }
            let harmonic: f64 = (1..=candidates).map(|k| 1.0 / k as f64).sum();
            (1.0 / (better + 1) as f64, harmonic / candidates as f64)
        })
        .collect();
    let n = per.len().max(1) as f64;
    RankingResult {
        mrr: per.iter().map(|p| p.0).sum::<f64>() / n,
        random_mrr: per.iter().map(|p| p.1).sum::<f64>() / n,
        count: per.len(),
    }
}

/// How entity rows of the GNN input are initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityInit {
    Kge,
    Random,
}

/// Node feature matrix for the GNN. Concept rows come from the KGE table;
/// entity rows from KGE or a seeded random unit vector. Without a KGE model
/// every row is random.
pub fn input_features(
    g: &HeteroGraph,
    kge: Option<&KgeModel>,
    init: EntityInit,
    dim: usize,
    seed: u64,
) -> Result<Matrix, KgeError> {
    let dim = kge.map_or(dim, KgeModel::dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = unit_rows(g.node_count(), dim, &mut rng);
    if let Some(m) = kge {
        if m.node_embeddings.rows() != g.node_count() {
            return Err(KgeError::Dimension(m.node_embeddings.rows(), g.node_count()));
        }
        let start = match init {
            EntityInit::Kge => 0,
            EntityInit::Random => g.entity_count(),
        };
        for v in start..g.node_count() {
            out.row_mut(v).copy_from_slice(m.node_embeddings.row(v));
        }
    } else if init == EntityInit::Kge {
        return Err(KgeError::InvalidConfig(
            "KGE entity init requested without a KGE model".into(),
        ));
    }
    Ok(out)
}

/// Frozen-model embedding for an entity the KGE never saw: the least-squares
/// solution of `h + r = t` over its semantic triples in `g`, i.e. the mean of
/// `t - r`, clamped to the unit ball like trained rows. `None` when the
/// entity has no semantic edges.
pub fn fold_in_entity(model: &KgeModel, g: &HeteroGraph, entity: NodeId) -> Option<Vec<f64>> {
    let edges: Vec<&SemanticEdge> = g.semantic_edges().iter().filter(|e| e.entity == entity).collect();
    if edges.is_empty() {
        return None;
    }
    let mut acc = vec![0.0; model.dim()];
    for e in &edges {
        let r = model.relation_embeddings.row(e.relation.idx() - 1);
        let t = model.node_embeddings.row(e.concept.idx());
        for ((a, &tv), &rv) in acc.iter_mut().zip(t).zip(r) {
            *a += tv - rv;
        }
    }
    let n = edges.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 {
        acc.iter_mut().for_each(|a| *a /= norm);
    }
    Some(acc)
}

/// Replaces the feature rows of `entities` with their fold-in embeddings
/// over `g`; entities without semantic edges keep their rows.
pub fn fold_in_features(model: &KgeModel, g: &HeteroGraph, entities: &[NodeId], features: &mut Matrix) {
    for &v in entities {
        if let Some(row) = fold_in_entity(model, g, v) {
            features.row_mut(v.idx()).copy_from_slice(&row);
        }
    }
}
