//! Relation-aware attention GNN.
//!
//! Per layer, a node `t` receives one message per in-neighbor `c` over
//! relation `r`:
//!
//! ```text
//! m     = W_v [h_c ; r]
//! score = (W_k m)ᵀ (W_q h_t) / √d · β_r
//! α     = softmax of score over all in-neighbors of t
//! h_t'  = h_t + σ(Σ α m)
//! ```
//!
//! Relation embeddings and β are shared across layers. Nodes without
//! in-neighbors skip attention and keep `h_t` unchanged.
//!
//! The tape form avoids materializing one `d`-vector per edge for `W_k m`:
//! since `m = W_v,h h_c + W_v,r r`, keys split into a per-node and a
//! per-relation table that are gathered per edge.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kgraph::{HeteroGraph, Orientation};
use crate::numcore::{dot, Matrix, NumError, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Relu,
    Tanh,
    Identity,
    /// σ ≡ 0; layers reduce to the residual path. Used by tests.
    Zero,
}

impl Activation {
    pub fn apply(self, x: f64, slope: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
            Activation::Zero => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RGnnConfig {
    pub layers: usize,
    pub dim: usize,
    pub activation: Activation,
    pub leaky_slope: f64,
    /// Give concept→entity traversals their own relation embedding and β.
    pub separate_inverse_relations: bool,
    pub seed: u64,
}

impl Default for RGnnConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            dim: 64,
            activation: Activation::LeakyRelu,
            leaky_slope: 0.01,
            separate_inverse_relations: false,
            seed: 13,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RgnnError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("feature dimension {got} does not match the input projection ({expected})")]
    FeatureDim { expected: usize, got: usize },
    #[error("feature rows {got} != node count {expected}")]
    FeatureRows { expected: usize, got: usize },
    #[error("graph relations {graph:?} differ from the model's {model:?}")]
    RelationMismatch {
        model: Vec<String>,
        graph: Vec<String>,
    },
    #[error("attention over an empty neighborhood")]
    EmptyNeighborhood,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    /// `d x 2d`, applied to `[h ; r]`.
    pub value: Matrix,
    pub key: Matrix,
    pub query: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RGnnModel {
    pub config: RGnnConfig,
    /// `f x d`.
    pub input_proj: Matrix,
    /// One row per relation slot.
    pub relation_emb: Matrix,
    /// `slots x 1`.
    pub beta: Matrix,
    pub layers: Vec<LayerWeights>,
    pub relation_names: Vec<String>,
}

/// Edge arrays for message passing, grouped by target.
#[derive(Clone, Debug)]
pub struct MessageIndex {
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    pub slot: Arc<[usize]>,
    /// Compact target ids (`0..targets_with_edges`) for the softmax.
    pub segment: Arc<[usize]>,
    pub node_count: usize,
}

impl MessageIndex {
    pub fn new(g: &HeteroGraph, separate_inverse: bool) -> Self {
        let rel_count = g.relations().len();
        let (mut src, mut dst, mut slot, mut segment) = (vec![], vec![], vec![], vec![]);
        let mut seg = 0;
        for (v, adj) in g.adjacency().iter().enumerate() {
            if adj.is_empty() {
                continue;
            }
            for nb in adj {
                src.push(nb.node.idx());
                dst.push(v);
                let inverse = separate_inverse && nb.orientation == Orientation::Inverse;
                slot.push(nb.relation.idx() + if inverse { rel_count } else { 0 });
                segment.push(seg);
            }
            seg += 1;
        }
        Self {
            src: src.into(),
            dst: dst.into(),
            slot: slot.into(),
            segment: segment.into(),
            node_count: g.node_count(),
        }
    }

    pub fn edge_count(&self) -> usize {
        self.src.len()
    }
}

/// Parameter handles on a tape, in [`RGnnModel::params`] order.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub input_proj: Var,
    pub relation_emb: Var,
    pub beta: Var,
    pub layers: Vec<[Var; 3]>,
}

impl ModelVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v = vec![self.input_proj, self.relation_emb, self.beta];
        for l in &self.layers {
            v.extend_from_slice(l);
        }
        v
    }
}

impl RGnnModel {
    pub fn new(
        config: RGnnConfig,
        feature_dim: usize,
        relation_names: Vec<String>,
    ) -> Result<Self, RgnnError> {
        if config.dim == 0 || feature_dim == 0 {
            return Err(RgnnError::InvalidConfig("dimensions must be positive".into()));
        }
        if !config.leaky_slope.is_finite() {
            return Err(RgnnError::InvalidConfig("leaky_slope must be finite".into()));
        }
        let d = config.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let slots = relation_names.len() * if config.separate_inverse_relations { 2 } else { 1 };
        let input_proj = Matrix::glorot(feature_dim, d, &mut rng);
        let relation_emb = Matrix::glorot(slots, d, &mut rng);
        let layers = (0..config.layers)
            .map(|_| LayerWeights {
                value: Matrix::glorot(d, 2 * d, &mut rng),
                key: Matrix::glorot(d, d, &mut rng),
                query: Matrix::glorot(d, d, &mut rng),
            })
            .collect();
        Ok(Self {
            config,
            input_proj,
            relation_emb,
            beta: Matrix::filled(slots, 1, 1.0),
            layers,
            relation_names,
        })
    }

    pub fn for_graph(config: RGnnConfig, feature_dim: usize, g: &HeteroGraph) -> Result<Self, RgnnError> {
        Self::new(config, feature_dim, g.relations().names())
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn feature_dim(&self) -> usize {
        self.input_proj.rows()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut v = vec![&self.input_proj, &self.relation_emb, &self.beta];
        for l in &self.layers {
            v.extend([&l.value, &l.key, &l.query]);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.input_proj, &mut self.relation_emb, &mut self.beta];
        for l in &mut self.layers {
            v.extend([&mut l.value, &mut l.key, &mut l.query]);
        }
        v
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.params().iter().map(|m| m.shape()).collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v = vec!["input_proj".into(), "relation_emb".into(), "beta".into()];
        for i in 0..self.layers.len() {
            for p in ["value", "key", "query"] {
                v.push(format!("layer{i}.{p}"));
            }
        }
        v
    }

    pub fn check_graph(&self, g: &HeteroGraph) -> Result<(), RgnnError> {
        let names = g.relations().names();
        if names != self.relation_names {
            return Err(RgnnError::RelationMismatch {
                model: self.relation_names.clone(),
                graph: names,
            });
        }
        Ok(())
    }

    pub fn message_index(&self, g: &HeteroGraph) -> Result<MessageIndex, RgnnError> {
        self.check_graph(g)?;
        Ok(MessageIndex::new(g, self.config.separate_inverse_relations))
    }

    /// Records every parameter as a leaf.
    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            input_proj: tape.leaf(self.input_proj.clone()),
            relation_emb: tape.leaf(self.relation_emb.clone()),
            beta: tape.leaf(self.beta.clone()),
            layers: self
                .layers
                .iter()
                .map(|l| {
                    [
                        tape.leaf(l.value.clone()),
                        tape.leaf(l.key.clone()),
                        tape.leaf(l.query.clone()),
                    ]
                })
                .collect(),
        }
    }

    fn activate(&self, tape: &mut Tape, x: Var) -> Var {
        match self.config.activation {
            Activation::LeakyRelu => tape.leaky_relu(x, self.config.leaky_slope),
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => x,
            Activation::Zero => tape.scale(x, 0.0),
        }
    }

    /// One layer on the tape.
    pub fn layer_on_tape(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        layer: usize,
        h: Var,
        index: &MessageIndex,
    ) -> Result<Var, RgnnError> {
        if tape.shape(h) != (index.node_count, self.dim()) {
            return Err(NumError::Shape(format!(
                "layer input {:?}, expected {}x{}",
                tape.shape(h),
                index.node_count,
                self.dim()
            ))
            .into());
        }
        if index.edge_count() == 0 {
            return Ok(h);
        }
        let d = self.dim();
        let [wv, wk, wq] = vars.layers[layer];
        let wv_h = tape.slice_cols(wv, 0, d)?;
        let wv_r = tape.slice_cols(wv, d, 2 * d)?;
        let wv_h_t = tape.transpose(wv_h);
        let wv_r_t = tape.transpose(wv_r);
        let wk_t = tape.transpose(wk);
        let wq_t = tape.transpose(wq);
        // Per-node and per-relation halves of every message.
        let msg_node = tape.matmul(h, wv_h_t)?;
        let msg_rel = tape.matmul(vars.relation_emb, wv_r_t)?;
        let key_node = tape.matmul(msg_node, wk_t)?;
        let key_rel = tape.matmul(msg_rel, wk_t)?;
        let query = tape.matmul(h, wq_t)?;
        let s_node = tape.gather_row_dot(key_node, index.src.clone(), query, index.dst.clone())?;
        let s_rel = tape.gather_row_dot(key_rel, index.slot.clone(), query, index.dst.clone())?;
        let raw = tape.add(s_node, s_rel)?;
        let scaled = tape.scale(raw, 1.0 / (d as f64).sqrt());
        let beta = tape.row_gather(vars.beta, index.slot.clone())?;
        let scores = tape.mul(scaled, beta)?;
        let alpha = tape.segment_softmax(scores, index.segment.clone())?;
        let agg_node = tape.segment_weighted_sum(
            msg_node,
            Some(index.src.clone()),
            alpha,
            index.dst.clone(),
            index.node_count,
        )?;
        let agg_rel = tape.segment_weighted_sum(
            msg_rel,
            Some(index.slot.clone()),
            alpha,
            index.dst.clone(),
            index.node_count,
        )?;
        let agg = tape.add(agg_node, agg_rel)?;
        let act = self.activate(tape, agg);
        Ok(tape.add(h, act)?)
    }

    /// Input projection followed by every layer.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        features: Var,
        index: &MessageIndex,
    ) -> Result<Var, RgnnError> {
        let (rows, cols) = tape.shape(features);
        if cols != self.feature_dim() {
            return Err(RgnnError::FeatureDim {
                expected: self.feature_dim(),
                got: cols,
            });
        }
        if rows != index.node_count {
            return Err(RgnnError::FeatureRows {
                expected: index.node_count,
                got: rows,
            });
        }
        let mut h = tape.matmul(features, vars.input_proj)?;
        for l in 0..self.layers.len() {
            h = self.layer_on_tape(tape, vars, l, h, index)?;
        }
        Ok(h)
    }

    /// Final embeddings for every node of `g`.
    pub fn encode(&self, g: &HeteroGraph, features: &Matrix) -> Result<Matrix, RgnnError> {
        let index = self.message_index(g)?;
        self.encode_with_index(&index, features)
    }

    pub fn encode_with_index(&self, index: &MessageIndex, features: &Matrix) -> Result<Matrix, RgnnError> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let x = tape.leaf(features.clone());
        let h = self.encode_on_tape(&mut tape, &vars, x, index)?;
        Ok(tape.value(h).clone())
    }

    /// Applies layer `layer` to `h`.
    pub fn layer_forward(&self, g: &HeteroGraph, h: &Matrix, layer: usize) -> Result<Matrix, RgnnError> {
        if layer >= self.layers.len() {
            return Err(RgnnError::InvalidConfig(format!("no layer {layer}")));
        }
        let index = self.message_index(g)?;
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let x = tape.leaf(h.clone());
        let out = self.layer_on_tape(&mut tape, &vars, layer, x, &index)?;
        Ok(tape.value(out).clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        let params = self.params();
        buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for m in params {
            buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn meta(&self, provenance: serde_json::Value) -> ModelMeta {
        ModelMeta {
            format: MODEL_FORMAT.to_string(),
            config: self.config.clone(),
            feature_dim: self.feature_dim(),
            relation_names: self.relation_names.clone(),
            param_names: self.param_names(),
            provenance,
        }
    }

    pub fn save(&self, dir: &Path, provenance: serde_json::Value) -> Result<(), RgnnError> {
        let io = |p: &Path, e: std::io::Error| RgnnError::Format(format!("{}: {e}", p.display()));
        let bin = dir.join("rgnn_model.bin");
        fs::write(&bin, self.to_bytes()).map_err(|e| io(&bin, e))?;
        let meta = dir.join("rgnn_model.meta.json");
        let text = serde_json::to_string_pretty(&self.meta(provenance)).expect("meta serializes");
        fs::write(&meta, text).map_err(|e| io(&meta, e))
    }

    pub fn load(dir: &Path) -> Result<(Self, serde_json::Value), RgnnError> {
        let io = |p: &Path, e: std::io::Error| RgnnError::Format(format!("{}: {e}", p.display()));
        let meta_path = dir.join("rgnn_model.meta.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| io(&meta_path, e))?;
        let meta: ModelMeta = serde_json::from_str(&text)
            .map_err(|e| RgnnError::Format(format!("{}: {e}", meta_path.display())))?;
        if meta.format != MODEL_FORMAT {
            return Err(RgnnError::Format(format!("unsupported format {}", meta.format)));
        }
        let bin = dir.join("rgnn_model.bin");
        let bytes = fs::read(&bin).map_err(|e| io(&bin, e))?;
        let mut model = Self::new(meta.config, meta.feature_dim, meta.relation_names)?;
        model.read_params(&bytes)?;
        Ok((model, meta.provenance))
    }

    fn read_params(&mut self, bytes: &[u8]) -> Result<(), RgnnError> {
        let bad = |m: &str| RgnnError::Format(m.to_string());
        if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
            return Err(bad("missing SGNM header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != MODEL_VERSION {
            return Err(bad("unsupported model version"));
        }
        let count = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let mut params = self.params_mut();
        if count != params.len() {
            return Err(bad("parameter count differs from metadata"));
        }
        let mut pos = 12;
        for p in params.iter_mut() {
            if bytes.len() < pos + 12 {
                return Err(bad("truncated"));
            }
            let rows = u64::from_le_bytes(bytes[pos..pos + 8].try_into().expect("8 bytes")) as usize;
            let cols = u32::from_le_bytes(bytes[pos + 8..pos + 12].try_into().expect("4 bytes")) as usize;
            pos += 12;
            if (rows, cols) != p.shape() {
                return Err(bad("parameter shape differs from metadata"));
            }
            let end = pos + rows * cols * 8;
            if bytes.len() < end {
                return Err(bad("truncated"));
            }
            for (dst, c) in p.data_mut().iter_mut().zip(bytes[pos..end].chunks_exact(8)) {
                *dst = f64::from_le_bytes(c.try_into().expect("8 bytes"));
            }
            pos = end;
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(())
    }
}

const MODEL_MAGIC: &[u8; 4] = b"SGNM";
const MODEL_VERSION: u32 = 1;
pub const MODEL_FORMAT: &str = "semgnn-rgnn/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format: String,
    pub config: RGnnConfig,
    pub feature_dim: usize,
    pub relation_names: Vec<String>,
    pub param_names: Vec<String>,
    pub provenance: serde_json::Value,
}

/// `W_v [h_src ; r]`.
pub fn message(h_src: &[f64], r: &[f64], w_value: &Matrix) -> Result<Vec<f64>, RgnnError> {
    if w_value.cols() != h_src.len() + r.len() {
        return Err(NumError::Shape(format!(
            "W_v is {}x{}, input has {} entries",
            w_value.rows(),
            w_value.cols(),
            h_src.len() + r.len()
        ))
        .into());
    }
    let input: Vec<f64> = h_src.iter().chain(r).copied().collect();
    Ok((0..w_value.rows()).map(|i| dot(w_value.row(i), &input)).collect())
}

fn mat_vec(w: &Matrix, x: &[f64]) -> Result<Vec<f64>, RgnnError> {
    if w.cols() != x.len() {
        return Err(NumError::Shape(format!("{}x{} times {}", w.rows(), w.cols(), x.len())).into());
    }
    Ok((0..w.rows()).map(|i| dot(w.row(i), x)).collect())
}

/// Attention weights for per-edge messages. `targets[e]` is the row of `h`
/// that edge `e` points at and `beta[e]` its relation factor; weights are
/// normalized over all edges sharing a target.
pub fn attention_scores(
    messages: &Matrix,
    targets: &[usize],
    h: &Matrix,
    w_key: &Matrix,
    w_query: &Matrix,
    beta: &[f64],
) -> Result<Vec<f64>, RgnnError> {
    let e = messages.rows();
    if e == 0 {
        return Err(RgnnError::EmptyNeighborhood);
    }
    if targets.len() != e || beta.len() != e {
        return Err(NumError::Shape(format!(
            "{e} messages, {} targets, {} betas",
            targets.len(),
            beta.len()
        ))
        .into());
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= h.rows()) {
        return Err(NumError::Index(format!("target {t} of {} rows", h.rows())).into());
    }
    let d = h.cols() as f64;
    let mut scores = Vec::with_capacity(e);
    for i in 0..e {
        let k = mat_vec(w_key, messages.row(i))?;
        let q = mat_vec(w_query, h.row(targets[i]))?;
        scores.push(dot(&k, &q) / d.sqrt() * beta[i]);
    }
    let mut max = vec![f64::NEG_INFINITY; h.rows()];
    for (&t, &s) in targets.iter().zip(&scores) {
        max[t] = max[t].max(s);
    }
    let exp: Vec<f64> = targets.iter().zip(&scores).map(|(&t, &s)| (s - max[t]).exp()).collect();
    let mut sum = vec![0.0; h.rows()];
    for (&t, &x) in targets.iter().zip(&exp) {
        sum[t] += x;
    }
    Ok(targets.iter().zip(&exp).map(|(&t, &x)| x / sum[t]).collect())
}
