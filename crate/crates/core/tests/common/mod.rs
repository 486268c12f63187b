//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semgnn::hasp::{balance_bounds, edge_cut, CsrGraph};
use semgnn::kgraph::{HeteroGraph, NodeId, RelationId, RelationTable, SemanticEdge};
use semgnn::numcore::{Matrix, Tape, Var};
use semgnn::rgnn::{Activation, RGnnModel};
use semgnn::trainer::{build_shards, link_prediction_loss, shard_gradients, TrainInput};

pub const FD_EPS: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a - n| / max(|a|, |n|, 1)`: relative error, absolute below unit scale.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

fn weighted_sum_loss(inputs: &[Matrix], w_seed: u64, build: &dyn Fn(&mut Tape, &[Var]) -> Var) -> (Tape, Vec<Var>, Var) {
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| t.leaf(m.clone())).collect();
    let out = build(&mut t, &vars);
    let (r, c) = t.shape(out);
    let w = t.leaf(Matrix::uniform(r, c, 1.0, &mut rng(w_seed)));
    let p = t.mul(out, w).expect("same shape");
    let loss = t.reduce_sum(p);
    (t, vars, loss)
}

/// Worst relative error between tape gradients and central differences of
/// `sum(W ∘ op(inputs))` for a fixed random `W`.
pub fn fd_check_op(inputs: &[Matrix], w_seed: u64, build: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let (t, vars, loss) = weighted_sum_loss(inputs, w_seed, build);
    let grads = t.backward(loss).expect("backward");
    let f = |xs: &[Matrix]| {
        let (t, _, l) = weighted_sum_loss(xs, w_seed, build);
        t.scalar(l)
    };
    let mut worst = 0.0f64;
    for (k, v) in vars.iter().enumerate() {
        let g = grads.get(*v);
        for i in 0..inputs[k].data().len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_EPS;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_EPS;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(g.data()[i], numeric));
        }
    }
    worst
}

/// Worst relative error of the model's parameter gradients for the
/// link-prediction loss on `g`.
pub fn fd_check_model(
    model: &RGnnModel,
    g: &HeteroGraph,
    features: &Matrix,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> f64 {
    let shards = build_shards(&TrainInput::Graph(g), features, model).expect("shards");
    let (_, grads) = shard_gradients(model, &shards[0], positives, negatives).expect("gradients");
    let loss = |m: &RGnnModel| {
        let h = m.encode(g, features).expect("encode");
        link_prediction_loss(&h, positives, negatives).expect("loss")
    };
    let mut worst = 0.0f64;
    for (k, grad) in grads.iter().enumerate() {
        for i in 0..grad.data().len() {
            let mut plus = model.clone();
            plus.params_mut()[k].data_mut()[i] += FD_EPS;
            let mut minus = model.clone();
            minus.params_mut()[k].data_mut()[i] -= FD_EPS;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(grad.data()[i], numeric));
        }
    }
    worst
}

/// Random heterogeneous graph: each entity links to each concept with
/// probability `p_sem` (random relation), each entity pair with `p_eel`.
pub fn random_graph(entities: usize, concepts: usize, relations: usize, p_sem: f64, p_eel: f64, seed: u64) -> HeteroGraph {
    let mut r = rng(seed);
    let names: Vec<String> = (0..relations).map(|i| format!("rel{i}")).collect();
    let table = RelationTable::new(&names).expect("relations");
    let mut sem = Vec::new();
    for e in 0..entities {
        for c in 0..concepts {
            if r.gen_bool(p_sem) {
                sem.push(SemanticEdge {
                    entity: NodeId::from_idx(e),
                    relation: RelationId(1 + r.gen_range(0..relations) as u16),
                    concept: NodeId::from_idx(entities + c),
                });
            }
        }
    }
    let mut eels = Vec::new();
    for a in 0..entities {
        for b in a + 1..entities {
            if r.gen_bool(p_eel) {
                eels.push((NodeId::from_idx(a), NodeId::from_idx(b)));
            }
        }
    }
    HeteroGraph::new(entities, concepts, table, sem, eels, Vec::new(), None, None).expect("valid graph")
}

/// Negatives `(i, j)` with `j` not EEL-linked to `i`, one per positive.
pub fn some_negatives(g: &HeteroGraph, positives: &[(usize, usize)], seed: u64) -> Vec<(usize, usize)> {
    let mut r = rng(seed);
    positives
        .iter()
        .filter_map(|&(i, _)| {
            (0..100).find_map(|_| {
                let j = r.gen_range(0..g.entity_count());
                (j != i && !g.has_eel(NodeId::from_idx(i), NodeId::from_idx(j))).then_some((i, j))
            })
        })
        .collect()
}

pub fn eel_positives(g: &HeteroGraph) -> Vec<(usize, usize)> {
    g.eel_edges().iter().map(|&(a, b)| (a.idx(), b.idx())).collect()
}

/// Plain-loop BCE: `-(Σ ln σ(s⁺) + Σ ln(1 - σ(s⁻))) / (P + Q)`, probabilities
/// floored at 1e-12.
pub fn bce_oracle(h: &Matrix, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> f64 {
    let score = |i: usize, j: usize| {
        let mut s = 0.0;
        for d in 0..h.cols() {
            s += h.get(i, d) * h.get(j, d);
        }
        s
    };
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut total = 0.0;
    for &(i, j) in pos {
        total += sig(score(i, j)).max(1e-12).ln();
    }
    for &(i, j) in neg {
        // 1 - σ(s) written as 1 / (1 + e^s); the literal form cancels.
        total += (1.0 / (1.0 + score(i, j).exp())).max(1e-12).ln();
    }
    -total / (pos.len() + neg.len()) as f64
}

fn act(kind: Activation, x: f64, slope: f64) -> f64 {
    match kind {
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

/// One layer computed edge by edge with scalar loops: message
/// `W_v [h_src; r]`, score `(W_k m)·(W_q h_t) / √d · β_r`, softmax over all
/// in-edges of the target, residual update.
pub fn layer_oracle(model: &RGnnModel, g: &HeteroGraph, h: &Matrix, layer: usize) -> Matrix {
    let d = h.cols();
    let idx = model.message_index(g).expect("index");
    let lw = &model.layers[layer];
    let mut out = h.clone();
    for t in 0..h.rows() {
        let edges: Vec<usize> = (0..idx.edge_count()).filter(|&e| idx.dst[e] == t).collect();
        if edges.is_empty() {
            continue;
        }
        let mut msgs = Vec::new();
        let mut scores = Vec::new();
        for &e in &edges {
            let (s, slot) = (idx.src[e], idx.slot[e]);
            let mut m = vec![0.0; d];
            for (i, mi) in m.iter_mut().enumerate() {
                for j in 0..d {
                    *mi += lw.value.get(i, j) * h.get(s, j) + lw.value.get(i, d + j) * model.relation_emb.get(slot, j);
                }
            }
            let mut score = 0.0;
            for i in 0..d {
                let mut k = 0.0;
                let mut q = 0.0;
                for j in 0..d {
                    k += lw.key.get(i, j) * m[j];
                    q += lw.query.get(i, j) * h.get(t, j);
                }
                score += k * q;
            }
            scores.push(score / (d as f64).sqrt() * model.beta.get(slot, 0));
            msgs.push(m);
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for i in 0..d {
            let agg: f64 = msgs.iter().zip(&exps).map(|(m, e)| e / z * m[i]).sum();
            out.set(t, i, h.get(t, i) + act(model.config.activation, agg, model.config.leaky_slope));
        }
    }
    out
}

/// AP@K from a fully sorted candidate list with explicit per-rank precision.
pub fn ap_oracle(emb: &Matrix, relevant: &[u32], q: usize, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut cands: Vec<(f64, usize)> = (0..emb.rows())
        .filter(|&x| x != q)
        .map(|x| {
            let mut s = 0.0;
            for d in 0..emb.cols() {
                s += emb.get(q, d) * emb.get(x, d);
            }
            (s, x)
        })
        .collect();
    cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let rel: HashSet<usize> = relevant.iter().map(|&v| v as usize).collect();
    let mut sum = 0.0;
    for rank in 1..=k.min(cands.len()) {
        let hits = cands[..rank].iter().filter(|c| rel.contains(&c.1)).count();
        if rel.contains(&cands[rank - 1].1) {
            sum += hits as f64 / rank as f64;
        }
    }
    sum / k.min(relevant.len()) as f64
}

pub fn map_oracle(emb: &Matrix, relevant: &[Vec<u32>], k: usize, queries: &[usize]) -> f64 {
    let aps: Vec<f64> = queries
        .iter()
        .filter(|&&q| !relevant[q].is_empty())
        .map(|&q| ap_oracle(emb, &relevant[q], q, k))
        .collect();
    aps.iter().sum::<f64>() / aps.len() as f64
}

/// Minimum cut over every 2-way split with part sizes in the partitioner's
/// balance window.
pub fn brute_force_bisection(g: &CsrGraph, eps: f64) -> u64 {
    let n = g.vertex_count();
    let (lo, hi) = balance_bounds(n as u64, 2, eps);
    let mut best = u64::MAX;
    // Vertex 0 stays in part 0, halving the search.
    for mask in 0u32..(1 << (n - 1)) {
        let ones = mask.count_ones() as u64;
        let zeros = n as u64 - ones;
        if !(lo..=hi).contains(&ones) || !(lo..=hi).contains(&zeros) {
            continue;
        }
        let part: Vec<usize> = (0..n).map(|v| if v == 0 { 0 } else { ((mask >> (v - 1)) & 1) as usize }).collect();
        best = best.min(edge_cut(g, &part));
    }
    best
}

/// Nodes within `hops` undirected hops of `seeds` in `g`.
pub fn within_hops(g: &HeteroGraph, seeds: &HashSet<NodeId>, hops: usize) -> HashSet<NodeId> {
    let mut reached = seeds.clone();
    let mut frontier: Vec<NodeId> = seeds.iter().copied().collect();
    for _ in 0..hops {
        let mut next = Vec::new();
        for v in frontier {
            for nb in g.neighbors(v) {
                if reached.insert(nb.node) {
                    next.push(nb.node);
                }
            }
        }
        frontier = next;
    }
    reached
}

pub fn arc(v: Vec<usize>) -> Arc<[usize]> {
    v.into()
}
