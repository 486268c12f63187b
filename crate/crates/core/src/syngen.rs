//! Synthetic semantic knowledge graphs with planted similarity structure.
//!
//! Entities are split into equal-sized communities. Each community has a
//! signature concept per category that its members pick with probability
//! `community_affinity`; the remaining concept draws follow a Zipf-like
//! popularity law, which produces a few hub concepts per category.
//!
//! Only a "popular" subset of entities receives EELs. Within a community,
//! popular members are linked with probability
//! `eel_within_community_prob * w_i * w_j`, where the `w` are heavy-tailed
//! popularity weights with mean 1 (a Chung–Lu style model); cross-community
//! links use `eel_cross_community_prob` the same way. A fraction of the
//! generated EELs is held out as engagement ground truth and never enters
//! the graph.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kgraph::{
    group_of_degree, ordered_pair, GraphError, HeteroGraph, NodeId, RelationTable, SemanticEdge,
    GROUP_COUNT,
};

const CATEGORY_NAMES: [&str; 10] = [
    "has_genre",
    "has_maturity_level",
    "has_mood",
    "has_storyline",
    "has_setting",
    "has_tone",
    "has_theme",
    "has_era",
    "has_format",
    "has_audience",
];

const MAX_POPULARITY_WEIGHT: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynGenConfig {
    pub entity_count: usize,
    pub category_count: usize,
    pub concepts_per_category: Vec<usize>,
    /// Inclusive range of concepts each entity draws per category.
    pub concepts_per_entity_range: (usize, usize),
    pub planted_community_count: usize,
    pub eel_within_community_prob: f64,
    pub eel_cross_community_prob: f64,
    pub zero_eel_entity_fraction: f64,
    /// Probability that an entity's first concept in a category is its
    /// community's signature concept.
    pub community_affinity: f64,
    /// Zipf exponent of concept popularity within a category.
    pub concept_popularity_exponent: f64,
    /// Popularity weights are `u^-x` for uniform `u`; larger `x` means a
    /// heavier EEL-degree tail.
    pub popularity_weight_exponent: f64,
    /// Fraction of generated EELs withheld as engagement ground truth.
    pub co_sim_holdout_fraction: f64,
    /// Minimum shared concepts for a same-community pair to count as
    /// semantically similar.
    pub hc_min_shared_concepts: usize,
    pub seed: u64,
}

impl Default for SynGenConfig {
    fn default() -> Self {
        Self {
            entity_count: 5000,
            category_count: 10,
            concepts_per_category: vec![5; 10],
            concepts_per_entity_range: (1, 1),
            planted_community_count: 50,
            eel_within_community_prob: 0.25,
            eel_cross_community_prob: 0.0005,
            zero_eel_entity_fraction: 0.7,
            community_affinity: 0.7,
            concept_popularity_exponent: 1.0,
            popularity_weight_exponent: 0.5,
            co_sim_holdout_fraction: 0.2,
            hc_min_shared_concepts: 6,
            seed: 7,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynGenError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("infeasible config: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

/// Ground truth planted by [`generate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedTruth {
    pub community_of: Vec<u32>,
    /// Same community and at least `hc_min_shared_concepts` shared concepts.
    pub hc_sim_pairs: Vec<(u32, u32)>,
    /// Held-out EELs; disjoint from the graph's EELs.
    pub co_sim_pairs: Vec<(u32, u32)>,
}

impl PlantedTruth {
    pub fn save(&self, path: &Path) -> Result<(), SynGenError> {
        let json = serde_json::to_string(self).expect("truth serializes");
        fs::write(path, json).map_err(|e| SynGenError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, SynGenError> {
        let text = fs::read_to_string(path).map_err(|e| SynGenError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| SynGenError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }
}

fn check_prob(name: &str, p: f64) -> Result<(), SynGenError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SynGenError::InvalidConfig(format!("{name} = {p} is not in [0, 1]")))
    }
}

impl SynGenConfig {
    pub fn validate(&self) -> Result<(), SynGenError> {
        check_prob("eel_within_community_prob", self.eel_within_community_prob)?;
        check_prob("eel_cross_community_prob", self.eel_cross_community_prob)?;
        check_prob("zero_eel_entity_fraction", self.zero_eel_entity_fraction)?;
        check_prob("community_affinity", self.community_affinity)?;
        check_prob("co_sim_holdout_fraction", self.co_sim_holdout_fraction)?;
        if self.eel_within_community_prob > 0.0
            && self.eel_within_community_prob <= self.eel_cross_community_prob
        {
            return Err(SynGenError::InvalidConfig(
                "eel_within_community_prob must exceed eel_cross_community_prob".into(),
            ));
        }
        if self.eel_within_community_prob == 0.0 && self.eel_cross_community_prob > 0.0 {
            return Err(SynGenError::InvalidConfig(
                "eel_cross_community_prob must be 0 when eel_within_community_prob is 0".into(),
            ));
        }
        if self.concepts_per_category.len() != self.category_count {
            return Err(SynGenError::InvalidConfig(format!(
                "concepts_per_category has {} entries for {} categories",
                self.concepts_per_category.len(),
                self.category_count
            )));
        }
        let (lo, hi) = self.concepts_per_entity_range;
        if lo > hi {
            return Err(SynGenError::InvalidConfig(
                "concepts_per_entity_range min exceeds max".into(),
            ));
        }
        if let Some(&small) = self.concepts_per_category.iter().min() {
            if small == 0 || hi > small {
                return Err(SynGenError::Infeasible(format!(
                    "need between 1 and {small} concepts per category to draw up to {hi} per entity"
                )));
            }
        }
        if self.planted_community_count == 0 || self.planted_community_count > self.entity_count {
            return Err(SynGenError::Infeasible(format!(
                "{} communities for {} entities",
                self.planted_community_count, self.entity_count
            )));
        }
        if self.popularity_weight_exponent < 0.0 || self.concept_popularity_exponent < 0.0 {
            return Err(SynGenError::InvalidConfig("exponents must be non-negative".into()));
        }
        Ok(())
    }
}

fn category_name(k: usize) -> String {
    CATEGORY_NAMES
        .get(k)
        .map_or_else(|| format!("has_category_{k:02}"), |s| s.to_string())
}

fn draw_weighted<R: Rng>(rng: &mut R, weights: &[f64], taken: &[usize]) -> usize {
    let total: f64 = weights
        .iter()
        .enumerate()
        .filter(|(i, _)| !taken.contains(i))
        .map(|(_, w)| w)
        .sum();
    let mut x = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if taken.contains(&i) {
            continue;
        }
        last = i;
        if x < *w {
            return i;
        }
        x -= w;
    }
    last
}

/// Generates a graph and its planted truth. Deterministic for a fixed config.
pub fn generate(cfg: &SynGenConfig) -> Result<(HeteroGraph, PlantedTruth), SynGenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.entity_count;
    let n_comm = cfg.planted_community_count;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut community_of = vec![0u32; n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comm];
    for (slot, &e) in order.iter().enumerate() {
        let c = slot % n_comm;
        community_of[e] = c as u32;
        members[c].push(e);
    }
    for m in &mut members {
        m.sort_unstable();
    }

    // concepts
    let names: Vec<String> = (0..cfg.category_count).map(category_name).collect();
    let relations = RelationTable::new(&names)?;
    let rel_of_cat: Vec<_> = names
        .iter()
        .map(|nm| relations.by_name(nm).expect("just inserted"))
        .collect();
    let mut concept_base = Vec::with_capacity(cfg.category_count);
    let mut next = n;
    for &k in &cfg.concepts_per_category {
        concept_base.push(next);
        next += k;
    }
    let concept_count = next - n;
    let popularity: Vec<Vec<f64>> = cfg
        .concepts_per_category
        .iter()
        .map(|&k| {
            (0..k)
                .map(|i| 1.0 / ((i + 1) as f64).powf(cfg.concept_popularity_exponent))
                .collect()
        })
        .collect();
    let signature: Vec<Vec<usize>> = (0..n_comm)
        .map(|_| {
            cfg.concepts_per_category
                .iter()
                .map(|&k| rng.gen_range(0..k))
                .collect()
        })
        .collect();

    let mut semantic = Vec::new();
    let mut concepts_of: Vec<Vec<u32>> = vec![Vec::new(); n];
    let (lo, hi) = cfg.concepts_per_entity_range;
    for e in 0..n {
        let comm = community_of[e] as usize;
        for cat in 0..cfg.category_count {
            let k = rng.gen_range(lo..=hi);
            let mut taken: Vec<usize> = Vec::with_capacity(k);
            for slot in 0..k {
                let pick = if slot == 0 && rng.gen::<f64>() < cfg.community_affinity {
                    signature[comm][cat]
                } else {
                    draw_weighted(&mut rng, &popularity[cat], &taken)
                };
                if taken.contains(&pick) {
                    continue;
                }
                taken.push(pick);
                let concept = concept_base[cat] + pick;
                concepts_of[e].push(concept as u32);
                semantic.push(SemanticEdge {
                    entity: NodeId::from_idx(e),
                    relation: rel_of_cat[cat],
                    concept: NodeId::from_idx(concept),
                });
            }
        }
        concepts_of[e].sort_unstable();
    }

    // popular entities and EELs
    let mut popular = vec![false; n];
    for m in &members {
        let mut shuffled = m.clone();
        shuffled.shuffle(&mut rng);
        let count = ((1.0 - cfg.zero_eel_entity_fraction) * m.len() as f64).round() as usize;
        for &e in shuffled.iter().take(count) {
            popular[e] = true;
        }
    }
    let weight: Vec<f64> = {
        let raw: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = 1.0 - rng.gen::<f64>();
                u.powf(-cfg.popularity_weight_exponent).min(MAX_POPULARITY_WEIGHT)
            })
            .collect();
        let pop: Vec<f64> = (0..n).filter(|&e| popular[e]).map(|e| raw[e]).collect();
        let mean = if pop.is_empty() {
            1.0
        } else {
            pop.iter().sum::<f64>() / pop.len() as f64
        };
        raw.iter().map(|w| w / mean).collect()
    };
    let popular_ids: Vec<usize> = (0..n).filter(|&e| popular[e]).collect();
    let mut eels: Vec<(NodeId, NodeId)> = Vec::new();
    if cfg.eel_within_community_prob > 0.0 || cfg.eel_cross_community_prob > 0.0 {
        for (ai, &a) in popular_ids.iter().enumerate() {
            for &b in &popular_ids[ai + 1..] {
                let base = if community_of[a] == community_of[b] {
                    cfg.eel_within_community_prob
                } else {
                    cfg.eel_cross_community_prob
                };
                if base == 0.0 {
                    continue;
                }
                let p = (base * weight[a] * weight[b]).min(1.0);
                if rng.gen::<f64>() < p {
                    eels.push((NodeId::from_idx(a), NodeId::from_idx(b)));
                }
            }
        }
    }
    eels.shuffle(&mut rng);
    let holdout = (cfg.co_sim_holdout_fraction * eels.len() as f64).round() as usize;
    let mut co_sim: Vec<(NodeId, NodeId)> = eels[..holdout].to_vec();
    let mut train: Vec<(NodeId, NodeId)> = eels[holdout..].to_vec();

    // every popular entity keeps at least one training EEL
    if !train.is_empty() || !co_sim.is_empty() {
        let mut degree = vec![0usize; n];
        for &(a, b) in &train {
            degree[a.idx()] += 1;
            degree[b.idx()] += 1;
        }
        let mut all: HashSet<(NodeId, NodeId)> = train.iter().chain(&co_sim).copied().collect();
        for &e in &popular_ids {
            if degree[e] > 0 {
                continue;
            }
            let v = NodeId::from_idx(e);
            if let Some(pos) = co_sim.iter().position(|&(a, b)| a == v || b == v) {
                let pair = co_sim.remove(pos);
                degree[pair.0.idx()] += 1;
                degree[pair.1.idx()] += 1;
                train.push(pair);
                continue;
            }
            let comm = &members[community_of[e] as usize];
            let candidates: Vec<usize> = comm
                .iter()
                .copied()
                .filter(|&o| o != e && popular[o])
                .filter(|&o| !all.contains(&ordered_pair(v, NodeId::from_idx(o))))
                .collect();
            if let Some(&o) = candidates.choose(&mut rng) {
                let pair = ordered_pair(v, NodeId::from_idx(o));
                all.insert(pair);
                degree[e] += 1;
                degree[o] += 1;
                train.push(pair);
            }
        }
    }
    train.sort_unstable();
    co_sim.sort_unstable();

    // semantic similarity pairs
    let mut hc_sim = Vec::new();
    for m in &members {
        for (i, &a) in m.iter().enumerate() {
            for &b in &m[i + 1..] {
                if shared_count(&concepts_of[a], &concepts_of[b]) >= cfg.hc_min_shared_concepts {
                    hc_sim.push((a as u32, b as u32));
                }
            }
        }
    }
    hc_sim.sort_unstable();

    let graph = HeteroGraph::new(
        n,
        concept_count,
        relations,
        semantic,
        train,
        Vec::new(),
        None,
        None,
    )?;
    let truth = PlantedTruth {
        community_of,
        hc_sim_pairs: hc_sim,
        co_sim_pairs: co_sim.iter().map(|&(a, b)| (a.0, b.0)).collect(),
    };
    Ok((graph, truth))
}

/// Size of the intersection of two sorted id lists.
pub fn shared_count(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                k += 1;
                i += 1;
                j += 1;
            }
        }
    }
    k
}

/// Per source (`[co_sim, hc_sim]`) and degree group: entities that appear in
/// at least one truth pair.
pub fn truth_group_coverage(g: &HeteroGraph, truth: &PlantedTruth) -> [[usize; GROUP_COUNT]; 2] {
    let groups = g.degree_groups();
    let mut out = [[0; GROUP_COUNT]; 2];
    for (s, pairs) in [&truth.co_sim_pairs, &truth.hc_sim_pairs].iter().enumerate() {
        let mut seen = vec![false; g.entity_count()];
        for &(a, b) in pairs.iter() {
            seen[a as usize] = true;
            seen[b as usize] = true;
        }
        for (e, &hit) in seen.iter().enumerate() {
            if hit {
                out[s][groups[e] as usize] += 1;
            }
        }
    }
    out
}

/// Removes a degree-stratified sample of entities from the training graph.
///
/// The returned graph keeps every node (ids are unchanged) but drops all
/// edges incident to held-out entities. Strata are the degree groups of the
/// full graph; each stratum contributes `round(fraction * size)` entities,
/// at least one and at most `size - 1`.
pub fn split_inductive(
    g: &HeteroGraph,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(HeteroGraph, Vec<NodeId>), SynGenError> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(SynGenError::InvalidConfig(format!(
            "holdout_fraction {holdout_fraction} is not in (0, 1)"
        )));
    }
    let mut strata: Vec<Vec<NodeId>> = vec![Vec::new(); GROUP_COUNT];
    for (e, &d) in g.eel_degrees().iter().enumerate() {
        strata[group_of_degree(d) as usize].push(NodeId::from_idx(e));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut holdout = Vec::new();
    for (gi, stratum) in strata.iter_mut().enumerate() {
        if stratum.len() < 2 {
            return Err(SynGenError::Infeasible(format!(
                "degree group {gi} has {} entities; need at least 2",
                stratum.len()
            )));
        }
        let take = ((holdout_fraction * stratum.len() as f64).round() as usize)
            .clamp(1, stratum.len() - 1);
        stratum.shuffle(&mut rng);
        holdout.extend_from_slice(&stratum[..take]);
    }
    holdout.sort_unstable();
    let removed: HashSet<NodeId> = holdout.iter().copied().collect();
    Ok((g.without_entity_edges(&removed), holdout))
}
