//! Subgraph plans for partitioned training.
//!
//! Entities touched by any EEL are split by balanced min-cut over the EEL
//! graph; EEL-free entities then fill the lightest parts. Every subgraph
//! keeps all concepts, all semantic edges of its own entities, and the EELs
//! whose endpoints it owns. EELs spanning two parts go to the cut ledger.

pub mod partition;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kgraph::{GraphError, HeteroGraph, NodeId};
use crate::seeds::stream_seed;

pub use partition::{
    assign_eel_free, balance_bounds, edge_cut, random_partition, CsrGraph, PartitionError,
    PartitionOptions,
};

/// Which nodes a sampling rule draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSelector {
    Entity,
    Concept,
}

/// Adds `sample_count` context nodes of the selected type to every
/// subgraph, drawn without replacement from nodes the subgraph lacks.
/// Sampled entities bring their semantic edges but no EELs and are never
/// supervised.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingRule {
    pub node_type: NodeSelector,
    pub sample_count: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HaspConfig {
    pub partitions: usize,
    pub epsilon: f64,
    pub rules: Vec<SamplingRule>,
    pub seed: u64,
}

impl Default for HaspConfig {
    fn default() -> Self {
        Self {
            partitions: 4,
            epsilon: 0.05,
            rules: Vec::new(),
            seed: 17,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HaspError {
    #[error("{parts} partitions requested but only {nodes} entities have EELs")]
    TooManyParts { parts: usize, nodes: usize },
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("sampling rule {rule}: {msg}")]
    Sampling { rule: usize, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("plan file: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphSpec {
    /// Owned entities, ascending global id.
    pub entities: Vec<NodeId>,
    /// Context entities per sampling rule.
    pub sampled: Vec<Vec<NodeId>>,
    /// EELs with both endpoints owned, in graph order.
    pub eels: Vec<(NodeId, NodeId)>,
    /// Directed EELs with both endpoints owned.
    pub directed_eels: Vec<(NodeId, NodeId)>,
    /// Semantic edges of owned entities, as indices into the graph's list.
    pub semantic_edges: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HaspPlan {
    pub partition_count: usize,
    /// Part of every entity, by entity id.
    pub assignments: Vec<usize>,
    pub subgraphs: Vec<SubgraphSpec>,
    pub cut_eels: Vec<(NodeId, NodeId)>,
    pub concept_count: usize,
    pub eel_count: usize,
    pub rules: Vec<SamplingRule>,
    pub epsilon: f64,
    pub seed: u64,
}

/// A subgraph ready for training. Local ids: owned entities first, then
/// sampled context entities, then every concept.
#[derive(Clone, Debug)]
pub struct Subgraph {
    pub graph: HeteroGraph,
    pub global: Vec<NodeId>,
    pub owned: usize,
}

/// Balanced min-cut over the EEL graph (EEL-incident entities only).
/// Returns `(entity, part)` pairs in ascending entity order.
pub fn partition_eel_subgraph(
    g: &HeteroGraph,
    parts: usize,
    eps: f64,
    seed: u64,
) -> Result<Vec<(NodeId, usize)>, HaspError> {
    let mut local = vec![usize::MAX; g.entity_count()];
    let mut nodes = Vec::new();
    let mut touch = |v: NodeId, nodes: &mut Vec<NodeId>| {
        if local[v.idx()] == usize::MAX {
            local[v.idx()] = 0;
            nodes.push(v);
        }
    };
    for &(a, b) in g.eel_edges().iter().chain(g.directed_eels()) {
        touch(a, &mut nodes);
        touch(b, &mut nodes);
    }
    nodes.sort_unstable();
    for (i, v) in nodes.iter().enumerate() {
        local[v.idx()] = i;
    }
    if parts > 1 && parts > nodes.len() {
        return Err(HaspError::TooManyParts {
            parts,
            nodes: nodes.len(),
        });
    }
    let pairs: Vec<(usize, usize)> = g
        .eel_edges()
        .iter()
        .chain(g.directed_eels())
        .map(|&(a, b)| (local[a.idx()], local[b.idx()]))
        .collect();
    let csr = CsrGraph::from_edges(nodes.len(), &pairs);
    let part = if nodes.is_empty() {
        Vec::new()
    } else {
        partition::partition(&csr, PartitionOptions::new(parts, eps, seed))?
    };
    Ok(nodes.into_iter().zip(part).collect())
}

pub fn build_plan(g: &HeteroGraph, cfg: &HaspConfig) -> Result<HaspPlan, HaspError> {
    let n = cfg.partitions;
    if n == 0 {
        return Err(PartitionError::ZeroParts.into());
    }
    let eel_parts = partition_eel_subgraph(g, n, cfg.epsilon, cfg.seed)?;
    let mut assignments = vec![usize::MAX; g.entity_count()];
    let mut sizes = vec![0; n];
    for &(v, p) in &eel_parts {
        assignments[v.idx()] = p;
        sizes[p] += 1;
    }
    let free: Vec<usize> = (0..g.entity_count()).filter(|&v| assignments[v] == usize::MAX).collect();
    for (v, p) in free.iter().zip(assign_eel_free(&mut sizes, free.len())) {
        assignments[*v] = p;
    }
    plan_from_assignments(g, n, assignments, cfg.rules.clone(), cfg.epsilon, cfg.seed)
}

/// Materializes edge sets, the cut ledger, and sampled nodes for a given
/// entity→part map.
pub fn plan_from_assignments(
    g: &HeteroGraph,
    n: usize,
    assignments: Vec<usize>,
    rules: Vec<SamplingRule>,
    epsilon: f64,
    seed: u64,
) -> Result<HaspPlan, HaspError> {
    if assignments.len() != g.entity_count() {
        return Err(HaspError::Format(format!(
            "{} assignments for {} entities",
            assignments.len(),
            g.entity_count()
        )));
    }
    if let Some(&bad) = assignments.iter().find(|&&p| p >= n) {
        return Err(HaspError::Format(format!("partition {bad} out of range for N={n}")));
    }
    let mut subgraphs: Vec<SubgraphSpec> = (0..n)
        .map(|_| SubgraphSpec {
            entities: Vec::new(),
            sampled: Vec::new(),
            eels: Vec::new(),
            directed_eels: Vec::new(),
            semantic_edges: Vec::new(),
        })
        .collect();
    for (v, &p) in assignments.iter().enumerate() {
        subgraphs[p].entities.push(NodeId::from_idx(v));
    }
    let mut cut_eels = Vec::new();
    for &(a, b) in g.eel_edges() {
        let (pa, pb) = (assignments[a.idx()], assignments[b.idx()]);
        if pa == pb {
            subgraphs[pa].eels.push((a, b));
        } else {
            cut_eels.push((a, b));
        }
    }
    for &(a, b) in g.directed_eels() {
        let (pa, pb) = (assignments[a.idx()], assignments[b.idx()]);
        if pa == pb {
            subgraphs[pa].directed_eels.push((a, b));
        } else {
            cut_eels.push((a, b));
        }
    }
    for (i, e) in g.semantic_edges().iter().enumerate() {
        subgraphs[assignments[e.entity.idx()]].semantic_edges.push(i);
    }
    for (ri, rule) in rules.iter().enumerate() {
        if rule.node_type == NodeSelector::Concept {
            return Err(HaspError::Sampling {
                rule: ri,
                msg: "every subgraph already holds all concepts".into(),
            });
        }
        for (si, sg) in subgraphs.iter_mut().enumerate() {
            let pool: Vec<NodeId> = (0..g.entity_count())
                .filter(|&v| assignments[v] != si)
                .map(NodeId::from_idx)
                .collect();
            if rule.sample_count > pool.len() {
                return Err(HaspError::Sampling {
                    rule: ri,
                    msg: format!(
                        "asks for {} entities but subgraph {si} has only {} outside it",
                        rule.sample_count,
                        pool.len()
                    ),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(rule.seed, &[ri as u64, si as u64]));
            let mut picked: Vec<NodeId> = sample(&mut rng, pool.len(), rule.sample_count)
                .into_iter()
                .map(|i| pool[i])
                .collect();
            picked.sort_unstable();
            sg.sampled.push(picked);
        }
    }
    Ok(HaspPlan {
        partition_count: n,
        assignments,
        subgraphs,
        cut_eels,
        concept_count: g.concept_count(),
        eel_count: g.eel_edges().len() + g.directed_eels().len(),
        rules,
        epsilon,
        seed,
    })
}

impl HaspPlan {
    /// Builds subgraph `i` of `g`.
    pub fn materialize(&self, g: &HeteroGraph, i: usize) -> Result<Subgraph, HaspError> {
        let spec = &self.subgraphs[i];
        let mut entities = spec.entities.clone();
        let mut seen: std::collections::HashSet<NodeId> = entities.iter().copied().collect();
        for group in &spec.sampled {
            for &v in group {
                if seen.insert(v) {
                    entities.push(v);
                }
            }
        }
        let assignments = &self.assignments;
        let owned = |v: NodeId| assignments[v.idx()] == i;
        let (graph, global) = g.induced_with_all_concepts(&entities, |_| true, |a, b| owned(a) && owned(b))?;
        Ok(Subgraph {
            graph,
            global,
            owned: spec.entities.len(),
        })
    }

    pub fn to_file(&self) -> PlanFile {
        let mut sampled = BTreeMap::new();
        for (ri, _) in self.rules.iter().enumerate() {
            sampled.insert(
                ri.to_string(),
                self.subgraphs
                    .iter()
                    .map(|s| s.sampled[ri].iter().map(|v| v.0).collect())
                    .collect(),
            );
        }
        PlanFile {
            n: self.partition_count,
            assignments: self.assignments.iter().map(|&p| p as u32).collect(),
            sampled,
            cut_eels: self.cut_eels.iter().map(|&(a, b)| [a.0, b.0]).collect(),
            rules: self.rules.clone(),
            epsilon: self.epsilon,
            seed: self.seed,
            graph_hash: String::new(),
        }
    }

    pub fn save(&self, path: &Path, graph_hash: &str) -> Result<(), HaspError> {
        let mut f = self.to_file();
        f.graph_hash = graph_hash.to_string();
        let text = serde_json::to_string(&f).expect("plan serializes");
        fs::write(path, text).map_err(|e| HaspError::Format(format!("{}: {e}", path.display())))
    }

    /// Reads a plan file and rebuilds the plan against `g`. The stored cut
    /// ledger and samples must match what the assignments imply.
    pub fn load(path: &Path, g: &HeteroGraph) -> Result<(Self, String), HaspError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HaspError::Format(format!("{}: {e}", path.display())))?;
        let f: PlanFile = serde_json::from_str(&text)
            .map_err(|e| HaspError::Format(format!("{}: {e}", path.display())))?;
        let plan = plan_from_assignments(
            g,
            f.n,
            f.assignments.iter().map(|&p| p as usize).collect(),
            f.rules.clone(),
            f.epsilon,
            f.seed,
        )?;
        let check = plan.to_file();
        if check.cut_eels != f.cut_eels || check.sampled != f.sampled {
            return Err(HaspError::Format(
                "plan file does not match the graph it is applied to".into(),
            ));
        }
        Ok((plan, f.graph_hash))
    }
}

/// On-disk plan layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    #[serde(rename = "N")]
    pub n: usize,
    pub assignments: Vec<u32>,
    /// Rule index → per-subgraph sampled entity ids.
    pub sampled: BTreeMap<String, Vec<Vec<u32>>>,
    pub cut_eels: Vec<[u32; 2]>,
    pub rules: Vec<SamplingRule>,
    pub epsilon: f64,
    pub seed: u64,
    pub graph_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgraphReport {
    pub entities: usize,
    pub sampled_entities: usize,
    pub concepts: usize,
    pub eels: usize,
    pub semantic_edges: usize,
    /// `nodes × d + edges`.
    pub memory_proxy: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub partition_count: usize,
    /// Largest owned-entity count over the mean.
    pub balance_factor: f64,
    pub cut_eels: usize,
    pub cut_ratio: f64,
    pub total_entities: usize,
    pub total_eels: usize,
    pub total_semantic_edges: usize,
    pub subgraphs: Vec<SubgraphReport>,
}

pub fn plan_report(plan: &HaspPlan, dim: usize) -> PlanReport {
    let subgraphs: Vec<SubgraphReport> = plan
        .subgraphs
        .iter()
        .map(|s| {
            let sampled: usize = s.sampled.iter().map(Vec::len).sum();
            let nodes = s.entities.len() + sampled + plan.concept_count;
            let edges = s.eels.len() + s.directed_eels.len() + s.semantic_edges.len();
            SubgraphReport {
                entities: s.entities.len(),
                sampled_entities: sampled,
                concepts: plan.concept_count,
                eels: s.eels.len() + s.directed_eels.len(),
                semantic_edges: s.semantic_edges.len(),
                memory_proxy: nodes * dim + edges,
            }
        })
        .collect();
    let total_entities: usize = subgraphs.iter().map(|s| s.entities).sum();
    let max = subgraphs.iter().map(|s| s.entities).max().unwrap_or(0);
    let mean = total_entities as f64 / plan.partition_count as f64;
    PlanReport {
        partition_count: plan.partition_count,
        balance_factor: if mean > 0.0 { max as f64 / mean } else { 1.0 },
        cut_eels: plan.cut_eels.len(),
        cut_ratio: if plan.eel_count == 0 {
            0.0
        } else {
            plan.cut_eels.len() as f64 / plan.eel_count as f64
        },
        total_entities,
        total_eels: subgraphs.iter().map(|s| s.eels).sum::<usize>() + plan.cut_eels.len(),
        total_semantic_edges: subgraphs.iter().map(|s| s.semantic_edges).sum(),
        subgraphs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::{RelationTable, SemanticEdge};

    fn small() -> HeteroGraph {
        // 8 entities, 2 concepts. EELs form two squares joined by one edge.
        let rel = RelationTable::new(&["r"]).unwrap();
        let r = rel.by_name("r").unwrap();
        let sem = (0..8)
            .map(|i| SemanticEdge {
                entity: NodeId(i),
                relation: r,
                concept: NodeId(8 + i % 2),
            })
            .collect();
        let e = |a, b| (NodeId(a), NodeId(b));
        let eel = vec![e(0, 1), e(1, 2), e(2, 3), e(3, 0), e(4, 5), e(5, 6), e(6, 7), e(7, 4), e(3, 4)];
        HeteroGraph::new(8, 2, rel, sem, eel, vec![], None, None).unwrap()
    }

    #[test]
    fn single_partition_is_whole_graph() {
        let g = small();
        let cfg = HaspConfig { partitions: 1, ..HaspConfig::default() };
        let plan = build_plan(&g, &cfg).unwrap();
        assert!(plan.cut_eels.is_empty());
        let sg = plan.materialize(&g, 0).unwrap();
        assert_eq!(sg.graph, g);
        assert_eq!(plan_report(&plan, 4).cut_ratio, 0.0);
    }

    #[test]
    fn two_parts_cut_the_bridge() {
        let g = small();
        let cfg = HaspConfig { partitions: 2, ..HaspConfig::default() };
        let plan = build_plan(&g, &cfg).unwrap();
        assert_eq!(plan.cut_eels, vec![(NodeId(3), NodeId(4))]);
        let report = plan_report(&plan, 4);
        assert_eq!(report.balance_factor, 1.0);
        assert_eq!(report.total_eels, g.eel_edges().len());
        assert_eq!(report.total_semantic_edges, g.semantic_edges().len());
    }

    #[test]
    fn too_many_parts() {
        let rel = RelationTable::new(&["r"]).unwrap();
        let g = HeteroGraph::new(5, 1, rel, vec![], vec![(NodeId(0), NodeId(1))], vec![], None, None).unwrap();
        let cfg = HaspConfig { partitions: 3, ..HaspConfig::default() };
        assert!(matches!(build_plan(&g, &cfg), Err(HaspError::TooManyParts { parts: 3, nodes: 2 })));
    }

    #[test]
    fn concept_sampling_rejected() {
        let g = small();
        let cfg = HaspConfig {
            partitions: 2,
            rules: vec![SamplingRule { node_type: NodeSelector::Concept, sample_count: 1, seed: 0 }],
            ..HaspConfig::default()
        };
        assert!(matches!(build_plan(&g, &cfg), Err(HaspError::Sampling { .. })));
    }

    #[test]
    fn entity_sampling_adds_context() {
        let g = small();
        let cfg = HaspConfig {
            partitions: 2,
            rules: vec![SamplingRule { node_type: NodeSelector::Entity, sample_count: 2, seed: 5 }],
            ..HaspConfig::default()
        };
        let plan = build_plan(&g, &cfg).unwrap();
        for i in 0..2 {
            let sg = plan.materialize(&g, i).unwrap();
            assert_eq!(sg.owned, 4);
            assert_eq!(sg.graph.entity_count(), 6);
            // Context entities carry semantic edges but no EELs.
            for &(a, b) in sg.graph.eel_edges() {
                assert!(a.idx() < sg.owned && b.idx() < sg.owned);
            }
            assert_eq!(sg.graph.semantic_edges().len(), 6);
        }
        let too_many = HaspConfig {
            partitions: 2,
            rules: vec![SamplingRule { node_type: NodeSelector::Entity, sample_count: 5, seed: 5 }],
            ..HaspConfig::default()
        };
        assert!(build_plan(&g, &too_many).is_err());
    }

    #[test]
    fn plan_file_roundtrip() {
        let g = small();
        let cfg = HaspConfig {
            partitions: 2,
            rules: vec![SamplingRule { node_type: NodeSelector::Entity, sample_count: 1, seed: 5 }],
            ..HaspConfig::default()
        };
        let plan = build_plan(&g, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hasp_plan.json");
        plan.save(&path, "h").unwrap();
        let (back, hash) = HaspPlan::load(&path, &g).unwrap();
        assert_eq!(back, plan);
        assert_eq!(hash, "h");
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"N\":2"));
    }
}
