use serde::{Deserialize, Serialize};

use super::{HeteroGraph, GROUP_COUNT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub entity_count: usize,
    pub concept_count: usize,
    pub entity_ratio: f64,
    pub semantic_edge_count: usize,
    pub eel_count: usize,
    pub directed_eel_count: usize,
    /// Semantic edges over all edges.
    pub semantic_edge_fraction: f64,
    /// `histogram[d]` = number of entities with EEL degree `d`.
    pub eel_degree_histogram: Vec<usize>,
    pub zero_eel_fraction: f64,
    pub group_counts: [usize; GROUP_COUNT],
}

pub fn graph_stats(g: &HeteroGraph) -> GraphStats {
    let nodes = g.node_count();
    let sem = g.semantic_edges().len();
    let eel = g.eel_edges().len();
    let dir = g.directed_eels().len();
    let total_edges = sem + eel + dir;
    let degrees = g.eel_degrees();
    let max_deg = degrees.iter().copied().max().unwrap_or(0);
    let mut histogram = vec![0; if degrees.is_empty() { 0 } else { max_deg + 1 }];
    let mut groups = [0; GROUP_COUNT];
    for &d in degrees {
        histogram[d] += 1;
        groups[super::group_of_degree(d) as usize] += 1;
    }
    let zero = histogram.first().copied().unwrap_or(0);
    GraphStats {
        entity_count: g.entity_count(),
        concept_count: g.concept_count(),
        entity_ratio: ratio(g.entity_count(), nodes),
        semantic_edge_count: sem,
        eel_count: eel,
        directed_eel_count: dir,
        semantic_edge_fraction: ratio(sem, total_edges),
        eel_degree_histogram: histogram,
        zero_eel_fraction: ratio(zero, g.entity_count()),
        group_counts: groups,
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::{NodeId, RelationTable, SemanticEdge};

    #[test]
    fn entity_ratio_99_to_1() {
        let rel = RelationTable::new(&["r"]).unwrap();
        let g = HeteroGraph::new(99, 1, rel, vec![], vec![], vec![], None, None).unwrap();
        let s = graph_stats(&g);
        assert!((s.entity_ratio - 0.99).abs() < 1e-15);
        assert_eq!(s.zero_eel_fraction, 1.0);
        assert_eq!(s.group_counts, [99, 0, 0]);
    }

    #[test]
    fn histogram_counts() {
        let rel = RelationTable::new(&["r"]).unwrap();
        let sem = vec![SemanticEdge {
            entity: NodeId(0),
            relation: rel.by_name("r").unwrap(),
            concept: NodeId(3),
        }];
        let eel = vec![(NodeId(0), NodeId(1)), (NodeId(0), NodeId(2))];
        let g = HeteroGraph::new(3, 1, rel, sem, eel, vec![], None, None).unwrap();
        let s = graph_stats(&g);
        assert_eq!(s.eel_degree_histogram, vec![0, 2, 1]);
        assert!((s.semantic_edge_fraction - 1.0 / 3.0).abs() < 1e-15);
    }
}
