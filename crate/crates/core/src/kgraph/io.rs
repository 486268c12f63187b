//! TSV interchange.
//!
//! Nodes: `node_id \t node_type \t name`, node_type ∈ {entity, concept}.
//! Edges: `src_id \t relation_name \t dst_id`. `EEL` marks an undirected
//! co-engagement edge, `EEL_DIRECTED` a one-way one; anything else is a
//! semantic relation. No header; LF line endings.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{
    GraphError, HeteroGraph, NodeId, RelationTable, SemanticEdge, EEL_DIRECTED_NAME, EEL_NAME,
};

fn read(path: &Path) -> Result<String, GraphError> {
    fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads and validates a graph. Semantic relations are collected from the
/// edges file.
pub fn load_graph(nodes_path: &Path, edges_path: &Path) -> Result<HeteroGraph, GraphError> {
    let nodes = read(nodes_path)?;
    let edges = read(edges_path)?;
    parse_graph_named(
        &nodes,
        &edges,
        None,
        &nodes_path.display().to_string(),
        &edges_path.display().to_string(),
    )
}

/// Like [`load_graph`], but every relation name must already exist in
/// `relations`.
pub fn load_graph_with_relations(
    nodes_path: &Path,
    edges_path: &Path,
    relations: &RelationTable,
) -> Result<HeteroGraph, GraphError> {
    let nodes = read(nodes_path)?;
    let edges = read(edges_path)?;
    parse_graph_named(
        &nodes,
        &edges,
        Some(relations),
        &nodes_path.display().to_string(),
        &edges_path.display().to_string(),
    )
}

pub fn parse_graph(
    nodes: &str,
    edges: &str,
    relations: Option<&RelationTable>,
) -> Result<HeteroGraph, GraphError> {
    parse_graph_named(nodes, edges, relations, "nodes", "edges")
}

fn split3<'a>(line: &'a str, file: &str, lineno: usize) -> Result<[&'a str; 3], GraphError> {
    let mut it = line.split('\t');
    match (it.next(), it.next(), it.next(), it.next()) {
        (Some(a), Some(b), Some(c), None) if !a.is_empty() && !b.is_empty() => Ok([a, b, c]),
        _ => Err(GraphError::Malformed {
            file: file.to_string(),
            line: lineno,
            msg: "expected three tab-separated fields".into(),
        }),
    }
}

fn parse_graph_named(
    nodes: &str,
    edges: &str,
    relations: Option<&RelationTable>,
    nodes_file: &str,
    edges_file: &str,
) -> Result<HeteroGraph, GraphError> {
    let mut entities: Vec<(&str, &str)> = Vec::new();
    let mut concepts: Vec<(&str, &str)> = Vec::new();
    for (i, line) in nodes.lines().enumerate() {
        let [id, kind, name] = split3(line, nodes_file, i + 1)?;
        match kind {
            "entity" => entities.push((id, name)),
            "concept" => concepts.push((id, name)),
            other => {
                return Err(GraphError::Malformed {
                    file: nodes_file.to_string(),
                    line: i + 1,
                    msg: format!("unknown node type {other:?}"),
                })
            }
        }
    }
    let mut index: HashMap<&str, NodeId> = HashMap::new();
    let mut external_ids = Vec::with_capacity(entities.len() + concepts.len());
    let mut names = Vec::with_capacity(entities.len() + concepts.len());
    for (id, name) in entities.iter().chain(concepts.iter()) {
        let nid = NodeId::from_idx(external_ids.len());
        if index.insert(id, nid).is_some() {
            return Err(GraphError::DuplicateNode(id.to_string()));
        }
        external_ids.push(id.to_string());
        names.push(name.to_string());
    }

    let mut rows = Vec::new();
    let mut semantic_names = BTreeSet::new();
    for (i, line) in edges.lines().enumerate() {
        let [src, rel, dst] = split3(line, edges_file, i + 1)?;
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| GraphError::UnknownNode {
                file: edges_file.to_string(),
                line: i + 1,
                id: id.to_string(),
            })
        };
        let (s, d) = (lookup(src)?, lookup(dst)?);
        if rel != EEL_NAME && rel != EEL_DIRECTED_NAME {
            semantic_names.insert(rel);
        }
        rows.push((s, rel, d));
    }
    let relations = match relations {
        Some(table) => {
            for name in &semantic_names {
                if table.by_name(name).is_none() {
                    return Err(GraphError::UnknownRelation(name.to_string()));
                }
            }
            table.clone()
        }
        None => RelationTable::new(&semantic_names.into_iter().collect::<Vec<_>>())?,
    };

    let mut sem = Vec::new();
    let mut eel = Vec::new();
    let mut dir = Vec::new();
    for (s, rel, d) in rows {
        match rel {
            EEL_NAME => eel.push((s, d)),
            EEL_DIRECTED_NAME => dir.push((s, d)),
            name => sem.push(SemanticEdge {
                entity: s,
                relation: relations
                    .by_name(name)
                    .ok_or_else(|| GraphError::UnknownRelation(name.to_string()))?,
                concept: d,
            }),
        }
    }
    HeteroGraph::new(
        entities.len(),
        concepts.len(),
        relations,
        sem,
        eel,
        dir,
        Some(external_ids),
        Some(names),
    )
}

/// Canonical serialization: nodes by internal id, edges sorted by
/// (relation name, src id, dst id).
pub(crate) fn to_tsv(g: &HeteroGraph) -> (String, String) {
    let mut nodes = String::new();
    for i in 0..g.node_count() {
        let v = NodeId::from_idx(i);
        let kind = if g.is_entity(v) { "entity" } else { "concept" };
        let _ = writeln!(nodes, "{}\t{}\t{}", g.external_ids[i], kind, g.names[i]);
    }
    let ext = |v: NodeId| g.external_ids[v.idx()].as_str();
    let mut rows: Vec<(&str, &str, &str)> = Vec::with_capacity(
        g.semantic_edges.len() + g.eel_edges.len() + g.directed_eels.len(),
    );
    for e in &g.semantic_edges {
        rows.push((g.relations.name(e.relation), ext(e.entity), ext(e.concept)));
    }
    for &(a, b) in &g.eel_edges {
        rows.push((EEL_NAME, ext(a), ext(b)));
    }
    for &(a, b) in &g.directed_eels {
        rows.push((EEL_DIRECTED_NAME, ext(a), ext(b)));
    }
    rows.sort_unstable();
    let mut edges = String::new();
    for (rel, s, d) in rows {
        let _ = writeln!(edges, "{s}\t{rel}\t{d}");
    }
    (nodes, edges)
}

pub fn save_graph(g: &HeteroGraph, nodes_path: &Path, edges_path: &Path) -> Result<(), GraphError> {
    let (nodes, edges) = to_tsv(g);
    for (path, text) in [(nodes_path, nodes), (edges_path, edges)] {
        fs::write(path, text).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

/// Writes the internal-id → external-id map as a JSON array.
pub fn save_id_map(g: &HeteroGraph, path: &Path) -> Result<(), GraphError> {
    let json = serde_json::to_string(g.external_ids()).expect("strings serialize");
    fs::write(path, json).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const NODES: &str = "e1\tentity\tTitanic\ne2\tentity\tHigh Seas\ne3\tentity\tOther\nc1\tconcept\tromance\n";

    #[test]
    fn small_graph_counts() {
        let edges = "e1\thas_genre\tc1\ne2\thas_genre\tc1\ne1\tEEL\te3\n";
        let g = parse_graph(NODES, edges, None).unwrap();
        assert_eq!(g.entity_count(), 3);
        assert_eq!(g.concept_count(), 1);
        assert_eq!(g.semantic_edges().len(), 2);
        assert_eq!(g.eel_edges().len(), 1);
        assert_eq!(g.names()[0], "Titanic");
    }

    #[test]
    fn empty_edges_file() {
        let g = parse_graph(NODES, "", None).unwrap();
        assert_eq!(g.semantic_edges().len() + g.eel_edges().len(), 0);
        assert_eq!(g.relations().len(), 1);
    }

    #[test]
    fn eel_to_concept_rejected() {
        let err = parse_graph(NODES, "e1\tEEL\tc1\n", None).unwrap_err();
        assert_eq!(err.to_string(), "EEL endpoint is not an entity: c1");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_graph(NODES, "e1\thas_genre\tc1\ne2 has_genre c1\n", None).unwrap_err();
        match err {
            GraphError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semantic_between_entities_rejected() {
        let err = parse_graph(NODES, "e1\thas_genre\te2\n", None).unwrap_err();
        assert!(matches!(err, GraphError::SemanticEndpoint(_)));
    }

    #[test]
    fn duplicate_edge_rejected() {
        let err = parse_graph(NODES, "e1\tEEL\te2\ne2\tEEL\te1\n", None).unwrap_err();
        assert!(matches!(err, GraphError::DuplicateEdge(_)));
    }

    #[test]
    fn unknown_relation_against_fixed_table() {
        let table = RelationTable::new(&["has_genre"]).unwrap();
        let err = parse_graph(NODES, "e1\thas_mood\tc1\n", Some(&table)).unwrap_err();
        assert!(matches!(err, GraphError::UnknownRelation(_)));
    }

    #[test]
    fn unknown_node_rejected() {
        let err = parse_graph(NODES, "e9\tEEL\te1\n", None).unwrap_err();
        assert!(matches!(err, GraphError::UnknownNode { line: 1, .. }));
    }

    #[test]
    fn entities_reindexed_before_concepts() {
        let nodes = "c1\tconcept\tx\ne1\tentity\ty\n";
        let g = parse_graph(nodes, "e1\tr\tc1\n", None).unwrap();
        assert_eq!(g.external_id(NodeId(0)), "e1");
        assert_eq!(g.external_id(NodeId(1)), "c1");
    }
}
