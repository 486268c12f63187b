//! Heterogeneous knowledge graph: entity nodes, concept nodes, directed
//! entity→concept semantic edges and undirected entity–entity engagement
//! links (EELs).
//!
//! Entities and concepts share one dense id space. Entities occupy
//! `0..entity_count` and concepts follow, so `entity_count` is the split
//! point. The graph is immutable once built; every constructor validates the
//! edge invariants and materializes the adjacency lists used for message
//! passing.

mod io;
mod stats;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use io::{load_graph, load_graph_with_relations, parse_graph, save_graph, save_id_map};
pub use stats::{graph_stats, GraphStats};

/// Reserved relation name for undirected co-engagement edges.
pub const EEL_NAME: &str = "EEL";
/// Reserved relation name for one-way EELs (`src` sends messages to `dst`
/// only). Produced by directed augmentation.
pub const EEL_DIRECTED_NAME: &str = "EEL_DIRECTED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }

    pub fn from_idx(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("node index fits in u32"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u16);

impl RelationId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Semantic,
    Eel,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub id: RelationId,
    pub name: String,
    pub kind: RelationKind,
}

/// Relation vocabulary. Id 0 is always the EEL relation; semantic relations
/// follow in name order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationTable {
    types: Vec<RelationType>,
}

impl RelationTable {
    pub fn new<S: AsRef<str>>(semantic_names: &[S]) -> Result<Self, GraphError> {
        let mut names: Vec<&str> = semantic_names.iter().map(AsRef::as_ref).collect();
        names.sort_unstable();
        let mut types = vec![RelationType {
            id: RelationId(0),
            name: EEL_NAME.to_string(),
            kind: RelationKind::Eel,
        }];
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() || *name == EEL_NAME || *name == EEL_DIRECTED_NAME {
                return Err(GraphError::UnknownRelation(name.to_string()));
            }
            if i > 0 && names[i - 1] == *name {
                return Err(GraphError::DuplicateRelation(name.to_string()));
            }
            types.push(RelationType {
                id: RelationId(u16::try_from(i + 1).expect("relation count fits in u16")),
                name: name.to_string(),
                kind: RelationKind::Semantic,
            });
        }
        Ok(Self { types })
    }

    pub fn eel(&self) -> RelationId {
        RelationId(0)
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn semantic_count(&self) -> usize {
        self.types.len() - 1
    }

    pub fn get(&self, id: RelationId) -> Option<&RelationType> {
        self.types.get(id.idx())
    }

    pub fn name(&self, id: RelationId) -> &str {
        &self.types[id.idx()].name
    }

    pub fn by_name(&self, name: &str) -> Option<RelationId> {
        self.types.iter().find(|t| t.name == name).map(|t| t.id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RelationType> {
        self.types.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.types.iter().map(|t| t.name.clone()).collect()
    }

    /// Dense index of a semantic relation among semantic relations only.
    pub fn semantic_index(&self, id: RelationId) -> Option<usize> {
        match self.get(id)?.kind {
            RelationKind::Semantic => Some(id.idx() - 1),
            RelationKind::Eel => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SemanticEdge {
    pub entity: NodeId,
    pub relation: RelationId,
    pub concept: NodeId,
}

/// Which way a stored edge is traversed by an adjacency entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// Stored direction: entity→concept, or either side of an EEL.
    Forward,
    /// Concept→entity traversal of a semantic edge.
    Inverse,
}

/// One adjacency entry: `node` sends messages to the owner of the list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Neighbor {
    pub node: NodeId,
    pub relation: RelationId,
    pub orientation: Orientation,
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: malformed line: {msg}")]
    Malformed {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("{file}:{line}: unknown node id {id:?}")]
    UnknownNode {
        file: String,
        line: usize,
        id: String,
    },
    #[error("unknown relation name {0:?}")]
    UnknownRelation(String),
    #[error("duplicate relation name {0:?}")]
    DuplicateRelation(String),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("semantic edge must go from an entity to a concept: {0}")]
    SemanticEndpoint(String),
    #[error("EEL endpoint is not an entity: {0}")]
    EelEndpoint(String),
    #[error("self-loop EEL on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge: {0}")]
    DuplicateEdge(String),
    #[error("node {0} is not an entity")]
    NotEntity(NodeId),
    #[error("node {0} out of range")]
    OutOfRange(NodeId),
    #[error("inconsistent graph: {0}")]
    Inconsistent(String),
}

/// Canonical form of an undirected pair.
#[inline]
pub fn ordered_pair(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Debug)]
pub struct HeteroGraph {
    entity_count: usize,
    concept_count: usize,
    relations: RelationTable,
    semantic_edges: Vec<SemanticEdge>,
    eel_edges: Vec<(NodeId, NodeId)>,
    directed_eels: Vec<(NodeId, NodeId)>,
    adjacency: Vec<Vec<Neighbor>>,
    eel_degree: Vec<usize>,
    external_ids: Vec<String>,
    names: Vec<String>,
}

impl PartialEq for HeteroGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entity_count == other.entity_count
            && self.concept_count == other.concept_count
            && self.relations == other.relations
            && self.semantic_edges == other.semantic_edges
            && self.eel_edges == other.eel_edges
            && self.directed_eels == other.directed_eels
            && self.external_ids == other.external_ids
            && self.names == other.names
    }
}

/// Degree-group boundaries on EEL degree: `<= 3` is group 0, `<= 6` group 1,
/// anything larger group 2.
pub const GROUP0_MAX_DEGREE: usize = 3;
pub const GROUP1_MAX_DEGREE: usize = 6;
pub const GROUP_COUNT: usize = 3;

pub fn group_of_degree(degree: usize) -> u8 {
    if degree <= GROUP0_MAX_DEGREE {
        0
    } else if degree <= GROUP1_MAX_DEGREE {
        1
    } else {
        2
    }
}

impl HeteroGraph {
    /// Validates the edge lists and builds adjacency. EEL pairs are stored in
    /// canonical `(low, high)` order; semantic and EEL order is otherwise kept.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        entity_count: usize,
        concept_count: usize,
        relations: RelationTable,
        semantic_edges: Vec<SemanticEdge>,
        eel_edges: Vec<(NodeId, NodeId)>,
        directed_eels: Vec<(NodeId, NodeId)>,
        external_ids: Option<Vec<String>>,
        names: Option<Vec<String>>,
    ) -> Result<Self, GraphError> {
        let n = entity_count + concept_count;
        if u32::try_from(n).is_err() {
            return Err(GraphError::Inconsistent(format!("{n} nodes exceed u32 ids")));
        }
        let external_ids = match external_ids {
            Some(ids) => ids,
            None => default_external_ids(entity_count, concept_count),
        };
        let names = names.unwrap_or_else(|| external_ids.clone());
        if external_ids.len() != n || names.len() != n {
            return Err(GraphError::Inconsistent(format!(
                "{n} nodes but {} ids and {} names",
                external_ids.len(),
                names.len()
            )));
        }
        let is_entity = |v: NodeId| v.idx() < entity_count;
        let in_range = |v: NodeId| v.idx() < n;

        let mut seen_sem = HashSet::with_capacity(semantic_edges.len());
        for e in &semantic_edges {
            for v in [e.entity, e.concept] {
                if !in_range(v) {
                    return Err(GraphError::OutOfRange(v));
                }
            }
            match relations.get(e.relation) {
                Some(t) if t.kind == RelationKind::Semantic => {}
                _ => return Err(GraphError::UnknownRelation(format!("id {}", e.relation.0))),
            }
            if !is_entity(e.entity) || is_entity(e.concept) {
                return Err(GraphError::SemanticEndpoint(format!(
                    "{} {} {}",
                    external_ids[e.entity.idx()],
                    relations.name(e.relation),
                    external_ids[e.concept.idx()]
                )));
            }
            if !seen_sem.insert(*e) {
                return Err(GraphError::DuplicateEdge(format!(
                    "{} {} {}",
                    external_ids[e.entity.idx()],
                    relations.name(e.relation),
                    external_ids[e.concept.idx()]
                )));
            }
        }

        let mut eels = Vec::with_capacity(eel_edges.len());
        let mut seen_eel = HashSet::with_capacity(eel_edges.len());
        for &(a, b) in &eel_edges {
            validate_eel(a, b, n, entity_count, &external_ids)?;
            let p = ordered_pair(a, b);
            if !seen_eel.insert(p) {
                return Err(GraphError::DuplicateEdge(format!(
                    "{} EEL {}",
                    external_ids[a.idx()],
                    external_ids[b.idx()]
                )));
            }
            eels.push(p);
        }
        let mut seen_dir = HashSet::with_capacity(directed_eels.len());
        for &(a, b) in &directed_eels {
            validate_eel(a, b, n, entity_count, &external_ids)?;
            if seen_eel.contains(&ordered_pair(a, b)) || !seen_dir.insert((a, b)) {
                return Err(GraphError::DuplicateEdge(format!(
                    "{} {EEL_DIRECTED_NAME} {}",
                    external_ids[a.idx()],
                    external_ids[b.idx()]
                )));
            }
        }

        let mut g = Self {
            entity_count,
            concept_count,
            relations,
            semantic_edges,
            eel_edges: eels,
            directed_eels,
            adjacency: Vec::new(),
            eel_degree: Vec::new(),
            external_ids,
            names,
        };
        g.adjacency = g.build_adjacency();
        g.eel_degree = vec![0; entity_count];
        for &(a, b) in &g.eel_edges {
            g.eel_degree[a.idx()] += 1;
            g.eel_degree[b.idx()] += 1;
        }
        Ok(g)
    }

    /// Adjacency derived from the edge lists. Per node, entries appear in
    /// edge-list order: semantic edges, then EELs, then directed EELs.
    pub fn build_adjacency(&self) -> Vec<Vec<Neighbor>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for e in &self.semantic_edges {
            adj[e.entity.idx()].push(Neighbor {
                node: e.concept,
                relation: e.relation,
                orientation: Orientation::Forward,
            });
            adj[e.concept.idx()].push(Neighbor {
                node: e.entity,
                relation: e.relation,
                orientation: Orientation::Inverse,
            });
        }
        let eel = self.relations.eel();
        for &(a, b) in &self.eel_edges {
            adj[a.idx()].push(Neighbor {
                node: b,
                relation: eel,
                orientation: Orientation::Forward,
            });
            adj[b.idx()].push(Neighbor {
                node: a,
                relation: eel,
                orientation: Orientation::Forward,
            });
        }
        for &(src, dst) in &self.directed_eels {
            adj[dst.idx()].push(Neighbor {
                node: src,
                relation: eel,
                orientation: Orientation::Forward,
            });
        }
        adj
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn concept_count(&self) -> usize {
        self.concept_count
    }

    pub fn node_count(&self) -> usize {
        self.entity_count + self.concept_count
    }

    pub fn relations(&self) -> &RelationTable {
        &self.relations
    }

    pub fn semantic_edges(&self) -> &[SemanticEdge] {
        &self.semantic_edges
    }

    /// Undirected EELs as canonical `(low, high)` pairs.
    pub fn eel_edges(&self) -> &[(NodeId, NodeId)] {
        &self.eel_edges
    }

    pub fn directed_eels(&self) -> &[(NodeId, NodeId)] {
        &self.directed_eels
    }

    pub fn adjacency(&self) -> &[Vec<Neighbor>] {
        &self.adjacency
    }

    pub fn neighbors(&self, v: NodeId) -> &[Neighbor] {
        &self.adjacency[v.idx()]
    }

    pub fn external_ids(&self) -> &[String] {
        &self.external_ids
    }

    pub fn external_id(&self, v: NodeId) -> &str {
        &self.external_ids[v.idx()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn is_entity(&self, v: NodeId) -> bool {
        v.idx() < self.entity_count
    }

    #[inline]
    pub fn is_concept(&self, v: NodeId) -> bool {
        v.idx() >= self.entity_count && v.idx() < self.node_count()
    }

    pub fn entities(&self) -> impl Iterator<Item = NodeId> {
        (0..self.entity_count).map(NodeId::from_idx)
    }

    pub fn concepts(&self) -> impl Iterator<Item = NodeId> {
        (self.entity_count..self.node_count()).map(NodeId::from_idx)
    }

    fn check_entity(&self, v: NodeId) -> Result<(), GraphError> {
        if self.is_entity(v) {
            Ok(())
        } else if v.idx() < self.node_count() {
            Err(GraphError::NotEntity(v))
        } else {
            Err(GraphError::OutOfRange(v))
        }
    }

    /// Number of undirected EELs incident to entity `v`.
    pub fn eel_degree(&self, v: NodeId) -> Result<usize, GraphError> {
        self.check_entity(v)?;
        Ok(self.eel_degree[v.idx()])
    }

    pub fn eel_degrees(&self) -> &[usize] {
        &self.eel_degree
    }

    pub fn degree_group(&self, v: NodeId) -> Result<u8, GraphError> {
        Ok(group_of_degree(self.eel_degree(v)?))
    }

    /// Degree group of every entity, indexed by entity id.
    pub fn degree_groups(&self) -> Vec<u8> {
        self.eel_degree.iter().map(|&d| group_of_degree(d)).collect()
    }

    pub fn eel_set(&self) -> HashSet<(NodeId, NodeId)> {
        self.eel_edges.iter().copied().collect()
    }

    pub fn has_eel(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a.idx()]
            .iter()
            .any(|nb| nb.node == b && nb.relation == self.relations.eel())
    }

    /// Copy of this graph with a different edge set over the same nodes.
    pub fn with_edges(
        &self,
        semantic_edges: Vec<SemanticEdge>,
        eel_edges: Vec<(NodeId, NodeId)>,
        directed_eels: Vec<(NodeId, NodeId)>,
    ) -> Result<Self, GraphError> {
        Self::new(
            self.entity_count,
            self.concept_count,
            self.relations.clone(),
            semantic_edges,
            eel_edges,
            directed_eels,
            Some(self.external_ids.clone()),
            Some(self.names.clone()),
        )
    }

    /// Same nodes and EELs, no semantic edges.
    pub fn without_semantic_edges(&self) -> Self {
        self.with_edges(Vec::new(), self.eel_edges.clone(), self.directed_eels.clone())
            .expect("subset of a valid graph")
    }

    /// Same nodes; every edge touching an entity in `removed` is dropped.
    pub fn without_entity_edges(&self, removed: &HashSet<NodeId>) -> Self {
        let sem = self
            .semantic_edges
            .iter()
            .filter(|e| !removed.contains(&e.entity))
            .copied()
            .collect();
        let keep = |&(a, b): &(NodeId, NodeId)| !removed.contains(&a) && !removed.contains(&b);
        let eel = self.eel_edges.iter().copied().filter(keep).collect();
        let dir = self.directed_eels.iter().copied().filter(keep).collect();
        self.with_edges(sem, eel, dir).expect("subset of a valid graph")
    }

    /// Subgraph over `entities` (global ids, any order) plus every concept.
    /// Local entity ids follow the order of `entities`; concepts keep their
    /// relative order after them. Returns the graph and the local→global map.
    ///
    /// `eel_filter` decides which EELs among the kept entities survive.
    pub fn induced_with_all_concepts(
        &self,
        entities: &[NodeId],
        semantic_owner: impl Fn(NodeId) -> bool,
        eel_filter: impl Fn(NodeId, NodeId) -> bool,
    ) -> Result<(Self, Vec<NodeId>), GraphError> {
        let mut local = vec![u32::MAX; self.node_count()];
        let mut global = Vec::with_capacity(entities.len() + self.concept_count);
        for &e in entities {
            self.check_entity(e)?;
            if local[e.idx()] != u32::MAX {
                return Err(GraphError::Inconsistent(format!("entity {e} listed twice")));
            }
            local[e.idx()] = global.len() as u32;
            global.push(e);
        }
        for c in self.concepts() {
            local[c.idx()] = global.len() as u32;
            global.push(c);
        }
        let map = |v: NodeId| NodeId(local[v.idx()]);
        let kept = |v: NodeId| local[v.idx()] != u32::MAX;

        let sem = self
            .semantic_edges
            .iter()
            .filter(|e| kept(e.entity) && semantic_owner(e.entity))
            .map(|e| SemanticEdge {
                entity: map(e.entity),
                relation: e.relation,
                concept: map(e.concept),
            })
            .collect();
        let eel = self
            .eel_edges
            .iter()
            .filter(|&&(a, b)| kept(a) && kept(b) && eel_filter(a, b))
            .map(|&(a, b)| (map(a), map(b)))
            .collect();
        let dir = self
            .directed_eels
            .iter()
            .filter(|&&(a, b)| kept(a) && kept(b) && eel_filter(a, b))
            .map(|&(a, b)| (map(a), map(b)))
            .collect();
        let ids = global.iter().map(|v| self.external_ids[v.idx()].clone()).collect();
        let names = global.iter().map(|v| self.names[v.idx()].clone()).collect();
        let g = Self::new(
            entities.len(),
            self.concept_count,
            self.relations.clone(),
            sem,
            eel,
            dir,
            Some(ids),
            Some(names),
        )?;
        Ok((g, global))
    }

    /// SHA-256 over the canonical TSV serialization.
    pub fn content_hash(&self) -> String {
        let (nodes, edges) = io::to_tsv(self);
        let mut h = Sha256::new();
        h.update(nodes.as_bytes());
        h.update([0u8]);
        h.update(edges.as_bytes());
        hex::encode(h.finalize())
    }
}

fn validate_eel(
    a: NodeId,
    b: NodeId,
    n: usize,
    entity_count: usize,
    ids: &[String],
) -> Result<(), GraphError> {
    for v in [a, b] {
        if v.idx() >= n {
            return Err(GraphError::OutOfRange(v));
        }
    }
    for v in [a, b] {
        if v.idx() >= entity_count {
            return Err(GraphError::EelEndpoint(ids[v.idx()].clone()));
        }
    }
    if a == b {
        return Err(GraphError::SelfLoop(a));
    }
    Ok(())
}

fn default_external_ids(entities: usize, concepts: usize) -> Vec<String> {
    (0..entities)
        .map(|i| format!("e{i}"))
        .chain((0..concepts).map(|i| format!("c{i}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy() -> HeteroGraph {
        // entities 0..4, concepts 4,5
        let rel = RelationTable::new(&["has_genre", "has_mood"]).unwrap();
        let g = rel.by_name("has_genre").unwrap();
        let m = rel.by_name("has_mood").unwrap();
        let sem = vec![
            SemanticEdge { entity: NodeId(0), relation: g, concept: NodeId(4) },
            SemanticEdge { entity: NodeId(1), relation: g, concept: NodeId(4) },
            SemanticEdge { entity: NodeId(2), relation: m, concept: NodeId(5) },
        ];
        let eel = vec![(NodeId(1), NodeId(0)), (NodeId(0), NodeId(2))];
        HeteroGraph::new(4, 2, rel, sem, eel, vec![], None, None).unwrap()
    }

    #[test]
    fn relation_table_layout() {
        let rel = RelationTable::new(&["b_rel", "a_rel"]).unwrap();
        assert_eq!(rel.eel(), RelationId(0));
        assert_eq!(rel.name(RelationId(1)), "a_rel");
        assert_eq!(rel.semantic_index(RelationId(2)), Some(1));
        assert_eq!(rel.semantic_index(RelationId(0)), None);
        assert_eq!(rel.iter().filter(|t| t.kind == RelationKind::Eel).count(), 1);
        assert!(matches!(
            RelationTable::new(&["x", "x"]),
            Err(GraphError::DuplicateRelation(_))
        ));
    }

    #[test]
    fn eel_degree_and_groups() {
        let g = toy();
        assert_eq!(g.eel_degree(NodeId(0)).unwrap(), 2);
        assert_eq!(g.eel_degree(NodeId(3)).unwrap(), 0);
        assert!(matches!(g.eel_degree(NodeId(4)), Err(GraphError::NotEntity(_))));
        assert!(matches!(g.degree_group(NodeId(5)), Err(GraphError::NotEntity(_))));
        assert_eq!(group_of_degree(0), 0);
        assert_eq!(group_of_degree(3), 0);
        assert_eq!(group_of_degree(4), 1);
        assert_eq!(group_of_degree(6), 1);
        assert_eq!(group_of_degree(7), 2);
    }

    #[test]
    fn adding_an_eel_bumps_both_endpoints() {
        let g = toy();
        let mut eels = g.eel_edges().to_vec();
        eels.push((NodeId(3), NodeId(1)));
        let g2 = g
            .with_edges(g.semantic_edges().to_vec(), eels, vec![])
            .unwrap();
        assert_eq!(g2.eel_degree(NodeId(3)).unwrap(), g.eel_degree(NodeId(3)).unwrap() + 1);
        assert_eq!(g2.eel_degree(NodeId(1)).unwrap(), g.eel_degree(NodeId(1)).unwrap() + 1);
    }

    #[test]
    fn invariant_violations_rejected() {
        let g = toy();
        let sem = g.semantic_edges().to_vec();
        let bad_sem = vec![SemanticEdge {
            entity: NodeId(0),
            relation: RelationId(1),
            concept: NodeId(1),
        }];
        assert!(matches!(
            g.with_edges(bad_sem, vec![], vec![]),
            Err(GraphError::SemanticEndpoint(_))
        ));
        assert!(matches!(
            g.with_edges(sem.clone(), vec![(NodeId(0), NodeId(4))], vec![]),
            Err(GraphError::EelEndpoint(_))
        ));
        assert!(matches!(
            g.with_edges(sem.clone(), vec![(NodeId(2), NodeId(2))], vec![]),
            Err(GraphError::SelfLoop(_))
        ));
        assert!(matches!(
            g.with_edges(sem.clone(), vec![(NodeId(0), NodeId(1)), (NodeId(1), NodeId(0))], vec![]),
            Err(GraphError::DuplicateEdge(_))
        ));
        let mut dup = sem.clone();
        dup.push(sem[0]);
        assert!(matches!(
            g.with_edges(dup, vec![], vec![]),
            Err(GraphError::DuplicateEdge(_))
        ));
    }

    #[test]
    fn adjacency_orientation() {
        let g = toy();
        let c = g.neighbors(NodeId(4));
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|nb| nb.orientation == Orientation::Inverse));
        let e0 = g.neighbors(NodeId(0));
        assert!(e0
            .iter()
            .any(|nb| nb.node == NodeId(4) && nb.orientation == Orientation::Forward));
        assert!(g.has_eel(NodeId(0), NodeId(1)) && g.has_eel(NodeId(1), NodeId(0)));
        assert_eq!(g.adjacency(), g.build_adjacency().as_slice());
    }

    #[test]
    fn induced_keeps_all_concepts() {
        let g = toy();
        let (sub, global) = g
            .induced_with_all_concepts(&[NodeId(2), NodeId(0)], |_| true, |_, _| true)
            .unwrap();
        assert_eq!(sub.entity_count(), 2);
        assert_eq!(sub.concept_count(), 2);
        assert_eq!(global, vec![NodeId(2), NodeId(0), NodeId(4), NodeId(5)]);
        assert_eq!(sub.eel_edges(), &[(NodeId(0), NodeId(1))]);
        assert_eq!(sub.semantic_edges().len(), 2);
        assert_eq!(sub.external_id(NodeId(0)), "e2");
    }
}
