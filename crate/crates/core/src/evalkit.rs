//! Retrieval evaluation: MAP@K against similarity ground truth, broken down
//! by EEL-degree group, plus the EEL augmentation study.
//!
//! Candidates are ranked by dot product with the query embedding, ties by
//! ascending entity id. AP@K is normalized by `min(K, |relevant|)`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kgraph::{ordered_pair, GraphError, HeteroGraph, NodeId, GROUP_COUNT};
use crate::numcore::{dot, Matrix};
use crate::rgnn::RGnnModel;
use crate::syngen::PlantedTruth;
use crate::trainer::{infer, TrainError};

pub const REPORT_KS: [usize; 3] = [10, 50, 100];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilaritySource {
    CoSim,
    HcSim,
}

impl fmt::Display for SimilaritySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilaritySource::CoSim => "co_sim",
            SimilaritySource::HcSim => "hc_sim",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Transductive,
    Inductive,
    Augmented,
    Parity,
    Ablation,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("K must be positive")]
    ZeroK,
    #[error("no query has a nonempty relevant set")]
    NoQueries,
    #[error("entity {0} is out of range")]
    OutOfRange(usize),
    #[error("top_k = {top_k} needs more than {entities} entities")]
    TopKTooLarge { top_k: usize, entities: usize },
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{0}")]
    Io(String),
}

/// Relevant entities for every query entity of one source.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityGroundTruth {
    pub source: SimilaritySource,
    /// Sorted, without the query itself.
    pub relevant: Vec<Vec<u32>>,
}

impl SimilarityGroundTruth {
    /// Symmetric relevance from unordered pairs. Self-pairs are ignored.
    pub fn from_pairs(
        source: SimilaritySource,
        entity_count: usize,
        pairs: &[(u32, u32)],
    ) -> Result<Self, EvalError> {
        let mut relevant = vec![Vec::new(); entity_count];
        for &(a, b) in pairs {
            for v in [a, b] {
                if v as usize >= entity_count {
                    return Err(EvalError::OutOfRange(v as usize));
                }
            }
            if a != b {
                relevant[a as usize].push(b);
                relevant[b as usize].push(a);
            }
        }
        for r in &mut relevant {
            r.sort_unstable();
            r.dedup();
        }
        Ok(Self { source, relevant })
    }

    /// Co-Sim and HC-Sim truth from a planted truth file.
    pub fn from_truth(truth: &PlantedTruth, entity_count: usize) -> Result<Vec<Self>, EvalError> {
        Ok(vec![
            Self::from_pairs(SimilaritySource::CoSim, entity_count, &truth.co_sim_pairs)?,
            Self::from_pairs(SimilaritySource::HcSim, entity_count, &truth.hc_sim_pairs)?,
        ])
    }

    fn is_relevant(&self, q: usize, x: u32) -> bool {
        self.relevant[q].binary_search(&x).is_ok()
    }
}

/// Top `k` entities for `query` by descending dot product, ties by
/// ascending id; the query itself is excluded.
pub fn rank_top_k(embeddings: &Matrix, query: usize, k: usize) -> Vec<u32> {
    let q = embeddings.row(query);
    let mut scored: Vec<(f64, u32)> = (0..embeddings.rows())
        .filter(|&x| x != query)
        // `+ 0.0` folds -0.0 into 0.0 so signed zeros tie.
        .map(|x| (dot(q, embeddings.row(x)) + 0.0, x as u32))
        .collect();
    let cmp = |a: &(f64, u32), b: &(f64, u32)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    let k = k.min(scored.len());
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_unstable_by(cmp);
    scored.into_iter().map(|s| s.1).collect()
}

/// AP@K of a ranked list: `(1 / min(K, n_rel)) Σ_{k≤K} Prec@k · rel(k)`.
pub fn average_precision_at_k(ranked: &[u32], is_relevant: impl Fn(u32) -> bool, relevant_count: usize, k: usize) -> f64 {
    if relevant_count == 0 || k == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &x) in ranked.iter().take(k).enumerate() {
        if is_relevant(x) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    sum / k.min(relevant_count) as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapResult {
    pub map: f64,
    pub query_count: usize,
    /// Queries skipped for having no relevant entity.
    pub excluded: usize,
}

pub fn map_at_k(
    embeddings: &Matrix,
    truth: &SimilarityGroundTruth,
    k: usize,
    queries: &[usize],
) -> Result<MapResult, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    check_queries(embeddings, truth, queries)?;
    let valid: Vec<usize> = queries.iter().copied().filter(|&q| !truth.relevant[q].is_empty()).collect();
    if valid.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let aps: Vec<f64> = valid
        .par_iter()
        .map(|&q| {
            let ranked = rank_top_k(embeddings, q, k);
            average_precision_at_k(&ranked, |x| truth.is_relevant(q, x), truth.relevant[q].len(), k)
        })
        .collect();
    Ok(MapResult {
        map: aps.iter().sum::<f64>() / aps.len() as f64,
        query_count: aps.len(),
        excluded: queries.len() - aps.len(),
    })
}

fn check_queries(embeddings: &Matrix, truth: &SimilarityGroundTruth, queries: &[usize]) -> Result<(), EvalError> {
    if truth.relevant.len() != embeddings.rows() {
        return Err(EvalError::Mismatch(format!(
            "{} truth rows for {} embeddings",
            truth.relevant.len(),
            embeddings.rows()
        )));
    }
    if let Some(&q) = queries.iter().find(|&&q| q >= embeddings.rows()) {
        return Err(EvalError::OutOfRange(q));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub setting: Setting,
    pub source: SimilaritySource,
    #[serde(rename = "K")]
    pub k: usize,
    /// `"0"`, `"1"`, `"2"` or `"all"`.
    pub group: String,
    pub map: Option<f64>,
    pub query_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: Setting,
    pub artifact_hash: String,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn get(&self, source: SimilaritySource, k: usize, group: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.source == source && r.k == k && r.group == group)
            .and_then(|r| r.map)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting,source,K,group,map,query_count\n");
        for r in &self.rows {
            let map = r.map.map(|m| format!("{m:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.setting, r.source, r.k, r.group, map, r.query_count
            ));
        }
        out
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), EvalError> {
        let write = |name: String, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| EvalError::Io(format!("{}: {e}", p.display())))
        };
        write(format!("{stem}.csv"), self.to_csv())?;
        write(
            format!("{stem}.json"),
            serde_json::to_string_pretty(self).expect("report serializes"),
        )
    }
}

/// MAP@{10,50,100} per source, overall and per degree group. `groups[e]`
/// is entity `e`'s degree group; `queries = None` queries every entity.
pub fn evaluate(
    embeddings: &Matrix,
    truths: &[SimilarityGroundTruth],
    groups: &[u8],
    setting: Setting,
    queries: Option<&[usize]>,
    artifact_hash: &str,
) -> Result<EvalReport, EvalError> {
    let all: Vec<usize>;
    let queries = match queries {
        Some(q) => q,
        None => {
            all = (0..embeddings.rows()).collect();
            &all
        }
    };
    if groups.len() != embeddings.rows() {
        return Err(EvalError::Mismatch(format!(
            "{} group labels for {} embeddings",
            groups.len(),
            embeddings.rows()
        )));
    }
    let kmax = *REPORT_KS.iter().max().expect("nonempty");
    let mut rows = Vec::new();
    for truth in truths {
        check_queries(embeddings, truth, queries)?;
        let valid: Vec<usize> = queries.iter().copied().filter(|&q| !truth.relevant[q].is_empty()).collect();
        let aps: Vec<[f64; REPORT_KS.len()]> = valid
            .par_iter()
            .map(|&q| {
                let ranked = rank_top_k(embeddings, q, kmax);
                let n = truth.relevant[q].len();
                REPORT_KS.map(|k| average_precision_at_k(&ranked, |x| truth.is_relevant(q, x), n, k))
            })
            .collect();
        for (ki, &k) in REPORT_KS.iter().enumerate() {
            let labels = (0..GROUP_COUNT).map(|g| g.to_string()).chain(["all".to_string()]);
            for label in labels {
                let selected: Vec<f64> = valid
                    .iter()
                    .zip(&aps)
                    .filter(|(q, _)| label == "all" || groups[**q].to_string() == label)
                    .map(|(_, ap)| ap[ki])
                    .collect();
                let map = if selected.is_empty() {
                    None
                } else {
                    Some(selected.iter().sum::<f64>() / selected.len() as f64)
                };
                rows.push(EvalRow {
                    setting,
                    source: truth.source,
                    k,
                    group: label,
                    map,
                    query_count: selected.len(),
                });
            }
        }
    }
    Ok(EvalReport {
        setting,
        artifact_hash: artifact_hash.to_string(),
        rows,
    })
}

/// Encodes the full graph with frozen weights and queries only the holdout
/// entities (every entity when the holdout is empty).
pub fn evaluate_inductive(
    model: &RGnnModel,
    full: &HeteroGraph,
    features: &Matrix,
    holdout: &[NodeId],
    truths: &[SimilarityGroundTruth],
    groups: &[u8],
    artifact_hash: &str,
) -> Result<(EvalReport, Matrix), EvalError> {
    if let Some(v) = holdout.iter().find(|v| v.idx() >= full.entity_count()) {
        return Err(EvalError::OutOfRange(v.idx()));
    }
    let emb = infer(model, full, features)?;
    let queries: Vec<usize> = holdout.iter().map(|v| v.idx()).collect();
    let (setting, q) = if queries.is_empty() {
        (Setting::Transductive, None)
    } else {
        (Setting::Inductive, Some(queries.as_slice()))
    };
    Ok((evaluate(&emb, truths, groups, setting, q, artifact_hash)?, emb))
}

/// Same embeddings with rows permuted: a random-ranking baseline that keeps
/// the embedding distribution.
pub fn shuffled_rows(embeddings: &Matrix, seed: u64) -> Matrix {
    let mut perm: Vec<usize> = (0..embeddings.rows()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    embeddings.select_rows(&perm)
}

#[derive(Clone, Debug)]
pub struct Augmentation {
    pub graph: HeteroGraph,
    pub eels_before: usize,
    pub eels_after: usize,
    pub added_undirected: usize,
    pub added_directed: usize,
    /// Candidate pairs discarded because both endpoints were popular.
    pub dropped: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    Undirected,
    /// Entities with EEL degree above the threshold are popular and receive
    /// no new messages: popular–popular candidates are dropped,
    /// popular–other candidates become one-way edges from the popular end.
    Directed { popular_min_degree: usize },
}

/// Links every entity to its `top_k` nearest entities by L2 distance over
/// `embeddings` (ties by ascending id), skipping itself and existing EELs.
pub fn augment_eels(
    embeddings: &Matrix,
    g: &HeteroGraph,
    top_k: usize,
    mode: AugmentMode,
) -> Result<Augmentation, EvalError> {
    let n = g.entity_count();
    if embeddings.rows() != n {
        return Err(EvalError::Mismatch(format!("{} embeddings for {n} entities", embeddings.rows())));
    }
    if top_k >= n && top_k > 0 {
        return Err(EvalError::TopKTooLarge { top_k, entities: n });
    }
    let before = g.eel_edges().len() + g.directed_eels().len();
    if top_k == 0 {
        return Ok(Augmentation {
            graph: g.clone(),
            eels_before: before,
            eels_after: before,
            added_undirected: 0,
            added_directed: 0,
            dropped: 0,
        });
    }
    let mut existing: HashSet<(NodeId, NodeId)> = g.eel_set();
    existing.extend(g.directed_eels().iter().map(|&(a, b)| ordered_pair(a, b)));
    let per_entity: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = embeddings.row(i);
            let mut cands: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i && !existing.contains(&ordered_pair(NodeId::from_idx(i), NodeId::from_idx(j))))
                .map(|j| {
                    let d: f64 = row.iter().zip(embeddings.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d, j)
                })
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            let k = top_k.min(cands.len());
            if k == 0 {
                return Vec::new();
            }
            if k < cands.len() {
                cands.select_nth_unstable_by(k - 1, cmp);
                cands.truncate(k);
            }
            cands.sort_unstable_by(cmp);
            cands.into_iter().map(|c| c.1).collect()
        })
        .collect();
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (i, list) in per_entity.iter().enumerate() {
        for &j in list {
            let p = ordered_pair(NodeId::from_idx(i), NodeId::from_idx(j));
            if seen.insert(p) {
                pairs.push(p);
            }
        }
    }
    let mut eels = g.eel_edges().to_vec();
    let mut directed = g.directed_eels().to_vec();
    let (mut und, mut dir, mut dropped) = (0, 0, 0);
    for (a, b) in pairs {
        match mode {
            AugmentMode::Undirected => {
                eels.push((a, b));
                und += 1;
            }
            AugmentMode::Directed { popular_min_degree } => {
                let pop = |v: NodeId| g.eel_degrees()[v.idx()] > popular_min_degree;
                match (pop(a), pop(b)) {
                    (true, true) => dropped += 1,
                    (true, false) => {
                        directed.push((a, b));
                        dir += 1;
                    }
                    (false, true) => {
                        directed.push((b, a));
                        dir += 1;
                    }
                    (false, false) => {
                        eels.push((a, b));
                        und += 1;
                    }
                }
            }
        }
    }
    let graph = g.with_edges(g.semantic_edges().to_vec(), eels, directed)?;
    Ok(Augmentation {
        eels_after: graph.eel_edges().len() + graph.directed_eels().len(),
        graph,
        eels_before: before,
        added_undirected: und,
        added_directed: dir,
        dropped,
    })
}

/// Frozen-weight inference over a (possibly augmented) graph.
pub fn reinfer(model: &RGnnModel, g: &HeteroGraph, features: &Matrix) -> Result<Matrix, EvalError> {
    Ok(infer(model, g, features)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::RelationTable;

    fn truth_for(n: usize, pairs: &[(u32, u32)]) -> SimilarityGroundTruth {
        SimilarityGroundTruth::from_pairs(SimilaritySource::HcSim, n, pairs).unwrap()
    }

    #[test]
    fn perfect_ranking_scores_one() {
        // Query 0 points along x; 1 and 2 are relevant and score highest.
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.9, 0.0], vec![0.8, 0.0], vec![0.0, 1.0]]).unwrap();
        let t = truth_for(4, &[(0, 1), (0, 2)]);
        let r = map_at_k(&e, &t, 10, &[0]).unwrap();
        assert_eq!(r.map, 1.0);
    }

    #[test]
    fn single_relevant_at_rank_two() {
        let e = Matrix::from_rows(&[vec![1.0], vec![0.5], vec![0.9]]).unwrap();
        let t = truth_for(3, &[(0, 1)]);
        assert_eq!(map_at_k(&e, &t, 10, &[0]).unwrap().map, 0.5);
    }

    #[test]
    fn ties_break_by_id() {
        let e = Matrix::filled(4, 2, 1.0);
        assert_eq!(rank_top_k(&e, 2, 3), vec![0, 1, 3]);
    }

    #[test]
    fn signed_zero_scores_tie() {
        // Query (-1, 0): entity 1 scores -0.0, entity 2 scores +0.0.
        let e = Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0], vec![0.0, 1.0]]).unwrap();
        assert!(dot(e.row(0), e.row(1)).is_sign_negative());
        assert_eq!(rank_top_k(&e, 0, 2), vec![1, 2]);
    }

    #[test]
    fn empty_queries_excluded_and_counted() {
        let e = Matrix::from_rows(&[vec![1.0], vec![0.5], vec![0.9]]).unwrap();
        let t = truth_for(3, &[(0, 1)]);
        let r = map_at_k(&e, &t, 10, &[0, 2]).unwrap();
        assert_eq!((r.query_count, r.excluded), (1, 1));
        assert!(matches!(map_at_k(&e, &t, 10, &[2]), Err(EvalError::NoQueries)));
        assert!(matches!(map_at_k(&e, &t, 0, &[0]), Err(EvalError::ZeroK)));
    }

    #[test]
    fn report_shape_and_null_groups() {
        let e = Matrix::from_rows(&[vec![1.0], vec![0.5], vec![0.9]]).unwrap();
        let truths = vec![
            SimilarityGroundTruth::from_pairs(SimilaritySource::CoSim, 3, &[(0, 1)]).unwrap(),
            truth_for(3, &[(0, 2)]),
        ];
        let r = evaluate(&e, &truths, &[0, 0, 1], Setting::Transductive, None, "h").unwrap();
        assert_eq!(r.rows.len(), 24);
        let g2 = r.rows.iter().find(|x| x.group == "2").unwrap();
        assert_eq!((g2.map, g2.query_count), (None, 0));
        let csv = r.to_csv();
        assert!(csv.starts_with("setting,source,K,group,map,query_count\n"));
        assert!(csv.contains("transductive,co_sim,10,2,,0\n"));
    }

    #[test]
    fn augmentation_counts() {
        let rel = RelationTable::new(&["r"]).unwrap();
        let g = HeteroGraph::new(4, 1, rel, vec![], vec![(NodeId(0), NodeId(1))], vec![], None, None).unwrap();
        let e = Matrix::from_rows(&[vec![0.0], vec![0.1], vec![0.2], vec![5.0]]).unwrap();
        let same = augment_eels(&e, &g, 0, AugmentMode::Undirected).unwrap();
        assert_eq!(same.graph, g);
        let a = augment_eels(&e, &g, 1, AugmentMode::Undirected).unwrap();
        // 0→2, 1→2, 2→1 (dup), 3→2
        assert_eq!(a.added_undirected, 3);
        assert_eq!(a.eels_after, 4);
        assert!(a.eels_after <= a.eels_before + 4);
        assert!(matches!(
            augment_eels(&e, &g, 4, AugmentMode::Undirected),
            Err(EvalError::TopKTooLarge { .. })
        ));
    }

    #[test]
    fn directed_mode_protects_popular_entities() {
        let rel = RelationTable::new(&["r"]).unwrap();
        let e = |a, b| (NodeId(a), NodeId(b));
        // Entity 0 has degree 3; threshold 2 makes it popular.
        let g = HeteroGraph::new(6, 1, rel, vec![], vec![e(0, 1), e(0, 2), e(0, 3)], vec![], None, None).unwrap();
        let emb = Matrix::from_rows(&[vec![0.0], vec![9.0], vec![9.1], vec![9.2], vec![0.1], vec![20.0]]).unwrap();
        let a = augment_eels(&emb, &g, 1, AugmentMode::Directed { popular_min_degree: 2 }).unwrap();
        assert!(a.graph.directed_eels().contains(&(NodeId(0), NodeId(4))));
        for &(_, dst) in a.graph.directed_eels() {
            assert!(g.eel_degrees()[dst.idx()] <= 2);
        }
        for &(x, y) in &a.graph.eel_edges()[3..] {
            assert!(g.eel_degrees()[x.idx()] <= 2 && g.eel_degrees()[y.idx()] <= 2);
        }
    }
}
