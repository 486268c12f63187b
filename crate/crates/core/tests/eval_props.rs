mod common;

use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use rand::Rng;

use common::*;
use semgnn::evalkit::{
    augment_eels, evaluate, rank_top_k, reinfer, AugmentMode, Setting, SimilarityGroundTruth, SimilaritySource,
    REPORT_KS,
};
use semgnn::kgraph::{ordered_pair, NodeId};
use semgnn::numcore::Matrix;
use semgnn::rgnn::{RGnnConfig, RGnnModel};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn map_bounded_and_all_between_groups(seed in 0u64..100_000, n in 4usize..40, d in 1usize..5) {
        let mut r = rng(seed);
        let emb = Matrix::uniform(n, d, 1.0, &mut r);
        let pairs: Vec<(u32, u32)> = (0..2 * n).map(|_| (r.gen_range(0..n) as u32, r.gen_range(0..n) as u32)).collect();
        let truth = SimilarityGroundTruth::from_pairs(SimilaritySource::CoSim, n, &pairs).unwrap();
        prop_assume!(truth.relevant.iter().any(|x| !x.is_empty()));
        let groups: Vec<u8> = (0..n).map(|_| r.gen_range(0..3)).collect();
        let rep = evaluate(&emb, &[truth], &groups, Setting::Transductive, None, "").unwrap();
        for row in &rep.rows {
            if let Some(m) = row.map {
                prop_assert!((0.0..=1.0).contains(&m));
            }
        }
        for k in REPORT_KS {
            let per: Vec<f64> = ["0", "1", "2"].iter().filter_map(|g| rep.get(SimilaritySource::CoSim, k, g)).collect();
            let all = rep.get(SimilaritySource::CoSim, k, "all").unwrap();
            let (lo, hi) = per.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            prop_assert!(all >= lo - 1e-15 && all <= hi + 1e-15);
        }
    }
}

#[test]
fn community_indicator_embeddings_score_one() {
    let n = 24;
    let community = |e: usize| e % 4;
    let mut emb = Matrix::zeros(n, 4);
    let mut pairs = Vec::new();
    for e in 0..n {
        emb.set(e, community(e), 1.0);
        for f in e + 1..n {
            if community(e) == community(f) {
                pairs.push((e as u32, f as u32));
            }
        }
    }
    let truth = SimilarityGroundTruth::from_pairs(SimilaritySource::HcSim, n, &pairs).unwrap();
    let rep = evaluate(&emb, &[truth], &vec![0; n], Setting::Transductive, None, "").unwrap();
    for k in REPORT_KS {
        assert_eq!(rep.get(SimilaritySource::HcSim, k, "all"), Some(1.0));
    }
}

#[test]
fn identical_embeddings_rank_by_id() {
    let emb = Matrix::filled(24, 3, 0.25);
    for q in 0..24 {
        let want: Vec<u32> = (0..24u32).filter(|&x| x != q as u32).take(10).collect();
        assert_eq!(rank_top_k(&emb, q, 10), want);
    }
}

/// Brute-force undirected top-k augmentation.
fn augment_oracle(emb: &Matrix, existing: &HashSet<(NodeId, NodeId)>, k: usize) -> BTreeSet<(NodeId, NodeId)> {
    let n = emb.rows();
    let mut out = BTreeSet::new();
    for i in 0..n {
        let mut c: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i && !existing.contains(&ordered_pair(NodeId::from_idx(i), NodeId::from_idx(j))))
            .map(|j| {
                let mut d = 0.0;
                for t in 0..emb.cols() {
                    d += (emb.get(i, t) - emb.get(j, t)).powi(2);
                }
                (d, j)
            })
            .collect();
        c.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in c.iter().take(k) {
            out.insert(ordered_pair(NodeId::from_idx(i), NodeId::from_idx(j)));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn augmentation_matches_brute_force(seed in 0u64..100_000, k in 1usize..4) {
        let g = random_graph(12, 3, 2, 0.3, 0.2, seed);
        let emb = Matrix::uniform(12, 3, 1.0, &mut rng(seed + 1));
        let aug = augment_eels(&emb, &g, k, AugmentMode::Undirected).unwrap();
        let before: HashSet<_> = g.eel_set();
        let added: BTreeSet<_> = aug.graph.eel_edges().iter().copied().filter(|p| !before.contains(p)).collect();
        prop_assert_eq!(&added, &augment_oracle(&emb, &before, k));
        prop_assert_eq!(aug.eels_after, aug.eels_before + added.len());
        prop_assert!(aug.eels_after <= aug.eels_before + k * 12);
        prop_assert_eq!(aug.graph.semantic_edges(), g.semantic_edges());
    }

    /// Frozen re-inference after adding EELs leaves every entity outside the
    /// L-hop reach of the new endpoints bit-for-bit unchanged.
    #[test]
    fn reinference_is_local(seed in 0u64..100_000, layers in 1usize..=2) {
        let g = random_graph(16, 4, 2, 0.12, 0.12, seed);
        let mut r = rng(seed + 2);
        let (a, b) = (NodeId::from_idx(r.gen_range(0..16)), NodeId::from_idx(r.gen_range(0..16)));
        prop_assume!(a != b && !g.has_eel(a, b));
        let mut eels = g.eel_edges().to_vec();
        eels.push((a, b));
        let aug = g.with_edges(g.semantic_edges().to_vec(), eels, vec![]).unwrap();
        let model = RGnnModel::for_graph(RGnnConfig { layers, dim: 4, seed, ..RGnnConfig::default() }, 3, &g).unwrap();
        let x = Matrix::uniform(g.node_count(), 3, 1.0, &mut r);
        let (h0, h1) = (reinfer(&model, &g, &x).unwrap(), reinfer(&model, &aug, &x).unwrap());
        let reach = within_hops(&aug, &HashSet::from([a, b]), layers);
        for v in 0..16 {
            if !reach.contains(&NodeId::from_idx(v)) {
                prop_assert!(h0.row(v).iter().zip(h1.row(v)).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
        prop_assert!(h0.row(a.idx()) != h1.row(a.idx()) || h0.row(b.idx()) != h1.row(b.idx()));
    }
}
