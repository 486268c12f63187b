mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;

use common::*;
use semgnn::kgraph::{HeteroGraph, NodeId, RelationId, RelationTable, SemanticEdge};
use semgnn::numcore::Matrix;
use semgnn::rgnn::{Activation, RGnnConfig, RGnnModel};

fn config(layers: usize, activation: Activation, separate: bool, seed: u64) -> RGnnConfig {
    RGnnConfig {
        layers,
        dim: 5,
        activation,
        leaky_slope: 0.2,
        separate_inverse_relations: separate,
        seed,
    }
}

fn activation(i: usize) -> Activation {
    [Activation::LeakyRelu, Activation::Relu, Activation::Tanh, Activation::Identity][i % 4]
}

/// Relabels entities by `pe` and concepts by `pc` (offsets within each
/// block), keeping edge-list order.
fn relabel(g: &HeteroGraph, pe: &[usize], pc: &[usize]) -> HeteroGraph {
    let e = g.entity_count();
    let map = |v: NodeId| {
        if v.idx() < e {
            NodeId::from_idx(pe[v.idx()])
        } else {
            NodeId::from_idx(e + pc[v.idx() - e])
        }
    };
    let sem = g
        .semantic_edges()
        .iter()
        .map(|s| SemanticEdge {
            entity: map(s.entity),
            relation: s.relation,
            concept: map(s.concept),
        })
        .collect();
    let eels = g.eel_edges().iter().map(|&(a, b)| (map(a), map(b))).collect();
    let dir = g.directed_eels().iter().map(|&(a, b)| (map(a), map(b))).collect();
    HeteroGraph::new(e, g.concept_count(), g.relations().clone(), sem, eels, dir, None, None).unwrap()
}

#[test]
fn four_node_layer_matches_oracle() {
    // e0 - e1 EEL, both linked to c0 by different relations, e2 isolated.
    let rel = RelationTable::new(&["a", "b"]).unwrap();
    let sem = vec![
        SemanticEdge {
            entity: NodeId(0),
            relation: RelationId(1),
            concept: NodeId(3),
        },
        SemanticEdge {
            entity: NodeId(1),
            relation: RelationId(2),
            concept: NodeId(3),
        },
    ];
    let g = HeteroGraph::new(3, 1, rel, sem, vec![(NodeId(0), NodeId(1))], vec![], None, None).unwrap();
    for (i, sep) in [(0, false), (1, true), (2, false), (3, true)] {
        let mut model = RGnnModel::for_graph(config(1, activation(i), sep, i as u64), 5, &g).unwrap();
        model.beta.data_mut().iter_mut().enumerate().for_each(|(k, b)| *b = 0.5 + k as f64 * 0.3);
        let h = Matrix::uniform(4, 5, 1.0, &mut rng(i as u64));
        let got = model.layer_forward(&g, &h, 0).unwrap();
        let want = layer_oracle(&model, &g, &h, 0);
        assert!(got.max_abs_diff(&want) < 1e-12, "{:?}", activation(i));
        // The isolated entity keeps its row.
        assert_eq!(got.row(2), h.row(2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layer_matches_scalar_oracle(seed in 0u64..10_000, act in 0usize..4, sep: bool, layer in 0usize..2) {
        let g = random_graph(7, 4, 3, 0.4, 0.35, seed);
        let mut model = RGnnModel::for_graph(config(2, activation(act), sep, seed), 3, &g).unwrap();
        let mut r = rng(seed + 1);
        model.beta = Matrix::uniform(model.beta.rows(), 1, 2.0, &mut r);
        let h = Matrix::uniform(g.node_count(), 5, 1.5, &mut r);
        let got = model.layer_forward(&g, &h, layer).unwrap();
        let want = layer_oracle(&model, &g, &h, layer);
        prop_assert!(got.max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn encoder_is_permutation_equivariant(seed in 0u64..10_000, act in 0usize..4, sep: bool) {
        let g = random_graph(8, 5, 2, 0.35, 0.3, seed);
        let mut r = rng(seed ^ 0x5eed);
        let mut pe: Vec<usize> = (0..g.entity_count()).collect();
        let mut pc: Vec<usize> = (0..g.concept_count()).collect();
        pe.shuffle(&mut r);
        pc.shuffle(&mut r);
        let gp = relabel(&g, &pe, &pc);
        let model = RGnnModel::for_graph(config(2, activation(act), sep, seed), 4, &g).unwrap();
        let x = Matrix::uniform(g.node_count(), 4, 1.0, &mut r);
        let e = g.entity_count();
        let new_id = |v: usize| if v < e { pe[v] } else { e + pc[v - e] };
        let mut xp = Matrix::zeros(x.rows(), x.cols());
        for v in 0..x.rows() {
            xp.row_mut(new_id(v)).copy_from_slice(x.row(v));
        }
        let h = model.encode(&g, &x).unwrap();
        let hp = model.encode(&gp, &xp).unwrap();
        for v in 0..h.rows() {
            for (a, b) in h.row(v).iter().zip(hp.row(new_id(v))) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    /// With L layers a feature change reaches exactly the nodes within L
    /// hops; everything else is bitwise unchanged.
    #[test]
    fn receptive_field_is_l_hops(seed in 0u64..10_000, layers in 1usize..=3) {
        let g = random_graph(10, 4, 2, 0.15, 0.2, seed);
        let model = RGnnModel::for_graph(config(layers, Activation::Tanh, false, seed), 3, &g).unwrap();
        let mut r = rng(seed + 7);
        let x = Matrix::uniform(g.node_count(), 3, 1.0, &mut r);
        let v = NodeId::from_idx(seed as usize % g.entity_count());
        let mut x2 = x.clone();
        x2.row_mut(v.idx()).iter_mut().for_each(|a| *a += 0.5);
        let h = model.encode(&g, &x).unwrap();
        let h2 = model.encode(&g, &x2).unwrap();
        let reach = within_hops(&g, &HashSet::from([v]), layers);
        for u in 0..g.node_count() {
            let same = h.row(u).iter().zip(h2.row(u)).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert_eq!(same, !reach.contains(&NodeId::from_idx(u)), "node {}", u);
        }
    }
}

#[test]
fn path_graph_second_layer_extends_reach() {
    // e0 - e1 - e2 - e3 - e4.
    let eels = (0..4).map(|i| (NodeId(i), NodeId(i + 1))).collect();
    let g = HeteroGraph::new(5, 1, RelationTable::new(&["r"]).unwrap(), vec![], eels, vec![], None, None).unwrap();
    let x = Matrix::uniform(6, 3, 1.0, &mut rng(5));
    let mut x2 = x.clone();
    x2.set(0, 0, x.get(0, 0) + 1.0);
    let changed = |layers: usize| -> Vec<usize> {
        let m = RGnnModel::for_graph(config(layers, Activation::LeakyRelu, false, 3), 3, &g).unwrap();
        let (a, b) = (m.encode(&g, &x).unwrap(), m.encode(&g, &x2).unwrap());
        (0..5).filter(|&v| a.row(v) != b.row(v)).collect()
    };
    assert_eq!(changed(1), vec![0, 1]);
    assert_eq!(changed(2), vec![0, 1, 2]);
}
