//! Balanced k-way min-cut partitioning.
//!
//! Multilevel scheme: heavy-edge matching shrinks the graph until it is
//! small, recursive bisection (greedy graph growing + FM refinement) splits
//! the coarsest graph, and the partition is projected back level by level
//! with greedy boundary refinement. A final pass repairs balance on the
//! original graph.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seeds::stream_seed;

/// Weighted undirected graph in CSR form. Each edge appears in both
/// endpoint lists.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrGraph {
    pub xadj: Vec<usize>,
    pub adjncy: Vec<usize>,
    pub adjwgt: Vec<u64>,
    pub vwgt: Vec<u64>,
}

impl CsrGraph {
    /// Builds from undirected pairs over `n` vertices with unit weights.
    /// Duplicate pairs merge into one heavier edge; self-loops are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut lists: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b {
                lists[a].push((b, 1));
                lists[b].push((a, 1));
            }
        }
        Self::from_lists(lists, vec![1; n])
    }

    fn from_lists(mut lists: Vec<Vec<(usize, u64)>>, vwgt: Vec<u64>) -> Self {
        let mut xadj = Vec::with_capacity(lists.len() + 1);
        let mut adjncy = Vec::new();
        let mut adjwgt = Vec::new();
        xadj.push(0);
        for list in &mut lists {
            list.sort_unstable_by_key(|e| e.0);
            let mut i = 0;
            while i < list.len() {
                let (v, mut w) = list[i];
                i += 1;
                while i < list.len() && list[i].0 == v {
                    w += list[i].1;
                    i += 1;
                }
                adjncy.push(v);
                adjwgt.push(w);
            }
            xadj.push(adjncy.len());
        }
        Self {
            xadj,
            adjncy,
            adjwgt,
            vwgt,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vwgt.len()
    }

    pub fn total_weight(&self) -> u64 {
        self.vwgt.iter().sum()
    }

    fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let r = self.xadj[v]..self.xadj[v + 1];
        self.adjncy[r.clone()].iter().copied().zip(self.adjwgt[r].iter().copied())
    }
}

/// Total weight of edges whose endpoints lie in different parts.
pub fn edge_cut(g: &CsrGraph, part: &[usize]) -> u64 {
    let mut cut = 0;
    for v in 0..g.vertex_count() {
        for (u, w) in g.neighbors(v) {
            if v < u && part[v] != part[u] {
                cut += w;
            }
        }
    }
    cut
}

/// Inclusive bounds on part weight for `total` split `k` ways with
/// tolerance `eps`. Always admits the most even split.
pub fn balance_bounds(total: u64, k: usize, eps: f64) -> (u64, u64) {
    let avg = total as f64 / k as f64;
    let hi = ((1.0 + eps) * avg).floor().max(avg.ceil()) as u64;
    let lo = ((1.0 - eps) * avg).ceil().min(avg.floor()).max(0.0) as u64;
    (lo, hi)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PartitionError {
    #[error("cannot split {vertices} vertices into {parts} parts")]
    TooManyParts { parts: usize, vertices: usize },
    #[error("part count must be at least 1")]
    ZeroParts,
    #[error("balance tolerance must be in [0, 1), got {0}")]
    Tolerance(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct PartitionOptions {
    pub parts: usize,
    pub eps: f64,
    pub seed: u64,
    /// Independent multilevel runs; the best balanced result wins.
    pub trials: usize,
}

impl PartitionOptions {
    pub fn new(parts: usize, eps: f64, seed: u64) -> Self {
        Self {
            parts,
            eps,
            seed,
            trials: 4,
        }
    }
}

/// Partitions `g` into `opts.parts` balanced parts minimizing edge cut.
pub fn partition(g: &CsrGraph, opts: PartitionOptions) -> Result<Vec<usize>, PartitionError> {
    let n = g.vertex_count();
    let k = opts.parts;
    if k == 0 {
        return Err(PartitionError::ZeroParts);
    }
    if !(0.0..1.0).contains(&opts.eps) {
        return Err(PartitionError::Tolerance(opts.eps));
    }
    if k > n {
        return Err(PartitionError::TooManyParts { parts: k, vertices: n });
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let bounds = balance_bounds(g.total_weight(), k, opts.eps);
    let mut best: Option<(bool, u64, Vec<usize>)> = None;
    for trial in 0..opts.trials.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(opts.seed, &[trial as u64]));
        let part = multilevel(g, k, bounds, opts.eps, &mut rng);
        let balanced = is_balanced(g, &part, k, bounds);
        let cut = edge_cut(g, &part);
        let better = match &best {
            None => true,
            Some((b, c, _)) => (balanced && !*b) || (balanced == *b && cut < *c),
        };
        if better {
            best = Some((balanced, cut, part));
        }
    }
    Ok(best.expect("at least one trial").2)
}

fn part_weights(g: &CsrGraph, part: &[usize], k: usize) -> Vec<u64> {
    let mut w = vec![0; k];
    for (v, &p) in part.iter().enumerate() {
        w[p] += g.vwgt[v];
    }
    w
}

fn is_balanced(g: &CsrGraph, part: &[usize], k: usize, (lo, hi): (u64, u64)) -> bool {
    part_weights(g, part, k).iter().all(|&w| w >= lo && w <= hi)
}

const COARSEST_PER_PART: usize = 20;

fn multilevel(g: &CsrGraph, k: usize, bounds: (u64, u64), eps: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let target = (COARSEST_PER_PART * k).max(40);
    let max_vwgt = (1.5 * g.total_weight() as f64 / target as f64).ceil().max(1.0) as u64;
    let mut levels: Vec<CsrGraph> = vec![g.clone()];
    let mut maps: Vec<Vec<usize>> = Vec::new();
    loop {
        let cur = levels.last().expect("nonempty");
        if cur.vertex_count() <= target {
            break;
        }
        let (coarse, map) = coarsen(cur, max_vwgt, rng);
        if coarse.vertex_count() as f64 > 0.95 * cur.vertex_count() as f64 {
            break;
        }
        levels.push(coarse);
        maps.push(map);
    }

    let coarsest = levels.last().expect("nonempty");
    let mut part = vec![0; coarsest.vertex_count()];
    let all: Vec<usize> = (0..coarsest.vertex_count()).collect();
    recursive_bisect(coarsest, &all, k, 0, eps, &mut part, rng);
    refine_kway(coarsest, &mut part, k, bounds, rng);

    for lvl in (0..maps.len()).rev() {
        let fine = &levels[lvl];
        let map = &maps[lvl];
        let mut fine_part = vec![0; fine.vertex_count()];
        for v in 0..fine.vertex_count() {
            fine_part[v] = part[map[v]];
        }
        part = fine_part;
        refine_kway(fine, &mut part, k, bounds, rng);
    }
    rebalance(g, &mut part, k, bounds);
    refine_kway(g, &mut part, k, bounds, rng);
    part
}

/// Heavy-edge matching. Returns the coarse graph and fine→coarse map.
fn coarsen(g: &CsrGraph, max_vwgt: u64, rng: &mut ChaCha8Rng) -> (CsrGraph, Vec<usize>) {
    let n = g.vertex_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut mate = vec![usize::MAX; n];
    for &v in &order {
        if mate[v] != usize::MAX {
            continue;
        }
        let mut best = v;
        let mut best_w = 0;
        for (u, w) in g.neighbors(v) {
            if mate[u] == usize::MAX && u != v && w > best_w && g.vwgt[u] + g.vwgt[v] <= max_vwgt {
                best = u;
                best_w = w;
            }
        }
        mate[v] = best;
        mate[best] = v;
    }
    let mut map = vec![usize::MAX; n];
    let mut vwgt = Vec::new();
    for v in 0..n {
        if map[v] == usize::MAX {
            let id = vwgt.len();
            map[v] = id;
            map[mate[v]] = id;
            vwgt.push(if mate[v] == v { g.vwgt[v] } else { g.vwgt[v] + g.vwgt[mate[v]] });
        }
    }
    let mut lists: Vec<Vec<(usize, u64)>> = vec![Vec::new(); vwgt.len()];
    for v in 0..n {
        for (u, w) in g.neighbors(v) {
            if map[u] != map[v] {
                lists[map[v]].push((map[u], w));
            }
        }
    }
    (CsrGraph::from_lists(lists, vwgt), map)
}

/// Graph induced on `verts` with local ids in `verts` order.
fn induced(g: &CsrGraph, verts: &[usize]) -> CsrGraph {
    let mut local = std::collections::HashMap::with_capacity(verts.len());
    for (i, &v) in verts.iter().enumerate() {
        local.insert(v, i);
    }
    let lists = verts
        .iter()
        .map(|&v| {
            g.neighbors(v)
                .filter_map(|(u, w)| local.get(&u).map(|&lu| (lu, w)))
                .collect()
        })
        .collect();
    CsrGraph::from_lists(lists, verts.iter().map(|&v| g.vwgt[v]).collect())
}

fn recursive_bisect(
    g: &CsrGraph,
    verts: &[usize],
    k: usize,
    offset: usize,
    eps: f64,
    out: &mut [usize],
    rng: &mut ChaCha8Rng,
) {
    if k == 1 || verts.len() <= 1 {
        for &v in verts {
            out[v] = offset;
        }
        return;
    }
    let sub = induced(g, verts);
    let k0 = k / 2;
    let total = sub.total_weight();
    let target0 = (total as f64 * k0 as f64 / k as f64).round() as u64;
    let side = best_bisection(&sub, target0, eps, rng);
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (i, &v) in verts.iter().enumerate() {
        if side[i] == 0 {
            left.push(v);
        } else {
            right.push(v);
        }
    }
    recursive_bisect(g, &left, k0, offset, eps, out, rng);
    recursive_bisect(g, &right, k - k0, offset + k0, eps, out, rng);
}

const BISECTION_TRIALS: usize = 8;

fn best_bisection(g: &CsrGraph, target0: u64, eps: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let max_v = g.vwgt.iter().copied().max().unwrap_or(1);
    let slack = ((eps * target0 as f64).floor() as u64).max(max_v / 2);
    let lo = target0.saturating_sub(slack);
    let hi = target0 + slack;
    let mut best: Option<(u64, u64, Vec<usize>)> = None;
    for _ in 0..BISECTION_TRIALS {
        let mut side = grow_bisection(g, target0, rng);
        fm_refine(g, &mut side, (lo, hi));
        let cut = edge_cut(g, &side);
        let w0: u64 = (0..g.vertex_count()).filter(|&v| side[v] == 0).map(|v| g.vwgt[v]).sum();
        let dev = w0.abs_diff(target0).saturating_sub(slack);
        if best.as_ref().map_or(true, |(d, c, _)| (dev, cut) < (*d, *c)) {
            best = Some((dev, cut, side));
        }
    }
    best.expect("trials > 0").2
}

/// Greedy graph growing: side 0 absorbs the frontier vertex with the best
/// gain until it reaches `target0`.
fn grow_bisection(g: &CsrGraph, target0: u64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.vertex_count();
    let mut side = vec![1usize; n];
    // gain[v] = weight to side 0 - weight to side 1
    let mut gain: Vec<i64> = (0..n)
        .map(|v| -(g.neighbors(v).map(|(_, w)| w as i64).sum::<i64>()))
        .collect();
    let mut in_frontier = vec![false; n];
    let mut frontier: Vec<usize> = Vec::new();
    let mut w0 = 0;
    while w0 < target0 {
        let pick = if frontier.is_empty() {
            let rest: Vec<usize> = (0..n).filter(|&v| side[v] == 1).collect();
            match rest.choose(rng) {
                Some(&v) => v,
                None => break,
            }
        } else {
            let (i, _) = frontier
                .iter()
                .enumerate()
                .max_by_key(|&(_, &v)| (gain[v], std::cmp::Reverse(v)))
                .expect("nonempty");
            frontier.swap_remove(i)
        };
        if w0 > 0 && w0 + g.vwgt[pick] > target0 && w0 + g.vwgt[pick] - target0 > target0 - w0 {
            break;
        }
        side[pick] = 0;
        in_frontier[pick] = false;
        w0 += g.vwgt[pick];
        for (u, w) in g.neighbors(pick) {
            gain[u] += 2 * w as i64;
            if side[u] == 1 && !in_frontier[u] {
                in_frontier[u] = true;
                frontier.push(u);
            }
        }
    }
    side
}

/// Fiduccia–Mattheyses passes with rollback to the best prefix.
fn fm_refine(g: &CsrGraph, side: &mut [usize], (lo, hi): (u64, u64)) {
    let n = g.vertex_count();
    for _ in 0..8 {
        let mut w0: u64 = (0..n).filter(|&v| side[v] == 0).map(|v| g.vwgt[v]).sum();
        let gain_of = |side: &[usize], v: usize| -> i64 {
            g.neighbors(v)
                .map(|(u, w)| if side[u] == side[v] { -(w as i64) } else { w as i64 })
                .sum()
        };
        let mut gains: Vec<i64> = (0..n).map(|v| gain_of(side, v)).collect();
        let mut locked = vec![false; n];
        let mut moves = Vec::new();
        let mut cut = edge_cut(g, side) as i64;
        let imbalance = |w0: u64| w0.saturating_sub(hi) + lo.saturating_sub(w0);
        let mut best = (imbalance(w0), cut, 0usize);
        let start = best;
        let mut since_best = 0;
        while since_best < 50 {
            let mut pick: Option<usize> = None;
            for v in 0..n {
                if locked[v] {
                    continue;
                }
                let nw0 = if side[v] == 0 { w0 - g.vwgt[v] } else { w0 + g.vwgt[v] };
                let ok = (lo..=hi).contains(&nw0) || imbalance(nw0) < imbalance(w0);
                if !ok {
                    continue;
                }
                if pick.map_or(true, |p| gains[v] > gains[p]) {
                    pick = Some(v);
                }
            }
            let Some(v) = pick else { break };
            w0 = if side[v] == 0 { w0 - g.vwgt[v] } else { w0 + g.vwgt[v] };
            cut -= gains[v];
            side[v] ^= 1;
            locked[v] = true;
            gains[v] = -gains[v];
            for (u, w) in g.neighbors(v) {
                let w = w as i64;
                if side[u] == side[v] {
                    gains[u] -= 2 * w;
                } else {
                    gains[u] += 2 * w;
                }
            }
            moves.push(v);
            let state = (imbalance(w0), cut, moves.len());
            if (state.0, state.1) < (best.0, best.1) {
                best = state;
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        for &v in moves[best.2..].iter().rev() {
            side[v] ^= 1;
        }
        if (best.0, best.1) >= (start.0, start.1) {
            break;
        }
    }
}

/// Greedy boundary refinement: moves vertices to the adjacent part with the
/// largest positive cut reduction, keeping parts within bounds. A zero-gain
/// move is taken only when it strictly evens out the two parts involved.
fn refine_kway(g: &CsrGraph, part: &mut [usize], k: usize, (lo, hi): (u64, u64), rng: &mut ChaCha8Rng) {
    let n = g.vertex_count();
    let mut weights = part_weights(g, part, k);
    let mut conn = vec![0i64; k];
    let mut touched: Vec<usize> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..10 {
        let before = edge_cut(g, part);
        order.shuffle(rng);
        let mut moved = 0;
        for &v in &order {
            let a = part[v];
            for (u, w) in g.neighbors(v) {
                if conn[part[u]] == 0 {
                    touched.push(part[u]);
                }
                conn[part[u]] += w as i64;
            }
            let vw = g.vwgt[v];
            let mut best: Option<(i64, usize)> = None;
            for &b in &touched {
                if b == a || weights[b] + vw > hi || weights[a] < lo + vw {
                    continue;
                }
                let gain = conn[b] - conn[a];
                let evens = weights[b] + vw < weights[a];
                if gain > 0 || (gain == 0 && evens) {
                    if best.map_or(true, |(bg, bb)| gain > bg || (gain == bg && weights[b] < weights[bb])) {
                        best = Some((gain, b));
                    }
                }
            }
            for &p in &touched {
                conn[p] = 0;
            }
            conn[a] = 0;
            touched.clear();
            if let Some((_, b)) = best {
                part[v] = b;
                weights[a] -= vw;
                weights[b] += vw;
                moved += 1;
            }
        }
        let after = edge_cut(g, part);
        assert!(after <= before, "refinement increased cut {before} -> {after}");
        if moved == 0 || after == before {
            break;
        }
    }
}

/// Moves vertices out of overweight parts (and into underweight ones),
/// choosing the move that costs the least cut each time.
fn rebalance(g: &CsrGraph, part: &mut [usize], k: usize, (lo, hi): (u64, u64)) {
    let n = g.vertex_count();
    let mut weights = part_weights(g, part, k);
    let mut guard = 0;
    loop {
        let over = (0..k).filter(|&p| weights[p] > hi).max_by_key(|&p| weights[p]);
        let under = (0..k).filter(|&p| weights[p] < lo).min_by_key(|&p| weights[p]);
        let (from, to_fixed) = match (over, under) {
            (Some(o), u) => (o, u),
            (None, Some(u)) => {
                let donor = (0..k)
                    .filter(|&p| p != u)
                    .max_by_key(|&p| (weights[p], std::cmp::Reverse(p)))
                    .expect("k >= 2");
                (donor, Some(u))
            }
            (None, None) => return,
        };
        guard += 1;
        if guard > 4 * n + 16 {
            return;
        }
        let mut best: Option<(i64, usize, usize)> = None;
        for v in 0..n {
            if part[v] != from {
                continue;
            }
            let vw = g.vwgt[v];
            let mut conn = vec![0i64; k];
            for (u, w) in g.neighbors(v) {
                conn[part[u]] += w as i64;
            }
            let targets: Vec<usize> = match to_fixed {
                Some(t) => vec![t],
                None => (0..k).filter(|&t| t != from && weights[t] + vw <= hi).collect(),
            };
            for t in targets {
                let cost = conn[from] - conn[t];
                if best.map_or(true, |(c, _, bt)| cost < c || (cost == c && weights[t] < weights[bt])) {
                    best = Some((cost, v, t));
                }
            }
        }
        let Some((_, v, t)) = best else { return };
        part[v] = t;
        weights[from] -= g.vwgt[v];
        weights[t] += g.vwgt[v];
    }
}

/// Places each free vertex, one at a time, into the currently lightest part
/// (lowest index on ties). Returns the part chosen for each, in order.
pub fn assign_eel_free(sizes: &mut [usize], free_count: usize) -> Vec<usize> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        sizes.iter().enumerate().map(|(i, &s)| Reverse((s, i))).collect();
    let mut out = Vec::with_capacity(free_count);
    for _ in 0..free_count {
        let Reverse((s, i)) = heap.pop().expect("at least one part");
        out.push(i);
        sizes[i] = s + 1;
        heap.push(Reverse((s + 1, i)));
    }
    out
}

/// Random balanced assignment, for comparisons.
pub fn random_partition<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut part: Vec<usize> = (0..n).map(|i| i % k).collect();
    part.shuffle(rng);
    part
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cliques(size: usize) -> CsrGraph {
        let mut edges = Vec::new();
        for base in [0, size] {
            for i in 0..size {
                for j in i + 1..size {
                    edges.push((base + i, base + j));
                }
            }
        }
        CsrGraph::from_edges(2 * size, &edges)
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(balance_bounds(100, 4, 0.05), (24, 26));
        assert_eq!(balance_bounds(10, 3, 0.0), (3, 4));
        assert_eq!(balance_bounds(20, 2, 0.05), (10, 10));
    }

    #[test]
    fn separates_cliques() {
        let g = two_cliques(10);
        for seed in 0..5 {
            let p = partition(&g, PartitionOptions::new(2, 0.05, seed)).unwrap();
            assert_eq!(edge_cut(&g, &p), 0);
            assert_eq!(p.iter().filter(|&&x| x == 0).count(), 10);
        }
    }

    #[test]
    fn single_part() {
        let g = two_cliques(3);
        assert_eq!(partition(&g, PartitionOptions::new(1, 0.05, 0)).unwrap(), vec![0; 6]);
    }

    #[test]
    fn too_many_parts() {
        let g = CsrGraph::from_edges(3, &[(0, 1)]);
        assert_eq!(
            partition(&g, PartitionOptions::new(4, 0.05, 0)),
            Err(PartitionError::TooManyParts { parts: 4, vertices: 3 })
        );
    }

    #[test]
    fn water_filling() {
        let mut s = vec![5, 3];
        assert_eq!(assign_eel_free(&mut s, 4), vec![1, 1, 0, 1]);
        assert_eq!(s, vec![6, 6]);
        let mut s = vec![2, 2];
        assert!(assign_eel_free(&mut s, 0).is_empty());
        assert_eq!(s, vec![2, 2]);
        let mut s = vec![0; 4];
        assign_eel_free(&mut s, 10_000);
        assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
    }

    #[test]
    fn duplicate_edges_merge() {
        let g = CsrGraph::from_edges(2, &[(0, 1), (1, 0), (0, 0)]);
        assert_eq!(g.adjncy, vec![1, 0]);
        assert_eq!(g.adjwgt, vec![2, 2]);
    }
}
