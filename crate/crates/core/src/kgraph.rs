//! The finite bilateral nearest-neighbor graph.
//!
//! Edge costs are i.i.d. Exp(1/n), realized on demand from a keyed hash so a
//! 5·10^4-vertex graph needs no O(n²) storage: the cost of {i,j} is
//! -n·ln(u) with u = ((h >> 11)+1)·2^-53 and
//! h = mix64(seed ^ (mix64(min(i,j)) ^ max(i,j))), mix64 being the splitmix64
//! finalizer. Symmetry is exact by construction and the map is identical on
//! every platform.
//!
//! Each vertex keeps its d_i cheapest incident edges (threshold = the
//! (d_i+1)-st smallest cost); an edge survives iff both endpoints keep it.
//! Selection compares u values (monotone in cost), so the logarithm is only
//! taken for the d_i+1 finalists per vertex.

use crate::error::{domain, Result};
use crate::numerics::DegreePmf;
use crate::rng::{derive_stream, mix64, SplitMix64};
use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Deterministic pairwise edge costs.
#[derive(Debug, Clone, Copy)]
pub struct EdgeCostOracle {
    pub n: usize,
    pub seed: u64,
}

impl EdgeCostOracle {
    pub fn new(n: usize, seed: u64) -> Self {
        EdgeCostOracle { n, seed }
    }

    /// Uniform-(0,1] representative of the pair; larger u means cheaper.
    #[inline]
    fn u(&self, i: u32, j: u32) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let h = mix64(self.seed ^ (mix64(a as u64) ^ b as u64));
        ((h >> 11) + 1) as f64 * 2.0f64.powi(-53)
    }

    /// Exp(1/n) cost of the edge {i, j}.
    pub fn cost(&self, i: u32, j: u32) -> Result<f64> {
        if i == j {
            return Err(domain("edge_cost: i and j must differ"));
        }
        if i as usize >= self.n || j as usize >= self.n {
            return Err(domain("edge_cost: vertex out of range"));
        }
        Ok(-(self.n as f64) * libm::log(self.u(i, j)))
    }
}

/// Cheaper-first ordering key: larger u first, index as the tie-break.
#[derive(Debug, Clone, Copy, PartialEq)]
struct UKey {
    u: f64,
    j: u32,
}

impl Eq for UKey {}

impl Ord for UKey {
    fn cmp(&self, other: &Self) -> Ordering {
        // greater key = cheaper edge; equal u broken by smaller index
        self.u
            .total_cmp(&other.u)
            .then_with(|| other.j.cmp(&self.j))
    }
}

impl PartialOrd for UKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Potential degrees: an explicit sequence or i.i.d. draws from a law.
#[derive(Debug, Clone)]
pub enum DegreesInput<'a> {
    Explicit(&'a [u32]),
    FromPmf(&'a DegreePmf),
}

/// A realized graph: thresholds, potential sets, surviving edges, components.
#[derive(Debug, Clone)]
pub struct GraphSample {
    pub n: usize,
    pub seed: u64,
    pub degrees: Vec<u32>,
    /// How many sampled degrees had to be clamped into [1, n-2].
    pub clamped: usize,
    pub thresholds: Vec<f64>,
    /// Sorted potential-neighbor lists, |potential[i]| = degrees[i].
    pub potential: Vec<Vec<u32>>,
    /// Surviving edges, lexicographically sorted with i < j.
    pub edges: Vec<(u32, u32)>,
    /// Adjacency lists of the surviving graph.
    pub adj: Vec<Vec<u32>>,
    /// Component label per vertex.
    pub component: Vec<u32>,
    pub component_sizes: Vec<usize>,
}

pub fn build_graph(n: usize, degrees: DegreesInput<'_>, seed: u64) -> Result<GraphSample> {
    if n < 3 {
        return Err(domain("build_graph: n must be >= 3"));
    }
    let mut clamped = 0usize;
    let degs: Vec<u32> = match degrees {
        DegreesInput::Explicit(d) => {
            if d.len() != n {
                return Err(domain("build_graph: degree sequence length != n"));
            }
            for &di in d {
                if di < 1 || di as usize > n - 2 {
                    return Err(domain("build_graph: degrees must lie in [1, n-2]"));
                }
            }
            d.to_vec()
        }
        DegreesInput::FromPmf(pmf) => {
            let mut rng = SplitMix64::new(derive_stream(seed, 0x5eed_de95));
            (0..n)
                .map(|_| {
                    let d = pmf.sample(rng.next_f64());
                    let c = d.clamp(1, (n - 2) as u32);
                    if c != d {
                        clamped += 1;
                    }
                    c
                })
                .collect()
        }
    };
    let oracle = EdgeCostOracle::new(n, seed);

    // per-vertex scan: keep the d_i+1 cheapest incident edges
    let per_vertex: Vec<(f64, Vec<u32>)> = (0..n as u32)
        .into_par_iter()
        .map(|i| {
            let keep = degs[i as usize] as usize + 1;
            let mut heap: BinaryHeap<std::cmp::Reverse<UKey>> = BinaryHeap::with_capacity(keep + 1);
            for j in 0..n as u32 {
                if j == i {
                    continue;
                }
                let key = UKey {
                    u: oracle.u(i, j),
                    j,
                };
                if heap.len() < keep {
                    heap.push(std::cmp::Reverse(key));
                } else if key > heap.peek().unwrap().0 {
                    heap.pop();
                    heap.push(std::cmp::Reverse(key));
                }
            }
            // the heap minimum is the (d_i+1)-st cheapest: the threshold
            let threshold_key = heap.pop().unwrap().0;
            let threshold = -(n as f64) * libm::log(threshold_key.u);
            let mut pot: Vec<u32> = heap.into_iter().map(|r| r.0.j).collect();
            pot.sort_unstable();
            (threshold, pot)
        })
        .collect();
    let thresholds: Vec<f64> = per_vertex.iter().map(|(t, _)| *t).collect();
    let potential: Vec<Vec<u32>> = per_vertex.into_iter().map(|(_, p)| p).collect();

    // bilateral survival
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        for &j in &potential[i as usize] {
            if j > i && potential[j as usize].binary_search(&i).is_ok() {
                edges.push((i, j));
            }
        }
    }
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in &edges {
        adj[i as usize].push(j);
        adj[j as usize].push(i);
    }
    let (component, component_sizes) = components(n, &edges);
    Ok(GraphSample {
        n,
        seed,
        degrees: degs,
        clamped,
        thresholds,
        potential,
        edges,
        adj,
        component,
        component_sizes,
    })
}

/// Union-find with path halving and union by size.
fn components(n: usize, edges: &[(u32, u32)]) -> (Vec<u32>, Vec<usize>) {
    let mut parent: Vec<u32> = (0..n as u32).collect();
    let mut size = vec![1u32; n];
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            let (big, small) = if size[ra as usize] >= size[rb as usize] {
                (ra, rb)
            } else {
                (rb, ra)
            };
            parent[small as usize] = big;
            size[big as usize] += size[small as usize];
        }
    }
    // relabel roots to dense component ids
    let mut label = vec![u32::MAX; n];
    let mut sizes = Vec::new();
    let mut component = vec![0u32; n];
    for v in 0..n as u32 {
        let r = find(&mut parent, v);
        if label[r as usize] == u32::MAX {
            label[r as usize] = sizes.len() as u32;
            sizes.push(0usize);
        }
        component[v as usize] = label[r as usize];
        sizes[label[r as usize] as usize] += 1;
    }
    (component, sizes)
}

impl GraphSample {
    /// Size of the largest component over n.
    pub fn giant_ratio(&self) -> f64 {
        self.component_sizes.iter().copied().max().unwrap_or(1) as f64 / self.n as f64
    }

    /// Realized degree histogram of the surviving graph.
    pub fn degree_histogram(&self, bins: usize) -> Vec<u64> {
        let mut hist = vec![0u64; bins];
        for a in &self.adj {
            hist[a.len().min(bins - 1)] += 1;
        }
        hist
    }

    /// Mean realized degree 2|E|/n.
    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.n as f64
    }
}

/// A BFS ball around a root with vertex marks (d_i, T_i) and edge costs.
#[derive(Debug, Clone)]
pub struct RootBall {
    pub root: u32,
    pub radius: u32,
    /// Vertices in BFS order with their depth.
    pub vertices: Vec<(u32, u32)>,
    /// Marks (potential degree, threshold) aligned with `vertices`.
    pub marks: Vec<(u32, f64)>,
    /// Surviving edges inside the ball, with costs.
    pub edges: Vec<(u32, u32, f64)>,
    pub acyclic: bool,
}

pub fn root_ball(g: &GraphSample, root: u32, radius: u32) -> RootBall {
    let oracle = EdgeCostOracle::new(g.n, g.seed);
    let mut depth = vec![u32::MAX; g.n];
    depth[root as usize] = 0;
    let mut order = vec![root];
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        if depth[v as usize] >= radius {
            continue;
        }
        for &w in &g.adj[v as usize] {
            if depth[w as usize] == u32::MAX {
                depth[w as usize] = depth[v as usize] + 1;
                order.push(w);
            }
        }
    }
    let vertices: Vec<(u32, u32)> = order.iter().map(|&v| (v, depth[v as usize])).collect();
    let marks = order
        .iter()
        .map(|&v| (g.degrees[v as usize], g.thresholds[v as usize]))
        .collect();
    let mut edges = Vec::new();
    for &v in &order {
        for &w in &g.adj[v as usize] {
            if w > v && depth[w as usize] != u32::MAX {
                edges.push((v, w, oracle.cost(v, w).unwrap()));
            }
        }
    }
    let acyclic = edges.len() + 1 == vertices.len();
    RootBall {
        root,
        radius,
        vertices,
        marks,
        edges,
        acyclic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn costs_are_symmetric_positive_and_deterministic() {
        let oracle = EdgeCostOracle::new(1000, 99);
        let mut rng = SplitMix64::new(4);
        for _ in 0..100_000 {
            let i = (rng.next_u64() % 1000) as u32;
            let mut j = (rng.next_u64() % 1000) as u32;
            if i == j {
                j = (j + 1) % 1000;
            }
            let a = oracle.cost(i, j).unwrap();
            let b = oracle.cost(j, i).unwrap();
            assert_eq!(a, b);
            assert!(a >= 0.0 && a.is_finite());
        }
        assert!(oracle.cost(5, 5).is_err());
    }

    #[test]
    fn cost_mean_matches_exponential_scale() {
        let n = 1000;
        let oracle = EdgeCostOracle::new(n, 2024);
        let mut rng = SplitMix64::new(8);
        let reps = 1_000_000usize;
        let mut sum = 0.0;
        for _ in 0..reps {
            let i = (rng.next_u64() % n as u64) as u32;
            let mut j = (rng.next_u64() % n as u64) as u32;
            if i == j {
                j = (j + 1) % n as u32;
            }
            sum += oracle.cost(i, j).unwrap();
        }
        let mean = sum / reps as f64;
        // Exp(1/n): mean n, sd n
        let se = n as f64 / (reps as f64).sqrt();
        assert!((mean - n as f64).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn golden_cost_value_is_frozen() {
        let oracle = EdgeCostOracle::new(10, 7);
        let got = oracle.cost(1, 2).unwrap();
        // value pinned from an independent evaluation of the documented
        // hash-and-invert algorithm; guards the on-disk contract
        let frozen = 2.5148597476061085_f64;
        assert!(
            (got - frozen).abs() < 1e-9,
            "edge cost drifted: {got} vs {frozen}"
        );
    }

    #[test]
    fn three_vertices_brute_force() {
        for seed in 0..100 {
            let g = build_graph(3, DegreesInput::Explicit(&[1, 1, 1]), seed).unwrap();
            let oracle = EdgeCostOracle::new(3, seed);
            let c = [
                oracle.cost(0, 1).unwrap(),
                oracle.cost(0, 2).unwrap(),
                oracle.cost(1, 2).unwrap(),
            ];
            // an edge survives iff it is the cheapest incident edge of both
            // endpoints
            let mut want = Vec::new();
            if c[0] < c[1] && c[0] < c[2] {
                want.push((0u32, 1u32));
            }
            if c[1] < c[0] && c[1] < c[2] {
                want.push((0, 2));
            }
            if c[2] < c[0] && c[2] < c[1] {
                want.push((1, 2));
            }
            assert_eq!(g.edges, want, "seed {seed}");
        }
    }

    #[test]
    fn surviving_edges_beat_both_thresholds() {
        let pmf = DegreePmf::geometric(0.3).unwrap();
        let g = build_graph(400, DegreesInput::FromPmf(&pmf), 5).unwrap();
        let oracle = EdgeCostOracle::new(400, 5);
        for &(i, j) in &g.edges {
            let c = oracle.cost(i, j).unwrap();
            assert!(c < g.thresholds[i as usize]);
            assert!(c < g.thresholds[j as usize]);
        }
    }

    #[test]
    fn thresholds_match_brute_force() {
        let pmf = DegreePmf::geometric(0.3).unwrap();
        let n = 300usize;
        let g = build_graph(n, DegreesInput::FromPmf(&pmf), 17).unwrap();
        let oracle = EdgeCostOracle::new(n, 17);
        let mut rng = SplitMix64::new(1);
        for _ in 0..100 {
            let i = (rng.next_u64() % n as u64) as u32;
            let mut costs: Vec<f64> = (0..n as u32)
                .filter(|&j| j != i)
                .map(|j| oracle.cost(i, j).unwrap())
                .collect();
            costs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want = costs[g.degrees[i as usize] as usize];
            assert_eq!(g.thresholds[i as usize], want);
            // all potential neighbors sit strictly below the threshold
            assert_eq!(
                g.potential[i as usize].len(),
                g.degrees[i as usize] as usize
            );
            for &j in &g.potential[i as usize] {
                assert!(oracle.cost(i, j).unwrap() < g.thresholds[i as usize]);
            }
        }
    }

    #[test]
    fn same_seed_same_graph() {
        let pmf = DegreePmf::geometric(0.2).unwrap();
        let a = build_graph(200, DegreesInput::FromPmf(&pmf), 9).unwrap();
        let b = build_graph(200, DegreesInput::FromPmf(&pmf), 9).unwrap();
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.thresholds, b.thresholds);
    }

    #[test]
    fn raising_degrees_never_removes_edges() {
        let n = 200usize;
        let base: Vec<u32> = (0..n).map(|i| 1 + (i % 5) as u32).collect();
        let bumped: Vec<u32> = base.iter().map(|d| d + 1).collect();
        for seed in [3u64, 14, 15] {
            let g1 = build_graph(n, DegreesInput::Explicit(&base), seed).unwrap();
            let g2 = build_graph(n, DegreesInput::Explicit(&bumped), seed).unwrap();
            let set2: std::collections::HashSet<(u32, u32)> = g2.edges.iter().copied().collect();
            for e in &g1.edges {
                assert!(set2.contains(e), "edge {e:?} lost after degree bump");
            }
        }
    }

    #[test]
    fn giant_ratio_extremes() {
        let pmf = DegreePmf::geometric(0.3).unwrap();
        let mut g = build_graph(50, DegreesInput::FromPmf(&pmf), 3).unwrap();
        // empty the graph by hand: every vertex its own component
        g.edges.clear();
        g.adj = vec![Vec::new(); g.n];
        let (component, component_sizes) = super::components(g.n, &g.edges);
        g.component = component;
        g.component_sizes = component_sizes;
        assert!((g.giant_ratio() - 1.0 / 50.0).abs() < 1e-12);
        // a path through all vertices: one component
        let path: Vec<(u32, u32)> = (0..49u32).map(|i| (i, i + 1)).collect();
        let (component, component_sizes) = super::components(g.n, &path);
        g.component = component;
        g.component_sizes = component_sizes;
        assert!((g.giant_ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn root_ball_radius_zero_is_the_root() {
        let pmf = DegreePmf::geometric(0.3).unwrap();
        let g = build_graph(100, DegreesInput::FromPmf(&pmf), 12).unwrap();
        let ball = root_ball(&g, 7, 0);
        assert_eq!(ball.vertices, vec![(7, 0)]);
        assert!(ball.edges.is_empty());
        assert_eq!(ball.marks[0], (g.degrees[7], g.thresholds[7]));
        assert!(ball.acyclic);
    }
}
