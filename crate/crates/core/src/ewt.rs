//! Exact sampler of the random tree and Monte Carlo observables.
//!
//! A tree is grown breadth-first: the root draws its potential count m from
//! P and threshold x from Erlang(m+1); every potential child draws a uniform
//! edge cost on [0, parent threshold] and its own (m', x') with m' from the
//! shifted law and x' from Erlang(m'+1), and is kept iff cost < x'. Dropped
//! children are discarded immediately, so memory tracks the kept tree.
//!
//! Forests aggregate integer statistics only (histograms, counts), so the
//! rayon fold/reduce over replicates is deterministic regardless of
//! scheduling.

use crate::error::{domain, Result};
use crate::numerics::DegreePmf;
use crate::rng::{derive_stream, SplitMix64};
use crate::second_moment::TypeRect;
use rayon::prelude::*;

/// Potential-descendant count and threshold of a vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexType {
    pub m: u32,
    pub x: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeNode {
    pub m: u32,
    pub x: f64,
    /// Index of the parent; -1 for the root.
    pub parent: i64,
    pub depth: u32,
    /// Cost of the edge to the parent; NaN for the root.
    pub zeta: f64,
    pub kept_children: u32,
}

/// A sampled tree (kept vertices only).
#[derive(Debug, Clone)]
pub struct EwtTree {
    pub nodes: Vec<TreeNode>,
    /// Z_0..Z_depth_cap.
    pub z_counts: Vec<u64>,
    pub depth_cap: u32,
    pub truncated: bool,
    pub seed: u64,
}

pub const DEFAULT_NODE_CAP: usize = 10_000_000;

impl EwtTree {
    /// Degree inside the kept tree: children plus the parent edge.
    pub fn degree(&self, idx: usize) -> u32 {
        self.nodes[idx].kept_children + u32::from(self.nodes[idx].parent >= 0)
    }

    /// Line-oriented text, one node per line: `index parent depth m x zeta`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                i, n.parent, n.depth, n.m, n.x, n.zeta
            ));
        }
        out
    }
}

/// Root type drawn from the law (m ~ P, x | m ~ Erlang(m+1)) or pinned.
#[derive(Debug, Clone, Copy)]
enum RootSpec {
    FromLaw,
    Pinned(VertexType),
}

pub fn sample_tree(pmf: &DegreePmf, depth_cap: u32, seed: u64) -> EwtTree {
    sample_tree_capped(pmf, depth_cap, seed, DEFAULT_NODE_CAP)
}

pub fn sample_tree_capped(pmf: &DegreePmf, depth_cap: u32, seed: u64, node_cap: usize) -> EwtTree {
    sample_inner(pmf, RootSpec::FromLaw, depth_cap, seed, node_cap)
}

/// Tree conditioned on the root's type (m, x).
pub fn sample_tree_with_root(
    pmf: &DegreePmf,
    root: VertexType,
    depth_cap: u32,
    seed: u64,
    node_cap: usize,
) -> EwtTree {
    sample_inner(pmf, RootSpec::Pinned(root), depth_cap, seed, node_cap)
}

fn sample_inner(
    pmf: &DegreePmf,
    root: RootSpec,
    depth_cap: u32,
    seed: u64,
    node_cap: usize,
) -> EwtTree {
    let mut rng = SplitMix64::new(seed);
    let (root_m, root_x) = match root {
        RootSpec::FromLaw => {
            let m = pmf.sample(rng.next_f64());
            let x = rng.erlang(m + 1);
            (m, x)
        }
        RootSpec::Pinned(t) => (t.m, t.x),
    };
    let mut nodes = vec![TreeNode {
        m: root_m,
        x: root_x,
        parent: -1,
        depth: 0,
        zeta: f64::NAN,
        kept_children: 0,
    }];
    let mut z_counts = vec![0u64; depth_cap as usize + 1];
    z_counts[0] = 1;
    let mut truncated = false;
    // breadth-first by construction: nodes are appended in index order and
    // processed in index order
    let mut cursor = 0usize;
    while cursor < nodes.len() {
        let (parent_m, parent_x, parent_depth) = {
            let n = &nodes[cursor];
            (n.m, n.x, n.depth)
        };
        if parent_depth >= depth_cap {
            cursor += 1;
            continue;
        }
        let mut kept = 0u32;
        for _ in 0..parent_m {
            let zeta = parent_x * rng.next_f64();
            let child_m = pmf.sample_shifted(rng.next_f64());
            let child_x = rng.erlang(child_m + 1);
            if zeta < child_x {
                if nodes.len() >= node_cap {
                    truncated = true;
                    break;
                }
                kept += 1;
                z_counts[parent_depth as usize + 1] += 1;
                nodes.push(TreeNode {
                    m: child_m,
                    x: child_x,
                    parent: cursor as i64,
                    depth: parent_depth + 1,
                    zeta,
                    kept_children: 0,
                });
            }
        }
        nodes[cursor].kept_children = kept;
        cursor += 1;
        if truncated {
            break;
        }
    }
    EwtTree {
        nodes,
        z_counts,
        depth_cap,
        truncated,
        seed,
    }
}

// ---------------------------------------------------------------------------
// Forest aggregation
// ---------------------------------------------------------------------------

/// What to sample and which statistics to accumulate.
#[derive(Debug, Clone)]
pub struct ForestSpec {
    pub depth_cap: u32,
    pub replicates: usize,
    pub master_seed: u64,
    pub node_cap: usize,
    /// Pin the root type (conditioned forests); None draws from the law.
    pub root: Option<VertexType>,
    /// Track the involution statistic for degrees 1..=unimod_k_max (0 = off).
    pub unimod_k_max: u32,
    /// Rectangles whose per-generation counts Z_l(A) are recorded.
    pub rects: Vec<TypeRect>,
    /// Degree histogram width; degrees beyond are clamped into the last bin.
    pub degree_bins: usize,
}

impl ForestSpec {
    pub fn new(depth_cap: u32, replicates: usize, master_seed: u64) -> Self {
        ForestSpec {
            depth_cap,
            replicates,
            master_seed,
            node_cap: DEFAULT_NODE_CAP,
            root: None,
            unimod_k_max: 0,
            rects: Vec::new(),
            degree_bins: 512,
        }
    }
}

/// Aggregated Monte Carlo statistics over a forest of independent trees.
#[derive(Debug, Clone)]
pub struct ForestStats {
    pub spec: ForestSpec,
    /// Per replicate (tag column 0 holds the replicate id): Z_0..Z_depth_cap.
    z_counts: Vec<Vec<u64>>,
    pub truncated: usize,
    /// Pooled degree histogram per generation g < depth_cap (a vertex's
    /// degree needs its children realized, so the last generation is skipped).
    pub degree_hist: Vec<Vec<u64>>,
    /// cond_gen1[root_degree][gen-1 degree] pooled counts (depth_cap >= 2).
    pub cond_gen1: Vec<Vec<u64>>,
    /// Per k in 1..=unimod_k_max: (sum lhs, sum rhs, sum (lhs-rhs)^2), paired
    /// per replicate.
    pub unimod: Vec<(i64, i64, i64)>,
    /// rect_counts[rect][replicate]: tag, then Z_1(A)..Z_depth(A).
    rect_counts: Vec<Vec<Vec<u32>>>,
}

pub fn sample_forest(pmf: &DegreePmf, spec: &ForestSpec) -> ForestStats {
    let blank = || blank_stats(spec);
    (0..spec.replicates)
        .into_par_iter()
        .fold(blank, |mut acc, rep| {
            let seed = derive_stream(spec.master_seed, rep as u64);
            let tree = match spec.root {
                Some(t) => sample_tree_with_root(pmf, t, spec.depth_cap, seed, spec.node_cap),
                None => sample_tree_capped(pmf, spec.depth_cap, seed, spec.node_cap),
            };
            absorb(&mut acc, spec, rep, &tree);
            acc
        })
        .reduce(blank, merge)
}

fn blank_stats(spec: &ForestSpec) -> ForestStats {
    ForestStats {
        spec: spec.clone(),
        z_counts: Vec::new(),
        truncated: 0,
        degree_hist: vec![vec![0u64; spec.degree_bins]; spec.depth_cap as usize],
        cond_gen1: if spec.depth_cap >= 2 {
            vec![vec![0u64; spec.degree_bins]; spec.degree_bins]
        } else {
            Vec::new()
        },
        unimod: vec![(0, 0, 0); spec.unimod_k_max as usize],
        rect_counts: vec![Vec::new(); spec.rects.len()],
    }
}

fn absorb(acc: &mut ForestStats, spec: &ForestSpec, rep: usize, tree: &EwtTree) {
    if tree.truncated {
        acc.truncated += 1;
    }
    let mut row = Vec::with_capacity(tree.z_counts.len() + 1);
    row.push(rep as u64);
    row.extend_from_slice(&tree.z_counts);
    acc.z_counts.push(row);

    let bins = spec.degree_bins;
    for (idx, node) in tree.nodes.iter().enumerate() {
        if node.depth + 1 <= spec.depth_cap {
            let d = (tree.degree(idx) as usize).min(bins - 1);
            acc.degree_hist[node.depth as usize][d] += 1;
        }
    }
    if spec.depth_cap >= 2 {
        let root_deg = (tree.degree(0) as usize).min(bins - 1);
        for (idx, node) in tree.nodes.iter().enumerate() {
            if node.depth == 1 {
                let d = (tree.degree(idx) as usize).min(bins - 1);
                acc.cond_gen1[root_deg][d] += 1;
            }
        }
    }
    if spec.unimod_k_max > 0 && spec.depth_cap >= 2 {
        let root_deg = tree.degree(0);
        for k in 1..=spec.unimod_k_max {
            let lhs = if root_deg == k { root_deg as i64 } else { 0 };
            let mut rhs = 0i64;
            for (idx, node) in tree.nodes.iter().enumerate() {
                if node.depth == 1 && tree.degree(idx) == k {
                    rhs += 1;
                }
            }
            let cell = &mut acc.unimod[k as usize - 1];
            cell.0 += lhs;
            cell.1 += rhs;
            cell.2 += (lhs - rhs) * (lhs - rhs);
        }
    }
    for (r, rect) in spec.rects.iter().enumerate() {
        let mut counts = vec![0u32; spec.depth_cap as usize + 1];
        counts[0] = rep as u32;
        for node in tree.nodes.iter().skip(1) {
            if rect.contains(node.m, node.x) {
                counts[node.depth as usize] += 1;
            }
        }
        acc.rect_counts[r].push(counts);
    }
}

fn merge(mut a: ForestStats, mut b: ForestStats) -> ForestStats {
    a.z_counts.append(&mut b.z_counts);
    a.truncated += b.truncated;
    for (ha, hb) in a.degree_hist.iter_mut().zip(&b.degree_hist) {
        for (x, y) in ha.iter_mut().zip(hb) {
            *x += y;
        }
    }
    for (ha, hb) in a.cond_gen1.iter_mut().zip(&b.cond_gen1) {
        for (x, y) in ha.iter_mut().zip(hb) {
            *x += y;
        }
    }
    for (ua, ub) in a.unimod.iter_mut().zip(&b.unimod) {
        ua.0 += ub.0;
        ua.1 += ub.1;
        ua.2 += ub.2;
    }
    for (ra, rb) in a.rect_counts.iter_mut().zip(&mut b.rect_counts) {
        ra.append(rb);
    }
    a
}

impl ForestStats {
    /// Z-count matrix ordered by replicate.
    pub fn generation_counts(&self) -> Vec<Vec<u64>> {
        let mut rows = self.z_counts.clone();
        rows.sort_by_key(|r| r[0]);
        rows.into_iter().map(|r| r[1..].to_vec()).collect()
    }

    /// Pooled empirical degree law at a generation (root degree at gen 0).
    pub fn degree_pmf_by_generation(&self, gen: u32) -> Result<EmpiricalPmf> {
        if gen + 1 > self.spec.depth_cap {
            return Err(domain(format!(
                "degree at generation {gen} needs depth_cap >= {}",
                gen + 1
            )));
        }
        Ok(EmpiricalPmf::from_hist(&self.degree_hist[gen as usize]))
    }

    /// Empirical law of the generation-1 degree given the root degree.
    /// `None` when no replicate had that root degree.
    pub fn conditional_degree_gen1(&self, d_root: u32) -> Result<Option<EmpiricalPmf>> {
        if self.spec.depth_cap < 2 {
            return Err(domain("conditional degree needs depth_cap >= 2"));
        }
        let hist = &self.cond_gen1[(d_root as usize).min(self.spec.degree_bins - 1)];
        if hist.iter().all(|&c| c == 0) {
            return Ok(None);
        }
        Ok(Some(EmpiricalPmf::from_hist(hist)))
    }

    /// The involution statistic pair at degree k: empirical means of
    /// deg(root)·1{deg(root)=k} and the count of root neighbors of degree k,
    /// plus the paired standard error of their difference.
    pub fn unimod_involution_stat(&self, k: u32) -> Result<(f64, f64, f64)> {
        if k == 0 || k > self.spec.unimod_k_max {
            return Err(domain("unimod: k outside the tracked range"));
        }
        let (sum_l, sum_r, sum_d2) = self.unimod[k as usize - 1];
        let n = self.spec.replicates as f64;
        let mean_l = sum_l as f64 / n;
        let mean_r = sum_r as f64 / n;
        let mean_d = mean_l - mean_r;
        let var_d = (sum_d2 as f64 / n - mean_d * mean_d).max(0.0);
        Ok((mean_l, mean_r, (var_d / n).sqrt()))
    }

    /// Counts Z_l(A) for the `rect`-th tracked rectangle, ordered by
    /// replicate; columns are levels 1..=depth_cap.
    pub fn rect_counts_matrix(&self, rect: usize) -> Vec<Vec<u32>> {
        let mut rows = self.rect_counts[rect].clone();
        rows.sort_by_key(|r| r[0]);
        rows.into_iter().map(|r| r[1..].to_vec()).collect()
    }
}

/// Pooled empirical pmf with binomial standard errors.
#[derive(Debug, Clone)]
pub struct EmpiricalPmf {
    pub probs: Vec<f64>,
    pub se: Vec<f64>,
    pub n_samples: u64,
}

impl EmpiricalPmf {
    pub fn from_hist(hist: &[u64]) -> Self {
        let n: u64 = hist.iter().sum();
        let nf = (n as f64).max(1.0);
        let probs: Vec<f64> = hist.iter().map(|&c| c as f64 / nf).collect();
        let se = probs.iter().map(|&p| (p * (1.0 - p) / nf).sqrt()).collect();
        EmpiricalPmf {
            probs,
            se,
            n_samples: n,
        }
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(d, p)| d as f64 * p)
            .sum()
    }

    /// Standard error of the mean under the pooled-sample approximation.
    pub fn mean_se(&self) -> f64 {
        let m = self.mean();
        let var: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(d, p)| (d as f64 - m).powi(2) * p)
            .sum();
        (var / self.n_samples.max(1) as f64).sqrt()
    }

    /// Total-variation distance to a reference pmf.
    pub fn tv_distance(&self, other: &[f64]) -> f64 {
        let len = self.probs.len().max(other.len());
        let mut acc = 0.0;
        for d in 0..len {
            let a = self.probs.get(d).copied().unwrap_or(0.0);
            let b = other.get(d).copied().unwrap_or(0.0);
            acc += (a - b).abs();
        }
        0.5 * acc
    }
}

// ---------------------------------------------------------------------------
// Normalized W statistics
// ---------------------------------------------------------------------------

/// Per-level normalized counts and the survivor ratio series for a pair of
/// tracked rectangles.
#[derive(Debug, Clone)]
pub struct WStatistics {
    /// Mean of Z_l(A)/beta0^l per level l = 1..depth.
    pub mean_a: Vec<f64>,
    /// Variance of Z_l(A)/beta0^l per level.
    pub var_a: Vec<f64>,
    /// Var(Z_l(A)/beta0^l - Z_{l+1}(A)/beta0^{l+1}) per level.
    pub cauchy_var: Vec<f64>,
    /// Mean of Z_l(B)/Z_l(A) over replicates with Z_l(A) > 0; NaN if none.
    pub ratio_mean: Vec<f64>,
    /// Replicates with Z_l(A) > 0 per level.
    pub survivors: Vec<usize>,
}

pub fn w_statistics(
    stats: &ForestStats,
    beta0: f64,
    rect_a: usize,
    rect_b: usize,
) -> Result<WStatistics> {
    if !(beta0 > 0.0) {
        return Err(domain("w_statistics: beta0 must be > 0"));
    }
    let a = stats.rect_counts_matrix(rect_a);
    let b = stats.rect_counts_matrix(rect_b);
    let levels = stats.spec.depth_cap as usize;
    let n = a.len() as f64;
    let mut mean_a = vec![0.0; levels];
    let mut var_a = vec![0.0; levels];
    let mut cauchy_var = vec![0.0; levels.saturating_sub(1)];
    let mut ratio_mean = vec![0.0; levels];
    let mut survivors = vec![0usize; levels];
    for l in 1..=levels {
        let scale = beta0.powi(l as i32);
        let (mut s, mut s2) = (0.0, 0.0);
        for row in &a {
            let v = row[l - 1] as f64 / scale;
            s += v;
            s2 += v * v;
        }
        mean_a[l - 1] = s / n;
        var_a[l - 1] = (s2 / n - (s / n) * (s / n)).max(0.0);
        let (mut rs, mut rc) = (0.0, 0usize);
        for (ra, rb) in a.iter().zip(&b) {
            if ra[l - 1] > 0 {
                rs += rb[l - 1] as f64 / ra[l - 1] as f64;
                rc += 1;
            }
        }
        survivors[l - 1] = rc;
        ratio_mean[l - 1] = if rc > 0 { rs / rc as f64 } else { f64::NAN };
        if l < levels {
            let scale_next = scale * beta0;
            let (mut ds, mut ds2) = (0.0, 0.0);
            for row in &a {
                let d = row[l - 1] as f64 / scale - row[l] as f64 / scale_next;
                ds += d;
                ds2 += d * d;
            }
            cauchy_var[l - 1] = (ds2 / n - (ds / n) * (ds / n)).max(0.0);
        }
    }
    Ok(WStatistics {
        mean_a,
        var_a,
        cauchy_var,
        ratio_mean,
        survivors,
    })
}

// ---------------------------------------------------------------------------
// Backbone (potential-vertex) counts
// ---------------------------------------------------------------------------

/// Potential-vertex counts W_1..W_depth of the un-pruned tree: a plain
/// branching count with offspring P at the root and the shifted law below.
pub fn backbone_counts(pmf: &DegreePmf, depth: u32, seed: u64, cap: u64) -> Vec<u64> {
    let mut rng = SplitMix64::new(seed);
    let mut counts = Vec::with_capacity(depth as usize);
    let root_m = pmf.sample(rng.next_f64()) as u64;
    counts.push(root_m);
    let mut level = root_m;
    for _ in 1..depth {
        let mut next = 0u64;
        for _ in 0..level.min(cap) {
            next += pmf.sample_shifted(rng.next_f64()) as u64;
        }
        counts.push(next);
        level = next;
        if level > cap {
            break;
        }
    }
    while counts.len() < depth as usize {
        counts.push(0);
    }
    counts
}

/// Mean and standard error of W_l over replicates, per level 1..=depth.
pub fn backbone_mean_se(
    pmf: &DegreePmf,
    depth: u32,
    replicates: usize,
    master_seed: u64,
) -> Vec<(f64, f64)> {
    let zero = || vec![(0.0f64, 0.0f64); depth as usize];
    let sums: Vec<(f64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            backbone_counts(
                pmf,
                depth,
                derive_stream(master_seed, rep as u64),
                100_000_000,
            )
        })
        .fold(zero, |mut acc, counts| {
            for (a, &c) in acc.iter_mut().zip(&counts) {
                a.0 += c as f64;
                a.1 += (c as f64) * (c as f64);
            }
            acc
        })
        .reduce(zero, |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                x.0 += y.0;
                x.1 += y.1;
            }
            a
        });
    let n = replicates as f64;
    sums.into_iter()
        .map(|(s, s2)| {
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0);
            (mean, (var / n).sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extinction::ExtinctionOperator;
    use crate::spectral;

    fn geo(p: f64) -> DegreePmf {
        DegreePmf::geometric(p).unwrap()
    }

    #[test]
    fn depth_zero_tree_is_just_the_root() {
        let tree = sample_tree(&geo(0.5), 0, 1);
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.z_counts, vec![1]);
        assert!(tree.nodes[0].zeta.is_nan());
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_tree(&geo(0.5), 3, 42);
        let b = sample_tree(&geo(0.5), 3, 42);
        assert_eq!(a.serialize(), b.serialize());
        let c = sample_tree(&geo(0.5), 3, 43);
        assert_ne!(a.serialize(), c.serialize());
    }

    #[test]
    fn pruning_invariant_holds_per_tree() {
        for seed in 0..50 {
            let tree = sample_tree(&geo(0.3), 4, seed);
            for node in tree.nodes.iter().skip(1) {
                assert!(node.zeta < node.x, "kept node violates the pruning rule");
            }
            // monotone extinction: once a level empties, all later are empty
            let mut seen_zero = false;
            for &z in &tree.z_counts[1..] {
                if seen_zero {
                    assert_eq!(z, 0);
                }
                seen_zero |= z == 0;
            }
        }
    }

    #[test]
    fn mean_z1_matches_quadrature() {
        let pmf = geo(0.5);
        let spec = ForestSpec::new(1, 100_000, 7);
        let stats = sample_forest(&pmf, &spec);
        let rows = stats.generation_counts();
        let n = rows.len() as f64;
        let mean: f64 = rows.iter().map(|r| r[1] as f64).sum::<f64>() / n;
        let var: f64 = rows
            .iter()
            .map(|r| (r[1] as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        let se = (var / n).sqrt();
        let grid = pmf.default_grid();
        let exact = spectral::expected_zl_exact(&pmf, grid, 1).unwrap();
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "mean {mean} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn extinction_by_generation_two_matches_operator() {
        let pmf = geo(0.5);
        let spec = ForestSpec::new(2, 100_000, 11);
        let stats = sample_forest(&pmf, &spec);
        let rows = stats.generation_counts();
        let n = rows.len() as f64;
        let p_hat = rows.iter().filter(|r| r[2] == 0).count() as f64 / n;
        let se = (p_hat * (1.0 - p_hat) / n).sqrt();
        let grid = pmf.default_grid();
        let op = ExtinctionOperator::new(&pmf, grid);
        let expected = op.death_probability_by_generation(2).unwrap();
        assert!(
            (p_hat - expected).abs() < 3.0 * se,
            "P(Z_2=0) {p_hat} vs {expected} (se {se})"
        );
        // generation-1 death is just the root-degree-zero event
        let p1_hat = rows.iter().filter(|r| r[1] == 0).count() as f64 / n;
        let expected1 = op.death_probability_by_generation(1).unwrap();
        let se1 = (p1_hat * (1.0 - p1_hat) / n).sqrt();
        assert!((p1_hat - expected1).abs() < 3.0 * se1);
        assert!((expected1 - 0.2642411).abs() < 1e-6);
    }

    #[test]
    fn star_tree_hand_counts() {
        // find a seed whose tree is a 3-node star: root of degree 2, leaves
        let pmf = geo(0.5);
        let mut star = None;
        for seed in 0..500 {
            let t = sample_tree(&pmf, 2, seed);
            if t.degree(0) == 2 && t.z_counts[1] == 2 && t.z_counts[2] == 0 {
                star = Some(t);
                break;
            }
        }
        let t = star.expect("a 2-star exists among 500 seeds");
        assert_eq!(t.degree(1), 1);
        assert_eq!(t.degree(2), 1);
        // involution pair on that single tree: lhs(k=2) = 2, rhs(k=1) = 2
        let mut fs = ForestSpec::new(2, 1, 0);
        fs.unimod_k_max = 4;
        let mut acc = blank_stats(&fs);
        absorb(&mut acc, &fs, 0, &t);
        let (lhs2, _, _) = acc.unimod_involution_stat(2).unwrap();
        let (_, rhs1, _) = acc.unimod_involution_stat(1).unwrap();
        assert_eq!(lhs2, 2.0);
        assert_eq!(rhs1, 2.0);
    }

    #[test]
    fn involution_statistic_balances() {
        let pmf = geo(0.5);
        let mut fs = ForestSpec::new(2, 200_000, 23);
        fs.unimod_k_max = 8;
        let stats = sample_forest(&pmf, &fs);
        for k in 1..=8 {
            let (lhs, rhs, se) = stats.unimod_involution_stat(k).unwrap();
            assert!(
                (lhs - rhs).abs() <= 3.0 * se.max(1e-12),
                "k={k}: lhs {lhs} rhs {rhs} se {se}"
            );
        }
    }

    #[test]
    fn unobserved_degree_gives_zero_pair() {
        let pmf = geo(0.5);
        let mut fs = ForestSpec::new(2, 2_000, 5);
        fs.unimod_k_max = 64;
        let stats = sample_forest(&pmf, &fs);
        let (lhs, rhs, se) = stats.unimod_involution_stat(64).unwrap();
        assert_eq!((lhs, rhs), (0.0, 0.0));
        assert_eq!(se, 0.0);
    }

    #[test]
    fn conditional_gen1_law_of_total_probability() {
        let pmf = geo(0.08);
        let fs = ForestSpec::new(2, 50_000, 91);
        let stats = sample_forest(&pmf, &fs);
        // reconstruct the pooled gen-1 law from the conditionals, weighting
        // by gen-1 vertex counts per root degree
        let pooled = stats.degree_pmf_by_generation(1).unwrap();
        let mut recon = vec![0.0f64; 128];
        let mut total = 0.0;
        for r in 0..stats.spec.degree_bins {
            let count: u64 = stats.cond_gen1[r].iter().sum();
            if count == 0 {
                continue;
            }
            let cond = stats.conditional_degree_gen1(r as u32).unwrap().unwrap();
            for (d, slot) in recon.iter_mut().enumerate() {
                *slot += cond.probs.get(d).copied().unwrap_or(0.0) * count as f64;
            }
            total += count as f64;
        }
        for v in recon.iter_mut() {
            *v /= total;
        }
        for (d, &r) in recon.iter().enumerate() {
            let p = pooled.probs.get(d).copied().unwrap_or(0.0);
            assert!((r - p).abs() < 1e-12, "d={d}");
        }
        // no samples at an absurd root degree
        assert!(stats.conditional_degree_gen1(400).unwrap().is_none());
    }

    #[test]
    fn gen1_degree_depends_on_root_degree() {
        let pmf = geo(0.08);
        let fs = ForestSpec::new(2, 200_000, 37);
        let stats = sample_forest(&pmf, &fs);
        let lo = stats.conditional_degree_gen1(1).unwrap().unwrap();
        let hi = stats.conditional_degree_gen1(5).unwrap().unwrap();
        let gap = (hi.mean() - lo.mean()).abs();
        let se = (lo.mean_se().powi(2) + hi.mean_se().powi(2)).sqrt();
        assert!(gap > 3.0 * se, "gap {gap} vs se {se}");
    }

    #[test]
    fn root_threshold_law_is_erlang() {
        // given the root's potential count m, its threshold is Erlang(m+1):
        // Kolmogorov-Smirnov on 10^5 conditioned samples at the 0.1% level
        let pmf = geo(0.5);
        let n = 100_000usize;
        let m_target = 2u32;
        let mut xs: Vec<f64> = Vec::new();
        let mut seed = 0u64;
        while xs.len() < n {
            let t = sample_tree(&pmf, 0, derive_stream(999, seed));
            if t.nodes[0].m == m_target {
                xs.push(t.nodes[0].x);
            }
            seed += 1;
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0f64;
        for (i, &x) in xs.iter().enumerate() {
            let cdf = 1.0 - crate::numerics::erlang_sf(m_target + 1, x).unwrap();
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            ks = ks.max((cdf - lo).abs()).max((cdf - hi).abs());
        }
        let critical = 1.9495 / (n as f64).sqrt(); // alpha = 0.001
        assert!(ks < critical, "KS {ks} vs critical {critical}");
    }

    #[test]
    fn full_space_rect_recovers_z_counts() {
        let pmf = geo(0.3);
        let mut fs = ForestSpec::new(3, 500, 3);
        fs.rects = vec![TypeRect::full()];
        let stats = sample_forest(&pmf, &fs);
        let z = stats.generation_counts();
        let rect = stats.rect_counts_matrix(0);
        for (zr, rr) in z.iter().zip(&rect) {
            for l in 1..=3usize {
                assert_eq!(zr[l], rr[l - 1] as u64, "level {l}");
            }
        }
    }

    #[test]
    fn backbone_counts_match_closed_form() {
        let pmf = geo(0.08);
        let stats = backbone_mean_se(&pmf, 4, 20_000, 77);
        for (l, (mean, se)) in stats.iter().enumerate() {
            let want = spectral::expected_wl(&pmf, l as u32 + 1).unwrap();
            assert!(
                (mean - want).abs() <= 3.0 * se,
                "W_{}: {mean} vs {want} (se {se})",
                l + 1
            );
        }
    }
}
