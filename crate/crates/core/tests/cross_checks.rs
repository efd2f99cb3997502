//! Cross-module consistency: the spectral threshold, the extinction
//! probability, the degree laws, and the sampler must all tell one story.

use ewt_lab::ewt::{self, ForestSpec, VertexType};
use ewt_lab::extinction::ExtinctionOperator;
use ewt_lab::observables;
use ewt_lab::spectral;
use ewt_lab::DegreePmf;

/// p_ext = 1 (within 1e-3) exactly when beta0 <= 1, swept through the
/// near-critical window of the geometric family.
#[test]
fn extinction_iff_subcritical_sweep() {
    for p in [0.2, 0.3, 0.408, 0.41, 0.5] {
        let pmf = DegreePmf::geometric(p).unwrap();
        let beta0 = spectral::beta0_geo_closed(p).unwrap();
        let op = ExtinctionOperator::new(&pmf, pmf.default_grid());
        let sol = op.solve(1e-8, 100_000).unwrap();
        assert!(sol.converged, "p={p} did not converge");
        let certain = (1.0 - sol.p_ext) <= 1e-3;
        assert_eq!(
            certain,
            beta0 <= 1.0,
            "p={p}: beta0={beta0:.5}, p_ext={:.6}",
            sol.p_ext
        );
        // the root found by the series scan agrees with the closed form on
        // both sides of the transition
        let found = spectral::find_beta0(&pmf).unwrap().beta0;
        assert!(((found - beta0) / beta0).abs() < 1e-5, "p={p}");
    }
}

/// Conditioned on the root type (m, x), the root degree is Bi(m, η(x)):
/// chi-square over the full support at the 0.1% level, 10^5 samples.
#[test]
fn conditional_root_degree_is_binomial() {
    let pmf = DegreePmf::geometric(0.08).unwrap();
    let spec = pmf.default_grid();
    let eta_fn = observables::keep_probability_fn(&pmf, spec);
    for &(m, x) in &[(5u32, 8.0f64), (12, 20.0)] {
        let mut fs = ForestSpec::new(1, 100_000, 5150 + m as u64);
        fs.root = Some(VertexType { m, x });
        let stats = ewt::sample_forest(&pmf, &fs);
        let rows = stats.generation_counts();
        let n = rows.len() as f64;
        let eta = eta_fn.at(x);
        let mut observed = vec![0.0f64; m as usize + 1];
        for r in &rows {
            observed[r[1] as usize] += 1.0;
        }
        // merge bins with tiny expectation into their neighbor
        let mut chi2 = 0.0;
        let mut df = 0usize;
        let mut exp_acc = 0.0;
        let mut obs_acc = 0.0;
        for d in 0..=m as usize {
            let choose = |n: u32, k: u32| -> f64 {
                let mut v = 1.0;
                for i in 0..k {
                    v = v * (n - i) as f64 / (i + 1) as f64;
                }
                v
            };
            exp_acc += n
                * choose(m, d as u32)
                * eta.powi(d as i32)
                * (1.0 - eta).powi((m - d as u32) as i32);
            obs_acc += observed[d];
            if exp_acc >= 10.0 {
                chi2 += (obs_acc - exp_acc).powi(2) / exp_acc;
                df += 1;
                exp_acc = 0.0;
                obs_acc = 0.0;
            }
        }
        if exp_acc > 0.0 {
            chi2 += (obs_acc - exp_acc).powi(2) / exp_acc;
            df += 1;
        }
        let df = (df - 1) as f64;
        // Wilson-Hilferty critical value at alpha = 0.001 (z = 3.0902)
        let crit = df * (1.0 - 2.0 / (9.0 * df) + 3.0902 * (2.0 / (9.0 * df)).sqrt()).powi(3);
        assert!(
            chi2 < crit,
            "(m={m}, x={x}): chi2 {chi2:.2} vs critical {crit:.2} (df {df})"
        );
    }
}

/// The three provenances of the root law pairwise agree.
#[test]
fn root_law_provenances_agree() {
    for p in [0.2f64, 0.5] {
        let pmf = DegreePmf::geometric(p).unwrap();
        let spec = pmf.default_grid();
        let quad = observables::root_degree_pmf_exact(&pmf, spec);
        let closed = observables::root_degree_pmf_geo(p, quad.pmf.len() + 50).unwrap();
        assert!(quad.tv_distance(&closed) < 1e-6, "p={p}");
        let stats = ewt::sample_forest(&pmf, &ForestSpec::new(1, 200_000, 31337));
        let mc = stats.degree_pmf_by_generation(0).unwrap();
        assert!(mc.tv_distance(&quad.pmf) < 0.005, "p={p}");
    }
}

/// The normalized level differences Z_l/b^l - Z_{l+1}/b^{l+1} lose variance
/// as l grows — the Cauchy-in-L² signature of the almost-sure limit.
#[test]
fn normalized_counts_are_cauchy_in_l2() {
    let pmf = DegreePmf::geometric(0.3).unwrap();
    let sol = spectral::normalize_f0(spectral::find_beta0(&pmf).unwrap()).unwrap();
    let mut fs = ForestSpec::new(8, 50_000, 777);
    fs.rects = vec![ewt_lab::second_moment::TypeRect::full()];
    let stats = ewt::sample_forest(&pmf, &fs);
    let w = ewt::w_statistics(&stats, sol.beta0, 0, 0).unwrap();
    // compare the early plateau against the late plateau rather than
    // consecutive noisy estimates
    assert!(
        w.cauchy_var[6] < w.cauchy_var[1],
        "difference variance did not shrink: {:?}",
        w.cauchy_var
    );
    let mut decreases = 0;
    for i in 1..w.cauchy_var.len() {
        if w.cauchy_var[i] <= w.cauchy_var[i - 1] {
            decreases += 1;
        }
    }
    assert!(decreases >= w.cauchy_var.len() - 2, "{:?}", w.cauchy_var);
}

/// Frozen serialization of one tree: guards the sampling stream layout.
#[test]
fn golden_tree_serialization() {
    let pmf = DegreePmf::geometric(0.5).unwrap();
    let tree = ewt::sample_tree(&pmf, 3, 42);
    assert_eq!(tree.nodes.len(), 5);
    assert_eq!(tree.z_counts, vec![1, 1, 2, 1]);
    let s = tree.serialize();
    assert!(s.starts_with("0 -1 0 2 4.177675192623088 NaN\n"));
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    assert_eq!(format!("{h:016x}"), "fc7645eae46b5f55");
}

/// Mean realized degree of the finite graph approaches the exact mean-degree
/// quadrature (desk scale: n = 10^4, a handful of seeds).
#[test]
fn graph_mean_degree_matches_quadrature() {
    use ewt_lab::kgraph::{build_graph, DegreesInput};
    let pmf = DegreePmf::geometric(0.08).unwrap();
    let exact = observables::mean_degree_exact(&pmf, pmf.default_grid());
    let n = 10_000usize;
    let graphs = 6usize;
    let mut means = Vec::new();
    for gi in 0..graphs {
        let g = build_graph(
            n,
            DegreesInput::FromPmf(&pmf),
            ewt_lab::rng::derive_stream(2718, gi as u64),
        )
        .unwrap();
        means.push(g.mean_degree());
    }
    let mean: f64 = means.iter().sum::<f64>() / graphs as f64;
    let var: f64 = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / graphs as f64;
    let se = (var / graphs as f64).sqrt();
    assert!(
        (mean - exact).abs() <= 3.0 * se,
        "mean degree {mean:.4} vs exact {exact:.4} (se {se:.4})"
    );
}

/// The two-stage comparison tree built from the root law grows at a rate
/// close to — but measurably different from — the spectral growth rate.
#[test]
fn comparison_tree_growth_is_close_but_distinct() {
    let pmf = DegreePmf::geometric(0.08).unwrap();
    let beta0 = spectral::beta0_geo_closed(0.08).unwrap();
    let grid = pmf.default_grid();
    let root_law = observables::root_degree_pmf_exact(&pmf, grid);
    let base = observables::gwt_star_baselines(&root_law).unwrap();
    let rel = ((base.growth_rate - beta0) / beta0).abs();
    assert!(rel < 0.15, "growth {} vs beta0 {beta0}", base.growth_rate);
    assert!(rel > 1e-3, "the two rates should not coincide ({rel:.2e})");
}

/// Degenerate forests behave.
#[test]
fn empty_forest_has_empty_matrices() {
    let pmf = DegreePmf::geometric(0.5).unwrap();
    let stats = ewt::sample_forest(&pmf, &ForestSpec::new(2, 0, 1));
    assert!(stats.generation_counts().is_empty());
}
