//! Command-line front end: seeded experiment runs emitting CSV + JSON.
//!
//! Every output CSV starts with `# ewt-lab v1 schema` and a comment carrying
//! the resolved-config hash and master seed; timestamps live in a sibling
//! `.meta.json` so re-running a command with the same config and seed
//! produces byte-identical CSV bodies.

mod config;

use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use ewt_lab::ewt::{self, ForestSpec};
use ewt_lab::extinction::ExtinctionOperator;
use ewt_lab::kgraph::{self, DegreesInput};
use ewt_lab::observables::{self, DegreeLaw, Provenance};
use ewt_lab::spectral;
use ewt_lab::{DegreePmf, GridSpec};
use serde_json::json;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "ewt-lab",
    about = "Branching-process and random-graph experiments"
)]
struct Cli {
    /// JSON config file; flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    family: Option<String>,
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    #[arg(long = "depth-cap", global = true)]
    depth_cap: Option<u32>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    graphs: Option<usize>,
    #[arg(long = "grid-points", global = true)]
    grid_points: Option<usize>,
    #[arg(long = "x-max", global = true)]
    x_max: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to EWT_LAB_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the resolved config as JSON and exit
    #[arg(long = "show-config", global = true)]
    show_config: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample trees; writes serialized trees and per-replicate counts
    Sample,
    /// Fixed-point extinction probability
    Extinction,
    /// Growth rate, eigenfunction, and kernel diagnostics
    Spectral,
    /// One finite bilateral graph: edges, components, degrees
    Graph,
    /// Root-degree law by closed form, quadrature, and Monte Carlo
    Degree,
    /// Exact E[W_l], E[Z_l] and the normalized limit
    Moments,
    /// Desk-scale reproductions: fig2..fig8
    Experiment { name: String },
}

fn fail(code: u8, msg: &str, extra: serde_json::Value) -> ExitCode {
    let mut obj = json!({ "error": msg });
    if let Some(map) = obj.as_object_mut() {
        if let Some(em) = extra.as_object() {
            for (k, v) in em {
                map.insert(k.clone(), v.clone());
            }
        }
    }
    eprintln!("{obj}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match fs::read_to_string(path) {
            Ok(text) => match serde_json::from_str::<ExperimentConfig>(&text) {
                Ok(c) => c,
                Err(e) => return fail(2, &format!("bad config: {e}"), json!({})),
            },
            Err(e) => return fail(2, &format!("cannot read config: {e}"), json!({})),
        },
        None => ExperimentConfig::default(),
    };
    if let Some(v) = cli.family.clone() {
        cfg.family = v;
    }
    if let Some(v) = cli.p {
        cfg.p = v;
    }
    if let Some(v) = cli.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = cli.depth_cap {
        cfg.depth_cap = v;
    }
    if let Some(v) = cli.n {
        cfg.n = v;
    }
    if let Some(v) = cli.graphs {
        cfg.graphs = v;
    }
    if cli.grid_points.is_some() {
        cfg.grid_points = cli.grid_points;
    }
    if cli.x_max.is_some() {
        cfg.x_max = cli.x_max;
    }
    if let Some(v) = cli.tol {
        cfg.tol = v;
    }
    if let Some(v) = cli.out.clone() {
        cfg.out = v;
    }
    if let Some(v) = cli.threads {
        cfg.threads = v;
    } else if cfg.threads == 0 {
        if let Ok(env) = std::env::var("EWT_LAB_THREADS") {
            cfg.threads = env.parse().unwrap_or(0);
        }
    }
    if let Err(e) = cfg.validate() {
        return fail(2, &e, json!({}));
    }
    if cli.show_config {
        println!("{}", serde_json::to_string_pretty(&cfg).unwrap());
        return ExitCode::SUCCESS;
    }
    if cfg.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    match run(&cli.cmd, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError { code, msg, extra }) => fail(code, &msg, extra),
    }
}

struct CmdError {
    code: u8,
    msg: String,
    extra: serde_json::Value,
}

impl CmdError {
    fn usage(msg: impl Into<String>) -> Self {
        CmdError {
            code: 2,
            msg: msg.into(),
            extra: json!({}),
        }
    }
    fn numeric(msg: impl Into<String>, extra: serde_json::Value) -> Self {
        CmdError {
            code: 3,
            msg: msg.into(),
            extra,
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError {
            code: 4,
            msg: format!("io error: {e}"),
            extra: json!({}),
        }
    }
}

impl From<ewt_lab::Error> for CmdError {
    fn from(e: ewt_lab::Error) -> Self {
        CmdError::numeric(e.to_string(), json!({}))
    }
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

struct Output {
    dir: PathBuf,
    hash: String,
    seed: u64,
}

impl Output {
    fn new(cfg: &ExperimentConfig) -> std::io::Result<Output> {
        fs::create_dir_all(&cfg.out)?;
        Ok(Output {
            dir: cfg.out.clone(),
            hash: cfg.hash(),
            seed: cfg.seed,
        })
    }

    fn csv<I: IntoIterator<Item = String>>(
        &self,
        name: &str,
        header: &str,
        rows: I,
    ) -> std::io::Result<PathBuf> {
        let mut body = String::new();
        writeln!(body, "# ewt-lab v1 schema").unwrap();
        writeln!(body, "# config {} seed {}", self.hash, self.seed).unwrap();
        writeln!(body, "{header}").unwrap();
        for row in rows {
            writeln!(body, "{row}").unwrap();
        }
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.meta(name)?;
        Ok(path)
    }

    fn text(&self, name: &str, body: &str) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.meta(name)?;
        Ok(path)
    }

    fn json(&self, name: &str, mut value: serde_json::Value) -> std::io::Result<PathBuf> {
        if let Some(map) = value.as_object_mut() {
            map.insert("config_hash".into(), json!(self.hash));
            map.insert("seed".into(), json!(self.seed));
        }
        let path = self.dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(&value).unwrap())?;
        println!("{value}");
        Ok(path)
    }

    fn meta(&self, name: &str) -> std::io::Result<()> {
        let ts = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = json!({ "file": name, "written_unix": ts, "config_hash": self.hash });
        fs::write(
            self.dir.join(format!("{name}.meta.json")),
            serde_json::to_string_pretty(&meta).unwrap(),
        )
    }
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn run(cmd: &Cmd, cfg: &ExperimentConfig) -> Result<(), CmdError> {
    let pmf = cfg.pmf().map_err(CmdError::usage)?;
    let out = Output::new(cfg)?;
    match cmd {
        Cmd::Sample => cmd_sample(cfg, &pmf, &out),
        Cmd::Extinction => cmd_extinction(cfg, &pmf, &out).map(|_| ()),
        Cmd::Spectral => cmd_spectral(cfg, &pmf, &out).map(|_| ()),
        Cmd::Graph => cmd_graph(cfg, &pmf, &out),
        Cmd::Degree => cmd_degree(cfg, &pmf, &out),
        Cmd::Moments => cmd_moments(cfg, &pmf, &out),
        Cmd::Experiment { name } => cmd_experiment(name, cfg, &pmf, &out),
    }
}

fn cmd_sample(cfg: &ExperimentConfig, pmf: &DegreePmf, out: &Output) -> Result<(), CmdError> {
    let spec = ForestSpec::new(cfg.depth_cap, cfg.replicates, cfg.seed);
    let stats = ewt::sample_forest(pmf, &spec);
    let rows = stats.generation_counts();
    let header = (0..=cfg.depth_cap)
        .map(|l| format!("z{l}"))
        .collect::<Vec<_>>()
        .join(",");
    out.csv(
        "zcounts.csv",
        &format!("replicate,{header}"),
        rows.iter().enumerate().map(|(i, r)| {
            let counts = r
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",");
            format!("{i},{counts}")
        }),
    )?;
    // serialize a bounded number of trees
    let n_trees = cfg.replicates.min(100);
    let mut body = String::new();
    for rep in 0..n_trees {
        let seed = ewt_lab::rng::derive_stream(cfg.seed, rep as u64);
        let tree = ewt::sample_tree(pmf, cfg.depth_cap, seed);
        writeln!(body, "# tree {rep} seed {seed}").unwrap();
        body.push_str(&tree.serialize());
        body.push('\n');
    }
    out.text("trees.txt", &body)?;
    out.json(
        "sample_summary.json",
        json!({
            "replicates": cfg.replicates,
            "depth_cap": cfg.depth_cap,
            "serialized_trees": n_trees,
            "truncated": stats.truncated,
        }),
    )?;
    Ok(())
}

fn cmd_extinction(cfg: &ExperimentConfig, pmf: &DegreePmf, out: &Output) -> Result<f64, CmdError> {
    let grid = cfg.grid(pmf);
    let op = ExtinctionOperator::new(pmf, grid);
    let sol = op.solve(cfg.tol, cfg.max_iter)?;
    if !sol.converged {
        return Err(CmdError::numeric(
            "extinction iteration did not converge",
            json!({ "iterations": sol.iterations, "residual": sol.residual }),
        ));
    }
    out.csv(
        "extinction_q.csv",
        "x,q",
        grid.xs()
            .zip(&sol.q.values)
            .step_by((grid.n_points / 4000).max(1))
            .map(|(x, q)| format!("{},{}", fmt_f(x), fmt_f(*q))),
    )?;
    out.json(
        "extinction_summary.json",
        json!({
            "p_ext": sol.p_ext,
            "iterations": sol.iterations,
            "residual": sol.residual,
            "converged": sol.converged,
        }),
    )?;
    Ok(sol.p_ext)
}

fn cmd_spectral(cfg: &ExperimentConfig, pmf: &DegreePmf, out: &Output) -> Result<f64, CmdError> {
    let grid = cfg.grid(pmf);
    let sol = spectral::normalize_f0(spectral::find_beta0_on(pmf, grid)?)?;
    let kg = spectral::markov_kernel(&sol, pmf);
    let stat_resid = spectral::stationarity_residual(&sol);
    let scale = sol.c_n.sqrt();
    out.csv(
        "spectral.csv",
        "x,f0,pi,l_beta0",
        grid.xs()
            .enumerate()
            .step_by((grid.n_points / 4000).max(1))
            .map(|(i, x)| {
                let f0 = sol.f0.values[i];
                let pi = sol.g2.values[i] * f0 * f0;
                format!(
                    "{},{},{},{}",
                    fmt_f(x),
                    fmt_f(f0),
                    fmt_f(pi),
                    fmt_f(f0 / scale)
                )
            }),
    )?;
    out.json(
        "spectral.json",
        json!({
            "beta0": sol.beta0,
            "c_n": sol.c_n,
            "bracket": [sol.bracket.0, sol.bracket.1],
            "fixed_point_residual": sol.fixed_point_residual,
            "kernel_renorm_dev": kg.renorm_dev,
            "detailed_balance_violation": kg.detailed_balance_violation(),
            "stationarity_residual": stat_resid,
        }),
    )?;
    Ok(sol.beta0)
}

fn cmd_graph(cfg: &ExperimentConfig, pmf: &DegreePmf, out: &Output) -> Result<(), CmdError> {
    let g = kgraph::build_graph(cfg.n, DegreesInput::FromPmf(pmf), cfg.seed)?;
    let oracle = kgraph::EdgeCostOracle::new(cfg.n, cfg.seed);
    out.csv(
        "edges.csv",
        "i,j,cost",
        g.edges
            .iter()
            .map(|&(i, j)| format!("{i},{j},{}", fmt_f(oracle.cost(i, j).unwrap()))),
    )?;
    let mut sizes: Vec<(usize, usize)> = g.component_sizes.iter().copied().enumerate().collect();
    sizes.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    out.csv(
        "components.csv",
        "component_id,size",
        sizes.iter().map(|(id, s)| format!("{id},{s}")),
    )?;
    let hist = g.degree_histogram(128);
    out.csv(
        "graph_degrees.csv",
        "degree,count",
        hist.iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(d, c)| format!("{d},{c}")),
    )?;
    out.json(
        "graph_summary.json",
        json!({
            "n": g.n,
            "edges": g.edges.len(),
            "mean_degree": g.mean_degree(),
            "giant_ratio": g.giant_ratio(),
            "clamped_degrees": g.clamped,
        }),
    )?;
    Ok(())
}

fn cmd_degree(cfg: &ExperimentConfig, pmf: &DegreePmf, out: &Output) -> Result<(), CmdError> {
    let grid = cfg.grid(pmf);
    let quad = observables::root_degree_pmf_exact(pmf, grid);
    let closed = if cfg.family == "geo" {
        Some(observables::root_degree_pmf_geo(
            cfg.p,
            quad.pmf.len() + 32,
        )?)
    } else {
        None
    };
    let fs = ForestSpec::new(1, cfg.replicates, cfg.seed);
    let stats = ewt::sample_forest(pmf, &fs);
    let mc = stats.degree_pmf_by_generation(0)?;
    let mut rows = Vec::new();
    for (d, &p) in quad.pmf.iter().enumerate() {
        rows.push(format!("{d},{},quadrature", fmt_f(p)));
    }
    if let Some(c) = &closed {
        for (d, &p) in c.pmf.iter().enumerate() {
            rows.push(format!("{d},{},closed-form", fmt_f(p)));
        }
    }
    for (d, &p) in mc.probs.iter().enumerate() {
        if p > 0.0 {
            rows.push(format!("{d},{},monte-carlo", fmt_f(p)));
        }
    }
    out.csv("degree_laws.csv", "d,pmf,provenance", rows)?;
    let mc_law = DegreeLaw::from_pmf(mc.probs.clone(), Provenance::MonteCarlo);
    out.json(
        "degree_summary.json",
        json!({
            "mean_exact": observables::mean_degree_exact(pmf, grid),
            "mean_quadrature": quad.mean,
            "mean_monte_carlo": mc_law.mean,
            "tv_quadrature_vs_mc": quad.tv_distance(&mc_law),
            "tv_quadrature_vs_closed": closed.as_ref().map(|c| quad.tv_distance(c)),
            "mc_samples": mc.n_samples,
        }),
    )?;
    Ok(())
}

fn cmd_moments(cfg: &ExperimentConfig, pmf: &DegreePmf, out: &Output) -> Result<(), CmdError> {
    let grid = cfg.grid(pmf);
    let sol = spectral::normalize_f0(spectral::find_beta0_on(pmf, grid)?)?;
    let asym = spectral::ez_asymptote(&sol, pmf);
    let l_max = cfg.depth_cap.max(10);
    let mut rows = Vec::new();
    for l in 1..=l_max {
        let w = spectral::expected_wl(pmf, l)?;
        let z = spectral::expected_zl_exact(pmf, grid, l)?;
        let norm = z / sol.beta0.powi(l as i32);
        rows.push(format!("{l},{},{},{}", fmt_f(w), fmt_f(z), fmt_f(norm)));
    }
    out.csv("moments.csv", "l,expected_w,expected_z,z_over_beta_l", rows)?;

    // second moments: empirical E[(Z_l/beta0^l)^2] for a pinned root type
    // against the analytic limit U(m,x)·(∫ν)², where the node budget allows
    let mut second_rows = Vec::new();
    let mut second_note = "beta0 <= 1: normalized second moments diverge from no limit";
    if sol.beta0 > 1.0 {
        let root = ewt_lab::ewt::VertexType { m: 3, x: 4.0 };
        let mut l_mc = 1u32;
        while l_mc < l_max && sol.beta0.powi(l_mc as i32 + 1) <= 1e4 {
            l_mc += 1;
        }
        let budget: f64 = (1..=l_mc).map(|l| sol.beta0.powi(l as i32)).sum();
        let reps = ((2e7 / budget) as usize).clamp(1_000, cfg.replicates);
        let mut fs = ForestSpec::new(l_mc, reps, cfg.seed);
        fs.root = Some(root);
        let stats = ewt::sample_forest(pmf, &fs);
        let counts = stats.generation_counts();
        let u = ewt_lab::second_moment::u_truncated(root.m, root.x, &sol, pmf, 1e-7)?;
        let nu = spectral::eigenfunctions(&sol, pmf).nu_total();
        let predicted = u * nu * nu;
        for l in 1..=l_mc as usize {
            let scale = sol.beta0.powi(l as i32);
            let m2: f64 = counts
                .iter()
                .map(|r| (r[l] as f64 / scale).powi(2))
                .sum::<f64>()
                / counts.len() as f64;
            second_rows.push(format!("{l},{},{}", fmt_f(m2), fmt_f(predicted)));
        }
        second_note = "analytic column is the large-l limit for root type (m=3, x=4)";
    }
    out.csv(
        "second_moments.csv",
        "l,empirical_second_moment,analytic_prediction",
        second_rows,
    )?;
    out.json(
        "moments_summary.json",
        json!({
            "beta0": sol.beta0,
            "ez_asymptote": asym,
            "growth_constant": spectral::growth_constant(&sol, pmf),
            "second_moments_note": second_note,
        }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Figure experiments (desk scale)
// ---------------------------------------------------------------------------

/// Coarser grid for figure-quality degree laws; the 1e-6 pipelines keep the
/// fine default.
fn fig_grid(pmf: &DegreePmf) -> GridSpec {
    let base = pmf.default_grid();
    GridSpec::new(base.x_max, ((base.x_max / 0.02) as usize + 1).max(2001))
}

fn matched_baselines(root_law: &DegreeLaw) -> Result<(DegreeLaw, DegreeLaw), CmdError> {
    let mu = root_law.mean;
    let pois = observables::poisson_law(mu)?;
    let geo = observables::geometric_law(1.0 / mu.max(1.0 + 1e-9))?;
    Ok((pois, geo))
}

fn cmd_experiment(
    name: &str,
    cfg: &ExperimentConfig,
    pmf: &DegreePmf,
    out: &Output,
) -> Result<(), CmdError> {
    match name {
        "fig2" => fig2(cfg, pmf, out),
        "fig3" => fig3(cfg, pmf, out),
        "fig4" => fig4(cfg, pmf, out),
        "fig5" => fig_sweep(cfg, out, "fig5_growth_rate.csv", SweepKind::Growth),
        "fig6" => fig_sweep(cfg, out, "fig6_extinction.csv", SweepKind::Extinction),
        "fig7" => fig_sweep(cfg, out, "fig7_giant_component.csv", SweepKind::Giant),
        "fig8" => fig8(cfg, pmf, out),
        other => Err(CmdError::usage(format!(
            "unknown experiment '{other}' (expected fig2..fig8)"
        ))),
    }
}

/// Degree law of the root and first generation against the matched
/// comparison trees and the size-biased root law.
fn fig2(cfg: &ExperimentConfig, pmf: &DegreePmf, out: &Output) -> Result<(), CmdError> {
    let grid = fig_grid(pmf);
    let exact = observables::root_degree_pmf_exact(pmf, grid);
    let sized = observables::size_biased(&exact)?;
    let (pois, geo) = matched_baselines(&exact)?;
    let fs = ForestSpec::new(2, cfg.replicates, cfg.seed);
    let stats = ewt::sample_forest(pmf, &fs);
    let gen0 = stats.degree_pmf_by_generation(0)?;
    let gen1 = stats.degree_pmf_by_generation(1)?;
    let d_max = exact.pmf.len().max(gen1.probs.len()).max(pois.pmf.len());
    out.csv(
        "fig2_degree_laws.csv",
        "d,ewt_gen0_exact,ewt_gen0_mc,ewt_gen1_mc,sizebiased_root,gwt_poisson,gwt_geo",
        (0..d_max).map(|d| {
            let pick = |v: &[f64]| v.get(d).copied().unwrap_or(0.0);
            format!(
                "{d},{},{},{},{},{},{}",
                fmt_f(pick(&exact.pmf)),
                fmt_f(pick(&gen0.probs)),
                fmt_f(pick(&gen1.probs)),
                fmt_f(pick(&sized.pmf)),
                fmt_f(pick(&pois.pmf)),
                fmt_f(pick(&geo.pmf))
            )
        }),
    )?;
    out.json(
        "fig2_summary.json",
        json!({ "mean_degree": exact.mean, "replicates": cfg.replicates }),
    )?;
    Ok(())
}

/// Degree law of generations 0..2, estimated from the finite graph model.
fn fig3(cfg: &ExperimentConfig, pmf: &DegreePmf, out: &Output) -> Result<(), CmdError> {
    let bins = 192usize;
    let mut hists = vec![vec![0u64; bins]; 3];
    for gidx in 0..cfg.graphs {
        let seed = ewt_lab::rng::derive_stream(cfg.seed, gidx as u64);
        let g = kgraph::build_graph(cfg.n, DegreesInput::FromPmf(pmf), seed)?;
        // every vertex serves as a root; depths up to 2 via its ball
        let mut rng = ewt_lab::rng::SplitMix64::new(seed ^ 0xba11);
        let roots = (cfg.n / 10).max(200).min(cfg.n);
        for _ in 0..roots {
            let r = (rng.next_u64() % cfg.n as u64) as u32;
            let ball = kgraph::root_ball(&g, r, 3);
            for &(v, depth) in &ball.vertices {
                if depth <= 2 {
                    hists[depth as usize][g.adj[v as usize].len().min(bins - 1)] += 1;
                }
            }
        }
    }
    let grid = fig_grid(pmf);
    let exact = observables::root_degree_pmf_exact(pmf, grid);
    let laws: Vec<ewt::EmpiricalPmf> = hists
        .iter()
        .map(|h| ewt::EmpiricalPmf::from_hist(h))
        .collect();
    out.csv(
        "fig3_degree_by_generation.csv",
        "d,gen0,gen1,gen2,ewt_root_exact",
        (0..bins).map(|d| {
            format!(
                "{d},{},{},{},{}",
                fmt_f(laws[0].probs.get(d).copied().unwrap_or(0.0)),
                fmt_f(laws[1].probs.get(d).copied().unwrap_or(0.0)),
                fmt_f(laws[2].probs.get(d).copied().unwrap_or(0.0)),
                fmt_f(exact.pmf.get(d).copied().unwrap_or(0.0)),
            )
        }),
    )?;
    out.json(
        "fig3_summary.json",
        json!({ "graphs": cfg.graphs, "n": cfg.n, "gen0_samples": laws[0].n_samples }),
    )?;
    Ok(())
}

/// Conditional first-generation degree law given the root degree.
fn fig4(cfg: &ExperimentConfig, pmf: &DegreePmf, out: &Output) -> Result<(), CmdError> {
    let fs = ForestSpec::new(2, cfg.replicates, cfg.seed);
    let stats = ewt::sample_forest(pmf, &fs);
    let conditioners = [1u32, 3, 5, 8];
    let laws: Vec<Option<ewt::EmpiricalPmf>> = conditioners
        .iter()
        .map(|&r| stats.conditional_degree_gen1(r).unwrap_or(None))
        .collect();
    let d_max = 64usize;
    out.csv(
        "fig4_conditional_degree.csv",
        "d,given_root_1,given_root_3,given_root_5,given_root_8",
        (0..d_max).map(|d| {
            let cells: Vec<String> = laws
                .iter()
                .map(|law| {
                    fmt_f(
                        law.as_ref()
                            .map(|l| l.probs.get(d).copied().unwrap_or(0.0))
                            .unwrap_or(f64::NAN),
                    )
                })
                .collect();
            format!("{d},{}", cells.join(","))
        }),
    )?;
    out.json(
        "fig4_summary.json",
        json!({
            "replicates": cfg.replicates,
            "conditional_means": laws
                .iter()
                .map(|l| l.as_ref().map(|x| x.mean()))
                .collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}

enum SweepKind {
    Growth,
    Extinction,
    Giant,
}

/// Parameter sweeps over the geometric family against the matched
/// comparison baselines.
fn fig_sweep(
    cfg: &ExperimentConfig,
    out: &Output,
    file: &str,
    kind: SweepKind,
) -> Result<(), CmdError> {
    let ps = [0.05, 0.08, 0.12, 0.18, 0.25, 0.32, 0.38, 0.41, 0.44, 0.5];
    let mut rows = Vec::new();
    for &p in &ps {
        let pmf = DegreePmf::geometric(p)?;
        let grid = fig_grid(&pmf);
        let root_law = observables::root_degree_pmf_exact(&pmf, grid);
        let (pois, geo) = matched_baselines(&root_law)?;
        let b_pois = observables::gwt_star_baselines(&pois)?;
        let b_geo = observables::gwt_star_baselines(&geo)?;
        let b_root = observables::gwt_star_baselines(&root_law)?;
        match kind {
            SweepKind::Growth => {
                let sol = spectral::find_beta0(&pmf)?;
                rows.push(format!(
                    "{p},{},{},{},{}",
                    fmt_f(sol.beta0),
                    fmt_f(b_pois.growth_rate),
                    fmt_f(b_geo.growth_rate),
                    fmt_f(b_root.growth_rate)
                ));
            }
            SweepKind::Extinction => {
                let op = ExtinctionOperator::new(&pmf, pmf.default_grid());
                let sol = op.solve(cfg.tol, cfg.max_iter)?;
                rows.push(format!(
                    "{p},{},{},{},{}",
                    fmt_f(sol.p_ext),
                    fmt_f(b_pois.p_ext),
                    fmt_f(b_geo.p_ext),
                    fmt_f(b_root.p_ext)
                ));
            }
            SweepKind::Giant => {
                let op = ExtinctionOperator::new(&pmf, pmf.default_grid());
                let sol = op.solve(cfg.tol, cfg.max_iter)?;
                let (mut sum, mut sum2) = (0.0, 0.0);
                for gidx in 0..cfg.graphs {
                    let seed = ewt_lab::rng::derive_stream(cfg.seed, gidx as u64);
                    let g = kgraph::build_graph(cfg.n, DegreesInput::FromPmf(&pmf), seed)?;
                    let r = g.giant_ratio();
                    sum += r;
                    sum2 += r * r;
                }
                let mean = sum / cfg.graphs as f64;
                let var = (sum2 / cfg.graphs as f64 - mean * mean).max(0.0);
                let se = (var / cfg.graphs as f64).sqrt();
                rows.push(format!(
                    "{p},{},{},{},{},{}",
                    fmt_f(mean),
                    fmt_f(se),
                    fmt_f(1.0 - sol.p_ext),
                    fmt_f(1.0 - b_root.p_ext),
                    fmt_f(1.0 - b_geo.p_ext)
                ));
            }
        }
    }
    let header = match kind {
        SweepKind::Growth => "p,beta0,gwt_poisson_growth,gwt_geo_growth,gwt_rootlaw_growth",
        SweepKind::Extinction => "p,p_ext_ewt,p_ext_gwt_poisson,p_ext_gwt_geo,p_ext_gwt_rootlaw",
        SweepKind::Giant => {
            "p,giant_ratio_mean,giant_ratio_se,one_minus_p_ext,one_minus_p_ext_gwt_rootlaw,one_minus_p_ext_gwt_geo"
        }
    };
    out.csv(file, header, rows)?;
    out.json("sweep_summary.json", json!({ "points": ps.len() }))?;
    Ok(())
}

/// Giant-component ratio per seed against 1 - p_ext at a fixed parameter.
fn fig8(cfg: &ExperimentConfig, pmf: &DegreePmf, out: &Output) -> Result<(), CmdError> {
    let op = ExtinctionOperator::new(pmf, cfg.grid(pmf));
    let sol = op.solve(cfg.tol, cfg.max_iter)?;
    if !sol.converged {
        return Err(CmdError::numeric(
            "extinction iteration did not converge",
            json!({ "residual": sol.residual }),
        ));
    }
    let survival = 1.0 - sol.p_ext;
    let mut rows = Vec::new();
    let mut sum = 0.0;
    for gidx in 0..cfg.graphs {
        let seed = ewt_lab::rng::derive_stream(cfg.seed, gidx as u64);
        let g = kgraph::build_graph(cfg.n, DegreesInput::FromPmf(pmf), seed)?;
        let ratio = g.giant_ratio();
        sum += ratio;
        rows.push(format!("{gidx},{},{}", fmt_f(ratio), fmt_f(survival)));
    }
    out.csv(
        "fig8_giant_vs_survival.csv",
        "graph,giant_ratio,one_minus_p_ext",
        rows,
    )?;
    out.json(
        "fig8_summary.json",
        json!({
            "mean_giant_ratio": sum / cfg.graphs as f64,
            "one_minus_p_ext": survival,
            "n": cfg.n,
            "graphs": cfg.graphs,
        }),
    )?;
    Ok(())
}
