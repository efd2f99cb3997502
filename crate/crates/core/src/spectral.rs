//! Growth rate and eigenfunctions of the mean offspring operator.
//!
//! The mean one-generation operator factors through the symmetric kernel
//! min(x,z)·g₂(z). Its leading eigenvalue β₀ is located as the largest zero
//! in β of the alternating series L(β,0) = Σ G_i(0)(-1/β)^i, whose terms come
//! from a two-fold backward-integration recursion; the eigenfunction is
//! L(β₀,·) up to normalization. A reversible Markov kernel built from the
//! eigenpair yields the l-step factorization h_l ≈ β₀^l f₀(x) f₀(y) behind
//! the first- and second-moment asymptotics.
//!
//! Every min-kernel integral here is the canonical double-cumulative form of
//! [`min_kernel_apply`], so the fixed-point identity, kernel row sums, and
//! stationarity hold to round-off on the grid rather than to O(step²).

use crate::error::{domain, Error, Result};
use crate::numerics::{min_kernel_apply, DegreePmf, GridFn, GridSpec};

/// First positive zero of the Bessel function J₀, to 16 digits.
pub const BESSEL_J0_ROOT: f64 = 2.404825557695773;

/// J₀ by its power series; adequate for |x| ≲ 12, which covers every use here.
pub fn bessel_j0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..200 {
        term *= -q / ((i * i) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1.0) {
            break;
        }
    }
    sum
}

/// Spectral eigenpair and diagnostics.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub beta0: f64,
    /// L(β₀,·) before [`normalize_f0`], √C_N · L(β₀,·) after.
    pub f0: GridFn,
    /// Normalization constant C_N = (∫ g₂ L(β₀,·)²)⁻¹; NaN until normalized.
    pub c_n: f64,
    /// (max_x x·∫_x^∞ g₂, E[n]-1); β₀ lies strictly inside.
    pub bracket: (f64, f64),
    /// sup residual of β₀ f₀ = ∫₀^x ∫_y^∞ g₂ f₀; NaN until normalized.
    pub fixed_point_residual: f64,
    /// (β, L(β,0)) pairs from the root scan.
    pub l0_samples: Vec<(f64, f64)>,
    pub g1: GridFn,
    pub g2: GridFn,
    /// f₀'(0) = ∫ g₂ f₀ / β₀; NaN until normalized.
    pub f0_prime0: f64,
    pub normalized: bool,
}

impl SpectralSolution {
    pub fn grid(&self) -> GridSpec {
        self.f0.spec
    }
}

/// G_0 ≡ 1, G_i = ∫_x^∞ ∫_y^∞ g₂ G_{i-1}; extended until the series term at
/// β = `beta_floor` drops below 1e-16 (hard cap 60 terms).
pub fn g_sequence(g2: &GridFn, beta_floor: f64, cap: usize) -> Vec<GridFn> {
    let spec = g2.spec;
    let mut gs = vec![GridFn::constant(spec, 1.0)];
    let mut scale = 1.0; // 1/beta_floor^i
    for _ in 1..cap.max(2) {
        let prev = gs.last().unwrap();
        let next = g2
            .zip_with(prev, |a, b| a * b)
            .backward_tail()
            .backward_tail();
        scale /= beta_floor;
        let head = next.values[0] * scale;
        gs.push(next);
        if head.abs() < 1e-16 {
            break;
        }
    }
    gs
}

/// L(β, ·) = Σ_i G_i(·) (-1/β)^i on the grid.
pub fn eval_l(beta: f64, gs: &[GridFn]) -> Result<GridFn> {
    if beta == 0.0 {
        return Err(domain("eval_l: beta must be nonzero"));
    }
    let spec = gs[0].spec;
    let mut values = vec![0.0; spec.n_points];
    let mut coeff = 1.0;
    for g in gs {
        for (v, gv) in values.iter_mut().zip(&g.values) {
            *v += coeff * gv;
        }
        coeff *= -1.0 / beta;
    }
    Ok(GridFn { spec, values })
}

/// L(β, 0) from the G_i(0) head values only.
pub fn eval_l0(beta: f64, gs: &[GridFn]) -> f64 {
    let mut sum = 0.0;
    let mut coeff = 1.0;
    for g in gs {
        sum += coeff * g.values[0];
        coeff *= -1.0 / beta;
    }
    sum
}

/// Locate β₀ (largest zero of L(·,0)) inside the proven bracket and return
/// the un-normalized solution. The scan walks a log mesh downward from the
/// upper bracket end so the sign change found first is the largest zero.
pub fn find_beta0(pmf: &DegreePmf) -> Result<SpectralSolution> {
    find_beta0_on(pmf, pmf.default_grid())
}

pub fn find_beta0_on(pmf: &DegreePmf, spec: GridSpec) -> Result<SpectralSolution> {
    let g1 = GridFn::from_fn(spec, |z| pmf.g_series(1, z).unwrap());
    let g2 = GridFn::from_fn(spec, |z| pmf.g_series(2, z).unwrap());
    let tail = g2.backward_tail();
    let lo = spec
        .xs()
        .zip(&tail.values)
        .map(|(x, &t)| x * t)
        .fold(0.0f64, f64::max);
    let hi = pmf.mean() - 1.0;
    if !(hi > 0.0) {
        return Err(domain("find_beta0: E[n] must exceed 1"));
    }
    let floor = (lo * 0.5).max(1e-8);
    let gs = g_sequence(&g2, floor, 60);

    // downward log mesh over [max(lo, tiny), hi]
    let scan_lo = lo.max(hi * 1e-6);
    let mesh = 400;
    let ratio = (hi / scan_lo).ln() / mesh as f64;
    let mut samples = Vec::with_capacity(mesh + 1);
    let mut root_interval = None;
    let mut prev: Option<(f64, f64)> = None;
    for j in 0..=mesh {
        let beta = hi * (-(j as f64) * ratio).exp();
        let val = eval_l0(beta, &gs);
        samples.push((beta, val));
        if let Some((pb, pv)) = prev {
            if pv > 0.0 && val <= 0.0 {
                root_interval = Some((beta, pb));
                break;
            }
        }
        prev = Some((beta, val));
    }
    let (mut a, mut b) = root_interval.ok_or_else(|| Error::NoRoot(samples.clone()))?;
    // L(a,0) <= 0 < L(b,0); bisect to 1e-10 relative
    for _ in 0..200 {
        if (b - a) <= 1e-10 * b {
            break;
        }
        let mid = 0.5 * (a + b);
        if eval_l0(mid, &gs) <= 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let beta0 = 0.5 * (a + b);
    let f0 = eval_l(beta0, &gs)?;
    if f0.values.iter().any(|&v| v < -1e-8) {
        return Err(domain("find_beta0: L(beta0,·) took a negative value"));
    }
    for i in 1..f0.len() {
        if f0.values[i] < f0.values[i - 1] - 1e-12 {
            return Err(domain("find_beta0: L(beta0,·) is not non-decreasing"));
        }
    }
    Ok(SpectralSolution {
        beta0,
        f0,
        c_n: f64::NAN,
        bracket: (lo, hi),
        fixed_point_residual: f64::NAN,
        l0_samples: samples,
        g1,
        g2,
        f0_prime0: f64::NAN,
        normalized: false,
    })
}

/// Closed-form β₀ for the geometric family: 4(1-p)/(r₀² p).
pub fn beta0_geo_closed(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("beta0_geo_closed: p must be in (0,1)"));
    }
    Ok(4.0 * (1.0 - p) / (BESSEL_J0_ROOT * BESSEL_J0_ROOT * p))
}

/// Scale f₀ so that ∫ g₂ f₀² = 1, and record the fixed-point residual
/// sup_x |β₀ f₀(x) - ∫₀^x ∫_y^∞ g₂ f₀| / max(β₀ f₀(x), ε).
pub fn normalize_f0(mut sol: SpectralSolution) -> Result<SpectralSolution> {
    let norm = sol.g2.zip_with(&sol.f0, |a, b| a * b * b).total();
    if !(norm > 0.0) {
        return Err(domain("normalize_f0: ∫ g₂ L² must be positive"));
    }
    sol.c_n = 1.0 / norm;
    let scale = sol.c_n.sqrt();
    sol.f0 = sol.f0.map(|v| v * scale);
    let g2f0 = sol.g2.zip_with(&sol.f0, |a, b| a * b);
    sol.f0_prime0 = g2f0.backward_tail().values[0] / sol.beta0;
    let image = min_kernel_apply(&g2f0);
    let f0_sup = sol.f0.values.last().copied().unwrap_or(1.0);
    let eps = 0.01 * sol.beta0 * f0_sup;
    sol.fixed_point_residual = sol
        .f0
        .values
        .iter()
        .zip(&image.values)
        .map(|(&f, &im)| (sol.beta0 * f - im).abs() / (sol.beta0 * f).max(eps))
        .fold(0.0, f64::max);
    sol.normalized = true;
    Ok(sol)
}

// ---------------------------------------------------------------------------
// Eigenfunctions
// ---------------------------------------------------------------------------

/// Right and left eigenfunction evaluators μ(m,x) = m f₀(x)/x and
/// ν(k-1,z) = P(k) e^{-z} z^{k-1}/(k-1)! f₀(z).
pub struct Eigenfunctions<'a> {
    sol: &'a SpectralSolution,
    pmf: &'a DegreePmf,
}

pub fn eigenfunctions<'a>(sol: &'a SpectralSolution, pmf: &'a DegreePmf) -> Eigenfunctions<'a> {
    assert!(sol.normalized, "normalize_f0 first");
    Eigenfunctions { sol, pmf }
}

impl Eigenfunctions<'_> {
    /// μ(m, x); μ(m, 0) = m f₀'(0).
    pub fn mu(&self, m: u32, x: f64) -> f64 {
        if m == 0 {
            return 0.0;
        }
        if x == 0.0 {
            m as f64 * self.sol.f0_prime0
        } else {
            m as f64 * self.sol.f0.at(x) / x
        }
    }

    /// ν(k-1, z) indexed by k ≥ 1.
    pub fn nu(&self, k: u32, z: f64) -> f64 {
        let p = self.pmf.prob(k);
        if p == 0.0 {
            return 0.0;
        }
        p * crate::numerics::erlang_pdf(k, z).unwrap() * self.sol.f0.at(z)
    }

    /// ∫ Σ_{k ∈ [k_lo, k_hi]} ν(k-1, z) dz over z ∈ [z_lo, z_hi].
    pub fn nu_mass(&self, k_lo: u32, k_hi: u32, z_lo: f64, z_hi: f64) -> Result<f64> {
        let spec = self.sol.grid();
        let mut total = 0.0;
        for k in k_lo.max(1)..=k_hi.min(self.pmf.k_max()) {
            let p = self.pmf.prob(k);
            if p == 0.0 {
                continue;
            }
            let w = GridFn {
                spec,
                values: spec
                    .xs()
                    .zip(&self.sol.f0.values)
                    .map(|(z, &f)| crate::numerics::erlang_pdf(k, z).unwrap() * f)
                    .collect(),
            };
            total += p * w.integrate(z_lo.max(0.0), z_hi.min(spec.x_max))?;
        }
        Ok(total)
    }

    /// Total mass ∫ Σ_k ν(k-1, z) dz = ∫ g₁ f₀.
    pub fn nu_total(&self) -> f64 {
        self.sol.g1.zip_with(&self.sol.f0, |a, b| a * b).total()
    }
}

// ---------------------------------------------------------------------------
// Markov kernel
// ---------------------------------------------------------------------------

/// Discretized transition kernel p(x,y) = min(x,y) g₂(y) f₀(y) / (β₀ f₀(x))
/// with its stationary density π = g₂ f₀².
///
/// The matrix lives on a (possibly subsampled) kernel grid; stored rows are
/// trapezoid-weighted and renormalized to sum exactly to one, with the raw
/// deviation kept as a diagnostic.
#[derive(Debug, Clone)]
pub struct KernelGrid {
    pub xs: Vec<f64>,
    pub step: f64,
    /// Row-major n×n matrix of transition masses; rows sum to 1.
    pub p_matrix: Vec<f64>,
    /// Stationary density values on the kernel grid.
    pub pi: Vec<f64>,
    /// max_i |raw row sum - 1| before renormalization.
    pub renorm_dev: f64,
    pub beta0: f64,
    f0k: Vec<f64>,
    g2k: Vec<f64>,
    weights: Vec<f64>,
    f0_prime0: f64,
}

pub fn markov_kernel(sol: &SpectralSolution, pmf: &DegreePmf) -> KernelGrid {
    markov_kernel_with_points(sol, pmf, 1601)
}

pub fn markov_kernel_with_points(
    sol: &SpectralSolution,
    _pmf: &DegreePmf,
    target_points: usize,
) -> KernelGrid {
    assert!(sol.normalized, "normalize_f0 first");
    let spec = sol.grid();
    let stride = (spec.n_points - 1).div_ceil(target_points - 1);
    let stride = stride.max(1);
    let idx: Vec<usize> = (0..spec.n_points).step_by(stride).collect();
    let n = idx.len();
    let step = spec.step * stride as f64;
    let xs: Vec<f64> = idx.iter().map(|&i| spec.x(i)).collect();
    let f0k: Vec<f64> = idx.iter().map(|&i| sol.f0.values[i]).collect();
    let g2k: Vec<f64> = idx.iter().map(|&i| sol.g2.values[i]).collect();
    let mut weights = vec![step; n];
    weights[0] = 0.5 * step;
    weights[n - 1] = 0.5 * step;

    let mut p_matrix = vec![0.0; n * n];
    let mut renorm_dev = 0.0f64;
    for i in 0..n {
        let row = &mut p_matrix[i * n..(i + 1) * n];
        for j in 0..n {
            row[j] = kernel_density(sol, &xs, &f0k, &g2k, i, j) * weights[j];
        }
        let sum: f64 = row.iter().sum();
        renorm_dev = renorm_dev.max((sum - 1.0).abs());
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    let pi: Vec<f64> = (0..n).map(|j| g2k[j] * f0k[j] * f0k[j]).collect();
    KernelGrid {
        xs,
        step,
        p_matrix,
        pi,
        renorm_dev,
        beta0: sol.beta0,
        f0k,
        g2k,
        weights,
        f0_prime0: sol.f0_prime0,
    }
}

#[inline]
fn kernel_density(
    sol: &SpectralSolution,
    xs: &[f64],
    f0k: &[f64],
    g2k: &[f64],
    i: usize,
    j: usize,
) -> f64 {
    let tail = g2k[j] * f0k[j];
    if i == 0 {
        tail / (sol.beta0 * sol.f0_prime0)
    } else {
        xs[i].min(xs[j]) * tail / (sol.beta0 * f0k[i])
    }
}

impl KernelGrid {
    pub fn n(&self) -> usize {
        self.xs.len()
    }

    /// Analytic kernel density p(x_i, y_j) (not weighted, not renormalized).
    pub fn density(&self, i: usize, j: usize) -> f64 {
        let tail = self.g2k[j] * self.f0k[j];
        if i == 0 {
            tail / (self.beta0 * self.f0_prime0)
        } else {
            self.xs[i].min(self.xs[j]) * tail / (self.beta0 * self.f0k[i])
        }
    }

    /// max over pairs of |π(x)p(x,y) - π(y)p(y,x)| / scale, evaluated on the
    /// analytic kernel (the identity is algebraic; only round-off survives).
    pub fn detailed_balance_violation(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 1..n {
            for j in (i + 1)..n {
                let lhs = self.pi[i] * self.density(i, j);
                let rhs = self.pi[j] * self.density(j, i);
                let scale = lhs.abs().max(rhs.abs());
                if scale > 1e-300 {
                    worst = worst.max((lhs - rhs).abs() / scale);
                }
            }
        }
        worst
    }

    /// One density-evolution step ρ ↦ ρP on the kernel grid, using the
    /// double-cumulative min-kernel form.
    fn step_density(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.n();
        let h = self.step;
        // u = ρ/f₀ with u(0) = 0 (every density in play vanishes like y²)
        let mut u = vec![0.0; n];
        for j in 1..n {
            u[j] = rho[j] / self.f0k[j];
        }
        // backward tail then forward prefix of u
        let mut bt = vec![0.0; n];
        let mut acc = 0.0;
        for j in (0..n - 1).rev() {
            acc += 0.5 * h * (u[j] + u[j + 1]);
            bt[j] = acc;
        }
        let mut fp = vec![0.0; n];
        let mut acc2 = 0.0;
        for j in 1..n {
            acc2 += 0.5 * h * (bt[j - 1] + bt[j]);
            fp[j] = acc2;
        }
        (0..n)
            .map(|j| self.g2k[j] * self.f0k[j] * fp[j] / self.beta0)
            .collect()
    }
}

/// l-step iterates of the kernel with total-variation diagnostics.
#[derive(Debug, Clone)]
pub struct KernelIterates {
    pub l: usize,
    /// Row-major matrix of l-step transition masses.
    pub p_l: Vec<f64>,
    /// TV(p^{(l)}(x_i, ·), π) per starting index.
    pub tv_per_start: Vec<f64>,
    /// Mean TV after 1..=l steps.
    pub tv_mean_history: Vec<f64>,
    /// Slope of the ln TV fit over l ∈ [3, l] (geometric rate estimate e^slope).
    pub rate_estimate: f64,
    pub fit_r2: f64,
}

pub fn iterate_kernel(kg: &KernelGrid, l: usize) -> KernelIterates {
    assert!(l >= 1, "iterate_kernel: l must be >= 1");
    let n = kg.n();
    // TV reference: the discrete chain's own stationary mass, reached by
    // evolving the analytic density until it stops moving. Measuring against
    // the analytic π instead would floor the TV sequence at the O(step²)
    // discretization bias and spoil the geometric-decay fit.
    let pi_mass: Vec<f64> = {
        let mut rho: Vec<f64> = kg.pi.clone();
        for _ in 0..100 {
            rho = kg.step_density(&rho);
        }
        let raw: Vec<f64> = (0..n).map(|j| rho[j] * kg.weights[j]).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    };
    let mut tv_sums = vec![0.0f64; l];
    let mut p_l = vec![0.0; n * n];
    let mut tv_per_start = vec![0.0; n];
    for i in 0..n {
        // step 1 is the stored row; later steps evolve the density
        let mut mass: Vec<f64> = kg.p_matrix[i * n..(i + 1) * n].to_vec();
        let tv = 0.5
            * mass
                .iter()
                .zip(&pi_mass)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        tv_sums[0] += tv;
        if l == 1 {
            tv_per_start[i] = tv;
        }
        let mut rho: Vec<f64> = (0..n)
            .map(|j| {
                if kg.weights[j] > 0.0 {
                    mass[j] / kg.weights[j]
                } else {
                    0.0
                }
            })
            .collect();
        for step in 2..=l {
            rho = kg.step_density(&rho);
            mass = (0..n).map(|j| rho[j] * kg.weights[j]).collect();
            // the discrete step conserves mass only to O(step²); renormalize
            let total: f64 = mass.iter().sum();
            for v in mass.iter_mut() {
                *v /= total;
            }
            let tv = 0.5
                * mass
                    .iter()
                    .zip(&pi_mass)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>();
            tv_sums[step - 1] += tv;
            if step == l {
                tv_per_start[i] = tv;
            }
        }
        p_l[i * n..(i + 1) * n].copy_from_slice(&mass);
    }
    let tv_mean_history: Vec<f64> = tv_sums.iter().map(|s| s / n as f64).collect();
    let (rate_estimate, fit_r2) = fit_log_decay(&tv_mean_history);
    KernelIterates {
        l,
        p_l,
        tv_per_start,
        tv_mean_history,
        rate_estimate,
        fit_r2,
    }
}

/// Least-squares fit of ln TV(l) against l over l ≥ 3; returns (e^slope, R²).
fn fit_log_decay(tv: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = tv
        .iter()
        .enumerate()
        .skip(2)
        .filter(|(_, &v)| v > 1e-14)
        .map(|(i, &v)| ((i + 1) as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        f64::NAN
    };
    (slope.exp(), r2)
}

impl KernelIterates {
    /// sup over the π-bulk of |h_l(x,y)/(β₀^l f₀(x) f₀(y)) - 1|, which equals
    /// the pointwise relative distance of p^{(l)}(x,·) from π. The sup is
    /// restricted to grid points carrying at least `mass_floor` of the peak
    /// stationary density; outside that bulk the ratio error is not uniform.
    pub fn factorization_sup(&self, kg: &KernelGrid, mass_floor: f64) -> f64 {
        let n = kg.n();
        let peak = kg.pi.iter().cloned().fold(0.0f64, f64::max);
        let floor = peak * mass_floor;
        let mut worst = 0.0f64;
        for i in 0..n {
            if kg.pi[i] < floor {
                continue;
            }
            for j in 0..n {
                if kg.pi[j] < floor {
                    continue;
                }
                let p_l_density = self.p_l[i * n + j] / kg.weights[j];
                let ratio = p_l_density / kg.pi[j];
                worst = worst.max((ratio - 1.0).abs());
            }
        }
        worst
    }
}

/// One-step stationarity residual sup_y |(πP)(y) - π(y)| on the full grid.
pub fn stationarity_residual(sol: &SpectralSolution) -> f64 {
    assert!(sol.normalized);
    let g2f0 = sol.g2.zip_with(&sol.f0, |a, b| a * b);
    // (πP)(y) = g₂(y) f₀(y) / β₀ · ∫ min(x,y) g₂(x) f₀(x) dx
    let minned = min_kernel_apply(&g2f0);
    let pi_image = g2f0.zip_with(&minned, |gf, m| gf * m / sol.beta0);
    let pi = sol.g2.zip_with(&sol.f0, |a, b| a * b * b);
    pi_image.sup_diff(&pi)
}

// ---------------------------------------------------------------------------
// Power iteration
// ---------------------------------------------------------------------------

/// Leading eigenpair of the discretized kernel by power iteration; an
/// algorithmically independent route to (β₀, f₀).
pub fn power_iteration(g2: &GridFn, tol: f64, max_iter: usize) -> (f64, GridFn, usize) {
    power_iteration_deflated(g2, None, tol, max_iter)
}

/// Power iteration, optionally deflating against `ortho` in the υ-weighted
/// inner product ⟨f,g⟩ = ∫ f g g₂.
pub fn power_iteration_deflated(
    g2: &GridFn,
    ortho: Option<&GridFn>,
    tol: f64,
    max_iter: usize,
) -> (f64, GridFn, usize) {
    let spec = g2.spec;
    let mut v = GridFn::from_fn(spec, |x| x / (1.0 + x));
    let mut lambda = 0.0;
    let mut iters = 0;
    let inner = |a: &GridFn, b: &GridFn| -> f64 {
        a.zip_with(b, |x, y| x * y)
            .zip_with(g2, |x, g| x * g)
            .total()
    };
    for it in 1..=max_iter {
        iters = it;
        if let Some(f0) = ortho {
            let c = inner(&v, f0) / inner(f0, f0);
            v = v.zip_with(f0, |a, b| a - c * b);
        }
        let image = min_kernel_apply(&g2.zip_with(&v, |a, b| a * b));
        let num = inner(&image, &v);
        let den = inner(&v, &v);
        let next_lambda = num / den;
        let sup = image.values.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        v = image.map(|x| x / sup.max(1e-300));
        if (next_lambda - lambda).abs() <= tol * next_lambda.abs().max(1e-300) {
            lambda = next_lambda;
            break;
        }
        lambda = next_lambda;
    }
    (lambda, v, iters)
}

// ---------------------------------------------------------------------------
// Exact first moments
// ---------------------------------------------------------------------------

/// E[W_l] = E[n] (E[n]-1)^{l-1}: expected potential vertices at depth l.
pub fn expected_wl(pmf: &DegreePmf, l: u32) -> Result<f64> {
    if l == 0 {
        return Err(domain("expected_wl: l must be >= 1"));
    }
    Ok(pmf.mean() * (pmf.mean() - 1.0).powi(l as i32 - 1))
}

/// Σ_k P(k) F̄_k on the grid.
pub fn threshold_tail_fn(pmf: &DegreePmf, spec: GridSpec) -> GridFn {
    GridFn::from_fn(spec, |y| pmf.threshold_tail(y))
}

/// Σ_{k≥2} P(k) F̄_{k-1} on the grid (the inner factor of the depth chain).
pub fn shifted_threshold_tail_fn(pmf: &DegreePmf, spec: GridSpec) -> GridFn {
    let n = spec.n_points;
    let mut term: Vec<f64> = spec.xs().map(|y| (-y).exp()).collect();
    let mut sf = term.clone(); // F̄_{k-1} for k = 2
    let mut acc = vec![0.0; n];
    for (k, p) in pmf.iter() {
        if k < 2 {
            continue;
        }
        if k > 2 {
            let j = (k - 2) as f64;
            for i in 0..n {
                term[i] *= spec.x(i) / j;
                sf[i] += term[i];
            }
        }
        for i in 0..n {
            acc[i] += p * sf[i].min(1.0);
        }
    }
    GridFn { spec, values: acc }
}

/// Exact E[Z_l] by dynamic programming over the max-coupled integral chain:
/// C ← S₂·∫₀^y C + ∫_y^∞ S₂ C per inner level, then E[Z_l] = ∫ S₁ C with
/// S₁ = Σ P(k) F̄_k and S₂ = Σ_{k≥2} P(k) F̄_{k-1}.
pub fn expected_zl_exact(pmf: &DegreePmf, spec: GridSpec, l: u32) -> Result<f64> {
    if l == 0 {
        return Err(domain("expected_zl_exact: l must be >= 1"));
    }
    let s1 = threshold_tail_fn(pmf, spec);
    let s2 = shifted_threshold_tail_fn(pmf, spec);
    let mut c = s1.clone();
    for _ in 1..l {
        let lo = c.forward_prefix();
        let hi = s2.zip_with(&c, |a, b| a * b).backward_tail();
        c = s2.zip_with(&lo, |a, b| a * b).zip_with(&hi, |a, b| a + b);
    }
    Ok(s1.zip_with(&c, |a, b| a * b).total())
}

/// The two bracketed integrals of the E[Z_l]/β₀^l limit:
/// (Σ_m P(m) ∫ e^{-x} x^m/m! · (m/x) f₀ dx, ∫ Σ_k P(k) e^{-z}z^{k-1}/(k-1)! f₀ dz).
pub fn growth_factors(sol: &SpectralSolution, pmf: &DegreePmf) -> (f64, f64) {
    assert!(sol.normalized);
    let spec = sol.grid();
    // first factor assembled per m (the x^m/m!·m/x route)
    let n = spec.n_points;
    let mut term: Vec<f64> = spec.xs().map(|x| (-x).exp()).collect(); // e^{-x} x^{m-1}/(m-1)!
    let mut acc = vec![0.0; n];
    for (m, p) in pmf.iter() {
        if m > 1 {
            let j = (m - 1) as f64;
            for i in 0..n {
                term[i] *= spec.x(i) / j;
            }
        }
        for i in 0..n {
            acc[i] += p * term[i];
        }
    }
    let per_m = GridFn { spec, values: acc };
    let factor1 = per_m.zip_with(&sol.f0, |a, b| a * b).total();
    let factor2 = sol.g1.zip_with(&sol.f0, |a, b| a * b).total();
    (factor1, factor2)
}

/// The constant ∫ Σ_k ν(k-1,z) dz of the per-type growth limit.
pub fn growth_constant(sol: &SpectralSolution, pmf: &DegreePmf) -> f64 {
    growth_factors(sol, pmf).1
}

/// lim E[Z_l]/β₀^l: product of the two growth factors.
pub fn ez_asymptote(sol: &SpectralSolution, pmf: &DegreePmf) -> f64 {
    let (a, b) = growth_factors(sol, pmf);
    a * b
}

/// h_1(x,·), ..., h_{l_max}(x,·) for a fixed first argument, via the kernel
/// recursion h_{t+1}(x,·) = ∫ h_t(x,z) g₂(z) min(z,·) dz.
pub fn h_iterates(g2: &GridFn, x: f64, l_max: usize) -> Vec<GridFn> {
    let spec = g2.spec;
    let mut out = Vec::with_capacity(l_max);
    let mut h = GridFn::from_fn(spec, |z| z.min(x));
    out.push(h.clone());
    for _ in 1..l_max {
        h = min_kernel_apply(&g2.zip_with(&h, |a, b| a * b));
        out.push(h.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solved(p: f64) -> (DegreePmf, SpectralSolution) {
        let pmf = DegreePmf::geometric(p).unwrap();
        let sol = normalize_f0(find_beta0(&pmf).unwrap()).unwrap();
        (pmf, sol)
    }

    #[test]
    fn bessel_root_is_a_zero_of_the_series() {
        // bisection oracle on the power series reproduces the frozen constant
        let (mut a, mut b) = (2.0f64, 3.0f64);
        assert!(bessel_j0_series(a) > 0.0 && bessel_j0_series(b) < 0.0);
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if bessel_j0_series(mid) > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        assert!((0.5 * (a + b) - BESSEL_J0_ROOT).abs() < 1e-13);
    }

    #[test]
    fn g_sequence_matches_geometric_closed_form() {
        let p = 0.08;
        let pmf = DegreePmf::geometric(p).unwrap();
        // each recursion level contributes ~step²(ip)²/6 relative error, so
        // checking i ≤ 6 at 1e-7 needs a finer step than the pipeline default
        let base = pmf.default_grid();
        let spec = GridSpec::new(
            base.x_max,
            ((base.x_max / 0.0008) as usize).next_power_of_two(),
        );
        let g2 = GridFn::from_fn(spec, |z| pmf.g_series(2, z).unwrap());
        let gs = g_sequence(&g2, 1.0, 60);
        assert_eq!(gs[0].values[0], 1.0);
        let ratio = (1.0 - p) / p;
        for i in 1..=6usize {
            let mut fact2 = 1.0f64;
            for j in 1..=i {
                fact2 *= (j * j) as f64;
            }
            // relative accuracy holds where G_i dominates the certified
            // 1e-10 domain-truncation bias; G_i decays like e^{-ipx}, so the
            // probe window shrinks with i
            for probe in [
                0usize,
                spec.n_points / 32,
                spec.n_points / (8 * i),
                spec.n_points / (4 * i),
            ] {
                let x = spec.x(probe);
                let want = ratio.powi(i as i32) * (-(i as f64) * p * x).exp() / fact2;
                let got = gs[i].values[probe];
                assert!(
                    ((got - want) / want).abs() < 1e-7,
                    "i={i} x={x} got={got} want={want}"
                );
            }
            // monotone decreasing in x
            for j in 1..gs[i].len() {
                assert!(gs[i].values[j] <= gs[i].values[j - 1] + 1e-18);
            }
        }
    }

    #[test]
    fn l_matches_bessel_closed_form_and_ode() {
        let p = 0.08;
        let pmf = DegreePmf::geometric(p).unwrap();
        let spec = pmf.default_grid();
        let g2 = GridFn::from_fn(spec, |z| pmf.g_series(2, z).unwrap());
        let gs = g_sequence(&g2, 1.0, 60);
        for beta in [4.0, 7.954, 20.0] {
            let l = eval_l(beta, &gs).unwrap();
            for probe in (0..spec.n_points).step_by(spec.n_points / 17) {
                let x = spec.x(probe);
                let arg = (4.0 * (1.0 - p) * (-p * x).exp() / (p * beta)).sqrt();
                let want = bessel_j0_series(arg);
                assert!(
                    (l.values[probe] - want).abs() < 1e-7,
                    "beta={beta} x={x}: {} vs {want}",
                    l.values[probe]
                );
            }
            // ODE: β L'' + g₂ L = 0 at O(step²)
            let h = spec.step;
            let mut worst = 0.0f64;
            for i in (1..spec.n_points - 1).step_by(7) {
                let lpp = (l.values[i + 1] - 2.0 * l.values[i] + l.values[i - 1]) / (h * h);
                worst = worst.max((beta * lpp + g2.values[i] * l.values[i]).abs());
            }
            assert!(
                worst < 1e-4 * h.sqrt().max(1.0) + 5.0 * h * h + 1e-7,
                "worst={worst}"
            );
        }
        // β → ∞: only G_0 survives
        let linf = eval_l(1e12, &gs).unwrap();
        assert!(linf.sup_diff(&GridFn::constant(spec, 1.0)) < 1e-10);
        assert!(eval_l(0.0, &gs).is_err());
    }

    #[test]
    fn beta0_matches_closed_form() {
        for p in [0.08, 0.5] {
            let (_, sol) = solved(p);
            let want = beta0_geo_closed(p).unwrap();
            assert!(
                ((sol.beta0 - want) / want).abs() < 1e-5,
                "p={p}: {} vs {want}",
                sol.beta0
            );
            assert!(sol.bracket.0 < sol.beta0 && sol.beta0 < sol.bracket.1);
        }
        // p = 0.08 bracket endpoints in closed form
        let (_, sol) = solved(0.08);
        assert!((sol.bracket.0 - 0.92 / (0.08 * std::f64::consts::E)).abs() < 1e-3);
        assert!((sol.bracket.1 - 11.5).abs() < 1e-6);
    }

    #[test]
    fn critical_p_sits_at_beta0_equal_one() {
        let r2 = BESSEL_J0_ROOT * BESSEL_J0_ROOT;
        let p_star = 4.0 / (4.0 + r2);
        assert!((beta0_geo_closed(p_star).unwrap() - 1.0).abs() < 1e-9);
        assert!((p_star - 0.408865).abs() < 1e-6);
    }

    #[test]
    fn alternating_series_partial_sums_bracket_the_limit() {
        // for β ≥ E[n]-1 successive terms dominate, so partial sums alternate
        // around the limit
        let pmf = DegreePmf::geometric(0.08).unwrap();
        let spec = pmf.default_grid();
        let g2 = GridFn::from_fn(spec, |z| pmf.g_series(2, z).unwrap());
        let gs = g_sequence(&g2, 1.0, 60);
        let beta = pmf.mean() - 1.0;
        let limit = eval_l0(beta, &gs);
        let mut partial = 0.0;
        let mut coeff = 1.0;
        for (i, g) in gs.iter().enumerate() {
            partial += coeff * g.values[0];
            coeff *= -1.0 / beta;
            if i % 2 == 0 {
                assert!(partial >= limit - 1e-12, "odd partial below limit");
            } else {
                assert!(partial <= limit + 1e-12, "even partial above limit");
            }
        }
    }

    #[test]
    fn normalization_and_fixed_point() {
        let (_, sol) = solved(0.08);
        let norm = sol.g2.zip_with(&sol.f0, |a, b| a * b * b).total();
        assert!((norm - 1.0).abs() < 1e-8);
        assert!(
            sol.fixed_point_residual < 1e-6,
            "{}",
            sol.fixed_point_residual
        );
        assert!(sol.f0.values[0].abs() < 1e-6);
        assert!(sol.f0_prime0 > 0.0);
        // forward difference agrees in sign and scale
        let fd = (sol.f0.values[1] - sol.f0.values[0]) / sol.grid().step;
        assert!(fd > 0.0 && (fd - sol.f0_prime0).abs() / sol.f0_prime0 < 0.01);
        // x / f0(x) strictly increasing on the grid interior
        let mut prev = 0.0;
        for i in 1..sol.f0.len() {
            let v = sol.grid().x(i) / sol.f0.values[i];
            assert!(v > prev, "x/f0 not increasing at i={i}");
            prev = v;
        }
    }

    #[test]
    fn eigenfunction_evaluators() {
        let (pmf, sol) = solved(0.08);
        let eig = eigenfunctions(&sol, &pmf);
        assert_eq!(eig.mu(0, 3.0), 0.0);
        assert!((eig.mu(2, 0.0) - 2.0 * sol.f0_prime0).abs() < 1e-12);
        let total = eig.nu_total();
        assert!(total > 0.0 && total.is_finite());
        // rectangles tile the space
        let whole = eig.nu_mass(1, pmf.k_max(), 0.0, sol.grid().x_max).unwrap();
        assert!((whole - total).abs() / total < 1e-9);
    }

    #[test]
    fn kernel_is_stochastic_reversible_stationary() {
        let (pmf, sol) = solved(0.08);
        let kg = markov_kernel(&sol, &pmf);
        let n = kg.n();
        for i in 0..n {
            let sum: f64 = kg.p_matrix[i * n..(i + 1) * n].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {i} sums to {sum}");
        }
        assert!(
            kg.renorm_dev < 1e-4,
            "raw row-sum deviation {}",
            kg.renorm_dev
        );
        assert!(kg.detailed_balance_violation() < 1e-10);
        assert!(stationarity_residual(&sol) < 1e-8);
    }

    #[test]
    fn kernel_iterates_mix_geometrically() {
        let (pmf, sol) = solved(0.08);
        let kg = markov_kernel_with_points(&sol, &pmf, 801);
        let it = iterate_kernel(&kg, 15);
        // l = 1 reproduces the stored rows exactly
        let one = iterate_kernel(&kg, 1);
        assert_eq!(one.p_l, kg.p_matrix);
        // TV decreasing, log-linear fit tight
        for w in it.tv_mean_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(it.fit_r2 > 0.99, "R² = {}", it.fit_r2);
        assert!(it.rate_estimate < 1.0);
        // h_l factorization over the π-bulk
        let sup = it.factorization_sup(&kg, 1e-3);
        assert!(sup < 0.01, "factorization sup {}", sup);
    }

    #[test]
    fn power_iteration_recovers_the_eigenpair() {
        let (_, sol) = solved(0.08);
        let (lambda, v, _) = power_iteration(&sol.g2, 1e-12, 500);
        assert!(
            ((lambda - sol.beta0) / sol.beta0).abs() < 1e-6,
            "{lambda} vs {}",
            sol.beta0
        );
        // eigenvector matches f0 up to scale
        let scale = sol.f0.values.last().unwrap() / v.values.last().unwrap();
        let diff = v.map(|x| x * scale).sup_diff(&sol.f0);
        assert!(diff < 1e-4, "eigenvector sup diff {diff}");
        // deflated second pair: smaller eigenvalue, orthogonal to f0
        let (lambda2, zeta, _) = power_iteration_deflated(&sol.g2, Some(&sol.f0), 1e-12, 2000);
        assert!(lambda2 < sol.beta0 * 0.5);
        let ortho = zeta
            .zip_with(&sol.f0, |a, b| a * b)
            .zip_with(&sol.g2, |a, g| a * g)
            .total();
        let znorm = zeta
            .zip_with(&zeta, |a, b| a * b)
            .zip_with(&sol.g2, |a, g| a * g)
            .total();
        assert!((ortho / znorm.sqrt()).abs() < 1e-6, "ortho {ortho}");
    }

    #[test]
    fn moments_chain() {
        let pmf = DegreePmf::geometric(0.5).unwrap();
        assert_eq!(expected_wl(&pmf, 1).unwrap(), pmf.mean());
        for l in 2..=5 {
            assert!((expected_wl(&pmf, l).unwrap() - pmf.mean()).abs() < 1e-9);
        }
        let pmf8 = DegreePmf::geometric(0.08).unwrap();
        assert!((expected_wl(&pmf8, 3).unwrap() - 12.5 * 11.5 * 11.5).abs() < 1e-6);

        // E[Z_1] equals the mean root degree formula (identical code path)
        let spec = pmf.default_grid();
        let z1 = expected_zl_exact(&pmf, spec, 1).unwrap();
        let s1 = threshold_tail_fn(&pmf, spec);
        assert!((z1 - s1.zip_with(&s1, |a, b| a * b).total()).abs() < 1e-12);
        // pruning only removes vertices
        for l in 1..=6 {
            let z = expected_zl_exact(&pmf, spec, l).unwrap();
            assert!(z <= expected_wl(&pmf, l).unwrap() + 1e-9, "l={l}");
            assert!(z > 0.0);
        }
    }

    #[test]
    fn ez_ratio_approaches_the_asymptote() {
        let (pmf, sol) = solved(0.08);
        let spec = sol.grid();
        let asym = ez_asymptote(&sol, &pmf);
        let (f1, f2) = growth_factors(&sol, &pmf);
        assert!(f1 > 0.0 && f2 > 0.0);
        // the two-factor product and the squared single-integral form agree
        assert!(((f1 * f2 - f2 * f2) / (f1 * f2)).abs() < 1e-6);
        let z10 = expected_zl_exact(&pmf, spec, 10).unwrap();
        let ratio = z10 / sol.beta0.powi(10);
        assert!(
            ((ratio - asym) / asym).abs() < 0.02,
            "ratio {ratio} vs asymptote {asym}"
        );
    }
}
