//! Distribution primitives and grid/quadrature utilities.
//!
//! Everything downstream (extinction operator, spectral series, exact
//! moments) is built from three ingredients defined here: the truncated
//! potential-degree law [`DegreePmf`], Erlang pdf/sf evaluations, and
//! composite-trapezoid calculus on a uniform grid ([`GridFn`]). The grid is
//! deliberately uniform: all integrands are smooth, and uniformity makes the
//! prefix-sum forms of the integral operators exact-cost `O(N)`.

use crate::error::{domain, Result};

/// ln Γ(x) by the Lanczos approximation (g = 7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Erlang(k, 1) density e^{-z} z^{k-1} / (k-1)!.
///
/// Small k is evaluated directly; large k goes through `ln_gamma` so the
/// factorial never overflows.
pub fn erlang_pdf(k: u32, z: f64) -> Result<f64> {
    if k == 0 {
        return Err(domain("erlang_pdf: k must be >= 1"));
    }
    if z < 0.0 {
        return Err(domain("erlang_pdf: z must be >= 0"));
    }
    if k == 1 {
        return Ok((-z).exp());
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if k <= 20 {
        let mut fact = 1.0;
        for j in 2..k {
            fact *= j as f64;
        }
        Ok((-z).exp() * z.powi(k as i32 - 1) / fact)
    } else {
        Ok((((k - 1) as f64) * z.ln() - z - ln_gamma(k as f64)).exp())
    }
}

/// Erlang(k, 1) survival function Σ_{j<k} e^{-x} x^j / j!.
pub fn erlang_sf(k: u32, x: f64) -> Result<f64> {
    if k == 0 {
        return Err(domain("erlang_sf: k must be >= 1"));
    }
    if x < 0.0 {
        return Err(domain("erlang_sf: x must be >= 0"));
    }
    let mut term = (-x).exp();
    let mut sum = term;
    for j in 1..k {
        term *= x / j as f64;
        sum += term;
    }
    Ok(sum.min(1.0))
}

// ---------------------------------------------------------------------------
// Potential-degree law
// ---------------------------------------------------------------------------

/// A probability mass function on {1, 2, ...} with machine-precision
/// truncation, used as the potential-degree law of the tree and graph models.
///
/// `probs[i]` is P(i+1). The series is cut at the smallest `k_max` whose tail
/// falls below 1e-12 and renormalized. `mgf` optionally carries a pair
/// (θ, E[e^{θn}]) with θ > 0, used for Chernoff tail certificates.
#[derive(Debug, Clone)]
pub struct DegreePmf {
    probs: Vec<f64>,
    mean: f64,
    mgf: Option<(f64, f64)>,
    cdf: Vec<f64>,
}

const TAIL_EPS: f64 = 1e-12;

impl DegreePmf {
    fn from_raw(mut probs: Vec<f64>, mgf: Option<(f64, f64)>) -> Result<Self> {
        while let Some(&last) = probs.last() {
            if last == 0.0 && probs.len() > 1 {
                probs.pop();
            } else {
                break;
            }
        }
        if probs.is_empty() {
            return Err(domain("degree pmf: empty support"));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(domain("degree pmf: probabilities must be finite and >= 0"));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(domain("degree pmf: zero total mass"));
        }
        for p in &mut probs {
            *p /= total;
        }
        if probs.len() == 1 && probs[0] >= 1.0 - 1e-15 && !probs.is_empty() && probs.len() == 1 {
            // all mass on k = 1 would make the shifted law degenerate at 0
            // with no branching at all; the model assumes P(1) < 1.
            if probs.len() == 1 {
                return Err(domain("degree pmf: P(1) must be < 1"));
            }
        }
        let mean = probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cdf.push(acc);
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(DegreePmf {
            probs,
            mean,
            mgf,
            cdf,
        })
    }

    /// Geometric on {1,2,...}: P(k) = p (1-p)^{k-1}.
    ///
    /// θ is chosen on a mesh inside (0, -ln(1-p)) to minimize the truncation
    /// point certified by the Chernoff bound.
    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(domain("geometric: p must be in (0,1)"));
        }
        let k_max = ((TAIL_EPS.ln() / (1.0 - p).ln()).ceil() as usize).max(2);
        let mut probs = Vec::with_capacity(k_max);
        let mut mass = p;
        for _ in 0..k_max {
            probs.push(mass);
            mass *= 1.0 - p;
        }
        let theta_cap = -(1.0 - p).ln();
        let mut best: Option<(f64, f64, f64)> = None; // (x_required, theta, mgf)
        for i in 1..100 {
            let theta = theta_cap * i as f64 / 100.0;
            let et = theta.exp();
            let denom = 1.0 - (1.0 - p) * et;
            if denom <= 0.0 {
                break;
            }
            let mgf = p * et / denom;
            let rate = 1.0 - (-theta).exp();
            // smallest x with mgf e^{-2θ} e^{-x·rate} < 1e-10
            let x_req = ((mgf.ln() - 2.0 * theta) - 1e-10f64.ln()) / rate;
            if best.is_none() || x_req < best.unwrap().0 {
                best = Some((x_req, theta, mgf));
            }
        }
        let (_, theta, mgf) = best.expect("theta mesh is nonempty");
        Self::from_raw(probs, Some((theta, mgf)))
    }

    /// Shifted Poisson on {1,2,...}: P(k) = e^{-λ} λ^{k-1}/(k-1)!.
    pub fn poisson_shifted(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(domain("poisson_shifted: lambda must be > 0"));
        }
        let mut probs = vec![(-lambda).exp()];
        let mut term = probs[0];
        let mut tail = 1.0 - term;
        let mut j = 1u32;
        while tail > TAIL_EPS && j < 10_000 {
            term *= lambda / j as f64;
            probs.push(term);
            tail -= term;
            j += 1;
        }
        // Chernoff θ on a coarse mesh: E[e^{θn}] = e^θ exp(λ(e^θ-1)).
        let mut best: Option<(f64, f64, f64)> = None;
        for i in 1..=30 {
            let theta = 0.1 * i as f64;
            let mgf = (theta + lambda * (theta.exp() - 1.0)).exp();
            if !mgf.is_finite() {
                break;
            }
            let rate = 1.0 - (-theta).exp();
            let x_req = ((mgf.ln() - 2.0 * theta) - 1e-10f64.ln()) / rate;
            if best.is_none() || x_req < best.unwrap().0 {
                best = Some((x_req, theta, mgf));
            }
        }
        let (_, theta, mgf) = best.expect("theta mesh is nonempty");
        Self::from_raw(probs, Some((theta, mgf)))
    }

    /// Explicit pmf; `probs[0]` is P(1). No Chernoff certificate attached.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        Self::from_raw(probs.to_vec(), None)
    }

    /// Point mass at k.
    pub fn deterministic(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(domain("deterministic: k must be >= 2 (P(1) < 1)"));
        }
        let mut probs = vec![0.0; k as usize];
        probs[k as usize - 1] = 1.0;
        // Any θ works for finite support; pick one with a fast decay rate.
        let theta = 3.0f64;
        let mgf = (theta * k as f64).exp();
        Self::from_raw(probs, Some((theta, mgf)))
    }

    /// Attach a Chernoff pair (θ, E[e^{θn}]) computed from the truncated law.
    pub fn with_mgf_theta(mut self, theta: f64) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(domain("mgf theta must be > 0"));
        }
        let mgf: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(i, p)| p * (theta * (i + 1) as f64).exp())
            .sum();
        if !mgf.is_finite() {
            return Err(domain("mgf diverges at this theta for the truncated law"));
        }
        self.mgf = Some((theta, mgf));
        Ok(self)
    }

    /// P(k); zero outside the truncated support.
    #[inline]
    pub fn prob(&self, k: u32) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.probs.get(k as usize - 1).copied().unwrap_or(0.0)
        }
    }

    /// Largest k with positive retained mass.
    #[inline]
    pub fn k_max(&self) -> u32 {
        self.probs.len() as u32
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn mgf_theta(&self) -> Option<f64> {
        self.mgf.map(|(t, _)| t)
    }

    pub fn mgf_value(&self) -> Option<f64> {
        self.mgf.map(|(_, v)| v)
    }

    /// Iterate (k, P(k)) over the support.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| ((i + 1) as u32, p))
    }

    /// Inverse-cdf sample of k from the truncated law.
    #[inline]
    pub fn sample(&self, u: f64) -> u32 {
        let mut lo = 0usize;
        let mut hi = self.cdf.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.cdf[mid] < u {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        (lo + 1) as u32
    }

    /// Sample from the shifted law: P̂(m) = P(m+1).
    #[inline]
    pub fn sample_shifted(&self, u: f64) -> u32 {
        self.sample(u) - 1
    }

    /// g_i(z) = Σ_{k≥i} P(k) e^{-z} z^{k-i}/(k-i)!, truncated at the law's
    /// support. g₁ is the type-density mixture, g₂ the spectral-kernel
    /// density.
    pub fn g_series(&self, i: u32, z: f64) -> Result<f64> {
        if i == 0 {
            return Err(domain("g_series: i must be >= 1"));
        }
        if z < 0.0 {
            return Err(domain("g_series: z must be >= 0"));
        }
        let k_max = self.k_max();
        if i > k_max {
            return Ok(0.0);
        }
        let e = (-z).exp();
        if e > 0.0 {
            let mut term = e;
            let mut sum = 0.0;
            for j in 0..=(k_max - i) {
                if j > 0 {
                    term *= z / j as f64;
                }
                sum += self.prob(i + j) * term;
            }
            Ok(sum)
        } else {
            // e^{-z} underflowed; assemble each term in log space.
            let mut sum = 0.0;
            for j in 0..=(k_max - i) {
                let p = self.prob(i + j);
                if p > 0.0 {
                    let lt = -z + j as f64 * z.ln() - ln_gamma(j as f64 + 1.0);
                    sum += p * lt.exp();
                }
            }
            Ok(sum)
        }
    }

    /// Chernoff upper bound on g_i(z): E[e^{θn}] e^{-θi} e^{-z(1-e^{-θ})}.
    /// +∞ when no θ is attached.
    pub fn mgf_tail_bound(&self, i: u32, z: f64) -> f64 {
        match self.mgf {
            Some((theta, mgf)) => {
                mgf * (-theta * i as f64).exp() * (-z * (1.0 - (-theta).exp())).exp()
            }
            None => f64::INFINITY,
        }
    }

    /// Σ_k P(k) F̄_k(x): the chance a potential child's threshold exceeds x.
    pub fn threshold_tail(&self, x: f64) -> f64 {
        let mut term = (-x).exp();
        let mut sf = term; // F̄_1
        let mut sum = 0.0;
        for (k, p) in self.iter() {
            if k > 1 {
                term *= x / (k - 1) as f64;
                sf += term;
            }
            sum += p * sf.min(1.0);
        }
        sum
    }

    /// Default grid: smallest integer x_max that certifies both tails below
    /// 1e-10, with a step fine enough for the 1e-6-scale tolerances used by
    /// the spectral and degree-law pipelines.
    pub fn default_grid(&self) -> GridSpec {
        let mut x_max = 1u32;
        while x_max < 100_000 {
            let x = x_max as f64;
            let tail_ok = self.threshold_tail(x) < 1e-10;
            let mgf_ok = self.mgf.is_none() || self.mgf_tail_bound(2, x) < 1e-10;
            if tail_ok && mgf_ok {
                break;
            }
            x_max += 1;
        }
        let n = ((x_max as f64 / 0.0025).round() as usize + 1).clamp(4001, 240_001);
        GridSpec::new(x_max as f64, n)
    }
}

// ---------------------------------------------------------------------------
// Uniform grid and trapezoid calculus
// ---------------------------------------------------------------------------

/// Uniform grid on [0, x_max] with `n_points` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_max: f64,
    pub n_points: usize,
    pub step: f64,
}

impl GridSpec {
    pub fn new(x_max: f64, n_points: usize) -> Self {
        assert!(n_points >= 2, "grid needs at least 2 points");
        assert!(x_max > 0.0, "x_max must be positive");
        GridSpec {
            x_max,
            n_points,
            step: x_max / (n_points - 1) as f64,
        }
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.x(i))
    }
}

/// A function sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl GridFn {
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        let values = spec.xs().map(f).collect();
        GridFn { spec, values }
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        GridFn {
            spec,
            values: vec![c; spec.n_points],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at arbitrary x by linear interpolation (clamped to the grid).
    pub fn at(&self, x: f64) -> f64 {
        let h = self.spec.step;
        let t = (x / h).clamp(0.0, (self.len() - 1) as f64);
        let i = (t.floor() as usize).min(self.len() - 2);
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// x ↦ ∫_0^x f, composite trapezoid accumulated forward.
    pub fn forward_prefix(&self) -> GridFn {
        let h = self.spec.step;
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..self.len() {
            acc += 0.5 * h * (self.values[i - 1] + self.values[i]);
            out.push(acc);
        }
        GridFn {
            spec: self.spec,
            values: out,
        }
    }

    /// x ↦ ∫_x^{x_max} f, accumulated backward so tiny tails keep full
    /// relative precision.
    pub fn backward_tail(&self) -> GridFn {
        let h = self.spec.step;
        let n = self.len();
        let mut out = vec![0.0; n];
        let mut acc = 0.0;
        for i in (0..n - 1).rev() {
            acc += 0.5 * h * (self.values[i] + self.values[i + 1]);
            out[i] = acc;
        }
        GridFn {
            spec: self.spec,
            values: out,
        }
    }

    /// ∫_lo^hi f with linear interpolation at non-node endpoints.
    pub fn integrate(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(0.0..=self.spec.x_max + 1e-9).contains(&lo)
            || !(0.0..=self.spec.x_max + 1e-9).contains(&hi)
        {
            return Err(domain("integrate: bounds outside the grid"));
        }
        if lo > hi {
            return Err(domain("integrate: lo must be <= hi"));
        }
        let h = self.spec.step;
        let ia = (lo / h).ceil() as usize;
        let ib = ((hi / h).floor() as usize).min(self.len() - 1);
        if ia > ib {
            // both endpoints inside one cell
            return Ok(0.5 * (self.at(lo) + self.at(hi)) * (hi - lo));
        }
        let mut acc = 0.0;
        let xa = ia as f64 * h;
        if lo < xa {
            acc += 0.5 * (self.at(lo) + self.values[ia]) * (xa - lo);
        }
        for i in ia..ib {
            acc += 0.5 * h * (self.values[i] + self.values[i + 1]);
        }
        let xb = ib as f64 * h;
        if hi > xb {
            acc += 0.5 * (self.values[ib] + self.at(hi)) * (hi - xb);
        }
        Ok(acc)
    }

    /// ∫_0^{x_max} f.
    pub fn total(&self) -> f64 {
        let h = self.spec.step;
        let mut acc = 0.0;
        for i in 1..self.len() {
            acc += 0.5 * h * (self.values[i - 1] + self.values[i]);
        }
        acc
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFn {
        GridFn {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &GridFn, f: impl Fn(f64, f64) -> f64) -> GridFn {
        assert_eq!(self.len(), other.len(), "grid mismatch");
        GridFn {
            spec: self.spec,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sup_diff(&self, other: &GridFn) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// The kernel application x ↦ ∫ min(x,z) w(z) dz, realized as the double
/// cumulative ∫_0^x ∫_y^{x_max} w. This composition is the crate's canonical
/// discretization of the min-kernel: the spectral fixed point, the Markov
/// kernel's row normalization, and the stationarity identity all hold in it
/// to round-off rather than to O(step²).
pub fn min_kernel_apply(w: &GridFn) -> GridFn {
    w.backward_tail().forward_prefix()
}
