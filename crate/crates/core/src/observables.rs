//! Exact degree laws and comparison baselines.
//!
//! The root-degree law is a binomial mixture: conditioned on the root type
//! (m, x), the degree is Bi(m, η(x)) with η(x) = (1/x)∫₀^x Σ_k P(k) F̄_k.
//! The geometric family admits a closed form. Size-biased laws and the
//! two-stage Galton-Watson baselines serve as the comparison targets for the
//! growth-rate and extinction experiments.

use crate::error::{domain, Result};
use crate::numerics::{DegreePmf, GridFn, GridSpec};
use crate::spectral::threshold_tail_fn;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

/// A degree law on {0, 1, 2, ...}.
#[derive(Debug, Clone)]
pub struct DegreeLaw {
    pub pmf: Vec<f64>,
    pub mean: f64,
    pub provenance: Provenance,
}

impl DegreeLaw {
    pub fn from_pmf(pmf: Vec<f64>, provenance: Provenance) -> Self {
        let mean = pmf.iter().enumerate().map(|(d, p)| d as f64 * p).sum();
        DegreeLaw {
            pmf,
            mean,
            provenance,
        }
    }

    pub fn tv_distance(&self, other: &DegreeLaw) -> f64 {
        let len = self.pmf.len().max(other.pmf.len());
        let mut acc = 0.0;
        for d in 0..len {
            let a = self.pmf.get(d).copied().unwrap_or(0.0);
            let b = other.pmf.get(d).copied().unwrap_or(0.0);
            acc += (a - b).abs();
        }
        0.5 * acc
    }

    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().sum()
    }
}

/// η(x) = (1/x) ∫₀^x Σ_k P(k) F̄_k(y) dy: the single-child keep probability
/// given the parent threshold; η(0) = 1.
pub fn keep_probability_fn(pmf: &DegreePmf, spec: GridSpec) -> GridFn {
    let s1 = threshold_tail_fn(pmf, spec);
    let prefix = s1.forward_prefix();
    GridFn {
        spec,
        values: prefix
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == 0 { s1.values[0] } else { v / spec.x(i) })
            .collect(),
    }
}

/// Binomial pmf Bi(·; m, eta) by a stable multiplicative recurrence
/// (downward from d = m when eta > 1/2).
fn binomial_pmf(m: u32, eta: f64, out: &mut [f64]) {
    let m_us = m as usize;
    debug_assert!(out.len() >= m_us + 1);
    for v in out.iter_mut() {
        *v = 0.0;
    }
    if m == 0 {
        out[0] = 1.0;
        return;
    }
    if eta <= 0.5 {
        let ratio = eta / (1.0 - eta);
        let mut t = (1.0 - eta).powi(m as i32);
        for d in 0..=m_us {
            out[d] = t;
            if d < m_us {
                t *= ratio * (m_us - d) as f64 / (d + 1) as f64;
            }
        }
    } else {
        let ratio = (1.0 - eta) / eta;
        let mut t = eta.powi(m as i32);
        for d in (0..=m_us).rev() {
            out[d] = t;
            if d > 0 {
                t *= ratio * d as f64 / (m_us - d + 1) as f64;
            }
        }
    }
}

/// Root-degree law by quadrature of the binomial mixture.
pub fn root_degree_pmf_exact(pmf: &DegreePmf, spec: GridSpec) -> DegreeLaw {
    let eta = keep_probability_fn(pmf, spec);
    let k_max = pmf.k_max() as usize;
    let n = spec.n_points;
    // per grid node: Σ_m P(m) e^{-x} x^m/m! Bi(d; m, η(x)) for every d
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = spec.x(i);
            let e = eta.values[i];
            let mut acc = vec![0.0f64; k_max + 1];
            let mut bin = vec![0.0f64; k_max + 1];
            let mut erl = (-x).exp(); // e^{-x} x^m / m!
            for (m, p) in pmf.iter() {
                erl *= x / m as f64;
                if p == 0.0 || erl == 0.0 {
                    continue;
                }
                binomial_pmf(m, e, &mut bin[..m as usize + 1]);
                let w = p * erl;
                for d in 0..=m as usize {
                    acc[d] += w * bin[d];
                }
            }
            acc
        })
        .collect();
    // trapezoid over x for every degree
    let h = spec.step;
    let mut pmf_out = vec![0.0f64; k_max + 1];
    for d in 0..=k_max {
        let mut acc = 0.0;
        for i in 1..n {
            acc += 0.5 * h * (rows[i - 1][d] + rows[i][d]);
        }
        pmf_out[d] = acc;
    }
    trim_tail(&mut pmf_out, 1e-9);
    DegreeLaw::from_pmf(pmf_out, Provenance::Quadrature)
}

/// Closed-form root-degree law for the geometric family.
pub fn root_degree_pmf_geo(p: f64, d_max: usize) -> Result<DegreeLaw> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("root_degree_pmf_geo: p must be in (0,1)"));
    }
    let lambda = (1.0 - p) / p;
    let scale = p / ((1.0 - p) * (1.0 - p));
    let mut pmf = Vec::with_capacity(d_max + 1);
    let mut pois_cdf = 0.0;
    let mut pois_term = (-lambda).exp();
    for d in 0..=d_max {
        if d > 0 {
            pois_term *= lambda / d as f64;
        }
        pois_cdf += pois_term;
        let mut v = scale * (1.0 - pois_cdf);
        if d == 0 {
            v -= p / (1.0 - p);
        }
        pmf.push(v.max(0.0));
    }
    Ok(DegreeLaw::from_pmf(pmf, Provenance::ClosedForm))
}

/// E[D_root] = Σ_m Σ_k P(m) P(k) ∫ F̄_k F̄_m: evaluated as ∫ (Σ P(k) F̄_k)².
pub fn mean_degree_exact(pmf: &DegreePmf, spec: GridSpec) -> f64 {
    let s1 = threshold_tail_fn(pmf, spec);
    s1.zip_with(&s1, |a, b| a * b).total()
}

/// The size-biased law shifted down by one: Q*(k-1) = k Q(k) / Σ_r r Q(r).
pub fn size_biased(q: &DegreeLaw) -> Result<DegreeLaw> {
    if !(q.mean > 0.0) {
        return Err(domain("size_biased: law must have positive mean"));
    }
    let mut pmf = vec![0.0; q.pmf.len().saturating_sub(1).max(1)];
    for (k, &p) in q.pmf.iter().enumerate().skip(1) {
        pmf[k - 1] = k as f64 * p / q.mean;
    }
    Ok(DegreeLaw::from_pmf(pmf, q.provenance))
}

/// Growth and extinction of the two-stage comparison tree: root offspring Q,
/// later generations the size-biased law Q*.
#[derive(Debug, Clone, Copy)]
pub struct GwtStarBaselines {
    /// Mean of Q* — the comparison growth rate.
    pub growth_rate: f64,
    pub p_ext: f64,
    pub iterations: usize,
}

pub fn gwt_star_baselines(q: &DegreeLaw) -> Result<GwtStarBaselines> {
    let star = size_biased(q)?;
    let growth_rate = star.mean;
    // smallest fixed point of the offspring generating function
    let gen = |s: f64, law: &DegreeLaw| -> f64 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for &p in &law.pmf {
            acc += p * pow;
            pow *= s;
        }
        acc
    };
    let mut s = 0.0f64;
    let mut iterations = 0;
    for it in 1..=100_000 {
        iterations = it;
        let next = gen(s, &star);
        if (next - s).abs() < 1e-12 {
            s = next;
            break;
        }
        s = next;
    }
    let p_ext = gen(s, q).min(1.0);
    Ok(GwtStarBaselines {
        growth_rate,
        p_ext,
        iterations,
    })
}

/// Poisson(λ) as a [`DegreeLaw`], truncated at mass 1e-14.
pub fn poisson_law(lambda: f64) -> Result<DegreeLaw> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(domain("poisson_law: lambda must be > 0"));
    }
    let mut pmf = vec![(-lambda).exp()];
    let mut tail = 1.0 - pmf[0];
    let mut d = 1usize;
    while tail > 1e-14 && d < 100_000 {
        let next = pmf[d - 1] * lambda / d as f64;
        pmf.push(next);
        tail -= next;
        d += 1;
    }
    Ok(DegreeLaw::from_pmf(pmf, Provenance::ClosedForm))
}

/// Geometric on {1,2,...} with parameter p, as a law on {0,1,...}.
pub fn geometric_law(p: f64) -> Result<DegreeLaw> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("geometric_law: p must be in (0,1)"));
    }
    let k_max = ((1e-14f64.ln() / (1.0 - p).ln()).ceil() as usize).max(2);
    let mut pmf = vec![0.0; k_max + 1];
    let mut mass = p;
    for slot in pmf.iter_mut().skip(1) {
        *slot = mass;
        mass *= 1.0 - p;
    }
    Ok(DegreeLaw::from_pmf(pmf, Provenance::ClosedForm))
}

/// A point mass at d.
pub fn delta_law(d: usize) -> DegreeLaw {
    let mut pmf = vec![0.0; d + 1];
    pmf[d] = 1.0;
    DegreeLaw::from_pmf(pmf, Provenance::ClosedForm)
}

fn trim_tail(pmf: &mut Vec<f64>, eps: f64) {
    let mut cum = 0.0;
    let mut keep = pmf.len();
    for (d, &p) in pmf.iter().enumerate().rev() {
        cum += p;
        if cum >= eps {
            keep = d + 2;
            break;
        }
    }
    pmf.truncate(keep.min(pmf.len()));
}
