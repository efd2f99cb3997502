//! Extinction probability via fixed-point iteration.
//!
//! The conditional survival structure of the tree reduces extinction to the
//! smallest fixed point q of a monotone operator T on functions [0,∞) → [0,1]:
//! iterating T from the zero function converges pointwise to q, and the
//! extinction probability is the root-type average of q(x)^m.

use crate::error::{domain, Result};
use crate::numerics::{min_kernel_apply, DegreePmf, GridFn, GridSpec};
use rayon::prelude::*;

/// Result of iterating T to its smallest fixed point.
#[derive(Debug, Clone)]
pub struct ExtinctionSolution {
    /// The fixed point on the grid (conditional single-branch extinction
    /// probability as a function of the parent threshold).
    pub q: GridFn,
    /// Σ_m P(m) ∫ e^{-x} x^m/m! q(x)^m dx.
    pub p_ext: f64,
    pub iterations: usize,
    /// sup |f_{l+1} - f_l| at the stopping point.
    pub residual: f64,
    pub converged: bool,
}

/// The operator T for a fixed potential-degree law and grid.
pub struct ExtinctionOperator {
    pmf: DegreePmf,
    spec: GridSpec,
    exp_neg: Vec<f64>,
}

impl ExtinctionOperator {
    pub fn new(pmf: &DegreePmf, spec: GridSpec) -> Self {
        let exp_neg = spec.xs().map(|z| (-z).exp()).collect();
        ExtinctionOperator {
            pmf: pmf.clone(),
            spec,
            exp_neg,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.spec
    }

    /// One application of T.
    ///
    /// The k-sum is accumulated into two vectors — Σ_k P(k) F̄_k(y) and
    /// W(z) = Σ_k P(k) e^{-z} z^{k-1}/(k-1)! f(z)^{k-1} — after which a single
    /// backward tail and forward prefix produce T(f) in O(k_max · N).
    pub fn apply(&self, f: &GridFn) -> Result<GridFn> {
        if f.spec != self.spec {
            return Err(domain("apply: grid mismatch"));
        }
        if f.values
            .iter()
            .any(|&v| !(-1e-12..=1.0 + 1e-12).contains(&v))
        {
            return Err(domain("apply: f must take values in [0,1]"));
        }
        let n = self.spec.n_points;
        // the k-recurrences are scalar per grid node, so nodes parallelize
        let mut s1 = vec![0.0; n]; // Σ P(k) F̄_k
        let mut w = vec![0.0; n];
        s1.par_iter_mut()
            .zip(w.par_iter_mut())
            .enumerate()
            .for_each(|(i, (s1_i, w_i))| {
                let z = self.spec.x(i);
                let fv = f.values[i];
                let mut term = self.exp_neg[i]; // e^{-z} z^{k-1}/(k-1)!
                let mut sf = term; // F̄_k
                let mut pow = 1.0; // f^{k-1}, with 0^0 = 1
                for (k, p) in self.pmf.iter() {
                    if k > 1 {
                        term *= z / (k - 1) as f64;
                        sf += term;
                        pow *= fv;
                    }
                    *s1_i += p * sf.min(1.0);
                    *w_i += p * term * pow;
                }
            });
        let w = GridFn {
            spec: self.spec,
            values: w,
        };
        let tail = w.backward_tail();
        let inner = GridFn {
            spec: self.spec,
            values: (0..n).map(|i| (1.0 - s1[i]) + tail.values[i]).collect(),
        };
        let prefix = inner.forward_prefix();
        let mut out = Vec::with_capacity(n);
        out.push(tail.values[0].clamp(0.0, 1.0));
        for i in 1..n {
            out.push((prefix.values[i] / self.spec.x(i)).clamp(0.0, 1.0));
        }
        Ok(GridFn {
            spec: self.spec,
            values: out,
        })
    }

    /// Iterate from the zero function to the smallest fixed point.
    pub fn solve(&self, tol: f64, max_iter: usize) -> Result<ExtinctionSolution> {
        let zero = GridFn::constant(self.spec, 0.0);
        self.solve_from(zero, tol, max_iter, true)
    }

    /// Iterate from an arbitrary starting function (no monotonicity check).
    pub fn solve_from_start(
        &self,
        start: GridFn,
        tol: f64,
        max_iter: usize,
    ) -> Result<ExtinctionSolution> {
        self.solve_from(start, tol, max_iter, false)
    }

    fn solve_from(
        &self,
        start: GridFn,
        tol: f64,
        max_iter: usize,
        check_monotone: bool,
    ) -> Result<ExtinctionSolution> {
        if !(tol > 0.0) {
            return Err(domain("solve: tol must be > 0"));
        }
        let mut f = start;
        let mut residual = f64::INFINITY;
        for it in 1..=max_iter {
            let next = self.apply(&f)?;
            if check_monotone {
                // iterates from 0 rise pointwise; tolerate round-off only
                for i in 0..f.len() {
                    assert!(
                        next.values[i] >= f.values[i] - 1e-12,
                        "iterate decreased at x={} ({} -> {})",
                        self.spec.x(i),
                        f.values[i],
                        next.values[i]
                    );
                }
            }
            residual = next.sup_diff(&f);
            f = next;
            if residual < tol {
                return Ok(ExtinctionSolution {
                    p_ext: self.p_ext_of(&f),
                    q: f,
                    iterations: it,
                    residual,
                    converged: true,
                });
            }
        }
        Ok(ExtinctionSolution {
            p_ext: self.p_ext_of(&f),
            q: f,
            iterations: max_iter,
            residual,
            converged: false,
        })
    }

    /// Per-branch probability of contributing nothing at depth 1:
    /// 1 - (1/x) ∫_0^x Σ_k P(k) F̄_k(y) dy, the seed of the finite-depth
    /// death recursion. (Iterating T from the zero function reaches the same
    /// limit, but its first iterate also counts kept childless children as
    /// level-1 deaths, so it does not equal P(Z_1 = 0 | ·).)
    pub fn one_generation_death(&self) -> GridFn {
        let s1 = GridFn {
            spec: self.spec,
            values: self.spec.xs().map(|y| self.pmf.threshold_tail(y)).collect(),
        };
        let prefix = s1.forward_prefix();
        GridFn {
            spec: self.spec,
            values: prefix
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if i == 0 {
                        1.0 - s1.values[0]
                    } else {
                        (1.0 - v / self.spec.x(i)).clamp(0.0, 1.0)
                    }
                })
                .collect(),
        }
    }

    /// P(Z_l = 0): the root-law average of [T^{l-1}(seed)]^m with the
    /// one-generation death function as seed.
    pub fn death_probability_by_generation(&self, l: u32) -> Result<f64> {
        if l == 0 {
            return Err(domain("death probability: l must be >= 1"));
        }
        let mut f = self.one_generation_death();
        for _ in 1..l {
            f = self.apply(&f)?;
        }
        Ok(self.p_ext_of(&f))
    }

    /// Σ_m P(m) ∫ e^{-x} x^m / m! · q(x)^m dx over the grid.
    pub fn p_ext_of(&self, q: &GridFn) -> f64 {
        let n = self.spec.n_points;
        let mut acc = vec![0.0; n];
        acc.par_iter_mut().enumerate().for_each(|(i, acc_i)| {
            let x = self.spec.x(i);
            let qv = q.values[i];
            let mut term = self.exp_neg[i]; // e^{-x} x^m / m!
            let mut pow = qv; // q^m
            for (m, p) in self.pmf.iter() {
                term *= x / m as f64;
                if m > 1 {
                    pow *= qv;
                }
                *acc_i += p * term * pow;
            }
        });
        GridFn {
            spec: self.spec,
            values: acc,
        }
        .total()
        .clamp(0.0, 1.0)
    }
}

/// Closed-form T for the geometric family:
/// (px-1+e^{-px})/(px) + (p/x) ∫ min(x,z) e^{-z(1-(1-p)f(z))} dz.
pub fn apply_t_geo(f: &GridFn, p: f64) -> Result<GridFn> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("apply_t_geo: p must be in (0,1)"));
    }
    let spec = f.spec;
    let w = GridFn {
        spec,
        values: spec
            .xs()
            .zip(&f.values)
            .map(|(z, &fz)| p * (-z * (1.0 - (1.0 - p) * fz)).exp())
            .collect(),
    };
    let minned = min_kernel_apply(&w);
    let tail0 = w.backward_tail().values[0];
    let mut out = Vec::with_capacity(spec.n_points);
    out.push(tail0.clamp(0.0, 1.0));
    for i in 1..spec.n_points {
        let x = spec.x(i);
        let px = p * x;
        let head = (px - 1.0 + (-px).exp()) / px;
        out.push((head + minned.values[i] / x).clamp(0.0, 1.0));
    }
    Ok(GridFn { spec, values: out })
}

/// Outcome of the test-function sufficient condition for survival.
#[derive(Debug, Clone, Copy)]
pub struct SufficientCondition {
    pub holds: bool,
    /// min over x ∈ [0, x0] of ∫_0^{x0} z min(x,z)/x g₂(z) dz.
    pub min_value: f64,
}

/// Evaluates ∫_0^{x0} z · min(x,z)/x · g₂(z) dz over grid x ∈ [0, x0]
/// (min(x,z)/x read as 1 at x = 0); `holds` iff the minimum exceeds 1.
pub fn sufficient_condition(
    pmf: &DegreePmf,
    spec: GridSpec,
    x0: f64,
) -> Result<SufficientCondition> {
    if !(x0 > 0.0) {
        return Err(domain("sufficient_condition: x0 must be > 0"));
    }
    if x0 > spec.x_max {
        return Err(domain("sufficient_condition: x0 beyond the grid"));
    }
    let zg2 = GridFn::from_fn(spec, |z| {
        if z > x0 {
            0.0
        } else {
            z * pmf.g_series(2, z).unwrap()
        }
    });
    let z2g2 = GridFn::from_fn(spec, |z| {
        if z > x0 {
            0.0
        } else {
            z * z * pmf.g_series(2, z).unwrap()
        }
    });
    let lo = z2g2.forward_prefix(); // ∫_0^x z² g₂
    let hi = zg2.backward_tail(); // ∫_x^{x0} z g₂ (integrand zeroed past x0)
    let mut min_value = f64::INFINITY;
    for i in 0..spec.n_points {
        let x = spec.x(i);
        if x > x0 {
            break;
        }
        let v = if i == 0 {
            hi.values[0]
        } else {
            lo.values[i] / x + hi.values[i]
        };
        min_value = min_value.min(v);
    }
    Ok(SufficientCondition {
        holds: min_value > 1.0,
        min_value,
    })
}
