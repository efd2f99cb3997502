//! One-step second factorial moments, the signed covariance measure, and the
//! truncated series behind the L² limit of the normalized generation sizes.

use crate::error::{domain, Result};
use crate::numerics::{erlang_pdf, min_kernel_apply, DegreePmf, GridFn, GridSpec};
use crate::spectral::SpectralSolution;

/// A rectangle in type space: k ∈ [k_lo, k_hi] (the type component is k-1)
/// and threshold z ∈ [z_lo, z_hi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeRect {
    pub k_lo: u32,
    pub k_hi: u32,
    pub z_lo: f64,
    pub z_hi: f64,
}

impl TypeRect {
    pub fn new(k_lo: u32, k_hi: u32, z_lo: f64, z_hi: f64) -> Result<Self> {
        if k_lo == 0 || k_lo > k_hi {
            return Err(domain("type rect: need 1 <= k_lo <= k_hi"));
        }
        if !(z_lo >= 0.0) || z_lo > z_hi {
            return Err(domain("type rect: need 0 <= z_lo <= z_hi"));
        }
        Ok(TypeRect {
            k_lo,
            k_hi,
            z_lo,
            z_hi,
        })
    }

    /// The whole type space.
    pub fn full() -> Self {
        TypeRect {
            k_lo: 1,
            k_hi: u32::MAX,
            z_lo: 0.0,
            z_hi: f64::INFINITY,
        }
    }

    /// Membership of a vertex of type (m, x) (so k = m + 1).
    #[inline]
    pub fn contains(&self, m: u32, x: f64) -> bool {
        let k = m + 1;
        k >= self.k_lo && k <= self.k_hi && x >= self.z_lo && x <= self.z_hi
    }

    pub fn intersect(&self, other: &TypeRect) -> Option<TypeRect> {
        let k_lo = self.k_lo.max(other.k_lo);
        let k_hi = self.k_hi.min(other.k_hi);
        let z_lo = self.z_lo.max(other.z_lo);
        let z_hi = self.z_hi.min(other.z_hi);
        if k_lo > k_hi || z_lo > z_hi {
            None
        } else {
            Some(TypeRect {
                k_lo,
                k_hi,
                z_lo,
                z_hi,
            })
        }
    }
}

/// ∫ over the rect of min(x,z) Σ_k P(k) e^{-z} z^{k-1}/(k-1)! dz, with
/// min(x,z)/x read as 1 when `x` is None (the x = 0 branch).
fn rect_min_integral(pmf: &DegreePmf, spec: GridSpec, rect: &TypeRect, x: Option<f64>) -> f64 {
    let mix = GridFn {
        spec,
        values: spec
            .xs()
            .map(|z| {
                let mut acc = 0.0;
                for k in rect.k_lo..=rect.k_hi.min(pmf.k_max()) {
                    let p = pmf.prob(k);
                    if p > 0.0 {
                        acc += p * erlang_pdf(k, z).unwrap();
                    }
                }
                match x {
                    Some(xv) => z.min(xv) * acc,
                    None => acc,
                }
            })
            .collect(),
    };
    let lo = rect.z_lo.clamp(0.0, spec.x_max);
    let hi = rect.z_hi.clamp(0.0, spec.x_max);
    mix.integrate(lo, hi).unwrap_or(0.0)
}

/// M₁(m,x;A): expected first-generation count in the rectangle, conditioned
/// on the root type.
pub fn m1_rect(m: u32, x: f64, rect: &TypeRect, pmf: &DegreePmf, spec: GridSpec) -> f64 {
    if m == 0 {
        return 0.0;
    }
    if x == 0.0 {
        m as f64 * rect_min_integral(pmf, spec, rect, None)
    } else {
        m as f64 / x * rect_min_integral(pmf, spec, rect, Some(x))
    }
}

/// M₁⁽²⁾(m,x;A₁;A₂) = E[Z₁(A₁)Z₁(A₂) | root type (m,x)]: the ordered-pair
/// term plus the diagonal intersection term.
pub fn m1_second(
    m: u32,
    x: f64,
    a1: &TypeRect,
    a2: &TypeRect,
    pmf: &DegreePmf,
    spec: GridSpec,
) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mf = m as f64;
    let inter = a1.intersect(a2);
    if x == 0.0 {
        let i1 = rect_min_integral(pmf, spec, a1, None);
        let i2 = rect_min_integral(pmf, spec, a2, None);
        let id = inter
            .map(|r| rect_min_integral(pmf, spec, &r, None))
            .unwrap_or(0.0);
        mf * (mf - 1.0) * i1 * i2 + mf * id
    } else {
        let i1 = rect_min_integral(pmf, spec, a1, Some(x)) / x;
        let i2 = rect_min_integral(pmf, spec, a2, Some(x)) / x;
        let id = inter
            .map(|r| rect_min_integral(pmf, spec, &r, Some(x)) / x)
            .unwrap_or(0.0);
        mf * (mf - 1.0) * i1 * i2 + mf * id
    }
}

/// The signed one-step covariance measure v = M₁⁽²⁾ - M₁·M₁.
pub fn v_signed(
    m: u32,
    x: f64,
    a1: &TypeRect,
    a2: &TypeRect,
    pmf: &DegreePmf,
    spec: GridSpec,
) -> f64 {
    m1_second(m, x, a1, a2, pmf, spec) - m1_rect(m, x, a1, pmf, spec) * m1_rect(m, x, a2, pmf, spec)
}

/// U(m,x): the second-moment constant of the L² limit, as a truncated series
/// over the generation at which the covariance is injected.
///
/// Early terms use the exact kernel iterates h_{l̂-1}; beyond `EXACT_LEVELS`
/// the factorized form h_l ≈ β₀^l f₀(x) f₀(·) takes over. The series is cut
/// once a term falls below `tol` times the running sum.
pub fn u_truncated(
    m: u32,
    x: f64,
    sol: &SpectralSolution,
    pmf: &DegreePmf,
    tol: f64,
) -> Result<f64> {
    if !(sol.beta0 > 1.0) {
        return Err(domain("u_truncated: needs beta0 > 1"));
    }
    if !(tol > 0.0) {
        return Err(domain("u_truncated: tol must be > 0"));
    }
    const EXACT_LEVELS: usize = 6;
    const CAP: usize = 200;
    let spec = sol.grid();
    let beta0 = sol.beta0;
    let eig = crate::spectral::eigenfunctions(sol, pmf);
    let mu = eig.mu(m, x);

    // QQ(z) = z g₂(z) (I₂(z) - I₁(z)²): the μ²-weighted one-step variance
    // injected by a vertex of threshold z, mixed over its type component.
    let i1 = GridFn {
        spec,
        values: spec
            .xs()
            .zip(&sol.f0.values)
            .map(|(z, &f)| {
                if z == 0.0 {
                    beta0 * sol.f0_prime0
                } else {
                    beta0 * f / z
                }
            })
            .collect(),
    };
    // w₂ = f₀² Σ_{k≥2} P(k)(k-1) e^{-z} z^{k-3}/(k-2)!; the k = 2 term's 1/z
    // singularity is cancelled by f₀(z)² ~ z²
    let w2 = GridFn {
        spec,
        values: spec
            .xs()
            .zip(&sol.f0.values)
            .map(|(z, &f)| {
                if z == 0.0 {
                    return 0.0;
                }
                let mut term = (-z).exp() / z; // e^{-z} z^{k-3}/(k-2)! at k=2
                let mut acc = 0.0;
                for (k, p) in pmf.iter() {
                    if k < 2 {
                        continue;
                    }
                    if k > 2 {
                        term *= z / (k - 2) as f64;
                    }
                    acc += p * (k - 1) as f64 * term;
                }
                acc * f * f
            })
            .collect(),
    };
    let min_w2 = min_kernel_apply(&w2);
    let i2_at_zero = w2.backward_tail().values[0];
    let i2 = GridFn {
        spec,
        values: spec
            .xs()
            .zip(&min_w2.values)
            .enumerate()
            .map(|(idx, (z, &mv))| if idx == 0 { i2_at_zero } else { mv / z })
            .collect(),
    };
    let qq = GridFn {
        spec,
        values: spec
            .xs()
            .zip(sol.g2.values.iter().zip(i1.values.iter().zip(&i2.values)))
            .map(|(z, (&g2, (&a, &b)))| z * g2 * (b - a * a))
            .collect(),
    };

    let mut total = mu * mu;
    // l̂ = 1: the covariance at the root itself
    let i1x = if x == 0.0 {
        beta0 * sol.f0_prime0
    } else {
        beta0 * sol.f0.at(x) / x
    };
    let i2x = if x == 0.0 { i2.values[0] } else { i2.at(x) };
    total += m as f64 * (i2x - i1x * i1x) / (beta0 * beta0);

    // l̂ ≥ 2: inject through (m/x) h_{l̂-1}(x,·); at x = 0 the ratio
    // h_l(x,·)/x is iterated directly from its limit min(x,·)/x → 1{z>0}
    let mut htilde = GridFn {
        spec,
        values: spec
            .xs()
            .map(|z| {
                if x == 0.0 {
                    if z == 0.0 {
                        0.0
                    } else {
                        1.0
                    }
                } else {
                    z.min(x) / x
                }
            })
            .collect(),
    };
    let f0_qq = sol.f0.zip_with(&qq, |f, q| f * q).total();
    let mut l_hat = 2usize;
    loop {
        let term = if l_hat - 1 <= EXACT_LEVELS {
            // htilde holds h_{l̂-1}(x,·)/x; advance it afterwards
            let t = m as f64
                * beta0.powi(-2 * l_hat as i32)
                * htilde.zip_with(&qq, |h, q| h * q).total();
            htilde = min_kernel_apply(&sol.g2.zip_with(&htilde, |g, h| g * h));
            t
        } else {
            // factorized tail: h_{l̂-1}(x,·)/x ≈ β₀^{l̂-1} (f₀(x)/x) f₀(·)
            let mu_scale = if x == 0.0 {
                sol.f0_prime0
            } else {
                sol.f0.at(x) / x
            };
            m as f64 * mu_scale * beta0.powi(-(l_hat as i32) - 1) * f0_qq
        };
        total += term;
        if term.abs() < tol * total.abs() || l_hat >= CAP {
            break;
        }
        l_hat += 1;
    }
    Ok(total)
}
