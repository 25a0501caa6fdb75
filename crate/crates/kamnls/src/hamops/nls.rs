//! Construction of the truncated NLS Hamiltonian
//! `H = sum_j (j^2 + V_j) |u_j|^2 + P` with
//! `P = -int_T F(|u|^2) dx`, `F(y) = sum_d f^(d) y^{d+1} / (d+1)`,
//! expanded symbolically over conserved monomials.
//!
//! The integral uses the normalised measure `dx / 2pi`, so the quadratic
//! part matches `sum_j j^2 |u_j|^2` and each `f^(d)` contributes monomials
//! `u^alpha conj(u)^beta` with `|alpha| = |beta| = d+1`, zero momentum and
//! coefficient `-f^(d)/(d+1) * (d+1)!^2 / (alpha! beta!)` (the number of
//! ordered factorisations). The convention is pinned by a quadrature oracle
//! in the tests.

use std::collections::BTreeMap;

use num_complex::Complex64;

use super::hamiltonian::Hamiltonian;
use super::multiindex::MultiIndex;
use crate::error::{Error, Result};
use crate::spaces::Mode;

/// Default ceiling for the estimated monomial count.
pub const DEFAULT_MONOMIAL_CEILING: u64 = 20_000_000;

fn multiset_count(modes: u64, size: u64) -> u64 {
    // C(modes + size - 1, size), saturating
    let mut acc: u128 = 1;
    for i in 0..size {
        acc = acc.saturating_mul((modes + i) as u128) / (i as u128 + 1);
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Enumerates all multisets of `size` modes drawn from `[-J, J]`, grouped by
/// their mode sum. The callback receives `(alpha, alpha!)`.
fn enumerate_multisets(
    cutoff: Mode,
    size: u32,
    f: &mut impl FnMut(&MultiIndex, i64),
) {
    fn rec(
        cutoff: Mode,
        next: Mode,
        remaining: u32,
        acc: &mut Vec<(Mode, u32)>,
        f: &mut impl FnMut(&MultiIndex, i64),
    ) {
        if remaining == 0 {
            let m = MultiIndex::from_pairs(acc.iter().copied());
            let momentum = m.mode_weighted_sum();
            f(&m, momentum);
            return;
        }
        if next > cutoff {
            return;
        }
        for j in next..=cutoff {
            for e in 1..=remaining {
                acc.push((j, e));
                rec(cutoff, j + 1, remaining - e, acc, f);
                acc.pop();
            }
        }
    }
    let mut acc = Vec::new();
    rec(cutoff, -cutoff, size, &mut acc, f);
}

/// Builds the truncated NLS Hamiltonian. `fcoeffs` lists `(d, f^(d))` with
/// `d >= 1`; `v` is the Fourier multiplier with `|V_j| <= 1/4`. Nonlinearity
/// orders whose monomials exceed the degree cap are skipped and recorded in
/// `dropped_mass`.
pub fn build_nls(
    fcoeffs: &[(u32, f64)],
    v: &BTreeMap<Mode, f64>,
    mode_cutoff: Mode,
    degree_cutoff: u32,
    r: f64,
    p: f64,
    ceiling: u64,
) -> Result<Hamiltonian> {
    for (&j, &vj) in v {
        if vj.abs() > 0.25 {
            return Err(Error::InvalidParameter(format!(
                "Fourier multiplier must satisfy |V_j| <= 1/4, got V_{j} = {vj}"
            )));
        }
    }
    for &(d, _) in fcoeffs {
        if d == 0 {
            return Err(Error::InvalidParameter(
                "nonlinearity orders start at d = 1 (f(0) = 0)".into(),
            ));
        }
    }

    // combinatorial guard before any enumeration
    let modes = 2 * mode_cutoff as u64 + 1;
    let mut estimate: u64 = 0;
    for &(d, fd) in fcoeffs {
        if fd == 0.0 || 2 * (d + 1) > 2 * degree_cutoff + 2 {
            continue;
        }
        let n_alpha = multiset_count(modes, (d + 1) as u64);
        let momenta = 2 * modes * (d as u64 + 1) + 1;
        estimate = estimate.saturating_add(
            n_alpha
                .saturating_mul(n_alpha)
                .saturating_div(momenta.max(1)),
        );
    }
    if estimate > ceiling {
        return Err(Error::CombinatorialGuard { estimate, ceiling });
    }

    let mut h = Hamiltonian::new(mode_cutoff, degree_cutoff, r, p)?;

    // quadratic part sum_j (j^2 + V_j) |u_j|^2
    for j in -mode_cutoff..=mode_cutoff {
        let w = (j as f64) * (j as f64) + v.get(&j).copied().unwrap_or(0.0);
        if w != 0.0 {
            h.insert_add(
                MultiIndex::single(j),
                MultiIndex::single(j),
                Complex64::new(w, 0.0),
            )?;
        }
    }

    for &(d, fd) in fcoeffs {
        if fd == 0.0 {
            continue;
        }
        let half_degree = d + 1;
        if 2 * half_degree > h.max_degree() {
            h.dropped_mass += fd.abs() / half_degree as f64;
            continue;
        }
        // group the multisets by momentum
        let mut groups: BTreeMap<i64, Vec<(MultiIndex, f64)>> = BTreeMap::new();
        enumerate_multisets(mode_cutoff, half_degree, &mut |m, momentum| {
            groups
                .entry(momentum)
                .or_default()
                .push((m.clone(), m.factorial()));
        });
        let full_fact: f64 = (1..=half_degree as u64).map(|k| k as f64).product();
        let scale = -fd / half_degree as f64;
        for group in groups.values() {
            for (alpha, alpha_fact) in group {
                for (beta, beta_fact) in group {
                    let coeff = scale * full_fact * full_fact / (alpha_fact * beta_fact);
                    h.insert_add(alpha.clone(), beta.clone(), Complex64::new(coeff, 0.0))?;
                }
            }
        }
    }
    Ok(h)
}

/// `|f|_R = sum_d |f^(d)| R^d`.
pub fn f_radius_norm(fcoeffs: &[(u32, f64)], radius: f64) -> f64 {
    fcoeffs
        .iter()
        .map(|&(d, fd)| fd.abs() * radius.powi(d as i32))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{ModeSeq, Weight};
    use rand::{Rng, SeedableRng};

    #[test]
    fn linear_case_is_diagonal() {
        let v: BTreeMap<Mode, f64> = [(0, 0.1), (2, -0.2)].into_iter().collect();
        let h = build_nls(&[], &v, 3, 2, 1.0, 2.0, DEFAULT_MONOMIAL_CEILING).unwrap();
        for ((alpha, beta), &c) in h.iter() {
            assert_eq!(alpha, beta);
            assert_eq!(alpha.degree(), 1);
            let j = alpha.support().next().unwrap();
            let want = (j as f64).powi(2) + v.get(&j).copied().unwrap_or(0.0);
            assert!((c.re - want).abs() < 1e-15);
            assert_eq!(c.im, 0.0);
        }
    }

    #[test]
    fn quadrature_oracle_pins_the_expansion() {
        // compare the symbolic P against a trapezoid quadrature of
        // -(1/2pi) int F(|u(x)|^2) dx on a 64-point grid (exact for
        // trigonometric polynomials of this degree)
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(71);
        let fcoeffs = [(1u32, 0.8f64), (2u32, -0.35f64)];
        let cutoff = 2;
        let h = build_nls(&fcoeffs, &BTreeMap::new(), cutoff, 2, 1.0, 2.0, u64::MAX).unwrap();
        // strip the quadratic part to isolate P
        let mut p_only = h.like();
        for ((alpha, beta), &c) in h.iter() {
            if alpha.degree() + beta.degree() > 2 {
                p_only
                    .insert_add(alpha.clone(), beta.clone(), c)
                    .unwrap();
            }
        }
        for _ in 0..5 {
            let mut u = ModeSeq::new(cutoff).unwrap();
            for j in -cutoff..=cutoff {
                u.set(
                    j,
                    Complex64::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)),
                )
                .unwrap();
            }
            let symbolic = p_only.evaluate(&u);
            let n = 64usize;
            let mut quad = 0.0;
            for k in 0..n {
                let x = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let y = u.eval(x).norm_sqr();
                let fy: f64 = fcoeffs
                    .iter()
                    .map(|&(d, fd)| fd * y.powi(d as i32 + 1) / (d as f64 + 1.0))
                    .sum();
                quad += fy;
            }
            quad /= n as f64;
            assert!(symbolic.im.abs() < 1e-12);
            assert!(
                (symbolic.re + quad).abs() < 1e-12,
                "symbolic {} vs quadrature {}",
                symbolic.re,
                -quad
            );
        }
    }

    #[test]
    fn cubic_guard_triggers() {
        let err = build_nls(&[(3, 1.0)], &BTreeMap::new(), 12, 4, 1.0, 2.0, 10).unwrap_err();
        assert!(matches!(err, Error::CombinatorialGuard { .. }));
    }

    #[test]
    fn nonlinearity_norm_bound() {
        // |P|_{r,p} <= c2 |f|_R r^2 / R for small r, with c2 fitted once on
        // this configuration and frozen
        let radius = 1.0;
        let fcoeffs = [(1u32, 0.5f64), (2u32, 0.25f64)];
        let f_norm = f_radius_norm(&fcoeffs, radius);
        let p = Weight::new(2.0).unwrap();
        let h = build_nls(&fcoeffs, &BTreeMap::new(), 4, 3, 1.0, 2.0, u64::MAX).unwrap();
        let mut p_only = h.like();
        for ((alpha, beta), &c) in h.iter() {
            if alpha.degree() + beta.degree() > 2 {
                p_only.insert_add(alpha.clone(), beta.clone(), c).unwrap();
            }
        }
        const C2_FROZEN: f64 = 8.0;
        for r in [0.02, 0.05, 0.1, 0.2] {
            let lhs = p_only.majorant_norm(r, p);
            let rhs = C2_FROZEN * f_norm * r * r / radius;
            assert!(lhs <= rhs, "r = {r}: lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn bad_multiplier_rejected() {
        let v: BTreeMap<Mode, f64> = [(1, 0.3)].into_iter().collect();
        assert!(build_nls(&[], &v, 2, 1, 1.0, 2.0, u64::MAX).is_err());
    }
}
