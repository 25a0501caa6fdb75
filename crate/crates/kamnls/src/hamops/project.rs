//! Degree decomposition around a flat torus, kernel/range projections and
//! the isometric embedding of counter-terms.
//!
//! A monomial `|v|^{2m} v^a' conj(v)^b' z^a conj(z)^b` (with `v` the
//! tangential and `z` the normal variables) is graded by expanding
//! `|v|^{2m}` around the actions `I`:
//!
//!   Pi^d H = sum_{2|delta| + |a| + |b| = d+2, delta <= m}
//!            H binom(m, delta) I^{m-delta} (|v|^2 - I)^delta v^a' conj(v)^b' z^a conj(z)^b .
//!
//! The output is re-expanded into plain monomials in `u, conj(u)`.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;

use super::hamiltonian::{Hamiltonian, MonomialKey};
use super::multiindex::MultiIndex;
use crate::error::{Error, Result};
use crate::spaces::{jjap, Mode};

/// Non-negative tangential actions `I_s` with support in the site set,
/// bounded in the `w_{2p}` ball of radius `r^2`.
#[derive(Debug, Clone, Default)]
pub struct ActionVector {
    entries: BTreeMap<Mode, f64>,
}

impl ActionVector {
    pub fn new<I>(entries: I, sites: &BTreeSet<Mode>) -> Result<Self>
    where
        I: IntoIterator<Item = (Mode, f64)>,
    {
        let mut map = BTreeMap::new();
        for (s, v) in entries {
            if !sites.contains(&s) {
                return Err(Error::InvalidParameter(format!(
                    "action support must lie in the tangential sites, got mode {s}"
                )));
            }
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "actions must be non-negative, got I_{s} = {v}"
                )));
            }
            if v > 0.0 {
                map.insert(s, v);
            }
        }
        Ok(ActionVector { entries: map })
    }

    pub fn empty() -> Self {
        ActionVector {
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, s: Mode) -> f64 {
        self.entries.get(&s).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Mode, f64)> + '_ {
        self.entries.iter().map(|(&s, &v)| (s, v))
    }

    pub fn support(&self) -> impl Iterator<Item = Mode> + '_ {
        self.entries.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `sup_s I_s <<s>>^{2p}`, the squared `w_{2p}` radius.
    pub fn ball_radius_sq(&self, p: f64) -> f64 {
        self.entries
            .iter()
            .map(|(&s, &v)| v * (jjap(s) as f64).powf(2.0 * p))
            .fold(0.0, f64::max)
    }

    /// Checks membership in the open ball `I(p, r)`.
    pub fn check_ball(&self, p: f64, r: f64) -> Result<()> {
        let rad = self.ball_radius_sq(p);
        if rad >= r * r {
            return Err(Error::InvalidParameter(format!(
                "actions leave the ball: sup I_s <<s>>^{{2p}} = {rad} >= r^2 = {}",
                r * r
            )));
        }
        Ok(())
    }
}

/// Degree in the normal modes (modes outside `sites`) of a monomial key.
pub fn normal_degree(key: &MonomialKey, sites: &BTreeSet<Mode>) -> u32 {
    key.0.filter(|j| !sites.contains(&j)).degree() + key.1.filter(|j| !sites.contains(&j)).degree()
}

fn binom_u32(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Product of per-mode binomials `binom(m_s, d_s)`.
fn binom_multi(m: &MultiIndex, d: &MultiIndex) -> f64 {
    d.iter().map(|(s, e)| binom_u32(m.get(s), e)).product()
}

/// `I^k` over the support of `k`, with `0^0 = 1`.
fn action_power(actions: &ActionVector, k: &MultiIndex) -> f64 {
    k.iter()
        .map(|(s, e)| actions.get(s).powi(e as i32))
        .product()
}

/// Enumerates sub-multi-indices `delta <= m` with `|delta| = want`.
fn sub_indices_of_degree(m: &MultiIndex, want: u32, f: &mut impl FnMut(&MultiIndex)) {
    fn rec(
        support: &[(Mode, u32)],
        idx: usize,
        remaining: u32,
        acc: &mut Vec<(Mode, u32)>,
        f: &mut impl FnMut(&MultiIndex),
    ) {
        if remaining == 0 {
            f(&MultiIndex::from_pairs(acc.iter().copied()));
            return;
        }
        if idx >= support.len() {
            return;
        }
        let tail: u32 = support[idx..].iter().map(|&(_, e)| e).sum();
        if tail < remaining {
            return;
        }
        let (s, cap) = support[idx];
        for take in 0..=cap.min(remaining) {
            if take > 0 {
                acc.push((s, take));
            }
            rec(support, idx + 1, remaining - take, acc, f);
            if take > 0 {
                acc.pop();
            }
        }
    }
    let support: Vec<(Mode, u32)> = m.iter().collect();
    let mut acc = Vec::new();
    rec(&support, 0, want, &mut acc, f);
}

/// `Pi^d H` for `d >= -2`: keeps the grading-`d` part relative to the
/// actions `I` on the tangential `sites`, re-expanded into plain monomials.
pub fn project_degree(
    h: &Hamiltonian,
    d: i32,
    actions: &ActionVector,
    sites: &BTreeSet<Mode>,
) -> Result<Hamiltonian> {
    if d < -2 {
        return Err(Error::InvalidParameter(format!(
            "degree grading starts at -2, got {d}"
        )));
    }
    let mut out = h.like();
    let mut accum: BTreeMap<MonomialKey, Complex64> = BTreeMap::new();
    for ((alpha, beta), &c) in h.iter() {
        project_monomial(alpha, beta, c, d, actions, sites, &mut accum);
    }
    out.merge_raw(accum);
    Ok(out)
}

fn project_monomial(
    alpha: &MultiIndex,
    beta: &MultiIndex,
    c: Complex64,
    d: i32,
    actions: &ActionVector,
    sites: &BTreeSet<Mode>,
    accum: &mut BTreeMap<MonomialKey, Complex64>,
) {
    let alpha_t = alpha.filter(|j| sites.contains(&j));
    let beta_t = beta.filter(|j| sites.contains(&j));
    let alpha_n = alpha.filter(|j| !sites.contains(&j));
    let beta_n = beta.filter(|j| !sites.contains(&j));
    let m = alpha_t.min_with(&beta_t);
    let a_t = alpha_t.checked_sub(&m).expect("min divides");
    let b_t = beta_t.checked_sub(&m).expect("min divides");
    let n = (alpha_n.degree() + beta_n.degree()) as i32;

    // need 2|delta| = d + 2 - n with 0 <= |delta| <= |m|
    let want2 = d + 2 - n;
    if want2 < 0 || want2 % 2 != 0 {
        return;
    }
    let want = (want2 / 2) as u32;
    if want > m.degree() {
        return;
    }

    sub_indices_of_degree(&m, want, &mut |delta| {
        let m_minus_delta = m.checked_sub(delta).expect("delta <= m");
        let outer = binom_multi(&m, delta) * action_power(actions, &m_minus_delta);
        if outer == 0.0 {
            return;
        }
        // expand (|v|^2 - I)^delta = sum_{kappa <= delta} binom(delta, kappa)
        //                            |v|^{2 kappa} (-I)^{delta - kappa}
        for kappa_deg in 0..=delta.degree() {
            sub_indices_of_degree(delta, kappa_deg, &mut |kappa| {
                let d_minus_k = delta.checked_sub(kappa).expect("kappa <= delta");
                let sign = if d_minus_k.degree() % 2 == 0 { 1.0 } else { -1.0 };
                let inner =
                    binom_multi(delta, kappa) * sign * action_power(actions, &d_minus_k);
                if inner == 0.0 {
                    return;
                }
                let alpha_out = kappa.mul(&a_t).mul(&alpha_n);
                let beta_out = kappa.mul(&b_t).mul(&beta_n);
                let entry = accum
                    .entry((alpha_out, beta_out))
                    .or_insert(Complex64::new(0.0, 0.0));
                *entry += c * outer * inner;
            });
        }
    });
}

/// `Pi^{<= d} H`.
pub fn project_upto(
    h: &Hamiltonian,
    d: i32,
    actions: &ActionVector,
    sites: &BTreeSet<Mode>,
) -> Result<Hamiltonian> {
    let mut out = project_degree(h, -2, actions, sites)?;
    for dd in -1..=d {
        out = out.add(&project_degree(h, dd, actions, sites)?)?;
    }
    Ok(out)
}

/// Splits `H` into its kernel part (monomials with `alpha = beta`) and the
/// range remainder, with `HK + HR = H` exactly.
pub fn project_kernel(h: &Hamiltonian) -> (Hamiltonian, Hamiltonian) {
    let mut kernel = h.like();
    let mut range = h.like();
    for ((alpha, beta), &c) in h.iter() {
        let target = if alpha == beta { &mut kernel } else { &mut range };
        target
            .insert_add(alpha.clone(), beta.clone(), c)
            .expect("key was already accepted");
    }
    (kernel, range)
}

/// The isometric embedding of a bounded mode map:
/// `Lambda = sum_{j in S} lambda_j (|u_j|^2 - I_j) + sum_{j notin S} lambda_j |u_j|^2`,
/// whose majorant norm equals `sup_j |lambda_j|`.
pub fn lambda_embed(
    lambda: &BTreeMap<Mode, f64>,
    actions: &ActionVector,
    sites: &BTreeSet<Mode>,
    template: &Hamiltonian,
) -> Result<Hamiltonian> {
    let mut out = template.like();
    let mut constant = 0.0;
    for (&j, &l) in lambda {
        if l == 0.0 {
            continue;
        }
        out.insert_add(
            MultiIndex::single(j),
            MultiIndex::single(j),
            Complex64::new(l, 0.0),
        )?;
        if sites.contains(&j) {
            constant -= l * actions.get(j);
        }
    }
    if constant != 0.0 {
        out.insert_add(
            MultiIndex::empty(),
            MultiIndex::empty(),
            Complex64::new(constant, 0.0),
        )?;
    }
    Ok(out)
}

/// Coefficients of the quadratic kernel monomials `|u_j|^2`; the inverse of
/// `lambda_embed` up to the constant.
pub fn kernel_quadratic(h: &Hamiltonian) -> BTreeMap<Mode, Complex64> {
    let mut out = BTreeMap::new();
    for ((alpha, beta), &c) in h.iter() {
        if alpha == beta && alpha.degree() == 1 {
            let j = alpha.support().next().expect("degree 1");
            out.insert(j, c);
        }
    }
    out
}

/// `sup_j` of the quadratic kernel coefficients; equals the sup norm of the
/// embedded mode map by the isometry.
pub fn kernel_quadratic_sup(h: &Hamiltonian) -> f64 {
    kernel_quadratic(h)
        .values()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}
