//! Elimination of the counter-terms through the external parameters, and
//! the Lipschitz extension used to define parameter maps everywhere.
//!
//! The frequencies split as `omega = (nu, Omega)`. Given the counter-term
//! `lambda(omega, I)` the normal components solve the fixed point
//! `Omega_j + lambda_j(nu, Omega, I) = j^2 + V_j` (j normal), after which
//! the tangential potential is read off as
//! `V_{S,j} = nu_j + lambda_j(nu, Omega, I) - j^2`.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::homological::FrequencyVector;
use crate::spaces::Mode;

/// Result of the parameter elimination.
#[derive(Debug, Clone)]
pub struct Elimination {
    /// Solved normal frequencies `Omega_j`, `j` normal.
    pub omega_normal: BTreeMap<Mode, f64>,
    /// Recovered tangential potential `V_{S,j}`, `j` tangential.
    pub v_tangential: BTreeMap<Mode, f64>,
    pub iterations: usize,
    pub sup_lambda: f64,
    /// Estimated Lipschitz constant of the fixed-point map in `Omega`.
    pub contraction_estimate: f64,
}

fn sup_map(m: &BTreeMap<Mode, f64>) -> f64 {
    m.values().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Solves the elimination equations by fixed-point iteration. `lambda_fn`
/// evaluates the counter-term at a full frequency vector (dependence on the
/// actions and normal potential is captured by the closure); `nu` fixes the
/// tangential components; `v_normal` is the normal potential.
pub fn eliminate_params(
    lambda_fn: &dyn Fn(&FrequencyVector) -> Result<BTreeMap<Mode, f64>>,
    nu: &BTreeMap<Mode, f64>,
    v_normal: &BTreeMap<Mode, f64>,
    cutoff: Mode,
    sites: &BTreeSet<Mode>,
    tol: f64,
    max_iter: usize,
) -> Result<Elimination> {
    let assemble = |omega_n: &BTreeMap<Mode, f64>| -> Result<FrequencyVector> {
        let mut omega = BTreeMap::new();
        for j in -cutoff..=cutoff {
            let w = if sites.contains(&j) {
                nu.get(&j).copied().ok_or_else(|| {
                    Error::InvalidParameter(format!("nu misses tangential mode {j}"))
                })?
            } else {
                omega_n
                    .get(&j)
                    .copied()
                    .unwrap_or((j as f64) * (j as f64) + v_normal.get(&j).copied().unwrap_or(0.0))
            };
            omega.insert(j, w);
        }
        FrequencyVector::new(omega, cutoff, sites.clone())
    };

    // unperturbed start Omega_j = j^2 + V_j
    let mut omega_n: BTreeMap<Mode, f64> = (-cutoff..=cutoff)
        .filter(|j| !sites.contains(j))
        .map(|j| {
            (
                j,
                (j as f64) * (j as f64) + v_normal.get(&j).copied().unwrap_or(0.0),
            )
        })
        .collect();

    // contraction probe: the fixed-point map is Omega -> q + V - lambda(Omega);
    // its Lipschitz constant in Omega is estimated from one finite difference
    let lambda0 = lambda_fn(&assemble(&omega_n)?)?;
    let probe_size = 1e-4;
    let perturbed: BTreeMap<Mode, f64> = omega_n
        .iter()
        .map(|(&j, &w)| (j, w + probe_size))
        .collect();
    let lambda_probe = lambda_fn(&assemble(&perturbed)?)?;
    let mut diff = 0.0f64;
    for j in omega_n.keys() {
        let a = lambda0.get(j).copied().unwrap_or(0.0);
        let b = lambda_probe.get(j).copied().unwrap_or(0.0);
        diff = diff.max((a - b).abs());
    }
    let contraction_estimate = diff / probe_size;
    if contraction_estimate >= 0.5 {
        return Err(Error::NonContraction(format!(
            "elimination map has Lipschitz estimate {contraction_estimate:.3} >= 1/2"
        )));
    }

    let mut lambda = lambda0;
    let mut iterations = 0usize;
    loop {
        let mut next: BTreeMap<Mode, f64> = BTreeMap::new();
        for &j in omega_n.keys() {
            let q = (j as f64) * (j as f64) + v_normal.get(&j).copied().unwrap_or(0.0);
            next.insert(j, q - lambda.get(&j).copied().unwrap_or(0.0));
        }
        let change = omega_n
            .iter()
            .map(|(j, w)| (next[j] - w).abs())
            .fold(0.0f64, f64::max);
        omega_n = next;
        iterations += 1;
        if change < tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NonContraction(format!(
                "elimination did not settle in {max_iter} iterations (last change {change:.3e})"
            )));
        }
        lambda = lambda_fn(&assemble(&omega_n)?)?;
    }

    let lambda_final = lambda_fn(&assemble(&omega_n)?)?;
    let sup_lambda = sup_map(&lambda_final);
    // the solved Omega stays within 2 sup|lambda| of the unperturbed value
    for (&j, &w) in &omega_n {
        let base = (j as f64) * (j as f64) + v_normal.get(&j).copied().unwrap_or(0.0);
        if (w - base).abs() > 2.0 * sup_lambda + 1e-15 {
            return Err(Error::Divergence(format!(
                "eliminated Omega_{j} drifted by {} > 2 sup|lambda| = {}",
                (w - base).abs(),
                2.0 * sup_lambda
            )));
        }
    }
    let v_tangential = nu
        .iter()
        .map(|(&j, &nu_j)| {
            (
                j,
                nu_j + lambda_final.get(&j).copied().unwrap_or(0.0) - (j as f64) * (j as f64),
            )
        })
        .collect();
    Ok(Elimination {
        omega_normal: omega_n,
        v_tangential,
        iterations,
        sup_lambda,
        contraction_estimate,
    })
}

/// McShane extension: given `L`-compatible samples `(point, value)` in the
/// sup metric, evaluates `inf_u (f(u) + L d(query, u))` at the query point,
/// optionally clamped to `[-M, M]`.
pub fn mcshane_extend(
    samples: &[(Vec<f64>, f64)],
    lipschitz: f64,
    query: &[f64],
    clamp: Option<f64>,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples to extend".into()));
    }
    let d_sup = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max)
    };
    for (i, (u, fu)) in samples.iter().enumerate() {
        if u.len() != query.len() {
            return Err(Error::InvalidParameter(
                "sample/query dimension mismatch".into(),
            ));
        }
        for (v, fv) in &samples[i + 1..] {
            let dist = d_sup(u, v);
            if (fu - fv).abs() > lipschitz * dist * (1.0 + 1e-12) + 1e-14 {
                return Err(Error::IncompatibleSamples(format!(
                    "|f(u)-f(v)| = {} exceeds L d(u,v) = {}",
                    (fu - fv).abs(),
                    lipschitz * dist
                )));
            }
        }
    }
    let value = samples
        .iter()
        .map(|(u, fu)| fu + lipschitz * d_sup(query, u))
        .fold(f64::INFINITY, f64::min);
    Ok(match clamp {
        Some(m) => value.clamp(-m, m),
        None => value,
    })
}
