//! Finite collections of conserved monomials with majorant norms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;

use super::multiindex::{mass, momentum, MultiIndex};
use crate::error::{Error, Result};
use crate::spaces::{jjap, Mode, ModeSeq, Weight, CANONICAL_ZERO};

/// Canonical monomial key `(alpha, beta)` for `u^alpha conj(u)^beta`.
pub type MonomialKey = (MultiIndex, MultiIndex);

/// A Hamiltonian as a canonical map from monomial keys to complex
/// coefficients, together with truncation metadata: mode cutoff `J`
/// (all modes satisfy `|j| <= J`), degree cutoff `D`
/// (`|alpha| + |beta| <= 2D + 2`) and the reference radius/weight used for
/// default norm evaluations and pruning diagnostics.
///
/// Every stored monomial conserves mass (`|alpha| = |beta|`) and momentum
/// (`sum_j j (alpha_j - beta_j) = 0`); insertion rejects anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    terms: BTreeMap<MonomialKey, Complex64>,
    mode_cutoff: Mode,
    degree_cutoff: u32,
    pub r: f64,
    pub p: f64,
    /// Upper bound on the coefficient mass lost to degree-cap drops and
    /// explicit pruning since construction.
    pub dropped_mass: f64,
}

impl Hamiltonian {
    pub fn new(mode_cutoff: Mode, degree_cutoff: u32, r: f64, p: f64) -> Result<Self> {
        if mode_cutoff < 1 {
            return Err(Error::InvalidParameter(format!(
                "mode cutoff must be >= 1, got {mode_cutoff}"
            )));
        }
        if !(r > 0.0) || !(p > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need r > 0 and p > 1, got r = {r}, p = {p}"
            )));
        }
        Ok(Hamiltonian {
            terms: BTreeMap::new(),
            mode_cutoff,
            degree_cutoff,
            r,
            p,
            dropped_mass: 0.0,
        })
    }

    pub fn mode_cutoff(&self) -> Mode {
        self.mode_cutoff
    }

    pub fn degree_cutoff(&self) -> u32 {
        self.degree_cutoff
    }

    /// Maximum allowed total degree `|alpha| + |beta|`.
    pub fn max_degree(&self) -> u32 {
        2 * self.degree_cutoff + 2
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MonomialKey, &Complex64)> + '_ {
        self.terms.iter()
    }

    pub fn coeff(&self, key: &MonomialKey) -> Complex64 {
        self.terms
            .get(key)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// An empty Hamiltonian with the same metadata.
    pub fn like(&self) -> Hamiltonian {
        Hamiltonian {
            terms: BTreeMap::new(),
            mode_cutoff: self.mode_cutoff,
            degree_cutoff: self.degree_cutoff,
            r: self.r,
            p: self.p,
            dropped_mass: 0.0,
        }
    }

    fn check_key(&self, alpha: &MultiIndex, beta: &MultiIndex) -> Result<()> {
        if mass(alpha, beta) != 0 {
            return Err(Error::Conservation(format!(
                "mass {} != 0 for {alpha}|{beta}",
                mass(alpha, beta)
            )));
        }
        if momentum(alpha, beta) != 0 {
            return Err(Error::Conservation(format!(
                "momentum {} != 0 for {alpha}|{beta}",
                momentum(alpha, beta)
            )));
        }
        let max_mode = alpha.max_abs_mode().max(beta.max_abs_mode());
        if max_mode > self.mode_cutoff {
            return Err(Error::InvalidParameter(format!(
                "mode {max_mode} beyond cutoff {} in {alpha}|{beta}",
                self.mode_cutoff
            )));
        }
        if alpha.degree() + beta.degree() > self.max_degree() {
            return Err(Error::InvalidParameter(format!(
                "degree {} beyond cap {} in {alpha}|{beta}",
                alpha.degree() + beta.degree(),
                self.max_degree()
            )));
        }
        Ok(())
    }

    /// Adds `c u^alpha conj(u)^beta`, merging with any existing coefficient.
    pub fn insert_add(&mut self, alpha: MultiIndex, beta: MultiIndex, c: Complex64) -> Result<()> {
        self.check_key(&alpha, &beta)?;
        let key = (alpha, beta);
        let entry = self
            .terms
            .entry(key.clone())
            .or_insert(Complex64::new(0.0, 0.0));
        *entry += c;
        if entry.norm() < CANONICAL_ZERO {
            self.terms.remove(&key);
        }
        Ok(())
    }

    /// Bulk merge used by the algebra kernels; keys are trusted to satisfy
    /// the conservation checks already (they are produced from checked keys,
    /// which brackets and projections preserve), asserted in debug builds.
    pub(crate) fn merge_raw<I>(&mut self, it: I)
    where
        I: IntoIterator<Item = (MonomialKey, Complex64)>,
    {
        for (key, c) in it {
            debug_assert!(
                mass(&key.0, &key.1) == 0 && momentum(&key.0, &key.1) == 0,
                "conservation violated at {}|{}",
                key.0,
                key.1
            );
            let entry = self.terms.entry(key).or_insert(Complex64::new(0.0, 0.0));
            *entry += c;
        }
        self.terms.retain(|_, v| v.norm() >= CANONICAL_ZERO);
    }

    pub fn scaled(&self, factor: Complex64) -> Hamiltonian {
        let mut out = self.like();
        out.dropped_mass = self.dropped_mass * factor.norm();
        for (key, c) in &self.terms {
            let v = c * factor;
            if v.norm() >= CANONICAL_ZERO {
                out.terms.insert(key.clone(), v);
            }
        }
        out
    }

    pub fn add(&self, other: &Hamiltonian) -> Result<Hamiltonian> {
        if other.mode_cutoff != self.mode_cutoff || other.degree_cutoff != self.degree_cutoff {
            return Err(Error::InvalidParameter(
                "cutoff mismatch in Hamiltonian sum".into(),
            ));
        }
        let mut out = self.clone();
        out.dropped_mass += other.dropped_mass;
        out.merge_raw(other.terms.iter().map(|(k, &v)| (k.clone(), v)));
        Ok(out)
    }

    pub fn sub(&self, other: &Hamiltonian) -> Result<Hamiltonian> {
        self.add(&other.scaled(Complex64::new(-1.0, 0.0)))
    }

    /// Coefficient of the constant monomial.
    pub fn constant_term(&self) -> Complex64 {
        self.coeff(&(MultiIndex::empty(), MultiIndex::empty()))
    }

    /// Sum of `|coeff|` over all monomials.
    pub fn l1_coeff_mass(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    /// The majorant norm
    /// `(1/2) sup_j sum_{alpha,beta} |H_{alpha,beta}| (alpha_j + beta_j) u_p(r)^{alpha+beta-2e_j}`
    /// evaluated on the reference point `u_p(r)_k = r <<k>>^{-p}`.
    pub fn majorant_norm(&self, r: f64, p: Weight) -> f64 {
        let p = p.get();
        let ln_r = r.ln();
        let mut slots: BTreeMap<Mode, f64> = BTreeMap::new();
        for ((alpha, beta), c) in &self.terms {
            let total = alpha.mul(beta);
            let deg = total.degree();
            if deg == 0 {
                continue;
            }
            // log of u_p(r)^{alpha+beta} = deg*ln r - p * sum e_k ln<<k>>
            let logw: f64 = total
                .iter()
                .map(|(j, e)| e as f64 * (jjap(j) as f64).ln())
                .sum();
            let base = (deg as f64 - 2.0) * ln_r - p * logw;
            let cn = c.norm();
            for (j, e) in total.iter() {
                let term = cn * e as f64 * (base + 2.0 * p * (jjap(j) as f64).ln()).exp();
                *slots.entry(j).or_insert(0.0) += term;
            }
        }
        slots.values().fold(0.0f64, |a, &b| a.max(b)) / 2.0
    }

    /// Majorant norm at the stored reference metadata `(self.r, self.p)`.
    pub fn norm_default(&self) -> f64 {
        self.majorant_norm(self.r, Weight::new(self.p).expect("stored p > 1"))
    }

    /// Majorant contribution of a single monomial at metadata `(r, p)`:
    /// `(1/2) max_j |c| (alpha_j+beta_j) u_p(r)^{alpha+beta-2e_j}`.
    pub fn monomial_weight(&self, key: &MonomialKey, c: Complex64) -> f64 {
        let (alpha, beta) = key;
        let total = alpha.mul(beta);
        let deg = total.degree();
        if deg == 0 {
            return 0.0;
        }
        let logw: f64 = total
            .iter()
            .map(|(j, e)| e as f64 * (jjap(j) as f64).ln())
            .sum();
        let base = (deg as f64 - 2.0) * self.r.ln() - self.p * logw;
        let cn = c.norm();
        total
            .iter()
            .map(|(j, e)| cn * e as f64 * (base + 2.0 * self.p * (jjap(j) as f64).ln()).exp())
            .fold(0.0, f64::max)
            / 2.0
    }

    /// Explicit numerical pruning: removes monomials whose majorant
    /// contribution at the stored `(r, p)` is below `threshold`, adds the
    /// removed contribution to `dropped_mass`, and returns it.
    pub fn prune(&mut self, threshold: f64) -> f64 {
        if threshold <= 0.0 {
            return 0.0;
        }
        let mut dropped = 0.0;
        let keys: Vec<MonomialKey> = self
            .terms
            .iter()
            .filter_map(|(k, &c)| {
                let w = self.monomial_weight(k, c);
                (w < threshold && (k.0.degree() + k.1.degree()) > 0).then(|| {
                    k.clone()
                })
            })
            .collect();
        for k in keys {
            if let Some(c) = self.terms.remove(&k) {
                dropped += self.monomial_weight(&k, c);
            }
        }
        self.dropped_mass += dropped;
        dropped
    }

    /// Largest reality defect `|H_{alpha,beta} - conj(H_{beta,alpha})|`.
    pub fn reality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for ((alpha, beta), c) in &self.terms {
            let mirrored = self.coeff(&(beta.clone(), alpha.clone()));
            worst = worst.max((c - mirrored.conj()).norm());
        }
        worst
    }

    /// Evaluates `H(u)` at a point.
    pub fn evaluate(&self, u: &ModeSeq) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((alpha, beta), c) in &self.terms {
            let mut prod = *c;
            for (j, e) in alpha.iter() {
                prod *= u.get(j).powu(e);
            }
            for (j, e) in beta.iter() {
                prod *= u.get(j).conj().powu(e);
            }
            acc += prod;
        }
        acc
    }

    /// Hamiltonian vector field `X_H^{(j)} = i d/d(conj(u_j)) H` evaluated at
    /// a point, returned as a sequence over `|j| <= J`.
    pub fn vector_field(&self, u: &ModeSeq) -> Result<ModeSeq> {
        let mut out = ModeSeq::new(self.mode_cutoff)?;
        let i = Complex64::new(0.0, 1.0);
        for ((alpha, beta), c) in &self.terms {
            for (j, e) in beta.iter() {
                // d/d conj(u_j) of conj(u)^beta = e * conj(u_j)^{e-1} * rest
                let mut prod = *c * e as f64;
                for (k, ek) in alpha.iter() {
                    prod *= u.get(k).powu(ek);
                }
                for (k, ek) in beta.iter() {
                    let ek_eff = if k == j { ek - 1 } else { ek };
                    prod *= u.get(k).conj().powu(ek_eff);
                }
                let cur = out.get(j);
                out.set(j, cur + i * prod)?;
            }
        }
        Ok(out)
    }

    /// Text form: header `ham r=<r> p=<p> D=<D> J=<J>`, then one line
    /// `alpha| beta| re im` per monomial in canonical key order, with modes
    /// encoded as `j^e` tokens. Floating values use the shortest
    /// representation that round-trips, so dump/parse is bit-exact.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "ham r={} p={} D={} J={}",
            self.r, self.p, self.degree_cutoff, self.mode_cutoff
        );
        for ((alpha, beta), c) in &self.terms {
            let _ = writeln!(out, "{alpha}| {beta}| {} {}", c.re, c.im);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty hamiltonian dump".into()))?;
        let rest = header
            .strip_prefix("ham ")
            .ok_or_else(|| Error::Parse(format!("bad hamiltonian header: {header}")))?;
        let mut r = None;
        let mut p = None;
        let mut d = None;
        let mut j = None;
        for tok in rest.split_whitespace() {
            let (key, val) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token {tok}")))?;
            match key {
                "r" => r = val.parse::<f64>().ok(),
                "p" => p = val.parse::<f64>().ok(),
                "D" => d = val.parse::<u32>().ok(),
                "J" => j = val.parse::<Mode>().ok(),
                _ => return Err(Error::Parse(format!("unknown header key {key}"))),
            }
        }
        let (Some(r), Some(p), Some(d), Some(j)) = (r, p, d, j) else {
            return Err(Error::Parse(format!("incomplete header: {header}")));
        };
        let mut ham = Hamiltonian::new(j, d, r, p)?;
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '|');
            let alpha = MultiIndex::parse(parts.next().unwrap_or(""))?;
            let beta = MultiIndex::parse(
                parts
                    .next()
                    .ok_or_else(|| Error::Parse(format!("missing beta in {line}")))?,
            )?;
            let coeff_part = parts
                .next()
                .ok_or_else(|| Error::Parse(format!("missing coefficient in {line}")))?;
            let mut it = coeff_part.split_whitespace();
            let re = it
                .next()
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("bad re in {line}")))?;
            let im = it
                .next()
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("bad im in {line}")))?;
            ham.insert_add(alpha, beta, Complex64::new(re, im))?;
        }
        Ok(ham)
    }
}

/// The diagonal quadratic `D(omega) = sum_j omega_j |u_j|^2`.
pub fn diagonal(omega: &BTreeMap<Mode, f64>, template: &Hamiltonian) -> Result<Hamiltonian> {
    let mut d = template.like();
    for (&j, &w) in omega {
        d.insert_add(
            MultiIndex::single(j),
            MultiIndex::single(j),
            Complex64::new(w, 0.0),
        )?;
    }
    Ok(d)
}
