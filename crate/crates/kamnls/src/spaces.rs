//! Weighted sequence spaces `w_p`, their norms, reference points and
//! embedding constants.
//!
//! A truncated sequence stores finitely many complex Fourier coefficients
//! `u_j` for `|j| <= J` and is measured by the weighted sup norm
//! `sup_j |u_j| <<j>>^p` with `<<j>> = max(2, |j|)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Mode index. Truncated sequences and Hamiltonians live on `|j| <= J`.
pub type Mode = i32;

/// Entries smaller than this in absolute value are treated as exact zeros
/// when building the canonical sparse form. Numerical pruning at a
/// user-chosen threshold is a separate operation.
pub const CANONICAL_ZERO: f64 = 1e-300;

/// `<<j>> := max(2, |j|)`.
pub fn jjap(j: Mode) -> i64 {
    (j.unsigned_abs() as i64).max(2)
}

/// Weight exponent `p > 1` of the space `w_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight(f64);

impl Weight {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "weight exponent must satisfy p > 1, got {p}"
            )));
        }
        Ok(Weight(p))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A truncated sequence `(u_j)_{|j| <= J}` in canonical sparse form: no
/// stored value is exactly zero and every stored mode satisfies `|j| <= J`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSeq {
    entries: BTreeMap<Mode, Complex64>,
    cutoff: Mode,
}

impl ModeSeq {
    /// Empty sequence with cutoff `J >= 1`.
    pub fn new(cutoff: Mode) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::InvalidParameter(format!(
                "cutoff J must be >= 1, got {cutoff}"
            )));
        }
        Ok(ModeSeq {
            entries: BTreeMap::new(),
            cutoff,
        })
    }

    pub fn from_entries<I>(cutoff: Mode, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Mode, Complex64)>,
    {
        let mut seq = ModeSeq::new(cutoff)?;
        for (j, v) in entries {
            seq.set(j, v)?;
        }
        Ok(seq)
    }

    pub fn cutoff(&self) -> Mode {
        self.cutoff
    }

    /// Sets `u_j = v`, dropping exact zeros to keep the canonical form.
    pub fn set(&mut self, j: Mode, v: Complex64) -> Result<()> {
        if j.unsigned_abs() > self.cutoff.unsigned_abs() {
            return Err(Error::InvalidParameter(format!(
                "mode {j} outside cutoff |j| <= {}",
                self.cutoff
            )));
        }
        if v.norm() < CANONICAL_ZERO {
            self.entries.remove(&j);
        } else {
            self.entries.insert(j, v);
        }
        Ok(())
    }

    pub fn get(&self, j: Mode) -> Complex64 {
        self.entries
            .get(&j)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Mode, Complex64)> + '_ {
        self.entries.iter().map(|(&j, &v)| (j, v))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Drops entries with `|u_j| < threshold`. This is the explicit numerical
    /// pruning operation; construction only removes exact zeros.
    pub fn prune(&mut self, threshold: f64) {
        self.entries.retain(|_, v| v.norm() >= threshold);
    }

    /// Weighted sup norm `sup_j |u_j| <<j>>^p`; `0` for the empty sequence.
    pub fn wp_norm(&self, p: Weight) -> f64 {
        self.entries
            .iter()
            .map(|(&j, v)| v.norm() * (jjap(j) as f64).powf(p.get()))
            .fold(0.0, f64::max)
    }

    /// Evaluates `u(x) = sum_j u_j e^{i j x}`.
    pub fn eval(&self, x: f64) -> Complex64 {
        self.entries
            .iter()
            .map(|(&j, v)| v * Complex64::new(0.0, j as f64 * x).exp())
            .sum()
    }

    /// Text form: header `modeseq J=<J>`, then lines `j re im` sorted by j.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "modeseq J={}", self.cutoff);
        for (&j, v) in &self.entries {
            let _ = writeln!(out, "{} {} {}", j, v.re, v.im);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty modeseq dump".into()))?;
        let cutoff = header
            .strip_prefix("modeseq J=")
            .ok_or_else(|| Error::Parse(format!("bad modeseq header: {header}")))?
            .trim()
            .parse::<Mode>()
            .map_err(|e| Error::Parse(format!("bad cutoff: {e}")))?;
        let mut seq = ModeSeq::new(cutoff)?;
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let j = it
                .next()
                .ok_or_else(|| Error::Parse(format!("bad modeseq line: {line}")))?
                .parse::<Mode>()
                .map_err(|e| Error::Parse(format!("bad mode: {e}")))?;
            let re = it
                .next()
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("bad re in line: {line}")))?;
            let im = it
                .next()
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("bad im in line: {line}")))?;
            seq.set(j, Complex64::new(re, im))?;
        }
        Ok(seq)
    }
}

/// The reference point `u_p(r)` with entries `u_j = r <<j>>^{-p}` for `|j| <= J`.
pub fn reference_point(r: f64, p: Weight, cutoff: Mode) -> Result<ModeSeq> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "reference point radius must be positive, got {r}"
        )));
    }
    let mut seq = ModeSeq::new(cutoff.max(1))?;
    for j in -cutoff..=cutoff {
        let v = r * (jjap(j) as f64).powf(-p.get());
        seq.set(j, Complex64::new(v, 0.0))?;
    }
    Ok(seq)
}

/// Weight of the reference point at a single mode, `r <<j>>^{-p}`.
pub fn reference_weight(r: f64, p: f64, j: Mode) -> f64 {
    r * (jjap(j) as f64).powf(-p)
}

/// Truncated embedding constants sandwiching sup norms of the k-th
/// derivative between weighted norms:
/// `c max(|u^(k)|_inf, |u|_inf) <= |u|_p <= 2 max(|u^(p)|_L2, |u|_L2)`
/// with `c^{-1} = sum_{|j|<=J} <<j>>^{k-p}`. Requires `k < p - 1`.
pub fn embedding_constants(p: Weight, k: u32, cutoff: Mode) -> Result<(f64, f64)> {
    if (k as f64) >= p.get() - 1.0 {
        return Err(Error::InvalidParameter(format!(
            "embedding requires k < p - 1 (got k = {k}, p = {})",
            p.get()
        )));
    }
    let mut inv = 0.0;
    for j in -cutoff..=cutoff {
        inv += (jjap(j) as f64).powf(k as f64 - p.get());
    }
    Ok((1.0 / inv, 2.0))
}
