//! Sparse multi-indexes over Fourier modes.

use std::fmt;

use crate::error::{Error, Result};
use crate::spaces::Mode;

/// A sparse multi-index: finitely many modes with exponents >= 1, kept as a
/// sorted vector so that equality, ordering and hashing are canonical.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MultiIndex(Vec<(Mode, u32)>);

impl MultiIndex {
    pub fn empty() -> Self {
        MultiIndex(Vec::new())
    }

    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (Mode, u32)>,
    {
        let mut v: Vec<(Mode, u32)> = pairs.into_iter().filter(|&(_, e)| e > 0).collect();
        v.sort_unstable_by_key(|&(j, _)| j);
        let mut merged: Vec<(Mode, u32)> = Vec::with_capacity(v.len());
        for (j, e) in v {
            match merged.last_mut() {
                Some((last_j, last_e)) if *last_j == j => *last_e += e,
                _ => merged.push((j, e)),
            }
        }
        MultiIndex(merged)
    }

    pub fn single(j: Mode) -> Self {
        MultiIndex(vec![(j, 1)])
    }

    /// Total degree `|alpha|`.
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn get(&self, j: Mode) -> u32 {
        match self.0.binary_search_by_key(&j, |&(m, _)| m) {
            Ok(idx) => self.0[idx].1,
            Err(_) => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Mode, u32)> + '_ {
        self.0.iter().copied()
    }

    pub fn support(&self) -> impl Iterator<Item = Mode> + '_ {
        self.0.iter().map(|&(j, _)| j)
    }

    /// Weighted sum `sum_j j * alpha_j` as i64.
    pub fn mode_weighted_sum(&self) -> i64 {
        self.0.iter().map(|&(j, e)| j as i64 * e as i64).sum()
    }

    /// Pointwise sum of exponents.
    pub fn mul(&self, other: &MultiIndex) -> MultiIndex {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut a, mut b) = (self.0.iter().peekable(), other.0.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(ja, ea)), Some(&&(jb, eb))) => {
                    if ja < jb {
                        out.push((ja, ea));
                        a.next();
                    } else if jb < ja {
                        out.push((jb, eb));
                        b.next();
                    } else {
                        out.push((ja, ea + eb));
                        a.next();
                        b.next();
                    }
                }
                (Some(&&x), None) => {
                    out.push(x);
                    a.next();
                }
                (None, Some(&&x)) => {
                    out.push(x);
                    b.next();
                }
                (None, None) => break,
            }
        }
        MultiIndex(out)
    }

    /// Adds `e` copies of mode `j`.
    pub fn raised(&self, j: Mode, e: u32) -> MultiIndex {
        if e == 0 {
            return self.clone();
        }
        let mut v = self.0.clone();
        match v.binary_search_by_key(&j, |&(m, _)| m) {
            Ok(idx) => v[idx].1 += e,
            Err(idx) => v.insert(idx, (j, e)),
        }
        MultiIndex(v)
    }

    /// Removes one copy of mode `j`; `None` if `alpha_j = 0`.
    pub fn lowered(&self, j: Mode) -> Option<MultiIndex> {
        let idx = self.0.binary_search_by_key(&j, |&(m, _)| m).ok()?;
        let mut v = self.0.clone();
        if v[idx].1 == 1 {
            v.remove(idx);
        } else {
            v[idx].1 -= 1;
        }
        Some(MultiIndex(v))
    }

    /// `alpha <= beta` pointwise.
    pub fn divides(&self, other: &MultiIndex) -> bool {
        self.0.iter().all(|&(j, e)| other.get(j) >= e)
    }

    /// Pointwise difference `self - other`; `None` when not `other <= self`.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !other.divides(self) {
            return None;
        }
        Some(MultiIndex(
            self.0
                .iter()
                .map(|&(j, e)| (j, e - other.get(j)))
                .filter(|&(_, e)| e > 0)
                .collect(),
        ))
    }

    /// Pointwise minimum.
    pub fn min_with(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(
            self.0
                .iter()
                .filter_map(|&(j, e)| {
                    let m = e.min(other.get(j));
                    (m > 0).then_some((j, m))
                })
                .collect(),
        )
    }

    /// Restriction to modes satisfying the predicate.
    pub fn filter<F: Fn(Mode) -> bool>(&self, keep: F) -> MultiIndex {
        MultiIndex(self.0.iter().copied().filter(|&(j, _)| keep(j)).collect())
    }

    /// `alpha!` as f64.
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&(_, e)| (1..=e as u64).map(|k| k as f64).product::<f64>())
            .product()
    }

    pub fn max_abs_mode(&self) -> Mode {
        self.0.iter().map(|&(j, _)| j.abs()).max().unwrap_or(0)
    }

    /// Parses tokens like `-3^2 1^1` (empty string is the empty index).
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for tok in text.split_whitespace() {
            let (j, e) = tok
                .split_once('^')
                .ok_or_else(|| Error::Parse(format!("bad multi-index token {tok}")))?;
            let j = j
                .parse::<Mode>()
                .map_err(|e| Error::Parse(format!("bad mode in token {tok}: {e}")))?;
            let e = e
                .parse::<u32>()
                .map_err(|err| Error::Parse(format!("bad exponent in token {tok}: {err}")))?;
            pairs.push((j, e));
        }
        Ok(MultiIndex::from_pairs(pairs))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for &(j, e) in &self.0 {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{j}^{e}")?;
            first = false;
        }
        Ok(())
    }
}

/// `m(alpha - beta) = sum_j (alpha_j - beta_j)`, the mass.
pub fn mass(alpha: &MultiIndex, beta: &MultiIndex) -> i64 {
    alpha.degree() as i64 - beta.degree() as i64
}

/// `pi(alpha - beta) = sum_j j (alpha_j - beta_j)`, the momentum.
pub fn momentum(alpha: &MultiIndex, beta: &MultiIndex) -> i64 {
    alpha.mode_weighted_sum() - beta.mode_weighted_sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_examples() {
        let a = MultiIndex::from_pairs([(1, 1)]);
        let b = MultiIndex::from_pairs([(1, 1)]);
        assert_eq!(mass(&a, &b), 0);

        let a = MultiIndex::from_pairs([(1, 2)]);
        assert_eq!(mass(&a, &MultiIndex::empty()), 2);

        let a = MultiIndex::from_pairs([(-3, 1), (2, 1)]);
        let b = MultiIndex::from_pairs([(0, 2)]);
        assert_eq!(mass(&a, &b), 0);
    }

    #[test]
    fn momentum_examples() {
        let a = MultiIndex::from_pairs([(1, 1), (3, 1)]);
        let b = MultiIndex::from_pairs([(2, 2)]);
        assert_eq!(momentum(&a, &b), 0);

        let a = MultiIndex::from_pairs([(2, 1)]);
        let b = MultiIndex::from_pairs([(1, 1)]);
        assert_eq!(momentum(&a, &b), 1);

        let a = MultiIndex::from_pairs([(-4, 2), (7, 1)]);
        assert_eq!(momentum(&a, &a), 0);
    }

    #[test]
    fn algebra_roundtrips() {
        let a = MultiIndex::from_pairs([(0, 1), (5, 2), (-2, 1)]);
        assert_eq!(a.degree(), 4);
        assert_eq!(a.get(5), 2);
        assert_eq!(a.get(3), 0);
        let raised = a.raised(3, 1);
        let lowered = raised.lowered(3).unwrap();
        assert_eq!(lowered, a);
        assert!(a.lowered(3).is_none());
        let parsed = MultiIndex::parse(&a.to_string()).unwrap();
        assert_eq!(parsed, a);
        assert_eq!(MultiIndex::parse("").unwrap(), MultiIndex::empty());
    }
}
