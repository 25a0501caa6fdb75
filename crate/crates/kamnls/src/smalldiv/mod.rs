//! Diophantine weights and checks, the resonant index set, and product-
//! measure estimation by seeded Monte-Carlo sampling.

pub mod combinatorics;

pub use combinatorics::{a_k_value, luchino_lhs_rhs, mlist, nhat, sigma_assign, A_K_C_FROZEN};

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamops::MultiIndex;
use crate::sites::SiteSchedule;
use crate::spaces::Mode;

/// A sparse integer vector `l` with finite support.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct IntVector(Vec<(Mode, i64)>);

impl IntVector {
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (Mode, i64)>,
    {
        let mut v: Vec<(Mode, i64)> = pairs.into_iter().filter(|&(_, e)| e != 0).collect();
        v.sort_unstable_by_key(|&(j, _)| j);
        let mut merged: Vec<(Mode, i64)> = Vec::with_capacity(v.len());
        for (j, e) in v {
            match merged.last_mut() {
                Some((last, acc)) if *last == j => *acc += e,
                _ => merged.push((j, e)),
            }
        }
        merged.retain(|&(_, e)| e != 0);
        IntVector(merged)
    }

    /// `alpha - beta` as an integer vector.
    pub fn from_difference(alpha: &MultiIndex, beta: &MultiIndex) -> Self {
        let mut pairs: BTreeMap<Mode, i64> = BTreeMap::new();
        for (j, e) in alpha.iter() {
            *pairs.entry(j).or_insert(0) += e as i64;
        }
        for (j, e) in beta.iter() {
            *pairs.entry(j).or_insert(0) -= e as i64;
        }
        IntVector::from_pairs(pairs)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Mode, i64)> + '_ {
        self.0.iter().copied()
    }

    pub fn get(&self, j: Mode) -> i64 {
        match self.0.binary_search_by_key(&j, |&(m, _)| m) {
            Ok(idx) => self.0[idx].1,
            Err(_) => 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// `|l| = sum_j |l_j|`.
    pub fn l1(&self) -> i64 {
        self.0.iter().map(|&(_, e)| e.abs()).sum()
    }

    /// Mass `sum_j l_j`.
    pub fn mass(&self) -> i64 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    /// Momentum `sum_j j l_j`.
    pub fn momentum(&self) -> i64 {
        self.0.iter().map(|&(j, e)| j as i64 * e).sum()
    }

    /// `q(l) = sum_j j^2 l_j`.
    pub fn q(&self) -> i64 {
        self.0
            .iter()
            .map(|&(j, e)| (j as i64) * (j as i64) * e)
            .sum()
    }
}

impl std::fmt::Display for IntVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for &(j, e) in &self.0 {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{j}:{e}")?;
            first = false;
        }
        Ok(())
    }
}

/// Parameters of the Diophantine condition
/// `|omega.l| >= gamma prod_{s in S} (1 + |l_s|^2 <i(s)>^2)^{-tau}`.
#[derive(Debug, Clone)]
pub struct DiophParams {
    pub gamma: f64,
    pub tau: f64,
    pub schedule: SiteSchedule,
}

impl DiophParams {
    pub fn new(gamma: f64, tau: f64, schedule: SiteSchedule) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, 1], got {gamma}"
            )));
        }
        if !(tau > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must exceed 1, got {tau}"
            )));
        }
        Ok(DiophParams {
            gamma,
            tau,
            schedule,
        })
    }
}

/// The Diophantine weight
/// `td(l) = prod over tangential s in supp(l) of (1 + l_s^2 <i(s)>^2)^{-tau}`,
/// equal to 1 when `l` has no tangential support. Always in `(0, 1]` and
/// multiplicative over disjoint tangential supports.
pub fn td_weight(l: &IntVector, sched: &SiteSchedule, sites: &BTreeSet<Mode>, tau: f64) -> f64 {
    let mut acc = 1.0;
    for (s, e) in l.iter() {
        if !sites.contains(&s) {
            continue;
        }
        let iw = sched.inverse_weight(s as i64);
        acc *= (1.0 + (e * e) as f64 * iw * iw).powf(-tau);
    }
    acc
}

/// Enumerates the truncated resonant index set: all `l` supported in
/// `[-J, J]` with `0 < |l| <= lmax`, at most 2 units of normal support,
/// zero mass, zero momentum and `|q(l)| < |l|`.
pub fn enumerate_resonant(
    cutoff: Mode,
    lmax: i64,
    sites: &BTreeSet<Mode>,
) -> Result<Vec<IntVector>> {
    if lmax < 2 {
        return Err(Error::InvalidParameter(format!(
            "lmax must be >= 2, got {lmax}"
        )));
    }
    let modes: Vec<Mode> = (-cutoff..=cutoff).collect();
    let mut out = Vec::new();
    let mut acc: Vec<(Mode, i64)> = Vec::new();

    fn rec(
        modes: &[Mode],
        idx: usize,
        budget: i64,
        normal_budget: i64,
        sites: &BTreeSet<Mode>,
        acc: &mut Vec<(Mode, i64)>,
        out: &mut Vec<IntVector>,
    ) {
        if idx == modes.len() {
            let l = IntVector::from_pairs(acc.iter().copied());
            if !l.is_zero() && l.mass() == 0 && l.momentum() == 0 && l.q().abs() < l.l1() {
                out.push(l);
            }
            return;
        }
        let j = modes[idx];
        let cap = if sites.contains(&j) {
            budget
        } else {
            budget.min(normal_budget)
        };
        for e in -cap..=cap {
            if e != 0 {
                acc.push((j, e));
            }
            let spent = e.abs();
            let normal_spent = if sites.contains(&j) { 0 } else { spent };
            rec(
                modes,
                idx + 1,
                budget - spent,
                normal_budget - normal_spent,
                sites,
                acc,
                out,
            );
            if e != 0 {
                acc.pop();
            }
        }
    }
    rec(&modes, 0, lmax, 2, sites, &mut acc, &mut out);
    out.sort();
    out.dedup();
    Ok(out)
}

/// Outcome of a Diophantine check over an enumerated resonant set.
#[derive(Debug, Clone)]
pub struct DiophReport {
    pub pass: bool,
    /// Minimal `|omega.l| / (gamma td(l))` over the set; below 1 means fail.
    pub worst_ratio: f64,
    pub worst_l: Option<IntVector>,
    pub violations: usize,
}

/// Dot products below this are treated as exact resonances.
pub const RESONANCE_FLOOR: f64 = 1e-14;

/// Minimal `|omega.l| / td(l)` over the resonant set; dividing by `gamma`
/// turns it into the Diophantine margin. Exact resonances report 0.
pub fn min_divisor_ratio(
    omega: &dyn Fn(Mode) -> f64,
    resonant: &[IntVector],
    sched: &SiteSchedule,
    sites: &BTreeSet<Mode>,
    tau: f64,
) -> (f64, Option<IntVector>) {
    let mut worst = f64::INFINITY;
    let mut arg = None;
    for l in resonant {
        let dot: f64 = l.iter().map(|(j, e)| omega(j) * e as f64).sum();
        let dot = if dot.abs() < RESONANCE_FLOOR { 0.0 } else { dot.abs() };
        let ratio = dot / td_weight(l, sched, sites, tau);
        if ratio < worst {
            worst = ratio;
            arg = Some(l.clone());
        }
    }
    (worst, arg)
}

/// Verifies `|omega.l| >= gamma td(l)` for every `l` in the enumerated set.
pub fn check_diophantine(
    omega: &dyn Fn(Mode) -> f64,
    params: &DiophParams,
    resonant: &[IntVector],
    sites: &BTreeSet<Mode>,
) -> DiophReport {
    let (worst, arg) = min_divisor_ratio(omega, resonant, &params.schedule, sites, params.tau);
    let violations = resonant
        .iter()
        .filter(|l| {
            let dot: f64 = l.iter().map(|(j, e)| omega(j) * e as f64).sum();
            let dot = if dot.abs() < RESONANCE_FLOOR { 0.0 } else { dot.abs() };
            dot < params.gamma * td_weight(l, &params.schedule, sites, params.tau)
        })
        .count();
    DiophReport {
        pass: violations == 0,
        worst_ratio: worst / params.gamma,
        worst_l: arg,
        violations,
    }
}

/// Per-sample minimal divisor ratios `min_l |omega.l| / td(l)` for `samples`
/// frequency draws: tangential components `nu_s = s^2 + U(-1/2, 1/2)` drawn
/// independently (truncated product measure), normal components fixed at
/// `omega_j = j^2 + V_j`. The RNG streams are per-sample, so the result is
/// bit-identical for a given seed regardless of thread count.
pub fn mc_min_ratios(
    cutoff: Mode,
    lmax: i64,
    sched: &SiteSchedule,
    tau: f64,
    v_normal: &BTreeMap<Mode, f64>,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sites: BTreeSet<Mode> = sched.gen_sites(cutoff)?.into_iter().collect();
    let resonant = enumerate_resonant(cutoff, lmax, &sites)?;
    let site_list: Vec<Mode> = sites.iter().copied().collect();
    let ratios: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            let mut omega: BTreeMap<Mode, f64> = BTreeMap::new();
            for &s in &site_list {
                omega.insert(s, (s as f64) * (s as f64) + rng.gen_range(-0.5..0.5));
            }
            let omega_fn = |j: Mode| -> f64 {
                omega.get(&j).copied().unwrap_or_else(|| {
                    (j as f64) * (j as f64) + v_normal.get(&j).copied().unwrap_or(0.0)
                })
            };
            min_divisor_ratio(&omega_fn, &resonant, sched, &sites, tau).0
        })
        .collect();
    Ok(ratios)
}

/// Monte-Carlo estimate of the measure of the Diophantine complement.
#[derive(Debug, Clone)]
pub struct MeasureEstimate {
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
}

/// Fraction of sampled frequency vectors failing the Diophantine condition,
/// with a normal-approximation 95% confidence interval.
pub fn measure_complement_mc(
    params: &DiophParams,
    cutoff: Mode,
    lmax: i64,
    samples: usize,
    seed: u64,
    v_normal: &BTreeMap<Mode, f64>,
) -> Result<MeasureEstimate> {
    if samples < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 samples, got {samples}"
        )));
    }
    let ratios = mc_min_ratios(
        cutoff,
        lmax,
        &params.schedule,
        params.tau,
        v_normal,
        samples,
        seed,
    )?;
    Ok(estimate_from_ratios(&ratios, params.gamma))
}

/// Turns per-sample minimal ratios into a failing-fraction estimate at a
/// given gamma (a sample fails iff its minimal ratio is below gamma).
pub fn estimate_from_ratios(ratios: &[f64], gamma: f64) -> MeasureEstimate {
    let n = ratios.len();
    let fails = ratios.iter().filter(|&&m| m < gamma).count();
    let p = fails as f64 / n as f64;
    let half = 1.96 * (p * (1.0 - p) / n as f64).sqrt();
    MeasureEstimate {
        fraction: p,
        ci_low: (p - half).max(0.0),
        ci_high: (p + half).min(1.0),
        samples: n,
    }
}

/// `sum_{l in A} td(l)` over the truncated resonant set.
pub fn coperta_sum(cutoff: Mode, lmax: i64, sched: &SiteSchedule, tau: f64) -> Result<f64> {
    let sites: BTreeSet<Mode> = sched.gen_sites(cutoff)?.into_iter().collect();
    let resonant = enumerate_resonant(cutoff, lmax, &sites)?;
    Ok(resonant
        .iter()
        .map(|l| td_weight(l, sched, &sites, tau))
        .sum())
}

/// The dominating series `72 sum_{k != 0} prod_i (1 + k_i^2 <i>^2)^{-1}`
/// truncated to the tangential indices reachable at `(J, lmax)`.
pub fn coperta_majorant(cutoff: Mode, lmax: i64, sched: &SiteSchedule) -> Result<f64> {
    let sites = sched.gen_sites(cutoff)?;
    let indices: Vec<u32> = sites
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| sched.i_of(s as i64).map(|(i, _)| i))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut stack: Vec<i64> = Vec::new();
    fn rec(indices: &[u32], pos: usize, budget: i64, stack: &mut Vec<i64>, total: &mut f64) {
        if pos == indices.len() {
            if stack.iter().any(|&k| k != 0) {
                let mut prod = 1.0;
                for (idx, &k) in stack.iter().enumerate() {
                    let iw = (indices[idx].max(1)) as f64;
                    prod *= 1.0 / (1.0 + (k * k) as f64 * iw * iw);
                }
                *total += prod;
            }
            return;
        }
        for k in -budget..=budget {
            stack.push(k);
            rec(indices, pos + 1, budget - k.abs(), stack, total);
            stack.pop();
        }
    }
    rec(&indices, 0, lmax, &mut stack, &mut total);
    Ok(72.0 * total)
}

/// Quadrature check of the slab measure bound: for a set `E` in
/// `[-1/4, 1/4]^n` whose line measure along `xi = (xi_hat, +-1)` never
/// exceeds `delta`, the Lebesgue measure satisfies
/// `meas(E) <= 2^{1-n} delta |xi|_2^2`.
#[derive(Debug, Clone)]
pub struct SlabReport {
    pub set_measure: f64,
    pub bound: f64,
    pub grid_error: f64,
    pub pass: bool,
}

/// Generates `boxes` random axis-aligned boxes each of thickness
/// `delta / boxes` in the last coordinate (so every line along `xi` spends at
/// most `delta` inside the union), then verifies the measure bound by cell
/// counting on a `grid^n` lattice.
pub fn slab_measure_check(
    n: usize,
    xi: &[f64],
    delta: f64,
    grid: usize,
    boxes: usize,
    seed: u64,
) -> Result<SlabReport> {
    if n == 0 || n > 3 || xi.len() != n {
        return Err(Error::InvalidParameter(
            "slab check supports dimensions 1..=3 with matching xi".into(),
        ));
    }
    if (xi[n - 1].abs() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(
            "xi must have last component +-1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thickness = delta / boxes as f64;
    // each box is `thickness`-thin in the last coordinate, so any line along
    // xi (unit speed in x_n) spends at most `thickness` inside it and at most
    // `delta` inside the union; the other extents are random subintervals
    let mut box_list: Vec<[(f64, f64); 3]> = Vec::new();
    for _ in 0..boxes {
        let mut b = [(-0.25, 0.25); 3];
        let lo = rng.gen_range(-0.25..0.25 - thickness.min(0.4));
        b[n - 1] = (lo, lo + thickness);
        for side in b.iter_mut().take(n.saturating_sub(1)) {
            let a = rng.gen_range(-0.25..0.2);
            let len = rng.gen_range(0.05..0.45f64).min(0.25 - a);
            *side = (a, a + len);
        }
        box_list.push(b);
    }
    let h = 0.5 / grid as f64;
    let mut count = 0usize;
    let total = grid.pow(n as u32);
    for cell in 0..total {
        let mut idx = cell;
        let mut x = [0.0f64; 3];
        for slot in x.iter_mut().take(n) {
            let k = idx % grid;
            idx /= grid;
            *slot = -0.25 + (k as f64 + 0.5) * h;
        }
        let inside = box_list
            .iter()
            .any(|b| (0..n).all(|d| x[d] >= b[d].0 && x[d] < b[d].1));
        if inside {
            count += 1;
        }
    }
    let set_measure = count as f64 * h.powi(n as i32);
    let xi_sq: f64 = xi.iter().map(|v| v * v).sum();
    let bound = 2f64.powi(1 - n as i32) * delta * xi_sq;
    let grid_error = 2.0 * (boxes as f64) * h * 0.5f64.powi(n as i32 - 1);
    Ok(SlabReport {
        set_measure,
        bound,
        grid_error,
        pass: set_measure <= bound + grid_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power2_sites(cutoff: Mode) -> (SiteSchedule, BTreeSet<Mode>) {
        let sched = SiteSchedule::power2(1.2).unwrap();
        let sites = sched.gen_sites(cutoff).unwrap().into_iter().collect();
        (sched, sites)
    }

    #[test]
    fn td_examples() {
        let (sched, sites) = power2_sites(8);
        let zero = IntVector::from_pairs([]);
        assert_eq!(td_weight(&zero, &sched, &sites, 1.5), 1.0);

        // l_s = 1 at s = s(2) = 4 (so i(s) = 2): (1 + 4)^{-3/2}
        let l = IntVector::from_pairs([(4, 1)]);
        let got = td_weight(&l, &sched, &sites, 1.5);
        assert!((got - 5f64.powf(-1.5)).abs() < 1e-15);

        // multiplicative over disjoint tangential support
        let l2 = IntVector::from_pairs([(8, -2)]);
        let both = IntVector::from_pairs([(4, 1), (8, -2)]);
        let prod = td_weight(&l, &sched, &sites, 1.5) * td_weight(&l2, &sched, &sites, 1.5);
        assert!((td_weight(&both, &sched, &sites, 1.5) - prod).abs() < 1e-15);

        // range (0, 1]
        assert!(td_weight(&both, &sched, &sites, 1.5) > 0.0);
        assert!(td_weight(&both, &sched, &sites, 1.5) <= 1.0);
    }

    #[test]
    fn resonant_set_examples() {
        // J = 4, S = {1, 2, 4}: e_1 + e_3 - 2 e_2 has mass 0, momentum 0,
        // q = 1 + 9 - 8 = 2 < 4, one normal unit at 3: included
        let (_, sites) = power2_sites(4);
        let set = enumerate_resonant(4, 4, &sites).unwrap();
        let included = IntVector::from_pairs([(1, 1), (3, 1), (2, -2)]);
        assert!(set.contains(&included));
        // e_2 - e_1 has momentum 1: excluded
        let excluded = IntVector::from_pairs([(2, 1), (1, -1)]);
        assert!(!set.contains(&excluded));
        // every member has even |l| >= 4 (zero mass/momentum excludes |l| = 2)
        for l in &set {
            assert_eq!(l.l1() % 2, 0, "{l}");
            assert!(l.l1() >= 4, "{l}");
            assert_eq!(l.mass(), 0);
            assert_eq!(l.momentum(), 0);
            assert!(l.q().abs() < l.l1());
            let normal: i64 = l
                .iter()
                .filter(|(j, _)| !sites.contains(j))
                .map(|(_, e)| e.abs())
                .sum();
            assert!(normal <= 2);
        }
    }

    #[test]
    fn resonant_set_matches_naive_oracle() {
        // independent odometer enumeration for small J
        let (_, sites) = power2_sites(3);
        let cutoff = 3;
        let lmax = 4i64;
        let fast = enumerate_resonant(cutoff, lmax, &sites).unwrap();
        let mut naive = Vec::new();
        let modes: Vec<Mode> = (-cutoff..=cutoff).collect();
        let width = (2 * lmax + 1) as usize;
        let total = width.pow(modes.len() as u32);
        for code in 0..total {
            let mut idx = code;
            let mut pairs = Vec::new();
            for &j in &modes {
                let e = (idx % width) as i64 - lmax;
                idx /= width;
                if e != 0 {
                    pairs.push((j, e));
                }
            }
            let l = IntVector::from_pairs(pairs);
            if l.is_zero() || l.l1() > lmax {
                continue;
            }
            let normal: i64 = l
                .iter()
                .filter(|(j, _)| !sites.contains(j))
                .map(|(_, e)| e.abs())
                .sum();
            if normal > 2 {
                continue;
            }
            if l.mass() == 0 && l.momentum() == 0 && l.q().abs() < l.l1() {
                naive.push(l);
            }
        }
        naive.sort();
        naive.dedup();
        assert_eq!(fast, naive);
    }

    #[test]
    fn exact_resonance_fails() {
        // l = 2e_1 - 4e_2 + 4e_4 - 2e_5 has q = 0, so omega_j = j^2 resonates
        let (sched, sites) = power2_sites(5);
        let set = enumerate_resonant(5, 12, &sites).unwrap();
        let resonance = IntVector::from_pairs([(1, 2), (2, -4), (4, 4), (5, -2)]);
        assert!(set.contains(&resonance));
        let params = DiophParams::new(0.5, 1.5, sched).unwrap();
        let omega = |j: Mode| (j as f64) * (j as f64);
        let report = check_diophantine(&omega, &params, &set, &sites);
        assert!(!report.pass);
        assert_eq!(report.worst_ratio, 0.0);
    }

    #[test]
    fn large_q_never_violates() {
        // |q(l)| >= |l| forces |omega.l| >= |l|/2 >= 1 >= gamma td(l)
        let (sched, sites) = power2_sites(5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        for _ in 0..2000 {
            // conserved by construction: k plus modes, k minus modes with a
            // momentum repair on the last one
            let k = rng.gen_range(2..=3usize);
            let mut pairs: Vec<(Mode, i64)> = Vec::new();
            let mut momentum = 0i64;
            for _ in 0..k {
                let j = rng.gen_range(-5..=5i32);
                pairs.push((j, 1));
                momentum += j as i64;
            }
            for _ in 0..k - 1 {
                let j = rng.gen_range(-5..=5i32);
                pairs.push((j, -1));
                momentum -= j as i64;
            }
            if momentum.abs() > 5 {
                continue;
            }
            pairs.push((momentum as Mode, -1));
            let l = IntVector::from_pairs(pairs);
            if l.is_zero() || l.mass() != 0 || l.momentum() != 0 || l.q().abs() < l.l1() {
                continue;
            }
            checked += 1;
            let omega =
                |j: Mode| (j as f64) * (j as f64) + 0.24 * (((j * 7).rem_euclid(3)) as f64 - 1.0);
            let dot: f64 = l.iter().map(|(j, e)| omega(j) * e as f64).sum();
            assert!(dot.abs() >= 1.0 - 1e-9, "{l}: {dot}");
            assert!(dot.abs() >= td_weight(&l, &sched, &sites, 1.5));
        }
        assert!(checked > 20);
    }

    #[test]
    fn mc_trend_in_gamma() {
        let sched = SiteSchedule::power2(1.2).unwrap();
        let ratios = mc_min_ratios(6, 4, &sched, 1.5, &BTreeMap::new(), 400, 42).unwrap();
        let f_big = estimate_from_ratios(&ratios, 0.2).fraction;
        let f_mid = estimate_from_ratios(&ratios, 0.1).fraction;
        let f_small = estimate_from_ratios(&ratios, 0.05).fraction;
        assert!(f_big >= f_mid && f_mid >= f_small);
    }

    #[test]
    fn mc_deterministic_across_threads() {
        let sched = SiteSchedule::power2(1.2).unwrap();
        let a = mc_min_ratios(5, 4, &sched, 1.5, &BTreeMap::new(), 200, 99).unwrap();
        let b = mc_min_ratios(5, 4, &sched, 1.5, &BTreeMap::new(), 200, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mc_matches_grid_oracle_two_sites() {
        // J = 2 has two tangential sites {1, 2}; the failing set only
        // depends on (nu_1, nu_2), so a fine grid computes the measure
        let sched = SiteSchedule::power2(1.2).unwrap();
        let sites: BTreeSet<Mode> = sched.gen_sites(2).unwrap().into_iter().collect();
        assert_eq!(sites.len(), 2);
        let resonant = enumerate_resonant(2, 6, &sites).unwrap();
        let gamma = 1.0;
        let tau = 1.5;
        let grid = 400;
        let mut fails = 0usize;
        for a in 0..grid {
            for b in 0..grid {
                let nu1 = 1.0 + (a as f64 + 0.5) / grid as f64 - 0.5;
                let nu2 = 4.0 + (b as f64 + 0.5) / grid as f64 - 0.5;
                let omega = |j: Mode| match j {
                    1 => nu1,
                    2 => nu2,
                    _ => (j as f64) * (j as f64),
                };
                let (min_ratio, _) =
                    min_divisor_ratio(&omega, &resonant, &sched, &sites, tau);
                if min_ratio < gamma {
                    fails += 1;
                }
            }
        }
        let grid_fraction = fails as f64 / (grid * grid) as f64;
        let ratios = mc_min_ratios(2, 6, &sched, tau, &BTreeMap::new(), 4000, 7).unwrap();
        let est = estimate_from_ratios(&ratios, gamma);
        assert!(
            est.ci_low - 0.01 <= grid_fraction && grid_fraction <= est.ci_high + 0.01,
            "grid {grid_fraction} vs MC [{}, {}]",
            est.ci_low,
            est.ci_high
        );
    }

    #[test]
    fn coperta_behaviour() {
        let sched = SiteSchedule::power2(1.2).unwrap();
        // J = 1: the only tangential site is 1; no resonant vectors fit
        assert_eq!(coperta_sum(1, 4, &sched, 1.5).unwrap(), 0.0);

        // increasing in J and lmax, and the tail decays once lmax is large
        let s_small = coperta_sum(4, 4, &sched, 1.5).unwrap();
        let s_mid = coperta_sum(4, 6, &sched, 1.5).unwrap();
        let s_big = coperta_sum(6, 6, &sched, 1.5).unwrap();
        assert!(s_small <= s_mid && s_mid <= s_big);
        let s_verylong = coperta_sum(4, 10, &sched, 1.5).unwrap();
        let s_longer = coperta_sum(4, 12, &sched, 1.5).unwrap();
        assert!((s_longer - s_verylong) < 1e-3);

        // the 72-weighted series dominates at matching truncation
        let major = coperta_majorant(6, 6, &sched).unwrap();
        assert!(s_big <= major, "{s_big} > {major}");
    }

    #[test]
    fn slab_bound_holds() {
        // n = 1: bound = delta exactly
        let r = slab_measure_check(1, &[1.0], 0.05, 4096, 3, 1).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.bound - 0.05).abs() < 1e-15);

        // n = 2 random slab unions on a 512^2 grid
        for seed in 0..5 {
            let r = slab_measure_check(2, &[0.7, -1.0], 0.08, 512, 4, seed).unwrap();
            assert!(r.pass, "{r:?}");
        }
        // n = 3 on a coarser grid
        let r = slab_measure_check(3, &[0.4, -0.2, 1.0], 0.1, 96, 3, 9).unwrap();
        assert!(r.pass, "{r:?}");
        // degenerate: empty set
        let r = slab_measure_check(2, &[0.3, 1.0], 0.0, 128, 1, 0).unwrap();
        assert!(r.set_measure <= r.grid_error);
    }
}
