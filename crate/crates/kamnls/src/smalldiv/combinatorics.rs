//! Combinatorial machinery of the small-divisor case analysis: decreasing
//! mode rearrangements, sign assignments from momentum conservation, the
//! signed reordering of integer vectors, and the two elementary inequalities
//! feeding the homological bound.

use std::collections::BTreeMap;

use super::IntVector;
use crate::error::{Error, Result};
use crate::hamops::{momentum, MultiIndex};
use crate::sites::SiteSchedule;

/// The decreasing rearrangement of a multi-index `v`: each magnitude `h > 1`
/// repeated `v_h + v_{-h}` times and `1` repeated `v_1 + v_{-1} + v_0` times.
pub fn nhat(v: &MultiIndex) -> Result<Vec<i64>> {
    if v.degree() == 0 {
        return Err(Error::InvalidParameter(
            "nhat needs a nonempty multi-index".into(),
        ));
    }
    let mut counts: BTreeMap<i64, u32> = BTreeMap::new();
    for (j, e) in v.iter() {
        let h = (j.unsigned_abs() as i64).max(1);
        *counts.entry(h).or_insert(0) += e;
    }
    let mut out = Vec::new();
    for (&h, &count) in counts.iter().rev() {
        out.extend(std::iter::repeat_n(h, count as usize));
    }
    Ok(out)
}

/// A sign assignment for `nhat(alpha + beta)` built from momentum
/// conservation: `sigma = +1` on `alpha_h + beta_{-h}` copies of each
/// magnitude `h > 1` (`-1` on the rest), and for `h = 1` the values
/// `+1, -1, 0` on `alpha_1 + beta_{-1}`, `alpha_{-1} + beta_1` and
/// `alpha_0 + beta_0` copies respectively. Then `sum_l sigma_l nhat_l = 0`
/// and `sigma_l != 0` whenever `nhat_l != 1`.
pub fn sigma_assign(alpha: &MultiIndex, beta: &MultiIndex) -> Result<Vec<i8>> {
    if momentum(alpha, beta) != 0 {
        return Err(Error::InvalidParameter(
            "sigma assignment needs zero momentum".into(),
        ));
    }
    if alpha.degree() != beta.degree() || alpha.degree() == 0 {
        return Err(Error::InvalidParameter(
            "sigma assignment needs |alpha| = |beta| >= 1".into(),
        ));
    }
    let total = alpha.mul(beta);
    let mut counts: BTreeMap<i64, (u32, u32, u32)> = BTreeMap::new(); // h -> (plus, minus, zero)
    for (j, _) in total.iter() {
        let h = (j.unsigned_abs() as i64).max(1);
        counts.entry(h).or_insert((0, 0, 0));
    }
    for (&h, entry) in counts.iter_mut() {
        if h > 1 {
            let hp = h as i32;
            let plus = alpha.get(hp) + beta.get(-hp);
            let minus = alpha.get(-hp) + beta.get(hp);
            *entry = (plus, minus, 0);
        } else {
            let plus = alpha.get(1) + beta.get(-1);
            let minus = alpha.get(-1) + beta.get(1);
            let zero = alpha.get(0) + beta.get(0);
            *entry = (plus, minus, zero);
        }
    }
    let mut out = Vec::new();
    for (_, &(plus, minus, zero)) in counts.iter().rev() {
        out.extend(std::iter::repeat_n(1i8, plus as usize));
        out.extend(std::iter::repeat_n(-1i8, minus as usize));
        out.extend(std::iter::repeat_n(0i8, zero as usize));
    }
    Ok(out)
}

/// The signed reordering of an integer vector: each mode `j != 0` repeated
/// `|u_j|` times, ordered by decreasing absolute value (ties by mode value).
pub fn mlist(u: &IntVector) -> Vec<i64> {
    let mut out = Vec::new();
    for (j, e) in u.iter() {
        if j != 0 {
            out.extend(std::iter::repeat_n(j as i64, e.unsigned_abs() as usize));
        }
    }
    out.sort_by(|a, b| b.abs().cmp(&a.abs()).then(a.cmp(b)));
    out
}

/// For a decreasing list with entries `>= 2`, returns
/// `(sum x_l / prod sqrt(x_l), sqrt(x_1) + 4/sqrt(x_1))`; the first is
/// bounded by the second.
pub fn luchino_lhs_rhs(x: &[f64]) -> Result<(f64, f64)> {
    if x.is_empty() {
        return Err(Error::InvalidParameter("empty list".into()));
    }
    for w in x.windows(2) {
        if w[1] > w[0] {
            return Err(Error::InvalidParameter("list must be decreasing".into()));
        }
    }
    if *x.last().unwrap() < 2.0 {
        return Err(Error::InvalidParameter("entries must be >= 2".into()));
    }
    let sum: f64 = x.iter().sum();
    let log_prod_sqrt: f64 = x.iter().map(|v| 0.5 * v.ln()).sum();
    let lhs = (sum.ln() - log_prod_sqrt).exp();
    let rhs = x[0].sqrt() + 4.0 / x[0].sqrt();
    Ok((lhs, rhs))
}

/// The recurring exponent sum
/// `A_k(delta) = sum_{i: k_i >= 1} [-(delta/9) k_i log<<s(i)>> + log(1 + <i>^2 k_i^2)]`.
pub fn a_k_value(k: &BTreeMap<u32, u32>, delta: f64, sched: &SiteSchedule) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "a_k needs 0 < delta < 1, got {delta}"
        )));
    }
    let mut acc = 0.0;
    for (&i, &ki) in k {
        if ki == 0 {
            continue;
        }
        let jap_i = (i.max(1)) as f64;
        acc += -(delta / 9.0) * ki as f64 * sched.ln_site(i)
            + (1.0 + jap_i * jap_i * (ki as f64) * (ki as f64)).ln();
    }
    Ok(acc)
}

/// Fitted constant for the `A_k(delta) <= C exp(45 delta^{-1/eta})` bound,
/// measured once on power-of-two sites over a dense sweep and frozen.
pub const A_K_C_FROZEN: f64 = 1.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sites::SiteSchedule;
    use rand::{Rng, SeedableRng};

    #[test]
    fn nhat_paper_example() {
        let v = MultiIndex::from_pairs([(-6, 1), (-3, 4), (-1, 1), (0, 1), (1, 2), (6, 2)]);
        assert_eq!(
            nhat(&v).unwrap(),
            vec![6, 6, 6, 3, 3, 3, 3, 1, 1, 1, 1]
        );
        assert_eq!(nhat(&MultiIndex::from_pairs([(0, 1)])).unwrap(), vec![1]);
        assert_eq!(
            nhat(&MultiIndex::from_pairs([(2, 1), (-2, 1)])).unwrap(),
            vec![2, 2]
        );
        assert!(nhat(&MultiIndex::empty()).is_err());
    }

    #[test]
    fn sigma_examples() {
        // alpha = {1, 3}, beta = {2, 2}: nhat = (3,2,2,1), sigma = (+1,-1,-1,+1)
        let alpha = MultiIndex::from_pairs([(1, 1), (3, 1)]);
        let beta = MultiIndex::from_pairs([(2, 2)]);
        let n = nhat(&alpha.mul(&beta)).unwrap();
        assert_eq!(n, vec![3, 2, 2, 1]);
        let sigma = sigma_assign(&alpha, &beta).unwrap();
        assert_eq!(sigma, vec![1, -1, -1, 1]);
        let dot: i64 = n.iter().zip(&sigma).map(|(&h, &s)| h * s as i64).sum();
        assert_eq!(dot, 0);

        // alpha = beta: pairwise cancellation
        let a = MultiIndex::from_pairs([(5, 1), (-2, 2)]);
        let sigma = sigma_assign(&a, &a).unwrap();
        let n = nhat(&a.mul(&a)).unwrap();
        let dot: i64 = n.iter().zip(&sigma).map(|(&h, &s)| h * s as i64).sum();
        assert_eq!(dot, 0);

        assert!(sigma_assign(
            &MultiIndex::from_pairs([(2, 1)]),
            &MultiIndex::from_pairs([(1, 1)])
        )
        .is_err());
    }

    /// Enumerates all (alpha, beta) with |alpha| = |beta| <= max_half over
    /// modes [-cut, cut] with zero momentum, calling `f`.
    pub(crate) fn for_all_conserved_pairs(
        cut: i32,
        max_half: u32,
        f: &mut impl FnMut(&MultiIndex, &MultiIndex),
    ) {
        fn multisets(cut: i32, size: u32) -> Vec<MultiIndex> {
            let mut out = Vec::new();
            fn rec(cut: i32, next: i32, remaining: u32, acc: &mut Vec<(i32, u32)>, out: &mut Vec<MultiIndex>) {
                if remaining == 0 {
                    out.push(MultiIndex::from_pairs(acc.iter().copied()));
                    return;
                }
                if next > cut {
                    return;
                }
                for j in next..=cut {
                    for e in 1..=remaining {
                        acc.push((j, e));
                        rec(cut, j + 1, remaining - e, acc, out);
                        acc.pop();
                    }
                }
            }
            let mut acc = Vec::new();
            rec(cut, -cut, size, &mut acc, &mut out);
            out
        }
        for half in 1..=max_half {
            let all = multisets(cut, half);
            let mut by_momentum: BTreeMap<i64, Vec<&MultiIndex>> = BTreeMap::new();
            for m in &all {
                by_momentum.entry(m.mode_weighted_sum()).or_default().push(m);
            }
            for group in by_momentum.values() {
                for &alpha in group {
                    for &beta in group {
                        f(alpha, beta);
                    }
                }
            }
        }
    }

    #[test]
    fn eleganza_exhaustive_small() {
        // nhat_1 <= sum_{l >= 2} nhat_l over all conserved pairs
        let mut checked = 0u64;
        for_all_conserved_pairs(4, 2, &mut |alpha, beta| {
            let n = nhat(&alpha.mul(beta)).unwrap();
            let head = n[0];
            let tail: i64 = n[1..].iter().sum();
            assert!(head <= tail, "nhat = {n:?} for {alpha}|{beta}");
            checked += 1;
        });
        assert!(checked > 100);
    }

    #[test]
    fn mlist_examples() {
        // modes repeated |u_j| times, ordered by decreasing |j|
        let u = IntVector::from_pairs([(3, -2), (1, 1)]);
        assert_eq!(mlist(&u), vec![3, 3, 1]);
        let u = IntVector::from_pairs([(-3, 2), (1, 1)]);
        assert_eq!(mlist(&u), vec![-3, -3, 1]);
        let u = IntVector::from_pairs([(5, 1)]);
        assert_eq!(mlist(&u), vec![5]);
        let u = IntVector::from_pairs([(0, 3), (-2, 1), (2, 1)]);
        assert_eq!(mlist(&u), vec![-2, 2]);
    }

    #[test]
    fn luchino_examples_and_sweep() {
        let (lhs, rhs) = luchino_lhs_rhs(&[2.0, 2.0]).unwrap();
        assert!((lhs - 2.0).abs() < 1e-14);
        assert!((rhs - (2f64.sqrt() + 4.0 / 2f64.sqrt())).abs() < 1e-14);
        assert!(lhs <= rhs);

        // singleton: lhs = sqrt(x1) <= rhs
        for x in [2.0, 5.0, 49.0] {
            let (lhs, rhs) = luchino_lhs_rhs(&[x]).unwrap();
            assert!((lhs - x.sqrt()).abs() < 1e-12);
            assert!(lhs <= rhs);
        }

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(211);
        for _ in 0..500 {
            let n = rng.gen_range(1..=8usize);
            let mut xs: Vec<f64> = (0..n).map(|_| rng.gen_range(2..=50) as f64).collect();
            xs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let (lhs, rhs) = luchino_lhs_rhs(&xs).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-12), "{xs:?}: {lhs} > {rhs}");
        }

        assert!(luchino_lhs_rhs(&[3.0, 1.5]).is_err());
        assert!(luchino_lhs_rhs(&[2.0, 3.0]).is_err());
    }

    #[test]
    fn a_k_examples_and_bound() {
        let sched = SiteSchedule::power2(1.2).unwrap();
        assert_eq!(a_k_value(&BTreeMap::new(), 0.5, &sched).unwrap(), 0.0);

        // k = {2: 1}, delta = 0.5: -(0.5/9) log 4 + log(1 + 4)
        let k: BTreeMap<u32, u32> = [(2, 1)].into_iter().collect();
        let got = a_k_value(&k, 0.5, &sched).unwrap();
        let want = -(0.5 / 9.0) * 4f64.ln() + 5f64.ln();
        assert!((got - want).abs() < 1e-14);

        // sweep: A_k(delta) <= C exp(45 delta^{-1/eta}) with frozen C
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(223);
        for &delta in &[0.1f64, 0.3, 0.5] {
            let bound = A_K_C_FROZEN * (45.0 * delta.powf(-1.0 / sched.eta())).exp();
            for _ in 0..300 {
                let mut k = BTreeMap::new();
                for _ in 0..rng.gen_range(1..8) {
                    k.insert(rng.gen_range(0..40u32), rng.gen_range(1..30u32));
                }
                let v = a_k_value(&k, delta, &sched).unwrap();
                assert!(v <= bound, "A_k = {v} > bound {bound} for {k:?}");
            }
        }
    }
}
