//! Shared fixtures for the integration suites.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kamnls::hamops::{build_nls, diagonal, momentum, ActionVector, Hamiltonian, MultiIndex};
use kamnls::homological::FrequencyVector;
use kamnls::kamflow::{KamContext, Schedules};
use kamnls::sites::SiteSchedule;
use kamnls::smalldiv::{check_diophantine, enumerate_resonant, DiophParams};
use kamnls::spaces::Mode;

/// Random conserved Hamiltonian with monomials of half-degree up to
/// `max_half` per side.
pub fn random_conserved(
    rng: &mut impl Rng,
    template: &Hamiltonian,
    terms: usize,
    max_half: u32,
) -> Hamiltonian {
    let cut = template.mode_cutoff();
    let mut h = template.like();
    let mut added = 0usize;
    while added < terms {
        let deg = rng.gen_range(1..=max_half);
        let mut alpha = MultiIndex::empty();
        let mut beta = MultiIndex::empty();
        for _ in 0..deg {
            alpha = alpha.raised(rng.gen_range(-cut..=cut), 1);
            beta = beta.raised(rng.gen_range(-cut..=cut), 1);
        }
        let pi = momentum(&alpha, &beta);
        if pi != 0 {
            let lead = beta.support().next().unwrap();
            let target = lead as i64 + pi;
            if target.abs() > cut as i64 {
                continue;
            }
            beta = beta.lowered(lead).unwrap().raised(target as Mode, 1);
        }
        let coeff = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if h.insert_add(alpha, beta, coeff).is_ok() {
            added += 1;
        }
    }
    h
}

/// Scans seeded tangential draws until one passes the Diophantine check
/// over the truncated resonant set.
pub fn sample_diophantine(
    cutoff: Mode,
    lmax: i64,
    gamma: f64,
    tau: f64,
    seed0: u64,
) -> (FrequencyVector, SiteSchedule, BTreeSet<Mode>) {
    let schedule = SiteSchedule::power2(1.2).unwrap();
    let sites: BTreeSet<Mode> = schedule.gen_sites(cutoff).unwrap().into_iter().collect();
    let resonant = enumerate_resonant(cutoff, lmax, &sites).unwrap();
    let params = DiophParams::new(gamma, tau, schedule.clone()).unwrap();
    let mut seed = seed0;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: BTreeMap<Mode, f64> = sites
            .iter()
            .map(|&s| (s, rng.gen_range(-0.5f64..0.5)))
            .collect();
        let omega = FrequencyVector::from_shift(&shift, cutoff, sites.clone()).unwrap();
        let w = omega.clone();
        let omega_fn = move |m: Mode| w.get(m);
        if check_diophantine(&omega_fn, &params, &resonant, &sites).pass {
            return (omega, schedule, sites);
        }
        seed += 1;
    }
}

/// Toy NLS on power-of-two sites with the sampled frequencies replacing the
/// unperturbed quadratic part.
pub fn toy_nls(
    cutoff: Mode,
    d: u32,
    f1: f64,
    gamma: f64,
    seed0: u64,
    action_list: &[(Mode, f64)],
) -> (Hamiltonian, KamContext) {
    let (omega, schedule, sites) =
        sample_diophantine(cutoff, 2 * d as i64 + 2, gamma, 1.5, seed0);
    let schedules = Schedules::new(1.0, 1.5, 0.125, 0.125, 1.2).unwrap();
    let actions = ActionVector::new(action_list.iter().copied(), &sites).unwrap();
    let h_nls = build_nls(&[(1, f1)], &BTreeMap::new(), cutoff, d, 1.0, 1.5, u64::MAX).unwrap();
    let quad = diagonal(
        &(-cutoff..=cutoff).map(|m| (m, (m * m) as f64)).collect(),
        &h_nls.like(),
    )
    .unwrap();
    let h = h_nls
        .sub(&quad)
        .unwrap()
        .add(&diagonal(omega.entries(), &h_nls.like()).unwrap())
        .unwrap();
    let ctx = KamContext {
        omega,
        actions,
        gamma,
        tau: 1.5,
        schedule,
        schedules,
        prune_threshold: 0.0,
    };
    (h, ctx)
}

/// Enumerates all conserved pairs `|alpha| = |beta| <= max_half` over modes
/// `[-cut, cut]` with zero momentum.
pub fn for_all_conserved_pairs(
    cut: Mode,
    max_half: u32,
    f: &mut impl FnMut(&MultiIndex, &MultiIndex),
) {
    fn multisets(cut: Mode, size: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        fn rec(
            cut: Mode,
            next: Mode,
            remaining: u32,
            acc: &mut Vec<(Mode, u32)>,
            out: &mut Vec<MultiIndex>,
        ) {
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
