//! Admissible tangential-site sets: generators `s(i)`, inverses `i(s)` and
//! validators for the growth and superadditivity conditions
//!
//!   s(i) >= exp((log i)^{1+eta}),   s(i+i') >= s(i)+s(i'),
//!   s(h i) >= h s(i),               s(i^2)  >= s(i)^2,
//!
//! required for all i >= i_star. Below i_star the conditions are not
//! imposed; prefixes there only need strict monotonicity.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::spaces::Mode;

/// Growth law of the generator `s(i)`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `s(i) = 2^i`.
    Power2,
    /// `s(i) = floor(exp((log i)^{1+eta}))`, clamped to stay strictly
    /// increasing, with prefix `s(0) = 1`, `s(1) = 2`.
    Loggevrey,
}

/// The five sign/prefix combinations building a tangential set in Z from
/// admissible sets in N. `S2` reuses the same growth law as `S1`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignVariant {
    S1,
    NegS1,
    NegS1UnionS0,
    S1UnionS0,
    NegS1UnionS2UnionS0,
}

/// An admissible tangential-site generator.
#[derive(Debug, Clone)]
pub struct SiteSchedule {
    kind: ScheduleKind,
    eta: f64,
    i_star: u32,
    variant: SignVariant,
    s0: Vec<i64>,
}

impl SiteSchedule {
    pub fn new(
        kind: ScheduleKind,
        eta: f64,
        i_star: u32,
        variant: SignVariant,
        s0: Vec<i64>,
    ) -> Result<Self> {
        if !(eta > 1.0 && eta <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "eta must lie in (1, 2], got {eta}"
            )));
        }
        if i_star < 21 {
            return Err(Error::InvalidParameter(format!(
                "i_star must be >= 21, got {i_star}"
            )));
        }
        Ok(SiteSchedule {
            kind,
            eta,
            i_star,
            variant,
            s0,
        })
    }

    /// Positive power-of-two sites, the default test schedule.
    pub fn power2(eta: f64) -> Result<Self> {
        SiteSchedule::new(ScheduleKind::Power2, eta, 21, SignVariant::S1, Vec::new())
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn i_star(&self) -> u32 {
        self.i_star
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn variant(&self) -> SignVariant {
        self.variant
    }

    /// `s(i)`. Errors on overflow of the i64 range.
    pub fn s_of(&self, i: u32) -> Result<i64> {
        match self.kind {
            ScheduleKind::Power2 => {
                if i >= 63 {
                    return Err(Error::Overflow(format!("2^{i}")));
                }
                Ok(1i64 << i)
            }
            ScheduleKind::Loggevrey => {
                // prefix keeps strict monotonicity where the raw integer part
                // of exp((log i)^{1+eta}) collides at small i
                match i {
                    0 => Ok(1),
                    1 => Ok(2),
                    _ => {
                        let prev = self.s_of(i - 1)?;
                        let raw = ((i as f64).ln().powf(1.0 + self.eta)).exp();
                        if raw > i64::MAX as f64 / 2.0 {
                            return Err(Error::Overflow(format!("loggevrey s({i})")));
                        }
                        Ok((raw.floor() as i64).max(prev + 1))
                    }
                }
            }
        }
    }

    /// `log max(2, s(i))`, overflow-free for large indices.
    pub fn ln_site(&self, i: u32) -> f64 {
        match self.s_of(i) {
            Ok(s) => (s.max(2) as f64).ln(),
            Err(_) => match self.kind {
                ScheduleKind::Power2 => i as f64 * std::f64::consts::LN_2,
                ScheduleKind::Loggevrey => (i as f64).ln().powf(1.0 + self.eta),
            },
        }
    }

    /// Floor-inverse of `s(i)`: the largest `i` with `s(i) <= s`, plus a
    /// membership flag. Errors for `s < s(0)`.
    pub fn i_of(&self, s: i64) -> Result<(u32, bool)> {
        if s < self.s_of(0)? {
            return Err(Error::InvalidParameter(format!(
                "site {s} below the smallest generated site"
            )));
        }
        match self.kind {
            ScheduleKind::Power2 => {
                let i = 63 - (s as u64).leading_zeros();
                Ok((i, s == (1i64 << i)))
            }
            ScheduleKind::Loggevrey => {
                let mut i = 0u32;
                loop {
                    let next = match self.s_of(i + 1) {
                        Ok(v) => v,
                        Err(_) => return Ok((i, self.s_of(i)? == s)),
                    };
                    if next > s {
                        return Ok((i, self.s_of(i)? == s));
                    }
                    i += 1;
                }
            }
        }
    }

    /// `<i(s)>` for an arbitrary integer site: the floor-inverse of `|s|`
    /// clamped below by 1. Sites from the finite prefix and sign variants are
    /// weighted through the magnitude of the underlying generator index.
    pub fn inverse_weight(&self, s: i64) -> f64 {
        let a = s.abs();
        match self.i_of(a.max(self.s_of(0).unwrap_or(1))) {
            Ok((i, _)) => (i.max(1)) as f64,
            Err(_) => 1.0,
        }
    }

    /// The variant-adjusted set `S` intersected with `[-J, J]`, sorted and
    /// duplicate-free.
    pub fn gen_sites(&self, cutoff: Mode) -> Result<Vec<Mode>> {
        if cutoff < 1 {
            return Err(Error::InvalidParameter(format!(
                "cutoff J must be >= 1, got {cutoff}"
            )));
        }
        let mut base = Vec::new();
        let mut i = 0u32;
        loop {
            match self.s_of(i) {
                Ok(s) if s <= cutoff as i64 => {
                    if s >= -(cutoff as i64) {
                        base.push(s);
                    }
                }
                _ => break,
            }
            i += 1;
        }
        let mut sites: Vec<i64> = match self.variant {
            SignVariant::S1 => base,
            SignVariant::NegS1 => base.iter().map(|s| -s).collect(),
            SignVariant::NegS1UnionS0 => {
                let mut v: Vec<i64> = base.iter().map(|s| -s).collect();
                v.extend(self.s0.iter().copied());
                v
            }
            SignVariant::S1UnionS0 => {
                let mut v = base.clone();
                v.extend(self.s0.iter().copied());
                v
            }
            SignVariant::NegS1UnionS2UnionS0 => {
                let mut v: Vec<i64> = base.iter().map(|s| -s).collect();
                v.extend(base.iter().copied());
                v.extend(self.s0.iter().copied());
                v
            }
        };
        sites.retain(|s| s.abs() <= cutoff as i64);
        sites.sort_unstable();
        sites.dedup();
        Ok(sites.into_iter().map(|s| s as Mode).collect())
    }
}

/// Outcome of one admissibility condition over a scanned range.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub name: &'static str,
    pub pass: bool,
    /// First counterexample `(inputs, lhs, rhs)` with `lhs < rhs`.
    pub counterexample: Option<(String, f64, f64)>,
}

/// Per-condition results of `validate_admissible`.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub conditions: Vec<ConditionReport>,
}

impl AdmissibilityReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }
}

/// Checks the growth condition and both superadditivity conditions plus the
/// square condition for all indices in range with `i >= i_star`. Failures
/// are reported as data, not errors.
pub fn validate_admissible(sched: &SiteSchedule, i_max: u32) -> Result<AdmissibilityReport> {
    let s = |i: u32| sched.s_of(i);
    validate_admissible_fn(&|i| s(i).ok(), sched.eta(), sched.i_star(), i_max)
}

/// Same checks for a raw generator function; used to probe inadmissible
/// schedules (for example the identity) without constructing a `SiteSchedule`.
pub fn validate_admissible_fn(
    s: &dyn Fn(u32) -> Option<i64>,
    eta: f64,
    i_star: u32,
    i_max: u32,
) -> Result<AdmissibilityReport> {
    if i_max < i_star {
        return Err(Error::InvalidParameter(format!(
            "i_max = {i_max} must be >= i_star = {i_star}"
        )));
    }
    let val = |i: u32| -> Option<f64> { s(i).map(|v| v as f64) };

    let mut growth = ConditionReport {
        name: "growth",
        pass: true,
        counterexample: None,
    };
    for i in i_star..=i_max {
        let Some(si) = val(i) else { break };
        let bound = ((i as f64).ln().powf(1.0 + eta)).exp();
        if si < bound {
            growth.pass = false;
            growth.counterexample = Some((format!("i={i}"), si, bound));
            break;
        }
    }

    let mut superadd = ConditionReport {
        name: "superadditive",
        pass: true,
        counterexample: None,
    };
    'outer_a: for i in i_star..=i_max {
        for ip in i..=i_max {
            let Some(sum_idx) = i.checked_add(ip) else {
                continue;
            };
            if sum_idx > i_max {
                break;
            }
            let (Some(a), Some(b), Some(c)) = (val(i), val(ip), val(sum_idx)) else {
                continue;
            };
            if c < a + b {
                superadd.pass = false;
                superadd.counterexample = Some((format!("i={i}, i'={ip}"), c, a + b));
                break 'outer_a;
            }
        }
    }

    let mut homog = ConditionReport {
        name: "homogeneous",
        pass: true,
        counterexample: None,
    };
    'outer_h: for i in i_star..=i_max {
        let mut h = 1u32;
        while h * i <= i_max {
            let (Some(a), Some(c)) = (val(i), val(h * i)) else {
                break;
            };
            if c < h as f64 * a {
                homog.pass = false;
                homog.counterexample = Some((format!("h={h}, i={i}"), c, h as f64 * a));
                break 'outer_h;
            }
            h += 1;
        }
    }

    let mut squares = ConditionReport {
        name: "squares",
        pass: true,
        counterexample: None,
    };
    for i in i_star..=i_max {
        let Some(sq) = i.checked_mul(i) else { break };
        if sq > i_max {
            break;
        }
        let (Some(a), Some(c)) = (val(i), val(sq)) else {
            break;
        };
        if c < a * a {
            squares.pass = false;
            squares.counterexample = Some((format!("i={i}"), c, a * a));
            break;
        }
    }

    Ok(AdmissibilityReport {
        conditions: vec![growth, superadd, homog, squares],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power2_values() {
        let sched = SiteSchedule::power2(1.2).unwrap();
        assert_eq!(sched.s_of(5).unwrap(), 32);
        assert_eq!(sched.s_of(0).unwrap(), 1);
        assert!(sched.s_of(63).is_err());
    }

    #[test]
    fn loggevrey_regression() {
        let sched = SiteSchedule::new(
            ScheduleKind::Loggevrey,
            1.5,
            21,
            SignVariant::S1,
            Vec::new(),
        )
        .unwrap();
        // prefix 1, 2; the raw integer parts at i = 2, 3 collide with the
        // prefix and are clamped up to keep strict monotonicity
        let vals: Vec<i64> = (0..=6).map(|i| sched.s_of(i).unwrap()).collect();
        assert_eq!(vals, vec![1, 2, 3, 4, 9, 26, 73]);
        for w in vals.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn inverse_examples() {
        let sched = SiteSchedule::power2(1.2).unwrap();
        assert_eq!(sched.i_of(32).unwrap(), (5, true));
        assert_eq!(sched.i_of(33).unwrap(), (5, false));
        assert_eq!(sched.i_of(1).unwrap(), (0, true));
        assert!(sched.i_of(0).is_err());
        // i_of . s_of = id on the evaluated range
        for i in 0..40 {
            let s = sched.s_of(i).unwrap();
            assert_eq!(sched.i_of(s).unwrap(), (i, true));
        }
    }

    #[test]
    fn constructor_bounds() {
        assert!(SiteSchedule::power2(3.0).is_err());
        assert!(SiteSchedule::power2(1.0).is_err());
        assert!(
            SiteSchedule::new(ScheduleKind::Power2, 1.2, 20, SignVariant::S1, Vec::new()).is_err()
        );
    }

    #[test]
    fn power2_admissible() {
        let sched = SiteSchedule::power2(1.2).unwrap();
        let report = validate_admissible(&sched, 62).unwrap();
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn identity_fails_growth() {
        let report =
            validate_admissible_fn(&|i| Some(i as i64 + 1), 1.5, 21, 100).unwrap();
        let growth = &report.conditions[0];
        assert!(!growth.pass);
        let (inputs, _, _) = growth.counterexample.as_ref().unwrap();
        assert_eq!(inputs, "i=21");
    }

    #[test]
    fn gen_sites_variants() {
        let sched = SiteSchedule::power2(1.2).unwrap();
        assert_eq!(sched.gen_sites(10).unwrap(), vec![1, 2, 4, 8]);

        let neg = SiteSchedule::new(
            ScheduleKind::Power2,
            1.2,
            21,
            SignVariant::NegS1,
            Vec::new(),
        )
        .unwrap();
        assert_eq!(neg.gen_sites(10).unwrap(), vec![-8, -4, -2, -1]);

        let with_prefix = SiteSchedule::new(
            ScheduleKind::Power2,
            1.2,
            21,
            SignVariant::S1UnionS0,
            vec![0],
        )
        .unwrap();
        assert_eq!(with_prefix.gen_sites(10).unwrap(), vec![0, 1, 2, 4, 8]);

        let sym = SiteSchedule::new(
            ScheduleKind::Power2,
            1.2,
            21,
            SignVariant::NegS1UnionS2UnionS0,
            vec![0],
        )
        .unwrap();
        assert_eq!(
            sym.gen_sites(4).unwrap(),
            vec![-4, -2, -1, 0, 1, 2, 4]
        );
    }

    #[test]
    fn site_count_matches_log2() {
        let sched = SiteSchedule::power2(1.2).unwrap();
        for cutoff in [1, 3, 10, 17, 64, 100] {
            let count = sched.gen_sites(cutoff).unwrap().len();
            let expected = (cutoff as f64).log2().floor() as usize + 1;
            // brute-force count of powers of two in [1, J]
            let brute = (0..63).filter(|&i| (1i64 << i) <= cutoff as i64).count();
            assert_eq!(count, brute);
            assert_eq!(count, expected);
        }
    }
}
