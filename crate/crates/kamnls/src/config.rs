//! Run configuration: a TOML file carrying truncation, schedule,
//! nonlinearity, Diophantine, norm, action, frequency-sampling and
//! tolerance blocks. All range constraints of the referenced modules are
//! re-validated at load.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::hamops::{build_nls, ActionVector, Hamiltonian, DEFAULT_MONOMIAL_CEILING};
use crate::homological::FrequencyVector;
use crate::kamflow::{KamContext, Schedules};
use crate::sites::{ScheduleKind, SignVariant, SiteSchedule};
use crate::smalldiv::{check_diophantine, enumerate_resonant, DiophParams};
use crate::spaces::{jjap, Mode};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub truncation: Truncation,
    pub schedule: ScheduleBlock,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    pub dioph: Dioph,
    pub norms: Norms,
    #[serde(default)]
    pub actions: Actions,
    #[serde(default)]
    pub omega: OmegaBlock,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub j: Mode,
    pub d: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleBlock {
    pub kind: ScheduleKind,
    pub eta: f64,
    #[serde(default = "default_i_star")]
    pub i_star: u32,
    #[serde(default = "default_variant")]
    pub variant: SignVariant,
    #[serde(default)]
    pub s0: Vec<i64>,
}

fn default_i_star() -> u32 {
    21
}

fn default_variant() -> SignVariant {
    SignVariant::S1
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Nonlinearity {
    /// Pairs `(d, f^(d))`, `d >= 1`.
    #[serde(default)]
    pub fcoeffs: Vec<(u32, f64)>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_ceiling")]
    pub monomial_ceiling: u64,
}

fn default_radius() -> f64 {
    1.0
}

fn default_ceiling() -> u64 {
    DEFAULT_MONOMIAL_CEILING
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dioph {
    pub gamma: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    1.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Norms {
    pub r0: f64,
    pub p0: f64,
    pub rho: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Actions {
    /// Explicit `(site, I_site)` values.
    #[serde(default)]
    pub values: Vec<(Mode, f64)>,
    /// Alternatively `sqrt(I_s) = scale * <<s>>^{-p_star}` on the listed support.
    #[serde(default)]
    pub rule_support: Vec<Mode>,
    #[serde(default)]
    pub rule_scale: f64,
    #[serde(default)]
    pub rule_p_star: f64,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OmegaBlock {
    #[serde(default)]
    pub seed: u64,
    /// Fourier multiplier on normal modes, `(j, V_j)` with `|V_j| <= 1/4`.
    #[serde(default)]
    pub v_normal: Vec<(Mode, f64)>,
    /// Maximum number of tangential draws scanned for a Diophantine vector.
    #[serde(default = "default_max_draws")]
    pub max_draws: u64,
}

fn default_max_draws() -> u64 {
    256
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Resonant-set enumeration bound `|l| <= lmax`.
    #[serde(default)]
    pub lmax: i64,
    #[serde(default)]
    pub prune_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol: default_tol(),
            max_steps: default_max_steps(),
            lmax: 0,
            prune_threshold: 0.0,
        }
    }
}

fn default_tol() -> f64 {
    1e-12
}

fn default_max_steps() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default)]
    pub dir: String,
}

/// A validated configuration with the constructed domain objects.
#[derive(Debug)]
pub struct ValidatedConfig {
    pub config: RunConfig,
    pub schedule: SiteSchedule,
    pub sites: BTreeSet<Mode>,
    pub schedules: Schedules,
    pub dioph: DiophParams,
    pub actions: ActionVector,
    pub v_normal: BTreeMap<Mode, f64>,
    pub lmax: i64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(self) -> Result<ValidatedConfig> {
        if self.truncation.j < 1 {
            return Err(Error::Config("truncation.j must be >= 1".into()));
        }
        if !(self.schedule.eta > 1.0 && self.schedule.eta <= 2.0) {
            return Err(Error::Config(format!(
                "eta must lie in (1,2], got {}",
                self.schedule.eta
            )));
        }
        if self.schedule.i_star < 21 {
            return Err(Error::Config(format!(
                "i_star must be >= 21, got {}",
                self.schedule.i_star
            )));
        }
        let schedule = SiteSchedule::new(
            self.schedule.kind,
            self.schedule.eta,
            self.schedule.i_star,
            self.schedule.variant,
            self.schedule.s0.clone(),
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let sites: BTreeSet<Mode> = schedule
            .gen_sites(self.truncation.j)
            .map_err(|e| Error::Config(e.to_string()))?
            .into_iter()
            .collect();
        let schedules = Schedules::new(
            self.norms.r0,
            self.norms.p0,
            self.norms.rho,
            self.norms.delta,
            self.schedule.eta,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let dioph = DiophParams::new(self.dioph.gamma, self.dioph.tau, schedule.clone())
            .map_err(|e| Error::Config(e.to_string()))?;

        let mut action_pairs: Vec<(Mode, f64)> = self.actions.values.clone();
        for &s in &self.actions.rule_support {
            let sqrt_i =
                self.actions.rule_scale * (jjap(s) as f64).powf(-self.actions.rule_p_star);
            action_pairs.push((s, sqrt_i * sqrt_i));
        }
        let actions =
            ActionVector::new(action_pairs, &sites).map_err(|e| Error::Config(e.to_string()))?;
        // the actions must lie in the ball I(p, r) with p = p0 + delta shape
        // and r = r0 / 2 (the working radius of the scheme)
        actions
            .check_ball(self.norms.p0 + self.norms.delta, self.norms.r0 / 2.0)
            .map_err(|e| Error::Config(e.to_string()))?;

        let mut v_normal = BTreeMap::new();
        for &(j, vj) in &self.omega.v_normal {
            if vj.abs() > 0.25 {
                return Err(Error::Config(format!(
                    "|V_j| <= 1/4 violated at mode {j}: {vj}"
                )));
            }
            v_normal.insert(j, vj);
        }
        let lmax = if self.tolerances.lmax > 0 {
            self.tolerances.lmax
        } else {
            2 * self.truncation.d as i64 + 2
        };
        Ok(ValidatedConfig {
            config: self,
            schedule,
            sites,
            schedules,
            dioph,
            actions,
            v_normal,
            lmax,
        })
    }
}

impl ValidatedConfig {
    /// Scans seeded tangential draws `nu_s = s^2 + U(-1/2, 1/2)` until one
    /// satisfies the Diophantine condition over the truncated resonant set.
    pub fn sample_diophantine_omega(&self) -> Result<(FrequencyVector, u64)> {
        let j = self.config.truncation.j;
        let resonant = enumerate_resonant(j, self.lmax, &self.sites)?;
        for draw in 0..self.config.omega.max_draws {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.omega.seed);
            rng.set_stream(draw);
            let mut shift: BTreeMap<Mode, f64> = self
                .sites
                .iter()
                .map(|&s| (s, rng.gen_range(-0.5f64..0.5)))
                .collect();
            for (&m, &vj) in &self.v_normal {
                shift.insert(m, vj);
            }
            let omega = FrequencyVector::from_shift(&shift, j, self.sites.clone())?;
            let w = omega.clone();
            let omega_fn = move |m: Mode| w.get(m);
            let report = check_diophantine(&omega_fn, &self.dioph, &resonant, &self.sites);
            if report.pass {
                return Ok((omega, draw));
            }
        }
        Err(Error::Divergence(format!(
            "no Diophantine draw found in {} attempts",
            self.config.omega.max_draws
        )))
    }

    /// Builds the truncated NLS Hamiltonian with the sampled frequencies in
    /// place of the unperturbed quadratic part.
    pub fn build_hamiltonian(&self, omega: &FrequencyVector) -> Result<Hamiltonian> {
        let j = self.config.truncation.j;
        let h_nls = build_nls(
            &self.config.nonlinearity.fcoeffs,
            &self.v_normal,
            j,
            self.config.truncation.d,
            self.config.norms.r0,
            self.config.norms.p0,
            self.config.nonlinearity.monomial_ceiling,
        )?;
        let template = h_nls.like();
        let unperturbed: BTreeMap<Mode, f64> = (-j..=j)
            .map(|m| {
                (
                    m,
                    (m as f64) * (m as f64) + self.v_normal.get(&m).copied().unwrap_or(0.0),
                )
            })
            .collect();
        let quad = crate::hamops::diagonal(&unperturbed, &template)?;
        let sampled = crate::hamops::diagonal(omega.entries(), &template)?;
        h_nls.sub(&quad)?.add(&sampled)
    }

    pub fn kam_context(&self, omega: FrequencyVector) -> KamContext {
        KamContext {
            omega,
            actions: self.actions.clone(),
            gamma: self.dioph.gamma,
            tau: self.dioph.tau,
            schedule: self.schedule.clone(),
            schedules: self.schedules.clone(),
            prune_threshold: self.config.tolerances.prune_threshold,
        }
    }

    /// Normalized echo of the configuration for `validate`.
    pub fn echo(&self) -> String {
        let c = &self.config;
        format!(
            "truncation: J={} D={}\nschedule: kind={:?} eta={} i_star={} variant={:?} s0={:?}\n\
             sites in [-J,J]: {:?}\nnonlinearity: fcoeffs={:?} radius={}\n\
             dioph: gamma={} tau={}\nnorms: r0={} p0={} rho={} delta={}\n\
             actions: {:?}\nomega: seed={} v_normal={:?}\ntolerances: tol={} max_steps={} lmax={}\n",
            c.truncation.j,
            c.truncation.d,
            c.schedule.kind,
            c.schedule.eta,
            c.schedule.i_star,
            c.schedule.variant,
            c.schedule.s0,
            self.sites,
            c.nonlinearity.fcoeffs,
            c.nonlinearity.radius,
            c.dioph.gamma,
            c.dioph.tau,
            c.norms.r0,
            c.norms.p0,
            c.norms.rho,
            c.norms.delta,
            self.actions.iter().collect::<Vec<_>>(),
            c.omega.seed,
            c.omega.v_normal,
            c.tolerances.tol,
            c.tolerances.max_steps,
            self.lmax,
        )
    }
}
