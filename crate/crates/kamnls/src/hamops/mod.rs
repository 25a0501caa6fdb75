//! Sparse multi-index Hamiltonian polynomial algebra: monomials under mass
//! and momentum conservation, majorant norms, Poisson brackets, Lie-series
//! flows, degree and kernel/range projections, and the truncated NLS
//! Hamiltonian.

pub mod hamiltonian;
pub mod multiindex;
pub mod nls;
pub mod poisson;
pub mod project;

pub use hamiltonian::{diagonal, Hamiltonian, MonomialKey};
pub use multiindex::{mass, momentum, MultiIndex};
pub use nls::{build_nls, f_radius_norm, DEFAULT_MONOMIAL_CEILING};
pub use poisson::{
    generator_threshold, lie_transform, lie_transform_auto, poisson, poisson_filtered,
    LieTransform,
};
pub use project::{
    kernel_quadratic, kernel_quadratic_sup, lambda_embed, normal_degree, project_degree,
    project_kernel, project_upto, ActionVector,
};

#[cfg(test)]
pub(crate) mod testutil {
    use num_complex::Complex64;
    use rand::Rng;

    use super::multiindex::{momentum, MultiIndex};
    use super::Hamiltonian;
    use crate::spaces::Mode;

    /// Random conserved Hamiltonian with `terms` monomials of degree 2 or 4.
    pub fn random_ham(rng: &mut impl Rng, template: &Hamiltonian, terms: usize) -> Hamiltonian {
        let cut = template.mode_cutoff();
        let mut h = template.like();
        let mut added = 0usize;
        while added < terms {
            let deg = rng.gen_range(1..=2u32);
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
}
