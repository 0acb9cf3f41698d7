//! Exact asymptotic law of the walk: drift vector and diffusion matrix.
//!
//! The drift is the stationary average of the jump means. The diffusion
//! matrix is the stationary one-step jump covariance plus an
//! autocovariance correction contracted through the fundamental matrix
//! `Z = (I - P + Pi)^{-1}`, where `Pi` is the rank-one projector onto the
//! stationary distribution. `Z` stands in for the singular `(I - P)^{-1}`:
//! both vectors it is applied to here have zero stationary mean, on which
//! subspace `Z` agrees with the Cesaro sum of `P^n - Pi`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::environment::Environment;
use crate::induced_chain::InducedChain;

/// Tolerance for the agreement of the two algebraic drift forms.
pub const DRIFT_FORM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error("the two drift forms disagree by {defect:e} (tolerance {tolerance:e})")]
    DriftFormMismatch { defect: f64, tolerance: f64 },
    #[error("fundamental matrix solve failed: I - P + Pi is numerically singular")]
    SingularFundamental,
}

impl AsymptoticsError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::DriftFormMismatch { .. } => "E_DRIFT_FORMS",
            Self::SingularFundamental => "E_SINGULAR_FUNDAMENTAL",
        }
    }
}

/// Almost-sure drift of the walk.
///
/// Computed as the stationary average of the unconditional mean jumps, and
/// cross-checked against the equivalent contraction of the conditional
/// jump means through `P`; a mismatch beyond [`DRIFT_FORM_TOL`] signals an
/// internal inconsistency.
pub fn drift(env: &Environment, chain: &InducedChain) -> Result<DVector<f64>, AsymptoticsError> {
    let d = env.d();
    let n = chain.n_states();
    let pi = chain.stationary();
    let p = chain.transition_matrix();

    let mut site_form = DVector::zeros(d);
    for x in 0..n {
        let mean = env.law(x).mean_jump();
        for i in 0..d {
            site_form[i] += pi[x] * mean[i];
        }
    }

    let mut pair_form = DVector::zeros(d);
    for x in 0..n {
        for y in 0..n {
            let w = pi[x] * p[(x, y)];
            if w != 0.0 {
                let mu = chain.jump_mean(x, y);
                for i in 0..d {
                    pair_form[i] += w * mu[i];
                }
            }
        }
    }

    let defect = (&site_form - &pair_form).amax();
    if defect > DRIFT_FORM_TOL {
        return Err(AsymptoticsError::DriftFormMismatch {
            defect,
            tolerance: DRIFT_FORM_TOL,
        });
    }
    Ok(site_form)
}

/// Fundamental matrix `Z = (I - P + Pi)^{-1}` with `Pi` the matrix whose
/// every row is the stationary distribution.
pub fn fundamental_matrix(
    p: &DMatrix<f64>,
    pi: &DVector<f64>,
) -> Result<DMatrix<f64>, AsymptoticsError> {
    let n = p.nrows();
    let mut a = DMatrix::identity(n, n) - p;
    for x in 0..n {
        for y in 0..n {
            a[(x, y)] += pi[y];
        }
    }
    a.lu()
        .try_inverse()
        .ok_or(AsymptoticsError::SingularFundamental)
}

/// Stationary covariance of one jump, centered at the drift:
/// `F_ij = sum_x pi(x) sum_w p_x(w) (w_i - nu_i)(w_j - nu_j)`.
fn jump_covariance_term(env: &Environment, chain: &InducedChain, nu: &DVector<f64>) -> DMatrix<f64> {
    let d = env.d();
    let pi = chain.stationary();
    let mut f = DMatrix::zeros(d, d);
    for x in 0..chain.n_states() {
        for (step, prob) in env.law(x).entries() {
            let w = pi[x] * prob;
            for i in 0..d {
                let ci = step[i] as f64 - nu[i];
                for j in 0..d {
                    let cj = step[j] as f64 - nu[j];
                    f[(i, j)] += w * ci * cj;
                }
            }
        }
    }
    f
}

/// Left contraction `L[y][i] = sum_x pi(x) P_xy (mu_xy[i] - nu_i)`.
fn centered_left_weights(chain: &InducedChain, nu: &DVector<f64>) -> DMatrix<f64> {
    let n = chain.n_states();
    let d = nu.len();
    let pi = chain.stationary();
    let p = chain.transition_matrix();
    let mut l = DMatrix::zeros(n, d);
    for x in 0..n {
        for y in 0..n {
            let w = pi[x] * p[(x, y)];
            if w != 0.0 {
                let mu = chain.jump_mean(x, y);
                for i in 0..d {
                    l[(y, i)] += w * (mu[i] - nu[i]);
                }
            }
        }
    }
    l
}

/// Right contraction `H[z][j] = sum_w P_zw (mu_zw[j] - nu_j)`; each column
/// has zero stationary mean, which is what justifies applying `Z` to it.
fn centered_right_sums(chain: &InducedChain, nu: &DVector<f64>) -> DMatrix<f64> {
    let n = chain.n_states();
    let d = nu.len();
    let p = chain.transition_matrix();
    let mut h = DMatrix::zeros(n, d);
    for z in 0..n {
        for w in 0..n {
            let pw = p[(z, w)];
            if pw != 0.0 {
                let mu = chain.jump_mean(z, w);
                for j in 0..d {
                    h[(z, j)] += pw * (mu[j] - nu[j]);
                }
            }
        }
    }
    h
}

/// Diffusion matrix of the Gaussian limit of `(X_n - n nu) / sqrt(n)`.
pub fn diffusion_matrix(
    env: &Environment,
    chain: &InducedChain,
    nu: &DVector<f64>,
) -> Result<DMatrix<f64>, AsymptoticsError> {
    let z = fundamental_matrix(chain.transition_matrix(), chain.stationary())?;
    Ok(diffusion_with_fundamental(env, chain, nu, &z))
}

/// Diffusion matrix given a precomputed fundamental matrix.
///
/// The analytic double sum is symmetric; the result is symmetrized to
/// remove rounding asymmetry of order machine epsilon.
pub fn diffusion_with_fundamental(
    env: &Environment,
    chain: &InducedChain,
    nu: &DVector<f64>,
    z: &DMatrix<f64>,
) -> DMatrix<f64> {
    let f = jump_covariance_term(env, chain, nu);
    let l = centered_left_weights(chain, nu);
    let h = centered_right_sums(chain, nu);
    let correction = l.transpose() * z * h;
    let sigma = f + 2.0 * correction;
    0.5 * (&sigma + sigma.transpose())
}

/// Truncated autocovariance-series form of the diffusion matrix, an
/// independent oracle for [`diffusion_matrix`].
///
/// Sums `n_terms` lag terms of the stationary jump autocovariance via
/// repeated application of `P`. For aperiodic chains the partial sums
/// converge geometrically and the plain truncation is returned; for
/// periodic chains the partial sums oscillate and their Cesaro average is
/// returned instead.
pub fn green_kubo_truncated(
    env: &Environment,
    chain: &InducedChain,
    nu: &DVector<f64>,
    n_terms: usize,
) -> DMatrix<f64> {
    let d = env.d();
    let f = jump_covariance_term(env, chain, nu);
    let l = centered_left_weights(chain, nu);
    let mut h = centered_right_sums(chain, nu);
    let p = chain.transition_matrix();
    let cesaro = chain.period() > 1;

    let mut acc = DMatrix::zeros(d, d);
    for m in 0..n_terms {
        // lag-(m+1) term: L^T P^m H
        let term = l.transpose() * &h;
        let weight = if cesaro {
            (n_terms - m) as f64 / (n_terms + 1) as f64
        } else {
            1.0
        };
        acc += term * (2.0 * weight);
        if m + 1 < n_terms {
            h = p * h;
        }
    }
    let sigma = f + acc;
    0.5 * (&sigma + sigma.transpose())
}

/// Bundle of the exact asymptotic objects for one environment.
#[derive(Debug, Clone)]
pub struct AsymptoticSummary {
    pub nu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub z: DMatrix<f64>,
    /// True when the induced chain is periodic: the stationary formulas
    /// remain valid, but classical statements assume aperiodicity.
    pub aperiodic_warning: bool,
}

impl AsymptoticSummary {
    pub fn compute(env: &Environment, chain: &InducedChain) -> Result<Self, AsymptoticsError> {
        let nu = drift(env, chain)?;
        let z = fundamental_matrix(chain.transition_matrix(), chain.stationary())?;
        let sigma = diffusion_with_fundamental(env, chain, &nu, &z);
        Ok(Self {
            nu,
            sigma,
            z,
            aperiodic_warning: chain.period() > 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{
        make_counterexample, Environment, JumpLaw, TorusDims, DEFAULT_TOLERANCE,
    };

    fn period_two_env(a: f64, b: f64) -> Environment {
        let dims = TorusDims::new(vec![2]).unwrap();
        let laws = vec![
            JumpLaw::new(vec![(vec![1], a), (vec![-1], 1.0 - a)], 1e-12).unwrap(),
            JumpLaw::new(vec![(vec![1], b), (vec![-1], 1.0 - b)], 1e-12).unwrap(),
        ];
        Environment::new(dims, laws, DEFAULT_TOLERANCE).unwrap()
    }

    fn circulant_env(a: &[f64]) -> Environment {
        let dims = TorusDims::new(vec![a.len() as i64]).unwrap();
        let laws = a
            .iter()
            .map(|&ax| JumpLaw::new(vec![(vec![1], ax), (vec![-1], 1.0 - ax)], 1e-12).unwrap())
            .collect();
        Environment::new(dims, laws, DEFAULT_TOLERANCE).unwrap()
    }

    fn srw2d() -> Environment {
        let dims = TorusDims::new(vec![1, 1]).unwrap();
        let law = JumpLaw::new(
            vec![
                (vec![1, 0], 0.25),
                (vec![-1, 0], 0.25),
                (vec![0, 1], 0.25),
                (vec![0, -1], 0.25),
            ],
            1e-12,
        )
        .unwrap();
        Environment::new(dims, vec![law], DEFAULT_TOLERANCE).unwrap()
    }

    #[test]
    fn drift_srw_is_zero() {
        let env = srw2d();
        let chain = InducedChain::from_env(&env).unwrap();
        let nu = drift(&env, &chain).unwrap();
        assert_eq!(nu[0], 0.0);
        assert_eq!(nu[1], 0.0);
    }

    #[test]
    fn drift_counterexample_closed_form() {
        let (k, eps) = (2.0, 0.1);
        let env = make_counterexample(k, eps).unwrap();
        let chain = InducedChain::from_env(&env).unwrap();
        let nu = drift(&env, &chain).unwrap();
        assert!((nu[0] - (k - 1.0) * eps).abs() < 1e-15);
        assert!((nu[1] - (1.0 - (k + 1.0) * eps) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn drift_period_two_closed_form() {
        let (a, b) = (0.7, 0.6);
        let env = period_two_env(a, b);
        let chain = InducedChain::from_env(&env).unwrap();
        let nu = drift(&env, &chain).unwrap();
        assert!((nu[0] - (a + b - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn fundamental_matrix_single_state() {
        let p = DMatrix::from_row_slice(1, 1, &[1.0]);
        let pi = DVector::from_row_slice(&[1.0]);
        let z = fundamental_matrix(&p, &pi).unwrap();
        assert!((z[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fundamental_matrix_parity_chain_pinned() {
        // I - P + Pi = [[1.5, -0.5], [-0.5, 1.5]], inverse [[0.75, 0.25], [0.25, 0.75]]
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let pi = DVector::from_row_slice(&[0.5, 0.5]);
        let z = fundamental_matrix(&p, &pi).unwrap();
        assert!((z[(0, 0)] - 0.75).abs() < 1e-14);
        assert!((z[(0, 1)] - 0.25).abs() < 1e-14);
        assert!((z[(1, 0)] - 0.25).abs() < 1e-14);
        assert!((z[(1, 1)] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn fundamental_matrix_identities() {
        let env = circulant_env(&[0.9, 0.5, 0.2]);
        let chain = InducedChain::from_env(&env).unwrap();
        let p = chain.transition_matrix();
        let pi = chain.stationary();
        let z = fundamental_matrix(p, pi).unwrap();

        // Z (I - P + Pi) = I
        let n = p.nrows();
        let mut a = DMatrix::identity(n, n) - p;
        for x in 0..n {
            for y in 0..n {
                a[(x, y)] += pi[y];
            }
        }
        let residual = (&z * a - DMatrix::identity(n, n)).amax();
        assert!(residual < 1e-10, "residual {residual}");

        // pi Z = pi
        let left = z.transpose() * pi;
        for x in 0..n {
            assert!((left[x] - pi[x]).abs() < 1e-12);
        }

        // Z h equals the Cesaro sum of (P^n - Pi) h for centered h
        let h = DVector::from_fn(n, |i, _| (i as f64) - 1.0);
        let centered = &h - DVector::from_element(n, pi.dot(&h));
        let mut partial = DVector::zeros(n);
        let mut power = centered.clone();
        let pi_row = DVector::from_fn(n, |i, _| pi[i]);
        for _ in 0..2000 {
            let proj = pi_row.dot(&power);
            partial += &power - DVector::from_element(n, proj);
            power = p * power;
        }
        let zh = &z * &centered;
        assert!((zh - partial).amax() < 1e-9);
    }

    #[test]
    fn diffusion_srw_is_half_identity() {
        let env = srw2d();
        let chain = InducedChain::from_env(&env).unwrap();
        let nu = drift(&env, &chain).unwrap();
        let sigma = diffusion_matrix(&env, &chain, &nu).unwrap();
        assert!((sigma[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((sigma[(1, 1)] - 0.5).abs() < 1e-15);
        assert!(sigma[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn diffusion_single_state_is_jump_covariance() {
        let env = make_counterexample(2.0, 0.1).unwrap();
        let chain = InducedChain::from_env(&env).unwrap();
        let nu = drift(&env, &chain).unwrap();
        let sigma = diffusion_matrix(&env, &chain, &nu).unwrap();
        // direct covariance of one jump
        let law = env.law(0);
        let mean = law.mean_jump();
        let mut cov = DMatrix::zeros(2, 2);
        for (step, p) in law.entries() {
            for i in 0..2 {
                for j in 0..2 {
                    cov[(i, j)] +=
                        p * (step[i] as f64 - mean[i]) * (step[j] as f64 - mean[j]);
                }
            }
        }
        assert!((sigma - cov).amax() < 1e-14);
    }

    #[test]
    fn diffusion_period_two_frozen_value() {
        // independent two-step blocks give Var(X_2)/2 = (0.84 + 0.96)/2 = 0.9
        let env = period_two_env(0.7, 0.6);
        let chain = InducedChain::from_env(&env).unwrap();
        let nu = drift(&env, &chain).unwrap();
        let sigma = diffusion_matrix(&env, &chain, &nu).unwrap();
        assert!((sigma[(0, 0)] - 0.9).abs() < 1e-13, "got {}", sigma[(0, 0)]);
    }

    #[test]
    fn green_kubo_zero_terms_is_first_term() {
        let env = circulant_env(&[0.9, 0.5, 0.2]);
        let chain = InducedChain::from_env(&env).unwrap();
        let nu = drift(&env, &chain).unwrap();
        let gk0 = green_kubo_truncated(&env, &chain, &nu, 0);
        let f = jump_covariance_term(&env, &chain, &nu);
        assert!((gk0 - f).amax() < 1e-15);
    }

    #[test]
    fn green_kubo_single_state_equals_diffusion() {
        let env = make_counterexample(3.0, 0.05).unwrap();
        let chain = InducedChain::from_env(&env).unwrap();
        let nu = drift(&env, &chain).unwrap();
        let sigma = diffusion_matrix(&env, &chain, &nu).unwrap();
        for n_terms in [0, 1, 7] {
            let gk = green_kubo_truncated(&env, &chain, &nu, n_terms);
            assert!((&gk - &sigma).amax() < 1e-15);
        }
    }

    #[test]
    fn green_kubo_aperiodic_converges_to_diffusion() {
        let env = circulant_env(&[0.9, 0.5, 0.2]);
        let chain = InducedChain::from_env(&env).unwrap();
        assert_eq!(chain.period(), 1);
        let nu = drift(&env, &chain).unwrap();
        let sigma = diffusion_matrix(&env, &chain, &nu).unwrap();
        let gk = green_kubo_truncated(&env, &chain, &nu, 200);
        assert!((gk - &sigma).amax() < 1e-10);
    }

    #[test]
    fn green_kubo_periodic_uses_cesaro() {
        let env = period_two_env(0.7, 0.6);
        let chain = InducedChain::from_env(&env).unwrap();
        assert_eq!(chain.period(), 2);
        let nu = drift(&env, &chain).unwrap();
        let sigma = diffusion_matrix(&env, &chain, &nu).unwrap();
        let gk = green_kubo_truncated(&env, &chain, &nu, 2000);
        assert!(
            (gk[(0, 0)] - sigma[(0, 0)]).abs() < 1e-2,
            "cesaro {} vs exact {}",
            gk[(0, 0)],
            sigma[(0, 0)]
        );
    }

    #[test]
    fn summary_carries_period_warning() {
        let env = period_two_env(0.7, 0.6);
        let chain = InducedChain::from_env(&env).unwrap();
        let summary = AsymptoticSummary::compute(&env, &chain).unwrap();
        assert!(summary.aperiodic_warning);
        assert!((summary.sigma[(0, 0)] - 0.9).abs() < 1e-13);

        let env = srw2d();
        let chain = InducedChain::from_env(&env).unwrap();
        let summary = AsymptoticSummary::compute(&env, &chain).unwrap();
        assert!(!summary.aperiodic_warning);
    }

    #[test]
    fn translation_leaves_nu_sigma_invariant() {
        let env = circulant_env(&[0.9, 0.5, 0.2]);
        let chain = InducedChain::from_env(&env).unwrap();
        let s = AsymptoticSummary::compute(&env, &chain).unwrap();
        let shifted = env.translated(&[2]).unwrap();
        let shifted_chain = InducedChain::from_env(&shifted).unwrap();
        let ss = AsymptoticSummary::compute(&shifted, &shifted_chain).unwrap();
        assert!((&s.nu - &ss.nu).amax() < 1e-10);
        assert!((&s.sigma - &ss.sigma).amax() < 1e-10);
    }

    #[test]
    fn reflection_negates_nu_preserves_sigma() {
        let env = period_two_env(0.7, 0.6);
        let chain = InducedChain::from_env(&env).unwrap();
        let s = AsymptoticSummary::compute(&env, &chain).unwrap();
        let refl = env.reflected();
        let refl_chain = InducedChain::from_env(&refl).unwrap();
        let sr = AsymptoticSummary::compute(&refl, &refl_chain).unwrap();
        assert!((&s.nu + &sr.nu).amax() < 1e-12);
        assert!((&s.sigma - &sr.sigma).amax() < 1e-12);
    }
}
