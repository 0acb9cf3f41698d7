//! Shared generators and oracles for the integration suites.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use rwpe::environment::{Environment, JumpLaw, TorusDims, DEFAULT_TOLERANCE};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One-dimensional environment from per-site up-probabilities.
pub fn env_1d(probs_up: &[f64]) -> Environment {
    let dims = TorusDims::new(vec![probs_up.len() as i64]).unwrap();
    let laws = probs_up
        .iter()
        .map(|&a| JumpLaw::new(vec![(vec![1], a), (vec![-1], 1.0 - a)], 1e-12).unwrap())
        .collect();
    Environment::new(dims, laws, DEFAULT_TOLERANCE).unwrap()
}

/// All nonzero steps of the cube `{-1, 0, 1}^d` that are not unit vectors,
/// plus the zero step.
fn extra_cube_steps(d: usize) -> Vec<Vec<i64>> {
    let mut steps = Vec::new();
    let n = 3usize.pow(d as u32);
    for code in 0..n {
        let mut c = code;
        let mut step = vec![0i64; d];
        for s in step.iter_mut() {
            *s = (c % 3) as i64 - 1;
            c /= 3;
        }
        let abs_sum: i64 = step.iter().map(|v| v.abs()).sum();
        if abs_sum != 1 {
            steps.push(step);
        }
    }
    steps
}

/// Random irreducible environment: d <= 3, extents <= 4, support inside
/// the cube `{-1, 0, 1}^d`. Every unit step gets weight at least 0.05,
/// which makes the induced chain irreducible.
pub fn random_environment(rng: &mut ChaCha8Rng) -> Environment {
    random_environment_impl(rng, false)
}

/// Like [`random_environment`] but with a guaranteed zero-step (laziness)
/// weight, which makes the induced chain aperiodic.
pub fn random_aperiodic_environment(rng: &mut ChaCha8Rng) -> Environment {
    random_environment_impl(rng, true)
}

fn random_environment_impl(rng: &mut ChaCha8Rng, force_lazy: bool) -> Environment {
    let d = rng.random_range(1..=3usize);
    let dims = TorusDims::new((0..d).map(|_| rng.random_range(1..=4i64)).collect()).unwrap();
    let laws = (0..dims.torus_size())
        .map(|_| random_cube_law(rng, d, force_lazy))
        .collect();
    Environment::new(dims, laws, DEFAULT_TOLERANCE).unwrap()
}

fn random_cube_law(rng: &mut ChaCha8Rng, d: usize, force_lazy: bool) -> JumpLaw {
    let mut entries: Vec<(Vec<i64>, f64)> = Vec::new();
    for axis in 0..d {
        for sign in [1i64, -1] {
            let mut step = vec![0i64; d];
            step[axis] = sign;
            entries.push((step, rng.random_range(0.05..1.0)));
        }
    }
    for step in extra_cube_steps(d) {
        let is_zero = step.iter().all(|&v| v == 0);
        // short-circuit: a forced zero-step consumes no inclusion draw
        if (force_lazy && is_zero) || rng.random_range(0.0..1.0) < 0.3 {
            entries.push((step, rng.random_range(0.05..1.0)));
        }
    }
    JumpLaw::renormalized(entries).unwrap()
}

/// Random jump law on a single-site torus, i.e. an i.i.d. walk.
pub fn random_single_site_environment(rng: &mut ChaCha8Rng) -> Environment {
    let d = rng.random_range(1..=3usize);
    let dims = TorusDims::new(vec![1; d]).unwrap();
    let law = random_cube_law(rng, d, false);
    Environment::new(dims, vec![law], DEFAULT_TOLERANCE).unwrap()
}

/// Symmetric nearest-neighbour walk on `Z^2` as a single-site environment.
pub fn srw_2d() -> Environment {
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

/// Random 1-D nearest-neighbour environment with moderate per-site bias.
pub fn random_1d_environment(rng: &mut ChaCha8Rng) -> Environment {
    let m = rng.random_range(1..=4usize);
    let probs: Vec<f64> = (0..m).map(|_| rng.random_range(0.35..0.65)).collect();
    env_1d(&probs)
}

/// Exit probabilities of the absorbing chain on `(-K, K)`: component
/// `x + K - 1` is the probability of hitting `+K` before `-K` from `x`.
/// Solves `h = Q h + b` directly, independent of the product formula.
pub fn absorbing_exit_solve(env: &Environment, big_k: i64) -> Vec<f64> {
    let m = (2 * big_k - 1) as usize;
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for row in 0..m {
        let x = row as i64 - (big_k - 1);
        let idx = env.dims().canonical_index(&[x]).unwrap();
        let up = env.law(idx).prob_of(&[1]);
        let down = env.law(idx).prob_of(&[-1]);
        if x + 1 == big_k {
            b[row] += up;
        } else {
            a[(row, row + 1)] -= up;
        }
        if x - 1 > -big_k {
            a[(row, row - 1)] -= down;
        }
    }
    let h = a.lu().solve(&b).expect("absorbing system is nonsingular");
    h.iter().cloned().collect()
}

/// Two-sample chi-square homogeneity test.
///
/// Categories whose pooled count would give an expected cell count below 5
/// are merged into one remainder bin. Returns `(statistic, threshold)` at
/// the given significance; equality of the two samplers is accepted when
/// `statistic <= threshold`.
pub fn chi_square_two_sample(
    counts_a: &BTreeMap<Vec<i64>, u64>,
    counts_b: &BTreeMap<Vec<i64>, u64>,
    significance: f64,
) -> (f64, f64) {
    let n_a: u64 = counts_a.values().sum();
    let n_b: u64 = counts_b.values().sum();
    assert!(n_a > 0 && n_b > 0);
    let total = (n_a + n_b) as f64;
    let frac_a = n_a as f64 / total;
    let frac_b = n_b as f64 / total;

    let mut keys: Vec<&Vec<i64>> = counts_a.keys().chain(counts_b.keys()).collect();
    keys.sort();
    keys.dedup();

    // minimum pooled count so that both expected cells are >= 5
    let min_pooled = (5.0 / frac_a.min(frac_b)).ceil() as u64;
    let mut bins: Vec<(u64, u64)> = Vec::new();
    let mut rest = (0u64, 0u64);
    for key in keys {
        let a = counts_a.get(key).copied().unwrap_or(0);
        let b = counts_b.get(key).copied().unwrap_or(0);
        if a + b >= min_pooled {
            bins.push((a, b));
        } else {
            rest.0 += a;
            rest.1 += b;
        }
    }
    if rest.0 + rest.1 >= min_pooled {
        bins.push(rest);
    } else if rest.0 + rest.1 > 0 {
        // too small for its own bin: fold into the last one
        let last = bins.last_mut().expect("at least one full bin");
        last.0 += rest.0;
        last.1 += rest.1;
    }
    assert!(
        bins.len() >= 2,
        "need at least two usable bins, got {}",
        bins.len()
    );

    let mut stat = 0.0;
    for &(a, b) in &bins {
        let pooled = (a + b) as f64;
        let e_a = pooled * frac_a;
        let e_b = pooled * frac_b;
        stat += (a as f64 - e_a).powi(2) / e_a + (b as f64 - e_b).powi(2) / e_b;
    }
    let dof = (bins.len() - 1) as f64;
    let threshold = ChiSquared::new(dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - significance);
    (stat, threshold)
}
