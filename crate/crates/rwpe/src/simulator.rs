//! Seeded Monte Carlo for walks in periodic environments.
//!
//! Every stochastic routine takes a `seed` and derives one ChaCha8 stream
//! per replica ([`RngStream`]), so results are reproducible bit for bit no
//! matter how replicas are scheduled. With the `parallel` feature replicas
//! run on the rayon pool; the order-preserving collect keeps the output
//! identical to the sequential fallback.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

use crate::environment::Environment;

/// Name of the pseudo-random generator family, echoed in every estimate.
pub const GENERATOR_NAME: &str = "chacha8";

/// Step budget after which a hitting replica is declared censored.
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("need at least {needed} replicas, got {got}")]
    TooFewReplicas { needed: u64, got: u64 },
    #[error("need at least one step")]
    ZeroSteps,
    #[error("direction vector is zero")]
    ZeroDirection,
    #[error("threshold multiplier must be positive, got {0}")]
    BadMultiplier(i64),
    #[error("threshold k <g1, g1> overflows 64-bit range")]
    ThresholdOverflow,
    #[error("all {0} replicas were censored before reaching a threshold")]
    AllCensored(u64),
    #[error("exit probabilities need a one-dimensional walk with steps -1 and +1 only")]
    NotBirthDeath,
    #[error("exit horizon must be positive, got {0}")]
    BadHorizon(i64),
    #[error("start {start} outside the open interval (-{big_k}, {big_k})")]
    StartOutOfRange { start: i64, big_k: i64 },
}

impl SimulatorError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::TooFewReplicas { .. } => "E_TOO_FEW_REPLICAS",
            Self::ZeroSteps => "E_ZERO_STEPS",
            Self::ZeroDirection => "E_ZERO_DIRECTION",
            Self::BadMultiplier(_) => "E_BAD_MULTIPLIER",
            Self::ThresholdOverflow => "E_THRESHOLD_OVERFLOW",
            Self::AllCensored(_) => "E_ALL_CENSORED",
            Self::NotBirthDeath => "E_NOT_BIRTH_DEATH",
            Self::BadHorizon(_) => "E_BAD_HORIZON",
            Self::StartOutOfRange { .. } => "E_START_RANGE",
        }
    }
}

/// Seed plus stream index identifying one replica's generator.
///
/// ChaCha8 exposes 2^64 independent streams per seed; replica `r` always
/// draws from stream `r`, which is what makes parallel and sequential
/// execution agree exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Inverse-CDF sampler over each site's lexicographically ordered support.
struct StepSampler<'a> {
    env: &'a Environment,
    cdfs: Vec<Vec<f64>>,
}

impl<'a> StepSampler<'a> {
    fn new(env: &'a Environment) -> Self {
        let cdfs = env
            .laws()
            .iter()
            .map(|law| {
                let mut acc = 0.0;
                law.probs()
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Self { env, cdfs }
    }

    fn sample<R: Rng>(&self, site: usize, rng: &mut R) -> &'a [i64] {
        let u: f64 = rng.random();
        let cdf = &self.cdfs[site];
        let mut idx = cdf.len() - 1;
        for (k, &c) in cdf.iter().enumerate() {
            if u < c {
                idx = k;
                break;
            }
        }
        &self.env.law(site).steps()[idx]
    }
}

/// Two-stage sampler: first the induced-chain target site, then the jump
/// conditioned on landing in that site's class.
///
/// Targets are ordered by site index and steps within a class keep their
/// lexicographic order, so construction is deterministic. Each step draws
/// two uniforms instead of one; the sampled jump has exactly the law of
/// the direct sampler, which the distributional tests verify.
struct TwoStageSampler<'a> {
    env: &'a Environment,
    rows: Vec<TwoStageRow>,
}

struct TwoStageRow {
    class_cdf: Vec<f64>,
    classes: Vec<ClassTable>,
}

struct ClassTable {
    step_indices: Vec<usize>,
    cdf: Vec<f64>,
}

impl<'a> TwoStageSampler<'a> {
    fn new(env: &'a Environment) -> Self {
        let dims = env.dims();
        let mut rows = Vec::with_capacity(env.n_sites());
        for site in 0..env.n_sites() {
            let coord = dims.coord_of(site);
            let law = env.law(site);
            let mut by_target: BTreeMap<usize, (Vec<usize>, f64)> = BTreeMap::new();
            let mut point = vec![0i64; env.d()];
            for (k, step) in law.steps().iter().enumerate() {
                for i in 0..env.d() {
                    point[i] = coord[i] + step[i];
                }
                let target = dims.canonical_index(&point).expect("dimension preserved");
                let slot = by_target.entry(target).or_insert_with(|| (Vec::new(), 0.0));
                slot.0.push(k);
                slot.1 += law.probs()[k];
            }
            let mut class_cdf = Vec::with_capacity(by_target.len());
            let mut classes = Vec::with_capacity(by_target.len());
            let mut acc = 0.0;
            for (_, (step_indices, mass)) in by_target {
                acc += mass;
                class_cdf.push(acc);
                let mut c = 0.0;
                let cdf = step_indices
                    .iter()
                    .map(|&k| {
                        c += law.probs()[k] / mass;
                        c
                    })
                    .collect();
                classes.push(ClassTable { step_indices, cdf });
            }
            rows.push(TwoStageRow { class_cdf, classes });
        }
        Self { env, rows }
    }

    fn sample<R: Rng>(&self, site: usize, rng: &mut R) -> &'a [i64] {
        let row = &self.rows[site];
        let u1: f64 = rng.random();
        let mut class = row.classes.len() - 1;
        for (k, &c) in row.class_cdf.iter().enumerate() {
            if u1 < c {
                class = k;
                break;
            }
        }
        let table = &row.classes[class];
        let u2: f64 = rng.random();
        let mut pick = table.cdf.len() - 1;
        for (k, &c) in table.cdf.iter().enumerate() {
            if u2 < c {
                pick = k;
                break;
            }
        }
        &self.env.law(site).steps()[table.step_indices[pick]]
    }
}

fn advance(env: &Environment, position: &mut [i64], site: &mut usize, step: &[i64]) {
    for (p, s) in position.iter_mut().zip(step) {
        *p += s;
    }
    *site = env
        .dims()
        .canonical_index(position)
        .expect("dimension preserved");
}

/// Walk positions `X_0 = 0, X_1, ..., X_n` for one replica stream.
pub fn sample_path(env: &Environment, n_steps: u64, stream: RngStream) -> Vec<Vec<i64>> {
    let sampler = StepSampler::new(env);
    let mut rng = stream.rng();
    let mut position = vec![0i64; env.d()];
    let mut site = 0usize;
    let mut path = Vec::with_capacity(n_steps as usize + 1);
    path.push(position.clone());
    for _ in 0..n_steps {
        let step = sampler.sample(site, &mut rng);
        advance(env, &mut position, &mut site, step);
        path.push(position.clone());
    }
    path
}

/// Final position `X_n` of one replica started at the origin.
pub fn sample_trajectory(env: &Environment, n_steps: u64, stream: RngStream) -> Vec<i64> {
    let sampler = StepSampler::new(env);
    let mut rng = stream.rng();
    let mut position = vec![0i64; env.d()];
    let mut site = 0usize;
    for _ in 0..n_steps {
        let step = sampler.sample(site, &mut rng);
        advance(env, &mut position, &mut site, step);
    }
    position
}

/// Final position `X_n` sampled through the two-stage scheme
/// (induced-chain site first, then the conditional jump).
pub fn sample_two_stage(env: &Environment, n_steps: u64, stream: RngStream) -> Vec<i64> {
    let sampler = TwoStageSampler::new(env);
    let mut rng = stream.rng();
    let mut position = vec![0i64; env.d()];
    let mut site = 0usize;
    for _ in 0..n_steps {
        let step = sampler.sample(site, &mut rng);
        advance(env, &mut position, &mut site, step);
    }
    position
}

#[cfg(feature = "parallel")]
fn map_replicas<T, F>(replicas: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..replicas).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_replicas<T, F>(replicas: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..replicas).map(f).collect()
}

/// Point estimate with one standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Replica-averaged trajectory statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStats {
    pub generator: &'static str,
    pub seed: u64,
    pub n_steps: u64,
    pub replicas: u64,
    /// Mean of `X_n / n` over replicas, per coordinate.
    pub nu_hat: Vec<f64>,
    /// Standard error of `nu_hat`, per coordinate.
    pub nu_stderr: Vec<f64>,
    /// Sample covariance of `X_n / sqrt(n)`, when requested.
    pub sigma_hat: Option<Vec<Vec<f64>>>,
}

fn final_positions(env: &Environment, n_steps: u64, replicas: u64, seed: u64) -> Vec<Vec<i64>> {
    let sampler = StepSampler::new(env);
    map_replicas(replicas, |r| {
        let mut rng = RngStream {
            seed,
            stream_id: r,
        }
        .rng();
        let mut position = vec![0i64; env.d()];
        let mut site = 0usize;
        for _ in 0..n_steps {
            let step = sampler.sample(site, &mut rng);
            advance(env, &mut position, &mut site, step);
        }
        position
    })
}

/// Monte Carlo drift estimate: mean and standard error of `X_n / n` over
/// independent replica streams.
pub fn estimate_drift(
    env: &Environment,
    n_steps: u64,
    replicas: u64,
    seed: u64,
) -> Result<TrajectoryStats, SimulatorError> {
    if n_steps == 0 {
        return Err(SimulatorError::ZeroSteps);
    }
    if replicas < 2 {
        return Err(SimulatorError::TooFewReplicas {
            needed: 2,
            got: replicas,
        });
    }
    let d = env.d();
    let finals = final_positions(env, n_steps, replicas, seed);

    let n = n_steps as f64;
    let r = replicas as f64;
    let mut mean = vec![0.0f64; d];
    for x in &finals {
        for i in 0..d {
            mean[i] += x[i] as f64 / n;
        }
    }
    for m in &mut mean {
        *m /= r;
    }
    let mut var = vec![0.0f64; d];
    for x in &finals {
        for i in 0..d {
            var[i] += (x[i] as f64 / n - mean[i]).powi(2);
        }
    }
    let stderr = var
        .iter()
        .map(|v| (v / (r - 1.0) / r).sqrt())
        .collect();

    Ok(TrajectoryStats {
        generator: GENERATOR_NAME,
        seed,
        n_steps,
        replicas,
        nu_hat: mean,
        nu_stderr: stderr,
        sigma_hat: None,
    })
}

/// Monte Carlo diffusion estimate: sample covariance of `X_n / sqrt(n)`
/// across replicas (drift removed empirically), along with the drift
/// estimate from the same runs.
///
/// Covariance estimation is noisy, so at least 100 replicas are required.
pub fn estimate_covariance(
    env: &Environment,
    n_steps: u64,
    replicas: u64,
    seed: u64,
) -> Result<TrajectoryStats, SimulatorError> {
    if n_steps == 0 {
        return Err(SimulatorError::ZeroSteps);
    }
    if replicas < 100 {
        return Err(SimulatorError::TooFewReplicas {
            needed: 100,
            got: replicas,
        });
    }
    let d = env.d();
    let finals = final_positions(env, n_steps, replicas, seed);

    let n = n_steps as f64;
    let r = replicas as f64;
    let mut mean = vec![0.0f64; d];
    for x in &finals {
        for i in 0..d {
            mean[i] += x[i] as f64;
        }
    }
    for m in &mut mean {
        *m /= r;
    }

    let mut cov = vec![vec![0.0f64; d]; d];
    let mut var = vec![0.0f64; d];
    for x in &finals {
        for i in 0..d {
            let ci = x[i] as f64 - mean[i];
            var[i] += (ci / n).powi(2);
            for j in 0..d {
                let cj = x[j] as f64 - mean[j];
                cov[i][j] += ci * cj;
            }
        }
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= (r - 1.0) * n;
        }
    }
    let stderr = var
        .iter()
        .map(|v| (v / (r - 1.0) / r).sqrt())
        .collect();

    Ok(TrajectoryStats {
        generator: GENERATOR_NAME,
        seed,
        n_steps,
        replicas,
        nu_hat: mean.iter().map(|m| m / n).collect(),
        nu_stderr: stderr,
        sigma_hat: Some(cov),
    })
}

/// Which side of the slab `|<g1, x>| < threshold` a replica exited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlabExit {
    Positive,
    Negative,
    Censored,
}

/// Estimated probability that the projection `<g1, X_n>` reaches
/// `-threshold` before `+threshold`, with `threshold = k <g1, g1>`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingEstimate {
    /// Fraction of absorbed replicas that exited on the negative side.
    pub p_negative: f64,
    /// Binomial standard error over absorbed replicas.
    pub stderr: f64,
    pub n_negative: u64,
    pub n_positive: u64,
    /// Replicas still inside the slab after `max_steps`; they are excluded
    /// from `p_negative`, so the estimate is conditional on absorption.
    pub n_censored: u64,
    pub threshold: i64,
}

/// Run the slab-exit experiment along an integer direction `g1`.
pub fn hitting_probability(
    env: &Environment,
    g1: &[i64],
    multiplier: i64,
    replicas: u64,
    seed: u64,
    max_steps: u64,
) -> Result<HittingEstimate, SimulatorError> {
    if multiplier < 1 {
        return Err(SimulatorError::BadMultiplier(multiplier));
    }
    if replicas < 1 {
        return Err(SimulatorError::TooFewReplicas {
            needed: 1,
            got: replicas,
        });
    }
    if g1.iter().all(|&c| c == 0) {
        return Err(SimulatorError::ZeroDirection);
    }
    assert_eq!(g1.len(), env.d(), "direction dimension must match");
    let norm2: i128 = g1.iter().map(|&c| (c as i128) * (c as i128)).sum();
    let threshold_wide = (multiplier as i128)
        .checked_mul(norm2)
        .ok_or(SimulatorError::ThresholdOverflow)?;
    let threshold =
        i64::try_from(threshold_wide).map_err(|_| SimulatorError::ThresholdOverflow)?;

    let sampler = StepSampler::new(env);
    let outcomes = map_replicas(replicas, |rep| {
        let mut rng = RngStream {
            seed,
            stream_id: rep,
        }
        .rng();
        let mut position = vec![0i64; env.d()];
        let mut site = 0usize;
        let mut score: i128 = 0;
        for _ in 0..max_steps {
            let step = sampler.sample(site, &mut rng);
            for ((p, &s), &c) in position.iter_mut().zip(step).zip(g1) {
                *p += s;
                score += (s as i128) * (c as i128);
            }
            site = env
                .dims()
                .canonical_index(&position)
                .expect("dimension preserved");
            if score >= threshold_wide {
                return SlabExit::Positive;
            }
            if score <= -threshold_wide {
                return SlabExit::Negative;
            }
        }
        SlabExit::Censored
    });

    let n_positive = outcomes.iter().filter(|&&o| o == SlabExit::Positive).count() as u64;
    let n_negative = outcomes.iter().filter(|&&o| o == SlabExit::Negative).count() as u64;
    let n_censored = replicas - n_positive - n_negative;
    let absorbed = n_positive + n_negative;
    if absorbed == 0 {
        return Err(SimulatorError::AllCensored(replicas));
    }
    let p = n_negative as f64 / absorbed as f64;
    Ok(HittingEstimate {
        p_negative: p,
        stderr: (p * (1.0 - p) / absorbed as f64).sqrt(),
        n_negative,
        n_positive,
        n_censored,
        threshold,
    })
}

fn require_birth_death(env: &Environment) -> Result<(), SimulatorError> {
    if env.d() == 1 && env.is_nearest_neighbour() && env.unit_steps_strictly_positive() {
        Ok(())
    } else {
        Err(SimulatorError::NotBirthDeath)
    }
}

fn check_exit_domain(big_k: i64, start: i64) -> Result<(), SimulatorError> {
    if big_k < 1 {
        return Err(SimulatorError::BadHorizon(big_k));
    }
    if start <= -big_k || start >= big_k {
        return Err(SimulatorError::StartOutOfRange { start, big_k });
    }
    Ok(())
}

fn log_sum_exp(vals: &[f64]) -> f64 {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Exact probability that a one-dimensional nearest-neighbour walk started
/// at `start` reaches `+big_k` before `-big_k`.
///
/// Classical birth-death identity: with `rho_x = p_x(-1) / p_x(+1)` and
/// `w_j = prod_{i=-K+1}^{j} rho_i`,
/// `P = sum_{j=-K}^{start-1} w_j / sum_{j=-K}^{K-1} w_j`.
/// The products are accumulated in log space so extreme biases cannot
/// overflow.
pub fn exit_probability_1d_exact(
    env: &Environment,
    big_k: i64,
    start: i64,
) -> Result<f64, SimulatorError> {
    require_birth_death(env)?;
    check_exit_domain(big_k, start)?;

    // log w_j for j = -K .. K-1
    let mut log_w = Vec::with_capacity((2 * big_k) as usize);
    let mut acc = 0.0f64;
    log_w.push(acc);
    for j in (-big_k + 1)..big_k {
        let idx = env.dims().canonical_index(&[j]).expect("one coordinate");
        let law = env.law(idx);
        acc += (law.prob_of(&[-1]) / law.prob_of(&[1])).ln();
        log_w.push(acc);
    }
    let cut = (start + big_k) as usize;
    let num = log_sum_exp(&log_w[..cut]);
    let den = log_sum_exp(&log_w);
    Ok((num - den).exp())
}

/// Monte Carlo counterpart of [`exit_probability_1d_exact`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitEstimate {
    /// Fraction of absorbed replicas that reached `+big_k` first.
    pub p_upper: f64,
    pub stderr: f64,
    pub n_upper: u64,
    pub n_lower: u64,
    pub n_censored: u64,
}

pub fn exit_probability_1d_mc(
    env: &Environment,
    big_k: i64,
    start: i64,
    replicas: u64,
    seed: u64,
    max_steps: u64,
) -> Result<ExitEstimate, SimulatorError> {
    require_birth_death(env)?;
    check_exit_domain(big_k, start)?;
    if replicas < 1 {
        return Err(SimulatorError::TooFewReplicas {
            needed: 1,
            got: replicas,
        });
    }

    let sampler = StepSampler::new(env);
    let outcomes = map_replicas(replicas, |rep| {
        let mut rng = RngStream {
            seed,
            stream_id: rep,
        }
        .rng();
        let mut position = [start];
        let mut site = env
            .dims()
            .canonical_index(&position)
            .expect("one coordinate");
        for _ in 0..max_steps {
            let step = sampler.sample(site, &mut rng);
            position[0] += step[0];
            site = env
                .dims()
                .canonical_index(&position)
                .expect("one coordinate");
            if position[0] >= big_k {
                return SlabExit::Positive;
            }
            if position[0] <= -big_k {
                return SlabExit::Negative;
            }
        }
        SlabExit::Censored
    });

    let n_upper = outcomes.iter().filter(|&&o| o == SlabExit::Positive).count() as u64;
    let n_lower = outcomes.iter().filter(|&&o| o == SlabExit::Negative).count() as u64;
    let n_censored = replicas - n_upper - n_lower;
    let absorbed = n_upper + n_lower;
    if absorbed == 0 {
        return Err(SimulatorError::AllCensored(replicas));
    }
    let p = n_upper as f64 / absorbed as f64;
    Ok(ExitEstimate {
        p_upper: p,
        stderr: (p * (1.0 - p) / absorbed as f64).sqrt(),
        n_upper,
        n_lower,
        n_censored,
    })
}
