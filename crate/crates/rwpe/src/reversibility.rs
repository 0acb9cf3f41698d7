//! Reversibility, the potential function, and the appropriate direction.
//!
//! A nearest-neighbour environment with strictly positive unit-step
//! probabilities is reversible exactly when the Kolmogorov cycle condition
//! holds; by periodicity it is enough to test every unit plaquette with a
//! base point in one fundamental cell. Reversible walks admit a potential
//! `u` on `Z^d`, recovered here on the closed fundamental cell by spanning
//! tree, and an average negative gradient `g` per axis. The gradient is
//! then approximated by an integer direction `g1` whose component `i` is a
//! multiple of the period `M_i`, which makes level sets of `<g1, x>`
//! compatible with the periodic structure.

use nalgebra::DVector;
use serde::Serialize;
use std::collections::VecDeque;
use thiserror::Error;

use crate::environment::{Environment, TorusDims};

/// Tolerance on plaquette log-defects, and on every derived consistency
/// check (non-tree potential edges, parallel-line gradient agreement).
pub const CYCLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ReversibilityError {
    #[error("environment is not nearest-neighbour with strictly positive unit steps")]
    NotNearestNeighbour,
    #[error("environment is not reversible: max plaquette log-defect {max_cycle_defect:e}")]
    NotReversible { max_cycle_defect: f64 },
    #[error("potential is path-dependent: non-tree edge defect {defect:e}")]
    PathDependence { defect: f64 },
    #[error("gradient along axis {axis} differs between parallel lines by {defect:e}")]
    LineDependence { axis: usize, defect: f64 },
    #[error("gradient is numerically zero; no direction to approximate")]
    ZeroGradient,
    #[error("integer direction overflows 64-bit range; lower the denominator bound")]
    ScalingOverflow,
}

impl ReversibilityError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::NotNearestNeighbour => "E_NOT_NEAREST_NEIGHBOUR",
            Self::NotReversible { .. } => "E_NOT_REVERSIBLE",
            Self::PathDependence { .. } => "E_PATH_DEPENDENCE",
            Self::LineDependence { .. } => "E_LINE_DEPENDENCE",
            Self::ZeroGradient => "E_ZERO_GRADIENT",
            Self::ScalingOverflow => "E_SCALING_OVERFLOW",
        }
    }
}

/// Outcome of the Kolmogorov plaquette scan.
#[derive(Debug, Clone, Serialize)]
pub struct CycleCheck {
    pub reversible: bool,
    /// Largest `|log` forward product `- log` reverse `product|` over all
    /// plaquettes. Zero when `d = 1` (there are no plaquettes).
    pub max_cycle_defect: f64,
    pub tolerance: f64,
}

fn unit_prob(env: &Environment, x: &[i64], axis: usize, sign: i64) -> f64 {
    let idx = env
        .dims()
        .canonical_index(x)
        .expect("internal coordinate has the right dimension");
    let mut step = vec![0i64; env.d()];
    step[axis] = sign;
    env.law(idx).prob_of(&step)
}

fn require_nearest_neighbour(env: &Environment) -> Result<(), ReversibilityError> {
    if env.is_nearest_neighbour() && env.unit_steps_strictly_positive() {
        Ok(())
    } else {
        Err(ReversibilityError::NotNearestNeighbour)
    }
}

/// Kolmogorov cycle criterion over all unit plaquettes.
///
/// For base point `x` and axes `i < j` the forward cycle is
/// `x -> x+e_i -> x+e_i+e_j -> x+e_j -> x`; the walk is reversible iff the
/// product of transition probabilities around every such cycle equals the
/// product for the reversed cycle. Defects are measured in log space.
pub fn check_reversible(env: &Environment) -> Result<CycleCheck, ReversibilityError> {
    require_nearest_neighbour(env)?;
    let d = env.d();
    let mut max_defect = 0.0f64;
    if d > 1 {
        for x in env.dims().sites() {
            for i in 0..d {
                for j in (i + 1)..d {
                    let mut xi = x.clone();
                    xi[i] += 1;
                    let mut xij = xi.clone();
                    xij[j] += 1;
                    let mut xj = x.clone();
                    xj[j] += 1;

                    let forward = unit_prob(env, &x, i, 1).ln()
                        + unit_prob(env, &xi, j, 1).ln()
                        + unit_prob(env, &xij, i, -1).ln()
                        + unit_prob(env, &xj, j, -1).ln();
                    let reverse = unit_prob(env, &x, j, 1).ln()
                        + unit_prob(env, &xj, i, 1).ln()
                        + unit_prob(env, &xij, j, -1).ln()
                        + unit_prob(env, &xi, i, -1).ln();
                    max_defect = max_defect.max((forward - reverse).abs());
                }
            }
        }
    }
    Ok(CycleCheck {
        reversible: max_defect <= CYCLE_TOLERANCE,
        max_cycle_defect: max_defect,
        tolerance: CYCLE_TOLERANCE,
    })
}

/// Potential on the closed fundamental cell plus the per-axis average
/// negative gradient.
#[derive(Debug, Clone)]
pub struct PotentialField {
    /// `(coordinate, u)` pairs over the closed cell `0..=M_i` per axis, in
    /// lexicographic order, normalized to `u(0) = 0`.
    pub u: Vec<(Vec<i64>, f64)>,
    /// Average negative gradient; `g[i] = -u(M_i e_i) / M_i`.
    pub g: DVector<f64>,
    pub max_cycle_defect: f64,
}

impl PotentialField {
    pub fn value_at(&self, coord: &[i64]) -> Option<f64> {
        self.u
            .binary_search_by(|(c, _)| c.as_slice().cmp(coord))
            .ok()
            .map(|k| self.u[k].1)
    }
}

/// Reconstruct the potential of a reversible environment.
///
/// The increment across the lattice edge `x -> x + s e_i` is
/// `u(x + s e_i) - u(x) = -log(p_x(s e_i) / p_{x + s e_i}(-s e_i))`; under
/// reversibility the increments are path-independent, so `u` is filled in
/// over a breadth-first spanning tree of the closed cell and every
/// non-tree edge is re-verified against [`CYCLE_TOLERANCE`].
pub fn potential(env: &Environment) -> Result<PotentialField, ReversibilityError> {
    let check = check_reversible(env)?;
    if !check.reversible {
        return Err(ReversibilityError::NotReversible {
            max_cycle_defect: check.max_cycle_defect,
        });
    }

    let d = env.d();
    let extents = env.dims().extents();
    // Closed cell: coordinate i ranges over 0..=M_i.
    let widths: Vec<usize> = extents.iter().map(|&m| m as usize + 1).collect();
    let cell_size: usize = widths.iter().product();
    let index_of = |coord: &[i64]| -> usize {
        coord
            .iter()
            .zip(&widths)
            .fold(0usize, |acc, (&c, &w)| acc * w + c as usize)
    };
    let coord_of = |mut idx: usize| -> Vec<i64> {
        let mut c = vec![0i64; d];
        for i in (0..d).rev() {
            c[i] = (idx % widths[i]) as i64;
            idx /= widths[i];
        }
        c
    };

    let mut u = vec![f64::NAN; cell_size];
    u[0] = 0.0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(cur) = queue.pop_front() {
        let x = coord_of(cur);
        for axis in 0..d {
            for sign in [1i64, -1] {
                let mut y = x.clone();
                y[axis] += sign;
                if y[axis] < 0 || y[axis] > extents[axis] {
                    continue;
                }
                let increment =
                    -(unit_prob(env, &x, axis, sign) / unit_prob(env, &y, axis, -sign)).ln();
                let proposed = u[cur] + increment;
                let target = index_of(&y);
                if u[target].is_nan() {
                    u[target] = proposed;
                    queue.push_back(target);
                } else {
                    let defect = (u[target] - proposed).abs();
                    if defect > CYCLE_TOLERANCE {
                        return Err(ReversibilityError::PathDependence { defect });
                    }
                }
            }
        }
    }

    let g = average_negative_gradient(env)?;
    let pairs = (0..cell_size).map(|k| (coord_of(k), u[k])).collect();
    Ok(PotentialField {
        u: pairs,
        g,
        max_cycle_defect: check.max_cycle_defect,
    })
}

/// Average negative gradient of the potential, one component per axis.
///
/// Component `i` is the mean log-ratio along the axis-`i` line through the
/// origin:
/// `g_i = (1/M_i) sum_k log(p_{k e_i}(e_i) / p_{(k+1) e_i}(-e_i))`.
/// Every line parallel to axis `i` must give the same value (they do for
/// any reversible environment); a disagreement beyond [`CYCLE_TOLERANCE`]
/// is reported as [`ReversibilityError::LineDependence`].
pub fn average_negative_gradient(env: &Environment) -> Result<DVector<f64>, ReversibilityError> {
    require_nearest_neighbour(env)?;
    let d = env.d();
    let extents = env.dims().extents();
    let mut g = DVector::zeros(d);
    for axis in 0..d {
        let m = extents[axis];
        let mut origin_sum = None;
        for base in env.dims().sites() {
            if base[axis] != 0 {
                continue;
            }
            let mut sum = 0.0;
            let mut x = base.clone();
            for k in 0..m {
                x[axis] = k;
                let up = unit_prob(env, &x, axis, 1);
                x[axis] = k + 1;
                let down = unit_prob(env, &x, axis, -1);
                sum += (up / down).ln();
            }
            match origin_sum {
                // sites() is lexicographic, so the origin line comes first
                None => origin_sum = Some(sum),
                Some(reference) => {
                    let defect = (sum - reference).abs();
                    if defect > CYCLE_TOLERANCE {
                        return Err(ReversibilityError::LineDependence { axis, defect });
                    }
                }
            }
        }
        g[axis] = origin_sum.expect("torus has at least one site") / m as f64;
    }
    Ok(g)
}

fn gcd_i128(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm_i128(a: i128, b: i128) -> Option<i128> {
    if a == 0 || b == 0 {
        return Some(0);
    }
    (a / gcd_i128(a, b)).checked_mul(b).map(i128::abs)
}

/// Reduced fraction with positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    num: i64,
    den: i64,
}

impl Rational {
    /// Reduce `num/den`; the sign moves to the numerator. Panics if
    /// `den == 0`.
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd_i128(num as i128, den as i128) as i64;
        let (mut num, mut den) = if g == 0 { (0, 1) } else { (num / g, den / g) };
        if den < 0 {
            num = -num;
            den = -den;
        }
        Self { num, den }
    }

    pub fn num(&self) -> i64 {
        self.num
    }

    pub fn den(&self) -> i64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Serialize for Rational {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Closest fraction to `x` among all fractions with denominator at most
/// `max_denominator`.
///
/// Candidates are the continued-fraction convergents of `|x|` plus the
/// final semiconvergent allowed by the denominator bound; the closest one
/// wins, with ties going to the smaller denominator.
pub fn best_rational_approximation(x: f64, max_denominator: u64) -> Rational {
    assert!(x.is_finite(), "cannot approximate a non-finite value");
    let bound = max_denominator.max(1) as i128;
    let ax = x.abs();

    let mut candidates: Vec<(i128, i128)> = Vec::new();
    let (mut p_prev2, mut p_prev) = (0i128, 1i128);
    let (mut q_prev2, mut q_prev) = (1i128, 0i128);
    let mut y = ax;
    for _ in 0..64 {
        let a = y.floor() as i128;
        let p = a * p_prev + p_prev2;
        let q = a * q_prev + q_prev2;
        if q > bound {
            let t = (bound - q_prev2) / q_prev;
            if t >= 1 {
                candidates.push((t * p_prev + p_prev2, t * q_prev + q_prev2));
            }
            break;
        }
        candidates.push((p, q));
        let frac = y - a as f64;
        if frac < 1e-13 {
            break;
        }
        y = 1.0 / frac;
        (p_prev2, p_prev) = (p_prev, p);
        (q_prev2, q_prev) = (q_prev, q);
    }

    let (p, q) = candidates
        .into_iter()
        .min_by(|&(p1, q1), &(p2, q2)| {
            let e1 = (ax - p1 as f64 / q1 as f64).abs();
            let e2 = (ax - p2 as f64 / q2 as f64).abs();
            e1.partial_cmp(&e2).unwrap().then(q1.cmp(&q2))
        })
        .expect("at least one convergent");
    let num = i64::try_from(if x < 0.0 { -p } else { p }).expect("numerator overflows i64");
    Rational::new(num, q as i64)
}

/// Integer direction approximating the gradient.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionApprox {
    /// Per-coordinate best rational approximation of `g` rescaled to unit
    /// sup-norm.
    pub g_rational: Vec<Rational>,
    /// Common-denominator integer vector, scaled so that component `i` is
    /// a multiple of the period `M_i` whenever it is nonzero.
    pub g1: Vec<i64>,
    /// Angle between `g` and `g1` in radians.
    pub angle_error: f64,
}

/// Rational-direction approximation of the gradient `g`, scaled to the
/// periodic structure `dims`.
///
/// `g` is first rescaled to unit sup-norm (direction is all that matters),
/// each coordinate is approximated by [`best_rational_approximation`], the
/// denominators are cleared by their least common multiple, and the
/// resulting integer vector is multiplied by the least factor making each
/// nonzero component a multiple of its period. All integer arithmetic runs
/// in 128 bits and overflow of the final 64-bit components is an error.
pub fn approximate_appropriate_direction(
    g: &[f64],
    max_denominator: u64,
    dims: &TorusDims,
) -> Result<DirectionApprox, ReversibilityError> {
    assert_eq!(g.len(), dims.d(), "gradient dimension must match dims");
    let sup = g.iter().fold(0.0f64, |acc, gi| acc.max(gi.abs()));
    if sup <= 1e-12 {
        return Err(ReversibilityError::ZeroGradient);
    }

    let rationals: Vec<Rational> = g
        .iter()
        .map(|&gi| best_rational_approximation(gi / sup, max_denominator))
        .collect();

    let mut l = 1i128;
    for r in &rationals {
        l = lcm_i128(l, r.den() as i128).ok_or(ReversibilityError::ScalingOverflow)?;
    }
    let v: Vec<i128> = rationals
        .iter()
        .map(|r| {
            (l / r.den() as i128)
                .checked_mul(r.num() as i128)
                .ok_or(ReversibilityError::ScalingOverflow)
        })
        .collect::<Result<_, _>>()?;

    let mut k = 1i128;
    for (i, &vi) in v.iter().enumerate() {
        if vi != 0 {
            let m = dims.extents()[i] as i128;
            let factor = m / gcd_i128(m, vi);
            k = lcm_i128(k, factor).ok_or(ReversibilityError::ScalingOverflow)?;
        }
    }

    let g1: Vec<i64> = v
        .iter()
        .map(|&vi| {
            k.checked_mul(vi)
                .and_then(|t| i64::try_from(t).ok())
                .ok_or(ReversibilityError::ScalingOverflow)
        })
        .collect::<Result<_, _>>()?;

    let dot: f64 = g.iter().zip(&g1).map(|(&gi, &hi)| gi * hi as f64).sum();
    let norm_g: f64 = g.iter().map(|&gi| gi * gi).sum::<f64>().sqrt();
    let norm_h: f64 = g1.iter().map(|&hi| (hi as f64).powi(2)).sum::<f64>().sqrt();
    let angle_error = (dot / (norm_g * norm_h)).clamp(-1.0, 1.0).acos();

    Ok(DirectionApprox {
        g_rational: rationals,
        g1,
        angle_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{
        make_counterexample, make_tilted_conductance, Environment, JumpLaw, DEFAULT_TOLERANCE,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn env_1d(probs_up: &[f64]) -> Environment {
        let dims = TorusDims::new(vec![probs_up.len() as i64]).unwrap();
        let laws = probs_up
            .iter()
            .map(|&a| JumpLaw::new(vec![(vec![1], a), (vec![-1], 1.0 - a)], 1e-12).unwrap())
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

    /// dims (2, 1) with one site's vertical weights skewed; plaquette
    /// defect log(1.5) at every base point.
    fn skewed_env() -> Environment {
        let dims = TorusDims::new(vec![2, 1]).unwrap();
        let site0 = JumpLaw::new(
            vec![
                (vec![1, 0], 0.25),
                (vec![-1, 0], 0.25),
                (vec![0, 1], 0.3),
                (vec![0, -1], 0.2),
            ],
            1e-12,
        )
        .unwrap();
        let site1 = JumpLaw::new(
            vec![
                (vec![1, 0], 0.25),
                (vec![-1, 0], 0.25),
                (vec![0, 1], 0.25),
                (vec![0, -1], 0.25),
            ],
            1e-12,
        )
        .unwrap();
        Environment::new(dims, vec![site0, site1], DEFAULT_TOLERANCE).unwrap()
    }

    #[test]
    fn one_dimensional_is_trivially_reversible() {
        let env = env_1d(&[0.7, 0.6]);
        let check = check_reversible(&env).unwrap();
        assert!(check.reversible);
        assert_eq!(check.max_cycle_defect, 0.0);
    }

    #[test]
    fn homogeneous_walk_is_reversible() {
        let env = make_counterexample(10.0, 0.01).unwrap();
        let check = check_reversible(&env).unwrap();
        assert!(check.reversible);
        assert!(check.max_cycle_defect < 1e-12);
    }

    #[test]
    fn random_conductance_walks_are_reversible() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let dims = TorusDims::new(vec![
                rng.random_range(1..=3),
                rng.random_range(1..=3),
                rng.random_range(1..=2),
            ])
            .unwrap();
            let n_edges = dims.torus_size() * dims.d();
            let weights: Vec<f64> = (0..n_edges).map(|_| rng.random_range(0.2..2.0)).collect();
            let tilt: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
            let env = make_tilted_conductance(&dims, &weights, &tilt).unwrap();
            let check = check_reversible(&env).unwrap();
            assert!(
                check.reversible && check.max_cycle_defect < 1e-12,
                "defect {} for dims {:?}",
                check.max_cycle_defect,
                dims.extents()
            );
        }
    }

    #[test]
    fn skewed_environment_fails_with_known_defect() {
        // forward/reverse plaquette products at (0,0):
        //   0.25 * 0.25 * 0.25 * 0.2  vs  0.3 * 0.25 * 0.25 * 0.25
        let env = skewed_env();
        let check = check_reversible(&env).unwrap();
        assert!(!check.reversible);
        assert!((check.max_cycle_defect - 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn non_nearest_neighbour_is_rejected() {
        let dims = TorusDims::new(vec![1, 1]).unwrap();
        let law = JumpLaw::new(
            vec![
                (vec![2, 0], 0.25),
                (vec![-1, 0], 0.25),
                (vec![0, 1], 0.25),
                (vec![0, -1], 0.25),
            ],
            1e-12,
        )
        .unwrap();
        let env = Environment::new(dims, vec![law], DEFAULT_TOLERANCE).unwrap();
        assert!(matches!(
            check_reversible(&env),
            Err(ReversibilityError::NotNearestNeighbour)
        ));
        assert!(matches!(
            average_negative_gradient(&env),
            Err(ReversibilityError::NotNearestNeighbour)
        ));
    }

    #[test]
    fn potential_of_srw_vanishes() {
        let field = potential(&srw2d()).unwrap();
        assert_eq!(field.u.len(), 4);
        for (_, v) in &field.u {
            assert!(v.abs() < 1e-15);
        }
        assert!(field.g.amax() < 1e-15);
    }

    #[test]
    fn potential_of_homogeneous_walk_is_linear() {
        let (k, eps) = (10.0, 0.01);
        let env = make_counterexample(k, eps).unwrap();
        let field = potential(&env).unwrap();
        for (coord, v) in &field.u {
            let expected = -(coord[0] as f64) * k.ln() - (coord[1] as f64) * 2.0f64.ln();
            assert!((v - expected).abs() < 1e-12, "u({coord:?}) = {v}");
        }
        assert!((field.g[0] - k.ln()).abs() < 1e-12);
        assert!((field.g[1] - 2.0f64.ln()).abs() < 1e-12);
        assert_eq!(field.value_at(&[1, 1]).unwrap(), field.u[3].1);
        assert!(field.value_at(&[5, 5]).is_none());
    }

    #[test]
    fn potential_rejects_skewed_environment() {
        match potential(&skewed_env()) {
            Err(ReversibilityError::NotReversible { max_cycle_defect }) => {
                assert!((max_cycle_defect - 1.5f64.ln()).abs() < 1e-12);
            }
            other => panic!("expected NotReversible, got {other:?}"),
        }
    }

    #[test]
    fn gradient_of_period_two_walk() {
        // (1/2) [log(0.7/0.4) + log(0.6/0.3)] = (1/2) log 3.5
        let env = env_1d(&[0.7, 0.6]);
        let g = average_negative_gradient(&env).unwrap();
        assert!((g[0] - 0.5 * 3.5f64.ln()).abs() < 1e-15);
        let field = potential(&env).unwrap();
        assert!((field.value_at(&[2]).unwrap() + 3.5f64.ln()).abs() < 1e-15);
        assert!((field.g[0] - g[0]).abs() < 1e-15);
    }

    #[test]
    fn tilted_gradient_is_twice_the_tilt() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dims = TorusDims::new(vec![2, 3]).unwrap();
        let weights: Vec<f64> = (0..dims.torus_size() * 2)
            .map(|_| rng.random_range(0.5..1.5))
            .collect();
        let tilt = [0.3, -0.2];
        let env = make_tilted_conductance(&dims, &weights, &tilt).unwrap();
        let g = average_negative_gradient(&env).unwrap();
        assert!((g[0] - 0.6).abs() < 1e-12);
        assert!((g[1] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn rational_reduction_and_display() {
        let r = Rational::new(6, -4);
        assert_eq!((r.num(), r.den()), (-3, 2));
        assert_eq!(r.to_string(), "-3/2");
        assert_eq!(Rational::new(5, 1).to_string(), "5");
        assert_eq!(Rational::new(0, -7), Rational::new(0, 3));
        assert_eq!(serde_json::to_string(&Rational::new(7, 12)).unwrap(), "\"7/12\"");
    }

    #[test]
    fn best_rational_simple_cases() {
        assert_eq!(best_rational_approximation(0.5, 10), Rational::new(1, 2));
        assert_eq!(best_rational_approximation(0.0, 10), Rational::new(0, 1));
        assert_eq!(
            best_rational_approximation(3.0 / 7.0, 100),
            Rational::new(3, 7)
        );
        assert_eq!(best_rational_approximation(-0.5, 10), Rational::new(-1, 2));
        assert_eq!(best_rational_approximation(2.25, 4), Rational::new(9, 4));
        // tie at distance 1/4: prefer the smaller denominator
        assert_eq!(best_rational_approximation(0.25, 2), Rational::new(0, 1));
    }

    #[test]
    fn best_rational_log_ratio_pinned() {
        let x = 1.5f64.ln() / 2.0f64.ln();
        assert_eq!(best_rational_approximation(x, 20), Rational::new(7, 12));
        assert_eq!(best_rational_approximation(x, 1000), Rational::new(389, 665));
    }

    #[test]
    fn best_rational_matches_exhaustive_search() {
        let targets = [
            1.5f64.ln() / 2.0f64.ln(),
            std::f64::consts::FRAC_1_SQRT_2,
            0.1234567,
            -0.9876,
            1.0 / 3.0,
        ];
        for &x in &targets {
            for max_den in [1u64, 7, 50, 400] {
                let got = best_rational_approximation(x, max_den);
                let mut best = (f64::INFINITY, 0i64, 1i64);
                for q in 1..=(max_den as i64) {
                    let p = (x * q as f64).round() as i64;
                    let err = (x - p as f64 / q as f64).abs();
                    if err < best.0 {
                        best = (err, p, q);
                    }
                }
                let got_err = (x - got.value()).abs();
                assert!(
                    got_err <= best.0 + 1e-18,
                    "x={x} max_den={max_den}: got {got} (err {got_err}), best {}/{} (err {})",
                    best.1,
                    best.2,
                    best.0
                );
            }
        }
    }

    #[test]
    fn direction_for_diagonal_gradient() {
        let dims = TorusDims::new(vec![2, 2]).unwrap();
        let approx = approximate_appropriate_direction(&[1.0, 1.0], 100, &dims).unwrap();
        assert_eq!(approx.g1, vec![2, 2]);
        // acos near 1 amplifies rounding; parallel vectors land around 1e-8
        assert!(approx.angle_error < 1e-7);

        let dims = TorusDims::new(vec![1, 1]).unwrap();
        let approx =
            approximate_appropriate_direction(&[2.0f64.ln(), 2.0f64.ln()], 100, &dims).unwrap();
        assert_eq!(approx.g1, vec![1, 1]);
        assert_eq!(approx.g_rational[0], Rational::new(1, 1));
    }

    #[test]
    fn direction_for_log_gradient() {
        let dims = TorusDims::new(vec![1, 1]).unwrap();
        let g = [2.0f64.ln(), 1.5f64.ln()];
        let approx = approximate_appropriate_direction(&g, 20, &dims).unwrap();
        assert_eq!(approx.g_rational[0], Rational::new(1, 1));
        assert_eq!(approx.g_rational[1], Rational::new(7, 12));
        assert_eq!(approx.g1, vec![12, 7]);
        assert!(approx.angle_error < 1e-2);

        // scale invariance of the direction
        let scaled: Vec<f64> = g.iter().map(|x| 3.7 * x).collect();
        let approx2 = approximate_appropriate_direction(&scaled, 20, &dims).unwrap();
        assert_eq!(approx2.g1, approx.g1);
    }

    #[test]
    fn direction_respects_periods() {
        let dims = TorusDims::new(vec![4, 6]).unwrap();
        let approx = approximate_appropriate_direction(&[0.5, 1.0], 100, &dims).unwrap();
        // v = (1, 2); component multiples of (4, 6): k = lcm(4, 3) = 12
        assert_eq!(approx.g1, vec![12, 24]);
        assert_eq!(approx.g1[0] % 4, 0);
        assert_eq!(approx.g1[1] % 6, 0);

        // a zero component stays zero and constrains nothing
        let approx = approximate_appropriate_direction(&[0.0, 1.0], 100, &dims).unwrap();
        assert_eq!(approx.g1, vec![0, 6]);
    }

    #[test]
    fn zero_gradient_is_an_error() {
        let dims = TorusDims::new(vec![2, 2]).unwrap();
        assert!(matches!(
            approximate_appropriate_direction(&[0.0, 1e-13], 100, &dims),
            Err(ReversibilityError::ZeroGradient)
        ));
    }

    #[test]
    fn scaling_overflow_is_reported() {
        // coprime million-scale periods force k ~ 1e18; with denominators
        // in the hundreds the 64-bit components must overflow
        let dims = TorusDims::new(vec![999_983, 999_979, 999_961]).unwrap();
        let g = [1.0, std::f64::consts::FRAC_1_SQRT_2, 0.577_350_269];
        assert!(matches!(
            approximate_appropriate_direction(&g, 1000, &dims),
            Err(ReversibilityError::ScalingOverflow)
        ));
    }

    #[test]
    fn line_dependence_detected() {
        // vertical log-ratio sums differ between the two columns of a
        // skewed 2 x 1 environment
        let env = skewed_env();
        match average_negative_gradient(&env) {
            Err(ReversibilityError::LineDependence { axis, defect }) => {
                assert_eq!(axis, 1);
                assert!((defect - 1.5f64.ln()).abs() < 1e-12);
            }
            other => panic!("expected LineDependence, got {other:?}"),
        }
    }
}
