//! The finite Markov chain induced on the torus.
//!
//! Projecting the walk onto `T = Z^d / M` gives a finite chain whose
//! transition matrix, stationary distribution and conditional jump means
//! determine the exact asymptotics of the walk.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::environment::Environment;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("transition matrix is not irreducible")]
    NotIrreducible,
    #[error("transition matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("singular linear system while solving for the stationary distribution")]
    SingularSystem,
}

impl ChainError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::NotIrreducible => "E_NOT_IRREDUCIBLE",
            Self::NotSquare { .. } => "E_NOT_SQUARE",
            Self::SingularSystem => "E_SINGULAR",
        }
    }
}

/// Conditional mean displacement for each ordered pair of torus sites.
///
/// `get(x, y)` is the expected step vector of the walk given that the jump
/// moves the induced chain from site `x` to site `y`; it is the zero vector
/// whenever that transition has probability zero.
#[derive(Debug, Clone)]
pub struct JumpMeanTable {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl JumpMeanTable {
    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, from: usize, to: usize) -> &[f64] {
        let base = (from * self.n + to) * self.d;
        &self.data[base..base + self.d]
    }
}

/// Transition matrix of the induced chain: `P[x][y]` is the total
/// probability that a step from a point in class `x` lands in class `y`.
pub fn build_transition_matrix(env: &Environment) -> DMatrix<f64> {
    let dims = env.dims();
    let n = env.n_sites();
    let mut p = DMatrix::zeros(n, n);
    let mut point = vec![0i64; env.d()];
    for x in 0..n {
        let coord = dims.coord_of(x);
        for (step, prob) in env.law(x).entries() {
            for (t, (&c, &s)) in point.iter_mut().zip(coord.iter().zip(step)) {
                *t = c + s;
            }
            let y = dims.canonical_index(&point).expect("step has matching dimension");
            p[(x, y)] += prob;
        }
    }
    p
}

/// Conditional jump means `mu[x][y]`, zero where the transition is
/// impossible.
pub fn jump_means(env: &Environment) -> JumpMeanTable {
    let dims = env.dims();
    let n = env.n_sites();
    let d = env.d();
    let mut weight = vec![0.0f64; n * n];
    let mut data = vec![0.0f64; n * n * d];
    let mut point = vec![0i64; d];
    for x in 0..n {
        let coord = dims.coord_of(x);
        for (step, prob) in env.law(x).entries() {
            for (t, (&c, &s)) in point.iter_mut().zip(coord.iter().zip(step)) {
                *t = c + s;
            }
            let y = dims.canonical_index(&point).expect("step has matching dimension");
            weight[x * n + y] += prob;
            let base = (x * n + y) * d;
            for (k, &s) in step.iter().enumerate() {
                data[base + k] += prob * s as f64;
            }
        }
    }
    for xy in 0..n * n {
        let w = weight[xy];
        if w > 0.0 {
            for k in 0..d {
                data[xy * d + k] /= w;
            }
        }
    }
    JumpMeanTable { n, d, data }
}

fn positive_adjacency(p: &DMatrix<f64>) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let n = p.nrows();
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for x in 0..n {
        for y in 0..n {
            if p[(x, y)] > 0.0 {
                succ[x].push(y);
                pred[y].push(x);
            }
        }
    }
    (succ, pred)
}

fn bfs_reach(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = std::collections::VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Strong connectivity of the positive-transition graph and the period of
/// the chain (gcd of cycle lengths through state 0, via BFS level
/// differences). The period is only meaningful when the chain is
/// irreducible; otherwise it refers to the component reachable from state 0.
pub fn irreducibility_and_period(p: &DMatrix<f64>) -> (bool, usize) {
    let n = p.nrows();
    assert_eq!(n, p.ncols(), "transition matrix must be square");
    let (succ, pred) = positive_adjacency(p);
    let forward = bfs_reach(&succ, 0);
    let backward = bfs_reach(&pred, 0);
    let irreducible = forward.iter().all(|&b| b) && backward.iter().all(|&b| b);

    // BFS levels from state 0; every positive edge (u, v) contributes the
    // cycle-length residue level[u] + 1 - level[v] to the period gcd.
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    level[0] = 0;
    let mut g: u64 = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &succ[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
            let diff = level[u] as i64 + 1 - level[v] as i64;
            g = gcd(g, diff.unsigned_abs());
        }
    }
    (irreducible, g.max(1) as usize)
}

/// Unique stationary probability vector of an irreducible chain.
///
/// Solves `(P^T - I) pi = 0` with the last equation replaced by the
/// normalization `sum pi = 1`, by dense LU with partial pivoting, followed
/// by one step of iterative refinement.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>, ChainError> {
    let n = p.nrows();
    if n != p.ncols() {
        return Err(ChainError::NotSquare {
            rows: n,
            cols: p.ncols(),
        });
    }
    let (irreducible, _) = irreducibility_and_period(p);
    if !irreducible {
        return Err(ChainError::NotIrreducible);
    }

    let mut a = p.transpose();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;

    let lu = a.clone().lu();
    let mut pi = lu.solve(&b).ok_or(ChainError::SingularSystem)?;
    let residual = &b - &a * &pi;
    if let Some(correction) = lu.solve(&residual) {
        pi += correction;
    }
    let total: f64 = pi.sum();
    pi /= total;
    Ok(pi)
}

/// The induced chain with all derived objects.
#[derive(Debug, Clone)]
pub struct InducedChain {
    p: DMatrix<f64>,
    pi: DVector<f64>,
    mu: JumpMeanTable,
    irreducible: bool,
    period: usize,
}

impl InducedChain {
    /// Builds the full chain; fails when the induced chain is not
    /// irreducible (the stationary distribution would not be unique).
    pub fn from_env(env: &Environment) -> Result<Self, ChainError> {
        let p = build_transition_matrix(env);
        let (irreducible, period) = irreducibility_and_period(&p);
        if !irreducible {
            return Err(ChainError::NotIrreducible);
        }
        let pi = stationary_distribution(&p)?;
        let mu = jump_means(env);
        Ok(Self {
            p,
            pi,
            mu,
            irreducible,
            period,
        })
    }

    pub fn n_states(&self) -> usize {
        self.p.nrows()
    }

    pub fn transition_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn jump_mean(&self, from: usize, to: usize) -> &[f64] {
        self.mu.get(from, to)
    }

    pub fn jump_means(&self) -> &JumpMeanTable {
        &self.mu
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    pub fn period(&self) -> usize {
        self.period
    }
}
