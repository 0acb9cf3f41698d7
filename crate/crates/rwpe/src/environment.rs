//! Periodic environments on `Z^d`.
//!
//! An [`Environment`] is a torus shape `(M_1, ..., M_d)` together with one
//! finite [`JumpLaw`] per torus site; the law at an arbitrary lattice point
//! is the law at its canonical representative. This module owns the file
//! format (a small JSON schema with exact rational probability literals),
//! validation, and the generators used throughout the test suites.

use serde::Serialize;
use std::fmt::Write as _;
use thiserror::Error;

/// Default tolerance for the per-site probability-sum check.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EnvironmentError {
    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("torus dimensions must be a nonempty list of positive integers")]
    BadDims,
    #[error("torus size overflows the address space")]
    TorusTooLarge,
    #[error("jump law has empty support")]
    EmptySupport,
    #[error("nonpositive or non-finite probability {prob} for step {step:?}")]
    NonpositiveProbability { step: Vec<i64>, prob: f64 },
    #[error("duplicate step {step:?} in jump law")]
    DuplicateStep { step: Vec<i64> },
    #[error("probabilities sum to {sum} which misses 1 by more than the tolerance {tolerance:e}")]
    SumOutOfTolerance { sum: f64, tolerance: f64 },
    #[error("environment needs {expected} site laws, got {got}")]
    SiteCountMismatch { expected: usize, got: usize },
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    #[error("nonpositive edge weight {weight} at site index {site}, axis {axis}")]
    NonpositiveWeight {
        site: usize,
        axis: usize,
        weight: f64,
    },
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid probability literal {literal:?}")]
    BadProbability { literal: String },
    #[error("missing site {coord:?}")]
    MissingSite { coord: Vec<i64> },
    #[error("duplicate site {coord:?}")]
    DuplicateSite { coord: Vec<i64> },
    #[error("site {coord:?} lies outside the fundamental cell for dims {dims:?}")]
    SiteOutOfRange { coord: Vec<i64>, dims: Vec<i64> },
    #[error("site {coord:?}: {source}")]
    AtSite {
        coord: Vec<i64>,
        #[source]
        source: Box<EnvironmentError>,
    },
}

impl EnvironmentError {
    /// Stable machine-readable code, used by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Self::DimensionMismatch { .. } => "E_DIM_MISMATCH",
            Self::BadDims => "E_BAD_DIMS",
            Self::TorusTooLarge => "E_TORUS_TOO_LARGE",
            Self::EmptySupport => "E_EMPTY_SUPPORT",
            Self::NonpositiveProbability { .. } => "E_NONPOSITIVE_PROB",
            Self::DuplicateStep { .. } => "E_DUPLICATE_STEP",
            Self::SumOutOfTolerance { .. } => "E_PROB_SUM",
            Self::SiteCountMismatch { .. } => "E_SITE_COUNT",
            Self::ParameterDomain(_) => "E_PARAM_DOMAIN",
            Self::NonpositiveWeight { .. } => "E_NONPOSITIVE_WEIGHT",
            Self::Syntax { .. } => "E_SYNTAX",
            Self::Schema(_) => "E_SCHEMA",
            Self::BadProbability { .. } => "E_BAD_PROB_LITERAL",
            Self::MissingSite { .. } => "E_MISSING_SITE",
            Self::DuplicateSite { .. } => "E_DUPLICATE_SITE",
            Self::SiteOutOfRange { .. } => "E_SITE_OUT_OF_RANGE",
            Self::AtSite { source, .. } => source.code(),
        }
    }
}

/// Shape of the torus `T = Z^d / (M_1 Z x ... x M_d Z)`.
///
/// Sites are indexed by the lexicographic order of their coordinate tuples,
/// first coordinate most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusDims {
    m: Vec<i64>,
}

impl TorusDims {
    pub fn new(dims: Vec<i64>) -> Result<Self, EnvironmentError> {
        if dims.is_empty() || dims.iter().any(|&m| m < 1) {
            return Err(EnvironmentError::BadDims);
        }
        let mut size = 1usize;
        for &m in &dims {
            size = size
                .checked_mul(m as usize)
                .ok_or(EnvironmentError::TorusTooLarge)?;
        }
        Ok(Self { m: dims })
    }

    pub fn d(&self) -> usize {
        self.m.len()
    }

    pub fn extents(&self) -> &[i64] {
        &self.m
    }

    /// Number of torus sites `|T| = M_1 * ... * M_d`.
    pub fn torus_size(&self) -> usize {
        self.m.iter().map(|&m| m as usize).product()
    }

    fn check_dim(&self, got: usize) -> Result<(), EnvironmentError> {
        if got != self.d() {
            return Err(EnvironmentError::DimensionMismatch {
                expected: self.d(),
                got,
            });
        }
        Ok(())
    }

    /// Canonical representative of `x` in the fundamental cell: coordinate
    /// `i` is reduced to `[0, M_i)`.
    pub fn canonical_site(&self, x: &[i64]) -> Result<Vec<i64>, EnvironmentError> {
        self.check_dim(x.len())?;
        Ok(x.iter()
            .zip(&self.m)
            .map(|(&c, &m)| c.rem_euclid(m))
            .collect())
    }

    /// Index of a canonical coordinate tuple in lexicographic site order.
    pub fn site_index(&self, canonical: &[i64]) -> usize {
        debug_assert_eq!(canonical.len(), self.d());
        let mut idx = 0usize;
        for (&c, &m) in canonical.iter().zip(&self.m) {
            debug_assert!(0 <= c && c < m);
            idx = idx * (m as usize) + c as usize;
        }
        idx
    }

    /// `site_index` of the canonical representative of an arbitrary point.
    pub fn canonical_index(&self, x: &[i64]) -> Result<usize, EnvironmentError> {
        self.check_dim(x.len())?;
        let mut idx = 0usize;
        for (&c, &m) in x.iter().zip(&self.m) {
            idx = idx * (m as usize) + c.rem_euclid(m) as usize;
        }
        Ok(idx)
    }

    /// Coordinate tuple of a site index (inverse of [`Self::site_index`]).
    pub fn coord_of(&self, mut index: usize) -> Vec<i64> {
        debug_assert!(index < self.torus_size());
        let mut c = vec![0i64; self.d()];
        for i in (0..self.d()).rev() {
            let m = self.m[i] as usize;
            c[i] = (index % m) as i64;
            index /= m;
        }
        c
    }

    /// All torus sites in lexicographic order.
    pub fn sites(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.torus_size()).map(|i| self.coord_of(i))
    }
}

/// Finite jump distribution at one site: strictly positive probabilities on
/// a finite set of integer step vectors, summing to 1 within tolerance.
///
/// The support is kept sorted lexicographically; that order is the contract
/// for inverse-CDF sampling and file serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLaw {
    steps: Vec<Vec<i64>>,
    probs: Vec<f64>,
}

impl JumpLaw {
    pub fn new(entries: Vec<(Vec<i64>, f64)>, tolerance: f64) -> Result<Self, EnvironmentError> {
        Self::build(entries, tolerance, false)
    }

    /// Like [`Self::new`] but divides every probability by the raw sum
    /// instead of enforcing the sum tolerance.
    pub fn renormalized(entries: Vec<(Vec<i64>, f64)>) -> Result<Self, EnvironmentError> {
        Self::build(entries, f64::INFINITY, true)
    }

    fn build(
        mut entries: Vec<(Vec<i64>, f64)>,
        tolerance: f64,
        renormalize: bool,
    ) -> Result<Self, EnvironmentError> {
        if entries.is_empty() {
            return Err(EnvironmentError::EmptySupport);
        }
        let d = entries[0].0.len();
        for (step, prob) in &entries {
            if step.len() != d {
                return Err(EnvironmentError::DimensionMismatch {
                    expected: d,
                    got: step.len(),
                });
            }
            if !prob.is_finite() || *prob <= 0.0 {
                return Err(EnvironmentError::NonpositiveProbability {
                    step: step.clone(),
                    prob: *prob,
                });
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(EnvironmentError::DuplicateStep {
                    step: pair[0].0.clone(),
                });
            }
        }
        let sum: f64 = entries.iter().map(|(_, p)| *p).sum();
        let (steps, mut probs): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        if renormalize {
            for p in &mut probs {
                *p /= sum;
            }
        } else if (sum - 1.0).abs() > tolerance {
            return Err(EnvironmentError::SumOutOfTolerance { sum, tolerance });
        }
        Ok(Self { steps, probs })
    }

    pub fn d(&self) -> usize {
        self.steps[0].len()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Support entries in lexicographic step order.
    pub fn entries(&self) -> impl Iterator<Item = (&[i64], f64)> + '_ {
        self.steps
            .iter()
            .map(|s| s.as_slice())
            .zip(self.probs.iter().copied())
    }

    pub fn steps(&self) -> &[Vec<i64>] {
        &self.steps
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of a given step, `0.0` if outside the support.
    pub fn prob_of(&self, step: &[i64]) -> f64 {
        match self.steps.binary_search_by(|s| s.as_slice().cmp(step)) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Expected step vector under this law.
    pub fn mean_jump(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d()];
        for (step, p) in self.entries() {
            for (m, &s) in mean.iter_mut().zip(step) {
                *m += p * s as f64;
            }
        }
        mean
    }

    /// True iff the support is exactly the `2d` unit vectors.
    pub fn is_unit_support(&self, d: usize) -> bool {
        if self.d() != d || self.len() != 2 * d {
            return false;
        }
        self.steps.iter().all(|s| {
            s.iter().map(|c| c.abs()).sum::<i64>() == 1
        })
    }
}

/// A periodic environment: torus shape plus one jump law per site.
///
/// The law at an arbitrary `x` in `Z^d` is the law at `canonical_site(x)`;
/// immutability after construction makes the value safely shareable across
/// threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    dims: TorusDims,
    laws: Vec<JumpLaw>,
    tolerance: f64,
}

impl Environment {
    /// `laws` must hold exactly one law per site, in site-index order.
    pub fn new(
        dims: TorusDims,
        laws: Vec<JumpLaw>,
        tolerance: f64,
    ) -> Result<Self, EnvironmentError> {
        let n = dims.torus_size();
        if laws.len() != n {
            return Err(EnvironmentError::SiteCountMismatch {
                expected: n,
                got: laws.len(),
            });
        }
        for law in &laws {
            if law.d() != dims.d() {
                return Err(EnvironmentError::DimensionMismatch {
                    expected: dims.d(),
                    got: law.d(),
                });
            }
        }
        Ok(Self {
            dims,
            laws,
            tolerance,
        })
    }

    pub fn dims(&self) -> &TorusDims {
        &self.dims
    }

    pub fn d(&self) -> usize {
        self.dims.d()
    }

    pub fn n_sites(&self) -> usize {
        self.dims.torus_size()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn law(&self, site: usize) -> &JumpLaw {
        &self.laws[site]
    }

    pub fn laws(&self) -> &[JumpLaw] {
        &self.laws
    }

    /// Law at an arbitrary lattice point (periodic extension).
    pub fn law_at(&self, x: &[i64]) -> Result<&JumpLaw, EnvironmentError> {
        Ok(&self.laws[self.dims.canonical_index(x)?])
    }

    /// True iff every site's support is exactly the `2d` unit vectors, all
    /// with positive probability.
    pub fn is_nearest_neighbour(&self) -> bool {
        let d = self.d();
        self.laws.iter().all(|law| law.is_unit_support(d))
    }

    /// True iff every unit step has positive probability at every site
    /// (supports may contain additional steps).
    pub fn unit_steps_strictly_positive(&self) -> bool {
        let d = self.d();
        let mut e = vec![0i64; d];
        self.laws.iter().all(|law| {
            (0..d).all(|i| {
                e.iter_mut().for_each(|c| *c = 0);
                e[i] = 1;
                let up = law.prob_of(&e) > 0.0;
                e[i] = -1;
                up && law.prob_of(&e) > 0.0
            })
        })
    }

    /// Report-style validation: never fails, lists what holds.
    pub fn validate(&self) -> ValidationReport {
        let mut sum_defects = Vec::new();
        for (idx, law) in self.laws.iter().enumerate() {
            let sum = law.sum();
            if (sum - 1.0).abs() > self.tolerance {
                sum_defects.push(SumDefect {
                    site: self.dims.coord_of(idx),
                    sum,
                });
            }
        }
        ValidationReport {
            tolerance: self.tolerance,
            sum_defects,
            finite_support: true,
            nearest_neighbour: self.is_nearest_neighbour(),
            unit_steps_strictly_positive: self.unit_steps_strictly_positive(),
        }
    }

    /// Environment translated by a lattice vector: the law of the result at
    /// `x` is the law of `self` at `x + shift`.
    pub fn translated(&self, shift: &[i64]) -> Result<Environment, EnvironmentError> {
        self.dims.check_dim(shift.len())?;
        let mut laws = Vec::with_capacity(self.n_sites());
        for coord in self.dims.sites() {
            let moved: Vec<i64> = coord.iter().zip(shift).map(|(&c, &s)| c + s).collect();
            laws.push(self.laws[self.dims.canonical_index(&moved)?].clone());
        }
        Environment::new(self.dims.clone(), laws, self.tolerance)
    }

    /// Environment with every step vector negated (spatial inversion).
    pub fn reflected(&self) -> Environment {
        let laws = self
            .laws
            .iter()
            .map(|law| {
                let entries = law
                    .entries()
                    .map(|(s, p)| (s.iter().map(|c| -c).collect(), p))
                    .collect();
                JumpLaw::new(entries, f64::INFINITY).expect("negating steps keeps a law valid")
            })
            .collect();
        Environment::new(self.dims.clone(), laws, self.tolerance).expect("shape unchanged")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SumDefect {
    pub site: Vec<i64>,
    pub sum: f64,
}

/// Outcome of [`Environment::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub tolerance: f64,
    pub sum_defects: Vec<SumDefect>,
    pub finite_support: bool,
    pub nearest_neighbour: bool,
    pub unit_steps_strictly_positive: bool,
}

impl ValidationReport {
    /// Hard checks only; the nearest-neighbour flags are informational.
    pub fn is_valid(&self) -> bool {
        self.sum_defects.is_empty() && self.finite_support
    }
}

/// Options for [`parse_environment_with`].
#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    /// Divide each site's probabilities by their raw sum instead of
    /// enforcing the sum tolerance.
    pub renormalize: bool,
    pub tolerance: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            renormalize: false,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// Parse an environment file with default options.
pub fn parse_environment(text: &str) -> Result<Environment, EnvironmentError> {
    parse_environment_with(text, &ParseOptions::default())
}

/// Parse an environment file.
///
/// The schema is a JSON document
/// `{ "dims": [M_1, ...], "sites": [ { "coord": [...], "jumps": [ { "step": [...], "prob": p }, ... ] }, ... ] }`
/// where `prob` is either a JSON number or an exact rational literal
/// `"p/q"`. Every torus site must appear exactly once; zero-probability
/// steps must be omitted.
pub fn parse_environment_with(
    text: &str,
    opts: &ParseOptions,
) -> Result<Environment, EnvironmentError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| EnvironmentError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    let obj = value
        .as_object()
        .ok_or_else(|| EnvironmentError::Schema("top level must be an object".into()))?;
    for key in obj.keys() {
        if key != "dims" && key != "sites" {
            return Err(EnvironmentError::Schema(format!("unknown field {key:?}")));
        }
    }

    let dims_val = obj
        .get("dims")
        .ok_or_else(|| EnvironmentError::Schema("missing field \"dims\"".into()))?;
    let dims = TorusDims::new(parse_int_array(dims_val, "dims")?)?;

    let sites = obj
        .get("sites")
        .and_then(|v| v.as_array())
        .ok_or_else(|| EnvironmentError::Schema("field \"sites\" must be an array".into()))?;

    let n = dims.torus_size();
    let mut laws: Vec<Option<JumpLaw>> = vec![None; n];
    for site in sites {
        let site_obj = site
            .as_object()
            .ok_or_else(|| EnvironmentError::Schema("each site must be an object".into()))?;
        for key in site_obj.keys() {
            if key != "coord" && key != "jumps" {
                return Err(EnvironmentError::Schema(format!(
                    "unknown site field {key:?}"
                )));
            }
        }
        let coord = parse_int_array(
            site_obj
                .get("coord")
                .ok_or_else(|| EnvironmentError::Schema("site missing \"coord\"".into()))?,
            "coord",
        )?;
        if coord.len() != dims.d() {
            return Err(EnvironmentError::DimensionMismatch {
                expected: dims.d(),
                got: coord.len(),
            });
        }
        if coord
            .iter()
            .zip(dims.extents())
            .any(|(&c, &m)| c < 0 || c >= m)
        {
            return Err(EnvironmentError::SiteOutOfRange {
                coord,
                dims: dims.extents().to_vec(),
            });
        }
        let jumps = site_obj
            .get("jumps")
            .and_then(|v| v.as_array())
            .ok_or_else(|| EnvironmentError::Schema("site field \"jumps\" must be an array".into()))?;
        let mut entries = Vec::with_capacity(jumps.len());
        for jump in jumps {
            let jump_obj = jump
                .as_object()
                .ok_or_else(|| EnvironmentError::Schema("each jump must be an object".into()))?;
            for key in jump_obj.keys() {
                if key != "step" && key != "prob" {
                    return Err(EnvironmentError::Schema(format!(
                        "unknown jump field {key:?}"
                    )));
                }
            }
            let step = parse_int_array(
                jump_obj
                    .get("step")
                    .ok_or_else(|| EnvironmentError::Schema("jump missing \"step\"".into()))?,
                "step",
            )?;
            let prob = parse_probability(
                jump_obj
                    .get("prob")
                    .ok_or_else(|| EnvironmentError::Schema("jump missing \"prob\"".into()))?,
            )?;
            entries.push((step, prob));
        }
        let law = if opts.renormalize {
            JumpLaw::renormalized(entries)
        } else {
            JumpLaw::new(entries, opts.tolerance)
        }
        .map_err(|e| EnvironmentError::AtSite {
            coord: coord.clone(),
            source: Box::new(e),
        })?;
        let idx = dims.site_index(&coord);
        if laws[idx].is_some() {
            return Err(EnvironmentError::DuplicateSite { coord });
        }
        laws[idx] = Some(law);
    }
    for (idx, slot) in laws.iter().enumerate() {
        if slot.is_none() {
            return Err(EnvironmentError::MissingSite {
                coord: dims.coord_of(idx),
            });
        }
    }
    let laws = laws.into_iter().map(|l| l.unwrap()).collect();
    Environment::new(dims, laws, opts.tolerance)
}

fn parse_int_array(value: &serde_json::Value, field: &str) -> Result<Vec<i64>, EnvironmentError> {
    let arr = value
        .as_array()
        .ok_or_else(|| EnvironmentError::Schema(format!("field {field:?} must be an array")))?;
    arr.iter()
        .map(|v| {
            v.as_i64().ok_or_else(|| {
                EnvironmentError::Schema(format!("field {field:?} must contain integers"))
            })
        })
        .collect()
}

fn parse_probability(value: &serde_json::Value) -> Result<f64, EnvironmentError> {
    match value {
        serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| EnvironmentError::BadProbability {
            literal: n.to_string(),
        }),
        serde_json::Value::String(s) => {
            let (p, q) = s.split_once('/').ok_or_else(|| {
                EnvironmentError::BadProbability { literal: s.clone() }
            })?;
            let p: i64 = p
                .trim()
                .parse()
                .map_err(|_| EnvironmentError::BadProbability { literal: s.clone() })?;
            let q: i64 = q
                .trim()
                .parse()
                .map_err(|_| EnvironmentError::BadProbability { literal: s.clone() })?;
            if q <= 0 {
                return Err(EnvironmentError::BadProbability { literal: s.clone() });
            }
            Ok(p as f64 / q as f64)
        }
        other => Err(EnvironmentError::BadProbability {
            literal: other.to_string(),
        }),
    }
}

/// Serialize an environment to the file schema: sites in lexicographic
/// coordinate order, steps in lexicographic order, probabilities with 17
/// significant digits (round-trips `f64` bit-exactly).
pub fn serialize_environment(env: &Environment) -> String {
    let mut out = String::new();
    out.push_str("{\n  \"dims\": ");
    write_int_array(&mut out, env.dims().extents());
    out.push_str(",\n  \"sites\": [\n");
    let n = env.n_sites();
    for idx in 0..n {
        let coord = env.dims().coord_of(idx);
        out.push_str("    { \"coord\": ");
        write_int_array(&mut out, &coord);
        out.push_str(", \"jumps\": [\n");
        let law = env.law(idx);
        for (k, (step, prob)) in law.entries().enumerate() {
            out.push_str("      { \"step\": ");
            write_int_array(&mut out, step);
            let _ = write!(out, ", \"prob\": {prob:.16e} }}");
            out.push_str(if k + 1 < law.len() { ",\n" } else { "\n" });
        }
        out.push_str("    ] }");
        out.push_str(if idx + 1 < n { ",\n" } else { "\n" });
    }
    out.push_str("  ]\n}\n");
    out
}

fn write_int_array(out: &mut String, values: &[i64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{v}");
    }
    out.push(']');
}

/// Two-dimensional single-site environment whose drift direction is nearly
/// orthogonal to its potential gradient: `p(e_1) = K eps`, `p(-e_1) = eps`,
/// `p(e_2) = (2/3)(1 - (K+1) eps)`, `p(-e_2) = (1/3)(1 - (K+1) eps)`.
///
/// Requires `K > 1`, `eps > 0`, and `(K+1) eps < 1` so all four weights are
/// positive.
pub fn make_counterexample(k_ratio: f64, epsilon: f64) -> Result<Environment, EnvironmentError> {
    if !(k_ratio.is_finite() && k_ratio > 1.0) {
        return Err(EnvironmentError::ParameterDomain(format!(
            "ratio must be finite and > 1, got {k_ratio}"
        )));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(EnvironmentError::ParameterDomain(format!(
            "epsilon must be finite and > 0, got {epsilon}"
        )));
    }
    if (k_ratio + 1.0) * epsilon >= 1.0 {
        return Err(EnvironmentError::ParameterDomain(format!(
            "(ratio + 1) * epsilon must be < 1, got {}",
            (k_ratio + 1.0) * epsilon
        )));
    }
    let rest = 1.0 - (k_ratio + 1.0) * epsilon;
    let dims = TorusDims::new(vec![1, 1])?;
    let law = JumpLaw::new(
        vec![
            (vec![1, 0], k_ratio * epsilon),
            (vec![-1, 0], epsilon),
            (vec![0, 1], 2.0 / 3.0 * rest),
            (vec![0, -1], rest / 3.0),
        ],
        1e-12,
    )?;
    Environment::new(dims, vec![law], DEFAULT_TOLERANCE)
}

/// Reversible nearest-neighbour environment from symmetric edge conductances
/// tilted by a linear potential.
///
/// `edge_weights[site * d + axis]` is the weight of the undirected edge
/// between `site` and `site + e_axis` (wrapping on the torus); `tilt` is the
/// linear growth rate `h` of the log-conductance. The resulting walk moves
/// with `p_x(e)` proportional to `c(x, x+e)` where
/// `c(x, x+e) = s(x, x+e) * exp(<h, x> + <h, x+e>)`, which is reversible by
/// construction and has average negative potential gradient exactly `2h`.
pub fn make_tilted_conductance(
    dims: &TorusDims,
    edge_weights: &[f64],
    tilt: &[f64],
) -> Result<Environment, EnvironmentError> {
    let d = dims.d();
    let n = dims.torus_size();
    if edge_weights.len() != n * d {
        return Err(EnvironmentError::ParameterDomain(format!(
            "need {} edge weights ({} sites x {} axes), got {}",
            n * d,
            n,
            d,
            edge_weights.len()
        )));
    }
    if tilt.len() != d {
        return Err(EnvironmentError::DimensionMismatch {
            expected: d,
            got: tilt.len(),
        });
    }
    if tilt.iter().any(|h| !h.is_finite()) {
        return Err(EnvironmentError::ParameterDomain(
            "tilt components must be finite".into(),
        ));
    }
    for (k, &w) in edge_weights.iter().enumerate() {
        if !w.is_finite() || w <= 0.0 {
            return Err(EnvironmentError::NonpositiveWeight {
                site: k / d,
                axis: k % d,
                weight: w,
            });
        }
    }

    let mut laws = Vec::with_capacity(n);
    for idx in 0..n {
        let coord = dims.coord_of(idx);
        let mut entries = Vec::with_capacity(2 * d);
        let mut point = coord.clone();
        for axis in 0..d {
            // Up-edge {x, x+e_axis} is stored at x, down-edge at x-e_axis.
            let up = edge_weights[idx * d + axis] * tilt[axis].exp();
            point.copy_from_slice(&coord);
            point[axis] -= 1;
            let down_idx = dims.canonical_index(&point)?;
            let down = edge_weights[down_idx * d + axis] * (-tilt[axis]).exp();

            let mut step = vec![0i64; d];
            step[axis] = 1;
            entries.push((step.clone(), up));
            step[axis] = -1;
            entries.push((step, down));
        }
        laws.push(JumpLaw::renormalized(entries)?);
    }
    Environment::new(dims.clone(), laws, DEFAULT_TOLERANCE)
}
