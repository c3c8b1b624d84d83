//! Heterogeneous mappings and the two regression conversions
//! `Y = Δη  →  Y_θ = M_θ θ  →  Y_TI = M_TI T_I(θ)`.
//!
//! A mapping `F` is heterogeneous when a scaling `Π(ω)` and a transformed
//! evaluator `T` exist with `Π(ω) F(x) = T(Ξ(ω) x)`, `Ξ(ω) = Ξ̄(ω) ω`.
//! Substituting the measured scaled quantity (`Δ ψ_ab` or `M_θ θ`) for
//! `Ξ(ω) x` then gives a measurable, division-free matrix whose adjugate
//! mixes the regression.
//!
//! Transforms here receive `ω` alongside the argument because the scaled
//! entries of the reference mappings (`Δ Y3`, `M_θ²`, …) mix both.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::par::{self, Execution};
use crate::plant::{self, ParameterVector, PlantDefinition};

pub trait HeterogeneousMapping: Send + Sync {
    fn name(&self) -> &str;
    fn input_dim(&self) -> usize;
    /// `(rows, cols)` of `F(x)`.
    fn shape(&self) -> (usize, usize);
    /// Declared `ℓ` with `det Π(ω) ≥ ω^ℓ`.
    fn degree(&self) -> f64;
    /// `F(x)`.
    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// `Π(ω)`, square of size `rows`.
    fn scaling(&self, omega: f64) -> DMatrix<f64>;
    /// `Ξ̄(ω)`.
    fn selection(&self, omega: f64) -> DMatrix<f64>;
    /// `T(ω, w)` for the argument `w = Ξ̄(ω) · (scaled input)`.
    fn transform(&self, omega: f64, arg: &DVector<f64>) -> DMatrix<f64>;

    fn xi(&self, omega: f64) -> DMatrix<f64> {
        self.selection(omega) * omega
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeterogeneityCheck {
    /// `‖Π(ω)F(x) − T(Ξ(ω)x)‖`.
    pub residual: f64,
    /// Same, divided by `1 + ‖Π(ω)F(x)‖`.
    pub relative_residual: f64,
    pub det_scaling: f64,
    /// `det Π(ω) ≥ ω^ℓ` (only checked for `ω > 0`).
    pub degree_bound_holds: bool,
}

pub fn check_heterogeneity(
    map: &dyn HeterogeneousMapping,
    omega: f64,
    x: &DVector<f64>,
) -> Result<HeterogeneityCheck> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::Precondition(format!(
            "heterogeneity check needs |omega| > 0, got {omega}"
        )));
    }
    if x.len() != map.input_dim() {
        return Err(Error::Dimension {
            what: "heterogeneity argument",
            expected: map.input_dim(),
            got: x.len(),
        });
    }
    let lhs = map.scaling(omega) * map.eval(x);
    let rhs = map.transform(omega, &(map.xi(omega) * x));
    let residual = (&lhs - rhs).norm();
    let det_scaling = linalg::determinant(&map.scaling(omega));
    let degree_bound_holds = if omega > 0.0 {
        let bound = omega.powf(map.degree());
        det_scaling >= bound - 1e-12 * bound.abs()
    } else {
        true
    };
    Ok(HeterogeneityCheck {
        residual,
        relative_residual: residual / (1.0 + lhs.norm()),
        det_scaling,
        degree_bound_holds,
    })
}

/// Exponent of `det Π(ω)` read off numerically from two scales.
pub fn observed_degree(map: &dyn HeterogeneousMapping) -> f64 {
    let d1 = linalg::determinant(&map.scaling(2.0)).abs();
    let d2 = linalg::determinant(&map.scaling(4.0)).abs();
    (d2 / d1).log2()
}

/// `η`-regression to `θ`-regression: selector and the pair `S`, `G`.
#[derive(Clone)]
pub struct ParameterMaps {
    pub selector: Vec<usize>,
    pub s_map: Arc<dyn HeterogeneousMapping>,
    pub g_map: Arc<dyn HeterogeneousMapping>,
    pub degree: f64,
}

/// `θ`-regression to `T_I`-regression: the pair `P`, `Q`.
#[derive(Clone)]
pub struct TransformMaps {
    pub p_map: Arc<dyn HeterogeneousMapping>,
    pub q_map: Arc<dyn HeterogeneousMapping>,
    pub degree: f64,
}

/// Both conversions for one plant family.
#[derive(Clone)]
pub struct MappingSet {
    pub name: String,
    pub n: usize,
    pub n_theta: usize,
    pub params: ParameterMaps,
    pub transform: TransformMaps,
}

impl fmt::Debug for MappingSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MappingSet")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("n_theta", &self.n_theta)
            .field("selector", &self.params.selector)
            .finish()
    }
}

impl MappingSet {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        params: ParameterMaps,
        transform: TransformMaps,
    ) -> Result<Self> {
        let n_theta = params.selector.len();
        if let Some(&i) = params.selector.iter().find(|&&i| i >= 3 * n) {
            return Err(Error::Config(format!(
                "selector index {i} out of range for eta of length {}",
                3 * n
            )));
        }
        Ok(Self {
            name: name.into(),
            n,
            n_theta,
            params,
            transform,
        })
    }

    pub fn ices2022_example() -> Self {
        Self::new(
            "ices2022_example",
            3,
            ParameterMaps {
                // ψ_a[2], ψ_b[1], ψ_b[3]
                selector: vec![1, 3, 5],
                s_map: Arc::new(reference::SMap),
                g_map: Arc::new(reference::GMap),
                degree: 9.0,
            },
            TransformMaps {
                p_map: Arc::new(reference::PMap),
                q_map: Arc::new(reference::QMap),
                degree: 4.0,
            },
        )
        .expect("reference selector is in range")
    }
}

/// Picks the `ψ_ab` components out of an `η`-shaped vector.
pub fn select_ab(selector: &[usize], v: &DVector<f64>) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(selector.len());
    for (k, &i) in selector.iter().enumerate() {
        if i >= v.len() {
            return Err(Error::Config(format!(
                "selector index {i} out of range for vector of length {}",
                v.len()
            )));
        }
        out[k] = v[i];
    }
    Ok(out)
}

/// `Y_θ = adj{T_G} T_S`, `M_θ = det{T_G}`, both evaluated at `Ξ̄(Δ) Y_ab`.
pub fn theta_regression(
    y_ab: &DVector<f64>,
    delta: f64,
    maps: &ParameterMaps,
) -> (DVector<f64>, f64) {
    let g = maps
        .g_map
        .transform(delta, &(maps.g_map.selection(delta) * y_ab));
    let s = maps
        .s_map
        .transform(delta, &(maps.s_map.selection(delta) * y_ab));
    let s = s.column(0).into_owned();
    (linalg::adjugate_mul(&g, &s), linalg::determinant(&g))
}

/// `Y_TI = adj{T_P} T_Q`, `M_TI = det{T_P}`, both evaluated at `Ξ̄(M_θ) Y_θ`.
pub fn ti_regression(
    y_theta: &DVector<f64>,
    m_theta: f64,
    maps: &TransformMaps,
) -> (DMatrix<f64>, f64) {
    let p = maps
        .p_map
        .transform(m_theta, &(maps.p_map.selection(m_theta) * y_theta));
    let q = maps
        .q_map
        .transform(m_theta, &(maps.q_map.selection(m_theta) * y_theta));
    (linalg::adjugate_mul_mat(&p, &q), linalg::determinant(&p))
}

/// Determinant of the central finite-difference Jacobian of `ψ_ab(θ)`.
pub fn jacobian_condition(
    psi_ab_of: &dyn Fn(&[f64]) -> DVector<f64>,
    theta: &ParameterVector,
    h_fd: f64,
) -> Result<f64> {
    if !(h_fd > 0.0) {
        return Err(Error::Precondition(format!(
            "h_fd must be positive, got {h_fd}"
        )));
    }
    let n = theta.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut th = theta.as_slice().to_vec();
    for j in 0..n {
        let orig = th[j];
        th[j] = orig + h_fd;
        let plus = psi_ab_of(&th);
        th[j] = orig - h_fd;
        let minus = psi_ab_of(&th);
        th[j] = orig;
        if plus.len() != n {
            return Err(Error::Dimension {
                what: "psi_ab",
                expected: n,
                got: plus.len(),
            });
        }
        jac.set_column(j, &((plus - minus) / (2.0 * h_fd)));
    }
    Ok(linalg::determinant(&jac))
}

/// The measurable regressions derived from one `(Y, Δ)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionBundle {
    pub y: DVector<f64>,
    pub delta: f64,
    pub y_ab: DVector<f64>,
    pub y_theta: DVector<f64>,
    pub m_theta: f64,
    pub y_ti: DMatrix<f64>,
    pub m_ti: f64,
}

impl RegressionBundle {
    pub fn compute(y: DVector<f64>, delta: f64, set: &MappingSet) -> Result<Self> {
        let y_ab = select_ab(&set.params.selector, &y)?;
        let (y_theta, m_theta) = theta_regression(&y_ab, delta, &set.params);
        let (y_ti, m_ti) = ti_regression(&y_theta, m_theta, &set.transform);
        Ok(Self {
            y,
            delta,
            y_ab,
            y_theta,
            m_theta,
            y_ti,
            m_ti,
        })
    }
}

/// `ψ_ab(θ)` through the numerical canonical-form construction.
pub fn psi_ab_numeric(
    plant: &PlantDefinition,
    set: &MappingSet,
    theta: &[f64],
) -> Result<DVector<f64>> {
    let th = ParameterVector::new(theta.to_vec())?;
    let cf = plant::canonical_for(plant, &th)?;
    select_ab(&set.params.selector, &cf.eta(&DVector::zeros(plant.n)))
}

/// The reference mappings for the three-state example plant.
pub mod reference {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn column(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    /// `Π_θ(Δ) = diag(Δ⁵, Δ², Δ²)`, shared by `S` and `G`.
    fn parameter_scaling(d: f64) -> DMatrix<f64> {
        diag(&[d.powi(5), d * d, d * d])
    }

    /// `Π_TI(M) = diag(M², M, M)`, shared by `P` and `Q`.
    fn transform_scaling(m: f64) -> DMatrix<f64> {
        diag(&[m * m, m, m])
    }

    pub struct SMap;
    pub struct GMap;
    pub struct PMap;
    pub struct QMap;

    impl HeterogeneousMapping for SMap {
        fn name(&self) -> &str {
            "S"
        }
        fn input_dim(&self) -> usize {
            3
        }
        fn shape(&self) -> (usize, usize) {
            (3, 1)
        }
        fn degree(&self) -> f64 {
            9.0
        }
        fn eval(&self, p: &DVector<f64>) -> DMatrix<f64> {
            let s = p[0] * p[1] + p[2];
            column(&[p[1] * s * s - p[1].powi(4) * p[2], -s, p[1] * p[0]])
        }
        fn scaling(&self, omega: f64) -> DMatrix<f64> {
            parameter_scaling(omega)
        }
        fn selection(&self, _omega: f64) -> DMatrix<f64> {
            DMatrix::identity(3, 3)
        }
        fn transform(&self, d: f64, y: &DVector<f64>) -> DMatrix<f64> {
            let s = y[0] * y[1] + d * y[2];
            column(&[y[1] * s * s - y[1].powi(4) * y[2], -s, y[1] * y[0]])
        }
    }

    impl HeterogeneousMapping for GMap {
        fn name(&self) -> &str {
            "G"
        }
        fn input_dim(&self) -> usize {
            3
        }
        fn shape(&self) -> (usize, usize) {
            (3, 3)
        }
        fn degree(&self) -> f64 {
            9.0
        }
        fn eval(&self, p: &DVector<f64>) -> DMatrix<f64> {
            diag(&[p[1].powi(3) * (p[0] * p[1] + p[2]), p[1] * p[1], p[0]])
        }
        fn scaling(&self, omega: f64) -> DMatrix<f64> {
            parameter_scaling(omega)
        }
        fn selection(&self, _omega: f64) -> DMatrix<f64> {
            DMatrix::identity(3, 3)
        }
        fn transform(&self, d: f64, y: &DVector<f64>) -> DMatrix<f64> {
            diag(&[
                y[1].powi(3) * (y[0] * y[1] + d * y[2]),
                y[1] * y[1],
                d * y[0],
            ])
        }
    }

    impl HeterogeneousMapping for PMap {
        fn name(&self) -> &str {
            "P"
        }
        fn input_dim(&self) -> usize {
            3
        }
        fn shape(&self) -> (usize, usize) {
            (3, 3)
        }
        fn degree(&self) -> f64 {
            4.0
        }
        fn eval(&self, th: &DVector<f64>) -> DMatrix<f64> {
            diag(&[th[1] * th[2], th[2], 1.0])
        }
        fn scaling(&self, omega: f64) -> DMatrix<f64> {
            transform_scaling(omega)
        }
        fn selection(&self, _omega: f64) -> DMatrix<f64> {
            DMatrix::identity(3, 3)
        }
        fn transform(&self, m: f64, y: &DVector<f64>) -> DMatrix<f64> {
            diag(&[y[1] * y[2], y[2], m])
        }
    }

    impl HeterogeneousMapping for QMap {
        fn name(&self) -> &str {
            "Q"
        }
        fn input_dim(&self) -> usize {
            3
        }
        fn shape(&self) -> (usize, usize) {
            (3, 3)
        }
        fn degree(&self) -> f64 {
            4.0
        }
        fn eval(&self, th: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    -th[1] * (th[0] + th[1]),
                    0.0,
                    1.0,
                    0.0,
                    -1.0,
                    0.0,
                    1.0,
                    0.0,
                    0.0,
                ],
            )
        }
        fn scaling(&self, omega: f64) -> DMatrix<f64> {
            transform_scaling(omega)
        }
        fn selection(&self, _omega: f64) -> DMatrix<f64> {
            DMatrix::identity(3, 3)
        }
        fn transform(&self, m: f64, y: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(
                3,
                3,
                &[-y[1] * (y[0] + y[1]), 0.0, m * m, 0.0, -m, 0.0, m, 0.0, 0.0],
            )
        }
    }
}

/// Mapping sets addressable by name (matching plant names).
#[derive(Debug, Clone)]
pub struct MappingRegistry {
    sets: BTreeMap<String, MappingSet>,
}

impl Default for MappingRegistry {
    fn default() -> Self {
        let mut r = Self {
            sets: BTreeMap::new(),
        };
        r.register(MappingSet::ices2022_example());
        r
    }
}

impl MappingRegistry {
    pub fn register(&mut self, set: MappingSet) {
        self.sets.insert(set.name.clone(), set);
    }

    pub fn get(&self, name: &str) -> Option<&MappingSet> {
        self.sets.get(name)
    }
}

/// Tolerances of the mapping property suite.
pub mod tolerance {
    /// Pipeline equivalence, relative to `|M|·‖truth‖`.
    pub const PIPELINE: f64 = 1e-9;
    /// Relative slack of the determinant lower-bound chains.
    pub const LOWER_BOUND: f64 = 1e-9;
    /// Heterogeneity residual, relative to `1 + ‖Π F‖`.
    pub const HETEROGENEITY: f64 = 1e-10;
    /// Samples whose `|det G(ψ_ab)|` falls below this are rejected as
    /// non-identifiable.
    pub const DET_G_FLOOR: f64 = 1e-6;
}

/// Outcome of one sampled `(θ, Δ)` pipeline check.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSample {
    pub theta: Vec<f64>,
    pub delta: f64,
    /// `‖Y_θ − M_θ θ‖ / (|M_θ| ‖θ‖)`.
    pub theta_error: f64,
    /// `‖Y_TI − M_TI T_I‖ / (|M_TI| ‖T_I‖)`, with `T_I` from the
    /// observability construction.
    pub ti_error: f64,
    /// `|M_θ| / (|Δ|^{ℓ_θ} |det G(ψ_ab)|)`.
    pub theta_bound_ratio: f64,
    /// `|M_TI| / (|M_θ|^{ℓ_TI} |det P(θ)|)`.
    pub ti_bound_ratio: f64,
}

/// Runs the exact-input pipeline for one parameter sample.
///
/// `None` when the sample is unobservable or below the identifiability floor.
pub fn pipeline_sample(
    plant: &PlantDefinition,
    set: &MappingSet,
    theta: &[f64],
    delta: f64,
) -> Result<Option<PipelineSample>> {
    let th = ParameterVector::new(theta.to_vec())?;
    let cf = match plant::canonical_for(plant, &th) {
        Ok(cf) => cf,
        Err(Error::Unobservable { .. }) | Err(Error::Singular(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let eta = cf.eta(&DVector::zeros(plant.n));
    let psi_ab = select_ab(&set.params.selector, &eta)?;
    let det_g = linalg::determinant(&set.params.g_map.eval(&psi_ab));
    if det_g.abs() < tolerance::DET_G_FLOOR {
        return Ok(None);
    }
    let bundle = RegressionBundle::compute(&eta * delta, delta, set)?;
    let theta_v = th.to_dvector();
    let theta_error = (&bundle.y_theta - &theta_v * bundle.m_theta).norm()
        / (bundle.m_theta.abs() * theta_v.norm());
    let ti_error =
        (&bundle.y_ti - &cf.t_i * bundle.m_ti).norm() / (bundle.m_ti.abs() * cf.t_i.norm());
    let theta_bound_ratio =
        bundle.m_theta.abs() / (delta.abs().powf(set.params.degree) * det_g.abs());
    let det_p = linalg::determinant(&set.transform.p_map.eval(&theta_v));
    let ti_bound_ratio =
        bundle.m_ti.abs() / (bundle.m_theta.abs().powf(set.transform.degree) * det_p.abs());
    Ok(Some(PipelineSample {
        theta: theta.to_vec(),
        delta,
        theta_error,
        ti_error,
        theta_bound_ratio,
        ti_bound_ratio,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingReport {
    pub requested: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub max_theta_error: f64,
    pub max_ti_error: f64,
    pub min_theta_bound_ratio: f64,
    pub min_ti_bound_ratio: f64,
    /// Largest relative heterogeneity residual per mapping (`S`, `G`, `P`, `Q`).
    pub max_heterogeneity: Vec<(String, f64)>,
    pub degree_bound_violations: usize,
    pub declared_degrees_match: bool,
}

impl MappingReport {
    pub fn pipeline_ok(&self) -> bool {
        self.accepted > 0
            && self.max_theta_error <= tolerance::PIPELINE
            && self.max_ti_error <= tolerance::PIPELINE
    }

    pub fn bounds_ok(&self) -> bool {
        self.accepted > 0
            && self.min_theta_bound_ratio >= 1.0 - tolerance::LOWER_BOUND
            && self.min_ti_bound_ratio >= 1.0 - tolerance::LOWER_BOUND
    }

    pub fn heterogeneity_ok(&self) -> bool {
        self.degree_bound_violations == 0
            && self.declared_degrees_match
            && self
                .max_heterogeneity
                .iter()
                .all(|(_, r)| *r < tolerance::HETEROGENEITY)
    }

    pub fn passed(&self) -> bool {
        self.pipeline_ok() && self.bounds_ok() && self.heterogeneity_ok()
    }
}

impl fmt::Display for MappingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "samples: {} accepted, {} rejected as degenerate",
            self.accepted, self.rejected
        )?;
        writeln!(f, "max ‖Y_θ − M_θ θ‖ (rel): {:e}", self.max_theta_error)?;
        writeln!(f, "max ‖Y_TI − M_TI T_I‖ (rel): {:e}", self.max_ti_error)?;
        writeln!(f, "min |M_θ| / bound: {}", self.min_theta_bound_ratio)?;
        writeln!(f, "min |M_TI| / bound: {}", self.min_ti_bound_ratio)?;
        for (name, r) in &self.max_heterogeneity {
            writeln!(f, "max heterogeneity residual {name}: {r:e}")?;
        }
        writeln!(
            f,
            "degree bound violations: {}, declared degrees match: {}",
            self.degree_bound_violations, self.declared_degrees_match
        )?;
        write!(f, "result: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

fn signed_magnitude(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let m = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        -m
    } else {
        m
    }
}

/// Property suite over random parameters: pipeline equivalence against the
/// independent canonical-form `T_I`, the determinant lower-bound chains, and
/// heterogeneity of every mapping on random `(ω, x)`.
///
/// Samples are drawn up front from a seeded generator, so the report does not
/// depend on `exec`.
pub fn verify_mappings(
    plant: &PlantDefinition,
    set: &MappingSet,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<MappingReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(Vec<f64>, f64)> = (0..samples)
        .map(|_| {
            let theta = (0..plant.n_theta)
                .map(|_| signed_magnitude(&mut rng, 0.2, 2.0))
                .collect();
            (theta, rng.random_range(0.5..2.0))
        })
        .collect();
    let outcomes = par::map(exec, &draws, |(theta, delta)| {
        pipeline_sample(plant, set, theta, *delta)
    });
    let mut accepted = Vec::with_capacity(samples);
    for o in outcomes {
        if let Some(s) = o? {
            accepted.push(s);
        }
    }

    let mappings: [&dyn HeterogeneousMapping; 4] = [
        set.params.s_map.as_ref(),
        set.params.g_map.as_ref(),
        set.transform.p_map.as_ref(),
        set.transform.q_map.as_ref(),
    ];
    let het_draws: Vec<(f64, Vec<f64>)> = (0..samples.max(1) * 10)
        .map(|_| {
            let omega = signed_magnitude(&mut rng, 0.1, 3.0);
            let x = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            (omega, x)
        })
        .collect();
    let mut max_heterogeneity = Vec::new();
    let mut degree_bound_violations = 0;
    for m in mappings {
        let checks = par::map(exec, &het_draws, |(omega, x)| {
            let x = DVector::from_column_slice(&x[..m.input_dim().min(x.len())]);
            check_heterogeneity(m, *omega, &x)
        });
        let mut worst: f64 = 0.0;
        for c in checks {
            let c = c?;
            worst = worst.max(c.relative_residual);
            if !c.degree_bound_holds {
                degree_bound_violations += 1;
            }
        }
        max_heterogeneity.push((m.name().to_string(), worst));
    }
    let declared_degrees_match = (observed_degree(set.params.g_map.as_ref()) - set.params.degree).abs()
        < 1e-9
        && (observed_degree(set.transform.p_map.as_ref()) - set.transform.degree).abs() < 1e-9;

    let fold_max = |f: fn(&PipelineSample) -> f64| accepted.iter().map(f).fold(0.0, f64::max);
    let fold_min =
        |f: fn(&PipelineSample) -> f64| accepted.iter().map(f).fold(f64::INFINITY, f64::min);
    Ok(MappingReport {
        requested: samples,
        accepted: accepted.len(),
        rejected: samples - accepted.len(),
        max_theta_error: fold_max(|s| s.theta_error),
        max_ti_error: fold_max(|s| s.ti_error),
        min_theta_bound_ratio: fold_min(|s| s.theta_bound_ratio),
        min_ti_bound_ratio: fold_min(|s| s.ti_bound_ratio),
        max_heterogeneity,
        degree_bound_violations,
        declared_degrees_match,
    })
}
