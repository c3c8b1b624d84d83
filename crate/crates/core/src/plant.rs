//! Overparametrized plants `x' = A(θ)x + B(θ)u, y = Cᵀx` and the similarity
//! transform that puts them in observer canonical form.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Default cap on the observability-matrix condition number.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// Unknown physical parameters of a plant.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation {
                field: format!("theta[{i}]"),
                msg: "must be finite".into(),
            });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

type MatrixEval = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type VectorEval = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;

/// A named plant family: closed-form evaluators for `A(θ)` and `B(θ)` plus the
/// output direction `C`.
#[derive(Clone)]
pub struct PlantDefinition {
    pub name: String,
    pub n: usize,
    pub n_theta: usize,
    pub c: DVector<f64>,
    a_of: MatrixEval,
    b_of: VectorEval,
}

impl fmt::Debug for PlantDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantDefinition")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("n_theta", &self.n_theta)
            .field("c", &self.c.as_slice())
            .finish()
    }
}

impl PlantDefinition {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        n_theta: usize,
        c: DVector<f64>,
        a_of: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        b_of: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            n,
            n_theta,
            c,
            a_of: Arc::new(a_of),
            b_of: Arc::new(b_of),
        }
    }

    /// The three-state plant used in the reference experiment:
    ///
    /// ```text
    /// A = [[0, θ1+θ2, 0], [-θ2, 0, θ2], [0, -θ3, 0]],  B = (0, 0, θ3),  C = (0, 0, 1)
    /// ```
    pub fn ices2022_example() -> Self {
        Self::new(
            "ices2022_example",
            3,
            3,
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
            |th| {
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[
                        0.0,
                        th[0] + th[1],
                        0.0,
                        -th[1],
                        0.0,
                        th[1],
                        0.0,
                        -th[2],
                        0.0,
                    ],
                )
            },
            |th| DVector::from_vec(vec![0.0, 0.0, th[2]]),
        )
    }
}

/// Evaluates `A(θ)` and `B(θ)`, checking shapes and finiteness.
pub fn eval_plant(
    plant: &PlantDefinition,
    theta: &ParameterVector,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if theta.len() != plant.n_theta {
        return Err(Error::Dimension {
            what: "theta",
            expected: plant.n_theta,
            got: theta.len(),
        });
    }
    let a = (plant.a_of)(theta.as_slice());
    let b = (plant.b_of)(theta.as_slice());
    if a.shape() != (plant.n, plant.n) {
        return Err(Error::Config(format!(
            "plant `{}` returned A of shape {:?}",
            plant.name,
            a.shape()
        )));
    }
    if b.len() != plant.n {
        return Err(Error::Dimension {
            what: "B(theta)",
            expected: plant.n,
            got: b.len(),
        });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Config(format!(
            "plant `{}` produced non-finite matrices",
            plant.name
        )));
    }
    Ok((a, b))
}

/// Rows `Cᵀ, CᵀA, …, CᵀA^{n-1}`.
pub fn observability_matrix(a: &DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    let mut row = c.transpose();
    for i in 0..n {
        out.set_row(i, &row);
        row = &row * a;
    }
    out
}

/// Observer canonical form of a plant at one parameter value.
///
/// `ξ = T x`, `x = T_I ξ`; in canonical coordinates
/// `ξ' = A0 ξ + ψ_a y + ψ_b u` and `y = output_scale · C0ᵀ ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalForm {
    pub t_i: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub psi_a: DVector<f64>,
    pub psi_b: DVector<f64>,
    pub a0: DMatrix<f64>,
    pub c0: DVector<f64>,
    /// `Cᵀ T_I e1`; equals 1 for the construction used here.
    pub output_scale: f64,
}

impl CanonicalForm {
    pub fn n(&self) -> usize {
        self.t_i.nrows()
    }

    /// `η = col{ψ_a, ψ_b, ξ0}` with `ξ0 = T x0`.
    pub fn eta(&self, x0: &DVector<f64>) -> DVector<f64> {
        let xi0 = &self.t * x0;
        let n = self.n();
        let mut eta = DVector::zeros(3 * n);
        eta.rows_mut(0, n).copy_from(&self.psi_a);
        eta.rows_mut(n, n).copy_from(&self.psi_b);
        eta.rows_mut(2 * n, n).copy_from(&xi0);
        eta
    }
}

pub fn build_canonical(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
) -> Result<CanonicalForm> {
    build_canonical_with_cap(a, b, c, DEFAULT_CONDITION_CAP)
}

pub fn build_canonical_with_cap(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    condition_cap: f64,
) -> Result<CanonicalForm> {
    let n = a.nrows();
    if !a.is_square() || b.len() != n || c.len() != n {
        return Err(Error::Dimension {
            what: "canonical form inputs",
            expected: n,
            got: b.len().min(c.len()),
        });
    }
    let obs = observability_matrix(a, c);
    let condition = linalg::condition_number(&obs);
    if !(condition < condition_cap) {
        return Err(Error::Unobservable { condition });
    }
    let obs_inv = linalg::inverse(&obs, "observability matrix")
        .map_err(|_| Error::Unobservable { condition })?;
    let o_n = obs_inv.column(n - 1).into_owned();

    // columns A^{n-1} O_n, A^{n-2} O_n, ..., O_n
    let mut t_i = DMatrix::zeros(n, n);
    let mut col = o_n;
    for k in (0..n).rev() {
        t_i.set_column(k, &col);
        col = a * col;
    }
    let t = linalg::inverse(&t_i, "similarity transform")?;
    let a0 = linalg::shift_matrix(n);
    let c0 = linalg::basis(n, 0);
    let psi_a = &t * a * &t_i * &c0;
    let psi_b = &t * b;
    let output_scale = (c.transpose() * &t_i * &c0)[0];
    Ok(CanonicalForm {
        t_i,
        t,
        psi_a,
        psi_b,
        a0,
        c0,
        output_scale,
    })
}

/// Canonical form of `plant` at `theta`.
pub fn canonical_for(plant: &PlantDefinition, theta: &ParameterVector) -> Result<CanonicalForm> {
    let (a, b) = eval_plant(plant, theta)?;
    build_canonical(&a, &b, &plant.c)
}

/// Residuals of the three canonical-form identities (Frobenius norms):
/// `T A T_I = A0 + ψ_a C0ᵀ`, `T B = ψ_b`, and `Cᵀ T_I ∥ C0ᵀ`.
pub fn similarity_residuals(
    plant: &PlantDefinition,
    theta: &ParameterVector,
    cf: &CanonicalForm,
) -> Result<(f64, f64, f64)> {
    let (a, b) = eval_plant(plant, theta)?;
    Ok(residuals_for(&a, &b, &plant.c, cf))
}

pub fn residuals_for(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    cf: &CanonicalForm,
) -> (f64, f64, f64) {
    let r1 = (&cf.t * a * &cf.t_i - &cf.a0 - &cf.psi_a * cf.c0.transpose()).norm();
    let r2 = (&cf.t * b - &cf.psi_b).norm();
    let ct = c.transpose() * &cf.t_i;
    let scale = (&ct * &cf.c0)[0];
    let r3 = (ct - cf.c0.transpose() * scale).norm();
    (r1, r2, r3)
}

/// Plants addressable by name from scenario files.
#[derive(Debug, Clone)]
pub struct PlantRegistry {
    plants: BTreeMap<String, PlantDefinition>,
}

impl Default for PlantRegistry {
    fn default() -> Self {
        let mut r = Self {
            plants: BTreeMap::new(),
        };
        r.register(PlantDefinition::ices2022_example());
        r
    }
}

impl PlantRegistry {
    pub fn register(&mut self, plant: PlantDefinition) {
        self.plants.insert(plant.name.clone(), plant);
    }

    pub fn get(&self, name: &str) -> Option<&PlantDefinition> {
        self.plants.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.plants.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn theta(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec()).unwrap()
    }

    fn mat(rows: &[[f64; 3]; 3]) -> DMatrix<f64> {
        DMatrix::from_fn(3, 3, |i, j| rows[i][j])
    }

    /// Closed-form inverse transform of the reference plant.
    fn t_i_closed_form(th: &[f64]) -> DMatrix<f64> {
        let (t1, t2, t3) = (th[0], th[1], th[2]);
        mat(&[
            [-(t1 + t2) / t3, 0.0, 1.0 / (t2 * t3)],
            [0.0, -1.0 / t3, 0.0],
            [1.0, 0.0, 0.0],
        ])
    }

    #[test]
    fn eval_reference_plant() {
        let p = PlantDefinition::ices2022_example();
        let (a, b) = eval_plant(&p, &theta(&[1.0, 1.0, -1.0])).unwrap();
        assert_eq!(
            a,
            mat(&[[0.0, 2.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        );
        assert_eq!(b.as_slice(), &[0.0, 0.0, -1.0]);

        let (a, b) = eval_plant(&p, &theta(&[0.0, 0.0, 0.0])).unwrap();
        assert!(a.iter().all(|v| *v == 0.0));
        assert!(b.iter().all(|v| *v == 0.0));

        assert!(matches!(
            eval_plant(&p, &theta(&[1.0, 1.0])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn non_finite_parameters_rejected() {
        assert!(ParameterVector::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn observability_matrix_examples() {
        let p = PlantDefinition::ices2022_example();
        let (a, _) = eval_plant(&p, &theta(&[1.0, 1.0, -1.0])).unwrap();
        let o = observability_matrix(&a, &p.c);
        assert_eq!(
            o,
            mat(&[[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
        );

        let e1 = linalg::basis(3, 0);
        let o = observability_matrix(&DMatrix::identity(3, 3), &e1);
        for i in 0..3 {
            assert_eq!(o.row(i).transpose(), e1);
        }

        let o = observability_matrix(&linalg::shift_matrix(3), &e1);
        assert_eq!(o, DMatrix::identity(3, 3));
    }

    #[test]
    fn canonical_form_of_reference_plant() {
        let p = PlantDefinition::ices2022_example();
        let th = theta(&[1.0, 1.0, -1.0]);
        let cf = canonical_for(&p, &th).unwrap();
        let expected = mat(&[[2.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!((&cf.t_i - expected).norm() < 1e-12);
        assert!((&cf.psi_a - DVector::from_vec(vec![0.0, -1.0, 0.0])).norm() < 1e-12);
        assert!((&cf.psi_b - DVector::from_vec(vec![-1.0, 0.0, -2.0])).norm() < 1e-12);
        assert_eq!(cf.c0, linalg::basis(3, 0));
        assert!((cf.output_scale - 1.0).abs() < 1e-12);
        assert!((&cf.t * &cf.t_i - DMatrix::identity(3, 3)).norm() < 1e-12);
        let (r1, r2, r3) = similarity_residuals(&p, &th, &cf).unwrap();
        assert!(r1 < 1e-10 && r2 < 1e-10 && r3 < 1e-10);
    }

    #[test]
    fn canonical_plant_maps_to_identity() {
        let v = DVector::from_vec(vec![-2.0, 0.5, 3.0]);
        let a = linalg::shift_matrix(3) + &v * linalg::basis(3, 0).transpose();
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let cf = build_canonical(&a, &b, &linalg::basis(3, 0)).unwrap();
        assert!((&cf.t_i - DMatrix::identity(3, 3)).norm() < 1e-12);
        assert!((&cf.psi_a - v).norm() < 1e-12);
        let (r1, r2, r3) = residuals_for(&a, &b, &linalg::basis(3, 0), &cf);
        assert_eq!((r1, r2, r3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unobservable_plant_rejected() {
        let err = build_canonical(
            &DMatrix::identity(3, 3),
            &DVector::zeros(3),
            &linalg::basis(3, 0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unobservable { condition } if condition > 1e12));
    }

    #[test]
    fn perturbed_transform_breaks_identity() {
        let p = PlantDefinition::ices2022_example();
        let th = theta(&[1.0, 1.0, -1.0]);
        let mut cf = canonical_for(&p, &th).unwrap();
        cf.t_i[(0, 1)] += 0.1;
        let (r1, _, _) = similarity_residuals(&p, &th, &cf).unwrap();
        assert!(r1 > 0.0);
    }

    fn nonzero_param() -> impl Strategy<Value = f64> {
        (0.2f64..2.0, any::<bool>()).prop_map(|(m, neg)| if neg { -m } else { m })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn canonical_identities_hold(t1 in nonzero_param(), t2 in nonzero_param(), t3 in nonzero_param()) {
            let p = PlantDefinition::ices2022_example();
            let th = theta(&[t1, t2, t3]);
            let (a, b) = eval_plant(&p, &th).unwrap();
            let cf = build_canonical(&a, &b, &p.c).unwrap();
            let (r1, r2, r3) = residuals_for(&a, &b, &p.c, &cf);
            let scale = 1.0 + cf.t.norm() * a.norm() * cf.t_i.norm();
            prop_assert!(r1 < 1e-8 * scale);
            prop_assert!(r2 < 1e-8 * (1.0 + cf.t.norm() * b.norm()));
            prop_assert!(r3 < 1e-10);

            let closed = t_i_closed_form(&[t1, t2, t3]);
            for (x, y) in cf.t_i.iter().zip(closed.iter()) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }
    }
}
