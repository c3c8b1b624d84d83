//! Filter bank, regressor and determinant-based mixing that turn input/output
//! data into the scalar regressions `Y = Δ η` and the state parametrization
//! `ξ = z + Hᵀ η`, `Hᵀ = [Ω P Φ]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Injection gain `K`.
    pub k: DVector<f64>,
    /// Damping ratio of the mixing accumulators (1/s).
    pub sigma: f64,
    /// Amplitude modulator applied to `adj` and `det`.
    pub k_amp: f64,
    /// `A_K = A0 - K C0ᵀ`, Hurwitz.
    pub a_k: DMatrix<f64>,
}

impl FilterConfig {
    pub fn new(k: DVector<f64>, sigma: f64, k_amp: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Validation {
                field: "filter.sigma".into(),
                msg: format!("must be positive, got {sigma}"),
            });
        }
        if !(k_amp > 0.0) || !k_amp.is_finite() {
            return Err(Error::Validation {
                field: "filter.k_amp".into(),
                msg: format!("must be positive, got {k_amp}"),
            });
        }
        let n = k.len();
        if n == 0 {
            return Err(Error::Validation {
                field: "filter.k".into(),
                msg: "must not be empty".into(),
            });
        }
        let a_k = linalg::shift_matrix(n) - &k * linalg::basis(n, 0).transpose();
        let max_real = a_k
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if !(max_real < 0.0) {
            return Err(Error::NotHurwitz { max_real });
        }
        Ok(Self {
            k,
            sigma,
            k_amp,
            a_k,
        })
    }

    pub fn n(&self) -> usize {
        self.k.len()
    }
}

/// Stacked unknowns `η = col{ψ_a, ψ_b, ξ0}`: canonical coefficients and the
/// initial canonical state.
#[derive(Debug, Clone, PartialEq)]
pub struct Unknowns(DVector<f64>);

impl Unknowns {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if !values.len().is_multiple_of(3) || values.is_empty() {
            return Err(Error::Dimension {
                what: "eta",
                expected: 3 * (values.len() / 3).max(1),
                got: values.len(),
            });
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(3 * n))
    }

    pub fn n(&self) -> usize {
        self.0.len() / 3
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn psi_a(&self) -> DVector<f64> {
        self.0.rows(0, self.n()).into_owned()
    }

    pub fn psi_b(&self) -> DVector<f64> {
        self.0.rows(self.n(), self.n()).into_owned()
    }

    pub fn xi0(&self) -> DVector<f64> {
        self.0.rows(2 * self.n(), self.n()).into_owned()
    }
}

/// State of the filter bank and the mixing accumulators.
///
/// Also used for the time derivative of that state.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub z: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub q_bar: DVector<f64>,
    pub phi_bar: DMatrix<f64>,
    pub t0: f64,
}

impl FilterState {
    /// Initial conditions at `t0`: everything zero except `Φ = I`.
    pub fn initial(n: usize, t0: f64) -> Self {
        Self {
            z: DVector::zeros(n),
            omega: DMatrix::zeros(n, n),
            p: DMatrix::zeros(n, n),
            phi: DMatrix::identity(n, n),
            q_bar: DVector::zeros(3 * n),
            phi_bar: DMatrix::zeros(3 * n, 3 * n),
            t0,
        }
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// Number of scalars in the packed representation.
    pub fn packed_len(n: usize) -> usize {
        n + 3 * n * n + 3 * n + 9 * n * n
    }

    pub fn pack_into(&self, out: &mut [f64]) {
        let mut off = 0;
        for part in [
            self.z.as_slice(),
            self.omega.as_slice(),
            self.p.as_slice(),
            self.phi.as_slice(),
            self.q_bar.as_slice(),
            self.phi_bar.as_slice(),
        ] {
            out[off..off + part.len()].copy_from_slice(part);
            off += part.len();
        }
    }

    pub fn unpack(n: usize, data: &[f64], t0: f64) -> Self {
        let mut off = 0;
        let mut take = |len: usize| {
            let s = &data[off..off + len];
            off += len;
            s
        };
        Self {
            z: DVector::from_column_slice(take(n)),
            omega: DMatrix::from_column_slice(n, n, take(n * n)),
            p: DMatrix::from_column_slice(n, n, take(n * n)),
            phi: DMatrix::from_column_slice(n, n, take(n * n)),
            q_bar: DVector::from_column_slice(take(3 * n)),
            phi_bar: DMatrix::from_column_slice(3 * n, 3 * n, take(9 * n * n)),
            t0,
        }
    }

    /// `Hᵀ = [Ω P Φ]`, an `n × 3n` matrix.
    pub fn h_transpose(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut h = DMatrix::zeros(n, 3 * n);
        h.columns_mut(0, n).copy_from(&self.omega);
        h.columns_mut(n, n).copy_from(&self.p);
        h.columns_mut(2 * n, n).copy_from(&self.phi);
        h
    }
}

/// `q = y - C0ᵀ z`, `φ = col{Ωᵀ C0, Pᵀ C0, Φᵀ C0}`.
///
/// With `C0 = e1`, `Mᵀ C0` is the first row of `M`.
pub fn regressor(fs: &FilterState, y: f64) -> (f64, DVector<f64>) {
    let n = fs.n();
    let q = y - fs.z[0];
    let mut phi = DVector::zeros(3 * n);
    for j in 0..n {
        phi[j] = fs.omega[(0, j)];
        phi[n + j] = fs.p[(0, j)];
        phi[2 * n + j] = fs.phi[(0, j)];
    }
    (q, phi)
}

pub fn filter_derivatives(
    fs: &FilterState,
    y: f64,
    u: f64,
    cfg: &FilterConfig,
    t: f64,
) -> FilterState {
    let n = fs.n();
    let a_k = &cfg.a_k;
    let eye = DMatrix::<f64>::identity(n, n);
    let (q, phi) = regressor(fs, y);
    let w = (-cfg.sigma * (t - fs.t0)).exp();
    FilterState {
        z: a_k * &fs.z + &cfg.k * y,
        omega: a_k * &fs.omega + &eye * y,
        p: a_k * &fs.p + &eye * u,
        phi: a_k * &fs.phi,
        q_bar: &phi * (w * q),
        // φφᵀ first so the derivative is bitwise symmetric
        phi_bar: (&phi * phi.transpose()) * w,
        t0: fs.t0,
    }
}

/// Mixed regression `Y = k adj(φ̄) q̄`, `Δ = k det(φ̄)`.
pub fn drem_outputs(fs: &FilterState, cfg: &FilterConfig) -> (DVector<f64>, f64) {
    let y = linalg::adjugate_mul(&fs.phi_bar, &fs.q_bar) * cfg.k_amp;
    let delta = cfg.k_amp * linalg::determinant(&fs.phi_bar);
    (y, delta)
}

/// `ξ̂ = z + Ω ψ̂_a + P ψ̂_b + Φ ξ̂0`.
pub fn xi_estimate(fs: &FilterState, eta_hat: &Unknowns) -> DVector<f64> {
    &fs.z + &fs.omega * eta_hat.psi_a() + &fs.p * eta_hat.psi_b() + &fs.phi * eta_hat.xi0()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_cfg() -> FilterConfig {
        FilterConfig::new(DVector::from_vec(vec![3.0, 3.0, 1.0]), 5.0, 1e7).unwrap()
    }

    #[test]
    fn a_k_is_companion_of_gain() {
        let cfg = reference_cfg();
        let expected =
            DMatrix::from_row_slice(3, 3, &[-3.0, 1.0, 0.0, -3.0, 0.0, 1.0, -1.0, 0.0, 0.0]);
        assert_eq!(cfg.a_k, expected);
    }

    #[test]
    fn unstable_gain_and_bad_sigma_rejected() {
        let k = DVector::from_vec(vec![-1.0, 0.0, 0.0]);
        assert!(matches!(
            FilterConfig::new(k, 5.0, 1.0),
            Err(Error::NotHurwitz { .. })
        ));
        let k = DVector::from_vec(vec![3.0, 3.0, 1.0]);
        assert!(FilterConfig::new(k.clone(), -1.0, 1.0).is_err());
        assert!(FilterConfig::new(k, 1.0, 0.0).is_err());
    }

    #[test]
    fn derivatives_at_initial_time() {
        let cfg = reference_cfg();
        let fs = FilterState::initial(3, 0.0);
        let d = filter_derivatives(&fs, 2.0, 0.0, &cfg, 0.0);
        assert_eq!(d.z, &cfg.k * 2.0);
        assert_eq!(d.phi, cfg.a_k);
        assert_eq!(d.omega, DMatrix::identity(3, 3) * 2.0);
        assert!(d.p.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_signals_only_move_phi_blocks() {
        let cfg = reference_cfg();
        let fs = FilterState::initial(3, 0.0);
        let d = filter_derivatives(&fs, 0.0, 0.0, &cfg, 0.3);
        assert!(d
            .z
            .iter()
            .chain(d.omega.iter())
            .chain(d.p.iter())
            .all(|v| *v == 0.0));
        assert!(d.q_bar.iter().all(|v| *v == 0.0));
        assert!(d.phi.iter().any(|v| *v != 0.0));
        // only the Φ-Φ block of φ̄ is excited
        for i in 0..9 {
            for j in 0..9 {
                if i < 6 || j < 6 {
                    assert_eq!(d.phi_bar[(i, j)], 0.0);
                }
            }
        }
        assert!(d.phi_bar[(6, 6)] > 0.0);
    }

    #[test]
    fn regressor_at_initial_time() {
        let fs = FilterState::initial(3, 0.0);
        let (q, phi) = regressor(&fs, 4.5);
        assert_eq!(q, 4.5);
        let mut expected = DVector::zeros(9);
        expected[6] = 1.0;
        assert_eq!(phi, expected);
    }

    #[test]
    fn regressor_zero_when_filter_matches_output() {
        let mut fs = FilterState::initial(3, 0.0);
        fs.z = DVector::from_vec(vec![1.7, -2.0, 0.4]);
        let (q, _) = regressor(&fs, 1.7);
        assert_eq!(q, 0.0);
    }

    #[test]
    fn drem_outputs_identity_and_initial() {
        let mut cfg = reference_cfg();
        cfg.k_amp = 1.0;
        let mut fs = FilterState::initial(3, 0.0);
        let (y, d) = drem_outputs(&fs, &cfg);
        assert!(y.iter().all(|v| *v == 0.0));
        assert_eq!(d, 0.0);

        fs.phi_bar = DMatrix::identity(9, 9);
        fs.q_bar = DVector::from_fn(9, |i, _| i as f64 - 4.0);
        let (y, d) = drem_outputs(&fs, &cfg);
        assert_eq!(d, 1.0);
        assert!((y - &fs.q_bar).norm() < 1e-14);
    }

    #[test]
    fn xi_estimate_examples() {
        let mut fs = FilterState::initial(3, 0.0);
        fs.z = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(xi_estimate(&fs, &Unknowns::zeros(3)), fs.z);

        let fs = FilterState::initial(3, 0.0);
        let eta = Unknowns::new(DVector::from_fn(9, |i, _| i as f64)).unwrap();
        assert_eq!(xi_estimate(&fs, &eta), eta.xi0());
    }

    #[test]
    fn pack_roundtrip() {
        let mut fs = FilterState::initial(3, 0.5);
        fs.omega[(1, 2)] = 3.0;
        fs.phi_bar[(8, 0)] = -1.0;
        let mut buf = vec![0.0; FilterState::packed_len(3)];
        fs.pack_into(&mut buf);
        assert_eq!(FilterState::unpack(3, &buf, 0.5), fs);
    }

    #[test]
    fn h_transpose_layout() {
        let mut fs = FilterState::initial(2, 0.0);
        fs.omega = DMatrix::from_element(2, 2, 1.0);
        fs.p = DMatrix::from_element(2, 2, 2.0);
        let h = fs.h_transpose();
        assert_eq!(h.shape(), (2, 6));
        assert_eq!(h[(0, 0)], 1.0);
        assert_eq!(h[(1, 3)], 2.0);
        assert_eq!(h[(1, 5)], 1.0);
        assert_eq!(h[(0, 5)], 0.0);
    }
}
