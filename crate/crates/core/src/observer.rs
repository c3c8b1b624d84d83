//! Gradient laws for `η̂` and `T̂_I`, the excitation-gated gain switch, and the
//! algebraic state estimate `x̂ = T̂_I (z + Hᵀ η̂)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gpebo::{self, Unknowns, FilterState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSchedule {
    /// Switching threshold on `Δ`.
    pub rho: f64,
    /// Base gain. Zero is allowed and freezes both laws.
    pub gamma1: f64,
}

impl GainSchedule {
    pub fn new(rho: f64, gamma1: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Validation {
                field: "gain.rho".into(),
                msg: format!("must be positive, got {rho}"),
            });
        }
        if !(gamma1 >= 0.0) || !gamma1.is_finite() {
            return Err(Error::Validation {
                field: "gain.gamma1".into(),
                msg: format!("must be non-negative, got {gamma1}"),
            });
        }
        Ok(Self { rho, gamma1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub gamma_eta: f64,
    pub gamma_ti: f64,
    /// Set when `Δ ≥ ρ` but `γ1 / M_TI²` is not finite (`M_TI` zero or
    /// underflowed); `γ_TI` is then forced to zero.
    pub ti_guarded: bool,
}

/// Both gains switch on `Δ < ρ` (strict), then normalize by `Δ²` and `M_TI²`.
pub fn gain_schedule(delta: f64, m_ti: f64, gs: &GainSchedule) -> Gains {
    if !(delta >= gs.rho) {
        return Gains {
            gamma_eta: 0.0,
            gamma_ti: 0.0,
            ti_guarded: false,
        };
    }
    let gamma_eta = gs.gamma1 / (delta * delta);
    let raw_ti = gs.gamma1 / (m_ti * m_ti);
    let (gamma_ti, ti_guarded) = if raw_ti.is_finite() {
        (raw_ti, false)
    } else {
        (0.0, true)
    };
    Gains {
        gamma_eta,
        gamma_ti,
        ti_guarded,
    }
}

/// `−γ_η Δ (Δ η̂ − Y)`; exactly zero when the gain is zero.
pub fn eta_law(
    eta_hat: &DVector<f64>,
    delta: f64,
    y: &DVector<f64>,
    gamma_eta: f64,
) -> DVector<f64> {
    if gamma_eta == 0.0 {
        return DVector::zeros(eta_hat.len());
    }
    (eta_hat * delta - y) * (-gamma_eta * delta)
}

/// `−γ_TI M_TI (M_TI T̂_I − Y_TI)`; exactly zero when the gain is zero.
pub fn ti_law(
    ti_hat: &DMatrix<f64>,
    m_ti: f64,
    y_ti: &DMatrix<f64>,
    gamma_ti: f64,
) -> DMatrix<f64> {
    if gamma_ti == 0.0 {
        return DMatrix::zeros(ti_hat.nrows(), ti_hat.ncols());
    }
    (ti_hat * m_ti - y_ti) * (-gamma_ti * m_ti)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub eta_hat: DVector<f64>,
    pub ti_hat: DMatrix<f64>,
    pub xi_hat: DVector<f64>,
    pub x_hat: DVector<f64>,
}

/// `ξ̂ = z + Hᵀ η̂`, `x̂ = T̂_I ξ̂`. Purely algebraic.
pub fn reconstruct_state(
    ti_hat: &DMatrix<f64>,
    fs: &FilterState,
    eta_hat: &DVector<f64>,
) -> Result<ObserverState> {
    let eta = Unknowns::new(eta_hat.clone())?;
    if eta.n() != fs.n() || ti_hat.shape() != (fs.n(), fs.n()) {
        return Err(Error::Dimension {
            what: "observer state",
            expected: fs.n(),
            got: eta.n(),
        });
    }
    let xi_hat = gpebo::xi_estimate(fs, &eta);
    let x_hat = ti_hat * &xi_hat;
    Ok(ObserverState {
        eta_hat: eta_hat.clone(),
        ti_hat: ti_hat.clone(),
        xi_hat,
        x_hat,
    })
}

/// Ground truth recorded alongside a simulation.
#[derive(Debug, Clone)]
pub struct TruthChannels {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub xi: Vec<DVector<f64>>,
    pub eta: DVector<f64>,
    pub t_i: DMatrix<f64>,
}

/// Observer-side channels of a simulation.
#[derive(Debug, Clone)]
pub struct ObserverChannels {
    pub times: Vec<f64>,
    pub eta_hat: Vec<DVector<f64>>,
    pub ti_hat: Vec<DMatrix<f64>>,
    pub x_hat: Vec<DVector<f64>>,
    pub h_t: Vec<DMatrix<f64>>,
    pub delta: Vec<f64>,
    pub m_ti: Vec<f64>,
    pub gamma_eta: Vec<f64>,
    pub gamma_ti: Vec<f64>,
    pub rho: f64,
}

/// Log-linear envelope `‖e(t)‖ ≈ exp(offset − rate·t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub rate: f64,
    pub offset: f64,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct ErrorDiagnostics {
    pub eta_err: Vec<f64>,
    pub ti_err: Vec<f64>,
    pub x_err: Vec<f64>,
    /// The three summands of the triangle bound on `‖x̃‖` per sample.
    pub bound_terms: Vec<[f64; 3]>,
    pub h_max: f64,
    pub ti_norm: f64,
    pub xi_max: f64,
    /// Largest `‖x̃‖ − Σ bound_terms` (negative when the bound is slack).
    pub bound_excess: f64,
    pub bound_holds: bool,
    pub t_e: Option<f64>,
    /// `min Δ(t)` over `t ≥ t_e`.
    pub delta_min: Option<f64>,
    /// `min |M_TI(t)|` over `t ≥ t_e`.
    pub m_ti_min: Option<f64>,
    pub eta_envelope: Option<Envelope>,
    pub ti_envelope: Option<Envelope>,
    /// `min γ_η(t) · Δ_min²` over `t ≥ t_e`.
    pub eta_rate_theory: Option<f64>,
    /// `min γ_TI(t) · (min |M_TI|)²` over `t ≥ t_e`.
    pub ti_rate_theory: Option<f64>,
}

/// Least-squares line through `(t, ln e)`; `None` with fewer than 3 points.
pub fn fit_envelope(times: &[f64], errors: &[f64]) -> Option<Envelope> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > 0.0 && e.is_finite())
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(Envelope {
        rate: -slope,
        offset: ml - slope * mt,
        points: pts.len(),
    })
}

/// First index whose `Δ` reaches `ρ`.
pub fn first_excited(delta: &[f64], rho: f64) -> Option<usize> {
    delta.iter().position(|&d| d >= rho)
}

/// Samples from `start` onward while the error stays above the numerical
/// floor: ten times the final error, and at least `1e-8` of the starting one.
fn decay_window(errors: &[f64], start: usize) -> usize {
    let last = *errors.last().unwrap_or(&0.0);
    let floor = (10.0 * last).max(1e-8 * errors[start]);
    errors[start..]
        .iter()
        .position(|&e| e <= floor)
        .map_or(errors.len(), |k| start + k)
}

/// Envelope fitted from `start` over the part of the decay that is still
/// above the numerical floor.
pub fn decay_envelope(times: &[f64], errors: &[f64], start: usize) -> Option<Envelope> {
    if start >= errors.len() {
        return None;
    }
    let end = decay_window(errors, start);
    fit_envelope(&times[start..end], &errors[start..end])
}

pub fn error_diagnostics(
    truth: &TruthChannels,
    obs: &ObserverChannels,
) -> Result<ErrorDiagnostics> {
    let len = truth.times.len();
    let aligned = obs.times.len() == len
        && truth.x.len() == len
        && truth.xi.len() == len
        && [
            obs.eta_hat.len(),
            obs.ti_hat.len(),
            obs.x_hat.len(),
            obs.h_t.len(),
            obs.delta.len(),
            obs.m_ti.len(),
            obs.gamma_eta.len(),
            obs.gamma_ti.len(),
        ]
        .iter()
        .all(|&l| l == len)
        && truth.times.iter().zip(&obs.times).all(|(a, b)| a == b);
    if !aligned || len == 0 {
        return Err(Error::MisalignedGrids);
    }

    let eta_err: Vec<f64> = obs
        .eta_hat
        .iter()
        .map(|e| (e - &truth.eta).norm())
        .collect();
    let ti_err: Vec<f64> = obs.ti_hat.iter().map(|t| (t - &truth.t_i).norm()).collect();
    let x_err: Vec<f64> = obs
        .x_hat
        .iter()
        .zip(&truth.x)
        .map(|(a, b)| (a - b).norm())
        .collect();

    let h_max = obs.h_t.iter().map(|h| h.norm()).fold(0.0, f64::max);
    let xi_max = truth.xi.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let ti_norm = truth.t_i.norm();
    let x_max = truth.x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let slack = 1e-6 * (1.0 + x_max);

    let bound_terms: Vec<[f64; 3]> = (0..len)
        .map(|i| {
            [
                ti_norm * h_max * eta_err[i],
                ti_err[i] * h_max * eta_err[i],
                ti_err[i] * xi_max,
            ]
        })
        .collect();
    let bound_excess = (0..len)
        .map(|i| x_err[i] - bound_terms[i].iter().sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);

    let start = first_excited(&obs.delta, obs.rho);
    let t_e = start.map(|i| obs.times[i]);
    let mut diag = ErrorDiagnostics {
        eta_err,
        ti_err,
        x_err,
        bound_terms,
        h_max,
        ti_norm,
        xi_max,
        bound_excess,
        bound_holds: bound_excess <= slack,
        t_e,
        delta_min: None,
        m_ti_min: None,
        eta_envelope: None,
        ti_envelope: None,
        eta_rate_theory: None,
        ti_rate_theory: None,
    };
    let Some(start) = start else {
        return Ok(diag);
    };

    let delta_min = obs.delta[start..]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let m_ti_min = obs.m_ti[start..]
        .iter()
        .map(|m| m.abs())
        .fold(f64::INFINITY, f64::min);
    let gamma_eta_min = obs.gamma_eta[start..]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let gamma_ti_min = obs.gamma_ti[start..]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    diag.delta_min = Some(delta_min);
    diag.m_ti_min = Some(m_ti_min);
    diag.eta_rate_theory = Some(gamma_eta_min * delta_min * delta_min);
    diag.ti_rate_theory = Some(gamma_ti_min * m_ti_min * m_ti_min);

    diag.eta_envelope = decay_envelope(&obs.times, &diag.eta_err, start);
    diag.ti_envelope = decay_envelope(&obs.times, &diag.ti_err, start);
    Ok(diag)
}
