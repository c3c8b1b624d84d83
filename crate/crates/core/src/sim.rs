//! Fixed-step RK4 simulation of the closed loop together with the filters,
//! mixing accumulators and adaptive laws, integrated as one state vector.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gpebo::{self, FilterConfig, FilterState};
use crate::linalg;
use crate::mappings::{MappingSet, RegressionBundle};
use crate::observer::{self, GainSchedule, Gains, ObserverChannels, ObserverState, TruthChannels};
use crate::plant::{self, CanonicalForm, ParameterVector, PlantDefinition};

/// Reference `r(t) = offset + amplitude·exp(−decay·t)·sin(frequency·t)` and a
/// proportional controller `u = −kp (r − y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    pub offset: f64,
    pub amplitude: f64,
    pub decay: f64,
    pub frequency: f64,
    pub kp: f64,
}

impl SignalSpec {
    pub fn ices2022() -> Self {
        Self {
            offset: 100.0,
            amplitude: 2.5,
            decay: 1.0,
            frequency: 10.0,
            kp: 25.0,
        }
    }

    pub fn reference(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (-self.decay * t).exp() * (self.frequency * t).sin()
    }

    pub fn control(&self, r: f64, y: f64) -> f64 {
        -self.kp * (r - y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub h: f64,
    pub t_end: f64,
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            h: 1e-4,
            t_end: 30.0,
            record_stride: 100,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::Validation {
                field: "integrator.h".into(),
                msg: format!("must be positive, got {}", self.h),
            });
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Validation {
                field: "integrator.t_end".into(),
                msg: format!("must be positive, got {}", self.t_end),
            });
        }
        if self.record_stride == 0 {
            return Err(Error::Validation {
                field: "integrator.record_stride".into(),
                msg: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.h).round() as usize
    }
}

/// Scratch space for the classical fourth-order Runge–Kutta scheme.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    /// Rounding error carried between steps (compensated summation).
    carry: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
            carry: vec![0.0; dim],
        }
    }

    /// Advances `state` from `t` to `t + h` in place.
    pub fn step<F>(&mut self, state: &mut [f64], t: f64, h: f64, mut f: F) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let check = |k: &[f64], at: f64| {
            if k.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::NonFinite { t: at })
            }
        };
        f(t, state, &mut self.k1);
        check(&self.k1, t)?;
        for (tmp, (s, k)) in self.tmp.iter_mut().zip(state.iter().zip(&self.k1)) {
            *tmp = s + 0.5 * h * k;
        }
        f(t + 0.5 * h, &self.tmp, &mut self.k2);
        check(&self.k2, t + 0.5 * h)?;
        for (tmp, (s, k)) in self.tmp.iter_mut().zip(state.iter().zip(&self.k2)) {
            *tmp = s + 0.5 * h * k;
        }
        f(t + 0.5 * h, &self.tmp, &mut self.k3);
        check(&self.k3, t + 0.5 * h)?;
        for (tmp, (s, k)) in self.tmp.iter_mut().zip(state.iter().zip(&self.k3)) {
            *tmp = s + h * k;
        }
        f(t + h, &self.tmp, &mut self.k4);
        check(&self.k4, t + h)?;
        for (i, s) in state.iter_mut().enumerate() {
            let inc = h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i])
                + self.carry[i];
            let next = *s + inc;
            self.carry[i] = inc - (next - *s);
            *s = next;
        }
        Ok(())
    }
}

/// One RK4 step of `x' = f(t, x)`.
pub fn rk4_step<F>(state: &[f64], t: f64, h: f64, mut dynamics: F) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let mut out = state.to_vec();
    Rk4::new(state.len()).step(&mut out, t, h, |t, x, dx| {
        dx.copy_from_slice(&dynamics(t, x))
    })?;
    Ok(out)
}

/// A fully resolved simulation setup.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: PlantDefinition,
    pub mappings: MappingSet,
    pub theta: ParameterVector,
    pub x0: DVector<f64>,
    pub signal: SignalSpec,
    pub filter: FilterConfig,
    pub gains: GainSchedule,
    pub integrator: IntegratorConfig,
    pub eta0: DVector<f64>,
    pub ti0: DMatrix<f64>,
    /// `|M_θ| / Δ^ℓ` staying below this after excitation flags an
    /// identifiability failure.
    pub det_g_floor: f64,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.plant.n
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        self.integrator.validate()?;
        let dims = [
            ("x0", n, self.x0.len()),
            ("filter.k", n, self.filter.n()),
            ("mappings", n, self.mappings.n),
            ("observer.eta0", 3 * n, self.eta0.len()),
            ("observer.ti0", n * n, self.ti0.len()),
            ("theta", self.plant.n_theta, self.theta.len()),
        ];
        for (field, expected, got) in dims {
            if expected != got {
                return Err(Error::Validation {
                    field: field.into(),
                    msg: format!("expected length {expected}, got {got}"),
                });
            }
        }
        Ok(())
    }
}

/// One recorded time point.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub y: f64,
    pub u: f64,
    pub r: f64,
    /// True canonical state `T x`.
    pub xi: DVector<f64>,
    pub z: DVector<f64>,
    pub h_t: DMatrix<f64>,
    pub q: f64,
    pub phi: DVector<f64>,
    pub phi_bar: DMatrix<f64>,
    pub logdet_phibar: f64,
    pub regression: RegressionBundle,
    pub gains: Gains,
    pub observer: ObserverState,
    pub x_err: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n: usize,
    pub h: f64,
    pub record_stride: usize,
    pub rho: f64,
    pub det_g_floor: f64,
    pub canonical: CanonicalForm,
    pub eta: DVector<f64>,
    pub samples: Vec<Sample>,
    pub elapsed: Duration,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn delta(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.regression.delta).collect()
    }

    pub fn truth_channels(&self) -> TruthChannels {
        TruthChannels {
            times: self.times(),
            x: self.samples.iter().map(|s| s.x.clone()).collect(),
            xi: self.samples.iter().map(|s| s.xi.clone()).collect(),
            eta: self.eta.clone(),
            t_i: self.canonical.t_i.clone(),
        }
    }

    pub fn observer_channels(&self) -> ObserverChannels {
        let s = &self.samples;
        ObserverChannels {
            times: self.times(),
            eta_hat: s.iter().map(|s| s.observer.eta_hat.clone()).collect(),
            ti_hat: s.iter().map(|s| s.observer.ti_hat.clone()).collect(),
            x_hat: s.iter().map(|s| s.observer.x_hat.clone()).collect(),
            h_t: s.iter().map(|s| s.h_t.clone()).collect(),
            delta: self.delta(),
            m_ti: s.iter().map(|s| s.regression.m_ti).collect(),
            gamma_eta: s.iter().map(|s| s.gains.gamma_eta).collect(),
            gamma_ti: s.iter().map(|s| s.gains.gamma_ti).collect(),
            rho: self.rho,
        }
    }

    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("trajectory has at least one sample")
    }
}

/// Layout of the augmented state `[x | filters | η̂ | vec(T̂_I)]`.
struct Layout {
    n: usize,
    filter: usize,
    eta: usize,
    ti: usize,
    len: usize,
}

impl Layout {
    fn new(n: usize) -> Self {
        let filter = n;
        let eta = filter + FilterState::packed_len(n);
        let ti = eta + 3 * n;
        Self {
            n,
            filter,
            eta,
            ti,
            len: ti + n * n,
        }
    }
}

struct Model<'a> {
    sc: &'a Scenario,
    a: DMatrix<f64>,
    b: DVector<f64>,
    t: DMatrix<f64>,
    layout: Layout,
}

struct Evaluation {
    y: f64,
    u: f64,
    r: f64,
    x: DVector<f64>,
    fs: FilterState,
    eta_hat: DVector<f64>,
    ti_hat: DMatrix<f64>,
    regression: RegressionBundle,
    gains: Gains,
}

impl Model<'_> {
    fn evaluate(&self, t: f64, state: &[f64]) -> Evaluation {
        let l = &self.layout;
        let n = l.n;
        let x = DVector::from_column_slice(&state[..n]);
        let fs = FilterState::unpack(n, &state[l.filter..l.eta], 0.0);
        let eta_hat = DVector::from_column_slice(&state[l.eta..l.ti]);
        let ti_hat = DMatrix::from_column_slice(n, n, &state[l.ti..l.len]);
        let y = self.sc.plant.c.dot(&x);
        let r = self.sc.signal.reference(t);
        let u = self.sc.signal.control(r, y);
        let (ydrem, delta) = gpebo::drem_outputs(&fs, &self.sc.filter);
        let regression = RegressionBundle::compute(ydrem, delta, &self.sc.mappings)
            .expect("selector validated with the mapping set");
        let gains = observer::gain_schedule(delta, regression.m_ti, &self.sc.gains);
        Evaluation {
            y,
            u,
            r,
            x,
            fs,
            eta_hat,
            ti_hat,
            regression,
            gains,
        }
    }

    fn derivative(&self, t: f64, state: &[f64], out: &mut [f64]) {
        let l = &self.layout;
        let ev = self.evaluate(t, state);
        let dx = &self.a * &ev.x + &self.b * ev.u;
        out[..l.n].copy_from_slice(dx.as_slice());
        let dfs = gpebo::filter_derivatives(&ev.fs, ev.y, ev.u, &self.sc.filter, t);
        dfs.pack_into(&mut out[l.filter..l.eta]);
        let reg = &ev.regression;
        let deta = observer::eta_law(&ev.eta_hat, reg.delta, &reg.y, ev.gains.gamma_eta);
        out[l.eta..l.ti].copy_from_slice(deta.as_slice());
        let dti = observer::ti_law(&ev.ti_hat, reg.m_ti, &reg.y_ti, ev.gains.gamma_ti);
        out[l.ti..l.len].copy_from_slice(dti.as_slice());
    }

    fn record(&self, t: f64, state: &[f64]) -> Sample {
        let ev = self.evaluate(t, state);
        let (q, phi) = gpebo::regressor(&ev.fs, ev.y);
        let obs = observer::reconstruct_state(&ev.ti_hat, &ev.fs, &ev.eta_hat)
            .expect("state layout matches plant order");
        let x_err = (&obs.x_hat - &ev.x).norm();
        Sample {
            t,
            xi: &self.t * &ev.x,
            y: ev.y,
            u: ev.u,
            r: ev.r,
            z: ev.fs.z.clone(),
            h_t: ev.fs.h_transpose(),
            q,
            phi,
            logdet_phibar: linalg::log_abs_determinant(&ev.fs.phi_bar),
            phi_bar: ev.fs.phi_bar,
            regression: ev.regression,
            gains: ev.gains,
            observer: obs,
            x_err,
            x: ev.x,
        }
    }
}

/// Runs the scenario; on an integration failure returns the samples recorded
/// so far together with the error.
pub fn simulate_partial(sc: &Scenario) -> Result<(Trajectory, Option<Error>)> {
    sc.validate()?;
    let started = Instant::now();
    let (a, b) = plant::eval_plant(&sc.plant, &sc.theta)?;
    let canonical = plant::build_canonical(&a, &b, &sc.plant.c)?;
    let eta = canonical.eta(&sc.x0);
    let n = sc.n();
    let layout = Layout::new(n);
    let mut state = vec![0.0; layout.len];
    state[..n].copy_from_slice(sc.x0.as_slice());
    FilterState::initial(n, 0.0).pack_into(&mut state[layout.filter..layout.eta]);
    state[layout.eta..layout.ti].copy_from_slice(sc.eta0.as_slice());
    state[layout.ti..layout.len].copy_from_slice(sc.ti0.as_slice());

    let model = Model {
        sc,
        a,
        b,
        t: canonical.t.clone(),
        layout,
    };
    let cfg = sc.integrator;
    let steps = cfg.steps();
    let mut samples = Vec::with_capacity(steps / cfg.record_stride + 2);
    samples.push(model.record(0.0, &state));
    let mut rk = Rk4::new(state.len());
    let mut failure = None;
    for i in 0..steps {
        let t = i as f64 * cfg.h;
        if let Err(e) = rk.step(&mut state, t, cfg.h, |t, s, out| {
            model.derivative(t, s, out)
        }) {
            failure = Some(e);
            break;
        }
        if (i + 1) % cfg.record_stride == 0 {
            samples.push(model.record((i + 1) as f64 * cfg.h, &state));
        }
    }
    Ok((
        Trajectory {
            n,
            h: cfg.h,
            record_stride: cfg.record_stride,
            rho: sc.gains.rho,
            det_g_floor: sc.det_g_floor,
            canonical,
            eta,
            samples,
            elapsed: started.elapsed(),
        },
        failure,
    ))
}

pub fn simulate(sc: &Scenario) -> Result<Trajectory> {
    match simulate_partial(sc)? {
        (traj, None) => Ok(traj),
        (_, Some(e)) => Err(e),
    }
}
