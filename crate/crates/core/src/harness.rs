//! End-to-end runs: simulation, CSV emission, metrics and threshold checks.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::config::{ScenarioConfig, Thresholds};
use crate::error::{Error, Result};
use crate::mappings::MappingRegistry;
use crate::observer;
use crate::par::{self, Execution};
use crate::plant::{self, PlantRegistry};
use crate::sim::{self, Scenario, Trajectory};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REGRESSOR_FILE: &str = "regressor.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const CONFIG_ECHO_FILE: &str = "config.echo";

/// Shortest decimal that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    let plain = format!("{v}");
    let sci = format!("{v:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("missing column `{name}`")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Consecutive columns starting at `first`, one vector per row.
    pub fn block(&self, first: &str, len: usize) -> Result<Vec<DVector<f64>>> {
        let i = self.column_index(first)?;
        if i + len > self.header.len() {
            return Err(Error::Config(format!(
                "column block `{first}` is truncated"
            )));
        }
        Ok(self
            .rows
            .iter()
            .map(|r| DVector::from_column_slice(&r[i..i + len]))
            .collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(&self.header).map_err(csv_error)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_number(*v)))
                .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
        let header: Vec<String> = r
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_error)?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 2,
                        msg: format!("`{s}` is not a number"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("malformed CSV: {other:?}")),
    }
}

pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.push("y".into());
    h.push("u".into());
    h.extend((1..=n).map(|i| format!("xhat{i}")));
    h.push("xerr".into());
    h.extend((1..=3 * n).map(|i| format!("eta_hat_{i}")));
    for i in 1..=n {
        h.extend((1..=n).map(|j| format!("ti_hat_{i}{j}")));
    }
    for name in [
        "Delta",
        "M_theta",
        "M_TI",
        "q",
        "gamma_eta",
        "gamma_ti",
        "logdet_phibar",
    ] {
        h.push(name.into());
    }
    h
}

pub fn trajectory_table(traj: &Trajectory) -> Table {
    let n = traj.n;
    let rows = traj
        .samples
        .iter()
        .map(|s| {
            let mut r = Vec::with_capacity(8 + 5 * n + 3 * n + n * n);
            r.push(s.t);
            r.extend(s.x.iter());
            r.push(s.y);
            r.push(s.u);
            r.extend(s.observer.x_hat.iter());
            r.push(s.x_err);
            r.extend(s.observer.eta_hat.iter());
            for i in 0..n {
                r.extend((0..n).map(|j| s.observer.ti_hat[(i, j)]));
            }
            r.extend([
                s.regression.delta,
                s.regression.m_theta,
                s.regression.m_ti,
                s.q,
                s.gains.gamma_eta,
                s.gains.gamma_ti,
                s.logdet_phibar,
            ]);
            r
        })
        .collect();
    Table {
        header: trajectory_header(n),
        rows,
    }
}

pub fn regressor_table(traj: &Trajectory) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend((1..=3 * traj.n).map(|i| format!("phi_{i}")));
    let rows = traj
        .samples
        .iter()
        .map(|s| std::iter::once(s.t).chain(s.phi.iter().copied()).collect())
        .collect();
    Table { header, rows }
}

/// Regressor samples from a table with `phi_*` columns.
pub fn regressor_samples(table: &Table) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let len = table
        .header
        .iter()
        .filter(|h| h.starts_with("phi_"))
        .count();
    if len == 0 {
        return Err(Error::Config("table has no regressor columns".into()));
    }
    Ok((table.column("t")?, table.block("phi_1", len)?))
}

/// Smallest eigenvalue of the trapezoid-rule integral of `φφᵀ` over the
/// samples with `t_start ≤ t ≤ t_end`.
pub fn excitation_level(
    times: &[f64],
    phi: &[DVector<f64>],
    t_start: f64,
    t_end: f64,
) -> Result<f64> {
    if times.len() != phi.len() {
        return Err(Error::MisalignedGrids);
    }
    let empty = || Error::EmptyWindow {
        from: t_start,
        to: t_end,
    };
    if !(t_start < t_end) {
        return Err(empty());
    }
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= t_start && times[i] <= t_end)
        .collect();
    if idx.len() < 2 {
        return Err(empty());
    }
    let m = phi[idx[0]].len();
    let mut integral = DMatrix::zeros(m, m);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dt = times[b] - times[a];
        integral += (&phi[a] * phi[a].transpose() + &phi[b] * phi[b].transpose()) * (0.5 * dt);
    }
    let eig = SymmetricEigen::new(integral);
    Ok(eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min))
}

/// Time of the first sample with `Δ ≥ ρ`.
pub fn detect_te(times: &[f64], delta: &[f64], rho: f64) -> Option<f64> {
    observer::first_excited(delta, rho).map(|i| times[i])
}

/// True initial condition and canonical transform of a run.
#[derive(Debug, Clone)]
pub struct Truth {
    pub eta: DVector<f64>,
    pub t_i: DMatrix<f64>,
}

impl Truth {
    pub fn of(sc: &Scenario) -> Result<Self> {
        let cf = plant::canonical_for(&sc.plant, &sc.theta)?;
        Ok(Self {
            eta: cf.eta(&sc.x0),
            t_i: cf.t_i,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSettings {
    pub rho: f64,
    /// End of the excitation window `[0, excitation_window]`.
    pub excitation_window: f64,
    pub det_g_floor: f64,
    /// Homogeneity degree of the parameter regression.
    pub theta_degree: i32,
}

impl MetricSettings {
    pub fn of(sc: &Scenario, thresholds: &Thresholds) -> Self {
        Self {
            rho: sc.gains.rho,
            excitation_window: thresholds.te_max,
            det_g_floor: sc.det_g_floor,
            theta_degree: sc.mappings.params.degree as i32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub samples: usize,
    pub t_final: f64,
    pub t_e: Option<f64>,
    pub delta_min_after_te: Option<f64>,
    pub delta_final: f64,
    /// Excitation level over the configured window.
    pub alpha: Option<f64>,
    pub x_max: f64,
    pub x_err_final: f64,
    pub eta_norm: f64,
    pub eta_err_final: f64,
    pub ti_norm: f64,
    pub ti_err_final: f64,
    pub eta_decay_rate: Option<f64>,
    pub ti_decay_rate: Option<f64>,
    /// Largest `|M_θ| / Δ^ℓ` after `t_e`.
    pub det_g_max_after_te: Option<f64>,
    pub m_ti_min_after_te: Option<f64>,
    pub det_g_floor: f64,
    pub identifiability_failure: bool,
}

pub fn compute_metrics(
    traj: &Table,
    regressor: Option<&Table>,
    truth: &Truth,
    settings: &MetricSettings,
) -> Result<Metrics> {
    let n = truth.t_i.nrows();
    let times = traj.column("t")?;
    if times.is_empty() {
        return Err(Error::Config("trajectory has no samples".into()));
    }
    let delta = traj.column("Delta")?;
    let m_theta = traj.column("M_theta")?;
    let m_ti = traj.column("M_TI")?;
    let x = traj.block("x1", n)?;
    let x_err = traj.column("xerr")?;
    let eta_err: Vec<f64> = traj
        .block("eta_hat_1", 3 * n)?
        .iter()
        .map(|e| (e - &truth.eta).norm())
        .collect();
    let ti_err: Vec<f64> = traj
        .block("ti_hat_11", n * n)?
        .iter()
        .map(|v| (DMatrix::from_row_slice(n, n, v.as_slice()) - &truth.t_i).norm())
        .collect();

    let start = observer::first_excited(&delta, settings.rho);
    let after = |v: &[f64]| start.map(|s| v[s..].to_vec());
    let det_g: Vec<f64> = m_theta
        .iter()
        .zip(&delta)
        .map(|(m, d)| (m / d.powi(settings.theta_degree)).abs())
        .collect();
    let det_g_max_after_te = after(&det_g).map(|v| v.into_iter().fold(0.0, f64::max));
    let alpha = match regressor {
        Some(table) => {
            let (t, phi) = regressor_samples(table)?;
            let t_last = *t.last().unwrap_or(&0.0);
            Some(excitation_level(
                &t,
                &phi,
                t[0],
                settings.excitation_window.min(t_last),
            )?)
        }
        None => None,
    };
    let last = times.len() - 1;
    Ok(Metrics {
        samples: times.len(),
        t_final: times[last],
        t_e: start.map(|s| times[s]),
        delta_min_after_te: after(&delta).map(|v| v.into_iter().fold(f64::INFINITY, f64::min)),
        delta_final: delta[last],
        alpha,
        x_max: x.iter().map(|v| v.norm()).fold(0.0, f64::max),
        x_err_final: x_err[last],
        eta_norm: truth.eta.norm(),
        eta_err_final: eta_err[last],
        ti_norm: truth.t_i.norm(),
        ti_err_final: ti_err[last],
        eta_decay_rate: start
            .and_then(|s| observer::decay_envelope(&times, &eta_err, s))
            .map(|e| e.rate),
        ti_decay_rate: start
            .and_then(|s| observer::decay_envelope(&times, &ti_err, s))
            .map(|e| e.rate),
        det_g_floor: settings.det_g_floor,
        identifiability_failure: det_g_max_after_te.is_some_and(|d| d < settings.det_g_floor),
        det_g_max_after_te,
        m_ti_min_after_te: after(&m_ti)
            .map(|v| v.into_iter().map(f64::abs).fold(f64::INFINITY, f64::min)),
    })
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), format_number);
        writeln!(f, "samples = {}", self.samples)?;
        writeln!(f, "t_final = {}", format_number(self.t_final))?;
        writeln!(f, "t_e = {}", opt(self.t_e))?;
        writeln!(f, "delta_min_after_te = {}", opt(self.delta_min_after_te))?;
        writeln!(f, "delta_final = {}", format_number(self.delta_final))?;
        writeln!(f, "alpha = {}", opt(self.alpha))?;
        writeln!(f, "x_max = {}", format_number(self.x_max))?;
        writeln!(f, "x_err_final = {}", format_number(self.x_err_final))?;
        writeln!(f, "eta_norm = {}", format_number(self.eta_norm))?;
        writeln!(f, "eta_err_final = {}", format_number(self.eta_err_final))?;
        writeln!(f, "ti_norm = {}", format_number(self.ti_norm))?;
        writeln!(f, "ti_err_final = {}", format_number(self.ti_err_final))?;
        writeln!(f, "eta_decay_rate = {}", opt(self.eta_decay_rate))?;
        writeln!(f, "ti_decay_rate = {}", opt(self.ti_decay_rate))?;
        writeln!(f, "det_g_max_after_te = {}", opt(self.det_g_max_after_te))?;
        writeln!(f, "m_ti_min_after_te = {}", opt(self.m_ti_min_after_te))?;
        writeln!(f, "det_g_floor = {}", format_number(self.det_g_floor))?;
        writeln!(
            f,
            "identifiability_failure = {}",
            self.identifiability_failure
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "[{tag}] {}: {} (limit {})",
            self.name,
            format_number(self.value),
            format_number(self.limit)
        )
    }
}

/// Compares a run against the convergence thresholds.
pub fn check(m: &Metrics, th: &Thresholds) -> Vec<CheckOutcome> {
    let le = |name, value: f64, limit: f64| CheckOutcome {
        name,
        value,
        limit,
        passed: value <= limit,
    };
    let delta_min = m.delta_min_after_te.unwrap_or(0.0);
    vec![
        le("excitation time", m.t_e.unwrap_or(f64::INFINITY), th.te_max),
        CheckOutcome {
            name: "delta floor after excitation",
            value: delta_min,
            limit: 0.0,
            passed: delta_min > 0.0,
        },
        le("final state error", m.x_err_final, th.rel_tol * m.x_max),
        le("final eta error", m.eta_err_final, th.rel_tol * m.eta_norm),
        le(
            "final transform error",
            m.ti_err_final,
            th.rel_tol * m.ti_norm,
        ),
        CheckOutcome {
            name: "identifiability",
            value: m.det_g_max_after_te.unwrap_or(f64::NAN),
            limit: m.det_g_floor,
            passed: !m.identifiability_failure,
        },
    ]
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub trajectory_csv: PathBuf,
    pub regressor_csv: PathBuf,
    pub metrics_path: PathBuf,
    pub config_echo: PathBuf,
    pub metrics: Metrics,
    pub trajectory: Trajectory,
    pub scenario: Scenario,
    pub config: ScenarioConfig,
}

impl RunArtifacts {
    pub fn check(&self) -> Vec<CheckOutcome> {
        check(&self.metrics, &self.config.thresholds)
    }
}

/// Simulates the scenario and writes its artifacts to `config.out_dir`.
///
/// If the integration aborts, the samples recorded so far are still written
/// before the error is returned.
pub fn run(config: &ScenarioConfig) -> Result<RunArtifacts> {
    let sc = config.resolve(&PlantRegistry::default(), &MappingRegistry::default())?;
    let dir = config.out_dir.clone();
    fs::create_dir_all(&dir)?;
    let config_echo = dir.join(CONFIG_ECHO_FILE);
    fs::write(&config_echo, config.to_config_string())?;

    let (trajectory, failure) = sim::simulate_partial(&sc)?;
    let table = trajectory_table(&trajectory);
    let regressor = regressor_table(&trajectory);
    let trajectory_csv = dir.join(TRAJECTORY_FILE);
    let regressor_csv = dir.join(REGRESSOR_FILE);
    table.write(&trajectory_csv)?;
    regressor.write(&regressor_csv)?;
    if let Some(e) = failure {
        return Err(e);
    }

    let metrics = compute_metrics(
        &table,
        Some(&regressor),
        &Truth::of(&sc)?,
        &MetricSettings::of(&sc, &config.thresholds),
    )?;
    let metrics_path = dir.join(METRICS_FILE);
    fs::write(&metrics_path, metrics.to_string())?;
    Ok(RunArtifacts {
        dir,
        trajectory_csv,
        regressor_csv,
        metrics_path,
        config_echo,
        metrics,
        trajectory,
        scenario: sc,
        config: config.clone(),
    })
}

/// Recomputes the metrics of a finished run from its output directory.
pub fn recompute_metrics(dir: &Path) -> Result<Metrics> {
    let config = ScenarioConfig::parse(&fs::read_to_string(dir.join(CONFIG_ECHO_FILE))?)?;
    let sc = config.resolve(&PlantRegistry::default(), &MappingRegistry::default())?;
    let table = Table::read(&dir.join(TRAJECTORY_FILE))?;
    let regressor = Table::read(&dir.join(REGRESSOR_FILE))?;
    compute_metrics(
        &table,
        Some(&regressor),
        &Truth::of(&sc)?,
        &MetricSettings::of(&sc, &config.thresholds),
    )
}

/// Runs several scenarios; each must have its own output directory.
pub fn run_batch(configs: &[ScenarioConfig], exec: Execution) -> Vec<Result<RunArtifacts>> {
    par::map(exec, configs, run)
}

/// Regressor samples for the excitation command: the file itself when it
/// holds `phi_*` columns, otherwise the regressor file next to it.
pub fn load_regressor(path: &Path) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let table = Table::read(path)?;
    if table.header.iter().any(|h| h.starts_with("phi_")) {
        return regressor_samples(&table);
    }
    let sibling = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(REGRESSOR_FILE);
    if !sibling.exists() {
        return Err(Error::Config(format!(
            "`{}` has no regressor columns and no {REGRESSOR_FILE} next to it",
            path.display()
        )));
    }
    regressor_samples(&Table::read(&sibling)?)
}
