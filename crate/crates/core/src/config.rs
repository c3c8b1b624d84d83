//! Scenario files: flat `key = value` lines with dotted sections.
//!
//! ```text
//! # comment
//! plant = ices2022_example
//! theta = [1, 1, -1]
//! filter.sigma = 5
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gpebo::FilterConfig;
use crate::mappings::MappingRegistry;
use crate::observer::GainSchedule;
use crate::plant::{ParameterVector, PlantRegistry};
use crate::sim::{IntegratorConfig, Scenario, SignalSpec};

const BUILTIN: &[(&str, &str)] = &[
    (
        "ices2022_example",
        include_str!("../scenarios/ices2022_example.cfg"),
    ),
    (
        "ices2022_rescaled",
        include_str!("../scenarios/ices2022_rescaled.cfg"),
    ),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(name, _)| *name)
}

pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Default floor on the estimated `|det G|` after excitation. Well-posed
/// parameters sit orders of magnitude above it; on a degenerate parameter the
/// estimate is pure regression noise.
pub const DEFAULT_DET_G_FLOOR: f64 = 1e-3;

/// Acceptance thresholds used by `run --check`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Latest admissible excitation time; also the end of the window over
    /// which the excitation level is measured.
    pub te_max: f64,
    /// Final errors must be below this fraction of the reference magnitude.
    pub rel_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            te_max: 3.0,
            rel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub plant: String,
    pub mappings: String,
    pub theta: Vec<f64>,
    /// Defaults to the origin.
    pub x0: Option<Vec<f64>>,
    pub signal: SignalSpec,
    pub filter_k: Vec<f64>,
    pub sigma: f64,
    pub k_amp: f64,
    pub rho: f64,
    pub gamma1: f64,
    pub integrator: IntegratorConfig,
    pub out_dir: PathBuf,
    /// Defaults to zeros.
    pub eta0: Option<Vec<f64>>,
    /// Row-major; defaults to zeros.
    pub ti0: Option<Vec<f64>>,
    pub det_g_floor: f64,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone)]
enum Value {
    Scalar(String),
    Vector(Vec<String>),
}

struct Entry {
    line: usize,
    value: Value,
}

const KEYS: &[&str] = &[
    "plant",
    "mappings",
    "theta",
    "x0",
    "signal.kp",
    "signal.r_offset",
    "signal.r_amplitude",
    "signal.r_decay",
    "signal.r_frequency",
    "filter.k",
    "filter.sigma",
    "filter.k_amp",
    "gain.rho",
    "gain.gamma1",
    "integrator.h",
    "integrator.t_end",
    "integrator.record_stride",
    "output.dir",
    "observer.eta0",
    "observer.ti0",
    "observer.det_g_floor",
    "check.te_max",
    "check.rel_tol",
];

const VECTOR_KEYS: &[&str] = &["theta", "x0", "filter.k", "observer.eta0", "observer.ti0"];

fn tokenize(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `key = value`, found `{body}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty key or value".into(),
            });
        }
        if !KEYS.contains(&key) {
            return Err(Error::Parse {
                line,
                msg: format!("unknown key `{key}`"),
            });
        }
        let value = if let Some(inner) = value.strip_prefix('[') {
            let inner = inner.strip_suffix(']').ok_or_else(|| Error::Parse {
                line,
                msg: "unterminated vector".into(),
            })?;
            let items: Vec<String> = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner.split(',').map(|s| s.trim().to_string()).collect()
            };
            Value::Vector(items)
        } else {
            Value::Scalar(value.to_string())
        };
        if out.insert(key.to_string(), Entry { line, value }).is_some() {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate key `{key}`"),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "configuration is empty".into(),
        });
    }
    Ok(out)
}

fn number(s: &str, line: usize, key: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("`{key}`: `{s}` is not a number"),
    })
}

struct Fields(BTreeMap<String, Entry>);

impl Fields {
    fn missing(key: &str) -> Error {
        Error::Validation {
            field: key.into(),
            msg: "required key is missing".into(),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Entry {
                value: Value::Scalar(s),
                ..
            }) => Ok(Some(s.clone())),
            Some(Entry { line, .. }) => Err(Error::Parse {
                line: *line,
                msg: format!("`{key}` expects a scalar"),
            }),
        }
    }

    fn scalar(&self, key: &str) -> Result<Option<f64>> {
        let line = self.0.get(key).map_or(0, |e| e.line);
        self.string(key)?.map(|s| number(&s, line, key)).transpose()
    }

    fn scalar_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.scalar(key)?.unwrap_or(default))
    }

    fn required(&self, key: &str) -> Result<f64> {
        self.scalar(key)?.ok_or_else(|| Self::missing(key))
    }

    fn vector(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Entry {
                line,
                value: Value::Vector(items),
            }) => items
                .iter()
                .map(|s| number(s, *line, key))
                .collect::<Result<_>>()
                .map(Some),
            Some(Entry { line, .. }) => Err(Error::Parse {
                line: *line,
                msg: format!("`{key}` expects a bracketed vector"),
            }),
        }
    }
}

impl ScenarioConfig {
    /// Parses and validates against the built-in registries.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg = Self::parse_unvalidated(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn parse_unvalidated(text: &str) -> Result<Self> {
        let f = Fields(tokenize(text)?);
        for key in f.0.keys() {
            match key.as_str() {
                "plant" | "mappings" | "output.dir" => {
                    f.string(key)?;
                }
                k if VECTOR_KEYS.contains(&k) => {
                    f.vector(key)?;
                }
                _ => {
                    f.scalar(key)?;
                }
            }
        }
        let defaults = SignalSpec::ices2022();
        let int_defaults = IntegratorConfig::default();
        let th_defaults = Thresholds::default();
        let stride = f.scalar_or(
            "integrator.record_stride",
            int_defaults.record_stride as f64,
        )?;
        if stride.fract() != 0.0 || stride < 0.0 {
            return Err(Error::Validation {
                field: "integrator.record_stride".into(),
                msg: format!("must be a positive integer, got {stride}"),
            });
        }
        Ok(Self {
            plant: f.string("plant")?.ok_or_else(|| Fields::missing("plant"))?,
            mappings: f
                .string("mappings")?
                .ok_or_else(|| Fields::missing("mappings"))?,
            theta: f.vector("theta")?.ok_or_else(|| Fields::missing("theta"))?,
            x0: f.vector("x0")?,
            signal: SignalSpec {
                offset: f.scalar_or("signal.r_offset", defaults.offset)?,
                amplitude: f.scalar_or("signal.r_amplitude", defaults.amplitude)?,
                decay: f.scalar_or("signal.r_decay", defaults.decay)?,
                frequency: f.scalar_or("signal.r_frequency", defaults.frequency)?,
                kp: f.scalar_or("signal.kp", defaults.kp)?,
            },
            filter_k: f
                .vector("filter.k")?
                .ok_or_else(|| Fields::missing("filter.k"))?,
            sigma: f.required("filter.sigma")?,
            k_amp: f.required("filter.k_amp")?,
            rho: f.required("gain.rho")?,
            gamma1: f.required("gain.gamma1")?,
            integrator: IntegratorConfig {
                h: f.scalar_or("integrator.h", int_defaults.h)?,
                t_end: f.scalar_or("integrator.t_end", int_defaults.t_end)?,
                record_stride: stride as usize,
            },
            out_dir: f
                .string("output.dir")?
                .map_or_else(|| PathBuf::from("out"), PathBuf::from),
            eta0: f.vector("observer.eta0")?,
            ti0: f.vector("observer.ti0")?,
            det_g_floor: f.scalar_or("observer.det_g_floor", DEFAULT_DET_G_FLOOR)?,
            thresholds: Thresholds {
                te_max: f.scalar_or("check.te_max", th_defaults.te_max)?,
                rel_tol: f.scalar_or("check.rel_tol", th_defaults.rel_tol)?,
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve(&PlantRegistry::default(), &MappingRegistry::default())
            .map(|_| ())
    }

    pub fn resolve(&self, plants: &PlantRegistry, maps: &MappingRegistry) -> Result<Scenario> {
        let field = |field: &str, msg: String| Error::Validation {
            field: field.into(),
            msg,
        };
        let plant = plants
            .get(&self.plant)
            .ok_or_else(|| field("plant", format!("unknown plant `{}`", self.plant)))?
            .clone();
        let mapping_set = maps
            .get(&self.mappings)
            .ok_or_else(|| {
                field(
                    "mappings",
                    format!("unknown mapping set `{}`", self.mappings),
                )
            })?
            .clone();
        let n = plant.n;
        let check_len = |name: &str, v: &[f64], len: usize| {
            if v.len() == len {
                Ok(())
            } else {
                Err(field(
                    name,
                    format!("expected {len} entries, got {}", v.len()),
                ))
            }
        };
        check_len("theta", &self.theta, plant.n_theta)?;
        check_len("filter.k", &self.filter_k, n)?;
        let theta =
            ParameterVector::new(self.theta.clone()).map_err(|e| field("theta", e.to_string()))?;
        let x0 = match &self.x0 {
            Some(v) => {
                check_len("x0", v, n)?;
                DVector::from_column_slice(v)
            }
            None => DVector::zeros(n),
        };
        let eta0 = match &self.eta0 {
            Some(v) => {
                check_len("observer.eta0", v, 3 * n)?;
                DVector::from_column_slice(v)
            }
            None => DVector::zeros(3 * n),
        };
        let ti0 = match &self.ti0 {
            Some(v) => {
                check_len("observer.ti0", v, n * n)?;
                DMatrix::from_row_slice(n, n, v)
            }
            None => DMatrix::zeros(n, n),
        };
        let sig = &self.signal;
        for (name, v) in [
            ("signal.kp", sig.kp),
            ("signal.r_offset", sig.offset),
            ("signal.r_amplitude", sig.amplitude),
            ("signal.r_decay", sig.decay),
            ("signal.r_frequency", sig.frequency),
        ] {
            if !v.is_finite() {
                return Err(field(name, "must be finite".into()));
            }
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(field(
                "filter.sigma",
                format!("must be positive, got {}", self.sigma),
            ));
        }
        if !(self.k_amp > 0.0) || !self.k_amp.is_finite() {
            return Err(field(
                "filter.k_amp",
                format!("must be positive, got {}", self.k_amp),
            ));
        }
        let filter = FilterConfig::new(
            DVector::from_column_slice(&self.filter_k),
            self.sigma,
            self.k_amp,
        )
        .map_err(|e| field("filter.k", e.to_string()))?;
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(field(
                "gain.rho",
                format!("must be positive, got {}", self.rho),
            ));
        }
        if !(self.gamma1 >= 0.0) || !self.gamma1.is_finite() {
            return Err(field(
                "gain.gamma1",
                format!("must be non-negative, got {}", self.gamma1),
            ));
        }
        let gains = GainSchedule::new(self.rho, self.gamma1)?;
        if !(self.det_g_floor >= 0.0) {
            return Err(field("observer.det_g_floor", "must be non-negative".into()));
        }
        if !(self.thresholds.te_max > 0.0) {
            return Err(field("check.te_max", "must be positive".into()));
        }
        if !(self.thresholds.rel_tol > 0.0) {
            return Err(field("check.rel_tol", "must be positive".into()));
        }
        let sc = Scenario {
            plant,
            mappings: mapping_set,
            theta,
            x0,
            signal: self.signal,
            filter,
            gains,
            integrator: self.integrator,
            eta0,
            ti0,
            det_g_floor: self.det_g_floor,
        };
        sc.validate()?;
        Ok(sc)
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_config_string(&self) -> String {
        fn vec(v: &[f64]) -> String {
            let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", items.join(", "))
        }
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("plant", self.plant.clone());
        line("mappings", self.mappings.clone());
        line("theta", vec(&self.theta));
        if let Some(x0) = &self.x0 {
            line("x0", vec(x0));
        }
        line("signal.kp", format!("{:?}", self.signal.kp));
        line("signal.r_offset", format!("{:?}", self.signal.offset));
        line("signal.r_amplitude", format!("{:?}", self.signal.amplitude));
        line("signal.r_decay", format!("{:?}", self.signal.decay));
        line("signal.r_frequency", format!("{:?}", self.signal.frequency));
        line("filter.k", vec(&self.filter_k));
        line("filter.sigma", format!("{:?}", self.sigma));
        line("filter.k_amp", format!("{:?}", self.k_amp));
        line("gain.rho", format!("{:?}", self.rho));
        line("gain.gamma1", format!("{:?}", self.gamma1));
        line("integrator.h", format!("{:?}", self.integrator.h));
        line("integrator.t_end", format!("{:?}", self.integrator.t_end));
        line(
            "integrator.record_stride",
            self.integrator.record_stride.to_string(),
        );
        line("output.dir", self.out_dir.display().to_string());
        if let Some(v) = &self.eta0 {
            line("observer.eta0", vec(v));
        }
        if let Some(v) = &self.ti0 {
            line("observer.ti0", vec(v));
        }
        line("observer.det_g_floor", format!("{:?}", self.det_g_floor));
        line("check.te_max", format!("{:?}", self.thresholds.te_max));
        line("check.rel_tol", format!("{:?}", self.thresholds.rel_tol));
        s
    }
}

/// Loads a scenario file, or a built-in scenario when `path` names one and no
/// such file exists.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    if !path.exists() {
        if let Some(src) = path.to_str().and_then(builtin_source) {
            return ScenarioConfig::parse(src);
        }
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read scenario `{}`: {e}", path.display())))?;
    ScenarioConfig::parse(&text)
}
