//! Run configuration from a flat TOML document and command-line overrides.

use std::path::PathBuf;

use emacreg::benchmarks::{by_name, BenchmarkSpec};
use emacreg::schemes::{Integrator, Scheme, StepperConfig};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

/// Raw document as written by the user; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub benchmark: Option<String>,
    pub scheme: Option<String>,
    pub h: Option<f64>,
    pub dt: Option<f64>,
    #[serde(rename = "T", alias = "end_time")]
    pub end_time: Option<f64>,
    pub nu: Option<f64>,
    pub alpha: Option<f64>,
    pub integrator: Option<String>,
    pub newton_tol: Option<f64>,
    pub newton_max: Option<usize>,
    pub out: Option<PathBuf>,
    pub every: Option<usize>,
    pub formats: Option<Vec<String>>,
}

impl RawConfig {
    /// Fields set in `other` replace those of `self`.
    pub fn merge(mut self, other: RawConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(benchmark, scheme, h, dt, end_time, nu, alpha, integrator, newton_tol, newton_max, out, every, formats);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub vtu: bool,
}

/// Validated configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub benchmark: String,
    pub scheme: Scheme,
    pub integrator: Integrator,
    pub h: f64,
    pub dt: f64,
    pub end_time: f64,
    pub nu: f64,
    /// Effective filter radius; zero for the unfiltered schemes.
    pub alpha: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub out: PathBuf,
    pub every: usize,
    pub formats: Formats,
    pub warnings: Vec<String>,
}

/// Parses a configuration document and fills in benchmark defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    resolve(parse_raw(text)?)
}

pub fn parse_raw(text: &str) -> Result<RawConfig> {
    toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string() + &location(text, e.span())))
}

fn location(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    let Some(span) = span else { return String::new() };
    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
    let key = text.lines().nth(line - 1).and_then(|l| l.split('=').next()).map(str::trim).unwrap_or("");
    format!(" (line {line}, key `{key}`)")
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("`{name}` must be positive, got {v}")))
    }
}

/// Applies defaults from the named benchmark and checks admissibility.
pub fn resolve(raw: RawConfig) -> Result<RunConfig> {
    let name = raw.benchmark.clone().unwrap_or_else(|| "gresho".into());
    let spec = by_name(&name).map_err(|e| CliError::Config(e.to_string()))?;
    let scheme: Scheme = match &raw.scheme {
        Some(s) => s.parse().map_err(|e: emacreg::Error| CliError::Config(e.to_string()))?,
        None => Scheme::EmacReg,
    };
    let integrator: Integrator = match &raw.integrator {
        Some(s) => s.parse().map_err(|e: emacreg::Error| CliError::Config(e.to_string()))?,
        None => spec.integrator,
    };
    let mut warnings = Vec::new();
    let h = positive("h", raw.h.unwrap_or(spec.h))?;
    let dt = positive("dt", raw.dt.unwrap_or(spec.dt))?;
    let end_time = raw.end_time.unwrap_or(spec.end_time);
    if !(end_time >= 0.0) {
        return Err(CliError::Config(format!("`T` must be non-negative, got {end_time}")));
    }
    let nu = raw.nu.unwrap_or(spec.nu);
    if !(nu >= 0.0) {
        return Err(CliError::Config(format!("`nu` must be non-negative, got {nu}")));
    }
    let alpha = if scheme.is_filtered() {
        match raw.alpha {
            Some(a) => positive("alpha", a)?,
            None => spec.clone().with_h(h).alpha_value(),
        }
    } else {
        if raw.alpha.is_some() {
            warnings.push(format!("alpha is ignored by the {} scheme", scheme.name()));
        }
        0.0
    };
    let mut formats = Formats { csv: true, vtu: false };
    if let Some(list) = &raw.formats {
        formats = Formats { csv: false, vtu: false };
        for f in list {
            match f.to_ascii_lowercase().as_str() {
                "csv" => formats.csv = true,
                "vtu" => formats.vtu = true,
                other => return Err(CliError::Config(format!("unknown output format `{other}` (expected csv, vtu)"))),
            }
        }
    }
    let defaults = StepperConfig::new(scheme, integrator, dt, nu, alpha);
    Ok(RunConfig {
        benchmark: spec.name.to_string(),
        scheme,
        integrator,
        h,
        dt,
        end_time,
        nu,
        alpha,
        newton_tol: positive("newton_tol", raw.newton_tol.unwrap_or(defaults.newton_tol))?,
        newton_max: raw.newton_max.unwrap_or(defaults.newton_max).max(1),
        out: raw.out.unwrap_or_else(|| PathBuf::from("out")),
        every: raw.every.unwrap_or(1).max(1),
        formats,
        warnings,
    })
}

impl RunConfig {
    /// Fully populated document that reproduces this configuration.
    pub fn echo(&self) -> RawConfig {
        let mut formats = Vec::new();
        if self.formats.csv {
            formats.push("csv".to_string());
        }
        if self.formats.vtu {
            formats.push("vtu".to_string());
        }
        RawConfig {
            benchmark: Some(self.benchmark.clone()),
            scheme: Some(self.scheme.name().into()),
            h: Some(self.h),
            dt: Some(self.dt),
            end_time: Some(self.end_time),
            nu: Some(self.nu),
            alpha: self.scheme.is_filtered().then_some(self.alpha),
            integrator: Some(self.integrator.name().into()),
            newton_tol: Some(self.newton_tol),
            newton_max: Some(self.newton_max),
            out: Some(self.out.clone()),
            every: Some(self.every),
            formats: Some(formats),
        }
    }

    /// Benchmark with all overrides applied.
    pub fn benchmark_spec(&self) -> Result<BenchmarkSpec> {
        let mut spec = by_name(&self.benchmark)?.refined(self.h).with_dt(self.dt).with_nu(self.nu).with_end_time(self.end_time);
        if self.scheme.is_filtered() {
            spec = spec.with_alpha(self.alpha);
        }
        spec.integrator = self.integrator;
        Ok(spec)
    }

    pub fn stepper_config(&self, spec: &BenchmarkSpec) -> StepperConfig {
        let mut cfg = spec.stepper_config(self.scheme);
        cfg.newton_tol = self.newton_tol;
        cfg.newton_max = self.newton_max;
        cfg
    }
}
