//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::sync::Arc;

use emacreg::benchmarks::{convergence_point, rate_table, run_recorded, study_points, ConvergenceRow, ErrorNorms, StudyAxis, BENCHMARK_NAMES, by_name};
use emacreg::diagnostics::{momentum_probe, probe_fields, DiagnosticsRecord, ProbeTest};
use emacreg::mesh::{build_rectangle_mesh, Rect};
use emacreg::operators::NonlinearKind;
use emacreg::schemes::State;
use emacreg::space::build_space;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::output::{write_diagnostics_csv, write_manifest, write_vtu};
use crate::{CliError, Result};

#[derive(Debug)]
pub struct RunSummary {
    pub records: Vec<DiagnosticsRecord>,
    pub files: Vec<String>,
}

/// Executes one configured run and writes its outputs into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let spec = cfg.benchmark_spec()?;
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let (mut stepper, initial) = spec.setup_with(cfg.stepper_config(&spec))?;
    let stem = format!("{}_{}", cfg.benchmark, cfg.scheme.name());
    let mut files = Vec::new();

    let steps = stepper.steps_to(initial.t, cfg.end_time);
    let mut count = 0usize;
    let mut snapshots = Vec::new();
    let mut io_error = None;
    let mut snapshot = |s: &State| -> emacreg::Result<()> {
        if cfg.formats.vtu && (count % cfg.every == 0 || count == steps) {
            let name = format!("{stem}_{count:06}.vtu");
            if let Err(e) = write_vtu(s, &cfg.out.join(&name)) {
                io_error = Some(e);
                return Err(emacreg::Error::State("snapshot output failed".into()));
            }
            snapshots.push(name);
        }
        count += 1;
        Ok(())
    };
    let result = run_recorded(&mut stepper, initial, cfg.end_time, spec.analytic.as_ref(), cfg.every, &mut [&mut snapshot]);
    if let Some(e) = io_error {
        return Err(e);
    }
    let (_, records) = result?;
    if cfg.formats.csv {
        let name = format!("{stem}.csv");
        write_diagnostics_csv(&records, &cfg.out.join(&name))?;
        files.push(name);
    }
    files.extend(snapshots);
    write_manifest(cfg, &files, &cfg.out)?;
    Ok(RunSummary { records, files })
}

/// Which error a convergence table reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ErrorMeasure {
    /// Error at the final time.
    Final,
    /// Maximum over all time levels.
    Max,
}

/// Runs the decaying-vortex study, one worker per parameter point.
pub fn converge(axis: StudyAxis, end_time: f64) -> Result<Vec<ConvergenceRow>> {
    let points = study_points(axis);
    let errors = points.par_iter().map(|&(h, dt)| convergence_point(h, dt, end_time)).collect::<emacreg::Result<Vec<_>>>()?;
    Ok(rate_table(&points, &errors))
}

fn frac(v: f64) -> String {
    let inv = 1.0 / v;
    if (inv - inv.round()).abs() < 1e-9 {
        format!("1/{}", inv.round())
    } else {
        format!("{v}")
    }
}

pub fn format_convergence(rows: &[ConvergenceRow], measure: ErrorMeasure) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>6} {:>7} {:>12} {:>7} {:>12} {:>7} {:>12} {:>7}",
        "h", "dt", "L2(w)", "rate", "H1(w)", "rate", "L2(u)", "rate"
    );
    for r in rows {
        let (e, rate): (ErrorNorms, Option<ErrorNorms>) = match measure {
            ErrorMeasure::Final => (r.errors.last, r.rate_last),
            ErrorMeasure::Max => (r.errors.max, r.rate_max),
        };
        let rt = |f: fn(&ErrorNorms) -> f64| rate.as_ref().map_or("-".to_string(), |x| format!("{:.3}", f(x)));
        let _ = writeln!(
            s,
            "{:>6} {:>7} {:>12.5e} {:>7} {:>12.5e} {:>7} {:>12.5e} {:>7}",
            frac(r.h),
            frac(r.dt),
            e.l2_w,
            rt(|x| x.l2_w),
            e.h1_w,
            rt(|x| x.h1_w),
            e.l2_u,
            rt(|x| x.l2_u)
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub kind: NonlinearKind,
    pub values: [f64; 3],
}

/// Probe values of every convective form on the standard non-solenoidal
/// pair, over an `n x n` mesh of the unit square.
pub fn probe(n: usize) -> Result<Vec<ProbeRow>> {
    let mesh = Arc::new(build_rectangle_mesh(n, n, Rect::unit())?);
    let space = build_space(mesh, 2, 2)?;
    let (w, u) = probe_fields(&space)?;
    NonlinearKind::ALL
        .iter()
        .map(|&kind| {
            let mut values = [0.0; 3];
            for (v, test) in values.iter_mut().zip(ProbeTest::ALL) {
                *v = momentum_probe(kind, &w, &u, test)?;
            }
            Ok(ProbeRow { kind, values })
        })
        .collect()
}

pub fn format_probe(rows: &[ProbeRow]) -> String {
    let mut s = format!("{:<6}", "form");
    for t in ProbeTest::ALL {
        let _ = write!(s, " {:>14}", t.name());
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{:<6}", r.kind.name());
        for v in r.values {
            let _ = write!(s, " {v:>14.6e}");
        }
        s.push('\n');
    }
    s
}

pub fn list() -> String {
    let mut s = String::new();
    for name in BENCHMARK_NAMES {
        let spec = by_name(name).expect("registered benchmark");
        let _ = writeln!(
            s,
            "{name:<8} h={} dt={} T={} nu={} alpha={}",
            frac(spec.h),
            spec.dt,
            spec.end_time,
            spec.nu,
            spec.alpha_value()
        );
    }
    s
}
