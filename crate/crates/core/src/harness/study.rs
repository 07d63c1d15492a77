use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::problem::{Problem, ProblemKind, ProblemSpec};
use crate::error::{Error, Result};
use crate::imex::ImexSystem;
use crate::reference::{self, steps_for, ReferenceCache, Ssprk3Config};
use crate::sdc::{Sdc, SdcConfig, StepReport};
use crate::snapshot::fmt_real;

/// Errors below this are treated as round-off and make the fit degenerate.
pub const ROUND_OFF_FLOOR: f64 = 1e-15;
/// Studies refuse to fit when any error falls below this.
pub const STUDY_ROUND_OFF_GUARD: f64 = 1e-13;
const TINY_NORM: f64 = 1e-14;

pub const CSV_HEADER: [&str; 9] =
    ["problem", "family", "M", "K", "qdelta_imp", "qdelta_exp", "dt", "error_l2", "observed_order"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceKind {
    Analytic,
    Ssprk3 { dt_ref: f64 },
    SelfFinest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub problem: ProblemSpec,
    pub sdc: SdcConfig,
    pub dt_list: Vec<f64>,
    pub t_end: f64,
    pub reference: ReferenceKind,
    pub output_path: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.sdc.validate()?;
        if self.dt_list.len() < 3 {
            return Err(Error::config("a study needs at least three step sizes"));
        }
        if self.dt_list.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::config("step sizes must be strictly decreasing"));
        }
        for &dt in &self.dt_list {
            steps_for(dt, 0.0, self.t_end)?;
        }
        match self.reference {
            ReferenceKind::Analytic if !matches!(self.problem.kind, ProblemKind::Dahlquist | ProblemKind::Advection1d) => {
                Err(Error::config(format!("no analytic solution for {}", self.problem.kind)))
            }
            ReferenceKind::Ssprk3 { dt_ref } => Ssprk3Config::new(dt_ref)?.steps(0.0, self.t_end).map(|_| ()),
            ReferenceKind::SelfFinest if self.dt_list.len() < 4 => {
                Err(Error::config("a self-referenced study needs four step sizes to keep three in the fit"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub error_l2: f64,
    /// Pairwise order against the previous row; `None` for the first.
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    pub rows: Vec<ConvergenceRow>,
    pub variables: Vec<String>,
    /// Per row, the normalised error of each variable.
    pub variable_errors: Vec<Vec<f64>>,
    pub report: StepReport,
}

impl StudyOutcome {
    /// Least-squares order, refusing round-off dominated data.
    pub fn fitted_order(&self) -> Result<f64> {
        if let Some(row) = self.rows.iter().find(|r| r.error_l2 < STUDY_ROUND_OFF_GUARD) {
            return Err(Error::DegenerateFit(format!(
                "error {:e} at dt = {} is at the round-off level; use larger steps",
                row.error_l2, row.dt
            )));
        }
        let mut rows = self.rows.clone();
        fit_order(&mut rows)
    }
}

/// `|x - x_ref| / |x_ref|`, or the absolute norm when `|x_ref| < 1e-14`.
pub fn normalized_l2_error(x: &[f64], x_ref: &[f64]) -> Result<f64> {
    if x.len() != x_ref.len() {
        return Err(Error::DimensionMismatch { expected: x_ref.len(), found: x.len() });
    }
    let diff = x.iter().zip(x_ref).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm = x_ref.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(if norm < TINY_NORM { diff } else { diff / norm })
}

/// Least-squares slope of `log(error)` against `log(dt)`; fills the pairwise orders.
pub fn fit_order(rows: &mut [ConvergenceRow]) -> Result<f64> {
    if rows.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 rows, got {}", rows.len())));
    }
    if let Some(r) = rows.iter().find(|r| !(r.error_l2 >= ROUND_OFF_FLOOR)) {
        return Err(Error::DegenerateFit(format!("error {:e} at dt = {} is below {ROUND_OFF_FLOOR:e}", r.error_l2, r.dt)));
    }
    fill_pairwise(rows);
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.dt.ln(), r.error_l2.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("step sizes do not vary".into()));
    }
    Ok(sxy / sxx)
}

fn fill_pairwise(rows: &mut [ConvergenceRow]) {
    for i in 0..rows.len() {
        rows[i].observed_order = if i == 0 {
            None
        } else {
            let (a, b) = (rows[i - 1], rows[i]);
            let order = (a.error_l2 / b.error_l2).ln() / (a.dt / b.dt).ln();
            order.is_finite().then_some(order)
        };
    }
}

fn integrate_sdc(sdc: &Sdc, problem: &Problem, x0: &[f64], dt: f64, t_end: f64) -> Result<(Vec<f64>, StepReport)> {
    let steps = steps_for(dt, 0.0, t_end)?;
    let run = sdc.integrate(problem, x0, 0.0, t_end, steps, None)?;
    Ok((run.final_state, run.report))
}

fn variable_errors(problem: &Problem, x: &[f64], x_ref: &[f64]) -> Result<Vec<f64>> {
    let layout = problem.layout();
    (0..layout.variables.len())
        .map(|v| {
            let r = layout.variable_range(v);
            normalized_l2_error(&x[r.clone()], &x_ref[r])
        })
        .collect()
}

/// Run every step size (concurrently), compare against the reference and
/// write the CSV, if configured. Rows completed before a failure are still
/// written.
pub fn run_study(config: &StudyConfig) -> Result<StudyOutcome> {
    config.validate()?;
    let problem = config.problem.build()?;
    let sdc = Sdc::new(config.sdc.clone())?;
    let x0 = problem.initial_state();

    let runs: Vec<Result<(Vec<f64>, StepReport)>> =
        config.dt_list.par_iter().map(|&dt| integrate_sdc(&sdc, &problem, &x0, dt, config.t_end)).collect();

    let mut completed = Vec::new();
    let mut failure = None;
    for run in runs {
        match run {
            Ok(r) => completed.push(r),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    let (dts, states, reference): (Vec<f64>, Vec<(Vec<f64>, StepReport)>, Vec<f64>) = match config.reference {
        ReferenceKind::Analytic => (
            config.dt_list.clone(),
            completed,
            problem.exact(config.t_end).ok_or_else(|| Error::config("no analytic solution"))?,
        ),
        ReferenceKind::Ssprk3 { dt_ref } => {
            let rk = Ssprk3Config::new(dt_ref)?;
            let reference = match &config.cache_dir {
                Some(dir) => ReferenceCache::new(dir)?.get_or_compute(
                    &config.problem.key(),
                    &problem,
                    &x0,
                    0.0,
                    config.t_end,
                    rk,
                )?,
                None => reference::integrate(&problem, &x0, 0.0, config.t_end, rk)?,
            };
            (config.dt_list.clone(), completed, reference)
        }
        ReferenceKind::SelfFinest => {
            let finest = config.dt_list.len() - 1;
            if completed.len() <= finest {
                // the reference run itself did not finish
                (config.dt_list.clone(), Vec::new(), Vec::new())
            } else {
                let reference = completed.pop().expect("finest run").0;
                (config.dt_list[..finest].to_vec(), completed, reference)
            }
        }
    };

    let mut rows = Vec::with_capacity(states.len());
    let mut per_variable = Vec::with_capacity(states.len());
    let mut report = StepReport::default();
    for ((state, run_report), &dt) in states.iter().zip(&dts) {
        rows.push(ConvergenceRow { dt, error_l2: normalized_l2_error(state, &reference)?, observed_order: None });
        per_variable.push(variable_errors(&problem, state, &reference)?);
        report.implicit_solve_count += run_report.implicit_solve_count;
        report.newton_iterations_total += run_report.newton_iterations_total;
        report.krylov_iterations_total += run_report.krylov_iterations_total;
        report.final_collocation_residual = report.final_collocation_residual.max(run_report.final_collocation_residual);
        report.max_solve_residual_ratio = report.max_solve_residual_ratio.max(run_report.max_solve_residual_ratio);
    }
    fill_pairwise(&mut rows);

    let outcome = StudyOutcome { rows, variables: problem.layout().variables, variable_errors: per_variable, report };
    if let Some(path) = &config.output_path {
        write_csv_file(path, config, &outcome.rows)?;
        write_variable_csv(&variables_path(path), &outcome)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

/// Sidecar with per-variable errors next to the study CSV.
pub fn variables_path(path: &Path) -> PathBuf {
    let mut name = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".vars.csv");
    path.with_file_name(name)
}

pub fn write_csv<W: Write>(writer: W, config: &StudyConfig, rows: &[ConvergenceRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(CSV_HEADER)?;
    let sdc = &config.sdc;
    for row in rows {
        csv.write_record([
            config.problem.kind.name().to_string(),
            sdc.family.name().to_string(),
            sdc.nodes.to_string(),
            sdc.sweeps.to_string(),
            sdc.qdelta_implicit.kind().name().to_string(),
            sdc.qdelta_explicit.kind().name().to_string(),
            fmt_real(row.dt),
            fmt_real(row.error_l2),
            row.observed_order.map(fmt_real).unwrap_or_default(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

fn write_csv_file(path: &Path, config: &StudyConfig, rows: &[ConvergenceRow]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(&mut out, config, rows)?;
    out.flush()?;
    Ok(())
}

fn write_variable_csv(path: &Path, outcome: &StudyOutcome) -> Result<()> {
    let mut csv = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = vec!["dt".to_string()];
    header.extend(outcome.variables.iter().cloned());
    csv.write_record(&header)?;
    for (row, errors) in outcome.rows.iter().zip(&outcome.variable_errors) {
        let mut record = vec![fmt_real(row.dt)];
        record.extend(errors.iter().map(|e| fmt_real(*e)));
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

/// Parse the rows of a study CSV back.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<ConvergenceRow>> {
    let mut csv = csv::Reader::from_reader(reader);
    if csv.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::config("unexpected study CSV header"));
    }
    let number = |s: &str| s.parse::<f64>().map_err(|e| Error::config(format!("bad number {s:?}: {e}")));
    csv.records()
        .map(|record| {
            let record = record?;
            Ok(ConvergenceRow {
                dt: number(&record[6])?,
                error_l2: number(&record[7])?,
                observed_order: match &record[8] {
                    "" => None,
                    s => Some(number(s)?),
                },
            })
        })
        .collect()
}
