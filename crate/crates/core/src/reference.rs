//! Explicit SSPRK3 reference solutions and their on-disk cache.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imex::{ensure_finite, ImexSystem};
use crate::snapshot::{load_snapshot, save_snapshot};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ssprk3Config {
    pub dt: f64,
}

impl Ssprk3Config {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config(format!("reference step must be positive, got {dt}")));
        }
        Ok(Self { dt })
    }

    /// Number of steps covering `[t_0, t_end]`; `dt` must divide the interval.
    pub fn steps(&self, t_0: f64, t_end: f64) -> Result<usize> {
        steps_for(self.dt, t_0, t_end)
    }
}

pub(crate) fn steps_for(dt: f64, t_0: f64, t_end: f64) -> Result<usize> {
    let span = t_end - t_0;
    let n = (span / dt).round();
    if !(span > 0.0) || n < 1.0 || (n * dt - span).abs() > 1e-12 * span.abs().max(dt) * n.max(1.0) {
        return Err(Error::config(format!("dt = {dt} does not divide [{t_0}, {t_end}]")));
    }
    Ok(n as usize)
}

fn eval_total<S: ImexSystem + ?Sized>(system: &S, x: &[f64], t: f64, fast: &mut [f64], out: &mut [f64]) {
    system.eval_fast(x, t, fast);
    system.eval_slow(x, t, out);
    out.iter_mut().zip(fast.iter()).for_each(|(o, f)| *o += f);
}

/// Shu-Osher SSPRK3 with `f = F + S` treated explicitly.
pub fn ssprk3_step<S: ImexSystem + ?Sized>(system: &S, x: &[f64], t: f64, dt: f64) -> Vec<f64> {
    let n = x.len();
    let mut fast = vec![0.0; n];
    let mut f = vec![0.0; n];

    eval_total(system, x, t, &mut fast, &mut f);
    let x1: Vec<f64> = x.iter().zip(&f).map(|(x, f)| x + dt * f).collect();

    eval_total(system, &x1, t + dt, &mut fast, &mut f);
    let x2: Vec<f64> = (0..n).map(|i| 0.75 * x[i] + 0.25 * (x1[i] + dt * f[i])).collect();

    eval_total(system, &x2, t + 0.5 * dt, &mut fast, &mut f);
    (0..n).map(|i| x[i] / 3.0 + 2.0 / 3.0 * (x2[i] + dt * f[i])).collect()
}

pub fn integrate<S: ImexSystem + ?Sized>(
    system: &S,
    x_0: &[f64],
    t_0: f64,
    t_end: f64,
    config: Ssprk3Config,
) -> Result<Vec<f64>> {
    if x_0.len() != system.n_dof() {
        return Err(Error::DimensionMismatch { expected: system.n_dof(), found: x_0.len() });
    }
    let steps = config.steps(t_0, t_end)?;
    let mut x = x_0.to_vec();
    for step in 0..steps {
        x = ssprk3_step(system, &x, t_0 + step as f64 * config.dt, config.dt);
    }
    ensure_finite(&x, "SSPRK3 reference")?;
    Ok(x)
}

/// Reference solutions stored as snapshot CSVs, one file per
/// `(problem key, dt, t_end)`.
#[derive(Debug, Clone)]
pub struct ReferenceCache {
    dir: PathBuf,
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// The key should describe the problem and its grid.
    pub fn path(&self, key: &str, dt: f64, t_end: f64) -> PathBuf {
        let clean: String = key
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
            .collect();
        self.dir.join(format!("{clean}__dt{dt:e}__t{t_end:e}.csv"))
    }

    pub fn get_or_compute<S: ImexSystem + ?Sized>(
        &self,
        key: &str,
        system: &S,
        x_0: &[f64],
        t_0: f64,
        t_end: f64,
        config: Ssprk3Config,
    ) -> Result<Vec<f64>> {
        let path = self.path(key, config.dt, t_end);
        let layout = system.layout();
        if path.exists() {
            let (cached_layout, state) = load_snapshot(&path)?;
            if cached_layout == layout && state.len() == system.n_dof() {
                return Ok(state);
            }
        }
        let state = integrate(system, x_0, t_0, t_end, config)?;
        // write then rename so a concurrent reader never sees a partial file
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        save_snapshot(&tmp, &layout, &state)?;
        std::fs::rename(&tmp, &path)?;
        Ok(state)
    }
}
