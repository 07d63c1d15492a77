use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::imex::{ImexSystem, ImplicitSolution, Layout, SolverTolerances};
use crate::problems::{AcousticAdvection1D, Advection1D, DahlquistTwoRate, GravityWave2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Dahlquist,
    Advection1d,
    Acoustic1d,
    Gravity2d,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] =
        [ProblemKind::Dahlquist, ProblemKind::Advection1d, ProblemKind::Acoustic1d, ProblemKind::Gravity2d];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Dahlquist => "dahlquist",
            ProblemKind::Advection1d => "advection1d",
            ProblemKind::Acoustic1d => "acoustic1d",
            ProblemKind::Gravity2d => "gravity2d",
        }
    }

    /// Default study: dyadic step sizes and end time.
    pub fn default_schedule(self) -> (Vec<f64>, f64) {
        match self {
            ProblemKind::Dahlquist => (vec![0.2, 0.1, 0.05, 0.025], 1.0),
            ProblemKind::Advection1d => (vec![1000.0, 500.0, 250.0, 125.0], 50_000.0),
            ProblemKind::Acoustic1d => (vec![1.0 / 128.0, 1.0 / 256.0, 1.0 / 512.0, 1.0 / 1024.0], 0.25),
            ProblemKind::Gravity2d => (vec![24.0, 12.0, 6.0, 3.0], 3000.0),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown problem {s:?}")))
    }
}

/// Problem parameters. Fields a problem does not use are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub lambda_fast: Complex64,
    pub lambda_slow: Complex64,
    /// Cells of the 1D problems, `nx` of the slice.
    pub cells: usize,
    /// `nz` of the slice.
    pub layers: usize,
    pub length: f64,
    /// Advection speed (advection) or background flow (acoustics).
    pub speed: f64,
    pub sound_speed: f64,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind) -> Self {
        let base = Self {
            kind,
            lambda_fast: Complex64::new(-0.5, 4.0),
            lambda_slow: Complex64::new(0.0, 1.0),
            cells: 64,
            layers: 10,
            length: 1.0,
            speed: 1.0,
            sound_speed: 20.0,
        };
        match kind {
            ProblemKind::Advection1d => Self { length: 1e6, speed: 20.0, ..base },
            ProblemKind::Gravity2d => Self { cells: 150, layers: 10, length: 300e3, speed: 20.0, sound_speed: 300.0, ..base },
            _ => base,
        }
    }

    pub fn build(&self) -> Result<Problem> {
        Ok(match self.kind {
            ProblemKind::Dahlquist => Problem::Dahlquist(DahlquistTwoRate::new(self.lambda_fast, self.lambda_slow)),
            ProblemKind::Advection1d => {
                Problem::Advection1d(Advection1D::new(self.cells, self.length, self.speed, 0.25 * self.length)?)
            }
            ProblemKind::Acoustic1d => {
                Problem::Acoustic1d(AcousticAdvection1D::new(self.cells, self.length, self.speed, self.sound_speed)?)
            }
            ProblemKind::Gravity2d => {
                let mut g = GravityWave2D::new(self.cells, self.layers)?;
                g.sound_speed = self.sound_speed;
                g.flow = self.speed;
                Problem::Gravity2d(g)
            }
        })
    }

    /// Identifies problem and grid, e.g. for the reference cache.
    pub fn key(&self) -> String {
        match self.kind {
            ProblemKind::Dahlquist => format!("dahlquist_f{}_s{}", self.lambda_fast, self.lambda_slow),
            ProblemKind::Advection1d => format!("advection1d_n{}_L{:e}_c{:e}", self.cells, self.length, self.speed),
            ProblemKind::Acoustic1d => format!(
                "acoustic1d_n{}_L{:e}_U{:e}_cs{:e}",
                self.cells, self.length, self.speed, self.sound_speed
            ),
            ProblemKind::Gravity2d => format!(
                "gravity2d_{}x{}_U{:e}_cs{:e}",
                self.cells, self.layers, self.speed, self.sound_speed
            ),
        }
    }
}

/// One of the model problems behind a single type.
#[derive(Debug, Clone)]
pub enum Problem {
    Dahlquist(DahlquistTwoRate),
    Advection1d(Advection1D),
    Acoustic1d(AcousticAdvection1D),
    Gravity2d(GravityWave2D),
}

macro_rules! dispatch {
    ($self:ident, $p:ident => $e:expr) => {
        match $self {
            Problem::Dahlquist($p) => $e,
            Problem::Advection1d($p) => $e,
            Problem::Acoustic1d($p) => $e,
            Problem::Gravity2d($p) => $e,
        }
    };
}

impl Problem {
    pub fn initial_state(&self) -> Vec<f64> {
        match self {
            Problem::Dahlquist(p) => p.initial_state(),
            Problem::Advection1d(p) => p.initial_state(),
            Problem::Acoustic1d(p) => p.gaussian_pulse(0.1 * p.length),
            Problem::Gravity2d(p) => p.initial_state(),
        }
    }

    /// Exact solution of the (semi-discrete) system where one is available.
    pub fn exact(&self, t: f64) -> Option<Vec<f64>> {
        match self {
            Problem::Dahlquist(p) => Some(p.exact(t)),
            Problem::Advection1d(p) => Some(p.exact(&p.initial_state()).at(t)),
            _ => None,
        }
    }
}

impl ImexSystem for Problem {
    fn n_dof(&self) -> usize {
        dispatch!(self, p => p.n_dof())
    }

    fn eval_fast(&self, x: &[f64], t: f64, out: &mut [f64]) {
        dispatch!(self, p => p.eval_fast(x, t, out))
    }

    fn eval_slow(&self, x: &[f64], t: f64, out: &mut [f64]) {
        dispatch!(self, p => p.eval_slow(x, t, out))
    }

    fn is_linear(&self) -> bool {
        dispatch!(self, p => p.is_linear())
    }

    fn solve_implicit(&self, a: f64, rhs: &[f64], t: f64, tols: &SolverTolerances) -> Result<ImplicitSolution> {
        dispatch!(self, p => p.solve_implicit(a, rhs, t, tols))
    }

    fn layout(&self) -> Layout {
        dispatch!(self, p => p.layout())
    }
}
