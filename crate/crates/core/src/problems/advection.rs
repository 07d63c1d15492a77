use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};

use super::stencil::centered4;
use crate::error::{Error, Result};
use crate::imex::{ImexSystem, ImplicitSolution, Layout, SolverTolerances};

/// `D_t + c D_x = 0` on a periodic line, fourth-order centred differences.
/// The whole right-hand side is slow; the fast part is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Advection1D {
    pub n_cells: usize,
    pub length: f64,
    pub speed: f64,
    pub d_max: f64,
    pub radius: f64,
}

impl Advection1D {
    pub fn new(n_cells: usize, length: f64, speed: f64, radius: f64) -> Result<Self> {
        if n_cells < 8 {
            return Err(Error::config(format!("advection needs at least 8 cells, got {n_cells}")));
        }
        if !(length > 0.0) || !(radius > 0.0) || radius > 0.5 * length || !speed.is_finite() {
            return Err(Error::config("advection needs length > 0 and 0 < radius <= length / 2"));
        }
        Ok(Self { n_cells, length, speed, d_max: 1000.0, radius })
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    /// Cell centres.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| (i as f64 + 0.5) * self.dx()).collect()
    }

    /// Cosine bell centred in the domain.
    pub fn initial_state(&self) -> Vec<f64> {
        let centre = 0.5 * self.length;
        self.grid()
            .into_iter()
            .map(|x| {
                let r = (x - centre).abs();
                if r <= self.radius {
                    0.5 * self.d_max * (1.0 + (3.0 * PI * r / self.radius).cos())
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn cfl(&self, dt: f64) -> f64 {
        self.speed.abs() * dt / self.dx()
    }

    /// Exact time evolution of the semi-discrete system from `initial`.
    pub fn exact(&self, initial: &[f64]) -> ExactAdvection {
        ExactAdvection::new(self, initial)
    }
}

impl ImexSystem for Advection1D {
    fn n_dof(&self) -> usize {
        self.n_cells
    }

    fn eval_fast(&self, _x: &[f64], _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn eval_slow(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        centered4(x, self.dx(), -self.speed, out);
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn solve_implicit(&self, _a: f64, rhs: &[f64], _t: f64, _tols: &SolverTolerances) -> Result<ImplicitSolution> {
        Ok(ImplicitSolution { x: rhs.to_vec(), newton_iterations: 0, krylov_iterations: 0 })
    }

    fn layout(&self) -> Layout {
        Layout { variables: vec!["D".into()], x: self.grid(), z: vec![0.0] }
    }
}

/// Fourier modes of the initial data and the eigenvalues of the stencil.
#[derive(Debug, Clone)]
pub struct ExactAdvection {
    modes: Vec<Complex64>,
    eigenvalues: Vec<Complex64>,
}

impl ExactAdvection {
    fn new(problem: &Advection1D, initial: &[f64]) -> Self {
        let n = problem.n_cells;
        let dx = problem.dx();
        let mut modes: Vec<Complex64> = initial.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut modes);
        // symbol of the stencil on e^{i theta j}: i (8 sin theta - sin 2 theta) / (6 dx)
        let eigenvalues = (0..n)
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / n as f64;
                Complex64::new(0.0, -problem.speed * (8.0 * theta.sin() - (2.0 * theta).sin()) / (6.0 * dx))
            })
            .collect();
        Self { modes, eigenvalues }
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        let n = self.modes.len();
        let mut buf: Vec<Complex64> =
            self.modes.iter().zip(&self.eigenvalues).map(|(m, l)| m * (l * t).exp()).collect();
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        buf.iter().map(|b| b.re / n as f64).collect()
    }

    /// Largest `|lambda|` of the semi-discrete operator.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max)
    }
}
