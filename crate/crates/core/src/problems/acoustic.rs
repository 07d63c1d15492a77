use std::f64::consts::PI;

use super::stencil::centered2;
use crate::error::{Error, Result};
use crate::imex::{ImexSystem, Layout};

/// Periodic 1D acoustics `(u, p)` with sound speed `c_s` (fast) carried by a
/// background flow `U` (slow). Second-order centred differences; the state is
/// `u` for every cell followed by `p` for every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticAdvection1D {
    pub n_cells: usize,
    pub length: f64,
    pub flow: f64,
    pub sound_speed: f64,
}

impl AcousticAdvection1D {
    pub fn new(n_cells: usize, length: f64, flow: f64, sound_speed: f64) -> Result<Self> {
        if n_cells < 3 {
            return Err(Error::config(format!("acoustics needs at least 3 cells, got {n_cells}")));
        }
        if !(length > 0.0) || !flow.is_finite() || !sound_speed.is_finite() {
            return Err(Error::config("acoustics needs a positive length and finite speeds"));
        }
        Ok(Self { n_cells, length, flow, sound_speed })
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| (i as f64 + 0.5) * self.dx()).collect()
    }

    pub fn fast_cfl(&self, dt: f64) -> f64 {
        self.sound_speed.abs() * dt / self.dx()
    }

    pub fn slow_cfl(&self, dt: f64) -> f64 {
        self.flow.abs() * dt / self.dx()
    }

    /// Gaussian pressure pulse of width `width` in the middle of the domain, `u = 0`.
    pub fn gaussian_pulse(&self, width: f64) -> Vec<f64> {
        let centre = 0.5 * self.length;
        let mut x = vec![0.0; self.n_cells];
        x.extend(self.grid().iter().map(|x| (-((x - centre) / width).powi(2)).exp()));
        x
    }

    /// `u = sin(2 pi m x / L)`, `p = cos(2 pi m x / L)`.
    pub fn wave(&self, mode: usize) -> Vec<f64> {
        let k = 2.0 * PI * mode as f64 / self.length;
        let grid = self.grid();
        let mut x: Vec<f64> = grid.iter().map(|x| (k * x).sin()).collect();
        x.extend(grid.iter().map(|x| (k * x).cos()));
        x
    }

    /// `sum (u^2 + p^2) dx`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>() * self.dx()
    }
}

impl ImexSystem for AcousticAdvection1D {
    fn n_dof(&self) -> usize {
        2 * self.n_cells
    }

    fn eval_fast(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let (u, p) = x.split_at(self.n_cells);
        let (du, dp) = out.split_at_mut(self.n_cells);
        centered2(p, self.dx(), -self.sound_speed, du);
        centered2(u, self.dx(), -self.sound_speed, dp);
    }

    fn eval_slow(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let (u, p) = x.split_at(self.n_cells);
        let (du, dp) = out.split_at_mut(self.n_cells);
        centered2(u, self.dx(), -self.flow, du);
        centered2(p, self.dx(), -self.flow, dp);
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn layout(&self) -> Layout {
        Layout { variables: vec!["u".into(), "p".into()], x: self.grid(), z: vec![0.0] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imex::{eval_fast_vec, eval_slow_vec};

    #[test]
    fn constant_state_is_steady() {
        let p = AcousticAdvection1D::new(10, 1.0, 0.3, 4.0).unwrap();
        let x = [[1.5; 10], [-0.2; 10]].concat();
        assert!(eval_fast_vec(&p, &x, 0.0).iter().all(|v| *v == 0.0));
        assert!(eval_slow_vec(&p, &x, 0.0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fast_term_is_second_order_derivative() {
        let err = |n: usize| {
            let p = AcousticAdvection1D::new(n, 1.0, 0.0, 1.0).unwrap();
            let k = 2.0 * PI;
            let grid = p.grid();
            let mut x: Vec<f64> = grid.iter().map(|x| (k * x).sin()).collect();
            x.extend(std::iter::repeat_n(0.0, n));
            let f = eval_fast_vec(&p, &x, 0.0);
            let mut e: f64 = f[..n].iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (i, x) in grid.iter().enumerate() {
                e = e.max((f[n + i] + k * (k * x).cos()).abs());
            }
            e
        };
        let (e1, e2) = (err(32), err(64));
        assert!(((e1 / e2).log2() - 2.0).abs() < 0.05);
    }

    #[test]
    fn operators_are_skew() {
        let p = AcousticAdvection1D::new(12, 1.0, 0.7, 3.0).unwrap();
        let x = p.gaussian_pulse(0.1);
        let mut y = p.wave(2);
        y[3] += 0.5;
        for op in [eval_fast_vec::<AcousticAdvection1D>, eval_slow_vec::<AcousticAdvection1D>] {
            let ax = op(&p, &x, 0.0);
            let ay = op(&p, &y, 0.0);
            let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&ay).map(|(a, b)| a * b).sum();
            assert!((lhs + rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn cfl_numbers() {
        let p = AcousticAdvection1D::new(50, 1.0, 1.0, 20.0).unwrap();
        assert!((p.slow_cfl(0.01) - 0.5).abs() < 1e-14);
        assert!((p.fast_cfl(0.01) - 10.0).abs() < 1e-12);
    }
}
