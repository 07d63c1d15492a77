use num_complex::Complex64;

use crate::error::Result;
use crate::imex::{ImexSystem, ImplicitSolution, Layout, SolverTolerances};

/// `x' = lambda_fast x + lambda_slow x` for complex `x`, stored as `(re, im)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DahlquistTwoRate {
    pub lambda_fast: Complex64,
    pub lambda_slow: Complex64,
    pub x0: Complex64,
}

impl DahlquistTwoRate {
    pub fn new(lambda_fast: Complex64, lambda_slow: Complex64) -> Self {
        Self { lambda_fast, lambda_slow, x0: Complex64::new(1.0, 0.0) }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![self.x0.re, self.x0.im]
    }

    pub fn exact(&self, t: f64) -> Vec<f64> {
        let x = ((self.lambda_fast + self.lambda_slow) * t).exp() * self.x0;
        vec![x.re, x.im]
    }
}

fn apply(lambda: Complex64, x: &[f64], out: &mut [f64]) {
    let y = lambda * Complex64::new(x[0], x[1]);
    out[0] = y.re;
    out[1] = y.im;
}

impl ImexSystem for DahlquistTwoRate {
    fn n_dof(&self) -> usize {
        2
    }

    fn eval_fast(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        apply(self.lambda_fast, x, out);
    }

    fn eval_slow(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        apply(self.lambda_slow, x, out);
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn solve_implicit(&self, a: f64, rhs: &[f64], _t: f64, _tols: &SolverTolerances) -> Result<ImplicitSolution> {
        let x = Complex64::new(rhs[0], rhs[1]) / (1.0 - a * self.lambda_fast);
        Ok(ImplicitSolution { x: vec![x.re, x.im], newton_iterations: 0, krylov_iterations: 0 })
    }

    fn layout(&self) -> Layout {
        Layout { variables: vec!["re".into(), "im".into()], x: vec![0.0], z: vec![0.0] }
    }
}
