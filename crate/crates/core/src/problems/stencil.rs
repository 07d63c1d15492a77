//! Periodic difference and spectral derivatives shared by the PDE problems.

use std::sync::Arc;

use rustfft::{num_complex::Complex64, Fft, FftPlanner};

/// `(f_{i+1} - f_{i-1}) / (2 dx)`, periodic.
pub(crate) fn centered2(f: &[f64], dx: f64, scale: f64, out: &mut [f64]) {
    let n = f.len();
    let c = scale / (2.0 * dx);
    for i in 0..n {
        let ip = if i + 1 == n { 0 } else { i + 1 };
        let im = if i == 0 { n - 1 } else { i - 1 };
        out[i] = c * (f[ip] - f[im]);
    }
}

/// `(-f_{i+2} + 8 f_{i+1} - 8 f_{i-1} + f_{i-2}) / (12 dx)`, periodic.
pub(crate) fn centered4(f: &[f64], dx: f64, scale: f64, out: &mut [f64]) {
    let n = f.len();
    let c = scale / (12.0 * dx);
    for i in 0..n {
        let at = |o: isize| f[(i as isize + o).rem_euclid(n as isize) as usize];
        out[i] = c * (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2));
    }
}

/// Fourier derivative on a periodic row; the Nyquist mode of an even
/// length row is dropped.
#[derive(Clone)]
pub(crate) struct SpectralDerivative {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `i k` per FFT bin, divided by `n` for the unnormalised inverse.
    multipliers: Vec<Complex64>,
}

impl std::fmt::Debug for SpectralDerivative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralDerivative").field("n", &self.multipliers.len()).finish()
    }
}

impl SpectralDerivative {
    pub(crate) fn new(n: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        let multipliers = (0..n)
            .map(|j| {
                let k = if 2 * j < n {
                    j as f64
                } else if 2 * j == n {
                    0.0
                } else {
                    j as f64 - n as f64
                };
                Complex64::new(0.0, 2.0 * std::f64::consts::PI * k / length / n as f64)
            })
            .collect();
        Self { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n), multipliers }
    }

    /// `out = scale * df/dx`.
    pub(crate) fn apply(&self, f: &[f64], scale: f64, out: &mut [f64]) {
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf.iter_mut().zip(&self.multipliers).for_each(|(b, m)| *b *= m * scale);
        self.inverse.process(&mut buf);
        out.iter_mut().zip(&buf).for_each(|(o, b)| *o = b.re);
    }
}
