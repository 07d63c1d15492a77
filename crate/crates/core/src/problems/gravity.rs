use std::f64::consts::PI;

use super::stencil::{centered2, SpectralDerivative};
use crate::error::{Error, Result};
use crate::imex::{ImexSystem, Layout};

const GRAVITY: f64 = 9.80616;
const THETA_REF: f64 = 300.0;
const DELTA_THETA: f64 = 1e-2;

/// Discretisation of the horizontal advection `-U d/dx` in the slow term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HorizontalAdvection {
    Centered2,
    #[default]
    Spectral,
}

/// Linear vertical slice `(u, w, p, b)`: fast acoustic and buoyancy terms
///
/// ```text
/// u_t = -p_x,  w_t = -p_z + b,  p_t = -c_s^2 (u_x + w_z),  b_t = -N^2 w
/// ```
///
/// plus slow advection `-U d/dx` of every field. Cell-centred grid, periodic
/// in `x`, rigid lids at `z = 0` and `z = H` through odd reflection of `w` and
/// even reflection of `p`.
#[derive(Debug, Clone)]
pub struct GravityWave2D {
    pub lx: f64,
    pub height: f64,
    pub buoyancy_frequency: f64,
    pub flow: f64,
    pub half_width: f64,
    pub x_c: f64,
    pub delta_b: f64,
    pub sound_speed: f64,
    pub nx: usize,
    pub nz: usize,
    pub advection: HorizontalAdvection,
    spectral: SpectralDerivative,
}

impl GravityWave2D {
    pub fn new(nx: usize, nz: usize) -> Result<Self> {
        Self::with_advection(nx, nz, HorizontalAdvection::default())
    }

    pub fn with_advection(nx: usize, nz: usize, advection: HorizontalAdvection) -> Result<Self> {
        if nx < 30 || nz < 5 {
            return Err(Error::config(format!("gravity wave needs nx >= 30 and nz >= 5, got {nx} x {nz}")));
        }
        let lx = 300e3;
        Ok(Self {
            lx,
            height: 10e3,
            buoyancy_frequency: 0.01,
            flow: 20.0,
            half_width: 5e3,
            x_c: 0.0,
            delta_b: GRAVITY * DELTA_THETA / THETA_REF,
            sound_speed: 300.0,
            nx,
            nz,
            advection,
            spectral: SpectralDerivative::new(nx, lx),
        })
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dz(&self) -> f64 {
        self.height / self.nz as f64
    }

    pub fn x(&self) -> Vec<f64> {
        (0..self.nx).map(|i| -0.5 * self.lx + (i as f64 + 0.5) * self.dx()).collect()
    }

    pub fn z(&self) -> Vec<f64> {
        (0..self.nz).map(|k| (k as f64 + 0.5) * self.dz()).collect()
    }

    fn block(&self) -> usize {
        self.nx * self.nz
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let mut state = vec![0.0; 4 * self.block()];
        let (x, z) = (self.x(), self.z());
        for (k, zk) in z.iter().enumerate() {
            for (i, xi) in x.iter().enumerate() {
                let r = (xi - self.x_c) / self.half_width;
                state[3 * self.block() + k * self.nx + i] =
                    self.delta_b * (PI * zk / self.height).sin() / (1.0 + r * r);
            }
        }
        state
    }

    pub fn buoyancy<'a>(&self, state: &'a [f64]) -> &'a [f64] {
        &state[3 * self.block()..]
    }

    /// `sum (u^2 + w^2 + p^2 / c_s^2 + b^2 / N^2) dx dz`, conserved by the fast terms.
    pub fn energy(&self, state: &[f64]) -> f64 {
        let n = self.block();
        let sq = |r: std::ops::Range<usize>| state[r].iter().map(|v| v * v).sum::<f64>();
        let c2 = self.sound_speed * self.sound_speed;
        let n2 = self.buoyancy_frequency * self.buoyancy_frequency;
        (sq(0..n) + sq(n..2 * n) + sq(2 * n..3 * n) / c2 + sq(3 * n..4 * n) / n2) * self.dx() * self.dz()
    }

    pub fn fast_cfl(&self, dt: f64) -> f64 {
        self.sound_speed * dt / self.dx().min(self.dz())
    }

    pub fn slow_cfl(&self, dt: f64) -> f64 {
        self.flow.abs() * dt / self.dx()
    }

    /// Centre of the initial perturbation carried by the flow.
    pub fn advected_centre(&self, t: f64) -> f64 {
        self.x_c + self.flow * t
    }

    /// `max |b(x) - b(2 c - x)| / max |b|`, reflecting each row about `x = c`
    /// with periodic linear interpolation between cell centres.
    pub fn symmetry_defect(&self, b: &[f64], centre: f64) -> f64 {
        let x0 = self.x()[0];
        let dx = self.dx();
        let nx = self.nx;
        let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for row in b.chunks(nx) {
            for (i, xi) in self.x().iter().enumerate() {
                let s = ((2.0 * centre - xi) - x0) / dx;
                let base = s.floor();
                let frac = s - base;
                let j = (base as i64).rem_euclid(nx as i64) as usize;
                let reflected = if frac.abs() < 1e-9 {
                    row[j]
                } else if (1.0 - frac).abs() < 1e-9 {
                    row[(j + 1) % nx]
                } else {
                    (1.0 - frac) * row[j] + frac * row[(j + 1) % nx]
                };
                worst = worst.max((row[i] - reflected).abs());
            }
        }
        worst / scale
    }

    fn ddx(&self, f: &[f64], scale: f64, out: &mut [f64]) {
        for (row, o) in f.chunks(self.nx).zip(out.chunks_mut(self.nx)) {
            centered2(row, self.dx(), scale, o);
        }
    }

    /// `out += scale * dw/dz`, `w` odd about both lids.
    fn ddz_w(&self, w: &[f64], scale: f64, out: &mut [f64]) {
        let (nx, nz) = (self.nx, self.nz);
        let c = scale / (2.0 * self.dz());
        for k in 0..nz {
            for i in 0..nx {
                let below = if k == 0 { -w[i] } else { w[(k - 1) * nx + i] };
                let above = if k + 1 == nz { -w[k * nx + i] } else { w[(k + 1) * nx + i] };
                out[k * nx + i] += c * (above - below);
            }
        }
    }

    /// `out += scale * dp/dz`, `p` even about both lids.
    fn ddz_p(&self, p: &[f64], scale: f64, out: &mut [f64]) {
        let (nx, nz) = (self.nx, self.nz);
        let c = scale / (2.0 * self.dz());
        for k in 0..nz {
            for i in 0..nx {
                let below = if k == 0 { p[i] } else { p[(k - 1) * nx + i] };
                let above = if k + 1 == nz { p[k * nx + i] } else { p[(k + 1) * nx + i] };
                out[k * nx + i] += c * (above - below);
            }
        }
    }
}

impl ImexSystem for GravityWave2D {
    fn n_dof(&self) -> usize {
        4 * self.block()
    }

    fn eval_fast(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let n = self.block();
        let (u, rest) = x.split_at(n);
        let (w, rest) = rest.split_at(n);
        let (p, b) = rest.split_at(n);
        let (du, rest) = out.split_at_mut(n);
        let (dw, rest) = rest.split_at_mut(n);
        let (dp, db) = rest.split_at_mut(n);
        let c2 = self.sound_speed * self.sound_speed;

        self.ddx(p, -1.0, du);
        dw.copy_from_slice(b);
        self.ddz_p(p, -1.0, dw);
        self.ddx(u, -c2, dp);
        self.ddz_w(w, -c2, dp);
        let n2 = self.buoyancy_frequency * self.buoyancy_frequency;
        db.iter_mut().zip(w).for_each(|(d, w)| *d = -n2 * w);
    }

    fn eval_slow(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        match self.advection {
            HorizontalAdvection::Centered2 => self.ddx(x, -self.flow, out),
            HorizontalAdvection::Spectral => {
                for (row, o) in x.chunks(self.nx).zip(out.chunks_mut(self.nx)) {
                    self.spectral.apply(row, -self.flow, o);
                }
            }
        }
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn layout(&self) -> Layout {
        Layout {
            variables: ["u", "w", "p", "b"].map(String::from).to_vec(),
            x: self.x(),
            z: self.z(),
        }
    }
}
