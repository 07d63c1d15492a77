//! The fast/slow problem contract and the default implicit node solver.
//!
//! A problem splits its right-hand side as `f = F + S`: `F` carries the fast
//! waves and is treated implicitly, `S` is treated explicitly. Every implicit
//! node update of the stepper reduces to `x - a F(x) = rhs`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Systems up to this size are solved by assembling `I - a F` densely.
pub const DENSE_LIMIT: usize = 400;
pub const GMRES_RESTART: usize = 30;
const PIVOT_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverTolerances {
    pub nonlinear_abs: f64,
    pub nonlinear_rel: f64,
    pub linear_abs: f64,
    pub linear_rel: f64,
    pub max_newton: usize,
    pub max_krylov: usize,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            nonlinear_abs: 1e-4,
            nonlinear_rel: 1e-4,
            linear_abs: 1e-4,
            linear_rel: 1e-4,
            max_newton: 30,
            max_krylov: 200,
        }
    }
}

impl SolverTolerances {
    /// Same absolute and relative tolerance for both the Newton and the linear solver.
    pub fn uniform(tol: f64) -> Self {
        Self {
            nonlinear_abs: tol,
            nonlinear_rel: tol,
            linear_abs: tol,
            linear_rel: tol,
            ..Self::default()
        }
    }

    pub fn with_max_krylov(mut self, max_krylov: usize) -> Self {
        self.max_krylov = max_krylov;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.nonlinear_abs, self.nonlinear_rel, self.linear_abs, self.linear_rel];
        if all.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::config("solver tolerances must be positive"));
        }
        if self.max_newton == 0 || self.max_krylov == 0 {
            return Err(Error::config("iteration limits must be positive"));
        }
        Ok(())
    }

    /// Bound a converged implicit solve must meet: `tol_a + tol_r * |rhs|`.
    pub fn nonlinear_bound(&self, rhs_norm: f64) -> f64 {
        self.nonlinear_abs + self.nonlinear_rel * rhs_norm
    }

    pub fn linear_bound(&self, rhs_norm: f64) -> f64 {
        self.linear_abs + self.linear_rel * rhs_norm
    }
}

/// Grid description of a flat state: variable-major, then `z`, then `x`,
/// i.e. `index = (var * nz + k) * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub variables: Vec<String>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl Layout {
    pub fn flat(n: usize) -> Self {
        Self {
            variables: vec!["x".to_string()],
            x: (0..n).map(|i| i as f64).collect(),
            z: vec![0.0],
        }
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn nz(&self) -> usize {
        self.z.len()
    }

    pub fn len(&self) -> usize {
        self.variables.len() * self.nx() * self.nz()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, var: usize, k: usize, i: usize) -> usize {
        (var * self.nz() + k) * self.nx() + i
    }

    /// Contiguous slice range holding one variable.
    pub fn variable_range(&self, var: usize) -> std::ops::Range<usize> {
        let block = self.nx() * self.nz();
        var * block..(var + 1) * block
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitSolution {
    pub x: Vec<f64>,
    pub newton_iterations: usize,
    pub krylov_iterations: usize,
}

/// The problem contract.
///
/// `eval_fast` and `eval_slow` must be pure. `is_linear` promises that `F` is
/// linear and homogeneous, so `I - a F` can be applied through `eval_fast`.
pub trait ImexSystem: Sync {
    fn n_dof(&self) -> usize;

    fn eval_fast(&self, x: &[f64], t: f64, out: &mut [f64]);

    fn eval_slow(&self, x: &[f64], t: f64, out: &mut [f64]);

    fn is_linear(&self) -> bool {
        false
    }

    /// Solve `x - a F(x) = rhs`.
    fn solve_implicit(
        &self,
        a: f64,
        rhs: &[f64],
        t: f64,
        tols: &SolverTolerances,
    ) -> Result<ImplicitSolution> {
        default_solve_implicit(self, a, rhs, t, tols)
    }

    fn layout(&self) -> Layout {
        Layout::flat(self.n_dof())
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn ensure_finite(x: &[f64], context: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub fn eval_fast_vec<S: ImexSystem + ?Sized>(system: &S, x: &[f64], t: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    system.eval_fast(x, t, &mut out);
    out
}

pub fn eval_slow_vec<S: ImexSystem + ?Sized>(system: &S, x: &[f64], t: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    system.eval_slow(x, t, &mut out);
    out
}

/// `|x - a F(x, t) - rhs|_2`.
pub fn residual_norm<S: ImexSystem + ?Sized>(system: &S, x: &[f64], a: f64, rhs: &[f64], t: f64) -> f64 {
    let fx = eval_fast_vec(system, x, t);
    x.iter()
        .zip(&fx)
        .zip(rhs)
        .map(|((xi, fi), ri)| {
            let r = xi - a * fi - ri;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    pub residual: f64,
}

/// Restarted GMRES for `A x = b`, improving `x` in place until
/// `|b - A x|_2 <= target`. `apply(v, out)` writes `A v` into `out`.
pub fn gmres(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    target: f64,
    restart: usize,
    max_iterations: usize,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let restart = restart.max(1);
    let mut total = 0;
    let mut work = vec![0.0; n];
    loop {
        apply(x, &mut work);
        let r: Vec<f64> = b.iter().zip(&work).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if !beta.is_finite() {
            return Err(Error::NonFinite("Krylov iteration"));
        }
        if beta <= target {
            return Ok(KrylovOutcome { iterations: total, residual: beta });
        }
        if total >= max_iterations {
            return Err(Error::NoConvergence { residual: beta, iterations: total });
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;

        for j in 0..restart {
            let mut w = vec![0.0; n];
            apply(&basis[j], &mut w);
            // Modified Gram-Schmidt, applied twice.
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = dot(&w, v);
                    h[i][j] += hij;
                    w.iter_mut().zip(v).for_each(|(wk, vk)| *wk -= hij * vk);
                }
            }
            let wnorm = norm2(&w);
            h[j + 1][j] = wnorm;
            for i in 0..j {
                let tmp = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = tmp;
            }
            let denom = h[j][j].hypot(h[j + 1][j]);
            if denom == 0.0 {
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = h[j + 1][j] / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;

            let breakdown = wnorm <= f64::EPSILON * beta;
            if g[j + 1].abs() <= target || total >= max_iterations || breakdown {
                break;
            }
            basis.push(w.iter().map(|v| v / wnorm).collect());
        }

        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|k| h[i][k] * y[k]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            x.iter_mut().zip(v).for_each(|(xk, vk)| *xk += yi * vk);
        }
        if used == 0 {
            apply(x, &mut work);
            let residual = norm2(&b.iter().zip(&work).map(|(bi, ai)| bi - ai).collect::<Vec<_>>());
            return Err(Error::NoConvergence { residual, iterations: total });
        }
    }
}

/// Dense LU solve with partial pivoting; fails on pivots below `1e-14`.
pub fn dense_solve(matrix: DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let lu = matrix.lu();
    let u = lu.u();
    let pivot = u.diagonal().iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if !(pivot >= PIVOT_THRESHOLD) {
        return Err(Error::SingularSystem { pivot });
    }
    let b = DVector::from_column_slice(rhs);
    lu.solve(&b)
        .map(|x| x.as_slice().to_vec())
        .ok_or(Error::SingularSystem { pivot })
}

/// Dense `I - a F` assembled column by column through `eval_fast`.
fn assemble_linear<S: ImexSystem + ?Sized>(system: &S, a: f64, t: f64) -> DMatrix<f64> {
    let n = system.n_dof();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        system.eval_fast(&e, t, &mut col);
        for i in 0..n {
            m[(i, j)] -= a * col[i];
        }
        e[j] = 0.0;
    }
    m
}

/// Forward-difference Jacobian of `x - a F(x)` at `x`.
fn assemble_jacobian<S: ImexSystem + ?Sized>(system: &S, a: f64, x: &[f64], fx: &[f64], t: f64) -> DMatrix<f64> {
    let n = x.len();
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut xp = x.to_vec();
    let mut col = vec![0.0; n];
    for j in 0..n {
        let h = sqrt_eps * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        system.eval_fast(&xp, t, &mut col);
        for i in 0..n {
            m[(i, j)] -= a * (col[i] - fx[i]) / h;
        }
        xp[j] = x[j];
    }
    m
}

/// Solve `x - a F(x) = rhs` with the generic machinery: a single dense or
/// GMRES solve when the system is linear, Newton otherwise.
pub fn default_solve_implicit<S: ImexSystem + ?Sized>(
    system: &S,
    a: f64,
    rhs: &[f64],
    t: f64,
    tols: &SolverTolerances,
) -> Result<ImplicitSolution> {
    let n = system.n_dof();
    check_len(n, rhs.len())?;
    if !(a >= 0.0) {
        return Err(Error::config(format!("implicit coefficient must be non-negative, got {a}")));
    }
    if a == 0.0 {
        return Ok(ImplicitSolution { x: rhs.to_vec(), newton_iterations: 0, krylov_iterations: 0 });
    }
    let rhs_norm = norm2(rhs);
    let bound = tols.nonlinear_bound(rhs_norm);

    let solution = if system.is_linear() {
        if n <= DENSE_LIMIT {
            let x = dense_solve(assemble_linear(system, a, t), rhs)?;
            ImplicitSolution { x, newton_iterations: 1, krylov_iterations: 0 }
        } else {
            let mut x = rhs.to_vec();
            let outcome = gmres(
                |v, out| {
                    system.eval_fast(v, t, out);
                    out.iter_mut().zip(v).for_each(|(o, vi)| *o = vi - a * *o);
                },
                rhs,
                &mut x,
                tols.linear_bound(rhs_norm),
                GMRES_RESTART,
                tols.max_krylov,
            )?;
            ImplicitSolution { x, newton_iterations: 1, krylov_iterations: outcome.iterations }
        }
    } else {
        newton(system, a, rhs, t, tols, bound)?
    };

    ensure_finite(&solution.x, "implicit solve")?;
    let residual = residual_norm(system, &solution.x, a, rhs, t);
    if residual > bound {
        return Err(Error::NoConvergence { residual, iterations: solution.newton_iterations });
    }
    Ok(solution)
}

fn newton<S: ImexSystem + ?Sized>(
    system: &S,
    a: f64,
    rhs: &[f64],
    t: f64,
    tols: &SolverTolerances,
    bound: f64,
) -> Result<ImplicitSolution> {
    let n = rhs.len();
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut x = rhs.to_vec();
    let mut krylov = 0;
    let mut fx = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iteration in 0..=tols.max_newton {
        system.eval_fast(&x, t, &mut fx);
        let r: Vec<f64> = (0..n).map(|i| rhs[i] - x[i] + a * fx[i]).collect();
        residual = norm2(&r);
        if !residual.is_finite() {
            return Err(Error::NonFinite("Newton iteration"));
        }
        if residual <= bound {
            return Ok(ImplicitSolution { x, newton_iterations: iteration, krylov_iterations: krylov });
        }
        if iteration == tols.max_newton {
            break;
        }
        let delta = if n <= DENSE_LIMIT {
            dense_solve(assemble_jacobian(system, a, &x, &fx, t), &r)?
        } else {
            let mut delta = vec![0.0; n];
            let x_norm = norm2(&x);
            let apply = |v: &[f64], out: &mut [f64]| {
                let v_norm = norm2(v);
                if v_norm == 0.0 {
                    out.fill(0.0);
                    return;
                }
                let h = sqrt_eps * (1.0 + x_norm) / v_norm;
                let xp: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi + h * vi).collect();
                system.eval_fast(&xp, t, out);
                for i in 0..v.len() {
                    out[i] = v[i] - a * (out[i] - fx[i]) / h;
                }
            };
            let outcome = gmres(apply, &r, &mut delta, tols.linear_bound(residual), GMRES_RESTART, tols.max_krylov)?;
            krylov += outcome.iterations;
            delta
        };
        x.iter_mut().zip(&delta).for_each(|(xi, di)| *xi += di);
    }
    Err(Error::NoConvergence { residual, iterations: tols.max_newton })
}
