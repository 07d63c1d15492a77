//! Fast-wave/slow-wave SDC time stepper in zero-to-node form.
//!
//! One step computes a first guess on the collocation nodes, performs `K`
//! correction sweeps and then either applies the collocation quadrature over
//! the whole step or copies the last node. Each sweep solves
//!
//! ```text
//! x_m^{k+1} - dt q^imp_mm F(x_m^{k+1}) = x_n + R_m
//! R_m = dt sum_{j<m} (q^imp_mj F_j^{k+1} + q^exp_mj S_j^{k+1})
//!     + dt sum_j ((q_mj - q^imp_mj) F_j^k + (q_mj - q^exp_mj) S_j^k)
//! ```
//!
//! for `m = 1..M` in order. A diagonal explicit matrix (`MIN-SR-NS`) has its
//! diagonal applied to `S_m^k`, which keeps the collocation solution a fixed point.

use nalgebra::DMatrix;

use crate::collocation::{
    build_preconditioner, generate_nodes, CollocationTable, NodeFamily, PreconditionerKind, QDeltaKind, Role,
};
use crate::error::{Error, Result};
use crate::imex::{
    eval_fast_vec, eval_slow_vec, ensure_finite, gmres, norm2, dense_solve, ImexSystem,
    SolverTolerances,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitialGuess {
    /// Every node starts from `x_n`.
    Copy,
    /// IMEX Euler chain from node to node.
    LowOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FinalUpdate {
    Collocation,
    /// Only valid for node sets ending at `tau = 1`.
    CopyLastNode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdcConfig {
    pub nodes: usize,
    pub sweeps: usize,
    pub family: NodeFamily,
    pub qdelta_implicit: PreconditionerKind,
    pub qdelta_explicit: PreconditionerKind,
    pub initial_guess: InitialGuess,
    pub final_update: FinalUpdate,
    pub tolerances: SolverTolerances,
}

impl SdcConfig {
    /// SDC(M, K) on Gauss-Legendre nodes with `LU`/`EE`, copied first guess and
    /// collocation final update.
    pub fn new(nodes: usize, sweeps: usize) -> Self {
        Self {
            nodes,
            sweeps,
            family: NodeFamily::GaussLegendre,
            qdelta_implicit: PreconditionerKind::implicit(QDeltaKind::Lu).expect("LU is implicit"),
            qdelta_explicit: PreconditionerKind::explicit(QDeltaKind::ExplicitEuler)
                .expect("EE is explicit"),
            initial_guess: InitialGuess::Copy,
            final_update: FinalUpdate::Collocation,
            tolerances: SolverTolerances::default(),
        }
    }

    pub fn with_family(mut self, family: NodeFamily) -> Self {
        self.family = family;
        self
    }

    pub fn with_preconditioners(mut self, implicit: QDeltaKind, explicit: QDeltaKind) -> Result<Self> {
        self.qdelta_implicit = PreconditionerKind::implicit(implicit)?;
        self.qdelta_explicit = PreconditionerKind::explicit(explicit)?;
        Ok(self)
    }

    pub fn with_initial_guess(mut self, guess: InitialGuess) -> Self {
        self.initial_guess = guess;
        self
    }

    pub fn with_final_update(mut self, update: FinalUpdate) -> Self {
        self.final_update = update;
        self
    }

    pub fn with_tolerances(mut self, tolerances: SolverTolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    /// Tolerances, preconditioner roles, node count and the final update
    /// against the last node.
    pub fn validate(&self) -> Result<()> {
        self.tolerances.validate()?;
        for (kind, role) in [(self.qdelta_implicit, Role::Implicit), (self.qdelta_explicit, Role::Explicit)] {
            if kind.role() != role {
                return Err(Error::RoleMismatch { kind: kind.kind(), role });
            }
        }
        let tau = generate_nodes(self.family, self.nodes)?;
        let last = tau[tau.len() - 1];
        if self.final_update == FinalUpdate::CopyLastNode && last != 1.0 {
            return Err(Error::InvalidFinalUpdate { last_node: last });
        }
        Ok(())
    }

    /// `min(K + 1, order of the quadrature)`: the order a copied first guess
    /// with a collocation final update reaches.
    pub fn expected_order(&self) -> usize {
        (self.sweeps + 1).min(self.family.order(self.nodes))
    }

    /// Implicit solves per step.
    pub fn solves_per_step(&self) -> usize {
        match self.initial_guess {
            InitialGuess::Copy => self.nodes * self.sweeps,
            InitialGuess::LowOrder => self.nodes * (self.sweeps + 1),
        }
    }
}

/// Node values of one iterate together with their cached `F` and `S` evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStates {
    pub states: Vec<Vec<f64>>,
    pub fast_evals: Vec<Vec<f64>>,
    pub slow_evals: Vec<Vec<f64>>,
    pub sweep: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub implicit_solve_count: usize,
    pub newton_iterations_total: usize,
    pub krylov_iterations_total: usize,
    /// `|X - X_n - dt Q f(X)|_2` over all nodes at the end of the sweeps.
    pub final_collocation_residual: f64,
    /// Largest `|x - a F(x) - rhs| / (tol_a + tol_r |rhs|)` over the step's
    /// implicit solves; at most one when every solve met its tolerance.
    pub max_solve_residual_ratio: f64,
}

impl StepReport {
    fn absorb(&mut self, other: &StepReport) {
        self.implicit_solve_count += other.implicit_solve_count;
        self.newton_iterations_total += other.newton_iterations_total;
        self.krylov_iterations_total += other.krylov_iterations_total;
        self.final_collocation_residual = self.final_collocation_residual.max(other.final_collocation_residual);
        self.max_solve_residual_ratio = self.max_solve_residual_ratio.max(other.max_solve_residual_ratio);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub final_state: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub report: StepReport,
}

/// Stepper for one `SdcConfig`; holds the collocation table and the `Q_delta`
/// matrices for every sweep index.
#[derive(Debug, Clone)]
pub struct Sdc {
    config: SdcConfig,
    table: CollocationTable,
    /// Indexed by `min(k, M) - 1` for sweep `k`.
    implicit: Vec<DMatrix<f64>>,
    explicit: Vec<DMatrix<f64>>,
}

impl Sdc {
    pub fn new(config: SdcConfig) -> Result<Self> {
        config.validate()?;
        let table = CollocationTable::new(config.family, config.nodes)?;
        let m = table.nodes();
        let mut implicit = Vec::with_capacity(m);
        let mut explicit = Vec::with_capacity(m);
        for k in 1..=m {
            implicit.push(build_preconditioner(config.qdelta_implicit, &table, k)?.qdelta);
            explicit.push(build_preconditioner(config.qdelta_explicit, &table, k)?.qdelta);
        }
        Ok(Self { config, table, implicit, explicit })
    }

    pub fn config(&self) -> &SdcConfig {
        &self.config
    }

    pub fn table(&self) -> &CollocationTable {
        &self.table
    }

    fn node_time(&self, t_n: f64, dt: f64, m: usize) -> f64 {
        t_n + self.table.tau[m] * dt
    }

    /// Solve one node equation, evaluate the fresh state and audit the residual.
    #[allow(clippy::too_many_arguments)]
    fn node_solve<S: ImexSystem + ?Sized>(
        &self,
        system: &S,
        a: f64,
        rhs: &[f64],
        t: f64,
        report: &mut StepReport,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let tols = &self.config.tolerances;
        let sol = system.solve_implicit(a, rhs, t, tols)?;
        ensure_finite(&sol.x, "implicit solve")?;
        let fast = eval_fast_vec(system, &sol.x, t);
        let slow = eval_slow_vec(system, &sol.x, t);
        let residual = sol
            .x
            .iter()
            .zip(&fast)
            .zip(rhs)
            .map(|((x, f), r)| (x - a * f - r).powi(2))
            .sum::<f64>()
            .sqrt();
        let bound = tols.nonlinear_bound(norm2(rhs));
        if residual > bound {
            return Err(Error::NoConvergence { residual, iterations: sol.newton_iterations });
        }
        report.implicit_solve_count += 1;
        report.newton_iterations_total += sol.newton_iterations;
        report.krylov_iterations_total += sol.krylov_iterations;
        report.max_solve_residual_ratio = report.max_solve_residual_ratio.max(residual / bound);
        Ok((sol.x, fast, slow))
    }

    pub fn initial_guess<S: ImexSystem + ?Sized>(
        &self,
        system: &S,
        x_n: &[f64],
        t_n: f64,
        dt: f64,
        report: &mut StepReport,
    ) -> Result<NodeStates> {
        check_step(system, x_n, dt)?;
        let m = self.table.nodes();
        let mut out = NodeStates {
            states: Vec::with_capacity(m),
            fast_evals: Vec::with_capacity(m),
            slow_evals: Vec::with_capacity(m),
            sweep: 0,
        };
        match self.config.initial_guess {
            InitialGuess::Copy => {
                for node in 0..m {
                    let t = self.node_time(t_n, dt, node);
                    out.fast_evals.push(eval_fast_vec(system, x_n, t));
                    out.slow_evals.push(eval_slow_vec(system, x_n, t));
                    out.states.push(x_n.to_vec());
                }
            }
            InitialGuess::LowOrder => {
                let dtau = self.table.delta_tau();
                let mut prev = x_n.to_vec();
                let mut prev_slow = eval_slow_vec(system, x_n, t_n);
                for node in 0..m {
                    let h = dt * dtau[node];
                    let rhs: Vec<f64> = prev.iter().zip(&prev_slow).map(|(x, s)| x + h * s).collect();
                    let t = self.node_time(t_n, dt, node);
                    let (x, fast, slow) = self.node_solve(system, h, &rhs, t, report)?;
                    prev.clone_from(&x);
                    prev_slow.clone_from(&slow);
                    out.states.push(x);
                    out.fast_evals.push(fast);
                    out.slow_evals.push(slow);
                }
            }
        }
        Ok(out)
    }

    /// One correction sweep from iterate `k = nodes.sweep` to `k + 1`.
    pub fn sweep<S: ImexSystem + ?Sized>(
        &self,
        system: &S,
        nodes: &NodeStates,
        x_n: &[f64],
        t_n: f64,
        dt: f64,
        report: &mut StepReport,
    ) -> Result<NodeStates> {
        check_step(system, x_n, dt)?;
        let m = self.table.nodes();
        if nodes.states.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: nodes.states.len() });
        }
        let index = (nodes.sweep + 1).min(m) - 1;
        let qi = &self.implicit[index];
        let qe = &self.explicit[index];
        let q = &self.table.q;
        let n = x_n.len();

        let mut out = NodeStates {
            states: Vec::with_capacity(m),
            fast_evals: Vec::with_capacity(m),
            slow_evals: Vec::with_capacity(m),
            sweep: nodes.sweep + 1,
        };
        for row in 0..m {
            let mut rhs = x_n.to_vec();
            for j in 0..row {
                let (ci, ce) = (dt * qi[(row, j)], dt * qe[(row, j)]);
                let (f, s) = (&out.fast_evals[j], &out.slow_evals[j]);
                for i in 0..n {
                    rhs[i] += ci * f[i] + ce * s[i];
                }
            }
            for j in 0..m {
                let ci = dt * (q[(row, j)] - qi[(row, j)]);
                let mut ce = dt * (q[(row, j)] - qe[(row, j)]);
                if j == row {
                    ce += dt * qe[(row, row)];
                }
                let (f, s) = (&nodes.fast_evals[j], &nodes.slow_evals[j]);
                for i in 0..n {
                    rhs[i] += ci * f[i] + ce * s[i];
                }
            }
            let a = dt * qi[(row, row)];
            let t = self.node_time(t_n, dt, row);
            let (x, fast, slow) = self.node_solve(system, a, &rhs, t, report)?;
            out.states.push(x);
            out.fast_evals.push(fast);
            out.slow_evals.push(slow);
        }
        Ok(out)
    }

    pub fn finalize(&self, nodes: &NodeStates, x_n: &[f64], dt: f64) -> Result<Vec<f64>> {
        let out = match self.config.final_update {
            FinalUpdate::Collocation => collocation_update(&self.table, nodes, x_n, dt),
            FinalUpdate::CopyLastNode => {
                let last = *self.table.tau.last().expect("at least one node");
                if last != 1.0 {
                    return Err(Error::InvalidFinalUpdate { last_node: last });
                }
                nodes.states.last().expect("at least one node").clone()
            }
        };
        ensure_finite(&out, "final update")?;
        Ok(out)
    }

    /// First guess, `K` sweeps and the final update.
    pub fn step<S: ImexSystem + ?Sized>(
        &self,
        system: &S,
        x_n: &[f64],
        t_n: f64,
        dt: f64,
    ) -> Result<(Vec<f64>, StepReport)> {
        let mut report = StepReport::default();
        let mut nodes = self.initial_guess(system, x_n, t_n, dt, &mut report)?;
        for _ in 0..self.config.sweeps {
            nodes = self.sweep(system, &nodes, x_n, t_n, dt, &mut report)?;
        }
        report.final_collocation_residual = collocation_residual(&self.table, &nodes, x_n, dt);
        let next = self.finalize(&nodes, x_n, dt)?;
        Ok((next, report))
    }

    /// Uniform steps from `t_0` to `t_end`. With `stride = Some(s)` the initial
    /// state, every `s`-th step and the final state are kept as snapshots.
    pub fn integrate<S: ImexSystem + ?Sized>(
        &self,
        system: &S,
        x_0: &[f64],
        t_0: f64,
        t_end: f64,
        n_steps: usize,
        stride: Option<usize>,
    ) -> Result<Integration> {
        let dt = uniform_step(t_0, t_end, n_steps)?;
        let mut x = x_0.to_vec();
        let mut report = StepReport::default();
        let mut snapshots = Vec::new();
        let keep = |step: usize| stride.is_some_and(|s| s > 0 && step % s == 0);
        if stride.is_some() {
            snapshots.push(Snapshot { step: 0, time: t_0, state: x.clone() });
        }
        for step in 0..n_steps {
            let t = t_0 + step as f64 * dt;
            let (next, step_report) = self.step(system, &x, t, dt)?;
            report.absorb(&step_report);
            x = next;
            let done = step + 1;
            if keep(done) || (stride.is_some() && done == n_steps) {
                snapshots.push(Snapshot { step: done, time: t_0 + done as f64 * dt, state: x.clone() });
            }
        }
        Ok(Integration { final_state: x, snapshots, report })
    }
}

pub(crate) fn uniform_step(t_0: f64, t_end: f64, n_steps: usize) -> Result<f64> {
    if n_steps == 0 {
        return Err(Error::config("at least one step is required"));
    }
    if !(t_end > t_0) {
        return Err(Error::config(format!("t_end = {t_end} must exceed t_0 = {t_0}")));
    }
    Ok((t_end - t_0) / n_steps as f64)
}

fn check_step<S: ImexSystem + ?Sized>(system: &S, x_n: &[f64], dt: f64) -> Result<()> {
    if x_n.len() != system.n_dof() {
        return Err(Error::DimensionMismatch { expected: system.n_dof(), found: x_n.len() });
    }
    if !(dt > 0.0) {
        return Err(Error::config(format!("step size must be positive, got {dt}")));
    }
    Ok(())
}

/// `x_n + dt sum_j w_j (F_j + S_j)`.
pub fn collocation_update(table: &CollocationTable, nodes: &NodeStates, x_n: &[f64], dt: f64) -> Vec<f64> {
    let mut out = x_n.to_vec();
    for (j, w) in table.weights.iter().enumerate() {
        let c = dt * w;
        for ((o, f), s) in out.iter_mut().zip(&nodes.fast_evals[j]).zip(&nodes.slow_evals[j]) {
            *o += c * (f + s);
        }
    }
    out
}

/// `|X - X_n - dt Q f(X)|_2` from the cached evaluations.
pub fn collocation_residual(table: &CollocationTable, nodes: &NodeStates, x_n: &[f64], dt: f64) -> f64 {
    let m = table.nodes();
    let mut total = 0.0;
    for row in 0..m {
        let mut r: Vec<f64> = nodes.states[row].iter().zip(x_n).map(|(x, x0)| x - x0).collect();
        for j in 0..m {
            let c = dt * table.q[(row, j)];
            for ((ri, f), s) in r.iter_mut().zip(&nodes.fast_evals[j]).zip(&nodes.slow_evals[j]) {
                *ri -= c * (f + s);
            }
        }
        total += r.iter().map(|v| v * v).sum::<f64>();
    }
    total.sqrt()
}

const DIRECT_TOL: f64 = 1e-12;
/// Stacked systems up to this size are factorised densely.
pub const DIRECT_DENSE_LIMIT: usize = 1200;
const DIRECT_RESTART: usize = 60;
const DIRECT_MAX_KRYLOV: usize = 20_000;

/// Solve the all-node collocation problem `X - dt (Q ⊗ I) f(X) = X_n` directly.
/// Linear systems take one dense or GMRES solve; others use Newton-Krylov
/// with at most `tols.max_newton` updates. The residual target is
/// `1e-12 min(1 + |X_n|, max(|X_n|, dt |f(X_n)|))` (or `1e-12` when it vanishes),
/// regardless of `tols`.
/// The result is the fixed point every converged sweep sequence approaches.
pub fn solve_collocation_direct<S: ImexSystem + ?Sized>(
    system: &S,
    table: &CollocationTable,
    x_n: &[f64],
    t_n: f64,
    dt: f64,
    tols: &SolverTolerances,
) -> Result<NodeStates> {
    check_step(system, x_n, dt)?;
    tols.validate()?;
    let n = x_n.len();
    let m = table.nodes();
    let times: Vec<f64> = table.tau.iter().map(|tau| t_n + tau * dt).collect();
    let stacked_xn: Vec<f64> = (0..m).flat_map(|_| x_n.iter().copied()).collect();
    // the residual is a difference of terms of size |X_n| and dt |f(X_n)|,
    // so the target is relative to the larger, capped at 1e-12 (1 + |X_n|)
    let xn_norm = norm2(&stacked_xn);
    let f_norm: f64 = times
        .iter()
        .map(|&t| {
            let mut f = eval_fast_vec(system, x_n, t);
            let s = eval_slow_vec(system, x_n, t);
            f.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
            norm2(&f).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let scale = xn_norm.max(dt.abs() * f_norm).min(1.0 + xn_norm);
    let target = DIRECT_TOL * if scale > 0.0 { scale } else { 1.0 };

    let eval_f = |x: &[f64], t: f64| {
        let mut f = eval_fast_vec(system, x, t);
        let s = eval_slow_vec(system, x, t);
        f.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        f
    };
    // G(X) = X - X_n - dt (Q ⊗ I) f(X)
    let residual = |xs: &[f64]| -> Vec<f64> {
        let f: Vec<Vec<f64>> = (0..m).map(|j| eval_f(&xs[j * n..(j + 1) * n], times[j])).collect();
        let mut g = vec![0.0; m * n];
        for row in 0..m {
            for i in 0..n {
                g[row * n + i] = xs[row * n + i] - x_n[i];
            }
            for (j, fj) in f.iter().enumerate() {
                let c = dt * table.q[(row, j)];
                for i in 0..n {
                    g[row * n + i] -= c * fj[i];
                }
            }
        }
        g
    };

    let mut xs = stacked_xn.clone();
    if system.is_linear() {
        if m * n <= DIRECT_DENSE_LIMIT {
            let mut a = DMatrix::<f64>::identity(m * n, m * n);
            let mut e = vec![0.0; n];
            for (j, &t) in times.iter().enumerate() {
                for col in 0..n {
                    e[col] = 1.0;
                    let f = eval_f(&e, t);
                    e[col] = 0.0;
                    for row in 0..m {
                        let c = dt * table.q[(row, j)];
                        for i in 0..n {
                            a[(row * n + i, j * n + col)] -= c * f[i];
                        }
                    }
                }
            }
            xs = dense_solve(a, &stacked_xn)?;
        } else {
            let apply = |v: &[f64], out: &mut [f64]| {
                let f: Vec<Vec<f64>> = (0..m).map(|j| eval_f(&v[j * n..(j + 1) * n], times[j])).collect();
                out.copy_from_slice(v);
                for row in 0..m {
                    for (j, fj) in f.iter().enumerate() {
                        let c = dt * table.q[(row, j)];
                        for i in 0..n {
                            out[row * n + i] -= c * fj[i];
                        }
                    }
                }
            };
            gmres(apply, &stacked_xn, &mut xs, 0.5 * target, DIRECT_RESTART, DIRECT_MAX_KRYLOV)?;
        }
    } else {
        let sqrt_eps = f64::EPSILON.sqrt();
        let mut converged = false;
        for _ in 0..=tols.max_newton {
            let g = residual(&xs);
            let g_norm = norm2(&g);
            if g_norm <= target {
                converged = true;
                break;
            }
            let x_norm = norm2(&xs);
            let base = xs.clone();
            let apply = |v: &[f64], out: &mut [f64]| {
                let v_norm = norm2(v);
                if v_norm == 0.0 {
                    out.fill(0.0);
                    return;
                }
                let h = sqrt_eps * (1.0 + x_norm) / v_norm;
                let shifted: Vec<f64> = base.iter().zip(v).map(|(b, vi)| b + h * vi).collect();
                let gp = residual(&shifted);
                for i in 0..v.len() {
                    out[i] = (gp[i] - g[i]) / h;
                }
            };
            let minus_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let mut delta = vec![0.0; m * n];
            gmres(apply, &minus_g, &mut delta, 1e-3 * g_norm, DIRECT_RESTART, DIRECT_MAX_KRYLOV)?;
            xs.iter_mut().zip(&delta).for_each(|(x, d)| *x += d);
        }
        if !converged {
            let r = norm2(&residual(&xs));
            if r > target {
                return Err(Error::NoConvergence { residual: r, iterations: tols.max_newton });
            }
        }
    }
    ensure_finite(&xs, "direct collocation solve")?;
    let r = norm2(&residual(&xs));
    if r > target {
        return Err(Error::NoConvergence { residual: r, iterations: 1 });
    }

    let states: Vec<Vec<f64>> = xs.chunks(n).map(|c| c.to_vec()).collect();
    let fast_evals = states.iter().zip(&times).map(|(x, &t)| eval_fast_vec(system, x, t)).collect();
    let slow_evals = states.iter().zip(&times).map(|(x, &t)| eval_slow_vec(system, x, t)).collect();
    Ok(NodeStates { states, fast_evals, slow_evals, sweep: 0 })
}
