//! Collocation nodes, quadrature matrices and the `Q_delta` preconditioners.
//!
//! Everything lives on the unit interval `[0, 1]`; the stepper scales by the
//! step size. Tables are immutable once built and can be shared freely.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;
const NODE_SEPARATION: f64 = 1e-14;
const PIVOT_THRESHOLD: f64 = 1e-14;
/// Largest node count integrated through the monomial expansion of `l_j`.
const MONOMIAL_MAX_NODES: usize = 8;
const MONOMIAL_CENTER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeFamily {
    GaussLegendre,
    /// Radau nodes including the right end point.
    GaussRadauRight,
    GaussLobatto,
}

impl NodeFamily {
    pub const ALL: [NodeFamily; 3] = [
        NodeFamily::GaussLegendre,
        NodeFamily::GaussRadauRight,
        NodeFamily::GaussLobatto,
    ];

    pub fn min_nodes(self) -> usize {
        match self {
            NodeFamily::GaussLobatto => 2,
            _ => 1,
        }
    }

    /// Order of the quadrature rule built on `nodes` points.
    pub fn order(self, nodes: usize) -> usize {
        match self {
            NodeFamily::GaussLegendre => 2 * nodes,
            NodeFamily::GaussRadauRight => 2 * nodes - 1,
            NodeFamily::GaussLobatto => 2 * nodes - 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeFamily::GaussLegendre => "gauss",
            NodeFamily::GaussRadauRight => "radau-right",
            NodeFamily::GaussLobatto => "lobatto",
        }
    }
}

impl fmt::Display for NodeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NodeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gauss" | "legendre" | "gauss-legendre" => Ok(NodeFamily::GaussLegendre),
            "radau-right" | "radau" | "gauss-radau" => Ok(NodeFamily::GaussRadauRight),
            "lobatto" | "gauss-lobatto" => Ok(NodeFamily::GaussLobatto),
            other => Err(Error::config(format!("unknown node family `{other}`"))),
        }
    }
}

/// Legendre polynomial `P_n` and its first two derivatives at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    let (mut s0, mut s1) = (0.0, 0.0);
    if n == 0 {
        return (p0, d0, s0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        let d2 = d0 + (2.0 * kf + 1.0) * p1;
        let s2 = s0 + (2.0 * kf + 1.0) * d1;
        (p0, p1) = (p1, p2);
        (d0, d1) = (d1, d2);
        (s0, s1) = (s1, s2);
    }
    (p1, d1, s1)
}

/// Newton iteration with deflation against `known` roots, started from
/// Chebyshev points. Returns `count` roots of `target` in `(-1, 1)`.
fn deflated_newton_roots(
    count: usize,
    known: &[f64],
    target: impl Fn(f64) -> (f64, f64),
) -> Result<Vec<f64>> {
    let mut found: Vec<f64> = Vec::with_capacity(count);
    for i in 0..count {
        let mut x = ((2 * i + 1) as f64 * std::f64::consts::PI / (2 * count) as f64).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (g, dg) = target(x);
            let shift: f64 = known
                .iter()
                .chain(found.iter())
                .map(|r| 1.0 / (x - r))
                .sum();
            let dx = g / (dg - g * shift);
            x -= dx;
            if !dx.is_finite() {
                break;
            }
            if dx.abs() < NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged || !x.is_finite() {
            return Err(Error::NoConvergence {
                residual: target(x).0.abs(),
                iterations: NEWTON_MAX_ITER,
            });
        }
        found.push(x);
    }
    Ok(found)
}

/// Collocation nodes of the given family on `[0, 1]`, strictly increasing.
pub fn generate_nodes(family: NodeFamily, nodes: usize) -> Result<Vec<f64>> {
    if nodes < family.min_nodes() {
        return Err(Error::UnsupportedNodeCount { family, nodes });
    }
    let mut roots = match family {
        NodeFamily::GaussLegendre => deflated_newton_roots(nodes, &[], |x| {
            let (p, dp, _) = legendre(nodes, x);
            (p, dp)
        })?,
        NodeFamily::GaussRadauRight => {
            // P_M - P_{M-1} vanishes at x = 1; the remaining roots are interior.
            let mut r = deflated_newton_roots(nodes - 1, &[1.0], |x| {
                let (p, dp, _) = legendre(nodes, x);
                let (q, dq, _) = legendre(nodes - 1, x);
                (p - q, dp - dq)
            })?;
            r.push(1.0);
            r
        }
        NodeFamily::GaussLobatto => {
            let mut r = deflated_newton_roots(nodes - 2, &[], |x| {
                let (_, dp, d2p) = legendre(nodes - 1, x);
                (dp, d2p)
            })?;
            r.push(-1.0);
            r.push(1.0);
            r
        }
    };
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
    let mut tau: Vec<f64> = roots.iter().map(|x| 0.5 * (x + 1.0)).collect();
    match family {
        NodeFamily::GaussRadauRight => *tau.last_mut().unwrap() = 1.0,
        NodeFamily::GaussLobatto => {
            tau[0] = 0.0;
            *tau.last_mut().unwrap() = 1.0;
        }
        NodeFamily::GaussLegendre => {}
    }
    check_nodes(&tau)?;
    Ok(tau)
}

fn check_nodes(tau: &[f64]) -> Result<()> {
    if tau.is_empty() {
        return Err(Error::DegenerateNodes("empty node set".into()));
    }
    if tau.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > 1.0) {
        return Err(Error::DegenerateNodes(format!("nodes outside [0, 1]: {tau:?}")));
    }
    for pair in tau.windows(2) {
        if pair[1] - pair[0] <= NODE_SEPARATION {
            return Err(Error::DegenerateNodes(format!(
                "nodes {} and {} are not strictly increasing",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LagrangeIntegration {
    Monomial,
    Quadrature,
}

/// Coefficients (lowest degree first) of the `j`-th Lagrange basis polynomial
/// in the shifted variable `y = s - 1/2`, which keeps the expansion well scaled on `[0, 1]`.
fn lagrange_coefficients(tau: &[f64], j: usize) -> Vec<f64> {
    let mut coeffs = vec![1.0];
    let mut denom = 1.0;
    for (k, &tk) in tau.iter().enumerate() {
        if k == j {
            continue;
        }
        denom *= tau[j] - tk;
        let root = tk - MONOMIAL_CENTER;
        let mut next = vec![0.0; coeffs.len() + 1];
        for (d, c) in coeffs.iter().enumerate() {
            next[d + 1] += c;
            next[d] -= root * c;
        }
        coeffs = next;
    }
    coeffs.iter().map(|c| c / denom).collect()
}

fn lagrange_eval(tau: &[f64], j: usize, s: f64) -> f64 {
    tau.iter()
        .enumerate()
        .filter(|(k, _)| *k != j)
        .map(|(_, &tk)| (s - tk) / (tau[j] - tk))
        .product()
}

/// `out[u][j] = ∫_0^{upper[u]} l_j(s) ds`.
fn integrate_lagrange(
    tau: &[f64],
    upper: &[f64],
    method: LagrangeIntegration,
) -> Result<Vec<Vec<f64>>> {
    let m = tau.len();
    match method {
        LagrangeIntegration::Monomial => {
            let antiderivatives: Vec<Vec<f64>> = (0..m)
                .map(|j| {
                    let c = lagrange_coefficients(tau, j);
                    let mut a = vec![0.0; c.len() + 1];
                    for (d, cd) in c.iter().enumerate() {
                        a[d + 1] = cd / (d + 1) as f64;
                    }
                    a
                })
                .collect();
            let horner = |a: &[f64], y: f64| a.iter().rev().fold(0.0, |acc, c| acc * y + c);
            Ok(upper
                .iter()
                .map(|&b| {
                    antiderivatives
                        .iter()
                        .map(|a| horner(a, b - MONOMIAL_CENTER) - horner(a, -MONOMIAL_CENTER))
                        .collect()
                })
                .collect())
        }
        LagrangeIntegration::Quadrature => {
            // M Gauss points integrate the degree M-1 basis exactly on every piece.
            let gauss = generate_nodes(NodeFamily::GaussLegendre, m)?;
            let gauss_w = gauss_weights(&gauss);
            let mut breaks: Vec<f64> = std::iter::once(0.0).chain(tau.iter().copied()).collect();
            breaks.extend(upper.iter().copied());
            breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
            breaks.dedup();
            Ok(upper
                .iter()
                .map(|&b| {
                    (0..m)
                        .map(|j| {
                            breaks
                                .windows(2)
                                .filter(|w| w[1] <= b)
                                .map(|w| {
                                    let h = w[1] - w[0];
                                    gauss
                                        .iter()
                                        .zip(&gauss_w)
                                        .map(|(g, gw)| gw * lagrange_eval(tau, j, w[0] + h * g))
                                        .sum::<f64>()
                                        * h
                                })
                                .sum()
                        })
                        .collect()
                })
                .collect())
        }
    }
}

/// Gauss-Legendre weights on [0, 1] from `w = 2 / ((1 - x^2) P'_n(x)^2)`, halved.
fn gauss_weights(gauss: &[f64]) -> Vec<f64> {
    let n = gauss.len();
    gauss
        .iter()
        .map(|t| {
            let x = 2.0 * t - 1.0;
            let (_, dp, _) = legendre(n, x);
            1.0 / ((1.0 - x * x) * dp * dp)
        })
        .collect()
}

fn method_for(nodes: usize) -> LagrangeIntegration {
    if nodes <= MONOMIAL_MAX_NODES {
        LagrangeIntegration::Monomial
    } else {
        LagrangeIntegration::Quadrature
    }
}

/// Node-to-start quadrature matrix `q[m, j] = ∫_0^{tau_m} l_j(s) ds`.
pub fn build_q_matrix(tau: &[f64]) -> Result<DMatrix<f64>> {
    check_nodes(tau)?;
    let m = tau.len();
    let rows = integrate_lagrange(tau, tau, method_for(m))?;
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

/// End-of-interval weights `w_j = ∫_0^1 l_j(s) ds`.
pub fn build_final_weights(tau: &[f64]) -> Result<Vec<f64>> {
    check_nodes(tau)?;
    let mut rows = integrate_lagrange(tau, &[1.0], method_for(tau.len()))?;
    Ok(rows.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationTable {
    pub family: NodeFamily,
    pub tau: Vec<f64>,
    pub q: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl CollocationTable {
    pub fn new(family: NodeFamily, nodes: usize) -> Result<Self> {
        let tau = generate_nodes(family, nodes)?;
        let q = build_q_matrix(&tau)?;
        let weights = build_final_weights(&tau)?;
        Ok(Self {
            family,
            order: family.order(nodes),
            tau,
            q,
            weights,
        })
    }

    pub fn nodes(&self) -> usize {
        self.tau.len()
    }

    /// Node spacings with `tau_0 = 0`.
    pub fn delta_tau(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.tau
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::json!({
            "family": self.family.name(),
            "M": self.nodes(),
            "tau": json_reals(&self.tau),
            "Q": json_matrix(&self.q),
            "w": json_reals(&self.weights),
        });
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

fn json_real(v: f64) -> serde_json::Value {
    let text = format!("{v:.16e}");
    serde_json::Value::Number(text.parse().expect("formatted float is a JSON number"))
}

fn json_reals(v: &[f64]) -> serde_json::Value {
    serde_json::Value::Array(v.iter().map(|x| json_real(*x)).collect())
}

fn json_matrix(m: &DMatrix<f64>) -> serde_json::Value {
    serde_json::Value::Array(
        (0..m.nrows())
            .map(|i| json_reals(&m.row(i).iter().copied().collect::<Vec<_>>()))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QDeltaKind {
    ImplicitEuler,
    ExplicitEuler,
    Lu,
    MinSrNs,
    MinSrFlex,
}

impl QDeltaKind {
    pub fn name(self) -> &'static str {
        match self {
            QDeltaKind::ImplicitEuler => "IE",
            QDeltaKind::ExplicitEuler => "EE",
            QDeltaKind::Lu => "LU",
            QDeltaKind::MinSrNs => "MIN-SR-NS",
            QDeltaKind::MinSrFlex => "MIN-SR-FLEX",
        }
    }

    /// The only role this matrix may play in the fast/slow split.
    pub fn role(self) -> Role {
        match self {
            QDeltaKind::ExplicitEuler | QDeltaKind::MinSrNs => Role::Explicit,
            QDeltaKind::ImplicitEuler | QDeltaKind::Lu | QDeltaKind::MinSrFlex => Role::Implicit,
        }
    }
}

impl fmt::Display for QDeltaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QDeltaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IE" | "IMPLICIT-EULER" => Ok(QDeltaKind::ImplicitEuler),
            "EE" | "EXPLICIT-EULER" | "FE" => Ok(QDeltaKind::ExplicitEuler),
            "LU" => Ok(QDeltaKind::Lu),
            "MIN-SR-NS" => Ok(QDeltaKind::MinSrNs),
            "MIN-SR-FLEX" => Ok(QDeltaKind::MinSrFlex),
            other => Err(Error::config(format!("unknown Q_delta kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Implicit,
    Explicit,
}

/// A `Q_delta` kind bound to the role it plays; construction rejects
/// combinations such as an explicit `LU`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PreconditionerKind {
    kind: QDeltaKind,
    role: Role,
}

impl PreconditionerKind {
    pub fn new(kind: QDeltaKind, role: Role) -> Result<Self> {
        if kind.role() != role {
            return Err(Error::RoleMismatch { kind, role });
        }
        Ok(Self { kind, role })
    }

    pub fn implicit(kind: QDeltaKind) -> Result<Self> {
        Self::new(kind, Role::Implicit)
    }

    pub fn explicit(kind: QDeltaKind) -> Result<Self> {
        Self::new(kind, Role::Explicit)
    }

    pub fn kind(&self) -> QDeltaKind {
        self.kind
    }

    pub fn role(&self) -> Role {
        self.role
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreconditionerMatrix {
    pub kind: PreconditionerKind,
    pub qdelta: DMatrix<f64>,
    pub sweep_dependent: bool,
}

impl PreconditionerMatrix {
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::json!({
            "kind": self.kind.kind().name(),
            "M": self.qdelta.nrows(),
            "qdelta": json_matrix(&self.qdelta),
        });
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

/// Doolittle factorisation `a = l * u` with unit-diagonal `l` and no row exchanges.
pub fn lu_without_pivoting(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::identity(n, n);
    let mut u = a.clone();
    for k in 0..n {
        let pivot = u[(k, k)];
        if pivot.abs() < PIVOT_THRESHOLD {
            return Err(Error::SingularSystem { pivot });
        }
        for i in k + 1..n {
            let factor = u[(i, k)] / pivot;
            l[(i, k)] = factor;
            for j in k..n {
                u[(i, j)] -= factor * u[(k, j)];
            }
            u[(i, k)] = 0.0;
        }
    }
    Ok((l, u))
}

/// `Q_delta = U^T` from `Q^T = L U`. A node at `tau = 0` contributes a zero
/// row of `Q`; it is left out of the factorisation and gets a zero row and column.
fn lu_trick(table: &CollocationTable) -> Result<DMatrix<f64>> {
    let m = table.nodes();
    let skip = usize::from(table.tau[0] == 0.0);
    let block = table.q.view((skip, skip), (m - skip, m - skip)).transpose();
    let (_, u) = lu_without_pivoting(&block)?;
    let mut qd = DMatrix::zeros(m, m);
    qd.view_mut((skip, skip), (m - skip, m - skip))
        .copy_from(&u.transpose());
    Ok(qd)
}

/// Build `Q_delta` of the given kind for sweep `sweep_index` (1-based; only
/// `MIN-SR-FLEX` depends on it).
pub fn build_preconditioner(
    kind: PreconditionerKind,
    table: &CollocationTable,
    sweep_index: usize,
) -> Result<PreconditionerMatrix> {
    if sweep_index == 0 {
        return Err(Error::config("sweep index starts at 1"));
    }
    let kind = PreconditionerKind::new(kind.kind, kind.role)?;
    let m = table.nodes();
    let dtau = table.delta_tau();
    let tau = &table.tau;
    let qdelta = match kind.kind {
        QDeltaKind::ImplicitEuler => {
            DMatrix::from_fn(m, m, |i, j| if j <= i { dtau[j] } else { 0.0 })
        }
        QDeltaKind::ExplicitEuler => {
            DMatrix::from_fn(m, m, |i, j| if j < i { dtau[j + 1] } else { 0.0 })
        }
        QDeltaKind::Lu => lu_trick(table)?,
        QDeltaKind::MinSrNs => DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                tau[i] / m as f64
            } else {
                0.0
            }
        }),
        QDeltaKind::MinSrFlex => {
            // Defined for k = 1..M; later sweeps reuse k = M.
            let k = sweep_index.min(m) as f64;
            DMatrix::from_fn(m, m, |i, j| if i == j { tau[i] / k } else { 0.0 })
        }
    };
    Ok(PreconditionerMatrix {
        kind,
        qdelta,
        sweep_dependent: kind.kind == QDeltaKind::MinSrFlex,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::SymmetricEigen;

    /// Golub-Welsch: eigenvalues of the Jacobi matrix of a Jacobi-polynomial
    /// family (alpha, beta), mapped to [0, 1].
    fn golub_welsch(n: usize, alpha: f64, beta: f64) -> Vec<f64> {
        if n == 0 {
            return vec![];
        }
        let ab = alpha + beta;
        let mut t = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let kf = k as f64;
            let denom = (2.0 * kf + ab) * (2.0 * kf + ab + 2.0);
            t[(k, k)] = if denom == 0.0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / denom
            };
            if k + 1 < n {
                let j = kf + 1.0;
                let s = 2.0 * j + ab;
                let b2 = 4.0 * j * (j + alpha) * (j + beta) * (j + ab) / (s * s * (s + 1.0) * (s - 1.0));
                t[(k, k + 1)] = b2.sqrt();
                t[(k + 1, k)] = b2.sqrt();
            }
        }
        let mut x: Vec<f64> = SymmetricEigen::new(t).eigenvalues.iter().map(|x| 0.5 * (x + 1.0)).collect();
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        x
    }

    fn oracle_nodes(family: NodeFamily, m: usize) -> Vec<f64> {
        match family {
            NodeFamily::GaussLegendre => golub_welsch(m, 0.0, 0.0),
            NodeFamily::GaussRadauRight => {
                let mut x = golub_welsch(m - 1, 1.0, 0.0);
                x.push(1.0);
                x
            }
            NodeFamily::GaussLobatto => {
                let mut x = vec![0.0];
                x.extend(golub_welsch(m - 2, 1.0, 1.0));
                x.push(1.0);
                x
            }
        }
    }

    #[test]
    fn nodes_match_closed_forms() {
        assert_eq!(generate_nodes(NodeFamily::GaussLegendre, 1).unwrap(), vec![0.5]);
        let gl2 = generate_nodes(NodeFamily::GaussLegendre, 2).unwrap();
        let s3 = 3f64.sqrt();
        assert_abs_diff_eq!(gl2[0], (3.0 - s3) / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gl2[1], (3.0 + s3) / 6.0, epsilon = 1e-15);
        let r2 = generate_nodes(NodeFamily::GaussRadauRight, 2).unwrap();
        assert_abs_diff_eq!(r2[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(r2[1], 1.0);
        assert_eq!(generate_nodes(NodeFamily::GaussLobatto, 2).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn nodes_match_golub_welsch() {
        for family in NodeFamily::ALL {
            for m in family.min_nodes()..=10 {
                let tau = generate_nodes(family, m).unwrap();
                let oracle = oracle_nodes(family, m);
                for (a, b) in tau.iter().zip(&oracle) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn endpoint_invariants() {
        for m in 1..=8 {
            let gl = generate_nodes(NodeFamily::GaussLegendre, m).unwrap();
            assert!(gl[0] > 0.0 && gl[m - 1] < 1.0);
            let r = generate_nodes(NodeFamily::GaussRadauRight, m).unwrap();
            assert_eq!(r[m - 1], 1.0);
            assert!(r[0] > 0.0);
        }
        for m in 2..=8 {
            let l = generate_nodes(NodeFamily::GaussLobatto, m).unwrap();
            assert_eq!(l[0], 0.0);
            assert_eq!(l[m - 1], 1.0);
        }
    }

    #[test]
    fn unsupported_counts() {
        assert!(matches!(
            generate_nodes(NodeFamily::GaussLegendre, 0),
            Err(Error::UnsupportedNodeCount { .. })
        ));
        assert!(matches!(
            generate_nodes(NodeFamily::GaussLobatto, 1),
            Err(Error::UnsupportedNodeCount { .. })
        ));
    }

    #[test]
    fn q_matrix_examples() {
        let q = build_q_matrix(&[0.5]).unwrap();
        assert_eq!(q[(0, 0)], 0.5);
        // Radau M=2: analytic integrals of (s - 1)/(1/3 - 1) and (s - 1/3)/(1 - 1/3).
        let q = build_q_matrix(&[1.0 / 3.0, 1.0]).unwrap();
        let expected = [[5.0 / 12.0, -1.0 / 12.0], [0.75, 0.25]];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(q[(i, j)], expected[i][j], epsilon = 1e-15);
            }
        }
        let w = build_final_weights(&[1.0 / 3.0, 1.0]).unwrap();
        assert_abs_diff_eq!(w[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.25, epsilon = 1e-15);
        assert_eq!(build_final_weights(&[0.5]).unwrap(), vec![1.0]);
        let gl2 = generate_nodes(NodeFamily::GaussLegendre, 2).unwrap();
        let w = build_final_weights(&gl2).unwrap();
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_nodes_rejected() {
        assert!(matches!(build_q_matrix(&[0.2, 0.2]), Err(Error::DegenerateNodes(_))));
        assert!(matches!(build_q_matrix(&[0.5, 0.2]), Err(Error::DegenerateNodes(_))));
        assert!(matches!(build_final_weights(&[0.3, 0.3 + 1e-16]), Err(Error::DegenerateNodes(_))));
    }

    #[test]
    fn integration_paths_agree() {
        for family in NodeFamily::ALL {
            for m in family.min_nodes()..=8 {
                let tau = generate_nodes(family, m).unwrap();
                let mut upper = tau.clone();
                upper.push(1.0);
                let a = integrate_lagrange(&tau, &upper, LagrangeIntegration::Monomial).unwrap();
                let b = integrate_lagrange(&tau, &upper, LagrangeIntegration::Quadrature).unwrap();
                for (ra, rb) in a.iter().zip(&b) {
                    for (x, y) in ra.iter().zip(rb) {
                        assert_abs_diff_eq!(x, y, epsilon = 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn large_tables_use_quadrature_and_stay_exact() {
        let table = CollocationTable::new(NodeFamily::GaussLegendre, 12).unwrap();
        for i in 0..12 {
            assert_abs_diff_eq!(table.q.row(i).sum(), table.tau[i], epsilon = 1e-13);
        }
        assert_abs_diff_eq!(table.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn implicit_euler_gl2() {
        let table = CollocationTable::new(NodeFamily::GaussLegendre, 2).unwrap();
        let p = build_preconditioner(
            PreconditionerKind::implicit(QDeltaKind::ImplicitEuler).unwrap(),
            &table,
            1,
        )
        .unwrap();
        let t = &table.tau;
        assert_eq!(p.qdelta[(0, 0)], t[0]);
        assert_eq!(p.qdelta[(0, 1)], 0.0);
        assert_eq!(p.qdelta[(1, 0)], t[0]);
        assert_eq!(p.qdelta[(1, 1)], t[1] - t[0]);
        assert_abs_diff_eq!(p.qdelta[(1, 1)], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn min_sr_entries() {
        let table = CollocationTable::new(NodeFamily::GaussLegendre, 2).unwrap();
        let ns = build_preconditioner(PreconditionerKind::explicit(QDeltaKind::MinSrNs).unwrap(), &table, 1)
            .unwrap();
        assert_eq!(ns.qdelta[(0, 0)], table.tau[0] / 2.0);
        assert_eq!(ns.qdelta[(1, 1)], table.tau[1] / 2.0);
        assert_abs_diff_eq!(ns.qdelta[(0, 0)], 0.105_662_432_702_593_56, epsilon = 1e-15);
        assert!(!ns.sweep_dependent);
        let flex = PreconditionerKind::implicit(QDeltaKind::MinSrFlex).unwrap();
        for k in 1..=4 {
            let p = build_preconditioner(flex, &table, k).unwrap();
            assert!(p.sweep_dependent);
            let kk = k.min(2) as f64;
            assert_eq!(p.qdelta[(1, 1)], table.tau[1] / kk);
            assert_eq!(p.qdelta[(1, 0)], 0.0);
        }
    }

    #[test]
    fn explicit_euler_structure() {
        for m in 1..=6 {
            let table = CollocationTable::new(NodeFamily::GaussLegendre, m).unwrap();
            let p = build_preconditioner(PreconditionerKind::explicit(QDeltaKind::ExplicitEuler).unwrap(), &table, 1)
                .unwrap();
            let dtau = table.delta_tau();
            for i in 0..m {
                for j in 0..m {
                    let expected = if j < i { dtau[j + 1] } else { 0.0 };
                    assert_eq!(p.qdelta[(i, j)], expected);
                }
            }
        }
    }

    #[test]
    fn lu_trick_recomposes() {
        for family in NodeFamily::ALL {
            for m in family.min_nodes()..=6 {
                let table = CollocationTable::new(family, m).unwrap();
                let p = build_preconditioner(PreconditionerKind::implicit(QDeltaKind::Lu).unwrap(), &table, 1).unwrap();
                let skip = usize::from(table.tau[0] == 0.0);
                let n = m - skip;
                let qt = table.q.view((skip, skip), (n, n)).transpose();
                let (l, u) = lu_without_pivoting(&qt).unwrap();
                let qd = p.qdelta.view((skip, skip), (n, n)).into_owned();
                assert_eq!(qd, u.transpose());
                let recomposed = (&l * qd.transpose()).transpose();
                let q_block = table.q.view((skip, skip), (n, n));
                for i in 0..n {
                    for j in 0..n {
                        assert_abs_diff_eq!(recomposed[(i, j)], q_block[(i, j)], epsilon = 1e-13);
                        if j > i {
                            assert_eq!(p.qdelta[(i + skip, j + skip)], 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn role_mismatch() {
        assert!(matches!(
            PreconditionerKind::explicit(QDeltaKind::Lu),
            Err(Error::RoleMismatch { .. })
        ));
        assert!(matches!(
            PreconditionerKind::implicit(QDeltaKind::MinSrNs),
            Err(Error::RoleMismatch { .. })
        ));
        assert!(PreconditionerKind::implicit(QDeltaKind::MinSrFlex).is_ok());
    }

    #[test]
    fn json_export_carries_17_digits() {
        let table = CollocationTable::new(NodeFamily::GaussRadauRight, 3).unwrap();
        let text = table.to_json().unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["family"], "radau-right");
        assert_eq!(parsed["M"], 3);
        let tau0 = parsed["tau"][0].to_string();
        assert_eq!(tau0, format!("{:.16e}", table.tau[0]));
        assert_eq!(tau0.parse::<f64>().unwrap(), table.tau[0]);
        let p = build_preconditioner(PreconditionerKind::implicit(QDeltaKind::Lu).unwrap(), &table, 1).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        assert_eq!(parsed["kind"], "LU");
        assert_eq!(parsed["qdelta"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn deterministic_preconditioners() {
        let table = CollocationTable::new(NodeFamily::GaussLegendre, 4).unwrap();
        for kind in [QDeltaKind::ImplicitEuler, QDeltaKind::Lu, QDeltaKind::MinSrFlex] {
            let k = PreconditionerKind::implicit(kind).unwrap();
            let a = build_preconditioner(k, &table, 3).unwrap();
            let b = build_preconditioner(k, &table, 3).unwrap();
            let bits = |m: &DMatrix<f64>| m.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.qdelta), bits(&b.qdelta));
        }
    }
}
