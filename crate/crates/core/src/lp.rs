//! Revised primal simplex for the allocation LP that remains once bids are
//! fixed:
//!
//! ```text
//! maximize    sum_e c_e x_e
//! subject to  sum_{e in campaign k} w_e x_e <= m_k     (budget rows)
//!             sum_{e in type i} x_e         <= 1       (supply rows)
//!             x >= 0
//! ```
//!
//! Every structural column has exactly two nonzeros, so the constraint matrix
//! is never materialized. The basis inverse is kept dense (its order is
//! `|K| + |I|`) and updated by elementary row operations, with periodic
//! refactorization. Pricing uses the largest reduced cost and falls back to
//! Bland's rule after a degenerate pivot.

use thiserror::Error;

const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
/// Bound on complementary-slackness and dual-feasibility residuals of an
/// accepted solution.
pub const CERTIFICATE_TOL: f64 = 1e-7;
/// Bound on primal row violations of an accepted solution.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("malformed LP: {0}")]
    Malformed(String),
    #[error("internal error: LP reported unbounded although x is confined to the unit box")]
    Unbounded,
    #[error("internal error: LP reported infeasible although x = 0 is feasible ({0})")]
    Infeasible(String),
    #[error("simplex did not terminate within {0} pivots")]
    IterationLimit(usize),
    #[error("singular basis during refactorization")]
    SingularBasis,
    #[error("optimality certificate rejected: {0}")]
    Certificate(String),
}

/// The phase-2 allocation LP in edge form.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredLp {
    pub n_types: usize,
    pub n_campaigns: usize,
    /// Impression type (supply row) of each variable.
    pub edge_type: Vec<usize>,
    /// Campaign (budget row) of each variable.
    pub edge_campaign: Vec<usize>,
    /// Objective coefficient of each variable.
    pub objective: Vec<f64>,
    /// Budget-row coefficient of each variable.
    pub budget_coeffs: Vec<f64>,
    /// Budget right-hand sides, one per campaign.
    pub budgets: Vec<f64>,
}

impl StructuredLp {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    /// `|K|` budget rows followed by `|I|` supply rows.
    pub fn n_rows(&self) -> usize {
        self.n_campaigns + self.n_types
    }

    pub fn rhs(&self, row: usize) -> f64 {
        if row < self.n_campaigns {
            self.budgets[row]
        } else {
            1.0
        }
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.edge_type.len() != n || self.edge_campaign.len() != n || self.budget_coeffs.len() != n {
            return Err(LpError::Malformed("per-variable arrays differ in length".into()));
        }
        if self.budgets.len() != self.n_campaigns {
            return Err(LpError::Malformed("budget vector length differs from campaign count".into()));
        }
        if let Some(j) =
            (0..n).find(|&j| self.edge_type[j] >= self.n_types || self.edge_campaign[j] >= self.n_campaigns)
        {
            return Err(LpError::Malformed(format!("variable {j} references a missing row")));
        }
        if let Some(j) = (0..n).find(|&j| !(self.objective[j].is_finite() && self.budget_coeffs[j].is_finite())) {
            return Err(LpError::Malformed(format!("variable {j} has a non-finite coefficient")));
        }
        if let Some(k) = self.budgets.iter().position(|m| !m.is_finite()) {
            return Err(LpError::Malformed(format!("budget {k} is not finite")));
        }
        if let Some(k) = self.budgets.iter().position(|&m| m < 0.0) {
            return Err(LpError::Infeasible(format!("budget row {k} has negative right-hand side")));
        }
        Ok(())
    }

    /// Row activities `A x` (without slacks).
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.n_rows()];
        for j in 0..self.n_vars() {
            act[self.edge_campaign[j]] += self.budget_coeffs[j] * x[j];
            act[self.n_campaigns + self.edge_type[j]] += x[j];
        }
        act
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Residuals of a primal/dual pair against the optimality conditions.
    pub fn certificate(&self, x: &[f64], duals: &[f64]) -> Certificate {
        let act = self.row_activity(x);
        let mut cert = Certificate::default();
        for (r, a) in act.iter().enumerate() {
            let slack = self.rhs(r) - a;
            cert.primal_residual = cert.primal_residual.max(-slack);
            cert.dual_residual = cert.dual_residual.max(-duals[r]);
            cert.complementarity = cert.complementarity.max((duals[r] * slack).abs());
        }
        for j in 0..self.n_vars() {
            cert.primal_residual = cert.primal_residual.max(-x[j]);
            let reduced = self.objective[j]
                - duals[self.edge_campaign[j]] * self.budget_coeffs[j]
                - duals[self.n_campaigns + self.edge_type[j]];
            cert.dual_residual = cert.dual_residual.max(reduced);
            cert.complementarity = cert.complementarity.max((x[j] * reduced).abs());
        }
        cert
    }
}

/// Worst violations of primal feasibility, dual feasibility and
/// complementary slackness. All are nonnegative.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Certificate {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Row duals, budget rows first.
    pub row_duals: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
    pub certificate: Certificate,
}

struct Simplex<'a> {
    lp: &'a StructuredLp,
    m: usize,
    // basis[p] = column basic in position p; columns >= n_vars are slacks
    basis: Vec<usize>,
    position: Vec<Option<usize>>,
    binv: Vec<f64>,
    xb: Vec<f64>,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a StructuredLp) -> Self {
        let m = lp.n_rows();
        let n = lp.n_vars();
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        let mut position = vec![None; n + m];
        for r in 0..m {
            position[n + r] = Some(r);
        }
        Self { lp, m, basis: (n..n + m).collect(), position, binv, xb: (0..m).map(|r| lp.rhs(r)).collect() }
    }

    fn cost(&self, col: usize) -> f64 {
        if col < self.lp.n_vars() {
            self.lp.objective[col]
        } else {
            0.0
        }
    }

    // Nonzeros of a column as (row, value).
    fn column(&self, col: usize) -> [(usize, f64); 2] {
        let lp = self.lp;
        if col < lp.n_vars() {
            [(lp.edge_campaign[col], lp.budget_coeffs[col]), (lp.n_campaigns + lp.edge_type[col], 1.0)]
        } else {
            [(col - lp.n_vars(), 1.0), (0, 0.0)]
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (p, &col) in self.basis.iter().enumerate() {
            let c = self.cost(col);
            if c != 0.0 {
                let row = &self.binv[p * m..(p + 1) * m];
                for (yr, b) in y.iter_mut().zip(row) {
                    *yr += c * b;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, y: &[f64], col: usize) -> f64 {
        let [(r0, a0), (r1, a1)] = self.column(col);
        self.cost(col) - y[r0] * a0 - y[r1] * a1
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        // Gauss-Jordan on [B | I] with partial pivoting.
        let mut a = vec![0.0; m * m];
        for (p, &col) in self.basis.iter().enumerate() {
            for (r, v) in self.column(col) {
                if v != 0.0 {
                    a[r * m + p] += v;
                }
            }
        }
        let mut inv = vec![0.0; m * m];
        for r in 0..m {
            inv[r * m + r] = 1.0;
        }
        for c in 0..m {
            let (piv, best) =
                (c..m).map(|r| (r, a[r * m + c].abs())).fold((c, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best < 1e-13 {
                return Err(LpError::SingularBasis);
            }
            if piv != c {
                for j in 0..m {
                    a.swap(piv * m + j, c * m + j);
                    inv.swap(piv * m + j, c * m + j);
                }
            }
            let d = a[c * m + c];
            for j in 0..m {
                a[c * m + j] /= d;
                inv[c * m + j] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * m + c];
                    if f != 0.0 {
                        for j in 0..m {
                            a[r * m + j] -= f * a[c * m + j];
                            inv[r * m + j] -= f * inv[c * m + j];
                        }
                    }
                }
            }
        }
        // inv is B^{-1}; row p gives basic variable in position p
        self.binv = inv;
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            self.xb[p] = (0..m).map(|r| row[r] * self.lp.rhs(r)).sum();
        }
        Ok(())
    }

    fn run(&mut self) -> Result<usize, LpError> {
        let n = self.lp.n_vars();
        let m = self.m;
        let limit = 50 * (n + m) + 1000;
        let mut bland = false;
        let mut alpha = vec![0.0; m];
        for pivots in 0..limit {
            if pivots > 0 && pivots % REFACTOR_EVERY == 0 {
                self.refactor()?;
            }
            let y = self.duals();
            let mut entering: Option<(usize, f64)> = None;
            for col in 0..n + m {
                if self.position[col].is_some() {
                    continue;
                }
                let d = self.reduced_cost(&y, col);
                if d > DUAL_TOL && entering.is_none_or(|(_, best)| d > best) {
                    entering = Some((col, d));
                    if bland {
                        break;
                    }
                }
            }
            let Some((q, _)) = entering else {
                return Ok(pivots);
            };

            let cols = self.column(q);
            for (p, a) in alpha.iter_mut().enumerate() {
                let row = &self.binv[p * m..(p + 1) * m];
                *a = cols.iter().map(|&(r, v)| row[r] * v).sum();
            }

            let mut leave: Option<(usize, f64)> = None;
            for p in 0..m {
                if alpha[p] > PIVOT_TOL {
                    let ratio = self.xb[p].max(0.0) / alpha[p];
                    let better = match leave {
                        None => true,
                        Some((lp, lr)) => ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[p] < self.basis[lp]),
                    };
                    if better {
                        leave = Some((p, ratio));
                    }
                }
            }
            let Some((r, theta)) = leave else {
                return Err(LpError::Unbounded);
            };

            for p in 0..m {
                self.xb[p] -= theta * alpha[p];
            }
            self.xb[r] = theta;
            let pivot = alpha[r];
            for j in 0..m {
                self.binv[r * m + j] /= pivot;
            }
            for p in 0..m {
                if p != r && alpha[p] != 0.0 {
                    let f = alpha[p];
                    for j in 0..m {
                        self.binv[p * m + j] -= f * self.binv[r * m + j];
                    }
                }
            }
            self.position[self.basis[r]] = None;
            self.basis[r] = q;
            self.position[q] = Some(r);
            bland = theta <= 1e-12;
        }
        Err(LpError::IterationLimit(limit))
    }
}

/// Solves the LP to an optimal basic solution and checks the optimality
/// certificate before returning it.
pub fn solve(lp: &StructuredLp) -> Result<LpSolution, LpError> {
    lp.check()?;
    let mut simplex = Simplex::new(lp);
    let pivots = simplex.run()?;
    simplex.refactor()?;

    let n = lp.n_vars();
    let mut x = vec![0.0; n];
    for (p, &col) in simplex.basis.iter().enumerate() {
        if col < n {
            x[col] = simplex.xb[p];
        }
    }
    let row_duals = simplex.duals();
    let certificate = lp.certificate(&x, &row_duals);
    if certificate.primal_residual > FEASIBILITY_TOL {
        return Err(LpError::Certificate(format!(
            "primal residual {:e} exceeds {FEASIBILITY_TOL:e}",
            certificate.primal_residual
        )));
    }
    if certificate.complementarity > CERTIFICATE_TOL || certificate.dual_residual > CERTIFICATE_TOL {
        return Err(LpError::Certificate(format!(
            "complementarity {:e}, dual residual {:e} exceed {CERTIFICATE_TOL:e}",
            certificate.complementarity, certificate.dual_residual
        )));
    }
    Ok(LpSolution { objective: lp.objective_value(&x), x, row_duals, pivots, certificate })
}
