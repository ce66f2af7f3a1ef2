//! Dense linear programming: a bounded-variable primal simplex and a
//! branch-and-bound over complementarity pairs `x+ * x- = 0`.
//!
//! Problems are stated as maximizations. Constraint rows are stored sparsely and
//! densified when a tableau is built.

mod branch;
mod simplex;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use branch::{solve_milp, solve_milp_with_limit, DEFAULT_NODE_LIMIT};
pub use simplex::solve_lp;

/// Row and bound feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-7;
/// Complementarity tolerance on `x+ * x-`.
pub const COMPLEMENTARITY_TOL: f64 = 1e-9;
/// Smallest pivot magnitude accepted by the ratio test.
pub const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("variable {name}: lower bound {lower} exceeds upper bound {upper}")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("invalid complementarity pair ({0}, {1})")]
    InvalidPair(usize, usize),
    #[error("simplex iteration limit ({0}) exceeded")]
    IterationLimit(usize),
    #[error("branch-and-bound node limit ({0}) exceeded")]
    NodeLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
    pub name: String,
}

/// `maximize c.x  s.t.  rows, lower <= x <= upper`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LpProblem {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Vec<String>,
    constraints: Vec<Constraint>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable and returns its column index. Bounds may be infinite.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            terms,
            relation,
            rhs,
            name: name.into(),
        });
        self.constraints.len() - 1
    }

    pub fn set_objective(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Dense coefficient row of constraint `i`.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut row = alloc::vec![0.0; self.num_vars()];
        for &(j, a) in &self.constraints[i].terms {
            row[j] += a;
        }
        row
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n || self.names.len() != n {
            return Err(LpError::DimensionMismatch(
                "bound or name vectors differ from the variable count".into(),
            ));
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::InvalidBounds {
                    name: self.names[j].clone(),
                    lower: lo,
                    upper: hi,
                });
            }
            if !self.objective[j].is_finite() {
                return Err(LpError::Numerical(format!(
                    "objective coefficient of {} is not finite",
                    self.names[j]
                )));
            }
        }
        for c in &self.constraints {
            if let Some(&(j, _)) = c.terms.iter().find(|(j, _)| *j >= n) {
                return Err(LpError::DimensionMismatch(format!(
                    "constraint {} references column {j} of {n}",
                    c.name
                )));
            }
            if !c.rhs.is_finite() || c.terms.iter().any(|(_, a)| !a.is_finite()) {
                return Err(LpError::Numerical(format!(
                    "constraint {} has non-finite data",
                    c.name
                )));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

impl fmt::Display for LpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "maximize")?;
        write!(f, "  obj:")?;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                write!(f, " {:+} {}", c, self.names[j])?;
            }
        }
        writeln!(f)?;
        writeln!(f, "subject to")?;
        for c in &self.constraints {
            write!(f, "  {}:", c.name)?;
            for &(j, a) in &c.terms {
                write!(f, " {:+} {}", a, self.names[j])?;
            }
            writeln!(f, " {} {}", c.relation.symbol(), c.rhs)?;
        }
        writeln!(f, "bounds")?;
        for j in 0..self.num_vars() {
            writeln!(f, "  {} <= {} <= {}", self.lower[j], self.names[j], self.upper[j])?;
        }
        writeln!(f, "end")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Variable values; empty unless optimal.
    pub x: Vec<f64>,
    /// Objective value; NaN unless optimal.
    pub objective: f64,
}

impl LpSolution {
    pub(crate) fn infeasible() -> Self {
        LpSolution {
            status: LpStatus::Infeasible,
            x: Vec::new(),
            objective: f64::NAN,
        }
    }

    pub(crate) fn unbounded() -> Self {
        LpSolution {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            objective: f64::NAN,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Split-variable pair that may not be simultaneously positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplementarityPair {
    pub plus: usize,
    pub minus: usize,
}

/// Largest violation found when checking a point against a problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Infeasibility {
    pub what: String,
    pub amount: f64,
}

/// Checks `x` against every row and bound of `problem`, recomputing each row
/// from the stored coefficients.
pub fn verify_point(problem: &LpProblem, x: &[f64], row_tol: f64, bound_tol: f64) -> Result<(), Infeasibility> {
    if x.len() != problem.num_vars() {
        return Err(Infeasibility {
            what: format!("point has {} entries for {} variables", x.len(), problem.num_vars()),
            amount: f64::INFINITY,
        });
    }
    for (j, &v) in x.iter().enumerate() {
        let below = problem.lower[j] - v;
        let above = v - problem.upper[j];
        if !v.is_finite() || below > bound_tol || above > bound_tol {
            return Err(Infeasibility {
                what: format!("bound of {}", problem.names[j]),
                amount: below.max(above),
            });
        }
    }
    for c in &problem.constraints {
        let lhs: f64 = c.terms.iter().map(|&(j, a)| a * x[j]).sum();
        let scale = 1.0 + c.rhs.abs();
        let gap = match c.relation {
            Relation::Le => lhs - c.rhs,
            Relation::Ge => c.rhs - lhs,
            Relation::Eq => (lhs - c.rhs).abs(),
        };
        if gap > row_tol * scale {
            return Err(Infeasibility {
                what: format!("row {}", c.name),
                amount: gap,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_variable() {
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0);
        lp.add_constraint("cap", vec![(x, 1.0)], Relation::Le, 3.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-12);
        assert!((sol.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_face() {
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", 0.0, 1.0, 1.0);
        let y = lp.add_var("y", 0.0, 1.0, 1.0);
        lp.add_constraint("sum", vec![(x, 1.0), (y, 1.0)], Relation::Le, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
        verify_point(&lp, &sol.x, FEAS_TOL, 1e-9).unwrap();
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", 0.0, 1.0, 1.0);
        lp.add_constraint("low", vec![(x, 1.0)], Relation::Ge, 2.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = LpProblem::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0);
        let y = lp.add_var("y", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        lp.add_constraint("link", vec![(x, 1.0), (y, -1.0)], Relation::Eq, 0.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_with_free_variables() {
        // max -|y| style: y free, x = y + 2, x <= 5, maximize x - y
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", f64::NEG_INFINITY, 5.0, 1.0);
        let y = lp.add_var("y", -1.0, f64::INFINITY, -2.0);
        lp.add_constraint("link", vec![(x, 1.0), (y, -1.0)], Relation::Eq, 2.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        // x = y + 2, obj = y + 2 - 2y = 2 - y, y >= -1 -> y = -1, x = 1, obj 3
        assert!((sol.objective - 3.0).abs() < 1e-9, "{}", sol.objective);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ge_rows_need_phase_one() {
        // max -x - y s.t. x + y >= 2, x - y = 0.5, x,y in [0, 10]
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", 0.0, 10.0, -1.0);
        let y = lp.add_var("y", 0.0, 10.0, -1.0);
        lp.add_constraint("cover", vec![(x, 1.0), (y, 1.0)], Relation::Ge, 2.0);
        lp.add_constraint("diff", vec![(x, 1.0), (y, -1.0)], Relation::Eq, 0.5);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.objective + 2.0).abs() < 1e-9);
        assert!((sol.x[0] - 1.25).abs() < 1e-9);
        assert!((sol.x[1] - 0.75).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_dimensions_and_bounds() {
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", 0.0, 1.0, 1.0);
        lp.add_constraint("bad", vec![(x + 1, 1.0)], Relation::Le, 1.0);
        assert!(matches!(solve_lp(&lp), Err(LpError::DimensionMismatch(_))));

        let mut lp = LpProblem::new();
        lp.add_var("x", 2.0, 1.0, 1.0);
        assert!(matches!(solve_lp(&lp), Err(LpError::InvalidBounds { .. })));
    }

    #[test]
    fn dump_is_readable() {
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", 0.0, 3.0, 1.0);
        lp.add_constraint("cap", vec![(x, 2.0)], Relation::Le, 4.0);
        let text = alloc::format!("{lp}");
        assert!(text.contains("maximize"));
        assert!(text.contains("cap: +2 x <= 4"));
        assert!(text.contains("0 <= x <= 3"));
    }
}
