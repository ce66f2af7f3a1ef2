//! Dense-tableau bounded-variable primal simplex.
//!
//! Columns are laid out as `[structural | slack | artificial]`. Every row gets a
//! slack (`<=`: `[0, inf)`, `>=`: `(-inf, 0]`, `=`: `[0, 0]`) and an artificial
//! with coefficient `+-1`. The artificial columns are kept for the whole solve:
//! their tableau entries are `B^-1` up to sign, which lets basic values be
//! recomputed from the original data to shed accumulated round-off.
//!
//! Pricing is Dantzig's rule; after a run of degenerate pivots the solver
//! switches to Bland's rule for the rest of the solve, which rules out cycling.

use alloc::vec;
use alloc::vec::Vec;

use super::{verify_point, LpError, LpProblem, LpSolution, Relation, FEAS_TOL, PIVOT_TOL};

const OPT_TOL: f64 = 1e-9;
const DEGENERATE_RUN_BEFORE_BLAND: usize = 50;
const REFRESH_EVERY: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

struct Tableau {
    m: usize,
    n: usize,
    cols: usize,
    /// `B^-1 [A | I | S]`, row-major `m x cols`.
    t: Vec<f64>,
    /// Original constraint matrix, row-major `m x n`.
    a: Vec<f64>,
    b: Vec<f64>,
    sign: Vec<f64>,
    basis: Vec<usize>,
    beta: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
    bland: bool,
    degenerate_run: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

/// Solves `problem` to optimality, infeasibility or unboundedness.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.validate()?;
    solve_with_bounds(problem, problem.lower(), problem.upper())
}

/// Same as [`solve_lp`] with the variable bounds replaced.
pub(crate) fn solve_with_bounds(
    problem: &LpProblem,
    lower: &[f64],
    upper: &[f64],
) -> Result<LpSolution, LpError> {
    let n = problem.num_vars();
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Ok(LpSolution::infeasible());
    }
    let mut tab = Tableau::new(problem, lower, upper);

    // Phase 1: maximize -sum(artificials).
    let art0 = n + tab.m;
    let mut phase1_cost = vec![0.0; tab.cols];
    for c in &mut phase1_cost[art0..] {
        *c = -1.0;
    }
    tab.set_cost(phase1_cost);
    match tab.run()? {
        Outcome::Optimal => {}
        Outcome::Unbounded => {
            return Err(LpError::Numerical("phase one reported unbounded".into()));
        }
    }
    tab.refresh_beta();
    let infeasibility: f64 = (0..tab.m)
        .filter(|&i| tab.basis[i] >= art0)
        .map(|i| tab.beta[i].max(0.0))
        .sum::<f64>()
        + (art0..tab.cols)
            .filter(|&j| tab.state[j] != State::Basic)
            .map(|j| tab.x[j])
            .sum::<f64>();
    let b_scale = 1.0 + tab.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if infeasibility > FEAS_TOL * b_scale {
        return Ok(LpSolution::infeasible());
    }

    // Phase 2: pin artificials at zero and optimize the real objective.
    for j in art0..tab.cols {
        tab.lo[j] = 0.0;
        tab.hi[j] = 0.0;
        if tab.state[j] != State::Basic {
            tab.x[j] = 0.0;
            tab.state[j] = State::AtLower;
        }
    }
    tab.refresh_beta();
    let mut cost = vec![0.0; tab.cols];
    cost[..n].copy_from_slice(problem.objective());
    tab.set_cost(cost);
    tab.bland = false;
    tab.degenerate_run = 0;
    match tab.run()? {
        Outcome::Optimal => {}
        Outcome::Unbounded => return Ok(LpSolution::unbounded()),
    }
    tab.refresh_beta();

    let mut x = tab.values();
    x.truncate(n);
    for (j, v) in x.iter_mut().enumerate() {
        // snap values that round-off pushed a hair outside their bounds
        *v = v.clamp(lower[j], upper[j]);
    }
    let mut bounded = problem.clone();
    for j in 0..n {
        bounded.set_bounds(j, lower[j], upper[j]);
    }
    if let Err(e) = verify_point(&bounded, &x, FEAS_TOL, 1e-9) {
        return Err(LpError::Numerical(alloc::format!(
            "optimal basis fails verification at {} by {:e}",
            e.what, e.amount
        )));
    }
    let objective = problem.evaluate(&x);
    Ok(LpSolution {
        status: super::LpStatus::Optimal,
        x,
        objective,
    })
}

impl Tableau {
    fn new(problem: &LpProblem, lower: &[f64], upper: &[f64]) -> Self {
        let n = problem.num_vars();
        let m = problem.num_constraints();
        let cols = n + 2 * m;

        let mut a = vec![0.0; m * n];
        let mut b = vec![0.0; m];
        for (i, c) in problem.constraints().iter().enumerate() {
            for &(j, v) in &c.terms {
                a[i * n + j] += v;
            }
            b[i] = c.rhs;
        }

        let mut lo = vec![0.0; cols];
        let mut hi = vec![0.0; cols];
        lo[..n].copy_from_slice(lower);
        hi[..n].copy_from_slice(upper);
        for (i, c) in problem.constraints().iter().enumerate() {
            let (l, h) = match c.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lo[n + i] = l;
            hi[n + i] = h;
        }

        let mut x = vec![0.0; cols];
        let mut state = vec![State::AtLower; cols];
        for i in 0..m {
            if lo[n + i] < 0.0 {
                state[n + i] = State::AtUpper;
            }
        }
        for j in 0..n {
            (x[j], state[j]) = if lo[j].is_finite() {
                (lo[j], State::AtLower)
            } else if hi[j].is_finite() {
                (hi[j], State::AtUpper)
            } else {
                (0.0, State::Free)
            };
        }

        // Residual after placing structurals at a bound and slacks at zero.
        let mut sign = vec![1.0; m];
        let mut basis = vec![0; m];
        let mut beta = vec![0.0; m];
        let mut t = vec![0.0; m * cols];
        for i in 0..m {
            let r = b[i] - (0..n).map(|j| a[i * n + j] * x[j]).sum::<f64>();
            let slack_ok = match problem.constraints()[i].relation {
                Relation::Le => r >= 0.0,
                Relation::Ge => r <= 0.0,
                Relation::Eq => false,
            };
            sign[i] = if r >= 0.0 { 1.0 } else { -1.0 };
            let art = n + m + i;
            if slack_ok {
                // the slack absorbs the residual; B has +1 on this row
                basis[i] = n + i;
                beta[i] = r;
                state[n + i] = State::Basic;
                // artificial never needed
                hi[art] = 0.0;
                sign[i] = 1.0;
            } else {
                basis[i] = art;
                beta[i] = r.abs();
                state[art] = State::Basic;
                hi[art] = f64::INFINITY;
            }
            // B^-1 is diagonal with entry 1/sign on the initial basis.
            let inv = sign[i];
            let row = &mut t[i * cols..(i + 1) * cols];
            for j in 0..n {
                row[j] = a[i * n + j] * inv;
            }
            row[n + i] = inv;
            row[art] = sign[i] * inv;
        }
        // The column of an artificial whose slack went basic still has +1 * 1 = 1.
        let iter_cap = 50 * (m + cols) + 1000;

        Tableau {
            m,
            n,
            cols,
            t,
            a,
            b,
            sign,
            basis,
            beta,
            x,
            state,
            lo,
            hi,
            cost: vec![0.0; cols],
            d: vec![0.0; cols],
            iterations: 0,
            max_iterations: iter_cap,
            bland: false,
            degenerate_run: 0,
        }
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        self.cost = cost;
        self.d = self.cost.clone();
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.cols..(i + 1) * self.cols];
                for (dj, &tij) in self.d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn values(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        for i in 0..self.m {
            v[self.basis[i]] = self.beta[i];
        }
        v
    }

    /// Original column `j` of `[A | I | S]` applied as `y -= col * scale`.
    fn subtract_column(&self, j: usize, scale: f64, y: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        if j < n {
            for (i, yi) in y.iter_mut().enumerate().take(m) {
                *yi -= self.a[i * n + j] * scale;
            }
        } else if j < n + m {
            y[j - n] -= scale;
        } else {
            let i = j - n - m;
            y[i] -= self.sign[i] * scale;
        }
    }

    /// Recomputes basic values as `B^-1 (b - N x_N)`.
    fn refresh_beta(&mut self) {
        let mut rhs = self.b.clone();
        for j in 0..self.cols {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                self.subtract_column(j, self.x[j], &mut rhs);
            }
        }
        let art0 = self.n + self.m;
        for i in 0..self.m {
            let row = &self.t[i * self.cols..(i + 1) * self.cols];
            // column of artificial k is B^-1 * sign_k * e_k
            self.beta[i] = (0..self.m)
                .map(|k| row[art0 + k] * self.sign[k] * rhs[k])
                .sum();
        }
    }

    fn choose_entering(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.cols {
            let st = self.state[j];
            if st == State::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let dj = self.d[j];
            let dir = if dj > OPT_TOL && matches!(st, State::AtLower | State::Free) {
                1.0
            } else if dj < -OPT_TOL && matches!(st, State::AtUpper | State::Free) {
                -1.0
            } else {
                continue;
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, s)| dj.abs() > s) {
                best = Some((j, dir, dj.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn run(&mut self) -> Result<Outcome, LpError> {
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            let Some((j, dir)) = self.choose_entering() else {
                return Ok(Outcome::Optimal);
            };

            // Ratio test. `None` leaving row means a bound flip of the entering variable.
            let mut theta = self.hi[j] - self.lo[j];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_pivot = 0.0f64;
            for i in 0..self.m {
                let tij = self.t[i * self.cols + j];
                if tij.abs() <= PIVOT_TOL {
                    continue;
                }
                let k = self.basis[i];
                let rate = -dir * tij;
                let (ratio, to_upper) = if rate < 0.0 {
                    if !self.lo[k].is_finite() {
                        continue;
                    }
                    ((self.beta[i] - self.lo[k]) / -rate, false)
                } else {
                    if !self.hi[k].is_finite() {
                        continue;
                    }
                    ((self.hi[k] - self.beta[i]) / rate, true)
                };
                let ratio = ratio.max(0.0);
                let better = match leave {
                    _ if ratio < theta - 1e-12 => true,
                    Some((r, _)) if ratio <= theta + 1e-12 => {
                        if self.bland {
                            k < self.basis[r]
                        } else {
                            tij.abs() > leave_pivot
                        }
                    }
                    None if ratio <= theta + 1e-12 && theta.is_finite() => {
                        // prefer a real pivot over a bound flip on ties
                        true
                    }
                    _ => false,
                };
                if better {
                    theta = ratio;
                    leave = Some((i, to_upper));
                    leave_pivot = tij.abs();
                }
            }
            if !theta.is_finite() {
                return Ok(Outcome::Unbounded);
            }

            if theta <= 1e-12 {
                self.degenerate_run += 1;
                if self.degenerate_run > DEGENERATE_RUN_BEFORE_BLAND {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }

            let step = dir * theta;
            for i in 0..self.m {
                let tij = self.t[i * self.cols + j];
                if tij != 0.0 {
                    self.beta[i] -= step * tij;
                }
            }
            let entering_value = self.x[j] + step;

            match leave {
                None => {
                    self.x[j] = entering_value;
                    self.state[j] = if dir > 0.0 { State::AtUpper } else { State::AtLower };
                    self.x[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
                }
                Some((r, to_upper)) => {
                    let k = self.basis[r];
                    if to_upper {
                        self.x[k] = self.hi[k];
                        self.state[k] = State::AtUpper;
                    } else {
                        self.x[k] = self.lo[k];
                        self.state[k] = State::AtLower;
                    }
                    self.pivot(r, j);
                    self.beta[r] = entering_value;
                    self.x[j] = 0.0;
                    self.state[j] = State::Basic;
                    self.basis[r] = j;
                    if self.iterations % REFRESH_EVERY == 0 {
                        self.refresh_beta();
                    }
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let piv = self.t[r * cols + j];
        {
            let row = &mut self.t[r * cols..(r + 1) * cols];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[j] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        for row in before.chunks_exact_mut(cols).chain(after.chunks_exact_mut(cols)) {
            let f = row[j];
            if f != 0.0 {
                for (v, &p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[j] = 0.0;
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for (v, &p) in self.d.iter_mut().zip(prow.iter()) {
                *v -= f * p;
            }
            self.d[j] = 0.0;
        }
    }
}
