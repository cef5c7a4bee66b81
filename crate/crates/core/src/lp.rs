//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Small and deterministic: intended for the desk-scale programs that arise
//! in super/sub-hedging, martingale-measure bounds and optimality
//! certificates, not for large sparse models.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

/// A linear program over variables that are nonnegative unless marked free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    free: Vec<bool>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            free: vec![false; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_objective(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.num_vars());
        self.objective = c;
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars());
        self.rows.push((coeffs, relation, rhs));
    }

    pub fn minimize(&self) -> Result<LpOutcome> {
        self.solve(false)
    }

    pub fn maximize(&self) -> Result<LpOutcome> {
        self.solve(true)
    }

    fn solve(&self, maximize: bool) -> Result<LpOutcome> {
        let n = self.num_vars();
        let m = self.rows.len();

        // Column layout: structural (free vars split in two), slacks, artificials.
        let mut col_of = Vec::with_capacity(n);
        let mut num_struct = 0;
        for &free in &self.free {
            col_of.push(num_struct);
            num_struct += if free { 2 } else { 1 };
        }
        let num_slack = self
            .rows
            .iter()
            .filter(|(_, r, _)| *r != Relation::Eq)
            .count();
        let art_start = num_struct + num_slack;
        let width = art_start + m + 1;
        let rhs_col = width - 1;
        let mut t = vec![0.0; (m + 1) * width];
        let mut basis = vec![usize::MAX; m];
        let mut slack = num_struct;

        for (i, (coeffs, relation, rhs)) in self.rows.iter().enumerate() {
            let row = &mut t[i * width..(i + 1) * width];
            for (j, &a) in coeffs.iter().enumerate() {
                row[col_of[j]] = a;
                if self.free[j] {
                    row[col_of[j] + 1] = -a;
                }
            }
            let mut slack_col = None;
            match relation {
                Relation::Le => {
                    row[slack] = 1.0;
                    slack_col = Some(slack);
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack_col = Some(slack);
                    slack += 1;
                }
                Relation::Eq => {}
            }
            row[rhs_col] = *rhs;
            if *rhs < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            match slack_col {
                Some(s) if row[s] == 1.0 => basis[i] = s,
                _ => {
                    row[art_start + i] = 1.0;
                    basis[i] = art_start + i;
                }
            }
        }

        let mut tableau = Tableau {
            t,
            width,
            rows: m,
            basis,
        };

        // Phase 1: drive artificials to zero.
        let uses_artificials = tableau.basis.iter().any(|&b| b >= art_start);
        if uses_artificials {
            let mut cost = vec![0.0; width];
            for (i, &b) in tableau.basis.iter().enumerate() {
                if b >= art_start {
                    for j in 0..width {
                        if j < art_start || j == rhs_col {
                            cost[j] -= tableau.get(i, j);
                        }
                    }
                }
            }
            tableau.set_cost_row(&cost);
            if tableau.run(width - 1)? == Step::Unbounded {
                return Err(Error::Numerical("phase one reported unbounded".into()));
            }
            let infeasibility = -tableau.get(m, rhs_col);
            let scale = 1.0
                + self
                    .rows
                    .iter()
                    .map(|(_, _, b)| b.abs())
                    .fold(0.0, f64::max);
            if infeasibility > 1e-9 * scale {
                return Ok(LpOutcome::Infeasible);
            }
            // Pivot remaining artificials out of the basis or drop their rows.
            let mut i = 0;
            while i < tableau.rows {
                if tableau.basis[i] >= art_start {
                    let entering = (0..art_start).find(|&j| tableau.get(i, j).abs() > PIVOT_TOL);
                    match entering {
                        Some(j) => {
                            tableau.pivot(i, j);
                            i += 1;
                        }
                        None => tableau.remove_row(i),
                    }
                } else {
                    i += 1;
                }
            }
        }

        // Phase 2 on the true objective.
        let sign = if maximize { -1.0 } else { 1.0 };
        let mut cost = vec![0.0; width];
        for (j, &c) in self.objective.iter().enumerate() {
            cost[col_of[j]] = sign * c;
            if self.free[j] {
                cost[col_of[j] + 1] = -sign * c;
            }
        }
        for (i, &b) in tableau.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (j, c) in cost.iter_mut().enumerate() {
                    if j < art_start || j == rhs_col {
                        *c -= cb * tableau.get(i, j);
                    }
                }
            }
        }
        for c in cost[art_start..rhs_col].iter_mut() {
            *c = 0.0;
        }
        tableau.set_cost_row(&cost);
        if tableau.run(art_start)? == Step::Unbounded {
            return Ok(LpOutcome::Unbounded);
        }

        let mut columns = vec![0.0; art_start];
        for (i, &b) in tableau.basis.iter().enumerate() {
            if b < art_start {
                columns[b] = tableau.get(i, rhs_col);
            }
        }
        let x: Vec<f64> = (0..n)
            .map(|j| {
                if self.free[j] {
                    columns[col_of[j]] - columns[col_of[j] + 1]
                } else {
                    columns[col_of[j]]
                }
            })
            .collect();
        let value = self.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
        Ok(LpOutcome::Optimal(LpSolution { x, value }))
    }
}

#[derive(Debug, PartialEq)]
enum Step {
    Optimal,
    Unbounded,
}

struct Tableau {
    t: Vec<f64>,
    width: usize,
    rows: usize,
    basis: Vec<usize>,
}

impl Tableau {
    fn get(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn cost_row(&self) -> usize {
        self.rows
    }

    fn set_cost_row(&mut self, cost: &[f64]) {
        let r = self.cost_row();
        self.t[r * self.width..(r + 1) * self.width].copy_from_slice(cost);
    }

    fn remove_row(&mut self, i: usize) {
        let w = self.width;
        self.t.drain(i * w..(i + 1) * w);
        self.basis.remove(i);
        self.rows -= 1;
    }

    /// Bland's rule over columns `0..limit`.
    fn run(&mut self, limit: usize) -> Result<Step> {
        let rhs = self.width - 1;
        let cost = self.cost_row();
        for _ in 0..MAX_PIVOTS {
            let entering = (0..limit).find(|&j| self.get(cost, j) < -PIVOT_TOL);
            let Some(j) = entering else {
                return Ok(Step::Optimal);
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.get(i, j);
                if a > PIVOT_TOL {
                    let ratio = self.get(i, rhs) / a;
                    leaving = match leaving {
                        None => Some((i, ratio)),
                        Some((l, best)) => {
                            if ratio < best - 1e-12 * best.abs().max(1.0)
                                || (ratio <= best + 1e-12 * best.abs().max(1.0)
                                    && self.basis[i] < self.basis[l])
                            {
                                Some((i, ratio))
                            } else {
                                Some((l, best))
                            }
                        }
                    };
                }
            }
            match leaving {
                None => return Ok(Step::Unbounded),
                Some((i, _)) => self.pivot(i, j),
            }
        }
        Err(Error::Numerical("simplex pivot limit reached".into()))
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.get(r, c);
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 → (2, 6), 36.
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![3.0, 5.0]);
        lp.add_constraint(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.add_constraint(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.add_constraint(vec![3.0, 2.0], Relation::Le, 18.0);
        let sol = lp.maximize().unwrap().optimal().unwrap();
        assert!((sol.value - 36.0).abs() < 1e-9);
        assert!((sol.x[0] - 2.0).abs() < 1e-9 && (sol.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_free_variables() {
        // min x s.t. x + y >= 1, x - y = -3, y free → x = -1, y = 2.
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![1.0, 0.0]);
        lp.set_free(0);
        lp.set_free(1);
        lp.add_constraint(vec![1.0, 1.0], Relation::Ge, 1.0);
        lp.add_constraint(vec![1.0, -1.0], Relation::Eq, -3.0);
        let sol = lp.minimize().unwrap().optimal().unwrap();
        assert!((sol.x[0] + 1.0).abs() < 1e-9);
        assert!((sol.x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_constraint(vec![1.0], Relation::Ge, 2.0);
        lp.add_constraint(vec![1.0], Relation::Le, 1.0);
        assert_eq!(lp.minimize().unwrap(), LpOutcome::Infeasible);

        let mut lp = LinearProgram::new(1);
        lp.set_objective(vec![-1.0]);
        lp.add_constraint(vec![1.0], Relation::Ge, 0.0);
        assert_eq!(lp.minimize().unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![1.0, 2.0]);
        lp.add_constraint(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.add_constraint(vec![2.0, 2.0], Relation::Eq, 2.0);
        let sol = lp.minimize().unwrap().optimal().unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example cycles under the largest-coefficient rule.
        let mut lp = LinearProgram::new(4);
        lp.set_objective(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add_constraint(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0);
        lp.add_constraint(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0);
        lp.add_constraint(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let sol = lp.minimize().unwrap().optimal().unwrap();
        assert!((sol.value + 0.05).abs() < 1e-9);
    }
}
