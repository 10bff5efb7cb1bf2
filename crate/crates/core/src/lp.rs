//! Exact rational linear programming.
//!
//! Two-phase dense-tableau simplex with Bland's least-index rule for both
//! the entering and the leaving variable, so degenerate problems cannot
//! cycle. Free variables are split into a difference of two non-negative
//! columns.

use num_traits::{Signed, Zero};

use crate::rational::{one, zero, Rational};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    MalformedLP(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Free,
    NonNegative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub domain: Domain,
}

/// Sparse linear combination `sum coef * var`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinearExpr {
    pub terms: Vec<(usize, Rational)>,
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(mut self, var: usize, coef: Rational) -> Self {
        self.add(var, coef);
        self
    }

    pub fn add(&mut self, var: usize, coef: Rational) {
        if !coef.is_zero() {
            self.terms.push((var, coef));
        }
    }

    pub fn eval(&self, assignment: &[Rational]) -> Rational {
        self.terms.iter().map(|(v, c)| c * &assignment[*v]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub expr: LinearExpr,
    pub relation: Relation,
    pub rhs: Rational,
}

impl Constraint {
    pub fn holds(&self, assignment: &[Rational]) -> bool {
        let lhs = self.expr.eval(assignment);
        match self.relation {
            Relation::Le => lhs <= self.rhs,
            Relation::Eq => lhs == self.rhs,
            Relation::Ge => lhs >= self.rhs,
        }
    }
}

/// `maximize objective + offset` subject to the constraints and variable
/// domains.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinearProgram {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: LinearExpr,
    pub objective_offset: Rational,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, name: impl Into<String>, domain: Domain) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            domain,
        });
        self.variables.len() - 1
    }

    pub fn add_constraint(&mut self, expr: LinearExpr, relation: Relation, rhs: Rational) {
        self.constraints.push(Constraint {
            expr,
            relation,
            rhs,
        });
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn objective_value(&self, assignment: &[Rational]) -> Rational {
        self.objective.eval(assignment) + &self.objective_offset
    }

    /// Exact check of every constraint and domain.
    pub fn is_feasible(&self, assignment: &[Rational]) -> bool {
        assignment.len() == self.variables.len()
            && self
                .variables
                .iter()
                .zip(assignment)
                .all(|(v, x)| v.domain == Domain::Free || !x.is_negative())
            && self.constraints.iter().all(|c| c.holds(assignment))
    }

    /// A ray keeps feasibility iff it respects domains and moves every
    /// constraint's left side in the allowed direction.
    pub fn is_recession_direction(&self, ray: &[Rational]) -> bool {
        ray.len() == self.variables.len()
            && self
                .variables
                .iter()
                .zip(ray)
                .all(|(v, d)| v.domain == Domain::Free || !d.is_negative())
            && self.constraints.iter().all(|c| {
                let change = c.expr.eval(ray);
                match c.relation {
                    Relation::Le => !change.is_positive(),
                    Relation::Eq => change.is_zero(),
                    Relation::Ge => !change.is_negative(),
                }
            })
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.variables.len();
        let exprs = self
            .constraints
            .iter()
            .map(|c| &c.expr)
            .chain([&self.objective]);
        for (i, expr) in exprs.enumerate() {
            if let Some((v, _)) = expr.terms.iter().find(|(v, _)| *v >= n) {
                return Err(LpError::MalformedLP(format!(
                    "expression {i} references variable {v}, only {n} declared"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpResult {
    Infeasible,
    Optimal {
        value: Rational,
        assignment: Vec<Rational>,
    },
    /// `point` is feasible and `point + s * ray` stays feasible for all
    /// `s >= 0` while the objective grows without bound.
    Unbounded {
        point: Vec<Rational>,
        ray: Vec<Rational>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Structural,
    Slack,
    Artificial,
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
    kinds: Vec<ColumnKind>,
}

enum Outcome {
    Optimal,
    Unbounded(usize),
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col].clone();
        if p != one() {
            for v in self.rows[row].iter_mut() {
                if !v.is_zero() {
                    *v /= &p;
                }
            }
            self.rhs[row] /= &p;
        }
        let pivot_row = std::mem::take(&mut self.rows[row]);
        let pivot_rhs = self.rhs[row].clone();
        let nonzero: Vec<usize> = (0..pivot_row.len())
            .filter(|&j| !pivot_row[j].is_zero())
            .collect();
        for i in 0..self.rows.len() {
            if i == row || self.rows[i].is_empty() {
                continue;
            }
            let f = self.rows[i][col].clone();
            if f.is_zero() {
                continue;
            }
            for &j in &nonzero {
                let delta = &f * &pivot_row[j];
                self.rows[i][j] -= delta;
            }
            self.rhs[i] -= &f * &pivot_rhs;
        }
        self.rows[row] = pivot_row;
        self.basis[row] = col;
    }

    /// Maximizes `cost . columns` over the current basis with Bland's rule.
    fn optimize(&mut self, cost: &[Rational], allowed: impl Fn(usize) -> bool) -> Outcome {
        loop {
            let entering = (0..cost.len()).find(|&j| {
                allowed(j) && !self.basis.contains(&j) && self.reduced_cost(cost, j).is_positive()
            });
            let Some(col) = entering else {
                return Outcome::Optimal;
            };
            let mut leave: Option<(usize, Rational)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][col];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.rhs[i] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((best, best_ratio)) => {
                        if ratio < best_ratio
                            || (ratio == best_ratio && self.basis[i] < self.basis[best])
                        {
                            Some((i, ratio))
                        } else {
                            Some((best, best_ratio))
                        }
                    }
                };
            }
            match leave {
                None => return Outcome::Unbounded(col),
                Some((row, _)) => self.pivot(row, col),
            }
        }
    }

    fn reduced_cost(&self, cost: &[Rational], col: usize) -> Rational {
        let mut r = cost[col].clone();
        for (i, &b) in self.basis.iter().enumerate() {
            let a = &self.rows[i][col];
            if !a.is_zero() && !cost[b].is_zero() {
                r -= &cost[b] * a;
            }
        }
        r
    }

    fn solution(&self) -> Vec<Rational> {
        let mut x = vec![zero(); self.kinds.len()];
        for (i, &b) in self.basis.iter().enumerate() {
            x[b] = self.rhs[i].clone();
        }
        x
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpResult, LpError> {
    lp.validate()?;

    // Structural columns: one per non-negative variable, two per free one.
    let mut column_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(lp.variables.len());
    let mut ncols = 0;
    for v in &lp.variables {
        match v.domain {
            Domain::NonNegative => {
                column_of.push((ncols, None));
                ncols += 1;
            }
            Domain::Free => {
                column_of.push((ncols, Some(ncols + 1)));
                ncols += 2;
            }
        }
    }
    let structural = ncols;

    let m = lp.constraints.len();
    let mut dense: Vec<(Vec<Rational>, Relation, Rational)> = Vec::with_capacity(m);
    for c in &lp.constraints {
        let mut row = vec![zero(); structural];
        for (v, coef) in &c.expr.terms {
            let (pos, neg) = column_of[*v];
            row[pos] += coef;
            if let Some(neg) = neg {
                row[neg] -= coef;
            }
        }
        let (mut rel, mut rhs) = (c.relation, c.rhs.clone());
        if rhs.is_negative() {
            for v in row.iter_mut() {
                *v = -&*v;
            }
            rhs = -rhs;
            rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        dense.push((row, rel, rhs));
    }

    let slack_count = dense.iter().filter(|(_, r, _)| *r != Relation::Eq).count();
    let art_count = dense.iter().filter(|(_, r, _)| *r != Relation::Le).count();
    let total = structural + slack_count + art_count;
    let mut kinds = vec![ColumnKind::Structural; structural];
    kinds.extend(std::iter::repeat_n(ColumnKind::Slack, slack_count));
    kinds.extend(std::iter::repeat_n(ColumnKind::Artificial, art_count));

    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut next_slack, mut next_art) = (structural, structural + slack_count);
    for (coefs, rel, b) in dense {
        let mut row = coefs;
        row.resize(total, zero());
        match rel {
            Relation::Le => {
                row[next_slack] = one();
                basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Ge => {
                row[next_slack] = -one();
                next_slack += 1;
                row[next_art] = one();
                basis.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                row[next_art] = one();
                basis.push(next_art);
                next_art += 1;
            }
        }
        rows.push(row);
        rhs.push(b);
    }
    let mut tab = Tableau {
        rows,
        rhs,
        basis,
        kinds,
    };

    if art_count > 0 {
        let phase1: Vec<Rational> = tab
            .kinds
            .iter()
            .map(|k| {
                if *k == ColumnKind::Artificial {
                    -one()
                } else {
                    zero()
                }
            })
            .collect();
        // Phase 1 is bounded above by zero.
        let _ = tab.optimize(&phase1, |_| true);
        let infeasibility: Rational = tab
            .basis
            .iter()
            .zip(&tab.rhs)
            .filter(|(b, _)| tab.kinds[**b] == ColumnKind::Artificial)
            .map(|(_, v)| v.clone())
            .sum();
        if infeasibility.is_positive() {
            return Ok(LpResult::Infeasible);
        }
        // Drive zero-valued artificials out of the basis, dropping rows
        // that are linear combinations of the others.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.kinds[tab.basis[i]] != ColumnKind::Artificial {
                i += 1;
                continue;
            }
            let replacement = (0..total)
                .find(|&j| tab.kinds[j] != ColumnKind::Artificial && !tab.rows[i][j].is_zero());
            match replacement {
                Some(j) => {
                    tab.pivot(i, j);
                    i += 1;
                }
                None => {
                    tab.rows.remove(i);
                    tab.rhs.remove(i);
                    tab.basis.remove(i);
                }
            }
        }
    }

    let mut cost = vec![zero(); total];
    for (v, coef) in &lp.objective.terms {
        let (pos, neg) = column_of[*v];
        cost[pos] += coef;
        if let Some(neg) = neg {
            cost[neg] -= coef;
        }
    }
    let kinds = tab.kinds.clone();
    let outcome = tab.optimize(&cost, |j| kinds[j] != ColumnKind::Artificial);

    let to_vars = |cols: &[Rational]| -> Vec<Rational> {
        column_of
            .iter()
            .map(|&(pos, neg)| match neg {
                Some(neg) => &cols[pos] - &cols[neg],
                None => cols[pos].clone(),
            })
            .collect()
    };
    let point = to_vars(&tab.solution());
    match outcome {
        Outcome::Optimal => Ok(LpResult::Optimal {
            value: lp.objective_value(&point),
            assignment: point,
        }),
        Outcome::Unbounded(col) => {
            let mut dir = vec![zero(); total];
            dir[col] = one();
            for (i, &b) in tab.basis.iter().enumerate() {
                dir[b] = -&tab.rows[i][col];
            }
            Ok(LpResult::Unbounded {
                point,
                ray: to_vars(&dir),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn single(rels: &[(Relation, i64)]) -> LinearProgram {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", Domain::Free);
        for &(rel, b) in rels {
            lp.add_constraint(LinearExpr::new().term(x, int(1)), rel, int(b));
        }
        lp.objective = LinearExpr::new().term(x, int(1));
        lp
    }

    #[test]
    fn spec_examples() {
        let lp = single(&[(Relation::Le, 3), (Relation::Ge, 0)]);
        assert_eq!(
            solve_lp(&lp).unwrap(),
            LpResult::Optimal {
                value: int(3),
                assignment: vec![int(3)]
            }
        );
        assert_eq!(
            solve_lp(&single(&[(Relation::Ge, 1), (Relation::Le, 0)])).unwrap(),
            LpResult::Infeasible
        );
        let lp = single(&[(Relation::Ge, 0)]);
        let LpResult::Unbounded { point, ray } = solve_lp(&lp).unwrap() else {
            panic!("expected unbounded");
        };
        assert!(lp.is_feasible(&point));
        assert!(lp.is_recession_direction(&ray));
        assert!(lp.objective.eval(&ray).is_positive());
    }

    #[test]
    fn malformed_reference() {
        let mut lp = LinearProgram::new();
        lp.add_variable("x", Domain::Free);
        lp.add_constraint(LinearExpr::new().term(3, int(1)), Relation::Le, int(0));
        assert!(matches!(solve_lp(&lp), Err(LpError::MalformedLP(_))));
    }

    #[test]
    fn equality_and_offset() {
        // max x + y + 5 s.t. x + y = 2, x - y = 1/2
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", Domain::Free);
        let y = lp.add_variable("y", Domain::Free);
        lp.add_constraint(
            LinearExpr::new().term(x, int(1)).term(y, int(1)),
            Relation::Eq,
            int(2),
        );
        lp.add_constraint(
            LinearExpr::new().term(x, int(1)).term(y, int(-1)),
            Relation::Eq,
            rat(1, 2),
        );
        lp.objective = LinearExpr::new().term(x, int(1)).term(y, int(1));
        lp.objective_offset = int(5);
        assert_eq!(
            solve_lp(&lp).unwrap(),
            LpResult::Optimal {
                value: int(7),
                assignment: vec![rat(5, 4), rat(3, 4)]
            }
        );
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", Domain::NonNegative);
        let y = lp.add_variable("y", Domain::NonNegative);
        let sum = LinearExpr::new().term(x, int(1)).term(y, int(1));
        lp.add_constraint(sum.clone(), Relation::Eq, int(1));
        lp.add_constraint(
            LinearExpr::new().term(x, int(2)).term(y, int(2)),
            Relation::Eq,
            int(2),
        );
        lp.objective = LinearExpr::new().term(x, int(-1)).term(y, int(2));
        let LpResult::Optimal { value, assignment } = solve_lp(&lp).unwrap() else {
            panic!()
        };
        assert_eq!(value, int(2));
        assert!(lp.is_feasible(&assignment));
    }
}
