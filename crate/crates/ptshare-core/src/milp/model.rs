use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    /// Branching class. Fractional binaries of the highest class present are
    /// branched on first.
    pub priority: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }

    pub fn row_bounds(&self) -> (f64, f64) {
        match self.sense {
            Sense::Le => (f64::NEG_INFINITY, self.rhs),
            Sense::Ge => (self.rhs, f64::INFINITY),
            Sense::Eq => (self.rhs, self.rhs),
        }
    }
}

/// Annotation for a fill-order piecewise-linear block: `flow = Σ segments`,
/// each segment in `[0, width]`, and `switches[j]` gates segment `j+1`.
/// Presolve uses it to fix switches implied by the flow bounds.
#[derive(Debug, Clone)]
pub struct FillGroup {
    pub flow: usize,
    pub segments: Vec<usize>,
    pub switches: Vec<usize>,
    pub width: f64,
}

/// Linear minimization model with continuous and binary variables.
#[derive(Debug, Clone, Default)]
pub struct Model {
    pub name: String,
    pub vars: Vec<Variable>,
    pub cons: Vec<Constraint>,
    pub objective: Vec<f64>,
    pub obj_offset: f64,
    pub fill_groups: Vec<FillGroup>,
    names: HashMap<String, usize>,
    con_names: HashMap<String, usize>,
}

impl Model {
    pub fn new(name: impl Into<String>) -> Self {
        Model {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_cons(&self) -> usize {
        self.cons.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> Result<usize> {
        let name = name.into();
        if self.names.contains_key(&name) {
            return Err(Error::Model(format!("duplicate variable name `{name}`")));
        }
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::Model(format!(
                "variable `{name}` has invalid bounds [{lower}, {upper}]"
            )));
        }
        let (lower, upper) = match kind {
            VarKind::Binary => {
                if lower < 0.0 || upper > 1.0 {
                    return Err(Error::Model(format!(
                        "binary `{name}` must have bounds within [0, 1]"
                    )));
                }
                (lower, upper)
            }
            VarKind::Continuous => (lower, upper),
        };
        let id = self.vars.len();
        self.names.insert(name.clone(), id);
        self.vars.push(Variable {
            name,
            kind,
            lower,
            upper,
            priority: 0,
        });
        self.objective.push(0.0);
        Ok(id)
    }

    pub fn cont(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Result<usize> {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    pub fn binary(&mut self, name: impl Into<String>, priority: u8) -> Result<usize> {
        let id = self.add_var(name, VarKind::Binary, 0.0, 1.0)?;
        self.vars[id].priority = priority;
        Ok(id)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: &[(usize, f64)],
        sense: Sense,
        rhs: f64,
    ) -> Result<usize> {
        let name = name.into();
        if self.con_names.contains_key(&name) {
            return Err(Error::Model(format!("duplicate constraint name `{name}`")));
        }
        if !rhs.is_finite() {
            return Err(Error::Model(format!("constraint `{name}` has non-finite rhs")));
        }
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        let mut sorted = coeffs.to_vec();
        sorted.sort_by_key(|&(j, _)| j);
        for (j, a) in sorted {
            if j >= self.vars.len() {
                return Err(Error::Model(format!(
                    "constraint `{name}` references undeclared variable {j}"
                )));
            }
            if !a.is_finite() {
                return Err(Error::Model(format!("constraint `{name}` has non-finite coefficient")));
            }
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        let id = self.cons.len();
        self.con_names.insert(name.clone(), id);
        self.cons.push(Constraint {
            name,
            coeffs: merged,
            sense,
            rhs,
        });
        Ok(id)
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn add_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] += coeff;
    }

    pub fn var_id(&self, name: &str) -> Option<usize> {
        self.names.get(name).copied()
    }

    pub fn con_id(&self, name: &str) -> Option<usize> {
        self.con_names.get(name).copied()
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.vars[var].lower = lower;
        self.vars[var].upper = upper;
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.obj_offset
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Largest bound or row violation of `x`, and the largest distance of a
    /// binary from the nearest integer.
    pub fn max_violation(&self, x: &[f64]) -> (f64, f64) {
        let mut feas = 0.0f64;
        for (v, &xv) in self.vars.iter().zip(x) {
            feas = feas.max(v.lower - xv).max(xv - v.upper);
        }
        for c in &self.cons {
            feas = feas.max(c.violation(x));
        }
        let int = self
            .vars
            .iter()
            .zip(x)
            .filter(|(v, _)| v.kind == VarKind::Binary)
            .map(|(_, &xv)| (xv - xv.round()).abs())
            .fold(0.0, f64::max);
        (feas, int)
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.vars.len())
            .filter(|&j| self.vars[j].kind == VarKind::Binary)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    GapLimit,
    IterationLimit,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::GapLimit => "gap-limit",
            Status::IterationLimit => "iteration-limit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub values: Vec<f64>,
    pub objective: f64,
    /// Row multipliers (LP solves only; empty for MILP results).
    pub row_duals: Vec<f64>,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub wall_seconds: f64,
}

impl Solution {
    pub fn empty(status: Status) -> Self {
        Solution {
            status,
            values: Vec::new(),
            objective: f64::NAN,
            row_duals: Vec::new(),
            best_bound: f64::NAN,
            gap: f64::INFINITY,
            nodes: 0,
            lp_iterations: 0,
            wall_seconds: 0.0,
        }
    }

    pub fn has_point(&self) -> bool {
        !self.values.is_empty()
    }
}
