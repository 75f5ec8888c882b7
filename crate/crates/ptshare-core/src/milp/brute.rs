//! Exhaustive oracle: enumerate every binary assignment and solve the LP
//! over the continuous variables. Used to cross-check branch-and-bound.

use std::sync::Arc;

use super::model::{Model, Solution, Status};
use super::simplex::{LpData, LpStatus, Simplex};
use crate::error::{Error, Result};

pub const MAX_BRUTE_BINARIES: usize = 20;

/// Enumerates assignments in Gray-code order so each LP differs from the
/// previous one in a single bound. Ties keep the first assignment found.
pub fn brute_force(model: &Model) -> Result<Solution> {
    let bins = model.binaries();
    if bins.len() > MAX_BRUTE_BINARIES {
        return Err(Error::Model(format!(
            "brute force supports at most {MAX_BRUTE_BINARIES} binaries, model has {}",
            bins.len()
        )));
    }
    let lo: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
    let hi: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
    let mut lp = Simplex::new(Arc::new(LpData::new(model, &lo, &hi)));
    let mut assign = vec![0.0; bins.len()];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut solves = 0usize;
    let mut unbounded = false;
    let total: u64 = 1 << bins.len();
    for k in 0..total {
        if k > 0 {
            let bit = k.trailing_zeros() as usize;
            assign[bit] = 1.0 - assign[bit];
        }
        let mut skip = false;
        for (i, &j) in bins.iter().enumerate() {
            let v = assign[i];
            if v < model.vars[j].lower || v > model.vars[j].upper {
                skip = true;
                break;
            }
            lp.set_bounds(j, v, v);
        }
        if skip {
            continue;
        }
        solves += 1;
        match lp.solve(100_000) {
            LpStatus::Optimal => {
                let z = lp.objective();
                let take = match &best {
                    Some((b, _)) => z < *b - 1e-9 * b.abs().max(1.0),
                    None => true,
                };
                if take {
                    let mut x = lp.values();
                    for (i, &j) in bins.iter().enumerate() {
                        x[j] = assign[i];
                    }
                    best = Some((z, x));
                }
            }
            LpStatus::Unbounded => unbounded = true,
            LpStatus::Infeasible => {}
            LpStatus::IterationLimit => {
                return Err(Error::Solver("LP iteration limit in brute force".into()))
            }
        }
    }
    let mut sol = match best {
        _ if unbounded => Solution::empty(Status::Unbounded),
        Some((z, x)) => Solution {
            status: Status::Optimal,
            objective: z,
            values: x,
            row_duals: Vec::new(),
            best_bound: z,
            gap: 0.0,
            nodes: solves,
            lp_iterations: 0,
            wall_seconds: 0.0,
        },
        None => Solution::empty(Status::Infeasible),
    };
    sol.lp_iterations = lp.iterations;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::Sense;

    #[test]
    fn refuses_too_many_binaries() {
        let mut m = Model::new("b");
        for k in 0..21 {
            m.binary(format!("z{k}"), 0).unwrap();
        }
        assert!(brute_force(&m).is_err());
    }

    #[test]
    fn mixed_problem() {
        // min x - 2z s.t. x ≥ 3z - 1, x ≥ 0
        let mut m = Model::new("b");
        let x = m.cont("x", 0.0, 10.0).unwrap();
        let z = m.binary("z", 0).unwrap();
        m.add_constraint("r", &[(x, 1.0), (z, -3.0)], Sense::Ge, -1.0).unwrap();
        m.set_objective(x, 1.0);
        m.set_objective(z, -2.0);
        let sol = brute_force(&m).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!(sol.objective.abs() < 1e-9);
    }
}
