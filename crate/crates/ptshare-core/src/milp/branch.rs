//! LP-based branch-and-bound.
//!
//! Children are solved as soon as they are created (warm-started from the
//! parent basis with the dual simplex). The search dives until the first
//! incumbent and then proceeds best-first on `(bound, creation order)`.
//! Branching picks, among fractional binaries of the highest priority class,
//! the most fractional one, with ties going to the lowest index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::Instant;

use super::model::{Model, Solution, Status, VarKind};
use super::presolve::presolve;
use super::simplex::{Basis, LpData, LpStatus, Simplex};

pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct BbOptions {
    /// Relative optimality gap, measured against `max(1, |incumbent|)`.
    pub gap: f64,
    pub node_limit: usize,
    /// Simplex iterations allowed per LP solve.
    pub lp_iteration_limit: usize,
    pub presolve: bool,
}

impl Default for BbOptions {
    fn default() -> Self {
        BbOptions {
            gap: 1e-6,
            node_limit: 200_000,
            lp_iteration_limit: 200_000,
            presolve: true,
        }
    }
}

/// Completion heuristic: given a node LP point whose top-priority binaries
/// are integral, propose values for every binary (indexed like the model's
/// variables; entries of continuous variables are ignored).
pub type Completion<'a> = dyn FnMut(&[f64]) -> Option<Vec<f64>> + 'a;

struct Node {
    bound: f64,
    id: usize,
    fixings: Vec<(usize, f64)>,
    basis: Basis,
    values: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap; reverse so the smallest bound pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'m> {
    model: &'m Model,
    opts: BbOptions,
    root: Simplex,
    lp: Simplex,
    binaries: Vec<usize>,
    top_priority: u8,
    incumbent: Option<(f64, Vec<f64>)>,
    nodes: usize,
    lp_iterations: usize,
    next_id: usize,
    hit_iteration_limit: bool,
}

enum LpOutcome {
    Solved(f64, Vec<f64>, Basis),
    Infeasible,
    Unbounded,
    Limit,
}

impl<'m> Search<'m> {
    fn tol(&self) -> f64 {
        match &self.incumbent {
            Some((z, _)) => self.opts.gap * z.abs().max(1.0),
            None => 0.0,
        }
    }

    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((z, _)) => z - self.tol(),
            None => f64::INFINITY,
        }
    }

    fn solve_with(&mut self, fixings: &[(usize, f64)], basis: Option<&Basis>) -> LpOutcome {
        self.lp.clone_from(&self.root);
        if let Some(b) = basis {
            self.lp.load_basis(b);
        }
        for &(j, v) in fixings {
            self.lp.set_bounds(j, v, v);
        }
        let before = self.lp.iterations;
        let st = self.lp.solve(self.opts.lp_iteration_limit);
        self.lp_iterations += self.lp.iterations - before;
        match st {
            LpStatus::Optimal => LpOutcome::Solved(self.lp.objective(), self.lp.values(), self.lp.basis()),
            LpStatus::Infeasible => LpOutcome::Infeasible,
            LpStatus::Unbounded => LpOutcome::Unbounded,
            LpStatus::IterationLimit => {
                self.hit_iteration_limit = true;
                LpOutcome::Limit
            }
        }
    }

    /// Solves the LP with every binary fixed to the rounded value in `assign`.
    fn try_assignment(&mut self, assign: &[f64], basis: Option<&Basis>) -> Option<(f64, Vec<f64>)> {
        let fix: Vec<(usize, f64)> = self
            .binaries
            .iter()
            .map(|&j| (j, assign[j].round().clamp(0.0, 1.0)))
            .collect();
        // respect root bounds: a fixing outside them is infeasible
        for &(j, v) in &fix {
            let (l, h) = self.root.bounds(j);
            if v < l - INT_TOL || v > h + INT_TOL {
                return None;
            }
        }
        match self.solve_with(&fix, basis) {
            LpOutcome::Solved(z, mut x, _) => {
                for &(j, v) in &fix {
                    x[j] = v;
                }
                Some((z, x))
            }
            _ => None,
        }
    }

    fn offer(&mut self, z: f64, x: Vec<f64>) {
        let better = match &self.incumbent {
            Some((best, _)) => z < *best - 1e-12 * best.abs().max(1.0),
            None => true,
        };
        if better {
            self.incumbent = Some((z, x));
        }
    }

    fn branch_var(&self, x: &[f64]) -> Option<(usize, bool)> {
        let mut best: Option<(u8, f64, usize)> = None;
        for &j in &self.binaries {
            let f = x[j] - x[j].floor();
            if f <= INT_TOL || f >= 1.0 - INT_TOL {
                continue;
            }
            let p = self.model.vars[j].priority;
            let score = (f - 0.5).abs();
            let take = match best {
                None => true,
                Some((bp, bs, _)) => p > bp || (p == bp && score < bs - 1e-12),
            };
            if take {
                best = Some((p, score, j));
            }
        }
        best.map(|(p, _, j)| (j, p == self.top_priority))
    }

    fn top_class_integral(&self, x: &[f64]) -> bool {
        self.binaries
            .iter()
            .filter(|&&j| self.model.vars[j].priority == self.top_priority)
            .all(|&j| (x[j] - x[j].round()).abs() <= INT_TOL)
    }
}

/// Solves `model` to the requested gap.
pub fn solve_milp(
    model: &Model,
    opts: &BbOptions,
    starts: &[Vec<f64>],
    mut completion: Option<&mut Completion<'_>>,
) -> Solution {
    let clock = Instant::now();
    let finish = |mut s: Solution| {
        s.wall_seconds = clock.elapsed().as_secs_f64();
        s
    };
    let (lo, hi) = if opts.presolve {
        match presolve(model, 10) {
            Some(p) => (p.lower, p.upper),
            None => return finish(Solution::empty(Status::Infeasible)),
        }
    } else {
        (
            model.vars.iter().map(|v| v.lower).collect(),
            model.vars.iter().map(|v| v.upper).collect(),
        )
    };
    let data = Arc::new(LpData::new(model, &lo, &hi));
    let root = Simplex::new(data);
    let binaries: Vec<usize> = model
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| j)
        .collect();
    let top_priority = binaries
        .iter()
        .map(|&j| model.vars[j].priority)
        .max()
        .unwrap_or(0);
    let mut s = Search {
        model,
        opts: opts.clone(),
        lp: root.clone(),
        root,
        binaries,
        top_priority,
        incumbent: None,
        nodes: 0,
        lp_iterations: 0,
        next_id: 0,
        hit_iteration_limit: false,
    };

    let (root_z, root_x, root_basis) = match s.solve_with(&[], None) {
        LpOutcome::Solved(z, x, b) => (z, x, b),
        LpOutcome::Infeasible => {
            let mut sol = Solution::empty(Status::Infeasible);
            sol.lp_iterations = s.lp_iterations;
            return finish(sol);
        }
        LpOutcome::Unbounded => return finish(Solution::empty(Status::Unbounded)),
        LpOutcome::Limit => return finish(Solution::empty(Status::IterationLimit)),
    };
    // the root LP basis is the warm start for every later solve
    s.root.load_basis(&root_basis);
    s.nodes = 1;

    for start in starts {
        if start.len() != model.num_vars() {
            continue;
        }
        if let Some((z, x)) = s.try_assignment(start, Some(&root_basis)) {
            s.offer(z, x);
        }
    }

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut pending = Some(Node {
        bound: root_z,
        id: 0,
        fixings: Vec::new(),
        basis: root_basis,
        values: root_x,
    });
    s.next_id = 1;
    let mut limited = false;

    loop {
        let node = match pending.take() {
            Some(n) => n,
            None => match heap.pop() {
                Some(n) => n,
                None => break,
            },
        };
        if node.bound >= s.cutoff() {
            continue;
        }
        if s.nodes >= opts.node_limit || s.hit_iteration_limit {
            heap.push(node);
            limited = true;
            break;
        }
        let choice = s.branch_var(&node.values);
        let (var, top) = match choice {
            None => {
                // integral LP point: snap binaries and polish the continuous part
                let polished = s.try_assignment(&node.values, Some(&node.basis));
                match polished {
                    Some((z, x)) => s.offer(z, x),
                    None => {
                        let mut x = node.values.clone();
                        for &j in &s.binaries {
                            x[j] = x[j].round();
                        }
                        s.offer(node.bound, x);
                    }
                }
                continue;
            }
            Some(c) => c,
        };
        if !top && s.top_class_integral(&node.values) {
            if let Some(cb) = completion.as_deref_mut() {
                if let Some(assign) = cb(&node.values) {
                    if let Some((z, x)) = s.try_assignment(&assign, Some(&node.basis)) {
                        s.offer(z, x);
                        if z <= node.bound + opts.gap * z.abs().max(1.0) {
                            continue;
                        }
                    }
                }
            }
        }

        let mut children = Vec::with_capacity(2);
        for v in [0.0, 1.0] {
            let mut fixings = node.fixings.clone();
            fixings.push((var, v));
            s.nodes += 1;
            match s.solve_with(&fixings, Some(&node.basis)) {
                LpOutcome::Solved(z, x, b) => {
                    if z < s.cutoff() {
                        let id = s.next_id;
                        s.next_id += 1;
                        children.push(Node {
                            bound: z.max(node.bound),
                            id,
                            fixings,
                            basis: b,
                            values: x,
                        });
                    }
                }
                LpOutcome::Infeasible => {}
                LpOutcome::Unbounded => return finish(Solution::empty(Status::Unbounded)),
                LpOutcome::Limit => {}
            }
        }
        if s.incumbent.is_none() {
            // dive into the better child, ties to the down branch
            children.sort_by(|a, b| a.bound.total_cmp(&b.bound).then(a.id.cmp(&b.id)));
            let mut it = children.into_iter();
            pending = it.next();
            heap.extend(it);
        } else {
            heap.extend(children);
        }
    }

    let open_bound = heap
        .iter()
        .map(|n| n.bound)
        .fold(f64::INFINITY, f64::min);
    let mut sol = match s.incumbent.take() {
        Some((z, x)) => {
            let bound = open_bound.min(z);
            let gap = (z - bound).max(0.0) / z.abs().max(1.0);
            let status = if !limited || gap <= opts.gap {
                Status::Optimal
            } else if s.hit_iteration_limit {
                Status::IterationLimit
            } else {
                Status::GapLimit
            };
            Solution {
                status,
                objective: z,
                values: x,
                row_duals: Vec::new(),
                best_bound: bound,
                gap,
                nodes: 0,
                lp_iterations: 0,
                wall_seconds: 0.0,
            }
        }
        None if limited => {
            let mut e = Solution::empty(if s.hit_iteration_limit {
                Status::IterationLimit
            } else {
                Status::GapLimit
            });
            e.best_bound = open_bound;
            e
        }
        None => Solution::empty(Status::Infeasible),
    };
    sol.nodes = s.nodes;
    sol.lp_iterations = s.lp_iterations;
    finish(sol)
}

/// Solves the continuous relaxation (or a pure LP) and reports row multipliers.
pub fn solve_lp(model: &Model, iteration_limit: usize) -> Solution {
    let clock = Instant::now();
    let lo: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
    let hi: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
    let mut lp = Simplex::new(Arc::new(LpData::new(model, &lo, &hi)));
    let st = lp.solve(iteration_limit);
    let mut sol = match st {
        LpStatus::Optimal => Solution {
            status: Status::Optimal,
            objective: lp.objective(),
            values: lp.values(),
            row_duals: lp.row_duals(),
            best_bound: lp.objective(),
            gap: 0.0,
            nodes: 0,
            lp_iterations: 0,
            wall_seconds: 0.0,
        },
        LpStatus::Infeasible => Solution::empty(Status::Infeasible),
        LpStatus::Unbounded => Solution::empty(Status::Unbounded),
        LpStatus::IterationLimit => Solution::empty(Status::IterationLimit),
    };
    sol.lp_iterations = lp.iterations;
    sol.wall_seconds = clock.elapsed().as_secs_f64();
    sol
}
