//! DC economic dispatch with chord-linearized generation cost.
//!
//! The LP is kept in a canonical form (`min cᵀv`, `A v + E p = b`,
//! `G v ≤ h`, all `v` free) so that its KKT system can be derived
//! mechanically. `p` is the vector of station charging loads in MW.

use crate::error::{Error, Result};
use crate::milp::{solve_lp, Model, Sense, Status};
use crate::network::{CoupledInstance, Generator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSegment {
    pub slope: f64,
    pub intercept: f64,
}

/// Chords of `a p² + b p + c` over `[p_min, p_max]` at equal spacing. The
/// epigraph `F ≥ k_j p + b_j` of their maximum matches the quadratic at the
/// knots and lies above it in between.
pub fn cost_pwl(g: &Generator, segments: usize) -> Result<Vec<CostSegment>> {
    if segments == 0 {
        return Err(Error::Model("cost curve needs at least one segment".into()));
    }
    if g.a < 0.0 {
        return Err(Error::invalid("generator", g.id, "a_cny_per_mw2h", "must be nonnegative"));
    }
    let cost = |p: f64| g.a * p * p + g.b * p + g.c;
    if g.a == 0.0 {
        return Ok(vec![CostSegment {
            slope: g.b,
            intercept: g.c,
        }]);
    }
    if g.p_max <= g.p_min {
        return Ok(vec![CostSegment {
            slope: 0.0,
            intercept: cost(g.p_min),
        }]);
    }
    let w = (g.p_max - g.p_min) / segments as f64;
    Ok((0..segments)
        .map(|j| {
            let x0 = g.p_min + j as f64 * w;
            let x1 = if j + 1 == segments { g.p_max } else { x0 + w };
            let k = (cost(x1) - cost(x0)) / (x1 - x0);
            CostSegment {
                slope: k,
                intercept: cost(x0) - k * x0,
            }
        })
        .collect())
}

/// One generating unit of the LP: a generator or the substation import.
#[derive(Debug, Clone)]
pub struct Unit {
    pub name: String,
    pub bus: usize,
    pub segments: Vec<CostSegment>,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone)]
pub struct LinRow {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    /// Coefficients on charging loads (equalities only).
    pub load: Vec<(usize, f64)>,
}

/// What a canonical variable stands for; used by the structural KKT check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    Eta,
    Cost(usize),
    Power(usize),
    Flow(usize),
    Angle(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqRole {
    EtaDef,
    Balance(usize),
    DcLaw(usize),
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IneqRole {
    Support(usize, usize),
    PowerMin(usize),
    PowerMax(usize),
    FlowMin(usize),
    FlowMax(usize),
    AngleMin(usize),
    AngleMax(usize),
}

/// Canonical dispatch LP.
#[derive(Debug, Clone)]
pub struct DispatchLp {
    pub names: Vec<String>,
    pub cost: Vec<f64>,
    pub roles: Vec<VarRole>,
    pub eq: Vec<LinRow>,
    pub eq_roles: Vec<EqRole>,
    pub ineq: Vec<LinRow>,
    pub ineq_roles: Vec<IneqRole>,
    pub units: Vec<Unit>,
    pub n_loads: usize,
    pub eta: usize,
    pub cost_vars: Vec<usize>,
    pub power_vars: Vec<usize>,
    pub flow_vars: Vec<usize>,
    pub angle_vars: Vec<usize>,
}

pub fn dispatch_units(inst: &CoupledInstance, cost_segments: usize) -> Result<Vec<Unit>> {
    let mut units = Vec::new();
    for g in &inst.generators {
        units.push(Unit {
            name: format!("G{}", g.id),
            bus: g.bus,
            segments: cost_pwl(g, cost_segments)?,
            p_min: g.p_min,
            p_max: g.p_max,
        });
    }
    let s = &inst.substation;
    units.push(Unit {
        name: "SUB".into(),
        bus: s.bus,
        segments: vec![CostSegment {
            slope: s.price,
            intercept: 0.0,
        }],
        p_min: s.import_min,
        p_max: s.import_max,
    });
    Ok(units)
}

impl DispatchLp {
    pub fn new(inst: &CoupledInstance, cost_segments: usize) -> Result<DispatchLp> {
        let units = dispatch_units(inst, cost_segments)?;
        let nb = inst.buses.len();
        let nl = inst.lines.len();
        let nu = units.len();
        let mut names = Vec::new();
        let mut roles = Vec::new();
        let mut push = |name: String, role: VarRole| {
            names.push(name);
            roles.push(role);
            names.len() - 1
        };
        let eta = push("eta".into(), VarRole::Eta);
        let cost_vars: Vec<usize> = (0..nu)
            .map(|u| push(format!("F_{}", units[u].name), VarRole::Cost(u)))
            .collect();
        let power_vars: Vec<usize> = (0..nu)
            .map(|u| push(format!("P_{}", units[u].name), VarRole::Power(u)))
            .collect();
        let flow_vars: Vec<usize> = (0..nl)
            .map(|l| push(format!("Pl{}", inst.lines[l].id), VarRole::Flow(l)))
            .collect();
        let angle_vars: Vec<usize> = (0..nb)
            .map(|b| push(format!("th{}", inst.buses[b].id), VarRole::Angle(b)))
            .collect();
        let mut cost = vec![0.0; names.len()];
        cost[eta] = 1.0;

        let mut eq = Vec::new();
        let mut eq_roles = Vec::new();
        let mut row = vec![(eta, 1.0)];
        row.extend(cost_vars.iter().map(|&v| (v, -1.0)));
        eq.push(LinRow {
            name: "eta_def".into(),
            coeffs: row,
            rhs: 0.0,
            load: Vec::new(),
        });
        eq_roles.push(EqRole::EtaDef);
        for (b, bus) in inst.buses.iter().enumerate() {
            let mut co = Vec::new();
            for (u, unit) in units.iter().enumerate() {
                if unit.bus == b {
                    co.push((power_vars[u], 1.0));
                }
            }
            for (l, line) in inst.lines.iter().enumerate() {
                if line.to == b {
                    co.push((flow_vars[l], 1.0));
                }
                if line.from == b {
                    co.push((flow_vars[l], -1.0));
                }
            }
            let load = inst
                .evcs
                .iter()
                .enumerate()
                .filter(|(_, e)| e.bus == b)
                .map(|(m, _)| (m, -1.0))
                .collect();
            eq.push(LinRow {
                name: format!("balance{}", bus.id),
                coeffs: co,
                rhs: bus.traditional_demand,
                load,
            });
            eq_roles.push(EqRole::Balance(b));
        }
        let base = inst.params.power_base;
        for (l, line) in inst.lines.iter().enumerate() {
            eq.push(LinRow {
                name: format!("dc{}", line.id),
                coeffs: vec![
                    (flow_vars[l], line.reactance / base),
                    (angle_vars[line.from], -1.0),
                    (angle_vars[line.to], 1.0),
                ],
                rhs: 0.0,
                load: Vec::new(),
            });
            eq_roles.push(EqRole::DcLaw(l));
        }
        eq.push(LinRow {
            name: "reference".into(),
            coeffs: vec![(angle_vars[inst.substation.bus], 1.0)],
            rhs: 0.0,
            load: Vec::new(),
        });
        eq_roles.push(EqRole::Reference);

        let mut ineq = Vec::new();
        let mut ineq_roles = Vec::new();
        let mut le = |name: String, coeffs: Vec<(usize, f64)>, rhs: f64, role: IneqRole| {
            ineq.push(LinRow {
                name,
                coeffs,
                rhs,
                load: Vec::new(),
            });
            ineq_roles.push(role);
        };
        for (u, unit) in units.iter().enumerate() {
            for (j, s) in unit.segments.iter().enumerate() {
                le(
                    format!("support_{}_{}", unit.name, j + 1),
                    vec![(power_vars[u], s.slope), (cost_vars[u], -1.0)],
                    -s.intercept,
                    IneqRole::Support(u, j),
                );
            }
            le(format!("pmin_{}", unit.name), vec![(power_vars[u], -1.0)], -unit.p_min, IneqRole::PowerMin(u));
            le(format!("pmax_{}", unit.name), vec![(power_vars[u], 1.0)], unit.p_max, IneqRole::PowerMax(u));
        }
        for (l, line) in inst.lines.iter().enumerate() {
            le(format!("flow_lo{}", line.id), vec![(flow_vars[l], -1.0)], line.flow_limit, IneqRole::FlowMin(l));
            le(format!("flow_hi{}", line.id), vec![(flow_vars[l], 1.0)], line.flow_limit, IneqRole::FlowMax(l));
        }
        for (b, bus) in inst.buses.iter().enumerate() {
            le(format!("ang_lo{}", bus.id), vec![(angle_vars[b], -1.0)], -bus.angle_min, IneqRole::AngleMin(b));
            le(format!("ang_hi{}", bus.id), vec![(angle_vars[b], 1.0)], bus.angle_max, IneqRole::AngleMax(b));
        }

        Ok(DispatchLp {
            names,
            cost,
            roles,
            eq,
            eq_roles,
            ineq,
            ineq_roles,
            units,
            n_loads: inst.evcs.len(),
            eta,
            cost_vars,
            power_vars,
            flow_vars,
            angle_vars,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    /// Right-hand side of the equalities once loads are fixed.
    pub fn eq_rhs(&self, loads: &[f64]) -> Vec<f64> {
        self.eq
            .iter()
            .map(|r| r.rhs - r.load.iter().map(|&(m, c)| c * loads[m]).sum::<f64>())
            .collect()
    }

    /// A box containing every KKT point: explicit bound rows for powers,
    /// flows and angles; for each cost variable, the range of its supports
    /// over the unit's power range (at a KKT point some support is tight).
    pub fn variable_box(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.num_vars();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for r in &self.ineq {
            if let [(j, a)] = r.coeffs[..] {
                if a > 0.0 {
                    hi[j] = hi[j].min(r.rhs / a);
                } else {
                    lo[j] = lo[j].max(r.rhs / a);
                }
            }
        }
        for (u, unit) in self.units.iter().enumerate() {
            let at = |p: f64| unit.segments.iter().map(move |s| s.slope * p + s.intercept);
            let v = self.cost_vars[u];
            lo[v] = at(unit.p_min).fold(f64::INFINITY, f64::min);
            hi[v] = at(unit.p_max).fold(f64::NEG_INFINITY, f64::max);
        }
        let (elo, ehi) = self.cost_vars.iter().fold((0.0, 0.0), |(a, b), &v| (a + lo[v], b + hi[v]));
        lo[self.eta] = elo;
        hi[self.eta] = ehi;
        (lo, hi)
    }

    /// Steepest cost slope across all units.
    pub fn max_slope(&self) -> f64 {
        self.units
            .iter()
            .flat_map(|u| u.segments.iter().map(|s| s.slope.abs()))
            .fold(0.0, f64::max)
    }

    /// Builds the LP with loads fixed (standalone solve).
    pub fn to_model(&self, loads: &[f64]) -> Result<Model> {
        if loads.len() != self.n_loads {
            return Err(Error::Model(format!(
                "expected {} charging loads, got {}",
                self.n_loads,
                loads.len()
            )));
        }
        if loads.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Domain("charging loads must be nonnegative".into()));
        }
        let mut m = Model::new("dispatch");
        for (name, &c) in self.names.iter().zip(&self.cost) {
            let v = m.cont(name.clone(), f64::NEG_INFINITY, f64::INFINITY)?;
            m.set_objective(v, c);
        }
        let rhs = self.eq_rhs(loads);
        for (r, b) in self.eq.iter().zip(rhs) {
            m.add_constraint(r.name.clone(), &r.coeffs, Sense::Eq, b)?;
        }
        for r in &self.ineq {
            m.add_constraint(r.name.clone(), &r.coeffs, Sense::Le, r.rhs)?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchDecision {
    /// MW per unit (generators in instance order, then the substation).
    pub output: Vec<f64>,
    /// CNY/h per unit.
    pub cost: Vec<f64>,
    pub line_flow: Vec<f64>,
    pub angle: Vec<f64>,
    pub eta: f64,
    /// Canonical primal point.
    pub v: Vec<f64>,
    /// Multipliers in the `c + Aᵀλ + Gᵀμ = 0` convention.
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl DispatchLp {
    pub fn decision(&self, v: Vec<f64>, lambda: Vec<f64>, mu: Vec<f64>) -> DispatchDecision {
        DispatchDecision {
            output: self.power_vars.iter().map(|&j| v[j]).collect(),
            cost: self.cost_vars.iter().map(|&j| v[j]).collect(),
            line_flow: self.flow_vars.iter().map(|&j| v[j]).collect(),
            angle: self.angle_vars.iter().map(|&j| v[j]).collect(),
            eta: v[self.eta],
            v,
            lambda,
            mu,
        }
    }

    /// Residuals `h − G v` of the inequalities.
    pub fn slack(&self, v: &[f64]) -> Vec<f64> {
        self.ineq
            .iter()
            .map(|r| r.rhs - r.coeffs.iter().map(|&(j, a)| a * v[j]).sum::<f64>())
            .collect()
    }
}

/// Solves the dispatch LP at the given charging loads.
pub fn solve_dispatch(lp: &DispatchLp, loads: &[f64]) -> Result<DispatchDecision> {
    let model = lp.to_model(loads)?;
    let sol = solve_lp(&model, 100_000);
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => {
            return Err(Error::Infeasible(
                "dispatch: demand cannot be served within generation, import and line limits".into(),
            ))
        }
        Status::Unbounded => return Err(Error::Solver("dispatch LP unbounded".into())),
        _ => return Err(Error::Limit("dispatch LP iteration limit".into())),
    }
    let ne = lp.eq.len();
    // simplex multipliers y satisfy c − Aᵀy ≥ 0; the KKT convention is −y
    let lambda: Vec<f64> = sol.row_duals[..ne].iter().map(|y| -y).collect();
    let mu: Vec<f64> = sol.row_duals[ne..].iter().map(|y| (-y).max(0.0)).collect();
    Ok(lp.decision(sol.values, lambda, mu))
}
