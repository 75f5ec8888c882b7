//! KKT conditions of the dispatch LP, derived mechanically from its
//! canonical form, and the single-level re-scheduling MILP that embeds them
//! under the equilibrium block.

use crate::dispatch::{solve_dispatch, DispatchDecision, DispatchLp, EqRole, IneqRole, LinRow, VarRole};
use crate::error::{Error, Result};
use crate::linearization::{big_m_linearize, BigMPair, LinExpr};
use crate::milp::{Model, Sense};
use crate::network::{CoupledInstance, PathSet};
use crate::traffic::{assemble_ue_block, UeBlock, UeOptions};

/// `min cᵀv` subject to `A v = b` and `G v ≤ h`, every `v` free.
#[derive(Debug, Clone)]
pub struct CanonicalLp {
    pub names: Vec<String>,
    pub cost: Vec<f64>,
    pub eq: Vec<LinRow>,
    pub ineq: Vec<LinRow>,
}

impl From<&DispatchLp> for CanonicalLp {
    fn from(lp: &DispatchLp) -> Self {
        CanonicalLp {
            names: lp.names.clone(),
            cost: lp.cost.clone(),
            eq: lp.eq.clone(),
            ineq: lp.ineq.clone(),
        }
    }
}

/// `c_j + Σ_i λ_i A_ij + Σ_k μ_k G_kj = 0` for one primal variable.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityRow {
    pub var: usize,
    pub lambda: Vec<(usize, f64)>,
    pub mu: Vec<(usize, f64)>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSystem {
    pub stationarity: Vec<StationarityRow>,
    /// One pair `0 ≤ μ_k ⊥ (G_k v − h_k) ≤ 0` per inequality, by index.
    pub complementarity: Vec<usize>,
    pub n_eq: usize,
    pub n_ineq: usize,
}

/// Transposes the constraint matrices column by column.
pub fn derive_kkt(lp: &CanonicalLp) -> Result<KktSystem> {
    let n = lp.cost.len();
    if lp.names.len() != n {
        return Err(Error::Model("canonical LP: names and costs differ in length".into()));
    }
    let mut stationarity: Vec<StationarityRow> = (0..n)
        .map(|j| StationarityRow {
            var: j,
            lambda: Vec::new(),
            mu: Vec::new(),
            cost: lp.cost[j],
        })
        .collect();
    for (kind, rows) in [("equality", &lp.eq), ("inequality", &lp.ineq)] {
        for (i, r) in rows.iter().enumerate() {
            if r.coeffs.is_empty() && r.load.is_empty() {
                return Err(Error::Model(format!("canonical LP: {kind} `{}` has no coefficients", r.name)));
            }
            if !r.rhs.is_finite() {
                return Err(Error::Model(format!("canonical LP: {kind} `{}` has a non-finite rhs", r.name)));
            }
            for &(j, a) in &r.coeffs {
                if j >= n || !a.is_finite() {
                    return Err(Error::Model(format!("canonical LP: malformed entry in `{}`", r.name)));
                }
                let row = &mut stationarity[j];
                if kind == "equality" {
                    row.lambda.push((i, a));
                } else {
                    row.mu.push((i, a));
                }
            }
        }
    }
    Ok(KktSystem {
        stationarity,
        complementarity: (0..lp.ineq.len()).collect(),
        n_eq: lp.eq.len(),
        n_ineq: lp.ineq.len(),
    })
}

/// Compares the derived stationarity rows with the shape expected from the
/// dispatch structure: η couples only to the η-definition multiplier; each
/// cost variable to it and its own supports; each power to its bus balance,
/// supports and bounds; each line flow to its end-bus balances, DC law and
/// limits; each angle to the DC laws of incident lines (`L·λ`, with `+1` on
/// lines ending at the bus), its bounds, and the reference row at the slack.
pub fn check_structure(kkt: &KktSystem, lp: &DispatchLp, inst: &CoupledInstance) -> Result<()> {
    let eq_of = |role: EqRole| lp.eq_roles.iter().position(|&r| r == role).unwrap();
    let in_of = |role: IneqRole| lp.ineq_roles.iter().position(|&r| r == role).unwrap();
    let base = inst.params.power_base;
    if kkt.stationarity.len() != lp.num_vars() || kkt.complementarity.len() != lp.ineq.len() {
        return Err(Error::Model("KKT: one row per variable and one pair per inequality expected".into()));
    }
    for row in &kkt.stationarity {
        let mut lam: Vec<(usize, f64)> = Vec::new();
        let mut mu: Vec<(usize, f64)> = Vec::new();
        let cost;
        match lp.roles[row.var] {
            VarRole::Eta => {
                lam.push((eq_of(EqRole::EtaDef), 1.0));
                cost = 1.0;
            }
            VarRole::Cost(u) => {
                lam.push((eq_of(EqRole::EtaDef), -1.0));
                for j in 0..lp.units[u].segments.len() {
                    mu.push((in_of(IneqRole::Support(u, j)), -1.0));
                }
                cost = 0.0;
            }
            VarRole::Power(u) => {
                lam.push((eq_of(EqRole::Balance(lp.units[u].bus)), 1.0));
                for (j, s) in lp.units[u].segments.iter().enumerate() {
                    if s.slope != 0.0 {
                        mu.push((in_of(IneqRole::Support(u, j)), s.slope));
                    }
                }
                mu.push((in_of(IneqRole::PowerMin(u)), -1.0));
                mu.push((in_of(IneqRole::PowerMax(u)), 1.0));
                cost = 0.0;
            }
            VarRole::Flow(l) => {
                let line = &inst.lines[l];
                lam.push((eq_of(EqRole::Balance(line.from)), -1.0));
                lam.push((eq_of(EqRole::Balance(line.to)), 1.0));
                lam.push((eq_of(EqRole::DcLaw(l)), line.reactance / base));
                mu.push((in_of(IneqRole::FlowMin(l)), -1.0));
                mu.push((in_of(IneqRole::FlowMax(l)), 1.0));
                cost = 0.0;
            }
            VarRole::Angle(b) => {
                for (l, line) in inst.lines.iter().enumerate() {
                    if line.from == b {
                        lam.push((eq_of(EqRole::DcLaw(l)), -1.0));
                    }
                    if line.to == b {
                        lam.push((eq_of(EqRole::DcLaw(l)), 1.0));
                    }
                }
                if b == inst.substation.bus {
                    lam.push((eq_of(EqRole::Reference), 1.0));
                }
                mu.push((in_of(IneqRole::AngleMin(b)), -1.0));
                mu.push((in_of(IneqRole::AngleMax(b)), 1.0));
                cost = 0.0;
            }
        }
        let norm = |mut v: Vec<(usize, f64)>| {
            v.sort_by(|a, b| a.0.cmp(&b.0));
            v
        };
        if norm(lam) != norm(row.lambda.clone()) || norm(mu) != norm(row.mu.clone()) || cost != row.cost {
            return Err(Error::Model(format!(
                "KKT structure mismatch at variable `{}`",
                lp.names[row.var]
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SingleLevelOptions {
    pub ue: UeOptions,
    pub cost_segments: usize,
    /// Scale on KKT complementarity M values (the audit retry uses 10).
    pub m_scale: f64,
}

impl SingleLevelOptions {
    pub fn from_instance(inst: &CoupledInstance) -> Self {
        SingleLevelOptions {
            ue: UeOptions::from_params(&inst.params),
            cost_segments: inst.params.cost_segments,
            m_scale: 1.0,
        }
    }
}

pub const PRIORITY_KKT: u8 = 1;

/// The re-scheduling MILP and its variable map.
#[derive(Debug, Clone)]
pub struct SingleLevel {
    pub model: Model,
    pub ue: UeBlock,
    pub lp: DispatchLp,
    pub kkt: KktSystem,
    /// Model variable of each canonical dispatch variable.
    pub primal: Vec<usize>,
    pub lambda: Vec<usize>,
    pub mu: Vec<usize>,
    /// `(inequality index, pair)` for every linearized complementarity.
    pub kkt_pairs: Vec<(usize, BigMPair)>,
    /// Inequalities whose residual is positive on the whole box (μ = 0).
    pub inactive: Vec<usize>,
    pub alpha: f64,
    pub eta0: f64,
}

/// Objective `Γ − α(η0 − η)` over the equilibrium block and the KKT system
/// of the dispatch LP with loads tied to station flows.
pub fn assemble_single_level(
    inst: &CoupledInstance,
    paths: &PathSet,
    alpha: f64,
    eta0: f64,
    opts: &SingleLevelOptions,
) -> Result<SingleLevel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Model(format!("sharing ratio {alpha} outside [0, 1]")));
    }
    let mut model = Model::new("rescheduling");
    let ue = assemble_ue_block(&mut model, inst, paths, &opts.ue)?;
    let lp = DispatchLp::new(inst, opts.cost_segments)?;
    let kkt = derive_kkt(&CanonicalLp::from(&lp))?;
    check_structure(&kkt, &lp, inst)?;

    let primal = lp
        .names
        .iter()
        .map(|n| model.cont(format!("d_{n}"), f64::NEG_INFINITY, f64::INFINITY))
        .collect::<Result<Vec<_>>>()?;
    for r in &lp.eq {
        let mut row: Vec<(usize, f64)> = r.coeffs.iter().map(|&(j, a)| (primal[j], a)).collect();
        row.extend(r.load.iter().map(|&(m, a)| (ue.p_evcs[m], a)));
        model.add_constraint(format!("d_{}", r.name), &row, Sense::Eq, r.rhs)?;
    }
    let bound = inst.params.dual_bound_factor * lp.max_slope();
    let lambda = lp
        .eq
        .iter()
        .map(|r| model.cont(format!("lam_{}", r.name), -bound, bound))
        .collect::<Result<Vec<_>>>()?;
    let mu = lp
        .ineq
        .iter()
        .map(|r| model.cont(format!("mu_{}", r.name), 0.0, 4.0 * bound))
        .collect::<Result<Vec<_>>>()?;
    for s in &kkt.stationarity {
        let mut row: Vec<(usize, f64)> = s.lambda.iter().map(|&(i, a)| (lambda[i], a)).collect();
        row.extend(s.mu.iter().map(|&(k, a)| (mu[k], a)));
        model.add_constraint(format!("stat_{}", lp.names[s.var]), &row, Sense::Eq, -s.cost)?;
    }

    let (blo, bhi) = lp.variable_box();
    let safety = inst.params.big_m_safety;
    let mut kkt_pairs = Vec::new();
    let mut inactive = Vec::new();
    for &k in &kkt.complementarity {
        let r = &lp.ineq[k];
        // residual h − G v over the box
        let resid = LinExpr::new(r.coeffs.iter().map(|&(j, a)| (j, -a)).collect(), r.rhs);
        let (smin, smax) = resid.range(&blo, &bhi);
        let g = LinExpr::new(r.coeffs.iter().map(|&(j, a)| (primal[j], -a)).collect(), r.rhs);
        if smin > 1e-9 {
            model.set_bounds(mu[k], 0.0, 0.0);
            model.add_constraint(format!("d_{}", r.name), &g.terms, Sense::Ge, -g.constant)?;
            inactive.push(k);
            continue;
        }
        if !smax.is_finite() {
            return Err(Error::BigM(format!("residual of `{}` is unbounded on the box", r.name)));
        }
        let m_g = opts.m_scale * safety * smax.max(1e-6);
        let m_f = opts.m_scale * safety * 4.0 * bound;
        let pair = big_m_linearize(
            &mut model,
            &format!("kkt_{}", r.name),
            LinExpr::new(vec![(mu[k], 1.0)], 0.0),
            g,
            m_f,
            m_g,
            PRIORITY_KKT,
        )?;
        kkt_pairs.push((k, pair));
    }

    for &(u, c) in &ue.gamma.terms {
        model.add_objective(u, c);
    }
    model.add_objective(primal[lp.eta], alpha);
    model.obj_offset = -alpha * eta0;

    Ok(SingleLevel {
        model,
        ue,
        lp,
        kkt,
        primal,
        lambda,
        mu,
        kkt_pairs,
        inactive,
        alpha,
        eta0,
    })
}

/// Post-solve residuals of the embedded lower level.
#[derive(Debug, Clone, PartialEq)]
pub struct KktAudit {
    pub stationarity: f64,
    /// max over pairs of min(μ, slack).
    pub complementarity: f64,
    pub primal: f64,
    /// |primal − dual| / max(1, |primal|).
    pub duality_gap: f64,
}

impl SingleLevel {
    pub fn loads(&self, values: &[f64]) -> Vec<f64> {
        self.ue.p_evcs.iter().map(|&j| values[j].max(0.0)).collect()
    }

    pub fn dispatch(&self, values: &[f64]) -> DispatchDecision {
        let v = self.primal.iter().map(|&j| values[j]).collect();
        let l = self.lambda.iter().map(|&j| values[j]).collect();
        let m = self.mu.iter().map(|&j| values[j]).collect();
        self.lp.decision(v, l, m)
    }

    pub fn audit(&self, values: &[f64]) -> KktAudit {
        let d = self.dispatch(values);
        let loads: Vec<f64> = self.ue.p_evcs.iter().map(|&j| values[j]).collect();
        kkt_residuals(&self.lp, &self.kkt, &d, &loads)
    }

    /// Proposes binaries for a point whose route switches are integral:
    /// fill switches from the proper fill of each flow, and KKT switches
    /// from the binding set of a direct dispatch solve at the point's loads.
    pub fn complete(&self, values: &[f64]) -> Option<Vec<f64>> {
        let mut out = values.to_vec();
        for p in &self.ue.pairs {
            out[p.switch] = values[p.switch].round();
        }
        self.ue.fill_switches(values, &mut out);
        let d = solve_dispatch(&self.lp, &self.loads(values)).ok()?;
        let slack = self.lp.slack(&d.v);
        for (k, pair) in &self.kkt_pairs {
            let h = self.lp.ineq[*k].rhs;
            out[pair.switch] = if slack[*k] < 1e-7 * h.abs().max(1.0) { 1.0 } else { 0.0 };
        }
        Some(out)
    }

    /// Extends a point of the equilibrium-only model (same leading
    /// variables) to a start for this model.
    pub fn start_from_traffic(&self, traffic_values: &[f64]) -> Option<Vec<f64>> {
        let mut v = vec![0.0; self.model.num_vars()];
        let n = traffic_values.len().min(v.len());
        v[..n].copy_from_slice(&traffic_values[..n]);
        self.complete(&v)
    }
}

pub fn kkt_residuals(lp: &DispatchLp, kkt: &KktSystem, d: &DispatchDecision, loads: &[f64]) -> KktAudit {
    let mut stationarity = 0.0f64;
    for s in &kkt.stationarity {
        let r = s.cost
            + s.lambda.iter().map(|&(i, a)| a * d.lambda[i]).sum::<f64>()
            + s.mu.iter().map(|&(k, a)| a * d.mu[k]).sum::<f64>();
        stationarity = stationarity.max(r.abs());
    }
    let slack = lp.slack(&d.v);
    let complementarity = slack
        .iter()
        .zip(&d.mu)
        .map(|(s, m)| s.max(0.0).min(m.max(0.0)))
        .fold(0.0, f64::max);
    let rhs = lp.eq_rhs(loads);
    let mut primal = slack.iter().map(|s| (-s).max(0.0)).fold(0.0, f64::max);
    for (r, b) in lp.eq.iter().zip(&rhs) {
        let act: f64 = r.coeffs.iter().map(|&(j, a)| a * d.v[j]).sum();
        primal = primal.max((act - b).abs());
    }
    let primal_obj: f64 = lp.cost.iter().zip(&d.v).map(|(c, v)| c * v).sum();
    let dual_obj = -d.lambda.iter().zip(&rhs).map(|(l, b)| l * b).sum::<f64>()
        - d.mu.iter().zip(&lp.ineq).map(|(m, r)| m * r.rhs).sum::<f64>();
    KktAudit {
        stationarity,
        complementarity,
        primal,
        duality_gap: (primal_obj - dual_obj).abs() / primal_obj.abs().max(1.0),
    }
}
