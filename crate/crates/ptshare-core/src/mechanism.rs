//! Two-stage coordination: the traffic operator's independent baseline,
//! re-scheduling under a share of the dispatch savings, the cost accounting
//! per sharing ratio, and selection of the ratio that is cheapest for the
//! distribution operator.

use crate::dispatch::{solve_dispatch, DispatchDecision, DispatchLp};
use crate::error::{Error, Result};
use crate::kkt::{assemble_single_level, KktAudit, SingleLevel, SingleLevelOptions};
use crate::linearization::{audit_big_m, BigMPair, FillBlock, PwlCurve};
use crate::milp::{solve_lp, solve_milp, BbOptions, Model, Sense, Solution, Status};
use crate::network::{CoupledInstance, PathSet};
use crate::traffic::{assemble_ue_block, verify_wardrop, TrafficDecision, UeBlock, UeOptions, WardropReport};

#[derive(Debug, Clone)]
pub struct MechanismOptions {
    pub single_level: SingleLevelOptions,
    pub bb: BbOptions,
}

impl MechanismOptions {
    pub fn from_instance(inst: &CoupledInstance) -> Self {
        MechanismOptions {
            single_level: SingleLevelOptions::from_instance(inst),
            bb: BbOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreScheduleResult {
    pub gamma0: f64,
    pub eta0: f64,
    pub traffic: TrafficDecision,
    pub dispatch: DispatchDecision,
    /// MW per station.
    pub loads: Vec<f64>,
    /// Solution vector of the equilibrium-only model.
    pub values: Vec<f64>,
    pub wardrop: WardropReport,
    pub nodes: usize,
    pub wall_seconds: f64,
}

/// The equilibrium block alone with objective Γ.
pub fn tno_model(inst: &CoupledInstance, paths: &PathSet, opts: &UeOptions) -> Result<(Model, UeBlock)> {
    let mut model = Model::new("prescheduling");
    let ue = assemble_ue_block(&mut model, inst, paths, opts)?;
    for &(j, c) in &ue.gamma.terms {
        model.add_objective(j, c);
    }
    Ok((model, ue))
}

/// Names the first demand class whose demand exceeds what its routes can
/// carry within road and station capacities.
fn diagnose_capacity(inst: &CoupledInstance, paths: &PathSet) -> Option<String> {
    let frac = inst.params.davidson_fraction;
    for od in &inst.od_pairs {
        for (class, q) in [
            (crate::network::VehicleClass::Gv, od.gv_demand),
            (crate::network::VehicleClass::Ev, od.ev_demand),
        ] {
            if q <= 0.0 {
                continue;
            }
            let alts = paths.of(od_index(inst, od.id), class);
            let mut m = Model::new("capacity");
            let f: Vec<usize> = alts
                .iter()
                .map(|&a| m.cont(format!("f{a}"), 0.0, f64::INFINITY).unwrap())
                .collect();
            for (r, road) in inst.roads.iter().enumerate() {
                let row: Vec<(usize, f64)> = alts
                    .iter()
                    .zip(&f)
                    .filter(|(&a, _)| paths.alts[a].roads.contains(&r))
                    .map(|(_, &v)| (v, 1.0))
                    .collect();
                if !row.is_empty() {
                    m.add_constraint(format!("r{r}"), &row, Sense::Le, road.capacity).unwrap();
                }
            }
            for (s, st) in inst.evcs.iter().enumerate() {
                let row: Vec<(usize, f64)> = alts
                    .iter()
                    .zip(&f)
                    .filter(|(&a, _)| paths.alts[a].evcs == Some(s))
                    .map(|(_, &v)| (v, 1.0))
                    .collect();
                if !row.is_empty() {
                    m.add_constraint(format!("s{s}"), &row, Sense::Le, frac * st.capacity).unwrap();
                }
            }
            for &v in &f {
                m.add_objective(v, -1.0);
            }
            let sol = solve_lp(&m, 100_000);
            if sol.status == Status::Optimal && -sol.objective < q - 1e-9 {
                return Some(format!(
                    "O-D pair {} ({}): demand {q} p.u. exceeds route capacity {:.6} p.u.",
                    od.id,
                    class.as_str(),
                    -sol.objective
                ));
            }
        }
    }
    None
}

fn od_index(inst: &CoupledInstance, id: usize) -> usize {
    inst.od_pairs.iter().position(|o| o.id == id).unwrap()
}

fn tno_completion(ue: &UeBlock, values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    for p in &ue.pairs {
        out[p.switch] = values[p.switch].round();
    }
    ue.fill_switches(values, &mut out);
    out
}

/// Baseline: the traffic operator minimizes Γ alone; η0 is the dispatch
/// cost at the resulting charging loads.
pub fn pre_schedule(inst: &CoupledInstance, paths: &PathSet, opts: &MechanismOptions) -> Result<PreScheduleResult> {
    if let Some(msg) = diagnose_capacity(inst, paths) {
        return Err(Error::Infeasible(format!("pre-scheduling: {msg}")));
    }
    let (model, ue) = tno_model(inst, paths, &opts.single_level.ue)?;
    let mut complete = |v: &[f64]| Some(tno_completion(&ue, v));
    let sol = solve_milp(&model, &opts.bb, &[], Some(&mut complete));
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => {
            return Err(Error::Infeasible(
                "pre-scheduling: no tolled equilibrium within capacities for the joint demand".into(),
            ))
        }
        s => return Err(Error::Limit(format!("pre-scheduling: solver stopped with status {}", s.as_str()))),
    }
    let traffic = ue.extract(&sol.values, inst, paths);
    let wardrop = verify_wardrop(&traffic, inst, paths, 1e-5 * traffic.gamma.abs().max(1.0));
    let loads: Vec<f64> = traffic.p_evcs.iter().map(|p| p.max(0.0)).collect();
    let lp = DispatchLp::new(inst, opts.single_level.cost_segments)?;
    let dispatch = solve_dispatch(&lp, &loads).map_err(|e| match e {
        Error::Infeasible(m) => Error::Infeasible(format!("pre-scheduling dispatch: {m}")),
        other => other,
    })?;
    Ok(PreScheduleResult {
        gamma0: traffic.gamma,
        eta0: dispatch.eta,
        traffic,
        dispatch,
        loads,
        values: sol.values,
        wardrop,
        nodes: sol.nodes,
        wall_seconds: sol.wall_seconds,
    })
}

/// Post-solve checks of one re-scheduling point.
#[derive(Debug, Clone)]
pub struct PointAudit {
    pub wardrop: bool,
    pub kkt: KktAudit,
    /// |η embedded − η re-solved| / max(1, η).
    pub eta_mismatch: f64,
    pub big_m_clean: bool,
    pub fill_exclusive: bool,
    /// M scale the accepted solve used.
    pub m_scale: f64,
}

impl PointAudit {
    pub fn passed(&self) -> bool {
        self.wardrop
            && self.big_m_clean
            && self.fill_exclusive
            && self.eta_mismatch <= 1e-5
            && self.kkt.duality_gap <= 1e-5
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub alpha: f64,
    pub gamma: f64,
    pub eta: f64,
    pub delta_eta: f64,
    pub delta_gamma: f64,
    pub psi: f64,
    pub h: f64,
    pub overall: f64,
    pub tn_net_profit: f64,
    pub pdn_net_profit: f64,
    pub status: Status,
    pub gap: f64,
    pub nodes: usize,
    pub wall_seconds: f64,
    pub audit: Option<PointAudit>,
    pub traffic: Option<TrafficDecision>,
    pub dispatch: Option<DispatchDecision>,
    /// MW from generators other than the substation.
    pub local_generation: f64,
    pub values: Vec<f64>,
}

/// Cost split for one ratio, from the baseline and re-scheduled costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accounting {
    pub delta_eta: f64,
    pub delta_gamma: f64,
    pub psi: f64,
    pub h: f64,
    pub overall: f64,
    pub tn_net_profit: f64,
    pub pdn_net_profit: f64,
}

pub fn accounting(alpha: f64, gamma0: f64, eta0: f64, gamma: f64, eta: f64) -> Accounting {
    let delta_eta = eta0 - eta;
    let delta_gamma = gamma - gamma0;
    let share = alpha * delta_eta;
    let psi = eta + share;
    let h = gamma - share;
    Accounting {
        delta_eta,
        delta_gamma,
        psi,
        h,
        overall: psi + h,
        tn_net_profit: share - delta_gamma,
        pdn_net_profit: (1.0 - alpha) * delta_eta,
    }
}

impl SweepPoint {
    /// Accepted points are solved to the gap and pass every audit.
    pub fn accepted(&self) -> bool {
        self.status == Status::Optimal && self.audit.as_ref().is_some_and(|a| a.passed())
    }

    pub fn status_label(&self) -> &'static str {
        match (&self.status, &self.audit) {
            (Status::Optimal, Some(a)) if !a.passed() => "audit-failed",
            (s, _) => s.as_str(),
        }
    }

    fn failed(alpha: f64, sol: &Solution) -> SweepPoint {
        SweepPoint {
            alpha,
            gamma: f64::NAN,
            eta: f64::NAN,
            delta_eta: f64::NAN,
            delta_gamma: f64::NAN,
            psi: f64::NAN,
            h: f64::NAN,
            overall: f64::NAN,
            tn_net_profit: f64::NAN,
            pdn_net_profit: f64::NAN,
            status: sol.status,
            gap: sol.gap,
            nodes: sol.nodes,
            wall_seconds: sol.wall_seconds,
            audit: None,
            traffic: None,
            dispatch: None,
            local_generation: f64::NAN,
            values: Vec::new(),
        }
    }
}

fn fill_exclusive(values: &[f64], blocks: &[FillBlock], curves: &[PwlCurve]) -> bool {
    blocks.iter().zip(curves).all(|(b, c)| {
        let tol = 1e-6 * c.width.max(1.0);
        b.segments
            .windows(2)
            .all(|w| values[w[0]] >= c.width - tol || values[w[1]] <= tol)
    })
}

fn audit_point(sl: &SingleLevel, inst: &CoupledInstance, paths: &PathSet, values: &[f64], m_scale: f64) -> (PointAudit, TrafficDecision, DispatchDecision) {
    let traffic = sl.ue.extract(values, inst, paths);
    let wardrop = verify_wardrop(&traffic, inst, paths, 1e-5 * traffic.gamma.abs().max(1.0)).passed();
    let embedded = sl.dispatch(values);
    let kkt = sl.audit(values);
    let eta_mismatch = match solve_dispatch(&sl.lp, &sl.loads(values)) {
        Ok(d) => (d.eta - embedded.eta).abs() / embedded.eta.abs().max(1.0),
        Err(_) => f64::INFINITY,
    };
    let mut pairs: Vec<BigMPair> = sl.ue.pairs.clone();
    pairs.extend(sl.kkt_pairs.iter().map(|(_, p)| p.clone()));
    let big_m_clean = audit_big_m(values, &pairs).is_clean();
    let fill_ok = fill_exclusive(values, &sl.ue.road_fill, &sl.ue.road_curves)
        && fill_exclusive(values, &sl.ue.evcs_fill, &sl.ue.evcs_curves);
    (
        PointAudit {
            wardrop,
            kkt,
            eta_mismatch,
            big_m_clean,
            fill_exclusive: fill_ok,
            m_scale,
        },
        traffic,
        embedded,
    )
}

/// Solves the re-scheduling MILP for one ratio. `warm` is an optional start
/// from a neighbouring ratio (same model layout).
pub fn re_schedule(
    inst: &CoupledInstance,
    paths: &PathSet,
    alpha: f64,
    pre: &PreScheduleResult,
    opts: &MechanismOptions,
    warm: Option<&[f64]>,
) -> Result<SweepPoint> {
    let mut last = None;
    for m_scale in [1.0, 10.0] {
        let mut sl_opts = opts.single_level.clone();
        sl_opts.m_scale *= m_scale;
        sl_opts.ue.m_scale *= m_scale;
        let sl = assemble_single_level(inst, paths, alpha, pre.eta0, &sl_opts)?;
        let mut starts = Vec::new();
        if let Some(s) = sl.start_from_traffic(&pre.values) {
            starts.push(s);
        }
        if let Some(w) = warm.filter(|w| w.len() == sl.model.num_vars()) {
            if let Some(s) = sl.complete(w) {
                starts.push(s);
            }
        }
        let mut complete = |v: &[f64]| sl.complete(v);
        let sol = solve_milp(&sl.model, &opts.bb, &starts, Some(&mut complete));
        if sol.values.is_empty() {
            return Ok(SweepPoint::failed(alpha, &sol));
        }
        let (audit, traffic, dispatch) = audit_point(&sl, inst, paths, &sol.values, sl_opts.m_scale);
        let retry = !audit.big_m_clean && m_scale == 1.0;
        let gamma = traffic.gamma;
        let eta = dispatch.eta;
        let acc = accounting(alpha, pre.gamma0, pre.eta0, gamma, eta);
        let local_generation = dispatch.output[..inst.generators.len()].iter().sum();
        last = Some(SweepPoint {
            alpha,
            gamma,
            eta,
            delta_eta: acc.delta_eta,
            delta_gamma: acc.delta_gamma,
            psi: acc.psi,
            h: acc.h,
            overall: acc.overall,
            tn_net_profit: acc.tn_net_profit,
            pdn_net_profit: acc.pdn_net_profit,
            status: sol.status,
            gap: sol.gap,
            nodes: sol.nodes,
            wall_seconds: sol.wall_seconds,
            audit: Some(audit),
            traffic: Some(traffic),
            dispatch: Some(dispatch),
            local_generation,
            values: sol.values,
        });
        if !retry {
            break;
        }
    }
    Ok(last.unwrap())
}

/// Grid values must be finite, in [0, 1], strictly increasing.
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Model("sharing-ratio grid is empty".into()));
    }
    for (i, &a) in grid.iter().enumerate() {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Model(format!("sharing ratio {a} outside [0, 1]")));
        }
        if i > 0 && a <= grid[i - 1] {
            return Err(Error::Model(format!(
                "sharing-ratio grid must be sorted and distinct ({} then {a})",
                grid[i - 1]
            )));
        }
    }
    Ok(())
}

/// `from`, `from + step`, ... up to `to` inclusive; values are rounded to
/// 12 decimals so that `0:1:0.05` yields exactly 21 clean ratios.
pub fn grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !from.is_finite() || !to.is_finite() || to < from {
        return Err(Error::Model(format!("invalid grid {from}:{to}:{step}")));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    let g: Vec<f64> = (0..=n)
        .map(|i| ((from + i as f64 * step) * 1e12).round() / 1e12)
        .collect();
    validate_grid(&g)?;
    Ok(g)
}

pub fn default_grid() -> Vec<f64> {
    grid(0.0, 1.0, 0.05).unwrap()
}

/// Pre-schedules once, then re-schedules every grid ratio in order, each
/// warm-started from the previous point.
pub fn sweep(
    inst: &CoupledInstance,
    paths: &PathSet,
    grid: &[f64],
    opts: &MechanismOptions,
) -> Result<(PreScheduleResult, Vec<SweepPoint>)> {
    validate_grid(grid)?;
    let pre = pre_schedule(inst, paths, opts)?;
    let mut points: Vec<SweepPoint> = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let warm = points.last().filter(|p| !p.values.is_empty()).map(|p| p.values.clone());
        let p = match re_schedule(inst, paths, alpha, &pre, opts, warm.as_deref()) {
            Ok(p) => p,
            Err(e) => {
                let mut s = Solution::empty(Status::Infeasible);
                if matches!(e, Error::Limit(_)) {
                    s.status = Status::IterationLimit;
                }
                SweepPoint::failed(alpha, &s)
            }
        };
        points.push(p);
    }
    Ok((pre, points))
}

/// Index of the accepted point with least Ψ; ties go to the smallest ratio.
pub fn select_alpha_star(points: &[SweepPoint]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if !p.accepted() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let q = &points[b];
                let tol = 1e-9 * q.psi.abs().max(1.0);
                if p.psi < q.psi - tol || (p.psi <= q.psi + tol && p.alpha < q.alpha) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or_else(|| Error::Model("no accepted sweep point to select from".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// O(α) nonincreasing (within 1e-6 relative) up to the plateau onset.
    pub overall_nonincreasing: bool,
    /// First ratio after which Δη stays within 0.1% relative.
    pub plateau_onset: Option<f64>,
    /// Largest local generation on the plateau, MW.
    pub plateau_local_generation: Option<f64>,
    pub zero_local_generation: bool,
    /// Whether Δη > 0 strictly anywhere.
    pub strict_savings: bool,
}

pub fn diagnostics(points: &[SweepPoint]) -> Diagnostics {
    let pts: Vec<&SweepPoint> = points.iter().filter(|p| p.accepted()).collect();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-3 * a.abs().max(b.abs()).max(1e-9);
    let onset = (0..pts.len().saturating_sub(1))
        .find(|&i| pts[i + 1..].iter().all(|q| close(q.delta_eta, pts[i].delta_eta)));
    let upto = onset.unwrap_or(pts.len().saturating_sub(1));
    let overall_nonincreasing = pts[..=upto.min(pts.len().saturating_sub(1))]
        .windows(2)
        .all(|w| w[1].overall <= w[0].overall + 1e-6 * w[0].overall.abs().max(1.0));
    let plateau_local_generation =
        onset.map(|i| pts[i..].iter().map(|p| p.local_generation).fold(0.0, f64::max));
    Diagnostics {
        overall_nonincreasing,
        plateau_onset: onset.map(|i| pts[i].alpha),
        plateau_local_generation,
        zero_local_generation: plateau_local_generation.is_some_and(|g| g <= 1e-6),
        strict_savings: pts.iter().any(|p| p.delta_eta > 1e-6 * p.eta.abs().max(1.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(alpha: f64, eta: f64, psi: f64, local: f64) -> SweepPoint {
        SweepPoint {
            alpha,
            gamma: 0.0,
            eta,
            delta_eta: 100.0 - eta,
            delta_gamma: 0.0,
            psi,
            h: 0.0,
            overall: eta,
            tn_net_profit: 0.0,
            pdn_net_profit: 0.0,
            status: Status::Optimal,
            gap: 0.0,
            nodes: 1,
            wall_seconds: 0.0,
            audit: Some(PointAudit {
                wardrop: true,
                kkt: KktAudit {
                    stationarity: 0.0,
                    complementarity: 0.0,
                    primal: 0.0,
                    duality_gap: 0.0,
                },
                eta_mismatch: 0.0,
                big_m_clean: true,
                fill_exclusive: true,
                m_scale: 1.0,
            }),
            traffic: None,
            dispatch: None,
            local_generation: local,
            values: Vec::new(),
        }
    }

    #[test]
    fn accounting_example() {
        let a = accounting(0.2, 162672.0, 201621.0, 164270.0, 180447.0);
        assert!((a.delta_gamma - 1598.0).abs() < 1e-6);
        assert!((0.2 * a.delta_eta - 4234.8).abs() < 1e-6);
        assert!((a.psi - 184681.8).abs() < 1e-6);
        assert!((a.h - 160035.2).abs() < 1e-6);
        assert!((a.psi + a.h - (164270.0 + 180447.0)).abs() < 1e-6);
    }

    #[test]
    fn argmin_and_tie_break() {
        let pts = vec![
            synthetic(0.1, 50.0, 190000.0, 1.0),
            synthetic(0.2, 50.0, 185000.0, 1.0),
            synthetic(0.3, 50.0, 186000.0, 1.0),
        ];
        assert_eq!(select_alpha_star(&pts).unwrap(), 1);
        let flat: Vec<SweepPoint> = (3..=10).map(|i| synthetic(i as f64 / 10.0, 50.0, 1.0, 0.0)).collect();
        assert_eq!(flat[select_alpha_star(&flat).unwrap()].alpha, 0.3);
        let mut bad = pts.clone();
        for p in &mut bad {
            p.status = Status::GapLimit;
        }
        assert!(select_alpha_star(&bad).is_err());
    }

    #[test]
    fn plateau_at_kink() {
        let etas = [90.0, 80.0, 70.0, 60.0, 60.0, 60.0];
        let pts: Vec<SweepPoint> = etas
            .iter()
            .enumerate()
            .map(|(i, &e)| synthetic(i as f64 / 10.0, e, e, if i >= 3 { 0.0 } else { 5.0 }))
            .collect();
        let d = diagnostics(&pts);
        assert_eq!(d.plateau_onset, Some(0.3));
        assert!(d.overall_nonincreasing);
        assert!(d.zero_local_generation);
        assert!(d.strict_savings);

        let two = vec![synthetic(0.0, 60.0, 1.0, 2.0), synthetic(0.1, 60.0, 1.0, 2.0)];
        let d = diagnostics(&two);
        assert_eq!(d.plateau_onset, Some(0.0));
        assert!(!d.zero_local_generation);
    }

    #[test]
    fn grids() {
        let g = default_grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[4], 0.2);
        assert_eq!(g[20], 1.0);
        assert!(validate_grid(&[0.2, 0.1]).is_err());
        assert!(validate_grid(&[0.1, 0.1]).is_err());
        assert!(validate_grid(&[0.5, 1.5]).is_err());
        assert_eq!(grid(0.0, 0.0, 0.1).unwrap(), vec![0.0]);
    }
}
