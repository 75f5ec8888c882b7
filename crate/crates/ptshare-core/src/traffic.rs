//! Tolled user-equilibrium constraint block, travel-time curves and Wardrop
//! verification on solved points.

use crate::error::{Error, Result};
use crate::linearization::{
    big_m_linearize, build_pwl, encode_fill_order, estimate_upper_m, BigMPair, FillBlock,
    LinExpr, PwlCurve,
};
use crate::milp::{Model, Sense};
use crate::network::{CoupledInstance, Evcs, GlobalParams, PathSet, Road, VehicleClass};

/// BPR travel time in hours.
pub fn bpr_time(x: f64, road: &Road) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("road {}: negative flow {x}", road.id)));
    }
    Ok(road.free_flow_time * (1.0 + 0.15 * (x / road.capacity).powi(4)))
}

/// Davidson service time in hours; defined up to the domain fraction of
/// capacity.
pub fn davidson_time(y: f64, evcs: &Evcs, params: &GlobalParams) -> Result<f64> {
    let bound = params.davidson_fraction * evcs.capacity;
    if !(y >= 0.0) || y > bound * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "evcs {}: flow {y} outside [0, {bound}]",
            evcs.id
        )));
    }
    Ok(davidson_raw(y, evcs, params.davidson_j))
}

fn davidson_raw(y: f64, evcs: &Evcs, j: f64) -> f64 {
    evcs.base_service_time * (1.0 + j * y / (evcs.capacity - y))
}

/// Charging load in MW for station flows in traffic p.u.
pub fn charging_load(y: &[f64], params: &GlobalParams) -> Result<Vec<f64>> {
    y.iter()
        .map(|&v| {
            if v >= 0.0 {
                Ok(v * params.mw_per_pu())
            } else {
                Err(Error::Domain(format!("negative station flow {v}")))
            }
        })
        .collect()
}

pub fn road_curve(road: &Road, n: usize) -> Result<PwlCurve> {
    build_pwl(|x| bpr_time(x, road), road.capacity, n)
}

pub fn station_curve(evcs: &Evcs, params: &GlobalParams, n: usize) -> Result<PwlCurve> {
    let hi = params.davidson_fraction * evcs.capacity;
    build_pwl(
        |y| {
            if y >= evcs.capacity {
                Err(Error::Domain(format!("evcs {}: Davidson curve singular at {y}", evcs.id)))
            } else {
                Ok(davidson_raw(y, evcs, params.davidson_j))
            }
        },
        hi,
        n,
    )
}

#[derive(Debug, Clone)]
pub struct UeOptions {
    /// Segments per travel-time curve.
    pub segments: usize,
    /// Add the valid inequality `Σ q·u ≥ Σ w` with `w` under tangents of
    /// the convex flow-times-cost curves; it is implied by the equilibrium
    /// identity and tightens relaxations.
    pub envelope_cut: bool,
    /// Scale applied to every complementarity M (used for the audit retry).
    pub m_scale: f64,
}

impl UeOptions {
    pub fn from_params(p: &GlobalParams) -> Self {
        UeOptions {
            segments: p.segments,
            envelope_cut: true,
            m_scale: 1.0,
        }
    }
}

/// Demand class with positive demand and its minimum-cost variable.
#[derive(Debug, Clone)]
pub struct DemandClass {
    pub od: usize,
    pub class: VehicleClass,
    pub demand: f64,
    pub u: usize,
    pub alts: Vec<usize>,
}

/// Variable map of the equilibrium block.
#[derive(Debug, Clone)]
pub struct UeBlock {
    pub f: Vec<usize>,
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub road_fill: Vec<FillBlock>,
    pub evcs_fill: Vec<FillBlock>,
    pub road_curves: Vec<PwlCurve>,
    pub evcs_curves: Vec<PwlCurve>,
    pub toll_road: Vec<usize>,
    pub toll_evcs: Vec<usize>,
    pub cost_road: Vec<usize>,
    pub cost_evcs: Vec<usize>,
    pub cost_path: Vec<usize>,
    pub classes: Vec<DemandClass>,
    pub p_evcs: Vec<usize>,
    pub pairs: Vec<BigMPair>,
    /// Γ in CNY/h as a linear expression (Σ base·q·u).
    pub gamma: LinExpr,
}

pub const PRIORITY_ROUTE: u8 = 2;
pub const PRIORITY_FILL: u8 = 1;

/// Adds the equilibrium system to `model` and returns its variable map.
pub fn assemble_ue_block(
    model: &mut Model,
    inst: &CoupledInstance,
    paths: &PathSet,
    opts: &UeOptions,
) -> Result<UeBlock> {
    let p = &inst.params;
    let omega = p.time_value;
    let n_seg = opts.segments;
    let safety = p.big_m_safety;
    let tmax = p.toll_max;

    let mut classes: Vec<DemandClass> = Vec::new();
    for (r, od) in inst.od_pairs.iter().enumerate() {
        for (class, q) in [(VehicleClass::Gv, od.gv_demand), (VehicleClass::Ev, od.ev_demand)] {
            if q > 0.0 {
                let alts = paths.of(r, class);
                if alts.is_empty() {
                    return Err(Error::Infeasible(format!(
                        "O-D pair {} has {} demand but no route",
                        od.id,
                        class.as_str()
                    )));
                }
                classes.push(DemandClass {
                    od: r,
                    class,
                    demand: q,
                    u: usize::MAX,
                    alts,
                });
            }
        }
    }
    let demand_of = |a: usize| {
        let alt = &paths.alts[a];
        let od = &inst.od_pairs[alt.od];
        match alt.class {
            VehicleClass::Gv => od.gv_demand,
            VehicleClass::Ev => od.ev_demand,
        }
    };

    let f = paths
        .alts
        .iter()
        .map(|a| model.cont(format!("f{}", a.id + 1), 0.0, demand_of(a.id)))
        .collect::<Result<Vec<_>>>()?;
    let x = inst
        .roads
        .iter()
        .map(|r| model.cont(format!("x{}", r.id), 0.0, r.capacity))
        .collect::<Result<Vec<_>>>()?;
    let y = inst
        .evcs
        .iter()
        .map(|e| model.cont(format!("y{}", e.id), 0.0, p.davidson_fraction * e.capacity))
        .collect::<Result<Vec<_>>>()?;

    for c in &classes {
        let od = &inst.od_pairs[c.od];
        let row: Vec<(usize, f64)> = c.alts.iter().map(|&a| (f[a], 1.0)).collect();
        model.add_constraint(
            format!("demand_{}_{}", od.id, c.class.as_str()),
            &row,
            Sense::Eq,
            c.demand,
        )?;
    }
    for (k, r) in inst.roads.iter().enumerate() {
        let mut row = vec![(x[k], -1.0)];
        row.extend(paths.through_road(k).into_iter().map(|a| (f[a], 1.0)));
        model.add_constraint(format!("road_flow{}", r.id), &row, Sense::Eq, 0.0)?;
    }
    for (m, e) in inst.evcs.iter().enumerate() {
        let mut row = vec![(y[m], -1.0)];
        row.extend(paths.at_station(m).into_iter().map(|a| (f[a], 1.0)));
        model.add_constraint(format!("evcs_flow{}", e.id), &row, Sense::Eq, 0.0)?;
    }

    let mut road_fill = Vec::new();
    let mut road_curves = Vec::new();
    for (k, r) in inst.roads.iter().enumerate() {
        let c = road_curve(r, n_seg)?;
        road_fill.push(encode_fill_order(model, &format!("r{}", r.id), x[k], &c, safety, PRIORITY_FILL)?);
        road_curves.push(c);
    }
    let mut evcs_fill = Vec::new();
    let mut evcs_curves = Vec::new();
    for (m, e) in inst.evcs.iter().enumerate() {
        let c = station_curve(e, p, n_seg)?;
        evcs_fill.push(encode_fill_order(model, &format!("s{}", e.id), y[m], &c, safety, PRIORITY_FILL)?);
        evcs_curves.push(c);
    }

    let toll_road = inst
        .roads
        .iter()
        .map(|r| model.cont(format!("toll_r{}", r.id), 0.0, tmax))
        .collect::<Result<Vec<_>>>()?;
    let toll_evcs = inst
        .evcs
        .iter()
        .map(|e| model.cont(format!("fee_s{}", e.id), 0.0, tmax))
        .collect::<Result<Vec<_>>>()?;

    let mut cost_road = Vec::new();
    for (k, r) in inst.roads.iter().enumerate() {
        let c = &road_curves[k];
        let lo = omega * c.intercept();
        let hi = omega * c.values[c.segments()] + tmax;
        let v = model.cont(format!("cost_r{}", r.id), lo, hi)?;
        model.add_constraint(
            format!("cost_road{}", r.id),
            &[(v, 1.0), (road_fill[k].value, -omega), (toll_road[k], -1.0)],
            Sense::Eq,
            0.0,
        )?;
        cost_road.push(v);
    }
    let mut cost_evcs = Vec::new();
    for (m, e) in inst.evcs.iter().enumerate() {
        let c = &evcs_curves[m];
        let energy = e.charging_price * p.battery_kwh;
        let lo = omega * c.intercept() + energy;
        let hi = omega * c.values[c.segments()] + energy + tmax;
        let v = model.cont(format!("cost_s{}", e.id), lo, hi)?;
        model.add_constraint(
            format!("cost_evcs{}", e.id),
            &[(v, 1.0), (evcs_fill[m].value, -omega), (toll_evcs[m], -1.0)],
            Sense::Eq,
            energy,
        )?;
        cost_evcs.push(v);
    }

    let lo_of = |m: &Model, v: usize| m.vars[v].lower;
    let hi_of = |m: &Model, v: usize| m.vars[v].upper;
    let mut cost_path = Vec::new();
    for a in &paths.alts {
        let mut terms: Vec<usize> = a.roads.iter().map(|&r| cost_road[r]).collect();
        if let Some(m) = a.evcs {
            terms.push(cost_evcs[m]);
        }
        let lo: f64 = terms.iter().map(|&v| lo_of(model, v)).sum();
        let hi: f64 = terms.iter().map(|&v| hi_of(model, v)).sum();
        let v = model.cont(format!("cost_p{}", a.id + 1), lo, hi)?;
        let mut row = vec![(v, 1.0)];
        row.extend(terms.iter().map(|&t| (t, -1.0)));
        model.add_constraint(format!("cost_path{}", a.id + 1), &row, Sense::Eq, 0.0)?;
        cost_path.push(v);
    }

    let mut pairs = Vec::new();
    let mut gamma_terms = Vec::new();
    for c in classes.iter_mut() {
        let od = &inst.od_pairs[c.od];
        let lo = c
            .alts
            .iter()
            .map(|&a| lo_of(model, cost_path[a]))
            .fold(f64::INFINITY, f64::min);
        let hi = c
            .alts
            .iter()
            .map(|&a| hi_of(model, cost_path[a]))
            .fold(f64::INFINITY, f64::min);
        let u = model.cont(format!("u_{}_{}", od.id, c.class.as_str()), lo, hi)?;
        c.u = u;
        gamma_terms.push((u, c.demand * p.traffic_base));
        for &a in &c.alts {
            let fe = LinExpr::new(vec![(f[a], 1.0)], 0.0);
            let ge = LinExpr::new(vec![(cost_path[a], 1.0), (u, -1.0)], 0.0);
            let (vlo, vhi) = bounds(model);
            let m_f = opts.m_scale * estimate_upper_m(&fe, &vlo, &vhi, safety)?;
            let m_g = opts.m_scale * estimate_upper_m(&ge, &vlo, &vhi, safety)?;
            pairs.push(big_m_linearize(
                model,
                &format!("route{}", a + 1),
                fe,
                ge,
                m_f,
                m_g,
                PRIORITY_ROUTE,
            )?);
        }
    }

    let mw = p.mw_per_pu();
    let p_evcs = inst
        .evcs
        .iter()
        .enumerate()
        .map(|(m, e)| {
            let v = model.cont(format!("pev{}", e.id), 0.0, p.davidson_fraction * e.capacity * mw)?;
            model.add_constraint(format!("load{}", e.id), &[(v, 1.0), (y[m], -mw)], Sense::Eq, 0.0)?;
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;

    if opts.envelope_cut {
        let mut ws = Vec::new();
        for (k, r) in inst.roads.iter().enumerate() {
            ws.push(envelope(model, &format!("env_r{}", r.id), x[k], &road_curves[k], omega, 0.0)?);
        }
        for (m, e) in inst.evcs.iter().enumerate() {
            let energy = e.charging_price * p.battery_kwh;
            ws.push(envelope(model, &format!("env_s{}", e.id), y[m], &evcs_curves[m], omega, energy)?);
        }
        let mut row: Vec<(usize, f64)> = classes.iter().map(|c| (c.u, c.demand)).collect();
        row.extend(ws.iter().map(|&w| (w, -1.0)));
        model.add_constraint("envelope", &row, Sense::Ge, 0.0)?;
    }

    Ok(UeBlock {
        f,
        x,
        y,
        road_fill,
        evcs_fill,
        road_curves,
        evcs_curves,
        toll_road,
        toll_evcs,
        cost_road,
        cost_evcs,
        cost_path,
        classes,
        p_evcs,
        pairs,
        gamma: LinExpr::new(gamma_terms, 0.0),
    })
}

fn bounds(model: &Model) -> (Vec<f64>, Vec<f64>) {
    (
        model.vars.iter().map(|v| v.lower).collect(),
        model.vars.iter().map(|v| v.upper).collect(),
    )
}

/// `w ≥` tangents of `g(x) = ω·x·f̂(x) + extra·x` at 4N+1 points, using the
/// right derivative (left at the upper end). `g` is convex since `f̂` is
/// nondecreasing, nonnegative and convex.
fn envelope(
    model: &mut Model,
    name: &str,
    flow: usize,
    curve: &PwlCurve,
    omega: f64,
    extra: f64,
) -> Result<usize> {
    let hi = curve.upper();
    let g = |v: f64| omega * v * curve.eval(v) + extra * v;
    let w = model.cont(name, f64::NEG_INFINITY, f64::INFINITY)?;
    let pts = 4 * curve.segments() + 1;
    for i in 0..pts {
        let p0 = hi * i as f64 / (pts - 1) as f64;
        let h = 1e-7 * hi;
        let d = if p0 < hi {
            let p1 = (p0 + h).min(hi);
            (g(p1) - g(p0)) / (p1 - p0)
        } else {
            (g(hi) - g(hi - h)) / h
        };
        model.add_constraint(
            format!("{name}_{}", i + 1),
            &[(w, 1.0), (flow, -d)],
            Sense::Ge,
            g(p0) - d * p0,
        )?;
    }
    Ok(w)
}

/// Equilibrium quantities read off a solved point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficDecision {
    pub x: Vec<f64>,
    pub x_gv: Vec<f64>,
    pub x_ev: Vec<f64>,
    pub y: Vec<f64>,
    /// Alternative flows, indexed like `PathSet::alts`.
    pub f: Vec<f64>,
    /// Hours.
    pub t_road: Vec<f64>,
    pub t_evcs: Vec<f64>,
    pub cost_road: Vec<f64>,
    pub cost_evcs: Vec<f64>,
    pub cost_path: Vec<f64>,
    /// `(od, class, u)` per class with positive demand.
    pub u: Vec<(usize, VehicleClass, f64)>,
    pub toll_road: Vec<f64>,
    pub toll_evcs: Vec<f64>,
    /// MW.
    pub p_evcs: Vec<f64>,
    /// CNY/h.
    pub gamma: f64,
}

impl UeBlock {
    pub fn extract(&self, values: &[f64], inst: &CoupledInstance, paths: &PathSet) -> TrafficDecision {
        let get = |v: &[usize]| v.iter().map(|&j| values[j]).collect::<Vec<f64>>();
        let f = get(&self.f);
        let mut x_gv = vec![0.0; inst.roads.len()];
        let mut x_ev = vec![0.0; inst.roads.len()];
        for (a, alt) in paths.alts.iter().enumerate() {
            for &r in &alt.roads {
                match alt.class {
                    VehicleClass::Gv => x_gv[r] += f[a],
                    VehicleClass::Ev => x_ev[r] += f[a],
                }
            }
        }
        TrafficDecision {
            x: get(&self.x),
            x_gv,
            x_ev,
            y: get(&self.y),
            f,
            t_road: self.road_fill.iter().map(|b| values[b.value]).collect(),
            t_evcs: self.evcs_fill.iter().map(|b| values[b.value]).collect(),
            cost_road: get(&self.cost_road),
            cost_evcs: get(&self.cost_evcs),
            cost_path: get(&self.cost_path),
            u: self
                .classes
                .iter()
                .map(|c| (c.od, c.class, values[c.u]))
                .collect(),
            toll_road: get(&self.toll_road),
            toll_evcs: get(&self.toll_evcs),
            p_evcs: get(&self.p_evcs),
            gamma: self.gamma.eval(values),
        }
    }

    /// Binary values implied by the continuous part of `values`: fill
    /// switches from the proper fill of each flow.
    pub fn fill_switches(&self, values: &[f64], out: &mut [f64]) {
        for (b, c) in self.road_fill.iter().zip(&self.road_curves) {
            for (&z, v) in b.switches.iter().zip(c.switches(values[b.flow])) {
                out[z] = v;
            }
        }
        for (b, c) in self.evcs_fill.iter().zip(&self.evcs_curves) {
            for (&z, v) in b.switches.iter().zip(c.switches(values[b.flow])) {
                out[z] = v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WardropViolation {
    pub alt: usize,
    pub flow: f64,
    pub cost: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WardropReport {
    pub violations: Vec<WardropViolation>,
    /// Σ C·x·base over roads and stations.
    pub gamma_primal: f64,
    /// Σ u·q·base over demand classes.
    pub gamma_dual: f64,
    pub identity_ok: bool,
}

impl WardropReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.identity_ok
    }
}

/// Checks used routes against the minimum cost of their class, every route
/// against `u − tol`, and the two expressions of Γ against each other.
pub fn verify_wardrop(
    dec: &TrafficDecision,
    inst: &CoupledInstance,
    paths: &PathSet,
    tol: f64,
) -> WardropReport {
    let base = inst.params.traffic_base;
    let mut violations = Vec::new();
    for (a, alt) in paths.alts.iter().enumerate() {
        let u = dec
            .u
            .iter()
            .find(|(od, class, _)| *od == alt.od && *class == alt.class)
            .map(|t| t.2);
        let u = match u {
            Some(u) => u,
            None => continue,
        };
        let cost = dec.cost_path[a];
        let flow = dec.f[a];
        if (flow > tol && (cost - u).abs() > tol) || cost < u - tol {
            violations.push(WardropViolation { alt: a, flow, cost, u });
        }
    }
    let gamma_primal = base
        * (dec.cost_road.iter().zip(&dec.x).map(|(c, x)| c * x).sum::<f64>()
            + dec.cost_evcs.iter().zip(&dec.y).map(|(c, y)| c * y).sum::<f64>());
    let gamma_dual = base
        * dec
            .u
            .iter()
            .map(|(od, class, u)| {
                let o = &inst.od_pairs[*od];
                u * match class {
                    VehicleClass::Gv => o.gv_demand,
                    VehicleClass::Ev => o.ev_demand,
                }
            })
            .sum::<f64>();
    let identity_ok = (gamma_primal - gamma_dual).abs() <= tol * gamma_dual.abs().max(1.0);
    WardropReport {
        violations,
        gamma_primal,
        gamma_dual,
        identity_ok,
    }
}
