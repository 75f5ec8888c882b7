#![allow(dead_code)]

use ptshare_core::milp::{Model, Sense};
use ptshare_core::network::{load_instance, parse_instance, CoupledInstance, PathSet, VehicleClass};
use ptshare_core::traffic::{road_curve, station_curve, TrafficDecision};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub fn bundled_path() -> String {
    format!("{}/../../data/coupled_12node_18bus.json", env!("CARGO_MANIFEST_DIR"))
}

pub fn bundled() -> CoupledInstance {
    load_instance(bundled_path()).unwrap()
}

/// Small connected instance: a chain 1 → 2 → ... → n plus random forward
/// shortcuts, up to three O-D pairs, one or two stations strictly between
/// the EV origin and destination, and a three-bus feeder.
pub fn random_instance(seed: u64) -> CoupledInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = rng.gen_range(4..=8);
    let mut roads = Vec::new();
    let push = |roads: &mut Vec<serde_json::Value>, a: usize, b: usize, t0: f64, c: f64| {
        let id = roads.len() + 1;
        roads.push(json!({"id": id, "from": a, "to": b, "free_flow_time_min": t0, "capacity_pu": c}));
    };
    for i in 1..n {
        let t0 = rng.gen_range(5.0..15.0);
        push(&mut roads, i, i + 1, t0, 20.0);
    }
    let extra = rng.gen_range(1..=n);
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..extra {
        let a = rng.gen_range(1..n - 1);
        let b = rng.gen_range(a + 2..=n);
        if seen.insert((a, b)) {
            let t0 = rng.gen_range(8.0..30.0);
            let c = rng.gen_range(10.0..25.0);
            push(&mut roads, a, b, t0, c);
        }
    }
    let n_st = rng.gen_range(1..=2usize);
    let mut evcs = Vec::new();
    let mut coupling = Vec::new();
    let mut st_nodes = std::collections::BTreeSet::new();
    while st_nodes.len() < n_st.min(n - 2) {
        st_nodes.insert(rng.gen_range(2..n));
    }
    for (i, &node) in st_nodes.iter().enumerate() {
        evcs.push(json!({"id": i + 1, "node": node, "base_service_time_min": rng.gen_range(15.0..30.0),
                         "capacity_pu": 12.0, "charging_price_cny_per_kwh": 0.6}));
        coupling.push(json!({"evcs": i + 1, "bus": 2 + (i % 2)}));
    }
    let mut ods = vec![json!({"id": 1, "origin": 1, "destination": n,
                              "gv_demand_pu": 0.0, "ev_demand_pu": rng.gen_range(1.0..6.0)})];
    let n_od = rng.gen_range(1..=3usize);
    for k in 1..n_od {
        let o = rng.gen_range(1..n);
        let d = rng.gen_range(o + 1..=n);
        ods.push(json!({"id": k + 1, "origin": o, "destination": d,
                        "gv_demand_pu": rng.gen_range(1.0..8.0), "ev_demand_pu": 0.0}));
    }
    let doc = json!({
        "name": format!("random-{seed}"),
        "traffic": {"nodes": (1..=n).collect::<Vec<_>>(), "roads": roads, "evcs": evcs, "od_pairs": ods},
        "power": {
            "buses": [{"id": 1}, {"id": 2, "traditional_demand_mw": rng.gen_range(5.0..30.0)},
                      {"id": 3, "traditional_demand_mw": rng.gen_range(5.0..30.0)}],
            "lines": [{"id": 1, "from": 1, "to": 2, "reactance_pu": 0.1, "flow_limit_mw": rng.gen_range(30.0..200.0)},
                      {"id": 2, "from": 2, "to": 3, "reactance_pu": 0.1, "flow_limit_mw": 200.0}],
            "generators": [{"id": 1, "bus": 3, "a_cny_per_mw2h": 5.2, "b_cny_per_mwh": 200.0,
                            "c_cny_per_h": 300.0, "p_min_mw": 0.0, "p_max_mw": 120.0}],
            "substation": {"bus": 1, "price_cny_per_mwh": 400.0, "import_max_mw": 300.0}
        },
        "coupling": coupling,
        "params": {"time_value_cny_per_h": 100.0, "battery_kwh": 100.0, "davidson_j": 0.15,
                   "traffic_base_veh_per_h": 100.0, "power_base_mva": 100.0, "toll_max_cny": 100.0,
                   "paths_k": 3}
    });
    parse_instance(&doc.to_string()).unwrap()
}

/// Route costs recomputed from flows, curves and tolls, independent of the
/// cost variables in the model.
pub fn recomputed_path_costs(dec: &TrafficDecision, inst: &CoupledInstance, paths: &PathSet) -> Vec<f64> {
    let p = &inst.params;
    let road: Vec<f64> = inst
        .roads
        .iter()
        .enumerate()
        .map(|(r, rd)| p.time_value * road_curve(rd, p.segments).unwrap().eval(dec.x[r]) + dec.toll_road[r])
        .collect();
    let station: Vec<f64> = inst
        .evcs
        .iter()
        .enumerate()
        .map(|(s, e)| {
            p.time_value * station_curve(e, p, p.segments).unwrap().eval(dec.y[s])
                + e.charging_price * p.battery_kwh
                + dec.toll_evcs[s]
        })
        .collect();
    paths
        .alts
        .iter()
        .map(|a| a.roads.iter().map(|&r| road[r]).sum::<f64>() + a.evcs.map_or(0.0, |s| station[s]))
        .collect()
}

/// Largest violation of the equilibrium conditions measured on recomputed
/// costs: used routes must be cheapest within their class.
pub fn wardrop_violation(dec: &TrafficDecision, inst: &CoupledInstance, paths: &PathSet) -> f64 {
    let cost = recomputed_path_costs(dec, inst, paths);
    let mut worst = 0.0f64;
    for (o, _) in inst.od_pairs.iter().enumerate() {
        for class in [VehicleClass::Gv, VehicleClass::Ev] {
            let alts = paths.of(o, class);
            if alts.is_empty() {
                continue;
            }
            let min = alts.iter().map(|&a| cost[a]).fold(f64::INFINITY, f64::min);
            for &a in &alts {
                if dec.f[a] > 1e-6 {
                    worst = worst.max(cost[a] - min);
                }
            }
        }
    }
    worst
}

/// Three-bus feeder: substation at bus 1, one station load at bus 2, one
/// generator at bus 3.
pub fn feeder(d2: f64, d3: f64, l1: f64, l2: f64) -> CoupledInstance {
    let doc = json!({
        "traffic": {
            "nodes": [1, 2],
            "roads": [{"id": 1, "from": 1, "to": 2, "free_flow_time_min": 10.0, "capacity_pu": 20.0}],
            "evcs": [{"id": 1, "node": 2, "base_service_time_min": 20.0, "capacity_pu": 12.0,
                      "charging_price_cny_per_kwh": 0.6}],
            "od_pairs": [{"id": 1, "origin": 1, "destination": 2, "gv_demand_pu": 1.0, "ev_demand_pu": 0.0}]
        },
        "power": {
            "buses": [{"id": 1}, {"id": 2, "traditional_demand_mw": d2}, {"id": 3, "traditional_demand_mw": d3}],
            "lines": [{"id": 1, "from": 1, "to": 2, "reactance_pu": 0.1, "flow_limit_mw": l1},
                      {"id": 2, "from": 2, "to": 3, "reactance_pu": 0.1, "flow_limit_mw": l2}],
            "generators": [{"id": 1, "bus": 3, "a_cny_per_mw2h": 5.2, "b_cny_per_mwh": 200.0,
                            "c_cny_per_h": 300.0, "p_min_mw": 0.0, "p_max_mw": 120.0}],
            "substation": {"bus": 1, "price_cny_per_mwh": 400.0, "import_max_mw": 300.0}
        },
        "coupling": [{"evcs": 1, "bus": 2}],
        "params": {"time_value_cny_per_h": 100.0, "battery_kwh": 100.0, "davidson_j": 0.15,
                   "traffic_base_veh_per_h": 100.0, "power_base_mva": 100.0}
    });
    parse_instance(&doc.to_string()).unwrap()
}

/// Minimum dispatch cost of the three-bus feeder by enumerating the
/// breakpoints of the convex cost in the generator output.
pub fn feeder_oracle(d2: f64, d3: f64, pev: f64, l1: f64, l2: f64) -> Option<f64> {
    let cost = |p: f64| 5.2 * p * p + 200.0 * p + 300.0;
    let knots = [0.0, 40.0, 80.0, 120.0];
    let f = |p: f64| {
        knots
            .windows(2)
            .map(|w| {
                let k = (cost(w[1]) - cost(w[0])) / (w[1] - w[0]);
                cost(w[0]) + k * (p - w[0])
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let total = d2 + pev + d3;
    let lo = [0.0, d3 - l2, total - l1, total - 300.0].into_iter().fold(f64::NEG_INFINITY, f64::max);
    let hi = [120.0, d3 + l2, total + l1, total].into_iter().fold(f64::INFINITY, f64::min);
    if lo > hi + 1e-9 {
        return None;
    }
    [lo, hi, 40.0, 80.0]
        .into_iter()
        .filter(|&p| p >= lo - 1e-12 && p <= hi + 1e-12)
        .map(|p| f(p) + 400.0 * (total - p))
        .reduce(f64::min)
}

/// Random MILP with at most 12 binaries and 8 continuous variables.
pub fn random_milp(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Model::new(format!("rand{seed}"));
    let nb = rng.gen_range(1..=12);
    let nc = rng.gen_range(1..=8);
    let mut vars = Vec::new();
    for k in 0..nc {
        let lo = if rng.gen_bool(0.3) { -10.0 } else { 0.0 };
        let hi = rng.gen_range(1..=20) as f64;
        vars.push(m.cont(format!("x{k}"), lo, hi).unwrap());
    }
    for k in 0..nb {
        vars.push(m.binary(format!("z{k}"), rng.gen_range(0..2)).unwrap());
    }
    let rows = rng.gen_range(2..=10);
    for r in 0..rows {
        let mut coeffs = Vec::new();
        for &v in &vars {
            if rng.gen_bool(0.45) {
                let a: i32 = rng.gen_range(-6..=6);
                coeffs.push((v, a as f64 + if rng.gen_bool(0.3) { 0.5 } else { 0.0 }));
            }
        }
        let sense = match rng.gen_range(0..10) {
            0 => Sense::Eq,
            1..=5 => Sense::Le,
            _ => Sense::Ge,
        };
        let rhs = rng.gen_range(-15..=15) as f64;
        m.add_constraint(format!("r{r}"), &coeffs, sense, rhs).unwrap();
    }
    for &v in &vars {
        let c: i32 = rng.gen_range(-9..=9);
        m.set_objective(v, c as f64 + rng.gen_range(0.0..1.0));
    }
    m
}
