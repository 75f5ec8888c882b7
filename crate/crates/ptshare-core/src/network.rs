//! Instance data for the coupled traffic / distribution system, JSON
//! ingestion with validation, and route enumeration.
//!
//! Internal units: traffic in p.u. of the traffic base, power in MW, time in
//! hours, money in CNY. File fields carry their unit in the name
//! (`free_flow_time_min`, `capacity_pu`, ...) and are converted on load.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub id: usize,
    /// Node indices (positions in `CoupledInstance::nodes`).
    pub tail: usize,
    pub head: usize,
    /// Hours.
    pub free_flow_time: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evcs {
    pub id: usize,
    pub node: usize,
    /// Bus index.
    pub bus: usize,
    /// Hours.
    pub base_service_time: f64,
    pub capacity: f64,
    /// CNY per kWh.
    pub charging_price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdPair {
    pub id: usize,
    pub origin: usize,
    pub destination: usize,
    pub gv_demand: f64,
    pub ev_demand: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VehicleClass {
    Gv,
    Ev,
}

impl VehicleClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            VehicleClass::Gv => "GV",
            VehicleClass::Ev => "EV",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    /// MW.
    pub traditional_demand: f64,
    pub angle_min: f64,
    pub angle_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub reactance: f64,
    /// MW.
    pub flow_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    /// CNY/(MW²h), CNY/MWh, CNY/h.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Substation {
    pub bus: usize,
    /// CNY/MWh.
    pub price: f64,
    pub import_min: f64,
    pub import_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalParams {
    /// ω, CNY/h.
    pub time_value: f64,
    /// E_B, kWh per charge.
    pub battery_kwh: f64,
    /// Davidson J.
    pub davidson_j: f64,
    /// Vehicles per hour in one traffic p.u.
    pub traffic_base: f64,
    /// MVA.
    pub power_base: f64,
    /// Segments per travel-time curve.
    pub segments: usize,
    /// Segments per generator cost curve.
    pub cost_segments: usize,
    /// Station flow is bounded by this fraction of capacity.
    pub davidson_fraction: f64,
    /// Multiplier applied to interval bounds when sizing big-M constants.
    pub big_m_safety: f64,
    /// Upper bound on each toll and entry fee, CNY.
    pub toll_max: f64,
    /// Routes kept per O-D pair and class (per station for EVs).
    pub paths_k: usize,
    /// Dual multipliers of the dispatch LP are boxed by this factor times
    /// the steepest cost slope.
    pub dual_bound_factor: f64,
}

impl GlobalParams {
    /// MW drawn by one traffic p.u. of charging vehicles.
    pub fn mw_per_pu(&self) -> f64 {
        self.traffic_base * self.battery_kwh / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledInstance {
    pub name: String,
    /// External node ids; roads and stations refer to positions in this list.
    pub nodes: Vec<usize>,
    pub roads: Vec<Road>,
    pub evcs: Vec<Evcs>,
    pub od_pairs: Vec<OdPair>,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub substation: Substation,
    pub params: GlobalParams,
}

// ---- file schema ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(default)]
    pub name: String,
    pub traffic: TrafficSection,
    pub power: PowerSection,
    pub coupling: Vec<CouplingEntry>,
    pub params: ParamsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    pub nodes: Vec<usize>,
    pub roads: Vec<RoadEntry>,
    pub evcs: Vec<EvcsEntry>,
    pub od_pairs: Vec<OdEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadEntry {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub free_flow_time_min: f64,
    pub capacity_pu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvcsEntry {
    pub id: usize,
    pub node: usize,
    pub base_service_time_min: f64,
    pub capacity_pu: f64,
    pub charging_price_cny_per_kwh: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdEntry {
    pub id: usize,
    pub origin: usize,
    pub destination: usize,
    pub gv_demand_pu: f64,
    pub ev_demand_pu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    pub buses: Vec<BusEntry>,
    pub lines: Vec<LineEntry>,
    pub generators: Vec<GeneratorEntry>,
    pub substation: SubstationEntry,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusEntry {
    pub id: usize,
    #[serde(default)]
    pub traditional_demand_mw: f64,
    #[serde(default = "neg_pi")]
    pub angle_min_rad: f64,
    #[serde(default = "pos_pi")]
    pub angle_max_rad: f64,
}

fn neg_pi() -> f64 {
    -std::f64::consts::PI
}
fn pos_pi() -> f64 {
    std::f64::consts::PI
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineEntry {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub reactance_pu: f64,
    pub flow_limit_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorEntry {
    pub id: usize,
    pub bus: usize,
    pub a_cny_per_mw2h: f64,
    pub b_cny_per_mwh: f64,
    pub c_cny_per_h: f64,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstationEntry {
    pub bus: usize,
    pub price_cny_per_mwh: f64,
    #[serde(default)]
    pub import_min_mw: f64,
    /// Defaults to the total demand ceiling: traditional demand plus every
    /// station charging at its flow bound.
    #[serde(default)]
    pub import_max_mw: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub evcs: usize,
    pub bus: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub time_value_cny_per_h: f64,
    pub battery_kwh: f64,
    pub davidson_j: f64,
    pub traffic_base_veh_per_h: f64,
    pub power_base_mva: f64,
    #[serde(default = "default_segments")]
    pub segments_n: usize,
    #[serde(default = "default_cost_segments")]
    pub cost_segments: usize,
    #[serde(default = "default_fraction")]
    pub davidson_fraction: f64,
    #[serde(default = "default_safety")]
    pub big_m_safety: f64,
    /// Defaults to 10·ω·(longest free-flow route time).
    #[serde(default)]
    pub toll_max_cny: Option<f64>,
    #[serde(default = "default_k")]
    pub paths_k: usize,
    #[serde(default = "default_dual_factor")]
    pub dual_bound_factor: f64,
}

fn default_segments() -> usize {
    5
}
fn default_cost_segments() -> usize {
    3
}
fn default_fraction() -> f64 {
    0.95
}
fn default_safety() -> f64 {
    1.1
}
fn default_k() -> usize {
    6
}
fn default_dual_factor() -> f64 {
    2.0
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<CoupledInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_instance(&text)
}

pub fn parse_instance(text: &str) -> Result<CoupledInstance> {
    let file: InstanceFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    CoupledInstance::from_file(&file)
}

fn index_of(
    map: &HashMap<usize, usize>,
    id: usize,
    entity: &'static str,
    owner: usize,
    field: &'static str,
    target: &str,
) -> Result<usize> {
    map.get(&id)
        .copied()
        .ok_or_else(|| Error::invalid(entity, owner, field, format!("unknown {target} {id}")))
}

fn positive(v: f64, entity: &'static str, id: usize, field: &'static str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(entity, id, field, format!("must be positive, got {v}")))
    }
}

fn nonneg(v: f64, entity: &'static str, id: usize, field: &'static str) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(entity, id, field, format!("must be nonnegative, got {v}")))
    }
}

fn unique_ids<'a>(
    ids: impl Iterator<Item = &'a usize>,
    entity: &'static str,
) -> Result<HashMap<usize, usize>> {
    let mut map = HashMap::new();
    for (k, &id) in ids.enumerate() {
        if map.insert(id, k).is_some() {
            return Err(Error::invalid(entity, id, "id", "duplicate id"));
        }
    }
    Ok(map)
}

impl CoupledInstance {
    pub fn from_file(f: &InstanceFile) -> Result<CoupledInstance> {
        let t = &f.traffic;
        let p = &f.power;
        let node_ix = unique_ids(t.nodes.iter(), "node")?;
        let bus_ix = unique_ids(p.buses.iter().map(|b| &b.id), "bus")?;
        unique_ids(t.roads.iter().map(|r| &r.id), "road")?;
        let evcs_ix = unique_ids(t.evcs.iter().map(|e| &e.id), "evcs")?;
        unique_ids(t.od_pairs.iter().map(|o| &o.id), "od_pair")?;
        unique_ids(p.lines.iter().map(|l| &l.id), "line")?;
        unique_ids(p.generators.iter().map(|g| &g.id), "generator")?;

        let pr = &f.params;
        let pid = 0;
        positive(pr.time_value_cny_per_h, "params", pid, "time_value_cny_per_h")?;
        positive(pr.battery_kwh, "params", pid, "battery_kwh")?;
        positive(pr.davidson_j, "params", pid, "davidson_j")?;
        positive(pr.traffic_base_veh_per_h, "params", pid, "traffic_base_veh_per_h")?;
        positive(pr.power_base_mva, "params", pid, "power_base_mva")?;
        positive(pr.big_m_safety, "params", pid, "big_m_safety")?;
        positive(pr.dual_bound_factor, "params", pid, "dual_bound_factor")?;
        if pr.big_m_safety < 1.0 {
            return Err(Error::invalid("params", pid, "big_m_safety", "must be at least 1"));
        }
        if pr.segments_n < 2 {
            return Err(Error::invalid("params", pid, "segments_n", "must be at least 2"));
        }
        if pr.cost_segments < 1 {
            return Err(Error::invalid("params", pid, "cost_segments", "must be at least 1"));
        }
        if pr.paths_k < 1 {
            return Err(Error::invalid("params", pid, "paths_k", "must be at least 1"));
        }
        if !(pr.davidson_fraction > 0.0 && pr.davidson_fraction < 1.0) {
            return Err(Error::invalid(
                "params",
                pid,
                "davidson_fraction",
                "must lie in (0, 1)",
            ));
        }

        let mut roads = Vec::with_capacity(t.roads.len());
        for r in &t.roads {
            let tail = index_of(&node_ix, r.from, "road", r.id, "from", "node")?;
            let head = index_of(&node_ix, r.to, "road", r.id, "to", "node")?;
            if tail == head {
                return Err(Error::invalid("road", r.id, "to", "tail and head coincide"));
            }
            positive(r.free_flow_time_min, "road", r.id, "free_flow_time_min")?;
            positive(r.capacity_pu, "road", r.id, "capacity_pu")?;
            roads.push(Road {
                id: r.id,
                tail,
                head,
                free_flow_time: r.free_flow_time_min / 60.0,
                capacity: r.capacity_pu,
            });
        }

        let mut coupling: BTreeMap<usize, usize> = BTreeMap::new();
        for c in &f.coupling {
            if !evcs_ix.contains_key(&c.evcs) {
                return Err(Error::invalid("coupling", c.evcs, "evcs", "unknown EVCS"));
            }
            let b = index_of(&bus_ix, c.bus, "evcs", c.evcs, "bus", "bus")?;
            if coupling.insert(c.evcs, b).is_some() {
                return Err(Error::invalid("evcs", c.evcs, "bus", "coupled to more than one bus"));
            }
        }
        let mut evcs = Vec::with_capacity(t.evcs.len());
        for e in &t.evcs {
            let node = index_of(&node_ix, e.node, "evcs", e.id, "node", "node")?;
            let bus = *coupling
                .get(&e.id)
                .ok_or_else(|| Error::invalid("evcs", e.id, "bus", "missing coupling entry"))?;
            positive(e.base_service_time_min, "evcs", e.id, "base_service_time_min")?;
            positive(e.capacity_pu, "evcs", e.id, "capacity_pu")?;
            nonneg(e.charging_price_cny_per_kwh, "evcs", e.id, "charging_price_cny_per_kwh")?;
            evcs.push(Evcs {
                id: e.id,
                node,
                bus,
                base_service_time: e.base_service_time_min / 60.0,
                capacity: e.capacity_pu,
                charging_price: e.charging_price_cny_per_kwh,
            });
        }

        let mut od_pairs = Vec::with_capacity(t.od_pairs.len());
        for o in &t.od_pairs {
            let origin = index_of(&node_ix, o.origin, "od_pair", o.id, "origin", "node")?;
            let destination =
                index_of(&node_ix, o.destination, "od_pair", o.id, "destination", "node")?;
            if origin == destination {
                return Err(Error::invalid(
                    "od_pair",
                    o.id,
                    "destination",
                    "origin and destination coincide",
                ));
            }
            nonneg(o.gv_demand_pu, "od_pair", o.id, "gv_demand_pu")?;
            nonneg(o.ev_demand_pu, "od_pair", o.id, "ev_demand_pu")?;
            od_pairs.push(OdPair {
                id: o.id,
                origin,
                destination,
                gv_demand: o.gv_demand_pu,
                ev_demand: o.ev_demand_pu,
            });
        }

        let mut buses = Vec::with_capacity(p.buses.len());
        for b in &p.buses {
            nonneg(b.traditional_demand_mw, "bus", b.id, "traditional_demand_mw")?;
            if !(b.angle_min_rad.is_finite()
                && b.angle_max_rad.is_finite()
                && b.angle_min_rad < b.angle_max_rad)
            {
                return Err(Error::invalid("bus", b.id, "angle_max_rad", "angle bounds must be ordered"));
            }
            buses.push(Bus {
                id: b.id,
                traditional_demand: b.traditional_demand_mw,
                angle_min: b.angle_min_rad,
                angle_max: b.angle_max_rad,
            });
        }
        let mut lines = Vec::with_capacity(p.lines.len());
        for l in &p.lines {
            let from = index_of(&bus_ix, l.from, "line", l.id, "from", "bus")?;
            let to = index_of(&bus_ix, l.to, "line", l.id, "to", "bus")?;
            if from == to {
                return Err(Error::invalid("line", l.id, "to", "line connects a bus to itself"));
            }
            positive(l.reactance_pu, "line", l.id, "reactance_pu")?;
            positive(l.flow_limit_mw, "line", l.id, "flow_limit_mw")?;
            lines.push(Line {
                id: l.id,
                from,
                to,
                reactance: l.reactance_pu,
                flow_limit: l.flow_limit_mw,
            });
        }
        let mut generators = Vec::with_capacity(p.generators.len());
        for g in &p.generators {
            let bus = index_of(&bus_ix, g.bus, "generator", g.id, "bus", "bus")?;
            nonneg(g.a_cny_per_mw2h, "generator", g.id, "a_cny_per_mw2h")?;
            for (v, field) in [
                (g.b_cny_per_mwh, "b_cny_per_mwh"),
                (g.c_cny_per_h, "c_cny_per_h"),
                (g.p_min_mw, "p_min_mw"),
                (g.p_max_mw, "p_max_mw"),
            ] {
                if !v.is_finite() {
                    return Err(Error::invalid("generator", g.id, field, "must be finite"));
                }
            }
            if g.p_min_mw > g.p_max_mw {
                return Err(Error::invalid("generator", g.id, "p_max_mw", "output bounds not ordered"));
            }
            generators.push(Generator {
                id: g.id,
                bus,
                a: g.a_cny_per_mw2h,
                b: g.b_cny_per_mwh,
                c: g.c_cny_per_h,
                p_min: g.p_min_mw,
                p_max: g.p_max_mw,
            });
        }

        let s = &p.substation;
        let sub_bus = index_of(&bus_ix, s.bus, "substation", s.bus, "bus", "bus")?;
        nonneg(s.price_cny_per_mwh, "substation", s.bus, "price_cny_per_mwh")?;
        let mw_per_pu = pr.traffic_base_veh_per_h * pr.battery_kwh / 1000.0;
        let ceiling = buses.iter().map(|b| b.traditional_demand).sum::<f64>()
            + evcs
                .iter()
                .map(|e| pr.davidson_fraction * e.capacity * mw_per_pu)
                .sum::<f64>();
        let import_max = s.import_max_mw.unwrap_or(ceiling);
        if !(s.import_min_mw.is_finite() && import_max.is_finite() && s.import_min_mw <= import_max)
        {
            return Err(Error::invalid("substation", s.bus, "import_max_mw", "import bounds not ordered"));
        }

        let mut inst = CoupledInstance {
            name: f.name.clone(),
            nodes: t.nodes.clone(),
            roads,
            evcs,
            od_pairs,
            buses,
            lines,
            generators,
            substation: Substation {
                bus: sub_bus,
                price: s.price_cny_per_mwh,
                import_min: s.import_min_mw,
                import_max,
            },
            params: GlobalParams {
                time_value: pr.time_value_cny_per_h,
                battery_kwh: pr.battery_kwh,
                davidson_j: pr.davidson_j,
                traffic_base: pr.traffic_base_veh_per_h,
                power_base: pr.power_base_mva,
                segments: pr.segments_n,
                cost_segments: pr.cost_segments,
                davidson_fraction: pr.davidson_fraction,
                big_m_safety: pr.big_m_safety,
                toll_max: 0.0,
                paths_k: pr.paths_k,
                dual_bound_factor: pr.dual_bound_factor,
            },
        };
        inst.params.toll_max = match pr.toll_max_cny {
            Some(v) => {
                positive(v, "params", pid, "toll_max_cny")?;
                v
            }
            None => inst.default_toll_max(),
        };
        Ok(inst)
    }

    /// 10·ω times the longest free-flow route time (longest simple chain of
    /// roads bounded by the road count, plus the slowest station).
    fn default_toll_max(&self) -> f64 {
        let road_sum: f64 = self.roads.iter().map(|r| r.free_flow_time).sum();
        let station = self
            .evcs
            .iter()
            .map(|e| e.base_service_time)
            .fold(0.0, f64::max);
        10.0 * self.params.time_value * (road_sum + station)
    }

    pub fn node_id(&self, ix: usize) -> usize {
        self.nodes[ix]
    }

    /// Traffic base expressed in this instance (vehicles/h per p.u.).
    pub fn mw_per_pu(&self) -> f64 {
        self.params.mw_per_pu()
    }
}

// ---- path enumeration ----

#[derive(Debug, Clone, PartialEq)]
pub struct PathAlt {
    pub id: usize,
    /// Index into `CoupledInstance::od_pairs`.
    pub od: usize,
    pub class: VehicleClass,
    /// Road indices in travel order.
    pub roads: Vec<usize>,
    /// Station index for EV alternatives.
    pub evcs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub k: usize,
    pub alts: Vec<PathAlt>,
}

impl PathSet {
    /// Alternatives of one O-D pair and class, in enumeration order.
    pub fn of(&self, od: usize, class: VehicleClass) -> Vec<usize> {
        self.alts
            .iter()
            .filter(|a| a.od == od && a.class == class)
            .map(|a| a.id)
            .collect()
    }

    /// Alternatives using `road` (each road occurs at most once per route).
    pub fn through_road(&self, road: usize) -> Vec<usize> {
        self.alts
            .iter()
            .filter(|a| a.roads.contains(&road))
            .map(|a| a.id)
            .collect()
    }

    pub fn at_station(&self, evcs: usize) -> Vec<usize> {
        self.alts
            .iter()
            .filter(|a| a.evcs == Some(evcs))
            .map(|a| a.id)
            .collect()
    }
}

/// Cost key with ties compared exactly after rounding to 1e-9 hours.
fn cost_key(c: f64) -> i64 {
    (c * 1e9).round() as i64
}

struct Graph<'a> {
    roads: &'a [Road],
    out: Vec<Vec<usize>>,
}

impl<'a> Graph<'a> {
    fn new(inst: &'a CoupledInstance) -> Self {
        let mut out = vec![Vec::new(); inst.nodes.len()];
        for (k, r) in inst.roads.iter().enumerate() {
            out[r.tail].push(k);
        }
        Graph {
            roads: &inst.roads,
            out,
        }
    }

    fn cost(&self, path: &[usize]) -> f64 {
        path.iter().map(|&r| self.roads[r].free_flow_time).sum()
    }

    /// Lexicographically smallest road sequence among shortest routes that
    /// avoid `banned_nodes` and `banned_roads`.
    fn shortest(
        &self,
        s: usize,
        t: usize,
        banned_nodes: &[bool],
        banned_roads: &BTreeSet<usize>,
    ) -> Option<Vec<usize>> {
        let n = self.out.len();
        let mut best: Vec<Option<(i64, Vec<usize>)>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        best[s] = Some((0, Vec::new()));
        heap.push(Reverse((0i64, Vec::<usize>::new(), s)));
        while let Some(Reverse((d, seq, v))) = heap.pop() {
            match &best[v] {
                Some((bd, bs)) if (*bd, bs) < (d, &seq) => continue,
                _ => {}
            }
            if v == t {
                return Some(seq);
            }
            for &r in &self.out[v] {
                let w = self.roads[r].head;
                if banned_nodes[w] || banned_roads.contains(&r) || w == s {
                    continue;
                }
                let nd = d + cost_key(self.roads[r].free_flow_time);
                let mut nseq = seq.clone();
                nseq.push(r);
                let better = match &best[w] {
                    None => true,
                    Some((bd, bs)) => (nd, &nseq) < (*bd, bs),
                };
                if better {
                    best[w] = Some((nd, nseq.clone()));
                    heap.push(Reverse((nd, nseq, w)));
                }
            }
        }
        None
    }

    fn nodes_of(&self, s: usize, path: &[usize]) -> Vec<usize> {
        let mut v = vec![s];
        v.extend(path.iter().map(|&r| self.roads[r].head));
        v
    }

    /// Yen's algorithm. Returns up to `k` loop-free routes ordered by
    /// (free-flow time, road sequence); routes tied with the k-th are
    /// resolved by the same order.
    fn k_shortest(&self, s: usize, t: usize, k: usize) -> Vec<Vec<usize>> {
        let n = self.out.len();
        let none = vec![false; n];
        let first = match self.shortest(s, t, &none, &BTreeSet::new()) {
            Some(p) => p,
            None => return Vec::new(),
        };
        let key = |p: &Vec<usize>| (cost_key(self.cost(p)), p.clone());
        let mut found: Vec<Vec<usize>> = vec![first];
        let mut candidates: BTreeSet<(i64, Vec<usize>)> = BTreeSet::new();
        loop {
            let last = found.last().unwrap().clone();
            let last_nodes = self.nodes_of(s, &last);
            for i in 0..last.len() {
                let root = &last[..i];
                let spur = last_nodes[i];
                let mut banned_roads = BTreeSet::new();
                for p in &found {
                    if p.len() > i && p[..i] == *root {
                        banned_roads.insert(p[i]);
                    }
                }
                let mut banned_nodes = vec![false; n];
                for &v in &last_nodes[..i] {
                    banned_nodes[v] = true;
                }
                if let Some(tail) = self.shortest(spur, t, &banned_nodes, &banned_roads) {
                    let mut full = root.to_vec();
                    full.extend(tail);
                    if !found.contains(&full) {
                        candidates.insert(key(&full));
                    }
                }
            }
            let next = match candidates.iter().next().cloned() {
                Some(c) => c,
                None => break,
            };
            // stop once k routes are known and no candidate ties the k-th
            if found.len() >= k && next.0 > cost_key(self.cost(&found[k - 1])) {
                break;
            }
            candidates.remove(&next);
            found.push(next.1);
        }
        found.sort_by_key(|p| key(p));
        found.truncate(k);
        found
    }
}

/// Enumerates route alternatives: up to `k` GV routes per O-D pair, and for
/// EV demand, up to `k` composites per station formed by joining
/// origin→station and station→destination legs without repeating a node.
pub fn enumerate_paths(inst: &CoupledInstance, k: usize) -> Result<PathSet> {
    if k == 0 {
        return Err(Error::Model("path count K must be at least 1".into()));
    }
    let g = Graph::new(inst);
    let mut alts = Vec::new();
    // legs are enumerated deeper than K so loop filtering rarely starves
    // the composite ranking
    let leg_k = 3 * k;
    for (r, od) in inst.od_pairs.iter().enumerate() {
        if od.gv_demand > 0.0 {
            let routes = g.k_shortest(od.origin, od.destination, k);
            if routes.is_empty() {
                return Err(Error::Infeasible(format!(
                    "O-D pair {} has GV demand but no route",
                    od.id
                )));
            }
            for roads in routes {
                alts.push(PathAlt {
                    id: alts.len(),
                    od: r,
                    class: VehicleClass::Gv,
                    roads,
                    evcs: None,
                });
            }
        }
        if od.ev_demand > 0.0 {
            let before = alts.len();
            for (m, st) in inst.evcs.iter().enumerate() {
                let first = if st.node == od.origin {
                    vec![Vec::new()]
                } else {
                    g.k_shortest(od.origin, st.node, leg_k)
                };
                let second = if st.node == od.destination {
                    vec![Vec::new()]
                } else {
                    g.k_shortest(st.node, od.destination, leg_k)
                };
                let mut comps: BTreeSet<(i64, Vec<usize>)> = BTreeSet::new();
                for a in &first {
                    for b in &second {
                        let mut full = a.clone();
                        full.extend(b);
                        let nodes = g.nodes_of(od.origin, &full);
                        let distinct: BTreeSet<_> = nodes.iter().collect();
                        if distinct.len() == nodes.len() && !full.is_empty() {
                            comps.insert((cost_key(g.cost(&full)), full));
                        }
                    }
                }
                for (_, roads) in comps.into_iter().take(k) {
                    alts.push(PathAlt {
                        id: alts.len(),
                        od: r,
                        class: VehicleClass::Ev,
                        roads,
                        evcs: Some(m),
                    });
                }
            }
            if alts.len() == before {
                return Err(Error::Infeasible(format!(
                    "O-D pair {} has EV demand but no route through any charging station",
                    od.id
                )));
            }
        }
    }
    Ok(PathSet { k, alts })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_json() -> String {
        r#"{
          "name": "tiny",
          "traffic": {
            "nodes": [1, 2, 3],
            "roads": [
              {"id": 1, "from": 1, "to": 2, "free_flow_time_min": 10, "capacity_pu": 20},
              {"id": 2, "from": 2, "to": 3, "free_flow_time_min": 10, "capacity_pu": 20},
              {"id": 3, "from": 1, "to": 3, "free_flow_time_min": 25, "capacity_pu": 20}
            ],
            "evcs": [
              {"id": 1, "node": 2, "base_service_time_min": 20, "capacity_pu": 10, "charging_price_cny_per_kwh": 0.6}
            ],
            "od_pairs": [
              {"id": 1, "origin": 1, "destination": 3, "gv_demand_pu": 5, "ev_demand_pu": 2}
            ]
          },
          "power": {
            "buses": [{"id": 1}, {"id": 2, "traditional_demand_mw": 10}],
            "lines": [{"id": 1, "from": 1, "to": 2, "reactance_pu": 0.1, "flow_limit_mw": 100}],
            "generators": [{"id": 1, "bus": 2, "a_cny_per_mw2h": 5.2, "b_cny_per_mwh": 200,
                            "c_cny_per_h": 300, "p_min_mw": 0, "p_max_mw": 50}],
            "substation": {"bus": 1, "price_cny_per_mwh": 400, "import_max_mw": 200}
          },
          "coupling": [{"evcs": 1, "bus": 2}],
          "params": {"time_value_cny_per_h": 100, "battery_kwh": 100, "davidson_j": 0.15,
                     "traffic_base_veh_per_h": 100, "power_base_mva": 100, "toll_max_cny": 100}
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_converts_units() {
        let inst = parse_instance(&tiny_json()).unwrap();
        assert_eq!(inst.roads.len(), 3);
        assert!((inst.roads[0].free_flow_time - 10.0 / 60.0).abs() < 1e-15);
        assert_eq!(inst.evcs[0].bus, 1);
        assert_eq!(inst.params.segments, 5);
        assert_eq!(inst.params.cost_segments, 3);
        assert!((inst.mw_per_pu() - 10.0).abs() < 1e-12);
        assert!((inst.buses[0].angle_max - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn missing_coupling_names_station() {
        let text = tiny_json().replace(r#""coupling": [{"evcs": 1, "bus": 2}]"#, r#""coupling": []"#);
        let err = parse_instance(&text).unwrap_err().to_string();
        assert!(err.contains("evcs `1`"), "{err}");
    }

    #[test]
    fn unknown_bus_in_coupling() {
        let text = tiny_json().replace(r#"{"evcs": 1, "bus": 2}"#, r#"{"evcs": 1, "bus": 9}"#);
        let err = parse_instance(&text).unwrap_err().to_string();
        assert!(err.contains("evcs `1`") && err.contains("bus"), "{err}");
    }

    #[test]
    fn zero_capacity_rejected() {
        let text = tiny_json().replacen(r#""capacity_pu": 20"#, r#""capacity_pu": 0"#, 1);
        let err = parse_instance(&text).unwrap_err().to_string();
        assert!(err.contains("road `1`") && err.contains("capacity_pu"), "{err}");
    }

    #[test]
    fn truncated_file_reports_position() {
        let text = &tiny_json()[..200];
        let err = parse_instance(text).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn ranks_routes_by_time() {
        let inst = parse_instance(&tiny_json()).unwrap();
        let ps = enumerate_paths(&inst, 2).unwrap();
        let gv: Vec<_> = ps.of(0, VehicleClass::Gv);
        assert_eq!(ps.alts[gv[0]].roads, vec![0, 1]);
        assert_eq!(ps.alts[gv[1]].roads, vec![2]);
        let ev = ps.of(0, VehicleClass::Ev);
        assert_eq!(ev.len(), 1);
        assert_eq!(ps.alts[ev[0]].roads, vec![0, 1]);
        assert_eq!(ps.alts[ev[0]].evcs, Some(0));
    }

    #[test]
    fn k_one_returns_unique_shortest() {
        let inst = parse_instance(&tiny_json()).unwrap();
        let ps = enumerate_paths(&inst, 1).unwrap();
        assert_eq!(ps.of(0, VehicleClass::Gv).len(), 1);
        assert_eq!(ps.alts[0].roads, vec![0, 1]);
    }
}
