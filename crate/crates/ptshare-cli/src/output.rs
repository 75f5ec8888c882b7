use std::path::Path;

use ptshare_core::dispatch::DispatchDecision;
use ptshare_core::mechanism::SweepPoint;
use ptshare_core::network::CoupledInstance;
use ptshare_core::traffic::TrafficDecision;

use crate::{io_failure, Failure};

/// `%g`-style with six significant digits.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        let s = format!("{x:.5e}");
        let (m, e) = s.split_once('e').unwrap();
        return format!("{}e{e}", trim_zeros(m));
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}"))
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Shortest representation that reads back to the same f64.
fn full(x: f64) -> String {
    // drop the sign of negative zero
    format!("{:?}", x + 0.0)
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, Failure> {
    csv::Writer::from_path(path).map_err(|e| io_failure(path, e))
}

fn finish(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<(), Failure> {
    w.flush().map_err(|e| io_failure(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

pub fn write_sweep(path: &Path, points: &[SweepPoint], no_timing: bool) -> Result<(), Failure> {
    let mut w = writer(path)?;
    let header = [
        "alpha",
        "gamma",
        "eta",
        "delta_eta",
        "delta_gamma",
        "psi",
        "h",
        "overall",
        "tn_net_profit",
        "pdn_net_profit",
        "status",
        "gap",
        "nodes",
        "wall_seconds",
    ];
    w.write_record(header).map_err(|e| io_failure(path, e))?;
    for p in points {
        let wall = if no_timing { 0.0 } else { p.wall_seconds };
        w.write_record([
            full(p.alpha),
            full(p.gamma),
            full(p.eta),
            full(p.delta_eta),
            full(p.delta_gamma),
            full(p.psi),
            full(p.h),
            full(p.overall),
            full(p.tn_net_profit),
            full(p.pdn_net_profit),
            p.status_label().to_string(),
            full(p.gap),
            p.nodes.to_string(),
            full(wall),
        ])
        .map_err(|e| io_failure(path, e))?;
    }
    finish(path, w)
}

pub fn write_loads(path: &Path, inst: &CoupledInstance, t: &TrafficDecision) -> Result<(), Failure> {
    let mut w = writer(path)?;
    w.write_record(["evcs", "y_pu", "p_evcs_mw"]).map_err(|e| io_failure(path, e))?;
    for (s, st) in inst.evcs.iter().enumerate() {
        w.write_record([st.id.to_string(), full(t.y[s]), full(t.p_evcs[s])])
            .map_err(|e| io_failure(path, e))?;
    }
    finish(path, w)
}

pub fn write_gen(path: &Path, inst: &CoupledInstance, d: &DispatchDecision) -> Result<(), Failure> {
    let mut w = writer(path)?;
    w.write_record(["unit", "output_mw", "cost_cny_per_h"]).map_err(|e| io_failure(path, e))?;
    for (u, (p, f)) in d.output.iter().zip(&d.cost).enumerate() {
        let name = match inst.generators.get(u) {
            Some(g) => format!("G{}", g.id),
            None => "substation".to_string(),
        };
        w.write_record([name, full(*p), full(*f)]).map_err(|e| io_failure(path, e))?;
    }
    finish(path, w)
}
