//! Bound tightening before the root LP: feasibility-based bound tightening
//! over the rows, plus switch fixing for annotated fill-order groups.

use super::model::{Model, VarKind};

const BOUND_TOL: f64 = 1e-9;
const MAX_BOUND: f64 = 1e9;

#[derive(Debug, Clone)]
pub struct Presolved {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub fixed_binaries: usize,
    pub tightened: usize,
}

/// Returns tightened bounds, or `None` when the bounds alone prove infeasibility.
pub fn presolve(model: &Model, passes: usize) -> Option<Presolved> {
    let mut lo: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
    let mut hi: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
    let mut tightened = 0;
    for _ in 0..passes {
        let mut changed = 0;
        changed += fill_fixing(model, &mut lo, &mut hi);
        for c in &model.cons {
            let (rl, ru) = c.row_bounds();
            // activity range with counts of infinite contributions
            let (mut amin, mut amax) = (0.0, 0.0);
            let (mut nmin, mut nmax) = (0usize, 0usize);
            for &(j, a) in &c.coeffs {
                let (l, h) = if a > 0.0 { (lo[j], hi[j]) } else { (hi[j], lo[j]) };
                if l.is_finite() {
                    amin += a * l;
                } else {
                    nmin += 1;
                }
                if h.is_finite() {
                    amax += a * h;
                } else {
                    nmax += 1;
                }
            }
            if nmin == 0 && amin > ru + 1e-6 * (1.0 + ru.abs()) {
                return None;
            }
            if nmax == 0 && amax < rl - 1e-6 * (1.0 + rl.abs()) {
                return None;
            }
            for &(j, a) in &c.coeffs {
                let (l, h) = if a > 0.0 { (lo[j], hi[j]) } else { (hi[j], lo[j]) };
                // min activity of the other terms
                let rest_min = match (nmin, l.is_finite()) {
                    (0, _) => Some(amin - a * l),
                    (1, false) => Some(amin),
                    _ => None,
                };
                let rest_max = match (nmax, h.is_finite()) {
                    (0, _) => Some(amax - a * h),
                    (1, false) => Some(amax),
                    _ => None,
                };
                let mut new_lo = f64::NEG_INFINITY;
                let mut new_hi = f64::INFINITY;
                if ru.is_finite() {
                    if let Some(r) = rest_min {
                        let b = (ru - r) / a;
                        if a > 0.0 {
                            new_hi = b;
                        } else {
                            new_lo = b;
                        }
                    }
                }
                if rl.is_finite() {
                    if let Some(r) = rest_max {
                        let b = (rl - r) / a;
                        if a > 0.0 {
                            new_lo = new_lo.max(b);
                        } else {
                            new_hi = new_hi.min(b);
                        }
                    }
                }
                changed += apply(model.vars[j].kind, &mut lo[j], &mut hi[j], new_lo, new_hi);
            }
        }
        if lo.iter().zip(&hi).any(|(l, h)| *l > *h + 1e-6 * (1.0 + h.abs())) {
            return None;
        }
        tightened += changed;
        if changed == 0 {
            break;
        }
    }
    for (l, h) in lo.iter_mut().zip(hi.iter_mut()) {
        if *l > *h {
            let mid = 0.5 * (*l + *h);
            *l = mid;
            *h = mid;
        }
    }
    let fixed_binaries = model
        .vars
        .iter()
        .enumerate()
        .filter(|(j, v)| {
            v.kind == VarKind::Binary && lo[*j] == hi[*j] && v.lower != v.upper
        })
        .count();
    Some(Presolved {
        lower: lo,
        upper: hi,
        fixed_binaries,
        tightened,
    })
}

fn apply(kind: VarKind, lo: &mut f64, hi: &mut f64, new_lo: f64, new_hi: f64) -> usize {
    let mut changed = 0;
    match kind {
        VarKind::Binary => {
            let nl = (new_lo - BOUND_TOL).ceil();
            let nh = (new_hi + BOUND_TOL).floor();
            if nl > *lo && nl <= 1.0 {
                *lo = nl;
                changed += 1;
            }
            if nh < *hi && nh >= 0.0 {
                *hi = nh;
                changed += 1;
            }
            if nl > 1.0 || nh < 0.0 {
                // contradiction; flag through crossed bounds
                *lo = 1.0;
                *hi = 0.0;
                changed += 1;
            }
        }
        VarKind::Continuous => {
            // small relaxation keeps the LP away from rounding infeasibility
            if new_lo.is_finite() && new_lo.abs() < MAX_BOUND {
                let nl = new_lo - BOUND_TOL * (1.0 + new_lo.abs());
                if nl > *lo + 1e-7 * (1.0 + lo.abs().min(MAX_BOUND)) {
                    *lo = nl;
                    changed += 1;
                }
            }
            if new_hi.is_finite() && new_hi.abs() < MAX_BOUND {
                let nh = new_hi + BOUND_TOL * (1.0 + new_hi.abs());
                if nh < *hi - 1e-7 * (1.0 + hi.abs().min(MAX_BOUND)) {
                    *hi = nh;
                    changed += 1;
                }
            }
        }
    }
    changed
}

/// Switch `j` of a fill group is 0 when segment `j` must be full and 1 when
/// segment `j+1` must be empty, so it is implied by the flow bounds alone.
fn fill_fixing(model: &Model, lo: &mut [f64], hi: &mut [f64]) -> usize {
    let mut changed = 0;
    for g in &model.fill_groups {
        let (fl, fh) = (lo[g.flow], hi[g.flow]);
        for (j, &z) in g.switches.iter().enumerate() {
            let edge = (j as f64 + 1.0) * g.width;
            let tol = 1e-9 * (1.0 + edge);
            if fh < edge - tol && lo[z] < 1.0 {
                lo[z] = 1.0;
                changed += 1;
            } else if fl > edge + tol && hi[z] > 0.0 {
                hi[z] = 0.0;
                changed += 1;
            }
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::{FillGroup, Sense};

    #[test]
    fn row_implies_bounds() {
        let mut m = Model::new("t");
        let x = m.cont("x", 0.0, f64::INFINITY).unwrap();
        let y = m.cont("y", 0.0, 3.0).unwrap();
        m.add_constraint("c", &[(x, 1.0), (y, 1.0)], Sense::Le, 5.0).unwrap();
        let p = presolve(&m, 5).unwrap();
        assert!((p.upper[x] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn binary_forced_on() {
        let mut m = Model::new("t");
        let x = m.cont("x", 2.0, 4.0).unwrap();
        let z = m.binary("z", 0).unwrap();
        m.add_constraint("c", &[(x, 1.0), (z, -10.0)], Sense::Le, 0.0).unwrap();
        let p = presolve(&m, 5).unwrap();
        assert_eq!(p.lower[z], 1.0);
        assert_eq!(p.fixed_binaries, 1);
    }

    #[test]
    fn detects_infeasible_bounds() {
        let mut m = Model::new("t");
        let x = m.cont("x", 0.0, 1.0).unwrap();
        m.add_constraint("c", &[(x, 1.0)], Sense::Ge, 2.0).unwrap();
        assert!(presolve(&m, 5).is_none());
    }

    #[test]
    fn fill_group_switches_follow_flow_bounds() {
        let mut m = Model::new("t");
        let x = m.cont("x", 2.5, 3.5).unwrap();
        let segs: Vec<usize> = (0..5)
            .map(|k| m.cont(format!("d{k}"), 0.0, 1.0).unwrap())
            .collect();
        let sw: Vec<usize> = (0..4).map(|k| m.binary(format!("z{k}"), 0).unwrap()).collect();
        m.fill_groups.push(FillGroup {
            flow: x,
            segments: segs,
            switches: sw.clone(),
            width: 1.0,
        });
        let p = presolve(&m, 1).unwrap();
        // segments 0 and 1 full, segment 3 onward empty
        assert_eq!((p.lower[sw[0]], p.upper[sw[0]]), (0.0, 0.0));
        assert_eq!((p.lower[sw[1]], p.upper[sw[1]]), (0.0, 0.0));
        assert_eq!((p.lower[sw[2]], p.upper[sw[2]]), (0.0, 1.0));
        assert_eq!((p.lower[sw[3]], p.upper[sw[3]]), (1.0, 1.0));
    }
}
