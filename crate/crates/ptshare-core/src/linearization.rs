//! Piecewise-linear chord approximations with fill-order binaries, and big-M
//! encodings of complementarity pairs with interval-sized constants.

use crate::error::{Error, Result};
use crate::milp::{FillGroup, Model, Sense};

/// Chord interpolant of a scalar curve on `[0, x_hi]` with equal segments.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlCurve {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub width: f64,
    pub slopes: Vec<f64>,
}

impl PwlCurve {
    pub fn segments(&self) -> usize {
        self.slopes.len()
    }

    pub fn intercept(&self) -> f64 {
        self.values[0]
    }

    pub fn upper(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Value of the interpolant with segments filled left to right.
    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.values[0];
        let mut rest = x.max(0.0);
        for &k in &self.slopes {
            let d = rest.min(self.width);
            v += k * d;
            rest -= d;
            if rest <= 0.0 {
                break;
            }
        }
        v
    }

    /// Segment fills for `x` in proper left-to-right order.
    pub fn fill(&self, x: f64) -> Vec<f64> {
        let mut rest = x.clamp(0.0, self.upper());
        self.slopes
            .iter()
            .map(|_| {
                let d = rest.min(self.width);
                rest -= d;
                d
            })
            .collect()
    }

    /// Switch values consistent with the proper fill of `x`: switch `j` is 0
    /// when segment `j` is full and 1 otherwise.
    pub fn switches(&self, x: f64) -> Vec<f64> {
        let k = ((x / self.width) + 1e-9).floor().max(0.0) as usize;
        (0..self.segments() - 1)
            .map(|j| if j < k { 0.0 } else { 1.0 })
            .collect()
    }

    /// Largest |f̂ − f| over `points` equally spaced samples of the domain.
    pub fn max_error<F: Fn(f64) -> f64>(&self, f: F, points: usize) -> f64 {
        let hi = self.upper();
        (0..points)
            .map(|i| {
                let x = hi * i as f64 / (points - 1) as f64;
                (self.eval(x) - f(x)).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn build_pwl<F>(f: F, x_hi: f64, n: usize) -> Result<PwlCurve>
where
    F: Fn(f64) -> Result<f64>,
{
    if n < 2 {
        return Err(Error::Model(format!("piecewise curve needs at least 2 segments, got {n}")));
    }
    if !(x_hi.is_finite() && x_hi > 0.0) {
        return Err(Error::Domain(format!("curve domain upper end must be positive, got {x_hi}")));
    }
    let width = x_hi / n as f64;
    let knots: Vec<f64> = (0..=n)
        .map(|j| if j == n { x_hi } else { width * j as f64 })
        .collect();
    let values = knots.iter().map(|&x| f(x)).collect::<Result<Vec<f64>>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("curve is not finite on its domain".into()));
    }
    let slopes = (0..n).map(|j| (values[j + 1] - values[j]) / width).collect();
    Ok(PwlCurve {
        knots,
        values,
        width,
        slopes,
    })
}

/// Variables created by [`encode_fill_order`].
#[derive(Debug, Clone)]
pub struct FillBlock {
    pub flow: usize,
    pub segments: Vec<usize>,
    pub switches: Vec<usize>,
    /// Holds f̂(flow).
    pub value: usize,
}

/// Emits `flow = Σ dx_j`, `value = f(0) + Σ k_j dx_j`, `0 ≤ dx_j ≤ w` and the
/// fill-order rows `w − dx_j ≤ M·Z_j`, `dx_{j+1} ≤ M·(1 − Z_j)` with
/// `M = safety·w`.
pub fn encode_fill_order(
    model: &mut Model,
    prefix: &str,
    flow: usize,
    curve: &PwlCurve,
    safety: f64,
    priority: u8,
) -> Result<FillBlock> {
    let w = curve.width;
    let n = curve.segments();
    let segments = (0..n)
        .map(|j| model.cont(format!("{prefix}_dx{}", j + 1), 0.0, w))
        .collect::<Result<Vec<_>>>()?;
    let mut row: Vec<(usize, f64)> = vec![(flow, -1.0)];
    row.extend(segments.iter().map(|&d| (d, 1.0)));
    model.add_constraint(format!("{prefix}_sum"), &row, Sense::Eq, 0.0)?;
    let top = curve.values[0] + curve.slopes.iter().map(|k| k * w).sum::<f64>();
    let value = model.cont(format!("{prefix}_t"), curve.values[0], top.max(curve.values[0]))?;
    let mut row: Vec<(usize, f64)> = vec![(value, 1.0)];
    row.extend(segments.iter().zip(&curve.slopes).map(|(&d, &k)| (d, -k)));
    model.add_constraint(format!("{prefix}_val"), &row, Sense::Eq, curve.values[0])?;
    let m = safety * w;
    let mut switches = Vec::with_capacity(n - 1);
    for j in 0..n - 1 {
        let z = model.binary(format!("{prefix}_z{}", j + 1), priority)?;
        model.add_constraint(
            format!("{prefix}_full{}", j + 1),
            &[(segments[j], -1.0), (z, -m)],
            Sense::Le,
            -w,
        )?;
        model.add_constraint(
            format!("{prefix}_gate{}", j + 2),
            &[(segments[j + 1], 1.0), (z, m)],
            Sense::Le,
            m,
        )?;
        switches.push(z);
    }
    model.fill_groups.push(FillGroup {
        flow,
        segments: segments.clone(),
        switches: switches.clone(),
        width: w,
    });
    Ok(FillBlock {
        flow,
        segments,
        switches,
        value,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        LinExpr { terms, constant }
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }

    /// Interval range over the variable box.
    pub fn range(&self, lo: &[f64], hi: &[f64]) -> (f64, f64) {
        let (mut a, mut b) = (self.constant, self.constant);
        for &(j, c) in &self.terms {
            if c >= 0.0 {
                a += c * lo[j];
                b += c * hi[j];
            } else {
                a += c * hi[j];
                b += c * lo[j];
            }
        }
        (a, b)
    }
}

/// Interval bound on |expr| over the box, times `safety`.
pub fn estimate_big_m(expr: &LinExpr, lo: &[f64], hi: &[f64], safety: f64) -> Result<f64> {
    for &(j, _) in &expr.terms {
        if !lo[j].is_finite() || !hi[j].is_finite() {
            return Err(Error::BigM(format!("variable {j} has an infinite bound")));
        }
    }
    let (a, b) = expr.range(lo, hi);
    Ok(safety * a.abs().max(b.abs()))
}

/// Like [`estimate_big_m`] but for an expression that is separately held
/// nonnegative: only the upper end of its range matters.
pub fn estimate_upper_m(expr: &LinExpr, lo: &[f64], hi: &[f64], safety: f64) -> Result<f64> {
    for &(j, _) in &expr.terms {
        if !hi[j].is_finite() && expr.terms.iter().any(|&(k, c)| k == j && c > 0.0)
            || !lo[j].is_finite() && expr.terms.iter().any(|&(k, c)| k == j && c < 0.0)
        {
            return Err(Error::BigM(format!("variable {j} leaves the expression unbounded")));
        }
    }
    let (_, b) = expr.range(lo, hi);
    Ok(safety * b.max(0.0))
}

/// A linearized pair `0 ≤ f ⊥ g ≥ 0`.
#[derive(Debug, Clone)]
pub struct BigMPair {
    pub name: String,
    pub f: LinExpr,
    pub g: LinExpr,
    pub switch: usize,
    pub m_f: f64,
    pub m_g: f64,
}

/// Emits `0 ≤ f ≤ M_f·X`, `0 ≤ g ≤ M_g·(1 − X)`. Nonnegativity rows are
/// skipped for a side that is a single variable with a nonnegative lower
/// bound already.
pub fn big_m_linearize(
    model: &mut Model,
    name: &str,
    f: LinExpr,
    g: LinExpr,
    m_f: f64,
    m_g: f64,
    priority: u8,
) -> Result<BigMPair> {
    if !(m_f.is_finite() && m_f > 0.0 && m_g.is_finite() && m_g > 0.0) {
        return Err(Error::BigM(format!("pair `{name}` has non-positive or infinite M")));
    }
    let x = model.binary(format!("{name}_x"), priority)?;
    let simple = |e: &LinExpr, model: &Model| {
        e.terms.len() == 1 && e.terms[0].1 > 0.0 && e.constant == 0.0 && model.vars[e.terms[0].0].lower >= 0.0
    };
    if !simple(&f, model) {
        model.add_constraint(format!("{name}_fpos"), &f.terms, Sense::Ge, -f.constant)?;
    }
    let mut row = f.terms.clone();
    row.push((x, -m_f));
    model.add_constraint(format!("{name}_f"), &row, Sense::Le, -f.constant)?;
    if !simple(&g, model) {
        model.add_constraint(format!("{name}_gpos"), &g.terms, Sense::Ge, -g.constant)?;
    }
    let mut row = g.terms.clone();
    row.push((x, m_g));
    model.add_constraint(format!("{name}_g"), &row, Sense::Le, m_g - g.constant)?;
    Ok(BigMPair {
        name: name.to_string(),
        f,
        g,
        switch: x,
        m_f,
        m_g,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BigMFlag {
    pub pair: String,
    pub side: &'static str,
    pub value: f64,
    pub m: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BigMAudit {
    pub flags: Vec<BigMFlag>,
}

impl BigMAudit {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Flags pairs whose active side reaches 99% of its M, which suggests the
/// constant may be cutting off better points.
pub fn audit_big_m(values: &[f64], pairs: &[BigMPair]) -> BigMAudit {
    let mut flags = Vec::new();
    for p in pairs {
        let x = values[p.switch].round();
        let (side, v, m) = if x >= 0.5 {
            ("f", p.f.eval(values), p.m_f)
        } else {
            ("g", p.g.eval(values), p.m_g)
        };
        if v >= 0.99 * m {
            flags.push(BigMFlag {
                pair: p.name.clone(),
                side,
                value: v,
                m,
            });
        }
    }
    BigMAudit { flags }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{solve_milp, BbOptions, Status};

    fn bpr_min(x: f64) -> f64 {
        10.0 * (1.0 + 0.15 * (x / 20.0).powi(4))
    }

    #[test]
    fn bpr_chords() {
        let c = build_pwl(|x| Ok(bpr_min(x)), 20.0, 5).unwrap();
        assert_eq!(c.knots, vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0]);
        assert!((c.slopes[0] - 0.0006).abs() < 1e-12);
        assert!((c.slopes[4] - 0.2214).abs() < 1e-12);
        for (x, v) in c.knots.iter().zip(&c.values) {
            assert_eq!(c.eval(*x), *v);
        }
    }

    #[test]
    fn linear_curve_is_exact() {
        let c = build_pwl(|x| Ok(3.0 + 2.0 * x), 10.0, 4).unwrap();
        assert!(c.slopes.iter().all(|&k| (k - 2.0).abs() < 1e-12));
        assert!(c.max_error(|x| 3.0 + 2.0 * x, 101) < 1e-12);
    }

    #[test]
    fn singular_curve_rejected() {
        let dav = |y: f64| {
            if y >= 12.0 {
                Err(Error::Domain("at capacity".into()))
            } else {
                Ok(1.0 + 0.15 * y / (12.0 - y))
            }
        };
        assert!(build_pwl(dav, 12.0, 5).is_err());
        assert!(build_pwl(dav, 11.4, 5).is_ok());
    }

    fn fill_model(x_fixed: f64) -> (Model, FillBlock) {
        let mut m = Model::new("fill");
        let x = m.cont("x", x_fixed, x_fixed).unwrap();
        let c = build_pwl(|x| Ok(bpr_min(x)), 20.0, 5).unwrap();
        let b = encode_fill_order(&mut m, "r", x, &c, 1.1, 0).unwrap();
        (m, b)
    }

    #[test]
    fn fill_order_is_forced() {
        let (mut m, b) = fill_model(6.0);
        // a misfilled point (segment 3 used while 2 is empty) must be excluded
        for &d in &b.segments {
            m.set_objective(d, 0.0);
        }
        m.set_objective(b.value, -1.0);
        let sol = solve_milp(&m, &BbOptions::default(), &[], None);
        assert_eq!(sol.status, Status::Optimal);
        let dx: Vec<f64> = b.segments.iter().map(|&d| sol.values[d]).collect();
        let want = [4.0, 2.0, 0.0, 0.0, 0.0];
        for (a, w) in dx.iter().zip(want) {
            assert!((a - w).abs() < 1e-7, "{dx:?}");
        }
        assert!(sol.values[b.switches[0]] < 0.5 && sol.values[b.switches[1]] > 0.5);
    }

    #[test]
    fn fill_extremes_are_feasible() {
        for (x, z) in [(0.0, 1.0), (20.0, 0.0)] {
            let (m, b) = fill_model(x);
            let sol = solve_milp(&m, &BbOptions::default(), &[], None);
            assert_eq!(sol.status, Status::Optimal);
            if x == 0.0 {
                assert_eq!(sol.values[b.switches[0]].round(), z);
            } else {
                assert!(b.switches.iter().all(|&s| sol.values[s].round() == z));
            }
        }
    }

    #[test]
    fn proper_switches() {
        let c = build_pwl(|x| Ok(bpr_min(x)), 20.0, 5).unwrap();
        assert_eq!(c.switches(6.0), vec![0.0, 1.0, 1.0, 1.0]);
        assert_eq!(c.fill(6.0), vec![4.0, 2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn big_m_estimates() {
        let e = LinExpr::constant(7.0);
        assert!((estimate_big_m(&e, &[], &[], 1.1).unwrap() - 7.7).abs() < 1e-12);
        let e = LinExpr::new(vec![(0, 1.0)], 0.0);
        assert!(estimate_big_m(&e, &[0.0], &[f64::INFINITY], 1.1).is_err());
        let e = LinExpr::new(vec![(0, 2.0), (1, -1.0)], 1.0);
        assert!((estimate_big_m(&e, &[0.0, 0.0], &[3.0, 10.0], 1.0).unwrap() - 9.0).abs() < 1e-12);
    }

    fn pair_model(fv: f64, gv: f64) -> Model {
        let mut m = Model::new("p");
        let f = m.cont("f", fv, fv).unwrap();
        let g = m.cont("g", gv, gv).unwrap();
        big_m_linearize(
            &mut m,
            "c",
            LinExpr::new(vec![(f, 1.0)], 0.0),
            LinExpr::new(vec![(g, 1.0)], 0.0),
            100.0,
            100.0,
            0,
        )
        .unwrap();
        m
    }

    #[test]
    fn complementarity_points() {
        let s = solve_milp(&pair_model(0.0, 5.0), &BbOptions::default(), &[], None);
        assert_eq!(s.status, Status::Optimal);
        assert_eq!(s.values[2].round(), 0.0);
        let s = solve_milp(&pair_model(2.0, 0.0), &BbOptions::default(), &[], None);
        assert_eq!(s.status, Status::Optimal);
        assert_eq!(s.values[2].round(), 1.0);
        let s = solve_milp(&pair_model(2.0, 5.0), &BbOptions::default(), &[], None);
        assert_eq!(s.status, Status::Infeasible);
    }

    #[test]
    fn audit_flags_binding_m() {
        let p = BigMPair {
            name: "p".into(),
            f: LinExpr::new(vec![(0, 1.0)], 0.0),
            g: LinExpr::new(vec![(1, 1.0)], 0.0),
            switch: 2,
            m_f: 10.0,
            m_g: 10.0,
        };
        assert!(!audit_big_m(&[9.99, 0.0, 1.0], std::slice::from_ref(&p)).is_clean());
        assert!(audit_big_m(&[5.0, 0.0, 1.0], std::slice::from_ref(&p)).is_clean());
        assert!(audit_big_m(&[], &[]).is_clean());
    }
}
