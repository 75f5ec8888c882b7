use proptest::prelude::*;
use ptshare_core::dispatch::{solve_dispatch, DispatchLp};
use ptshare_core::kkt::{derive_kkt, kkt_residuals, CanonicalLp};
use ptshare_core::linearization::{big_m_linearize, build_pwl, LinExpr};
use ptshare_core::mechanism::accounting;
use ptshare_core::milp::{read_mps, solve_milp, write_mps, BbOptions, Model, Sense, Status};
use ptshare_core::traffic::{bpr_time, davidson_time};
mod common;

use common::{feeder, feeder_oracle};

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn dispatch_matches_vertex_oracle(
        d2 in 0.0..40.0f64, d3 in 0.0..60.0f64, pev in 0.0..40.0f64,
        l1 in 80.0..200.0f64, l2 in 10.0..100.0f64,
    ) {
        let inst = feeder(d2, d3, l1, l2);
        let lp = DispatchLp::new(&inst, 3).unwrap();
        let expect = feeder_oracle(d2, d3, pev, l1, l2).unwrap();
        let d = solve_dispatch(&lp, &[pev]).unwrap();
        prop_assert!((d.eta - expect).abs() <= 1e-7 * expect.abs().max(1.0), "{} vs {}", d.eta, expect);

        // dual route: the multipliers certify the same value
        let kkt = derive_kkt(&CanonicalLp::from(&lp)).unwrap();
        let r = kkt_residuals(&lp, &kkt, &d, &[pev]);
        prop_assert!(r.stationarity <= 1e-6 * lp.max_slope());
        prop_assert!(r.complementarity <= 1e-6);
        prop_assert!(r.primal <= 1e-6);
        prop_assert!(r.duality_gap <= 1e-8);
    }

    #[test]
    fn accounting_identities(
        alpha in 0.0..=1.0f64, g0 in 0.0..1e6f64, e0 in 0.0..1e6f64,
        dg in 0.0..1e5f64, de in 0.0..1e5f64,
    ) {
        let (g, e) = (g0 + dg, e0 - de);
        let a = accounting(alpha, g0, e0, g, e);
        let scale = (g0 + e0).max(1.0);
        prop_assert!((a.psi - (e0 - (1.0 - alpha) * a.delta_eta)).abs() <= 1e-9 * scale);
        prop_assert!((a.h - (g0 - (alpha * a.delta_eta - a.delta_gamma))).abs() <= 1e-9 * scale);
        prop_assert!((a.psi + a.h - (g + e)).abs() <= 1e-9 * scale);
        prop_assert!((a.overall - (a.psi + a.h)).abs() <= 1e-9 * scale);
        prop_assert!((a.pdn_net_profit + a.tn_net_profit - (a.delta_eta - a.delta_gamma)).abs() <= 1e-9 * scale);
    }

    #[test]
    fn chord_curves_interpolate_and_bound(t0 in 1.0..30.0f64, c in 5.0..40.0f64, n in 2usize..12) {
        let f = |x: f64| t0 * (1.0 + 0.15 * (x / c).powi(4));
        let curve = build_pwl(|x| Ok(f(x)), c, n).unwrap();
        for (k, &x) in curve.knots.iter().enumerate() {
            prop_assert!((curve.eval(x) - f(x)).abs() <= 1e-9 * f(x));
            prop_assert!((curve.values[k] - f(x)).abs() <= 1e-9 * f(x));
        }
        for i in 0..=50 {
            let x = c * i as f64 / 50.0;
            prop_assert!(curve.eval(x) >= f(x) - 1e-9 * f(x));
        }
        // nested refinement never increases the error of a convex chord fit
        let fine = build_pwl(|x| Ok(f(x)), c, 2 * n).unwrap();
        prop_assert!(fine.max_error(f, 1000) <= curve.max_error(f, 1000) + 1e-12);
    }

    #[test]
    fn fill_is_ordered(x_frac in 0.0..=1.0f64, n in 2usize..10) {
        let curve = build_pwl(|x| Ok(x * x), 10.0, n).unwrap();
        let x = 10.0 * x_frac;
        let fill = curve.fill(x);
        prop_assert!((fill.iter().sum::<f64>() - x).abs() < 1e-9);
        for w in fill.windows(2) {
            prop_assert!(w[1] <= 1e-12 || w[0] >= curve.width - 1e-9);
        }
        let z = curve.switches(x);
        for (j, &zj) in z.iter().enumerate() {
            // Z_j = 0 exactly when segment j is full
            prop_assert_eq!(zj == 0.0, fill[j] >= curve.width - 1e-9);
        }
    }

    #[test]
    fn congestion_is_monotone(a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let road = ptshare_core::network::Road { id: 1, tail: 0, head: 1, free_flow_time: 0.2, capacity: 20.0 };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(bpr_time(20.0 * lo, &road).unwrap() <= bpr_time(20.0 * hi, &road).unwrap());
        let inst = feeder(0.0, 0.0, 100.0, 100.0);
        let st = &inst.evcs[0];
        let cap = inst.params.davidson_fraction * st.capacity;
        prop_assert!(davidson_time(cap * lo, st, &inst.params).unwrap() <= davidson_time(cap * hi, st, &inst.params).unwrap());
    }

    #[test]
    fn complementarity_encoding(f in 0.0..5.0f64, g in 0.0..5.0f64, zero_f in any::<bool>(), zero_g in any::<bool>()) {
        let f = if zero_f { 0.0 } else { f + 0.1 };
        let g = if zero_g { 0.0 } else { g + 0.1 };
        let mut m = Model::new("pair");
        let fv = m.cont("f", f, f).unwrap();
        let gv = m.cont("g", g, g).unwrap();
        big_m_linearize(&mut m, "p", LinExpr::new(vec![(fv, 1.0)], 0.0), LinExpr::new(vec![(gv, 1.0)], 0.0), 10.0, 10.0, 0).unwrap();
        let sol = solve_milp(&m, &BbOptions::default(), &[], None);
        let expect = if f == 0.0 || g == 0.0 { Status::Optimal } else { Status::Infeasible };
        prop_assert_eq!(sol.status, expect);
    }

    #[test]
    fn mps_round_trip(seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = Model::new("rt");
        let nb = rng.gen_range(1..6);
        let nc = rng.gen_range(1..5);
        let mut vars = Vec::new();
        for j in 0..nb {
            vars.push(m.binary(format!("b{j}"), 0).unwrap());
        }
        for j in 0..nc {
            vars.push(m.cont(format!("x{j}"), rng.gen_range(-5.0..0.0), rng.gen_range(0.0..5.0)).unwrap());
        }
        for &v in &vars {
            m.add_objective(v, rng.gen_range(-3.0..3.0));
        }
        m.obj_offset = rng.gen_range(-10.0..10.0);
        for i in 0..rng.gen_range(1..6) {
            let mut row = Vec::new();
            for &v in &vars {
                if rng.gen_bool(0.6) {
                    row.push((v, rng.gen_range(-4.0..4.0)));
                }
            }
            if row.is_empty() {
                continue;
            }
            let sense = [Sense::Le, Sense::Ge, Sense::Eq][rng.gen_range(0..3)];
            let rhs = if sense == Sense::Eq { 0.0 } else { rng.gen_range(-2.0..6.0) };
            m.add_constraint(format!("c{i}"), &row, sense, rhs).unwrap();
        }
        let text = write_mps(&m).unwrap();
        let back = read_mps(&text).unwrap();
        prop_assert_eq!(write_mps(&back).unwrap(), text);
        let a = solve_milp(&m, &BbOptions::default(), &[], None);
        let b = solve_milp(&back, &BbOptions::default(), &[], None);
        prop_assert_eq!(a.status, b.status);
        if a.status == Status::Optimal {
            prop_assert!((a.objective - b.objective).abs() <= 1e-9 * a.objective.abs().max(1.0));
        }
    }
}
