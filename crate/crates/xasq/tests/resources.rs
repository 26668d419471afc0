use std::f64::consts::PI;

use proptest::prelude::*;
use xasq::resources::*;
use xasq::spectrum::{optimize_alpha, AlphaProblem};

fn close(a: f64, b: f64, rel: f64) -> bool {
    ((a - b) / b).abs() <= rel
}

#[test]
fn rotation_costs() {
    assert!((rotation_cost(1e-3) - 10.142).abs() < 5e-3);
    assert!((rotation_cost(1e-6) - 15.423).abs() < 5e-3);
    assert!((rotation_cost(0.5) - 5.39).abs() < 1e-12);
}

#[test]
fn fragment_costs() {
    let e = 1e-3;
    assert!((unitary_cost(18, e) - 6572.0).abs() < 5.0);
    assert!((z_cost(18, e, FragmentKind::TwoBody) - 6755.0).abs() < 5.0);
    let c = rotation_cost(e);
    assert!((fragment_cost(1, e, FragmentKind::OneBody) - 4.0 * c).abs() < 1e-12);
    for n in 1..30 {
        let d = fragment_cost(n, e, FragmentKind::TwoBody) - fragment_cost(n, e, FragmentKind::OneBody);
        let nf = n as f64;
        assert!((d - (nf * (2.0 * nf + 1.0) - 2.0 * nf) * c).abs() < 1e-9 * d.abs().max(1.0));
    }
}

#[test]
fn qubit_table() {
    for row in REFERENCE_TABLE {
        assert_eq!(qubit_count(row.n, 1e4), row.qubits, "N = {}", row.n);
    }
    assert_eq!(qubit_count(7, 8.0), 26);
}

#[test]
fn step_ratio_matches_table() {
    let p = CostParams { tau: PI / 4.0, delta: PI / 16.0, ..CostParams::table_row(18) };
    let t = steps_and_totals(&p).unwrap();
    let r = t.n_trot / t.n_trot_max;
    assert!((r - 1465.0).abs() <= 5.0, "{r}");
    let big = CostParams { alpha: 1e4, ..p.clone() };
    let t = steps_and_totals(&big).unwrap();
    assert!(close(t.n_trot, 6.0 * p.s * 4.0, 1e-9));
}

#[test]
fn table_regression() {
    for row in REFERENCE_TABLE {
        let t = steps_and_totals(&CostParams::table_row(row.n)).unwrap();
        assert!(close(t.t_longest, row.t_longest, 0.35), "N = {} T_longest {:.3e}", row.n, t.t_longest);
        assert!(close(t.t_total, row.t_total, 0.35), "N = {} T_total {:.3e}", row.n, t.t_total);
        let r = t.t_total / t.t_longest;
        assert!(close(r, row.t_total / row.t_longest, 0.01) || row.n != 18, "ratio {r}");
    }
}

#[test]
fn double_phase_multipliers() {
    let p = CostParams::table_row(10);
    let on = steps_and_totals(&p).unwrap();
    let off = steps_and_totals(&CostParams { double_phase: false, ..p }).unwrap();
    assert!(close(off.c_trot / on.c_trot, 5.0, 1e-12));
    assert!(close(off.n_trot / on.n_trot, 2.0, 1e-12));
}

#[test]
fn av_model() {
    let m = AvModel::calibrate(&[10, 18]).unwrap();
    assert!(m.c0 >= 0.0 && m.c1 >= 0.0 && m.per_clifford >= 0.0);
    for (n, err) in &m.calibration.as_ref().unwrap().relative_errors {
        assert!(err.abs() <= 0.5, "N = {n}: {err}");
    }
    // published worked example: V = 1e10 on 200 qubits at 1 MHz
    assert!((depth(1e10, 200) / 1e6 - 100.0).abs() < 1e-9);
    assert!((depth(3e9, 100) / depth(3e9, 200) - 2.0).abs() < 1e-12);
    let e = estimate(&CostParams::table_row(18), &m, 1e6).unwrap();
    assert!(e.t_total >= e.t_longest && e.av_total >= e.av_longest);
    assert_eq!(e.logical_qubits, 100);
}

#[test]
fn qdrift_arithmetic() {
    let base = QdriftCostParams { lambda: 1.0, t: 10.0, eps: 0.01, tau: 1.0, fractions: vec![0.5, 0.5], n_u1: 3.0, n_p: 4.0 };
    let c = qdrift_costs(&base).unwrap();
    assert!(close(c.c_qdrift, 2e4, 1e-12));
    assert!(close(c.c_pf, 120.0, 1e-12));
    assert!(close(c.r_q_tau * base.t / base.tau, c.c_qdrift, 1e-12));
    let single = qdrift_costs(&QdriftCostParams { fractions: vec![1.0], lambda: 0.3, ..base.clone() }).unwrap();
    assert!(close(single.c_qdrift, 2.0 * 0.09 * 100.0 / 0.01, 1e-12));
    let zero = qdrift_costs(&QdriftCostParams { lambda: 0.0, ..base.clone() }).unwrap();
    assert_eq!(zero.c_qdrift, 0.0);
    // signed fractions enter through Σ|a_j|
    let signed = qdrift_costs(&QdriftCostParams { fractions: vec![1.5, -0.5], ..base.clone() }).unwrap();
    assert!(close(signed.c_qdrift, 2e4 * 4.0, 1e-12));
    assert!(qdrift_costs(&QdriftCostParams { fractions: vec![0.5], ..base.clone() }).is_err());

    let norms = [1e-4, 5.0, 2e-4, 3.0, 1e-5];
    let part = greedy_partition(&norms, 0.1, &QdriftCostParams { n_u1: 1e3, ..base }, 1.0).unwrap();
    assert_eq!(part.kept, vec![1, 3]);
    assert_eq!(part.sampled, vec![0, 2, 4]);
    assert!(close(part.lambda, 3.1e-4, 1e-9));
}

#[test]
fn optimization_ledger() {
    let p = CostParams::table_row(18);
    let r = optimization_report(&p).unwrap();
    let get = |n: &str| r.entries.iter().find(|e| e.name == n).unwrap().factor;
    assert!(close(get("bliss"), 19.0 / 18.0, 1e-12));
    assert!(close(get("rotation_precision"), 15.42 / 10.14, 2e-3));
    assert!(close(get("sampling"), 17.9, 0.05), "{}", get("sampling"));
    assert!(close(get("merge_rotations"), 1.46, 0.05));
    assert!(close(get("double_phase"), 10.0, 1e-12));
    let prod: f64 = r.entries.iter().map(|e| e.factor).product();
    assert!(close(r.product, prod, 1e-12));
    let json = report_json(&p, &AvModel::default(), 1e6).unwrap();
    for key in ["inputs", "per_formula_intermediates", "totals", "ledger"] {
        assert!(json.get(key).is_some());
    }
    let csv = sweep_csv(&[6, 18], &AvModel::default(), 1e6).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(2).unwrap().starts_with("18,100,"));
}

#[test]
fn alpha_optimum() {
    let p = CostParams::table_row(18);
    let step = trotter_step_cost(&p);
    let prob = AlphaProblem {
        c_state: STATE_PREP_GATES,
        c_step: step,
        tau: p.tau,
        delta: p.delta,
        eta: p.eta,
        j_max: p.j_max,
        eps_meas: 1e-3,
    };
    let o = optimize_alpha(&prob);
    assert!((1.25..=1.45).contains(&o.alpha), "{}", o.alpha);
    assert!(close(o.ratio_vs_uniform, 17.9, 0.25));
    assert!(close(o.ratio_vs_one, 1.178, 0.02));
    let doubled = optimize_alpha(&AlphaProblem { c_state: 2.0 * prob.c_state, c_step: 2.0 * step, ..prob });
    assert!((doubled.alpha - o.alpha).abs() < 1e-3);
    let flat = optimize_alpha(&AlphaProblem { c_step: 0.0, ..prob });
    assert!((flat.alpha - 1.0).abs() < 1e-2, "{}", flat.alpha);
}

proptest! {
    #[test]
    fn totals_monotone(n in 2usize..30, l in 1usize..30, s in 10.0f64..1e4, j in 5usize..200, eps in 1e-8f64..0.1) {
        let p = CostParams { n, l, s, j_max: j, eps_rot: eps, ..CostParams::table_row(n) };
        let t = steps_and_totals(&p).unwrap().t_total;
        let up = |q: CostParams| steps_and_totals(&q).unwrap().t_total;
        let larger = [
            CostParams { s: s * 1.1, ..p.clone() },
            CostParams { j_max: j + 1, ..p.clone() },
            CostParams { l: l + 1, ..p.clone() },
            CostParams { n: n + 1, ..p.clone() },
        ];
        for q in larger {
            prop_assert!(up(q) > t);
        }
        let smaller = [CostParams { delta: p.delta * 1.1, ..p.clone() }, CostParams { eps_rot: eps * 2.0, ..p.clone() }];
        for q in smaller {
            prop_assert!(up(q) < t);
        }
        let tt = steps_and_totals(&p).unwrap();
        prop_assert!(tt.t_total >= tt.t_longest);
    }

    #[test]
    fn closed_counts_scale_linearly(n in 1usize..12, l in 1usize..10, steps in 1usize..20) {
        for order in [1u8, 2] {
            let a = program_counts(n, l, order, false, steps);
            let b = program_counts(n, l, order, false, 1);
            prop_assert_eq!(a.rz, b.rz * steps);
            prop_assert_eq!(a.rzz, b.rzz * steps);
            prop_assert!(program_counts(n, l, order, true, steps).givens <= a.givens);
        }
    }
}
