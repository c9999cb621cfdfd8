//! Invariants of the outer iteration and its constants.

use proptest::prelude::*;

use irgnm_core::benchmarks::{smooth_q_dagger, DenseRate, SmoothCoefficient};
use irgnm_core::irgnm::{audit_convergence, condition_a, condition_c, run, validate_config, RunConfig, StopReason};
use irgnm_core::linalg;
use irgnm_core::mesh::Mesh1D;
use irgnm_core::problem::{linearize_at, InverseProblem};
use irgnm_core::Error;

/// The admissibility predicate written out independently of the validator.
fn admissible(c: &RunConfig) -> bool {
    let noise = 2.0 * (c.c_tc * c.c_tc + (1.0 + c.c_tc).powi(2) / (c.tau * c.tau));
    let den = 1.0 - 4.0 * c.c_tc * c.c_tc;
    let contraction = if den > 0.0 { (2.0 * c.theta_hi + 4.0 * c.c_tc * c.c_tc) / den } else { f64::INFINITY };
    0.0 < c.theta_lo
        && c.theta_lo <= c.theta_hi
        && c.theta_hi < 1.0
        && c.tau_beta > c.tau_beta_tilde.max(1.0)
        && c.tau_beta <= c.tau
        && c.c_tc >= 0.0
        && noise < c.theta_lo
        && contraction < 1.0
        && c.c1 > 0.0
        && c.c3 > 0.0
        && c.c2 > 0.0
        && c.c2 < 1.0
        && (1.0 + c.c3) * contraction <= c.c2
}

fn configs() -> impl Strategy<Value = RunConfig> {
    (
        (1.5f64..40.0, 0.01f64..0.6, 0.0f64..0.4, 1.0f64..4.0, 0.5f64..2.0),
        (0.0f64..0.3, 0.05f64..2.0, 0.05f64..0.99, 0.05f64..2.0),
    )
        .prop_map(|((tau, theta_lo, spread, tau_beta, tau_beta_tilde), (c_tc, c1, c2, c3))| RunConfig {
            tau,
            theta_lo,
            theta_hi: theta_lo + spread,
            tau_beta,
            tau_beta_tilde,
            c_tc,
            c1,
            c2,
            c3,
            ..RunConfig::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn validator_agrees_with_predicate(cfg in configs()) {
        match validate_config(&cfg) {
            Ok(c) => {
                prop_assert!(admissible(&cfg));
                prop_assert!(c.c4 > 0.0);
                prop_assert!(c.contraction < 1.0);
                prop_assert!(c.c_c > 0.0 && c.c_c <= cfg.c1 && c.c_c <= cfg.c3 / (2.0 * (1.0 + cfg.c3)));
                prop_assert!(c.c_c <= c.c5);
                prop_assert!(cfg.theta_hi < 0.5);
            }
            Err(Error::Constants(v)) => {
                prop_assert!(!admissible(&cfg));
                prop_assert!(!v.is_empty());
            }
            Err(e) => prop_assert!(false, "unexpected error {}", e),
        }
    }

    #[test]
    fn conditions_are_monotone_and_scale_free(cfg in configs(), eta in -1.0f64..1.0, i3 in 1e-6f64..1.0, s in 1e-3f64..1e3, shrink in 0.0f64..1.0) {
        if let Ok(c) = validate_config(&cfg) {
            for cond in [condition_a, condition_c] {
                let holds = cond(eta, i3, &c);
                prop_assert_eq!(holds, cond(-eta, i3, &c));
                prop_assert_eq!(holds, cond(s * eta, s * i3, &c));
                if holds {
                    prop_assert!(cond(shrink * eta, i3, &c));
                    prop_assert!(cond(eta, i3 / shrink.max(1e-12), &c));
                }
                prop_assert!(cond(0.0, i3, &c));
            }
        }
    }
}

#[test]
fn noise_above_data_stops_immediately() {
    let inst = SmoothCoefficient { delta: 1e4, ..Default::default() }.build().unwrap();
    let mesh0 = inst.problem.discretize(inst.mesh0.clone()).unwrap();
    let report = run(&inst.problem, &RunConfig::default(), mesh0, vec![inst.q_start; 9]).unwrap();
    assert_eq!(report.k_star, 0);
    assert_eq!(report.stop, StopReason::Discrepancy);
    assert!(report.records.is_empty());

    let dense = DenseRate { delta: 1e4, ..Default::default() }.build().unwrap();
    let p = &dense.problem;
    let cfg = RunConfig { c_tc: 0.0, ..Default::default() };
    let report = run(p, &cfg, (), p.prior.clone()).unwrap();
    assert_eq!(report.k_star, 0);
    assert_eq!(report.final_q, p.prior);
}

#[test]
fn meshes_grow_monotonically_across_stages() {
    let inst = SmoothCoefficient { delta: 1e-2, ..Default::default() }.build().unwrap();
    let p = &inst.problem;
    let mesh0 = p.discretize(inst.mesh0.clone()).unwrap();
    let q = vec![inst.q_start; mesh0.mesh.n_vertices()];
    let report = run(p, &RunConfig::default(), mesh0, q).unwrap();
    assert!(report.k_star >= 1);
    for r in &report.records {
        assert!(r.dofs.windows(2).all(|w| w[0] <= w[1]), "step {}: {:?}", r.k, r.dofs);
    }
    for w in report.records.windows(2) {
        assert_eq!(w[1].dofs[0], w[0].dofs[3]);
    }
    assert_eq!(report.records.last().unwrap().dofs[3], p.dofs(&report.final_mesh));
    assert!(report.records.iter().all(|r| r.window_ok && r.cond_a_ok));
    assert!(report.final_i3h <= RunConfig::default().tau.powi(2) * 1e-4);
}

#[test]
fn dense_runs_satisfy_the_convergence_audit() {
    let cfg = RunConfig { c_tc: 0.0, ..Default::default() };
    for delta in [1e-1, 1e-2, 1e-3] {
        let inst = DenseRate { delta, ..Default::default() }.build().unwrap();
        let p = &inst.problem;
        let report = run(p, &cfg, (), p.prior.clone()).unwrap();
        assert_eq!(report.stop, StopReason::Discrepancy);
        let dist = linalg::sub(&inst.q_dagger, &p.prior);
        let audit = audit_convergence(&report.records, linalg::dot(&dist, &dist), &cfg);
        assert_eq!(audit.len(), report.k_star);
        for row in &audit {
            assert!(row.monotonicity_gap <= 1e-8, "δ = {delta}: {row:?}");
            assert!(row.eta_bound_gap <= 0.0, "δ = {delta}: {row:?}");
            assert!(row.eta3_gap <= 0.0, "δ = {delta}: {row:?}");
            assert!(row.growth_gap <= 1e-12 * report.records[0].i3h, "δ = {delta}: {row:?}");
        }
    }
}

/// The misfit floor is the squared discretization error, so it scales with
/// the square of the amplitude; the absolute bound is checked at unit amplitude.
#[test]
fn exact_data_at_the_true_coefficient_has_no_misfit() {
    let mut floors = Vec::new();
    for amplitude in [1.0, 100.0] {
        let inst = SmoothCoefficient { delta: 0.0, amplitude, ..Default::default() }.build().unwrap();
        let p = &inst.problem;
        let mesh = p.discretize(Mesh1D::uniform(0.0, 1.0, 512).unwrap()).unwrap();
        let q = p.interpolate_control(&mesh, smooth_q_dagger);
        let lin = linearize_at(p, &q, &mesh).unwrap();
        let eta3 = p.estimate_misfit(&lin, &mesh).unwrap();
        floors.push((lin.i3, eta3.value, p.data_norm_sq()));
    }
    let (i3, eta3, _) = floors[0];
    assert!(i3 <= 1e-8, "I3h = {i3:.3e}");
    assert!(eta3.abs() <= 1e-8, "eta3 = {eta3:.3e}");
    let (i3_big, eta3_big, g2) = floors[1];
    assert!(i3_big / g2 <= 1e-8 && eta3_big.abs() / g2 <= 1e-8, "{floors:?}");
    assert!((i3_big / i3 / 1e4 - 1.0).abs() <= 1e-6, "{floors:?}");
}

#[test]
fn default_config_is_admissible_and_listed_violations_are_named() {
    let c = validate_config(&RunConfig::default()).unwrap();
    assert!(c.c4 > 0.0 && c.c_c > 0.0);
    let bad = RunConfig { theta_lo: 0.3, theta_hi: 0.2, tau_beta: 0.5, marking_fraction: 0.0, ..Default::default() };
    let Err(Error::Constants(v)) = validate_config(&bad) else { panic!("expected violations") };
    for name in ["theta ordering", "tau_beta ordering", "marking fraction"] {
        assert!(v.iter().any(|m| m.starts_with(name)), "{name} missing from {v:?}");
    }
}
