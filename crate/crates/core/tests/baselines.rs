use chainflow::baselines::*;
use chainflow::gp::{run_gp, GpParams};
use chainflow::model::InstanceBuilder;
use chainflow::optimality::build_degenerate_instance;
use chainflow::*;

const LIN: CostFn = CostFn::Linear { slope: 1.0 };

fn line() -> Instance {
    InstanceBuilder::new(3)
        .link(0, 1, LIN)
        .link(1, 2, LIN)
        .cpus(CostFn::Linear { slope: 2.0 })
        .app(Application::new(0, 2, vec![3.0, 1.0], 3).with_rate(0, 1.0))
        .build()
        .unwrap()
}

/// Two parallel two-hop paths with queueing links; compute only at 3.
fn diamond(rate: f64) -> Instance {
    let q = CostFn::Queue { mu: 5.0 };
    InstanceBuilder::new(4)
        .bilink(0, 1, q)
        .bilink(1, 3, q)
        .bilink(0, 2, q)
        .bilink(2, 3, q)
        .cpu(3, CostFn::Queue { mu: 20.0 })
        .app(Application::new(0, 3, vec![1.0, 0.0], 4).with_rate(0, rate))
        .build()
        .unwrap()
}

fn gp(inst: &Instance) -> f64 {
    let run = run_gp(inst, &GpParams::default(), &initial_strategy(inst).unwrap()).unwrap();
    assert!(run.converged());
    run.cost
}

#[test]
fn single_path_methods_match_gp_without_congestion() {
    let inst = line();
    // compute at the source: 2 * 1, then the result crosses two links: 1 * 2
    let expected = 4.0;
    assert!((gp(&inst) - expected).abs() < 1e-9);
    let p = GpParams::default();
    assert!((spoc(&inst, &p).unwrap().cost - expected).abs() < 1e-9);
    assert!((lcof(&inst, &p).unwrap().cost - expected).abs() < 1e-9);
    assert!((lpr_sc(&inst).unwrap().cost - expected).abs() < 1e-9);
}

#[test]
fn spoc_follows_the_cheap_chain_on_the_degenerate_instance() {
    let rho = 0.1;
    let (inst, _) = build_degenerate_instance(rho).unwrap();
    let r = spoc(&inst, &GpParams::default()).unwrap();
    assert!((r.cost - rho).abs() < 1e-9, "{}", r.cost);
}

#[test]
fn splitting_beats_single_paths_under_congestion() {
    let inst = diamond(4.0);
    let best = gp(&inst);
    // one path at load 4: 2 * 4 / (5 - 4) = 8, plus the CPU
    let single = 8.0 + 4.0 / 16.0;
    let lpr = lpr_sc(&inst).unwrap();
    assert!((lpr.cost - single).abs() < 1e-9);
    let sp = spoc(&inst, &GpParams::default()).unwrap();
    assert!((sp.cost - single).abs() < 1e-9);
    // even split: 4 links at load 2
    let split = 4.0 * 2.0 / 3.0 + 4.0 / 16.0;
    assert!((best - split).abs() < 1e-6, "{best}");
}

#[test]
fn lpr_sc_can_saturate_where_gp_cannot() {
    let inst = diamond(6.0);
    let r = lpr_sc(&inst).unwrap();
    assert!(r.saturated());
    assert!(gp(&inst).is_finite());
}

#[test]
fn lcof_needs_compute_at_sources() {
    let inst = diamond(1.0);
    let err = lcof(&inst, &GpParams::default()).unwrap_err();
    assert!(matches!(err, Error::SourceLacksCompute { node: 0, .. }));
}

#[test]
fn oracle_without_demand_costs_nothing() {
    let mut inst = diamond(1.0);
    inst.apps[0].input_rate.clear();
    let r = frank_wolfe_oracle(&inst, &OracleParams::default()).unwrap();
    assert_eq!(r.cost, 0.0);
    assert!(r.converged);
}

#[test]
fn oracle_finds_the_degenerate_optimum() {
    let rho = 0.1;
    let (inst, _) = build_degenerate_instance(rho).unwrap();
    let r = frank_wolfe_oracle(&inst, &OracleParams::default()).unwrap();
    assert!((r.cost - rho).abs() <= 1e-4, "{}", r.cost);
    assert!(r.lower <= r.cost);
}

#[test]
fn oracle_brackets_gp_on_the_diamond() {
    let inst = diamond(4.0);
    let best = gp(&inst);
    let params = OracleParams { rel_gap_tol: Some(1e-8), ..OracleParams::default() };
    let r = frank_wolfe_oracle(&inst, &params).unwrap();
    assert!(r.lower <= best + 1e-9 && best <= r.cost * (1.0 + 1e-6));
}

#[test]
fn method_names_round_trip() {
    for m in [Method::Gp, Method::Spoc, Method::Lcof, Method::LprSc, Method::Oracle] {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert!("dijkstra".parse::<Method>().is_err());
}
