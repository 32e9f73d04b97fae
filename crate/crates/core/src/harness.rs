//! Experiment orchestration: method comparison, rate sweeps and the
//! hop-count experiment, with CSV/JSON export.
//!
//! Outputs never contain timings, so identical inputs give byte-identical
//! files.

use serde::Serialize;

use crate::baselines::{frank_wolfe_oracle, lcof, lpr_sc, spoc, Method, OracleParams};
use crate::error::{Error, Result};
use crate::gp::{run_gp, GpParams};
use crate::model::{initial_strategy, FlowState, Instance};
use crate::par::{self, Exec};
use crate::scenarios::{sweep, ScenarioConfig, SweepAxis};

#[derive(Debug, Clone)]
pub struct CompareParams {
    pub gp: GpParams,
    pub oracle: OracleParams,
    /// Relative slack before a converged GP run losing to a baseline counts
    /// as a violation.
    pub tol: f64,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self {
            gp: GpParams::default(),
            oracle: OracleParams::default(),
            tol: 1e-3,
        }
    }
}

/// One method's result on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// `+inf` when the method saturates or fails.
    pub cost: f64,
    /// `cost` divided by the worst finite cost in the table.
    pub normalized: f64,
    pub saturated: bool,
    /// For iterative methods, whether they met their stopping tolerance.
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
    /// Oracle lower bound on the optimum.
    pub lower: Option<f64>,
    pub error: Option<String>,
}

impl MethodOutcome {
    fn new(method: Method, cost: f64) -> Self {
        Self {
            method,
            cost,
            normalized: f64::NAN,
            saturated: !cost.is_finite(),
            converged: None,
            iterations: None,
            residual: None,
            lower: None,
            error: None,
        }
    }

    fn failed(method: Method, err: &Error) -> Self {
        let mut out = Self::new(method, f64::INFINITY);
        out.saturated = matches!(err, Error::Saturated(_) | Error::NoFeasibleInit(_));
        out.error = Some(err.to_string());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub rows: Vec<MethodOutcome>,
    /// Baselines that beat a converged GP run by more than the tolerance.
    pub violations: Vec<String>,
}

impl CompareReport {
    pub fn get(&self, method: Method) -> Option<&MethodOutcome> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(COMPARE_HEADER);
        for r in &self.rows {
            push_outcome(&mut out, "", r);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fails when GP lost to a baseline on a converged run.
    pub fn ensure_consistent(&self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidStrategy(format!("optimality violated: {v}"))),
        }
    }
}

const COMPARE_HEADER: &str = "method,cost,normalized,saturated,converged,iterations,residual,lower,error\n";

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), |x| x.to_string())
}

fn push_outcome(out: &mut String, prefix: &str, r: &MethodOutcome) {
    let error = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
    out.push_str(&format!(
        "{prefix}{},{},{},{},{},{},{},{},{}\n",
        r.method,
        r.cost,
        r.normalized,
        r.saturated,
        opt(&r.converged),
        opt(&r.iterations),
        opt(&r.residual),
        opt(&r.lower),
        error
    ));
}

fn run_method(inst: &Instance, method: Method, params: &CompareParams) -> MethodOutcome {
    let res = match method {
        Method::Gp => initial_strategy(inst)
            .and_then(|init| run_gp(inst, &params.gp, &init))
            .map(|run| {
                let mut o = MethodOutcome::new(method, run.cost);
                o.converged = Some(run.converged());
                o.iterations = Some(run.iterations);
                o.residual = Some(run.residual);
                o
            }),
        Method::Spoc | Method::Lcof | Method::LprSc => {
            let r = match method {
                Method::Spoc => spoc(inst, &params.gp),
                Method::Lcof => lcof(inst, &params.gp),
                _ => lpr_sc(inst),
            };
            r.map(|b| {
                let mut o = MethodOutcome::new(method, b.cost);
                o.residual = b.residual;
                o
            })
        }
        Method::Oracle => frank_wolfe_oracle(inst, &params.oracle).map(|r| {
            let mut o = MethodOutcome::new(method, r.cost);
            o.converged = Some(r.converged);
            o.iterations = Some(r.iterations);
            o.lower = Some(r.lower);
            o
        }),
    };
    res.unwrap_or_else(|e| MethodOutcome::failed(method, &e))
}

/// Runs every method on `inst`. Failures are recorded in their row.
pub fn compare(inst: &Instance, methods: &[Method], params: &CompareParams) -> CompareReport {
    let mut rows: Vec<MethodOutcome> = methods.iter().map(|&m| run_method(inst, m, params)).collect();
    let worst = rows
        .iter()
        .map(|r| r.cost)
        .filter(|c| c.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    for r in &mut rows {
        r.normalized = if !r.cost.is_finite() {
            f64::INFINITY
        } else if worst > 0.0 {
            r.cost / worst
        } else {
            1.0
        };
    }
    let mut violations = Vec::new();
    if let Some(gp) = rows.iter().find(|r| r.method == Method::Gp && r.converged == Some(true)) {
        for b in rows.iter().filter(|r| Method::BASELINES.contains(&r.method)) {
            if b.cost.is_finite() && gp.cost > b.cost + params.tol * b.cost.abs().max(1.0) {
                violations.push(format!("gp cost {} exceeds {} cost {}", gp.cost, b.method, b.cost));
            }
        }
    }
    CompareReport { rows, violations }
}

/// A sweep over one scenario parameter.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub scenario: ScenarioConfig,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub params: CompareParams,
    /// Runs sweep points concurrently; results keep point order.
    pub exec: Exec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    pub report: Option<CompareReport>,
    /// Set when the instance for this point could not be generated.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("point,value,{COMPARE_HEADER}");
        for p in &self.points {
            let prefix = format!("{},{},", p.index, p.value);
            match &p.report {
                Some(r) => r.rows.iter().for_each(|row| push_outcome(&mut out, &prefix, row)),
                None => out.push_str(&format!(
                    "{prefix},,,,,,,,{}\n",
                    p.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
                )),
            }
        }
        out
    }

    /// Whitespace-separated table, one column per method, `inf` for
    /// saturated points.
    pub fn to_gnuplot(&self) -> String {
        let methods: Vec<Method> = self
            .points
            .iter()
            .find_map(|p| p.report.as_ref())
            .map(|r| r.rows.iter().map(|x| x.method).collect())
            .unwrap_or_default();
        let mut out = String::from("# value");
        for m in &methods {
            out.push(' ');
            out.push_str(m.name());
        }
        out.push('\n');
        for p in &self.points {
            out.push_str(&p.value.to_string());
            for &m in &methods {
                let c = p.report.as_ref().and_then(|r| r.get(m)).map_or(f64::INFINITY, |r| r.cost);
                out.push(' ');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }

    pub fn violations(&self) -> impl Iterator<Item = &String> {
        self.points.iter().filter_map(|p| p.report.as_ref()).flat_map(|r| &r.violations)
    }
}

fn sweep_instances(config: &SweepConfig, axis: SweepAxis) -> Vec<Result<Instance>> {
    // one value at a time so a bad value does not sink the whole sweep
    config
        .values
        .iter()
        .map(|&v| sweep(&config.scenario, axis, &[v]).map(|mut x| x.remove(0)))
        .collect()
}

/// Compares `methods` at every point of a sweep along `axis`.
pub fn sweep_experiment(config: &SweepConfig, axis: SweepAxis) -> SweepResult {
    let instances = sweep_instances(config, axis);
    let points = par::map_range(config.exec, instances.len(), |idx| {
        let inst = &instances[idx];
        let value = config.values[idx];
        match inst {
            Ok(inst) => SweepPoint {
                index: idx,
                value,
                report: Some(compare(inst, &config.methods, &config.params)),
                error: None,
            },
            Err(e) => SweepPoint {
                index: idx,
                value,
                report: None,
                error: Some(e.to_string()),
            },
        }
    });
    SweepResult { axis, points }
}

/// Cost against input-rate scale for each method.
pub fn rate_sweep_experiment(config: &SweepConfig) -> SweepResult {
    sweep_experiment(config, SweepAxis::RateScale)
}

/// Average hops of one GP solution, by packet kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopPoint {
    pub index: usize,
    /// `L[0] / L[1]`.
    pub value: f64,
    pub l0: f64,
    pub cost: f64,
    pub converged: bool,
    /// Link flow of stage 0 per unit of injected data.
    pub data_hops: f64,
    /// Link flow of later stages per unit of their injected traffic.
    pub result_hops: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopResult {
    pub points: Vec<HopPoint>,
}

impl HopResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point,l0_ratio,l0,cost,converged,data_hops,result_hops,error\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                p.index,
                p.value,
                p.l0,
                p.cost,
                p.converged,
                p.data_hops,
                p.result_hops,
                p.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            ));
        }
        out
    }

    pub fn to_gnuplot(&self) -> String {
        let mut out = String::from("# l0_ratio data_hops result_hops\n");
        for p in &self.points {
            out.push_str(&format!("{} {} {}\n", p.value, p.data_hops, p.result_hops));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hop result serializes")
    }
}

/// `(data, result)` average hop counts: per stage group, the total link flow
/// over the total injected traffic.
pub fn average_hops(inst: &Instance, flow: &FlowState) -> (f64, f64) {
    let n = inst.node_count();
    let m = inst.graph.edge_count();
    let mut sums = [[0.0f64; 2]; 2];
    for s in 0..inst.stage_count() {
        let st = inst.stage(s);
        let group = usize::from(st.k > 0);
        let links: f64 = (0..m).map(|e| flow.f(s, e)).sum();
        let injected: f64 = if st.k == 0 {
            inst.apps[st.app].total_rate()
        } else {
            (0..n).map(|i| flow.g(s - 1, i)).sum()
        };
        sums[group][0] += links;
        sums[group][1] += injected;
    }
    let ratio = |x: [f64; 2]| if x[1] > 0.0 { x[0] / x[1] } else { 0.0 };
    (ratio(sums[0]), ratio(sums[1]))
}

/// Runs GP along `L[0] = value * L[1]` and reports average hop counts.
pub fn hopcount_experiment(config: &SweepConfig) -> HopResult {
    let instances = sweep_instances(config, SweepAxis::L0Ratio);
    let points = par::map_range(config.exec, instances.len(), |idx| {
        let inst = &instances[idx];
        let value = config.values[idx];
        let mut p = HopPoint {
            index: idx,
            value,
            l0: f64::NAN,
            cost: f64::INFINITY,
            converged: false,
            data_hops: f64::NAN,
            result_hops: f64::NAN,
            error: None,
        };
        let res = inst.as_ref().map_err(|e| e.to_string()).and_then(|inst| {
            p.l0 = inst.apps.first().map_or(f64::NAN, |a| a.packet_size[0]);
            initial_strategy(inst)
                .and_then(|init| run_gp(inst, &config.params.gp, &init))
                .map(|run| (inst, run))
                .map_err(|e| e.to_string())
        });
        match res {
            Ok((inst, run)) => {
                let (d, r) = average_hops(inst, &run.flow);
                p.cost = run.cost;
                p.converged = run.converged();
                p.data_hops = d;
                p.result_hops = r;
            }
            Err(e) => p.error = Some(e),
        }
        p
    });
    HopResult { points }
}
