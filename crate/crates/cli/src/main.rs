use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use chainflow::baselines::{frank_wolfe_oracle, lcof, lpr_sc, spoc, Method, OracleParams};
use chainflow::gp::{run_gp, run_with_events, trajectory_csv, GpParams, GpRun, ScheduledEvent, StepScaling};
use chainflow::harness::{compare, hopcount_experiment, sweep_experiment, CompareParams, SweepConfig};
use chainflow::marginal::compute_marginals;
use chainflow::optimality::{check_kkt, check_sufficiency};
use chainflow::scenarios::{generate, ScenarioConfig, SweepAxis, Topology};
use chainflow::{initial_strategy, solve_traffic, validate_strategy, Error, Exec, Instance, Strategy};

const EXIT_INVALID: u8 = 2;
const EXIT_SATURATED: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "chainflow", version, about = "Joint forwarding and offloading optimizer for service chains")]
struct Cli {
    /// Seed for scenario generation and randomized event rows.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write outputs as files in this directory instead of stdout.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario instance file.
    Gen(ScenarioArgs),
    /// Run gradient projection on an instance.
    Run {
        #[arg(long)]
        instance: PathBuf,
        /// Start from this strategy instead of the shortest-path initialization.
        #[arg(long)]
        strategy: Option<PathBuf>,
        /// JSON list of scheduled events.
        #[arg(long)]
        events: Option<PathBuf>,
        #[command(flatten)]
        gp: GpArgs,
    },
    /// Run one comparison method on an instance.
    Baseline {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        method: Method,
        #[command(flatten)]
        gp: GpArgs,
    },
    /// Check a strategy against the KKT and sufficiency conditions.
    Check {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long, default_value_t = chainflow::optimality::DEFAULT_TOL)]
        tol: f64,
    },
    /// Run several methods on one instance and normalize by the worst.
    Compare {
        /// Instance file; generated from the scenario options when absent.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_delimiter = ',', default_value = "gp,spoc,lcof,lpr-sc")]
        methods: Vec<Method>,
        #[command(flatten)]
        gp: GpArgs,
    },
    /// Sweep input rates (cost per method) or L[0] (GP hop counts).
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t = Axis::RateScale)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "gp,spoc,lcof,lpr-sc")]
        methods: Vec<Method>,
        /// Also write a whitespace-separated table for gnuplot.
        #[arg(long)]
        gnuplot: bool,
        #[command(flatten)]
        gp: GpArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    RateScale,
    L0Ratio,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, default_value = "connected-er")]
    topology: Topology,
    /// Use the full evaluation-table sizes rather than the desk-scale ones.
    #[arg(long)]
    full: bool,
    /// Scenario configuration file; overrides the topology options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rate_scale: Option<f64>,
}

impl ScenarioArgs {
    fn config(&self, seed: u64) -> anyhow::Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
            None if self.full => ScenarioConfig::table(self.topology),
            None => ScenarioConfig::desk(self.topology),
        };
        cfg.seed = seed;
        if let Some(r) = self.rate_scale {
            cfg.rate_scale = r;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scaling {
    Newton,
    Traffic,
    MaxExcess,
}

#[derive(Args)]
struct GpArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    scaling: Option<Scaling>,
    /// Compute marginals by the simulated broadcast protocol.
    #[arg(long)]
    distributed: bool,
    /// Run data-parallel loops on one thread.
    #[arg(long)]
    sequential: bool,
}

impl GpArgs {
    fn params(&self, seed: u64) -> GpParams {
        let mut p = GpParams { seed, distributed: self.distributed, exec: self.exec(), ..GpParams::default() };
        if let Some(s) = self.scaling {
            p.scaling = match s {
                Scaling::Newton => StepScaling::Newton,
                Scaling::Traffic => StepScaling::Traffic,
                Scaling::MaxExcess => StepScaling::MaxExcess,
            };
        }
        if let Some(a) = self.alpha {
            p.alpha = a;
        }
        if let Some(n) = self.max_iters {
            p.max_iters = n;
        }
        if let Some(t) = self.tol {
            p.tol = t;
        }
        p
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_instance(path: &Path) -> anyhow::Result<Instance> {
    Ok(Instance::from_json(&read(path)?)?)
}

/// Sends `content` to `out_dir/name`, or to stdout.
struct Output {
    dir: Option<PathBuf>,
    format: Format,
}

impl Output {
    fn emit(&self, name: &str, content: &str) -> anyhow::Result<()> {
        let owned;
        let content = if content.ends_with('\n') {
            content
        } else {
            owned = format!("{content}\n");
            &owned
        };
        match &self.dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(name);
                std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
                eprintln!("wrote {}", path.display());
            }
            None => print!("{content}"),
        }
        Ok(())
    }

    /// Emits whichever of the two renderings the format asks for.
    fn table(&self, stem: &str, csv: impl FnOnce() -> String, json: impl FnOnce() -> String) -> anyhow::Result<()> {
        match self.format {
            Format::Csv => self.emit(&format!("{stem}.csv"), &csv()),
            Format::Json => self.emit(&format!("{stem}.json"), &json()),
        }
    }

    /// Auxiliary files only go to disk.
    fn side(&self, name: &str, content: &str) -> anyhow::Result<()> {
        if self.dir.is_some() {
            self.emit(name, content)?;
        }
        Ok(())
    }
}

fn run_summary(run: &GpRun) -> serde_json::Value {
    serde_json::json!({
        "cost": run.cost,
        "residual": run.residual,
        "iterations": run.iterations,
        "stop": run.stop,
        "trajectory": run.trajectory,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Saturated(_) | Error::NoFeasibleInit(_)) => EXIT_SATURATED,
        Some(Error::Divergence { .. } | Error::NoUnblockedDirection { .. } | Error::Deadlock { .. }) => {
            EXIT_NOT_CONVERGED
        }
        _ => EXIT_INVALID,
    }
}

fn execute(cli: Cli) -> anyhow::Result<u8> {
    let out = Output { dir: cli.out_dir.clone(), format: cli.format };
    let seed = cli.seed;
    match cli.command {
        Command::Gen(scenario) => {
            let inst = generate(&scenario.config(seed)?)?;
            out.emit("instance.json", &inst.to_json())?;
            Ok(0)
        }
        Command::Run { instance, strategy, events, gp } => {
            let mut inst = load_instance(&instance)?;
            let params = gp.params(seed);
            let init = match &strategy {
                Some(p) => Strategy::from_json(&inst, &read(p)?)?,
                None => initial_strategy(&inst)?,
            };
            let run = match &events {
                Some(p) => {
                    let events: Vec<ScheduledEvent> = serde_json::from_str(&read(p)?)
                        .with_context(|| format!("parsing {}", p.display()))?;
                    let r = run_with_events(&inst, &params, &init, &events)?;
                    inst = r.instance;
                    r.run
                }
                None => run_gp(&inst, &params, &init)?,
            };
            out.table(
                "trajectory",
                || trajectory_csv(&run.trajectory),
                || serde_json::to_string_pretty(&run_summary(&run)).unwrap(),
            )?;
            out.side("strategy.json", &run.strategy.to_json(&inst))?;
            if events.is_some() {
                out.side("final_instance.json", &inst.to_json())?;
            }
            eprintln!("cost {} residual {:.3e} after {} iterations ({:?})", run.cost, run.residual, run.iterations, run.stop);
            Ok(if run.converged() { 0 } else { EXIT_NOT_CONVERGED })
        }
        Command::Baseline { instance, method, gp } => {
            let inst = load_instance(&instance)?;
            let params = gp.params(seed);
            if method == Method::Oracle {
                let r = frank_wolfe_oracle(&inst, &OracleParams { exec: gp.exec(), ..OracleParams::default() })?;
                out.table(
                    "oracle",
                    || {
                        format!(
                            "cost,lower,gap,iterations,converged\n{},{},{},{},{}\n",
                            r.cost, r.lower, r.gap, r.iterations, r.converged
                        )
                    },
                    || {
                        serde_json::to_string_pretty(&serde_json::json!({
                            "cost": r.cost, "lower": r.lower, "gap": r.gap,
                            "iterations": r.iterations, "converged": r.converged,
                        }))
                        .unwrap()
                    },
                )?;
                return Ok(if r.converged { 0 } else { EXIT_NOT_CONVERGED });
            }
            let r = match method {
                Method::Gp => {
                    let run = run_gp(&inst, &params, &initial_strategy(&inst)?)?;
                    chainflow::baselines::BaselineResult {
                        method,
                        strategy: run.strategy,
                        flow: run.flow,
                        cost: run.cost,
                        residual: Some(run.residual),
                    }
                }
                Method::Spoc => spoc(&inst, &params)?,
                Method::Lcof => lcof(&inst, &params)?,
                _ => lpr_sc(&inst)?,
            };
            let residual = r.residual.map_or(String::new(), |x| x.to_string());
            out.table(
                &format!("baseline_{}", method.name().replace('-', "_")),
                || format!("method,cost,saturated,residual\n{},{},{},{residual}\n", r.method, r.cost, r.saturated()),
                || {
                    serde_json::to_string_pretty(&serde_json::json!({
                        "method": r.method, "cost": r.cost, "saturated": r.saturated(), "residual": r.residual,
                    }))
                    .unwrap()
                },
            )?;
            out.side("strategy.json", &r.strategy.to_json(&inst))?;
            Ok(if r.saturated() { EXIT_SATURATED } else { 0 })
        }
        Command::Check { instance, strategy, tol } => {
            let inst = load_instance(&instance)?;
            let phi = Strategy::from_json(&inst, &read(&strategy)?)?;
            let report = validate_strategy(&inst, &phi);
            if !report.is_valid() {
                return Err(anyhow!(Error::InvalidStrategy(format!("{report:?}"))));
            }
            let flow = solve_traffic(&inst, &phi)?;
            let marg = compute_marginals(&inst, &phi, &flow)?;
            let kkt = check_kkt(&inst, &phi, &marg, tol);
            let suff = check_sufficiency(&inst, &phi, &marg, tol);
            let cost = chainflow::total_cost(&flow, &inst.costs);
            out.table(
                "check",
                || {
                    let mut s = String::from("condition,satisfied,max_residual,violations,degenerate_rows\n");
                    for r in [&kkt, &suff] {
                        s.push_str(&format!(
                            "{},{},{},{},{}\n",
                            r.condition,
                            r.satisfied,
                            r.max_residual,
                            r.violations().count(),
                            r.degenerate_rows().count()
                        ));
                    }
                    s
                },
                || serde_json::to_string_pretty(&serde_json::json!({ "cost": cost, "kkt": kkt, "sufficiency": suff })).unwrap(),
            )?;
            Ok(if suff.satisfied { 0 } else { EXIT_NOT_CONVERGED })
        }
        Command::Compare { instance, scenario, methods, gp } => {
            let inst = match &instance {
                Some(p) => load_instance(p)?,
                None => generate(&scenario.config(seed)?)?,
            };
            let params = CompareParams { gp: gp.params(seed), oracle: OracleParams { exec: gp.exec(), ..OracleParams::default() }, ..CompareParams::default() };
            let report = compare(&inst, &methods, &params);
            out.table("compare", || report.to_csv(), || report.to_json())?;
            if let Err(e) = report.ensure_consistent() {
                eprintln!("error: {e}");
                return Ok(EXIT_INVALID);
            }
            Ok(0)
        }
        Command::Sweep { scenario, axis, values, methods, gnuplot, gp } => {
            let config = SweepConfig {
                scenario: scenario.config(seed)?,
                values,
                methods,
                params: CompareParams { gp: gp.params(seed), ..CompareParams::default() },
                exec: gp.exec(),
            };
            match axis {
                Axis::RateScale => {
                    let res = sweep_experiment(&config, SweepAxis::RateScale);
                    out.table("rate_sweep", || res.to_csv(), || res.to_json())?;
                    if gnuplot {
                        out.side("rate_sweep.dat", &res.to_gnuplot())?;
                    }
                    let violation = res.violations().next().cloned();
                    if let Some(v) = violation {
                        eprintln!("error: optimality violated: {v}");
                        return Ok(EXIT_INVALID);
                    }
                }
                Axis::L0Ratio => {
                    let res = hopcount_experiment(&config);
                    out.table("hopcount", || res.to_csv(), || res.to_json())?;
                    if gnuplot {
                        out.side("hopcount.dat", &res.to_gnuplot())?;
                    }
                }
            }
            Ok(0)
        }
    }
}
