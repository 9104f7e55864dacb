//! Command-line entry points: measure computation, route enumeration,
//! scenario generation, single-model solves, and δ sweeps.
//!
//! Exit codes: 0 success, 2 model infeasible/unbounded, 3 solver failure,
//! 4 input error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use fortifynet_core::fixtures;
use fortifynet_core::kshortest::{build_route_sets, RouteSet};
use fortifynet_core::measures::{self, Category, MeasureKind, ALL_MEASURES};
use fortifynet_core::models::{
    self, BigMPolicy, ObjectiveWeights, RiskParams, Solution,
};
use fortifynet_core::network::{
    load_demand, parse_tntp, DemandTable, FortificationParams, Network,
};
use fortifynet_core::pla::BprParams;
use fortifynet_core::scenario::{builtin_catalog, generate_from_measures, ScenarioSet};
use fortifynet_core::solver::{self, SolveStatus, SolverConfig};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_INPUT: u8 = 4;

#[derive(Parser)]
#[command(name = "fortifynet", version, about = "Transportation network fortification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// TNTP network file (defaults to the bundled Sioux Falls network).
    #[arg(long)]
    net: Option<PathBuf>,
    /// Demand CSV `origin,destination,demand` (defaults to the bundled table).
    #[arg(long)]
    demand: Option<PathBuf>,
    /// Multiplier applied to every demand entry. The default loads the
    /// bundled network heavily but deliverably; large multipliers (e.g.
    /// 100) push demand past physical capacity and the optimum degenerates
    /// to leaving almost everything undelivered.
    #[arg(long, default_value_t = 3.0)]
    demand_scale: f64,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Scenario source: `builtin` or a scenario JSON path.
    #[arg(long, default_value = "builtin")]
    scenarios: String,
    /// Routes per OD pair.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Piecewise-linear segments per congested link.
    #[arg(long, default_value_t = 20)]
    pla_n: usize,
    /// Fortification budget (number of nodes).
    #[arg(long, default_value_t = 4)]
    nf: u32,
    /// Per-node fortification costs as JSON ({"cost": {...}, "budget": n});
    /// unset means uniform cost 1 with budget --nf.
    #[arg(long)]
    fort: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    w1: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    w2: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    w3: f64,
    /// CVaR tail mass ε.
    #[arg(long, default_value_t = 0.10)]
    epsilon: f64,
    /// Risk blend δ (0 = risk-neutral, 1 = pure CVaR).
    #[arg(long, default_value_t = 0.30)]
    delta: f64,
    /// Solver executable (default: $FORTIFYNET_SOLVER).
    #[arg(long)]
    solver: Option<PathBuf>,
    /// Solver wall-clock limit in seconds.
    #[arg(long, default_value_t = 600.0)]
    time_limit: f64,
    /// Relative MIP gap tolerance.
    #[arg(long, default_value_t = 1e-4)]
    gap: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the 27 node vulnerability measures.
    Measures {
        #[command(flatten)]
        input: InputArgs,
        /// Restrict to a comma-separated list of measure names.
        #[arg(long)]
        measures: Option<String>,
        /// Rows per measure in the ranking file.
        #[arg(long, default_value_t = 8)]
        top: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Enumerate K-shortest routes for every demand pair.
    Routes {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Emit a scenario set (builtin catalog or measure-generated).
    Scenarios {
        #[command(flatten)]
        input: InputArgs,
        /// `builtin` or `generate`.
        #[arg(long, default_value = "builtin")]
        source: String,
        /// Nodes affected per generated scenario.
        #[arg(long, default_value_t = 8)]
        top_m: usize,
        /// Nonincreasing capacity-reduction rates, comma-separated.
        #[arg(long, default_value = "0.7,0.65,0.65,0.65,0.65,0.65,0.65,0.65")]
        rates: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Build and solve one fortification model.
    Solve {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        model_args: ModelArgs,
        /// baseline | rn | ra | rnra
        #[arg(long, default_value = "rn")]
        model: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve the hybrid model across several δ values.
    Sweep {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        model_args: ModelArgs,
        /// Comma-separated δ values.
        #[arg(long, default_value = "0.3,0.6,0.9")]
        deltas: String,
        /// Concurrent solves.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    fn input(msg: impl Into<String>) -> CliError {
        CliError { code: EXIT_INPUT, msg: msg.into() }
    }
    fn solver(msg: impl Into<String>) -> CliError {
        CliError { code: EXIT_SOLVER, msg: msg.into() }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

struct LoadedInput {
    network: Network,
    demand: DemandTable,
    digests: Value,
}

fn load_inputs(input: &InputArgs) -> Result<LoadedInput, CliError> {
    let (net_text, net_label) = match &input.net {
        Some(p) => (
            std::fs::read_to_string(p)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => (fixtures::SIOUX_FALLS_NET_TNTP.to_string(), "builtin:sioux-falls".to_string()),
    };
    let network =
        parse_tntp(&net_text).map_err(|e| CliError::input(format!("{net_label}: {e}")))?;
    let (dem_text, dem_label) = match &input.demand {
        Some(p) => (
            std::fs::read_to_string(p)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => (fixtures::SIOUX_FALLS_DEMAND_CSV.to_string(), "builtin:sioux-falls".to_string()),
    };
    let demand = load_demand(&dem_text, input.demand_scale)
        .map_err(|e| CliError::input(format!("{dem_label}: {e}")))?;
    let digests = json!({
        "network": {"source": net_label, "sha256": sha256_hex(net_text.as_bytes())},
        "demand": {
            "source": dem_label,
            "sha256": sha256_hex(dem_text.as_bytes()),
            "scale": input.demand_scale,
        },
    });
    Ok(LoadedInput { network, demand, digests })
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn parse_measure_filter(spec: &str) -> Result<Vec<MeasureKind>, CliError> {
    spec.split(',')
        .map(|raw| {
            let raw = raw.trim();
            ALL_MEASURES
                .iter()
                .copied()
                .find(|m| m.name() == raw)
                .ok_or_else(|| CliError::input(format!("unknown measure {raw:?}")))
        })
        .collect()
}

fn cmd_measures(
    input: &InputArgs,
    filter: Option<&str>,
    top: usize,
    out: &Path,
) -> Result<(), CliError> {
    let loaded = load_inputs(input)?;
    let selected: Vec<MeasureKind> = match filter {
        Some(spec) => parse_measure_filter(spec)?,
        None => ALL_MEASURES.to_vec(),
    };
    let all = measures::compute_all(&loaded.network, &loaded.demand)
        .map_err(|e| CliError::input(e.to_string()))?;
    let vectors: Vec<_> =
        all.into_iter().filter(|v| selected.contains(&v.kind)).collect();

    let mut matrix = String::from("node");
    for v in &vectors {
        matrix.push(',');
        matrix.push_str(v.kind.name());
    }
    matrix.push('\n');
    for node in loaded.network.nodes() {
        matrix.push_str(&node.to_string());
        for v in &vectors {
            matrix.push(',');
            if let Some(Some(x)) = v.values.get(&node) {
                matrix.push_str(&format!("{x}"));
            }
        }
        matrix.push('\n');
    }
    write_file(out, "measures.csv", &matrix)?;

    let mut ranking = String::from("measure,category,rank,node,value\n");
    for v in &vectors {
        for (rank, (node, value)) in measures::rank_nodes(v, top).iter().enumerate() {
            ranking.push_str(&format!(
                "{},{},{},{},{}\n",
                v.kind.name(),
                v.kind.category().name(),
                rank + 1,
                node,
                value
            ));
        }
    }
    write_file(out, "rankings.csv", &ranking)?;
    println!("wrote {} measures for {} nodes to {}", vectors.len(),
        loaded.network.node_count(), out.display());
    Ok(())
}

fn build_routes(
    loaded: &LoadedInput,
    k: usize,
) -> Result<RouteSet, CliError> {
    build_route_sets(&loaded.network, &loaded.demand, &loaded.network.free_flow_weights(), k)
        .map_err(|e| CliError::input(e.to_string()))
}

fn cmd_routes(input: &InputArgs, k: usize, out: &Path) -> Result<(), CliError> {
    let loaded = load_inputs(input)?;
    let routes = build_routes(&loaded, k)?;
    let doc = json!({
        "k": k,
        "inputs": loaded.digests,
        "routes": routes.to_json(&loaded.network),
    });
    write_file(out, "routes.json", &serde_json::to_string_pretty(&doc).unwrap())?;
    println!("wrote {} routes over {} OD pairs to {}", routes.route_count(),
        routes.pairs().count(), out.display());
    Ok(())
}

fn load_scenarios(spec: &str, loaded: &LoadedInput) -> Result<ScenarioSet, CliError> {
    match spec {
        "builtin" => Ok(builtin_catalog()),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read {path}: {e}")))?;
            let set = ScenarioSet::from_json(&text)
                .map_err(|e| CliError::input(format!("{path}: {e}")))?;
            for s in &set.scenarios {
                for node in s.affected.keys() {
                    if !loaded.network.contains_node(*node) {
                        return Err(CliError::input(format!(
                            "scenario {} names unknown node {node}",
                            s.id
                        )));
                    }
                }
            }
            Ok(set)
        }
    }
}

fn cmd_scenarios(
    input: &InputArgs,
    source: &str,
    top_m: usize,
    rates: &str,
    out: &Path,
) -> Result<(), CliError> {
    let loaded = load_inputs(input)?;
    let set = match source {
        "builtin" => builtin_catalog(),
        "generate" => {
            let rates: Vec<f64> = rates
                .split(',')
                .map(|r| r.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::input(format!("bad --rates list {rates:?}")))?;
            if rates.len() < top_m {
                return Err(CliError::input("--rates must list at least --top-m values"));
            }
            let vectors = measures::compute_all(&loaded.network, &loaded.demand)
                .map_err(|e| CliError::input(e.to_string()))?;
            let weights: BTreeMap<Category, f64> = [
                (Category::Connectivity, 1.0),
                (Category::Accessibility, 1.0),
                (Category::Criticality, 1.0),
            ]
            .into_iter()
            .collect();
            generate_from_measures(&vectors, top_m, &rates, &weights)
                .map_err(|e| CliError::input(e.to_string()))?
        }
        other => return Err(CliError::input(format!("--source must be builtin or generate, got {other:?}"))),
    };
    write_file(out, "scenarios.json", &set.to_json())?;
    println!("wrote {} scenarios to {}", set.scenarios.len(), out.display());
    Ok(())
}

fn solver_config(args: &ModelArgs) -> Result<SolverConfig, CliError> {
    let mut config = match &args.solver {
        Some(exe) => SolverConfig::pairs_solver(exe.clone()),
        None => SolverConfig::from_env().ok_or_else(|| {
            CliError::input(format!(
                "no solver: pass --solver or set ${}",
                solver::SOLVER_ENV
            ))
        })?,
    };
    config.time_limit = args.time_limit;
    config.gap_tolerance = args.gap;
    Ok(config)
}

fn fortification(args: &ModelArgs, network: &Network) -> Result<FortificationParams, CliError> {
    let fort = match &args.fort {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
            FortificationParams::from_json(&text)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        }
        None => FortificationParams::uniform(network, 1.0, args.nf),
    };
    fort.validate(network).map_err(|e| CliError::input(e.to_string()))?;
    Ok(fort)
}

struct SolveProduct {
    solution: Solution,
    weights: ObjectiveWeights,
    status: SolveStatus,
    objective: f64,
}

/// Build and solve one model instance; `model` is baseline|rn|ra|rnra.
#[allow(clippy::too_many_arguments)]
fn run_solve(
    loaded: &LoadedInput,
    routes: &RouteSet,
    scenarios: &ScenarioSet,
    fort: &FortificationParams,
    args: &ModelArgs,
    model: &str,
    delta_override: Option<f64>,
    config: &SolverConfig,
) -> Result<SolveProduct, CliError> {
    if !matches!(model, "baseline" | "rn" | "ra" | "rnra") {
        return Err(CliError::input(format!(
            "--model must be baseline|rn|ra|rnra, got {model:?}"
        )));
    }
    let bpr = BprParams::default();
    let mut weights = ObjectiveWeights::new(
        args.w1,
        args.w2,
        args.w3,
        1.0,
        1.0,
        1.0,
    )
    .map_err(|e| CliError::input(e.to_string()))?;
    {
        let defaults = ObjectiveWeights::defaults(&loaded.demand, routes, Some(fort))
            .map_err(|e| CliError::input(e.to_string()))?;
        weights.z_normalizer = defaults.z_normalizer;
        weights.demand_normalizer = defaults.demand_normalizer;
        weights.cost_normalizer = defaults.cost_normalizer;
    }

    // Two-phase normalization: scale z by the congested baseline max route
    // time at (near-)full delivery, so the travel-time and undelivered
    // terms are comparable. The probe run weighs delivery heavily and keeps
    // a token travel-time weight so t variables stay at their lower
    // envelope.
    if model != "baseline" {
        let probe_weights = ObjectiveWeights::new(
            1e-3,
            1.0,
            0.0,
            weights.z_normalizer,
            weights.demand_normalizer,
            weights.cost_normalizer,
        )
        .map_err(|e| CliError::input(e.to_string()))?;
        let base = models::build_baseline(
            &loaded.network,
            &loaded.demand,
            routes,
            bpr,
            &probe_weights,
            args.pla_n,
        )
        .map_err(|e| CliError::input(e.to_string()))?;
        let raw = solver::solve(&base, config).map_err(|e| CliError::solver(e.to_string()))?;
        if matches!(raw.status, SolveStatus::Optimal | SolveStatus::Feasible) {
            let sol = models::extract_solution(
                &loaded.network,
                &loaded.demand,
                routes,
                None,
                None,
                raw.status.as_str(),
                raw.objective,
                &raw.values,
            )
            .map_err(|e| CliError::solver(e.to_string()))?;
            let z = sol.outcomes.iter().map(|(_, o)| o.max_time).fold(0.0f64, f64::max);
            if z.is_finite() && z > 0.0 {
                weights.z_normalizer = z;
            }
        }
    }

    let risk = RiskParams::new(args.epsilon, delta_override.unwrap_or(args.delta))
        .map_err(|e| CliError::input(e.to_string()))?;
    let (milp, scen_opt, fort_opt): (_, Option<&ScenarioSet>, Option<&FortificationParams>) =
        match model {
            "baseline" => (
                models::build_baseline(
                    &loaded.network,
                    &loaded.demand,
                    routes,
                    bpr,
                    &weights,
                    args.pla_n,
                ),
                None,
                None,
            ),
            "rn" => (
                models::build_rn(
                    &loaded.network,
                    &loaded.demand,
                    routes,
                    scenarios,
                    fort,
                    bpr,
                    &weights,
                    args.pla_n,
                    BigMPolicy::default(),
                ),
                Some(scenarios),
                Some(fort),
            ),
            "ra" => (
                models::build_ra(
                    &loaded.network,
                    &loaded.demand,
                    routes,
                    scenarios,
                    fort,
                    bpr,
                    &weights,
                    args.pla_n,
                    BigMPolicy::default(),
                    risk,
                ),
                Some(scenarios),
                Some(fort),
            ),
            "rnra" => (
                models::build_rnra(
                    &loaded.network,
                    &loaded.demand,
                    routes,
                    scenarios,
                    fort,
                    bpr,
                    &weights,
                    args.pla_n,
                    BigMPolicy::default(),
                    risk,
                ),
                Some(scenarios),
                Some(fort),
            ),
            other => {
                return Err(CliError::input(format!(
                    "--model must be baseline|rn|ra|rnra, got {other:?}"
                )))
            }
        };
    let milp = milp.map_err(|e| CliError::input(e.to_string()))?;
    let raw = solver::solve(&milp, config).map_err(|e| CliError::solver(e.to_string()))?;
    match raw.status {
        SolveStatus::Optimal | SolveStatus::Feasible => {}
        SolveStatus::Infeasible | SolveStatus::Unbounded => {
            return Ok(SolveProduct {
                solution: Solution {
                    status: raw.status.as_str().to_string(),
                    objective: f64::NAN,
                    fortified: Default::default(),
                    outcomes: Vec::new(),
                    v: None,
                    violations: Vec::new(),
                },
                weights,
                status: raw.status,
                objective: f64::NAN,
            })
        }
        SolveStatus::Error => return Err(CliError::solver("solver reported an error status")),
    }
    let solution = models::extract_solution(
        &loaded.network,
        &loaded.demand,
        routes,
        scen_opt,
        fort_opt,
        raw.status.as_str(),
        raw.objective,
        &raw.values,
    )
    .map_err(|e| CliError::solver(e.to_string()))?;
    Ok(SolveProduct { solution, weights, status: raw.status, objective: raw.objective })
}

fn scenario_probability(scenarios: &ScenarioSet, label: &str) -> f64 {
    scenarios
        .scenarios
        .iter()
        .find(|s| s.id == label)
        .map(|s| s.probability)
        .unwrap_or(f64::NAN)
}

fn solution_report(
    product: &SolveProduct,
    loaded: &LoadedInput,
    scenarios: Option<&ScenarioSet>,
    model: &str,
    delta: f64,
    args: &ModelArgs,
) -> Value {
    let total_demand = loaded.demand.total_effective();
    let table: Vec<Value> = product
        .solution
        .outcomes
        .iter()
        .map(|(label, o)| {
            json!({
                "scenario": label,
                "probability": scenarios.map(|s| scenario_probability(s, label)),
                "relative_undelivered": o.total_undelivered() / total_demand,
                "total_travel_time": o.total_travel_time(),
                "max_route_time": o.max_time,
                "tau": o.tau,
            })
        })
        .collect();
    json!({
        "model": model,
        "status": product.solution.status,
        "objective": if product.objective.is_nan() { Value::Null } else { json!(product.objective) },
        "fortified": product.solution.fortified,
        "v": product.solution.v,
        "violations": product.solution.violations,
        "weights": {
            "w1": args.w1, "w2": args.w2, "w3": args.w3,
            "z_normalizer": product.weights.z_normalizer,
            "demand_normalizer": product.weights.demand_normalizer,
            "cost_normalizer": product.weights.cost_normalizer,
        },
        "risk": {"epsilon": args.epsilon, "delta": delta},
        "inputs": loaded.digests,
        "scenarios": table,
    })
}

fn write_solution_files(
    product: &SolveProduct,
    loaded: &LoadedInput,
    scenarios: Option<&ScenarioSet>,
    out: &Path,
) -> Result<(), CliError> {
    let total_demand = loaded.demand.total_effective();
    let mut table = String::from(
        "scenario,probability,relative_undelivered,total_travel_time,max_route_time\n",
    );
    for (label, o) in &product.solution.outcomes {
        let p = scenarios.map(|s| scenario_probability(s, label));
        table.push_str(&format!(
            "{label},{},{},{},{}\n",
            p.map(|p| p.to_string()).unwrap_or_default(),
            o.total_undelivered() / total_demand,
            o.total_travel_time(),
            o.max_time
        ));
    }
    write_file(out, "scenario_table.csv", &table)?;

    let mut flows = String::from("scenario,origin,destination,route,flow,route_time\n");
    for (label, o) in &product.solution.outcomes {
        for (&(orig, dest, route), &flow) in &o.route_flow {
            let rt = o.route_time.get(&(orig, dest, route)).copied().unwrap_or(f64::NAN);
            flows.push_str(&format!("{label},{orig},{dest},{route},{flow},{rt}\n"));
        }
    }
    write_file(out, "route_flows.csv", &flows)?;

    // Per-OD maximum route time, one block per stage label.
    let mut odmax = String::from("scenario,origin,destination,max_route_time\n");
    for (label, o) in &product.solution.outcomes {
        let mut per_od: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for (&(orig, dest, _), &rt) in &o.route_time {
            let e = per_od.entry((orig, dest)).or_insert(f64::NEG_INFINITY);
            *e = e.max(rt);
        }
        for ((orig, dest), rt) in per_od {
            odmax.push_str(&format!("{label},{orig},{dest},{rt}\n"));
        }
    }
    write_file(out, "od_max_times.csv", &odmax)?;

    let mut fortified = String::from("node\n");
    for n in &product.solution.fortified {
        fortified.push_str(&format!("{n}\n"));
    }
    write_file(out, "fortified.csv", &fortified)?;
    Ok(())
}

fn cmd_solve(
    input: &InputArgs,
    args: &ModelArgs,
    model: &str,
    out: &Path,
) -> Result<u8, CliError> {
    let loaded = load_inputs(input)?;
    let routes = build_routes(&loaded, args.k)?;
    let fort = fortification(args, &loaded.network)?;
    let scenarios = load_scenarios(&args.scenarios, &loaded)?;
    let config = solver_config(args)?;
    let product =
        run_solve(&loaded, &routes, &scenarios, &fort, args, model, None, &config)?;
    let with_scen = if model == "baseline" { None } else { Some(&scenarios) };
    let report = solution_report(&product, &loaded, with_scen, model, args.delta, args);
    write_file(out, "report.json", &serde_json::to_string_pretty(&report).unwrap())?;
    if matches!(product.status, SolveStatus::Optimal | SolveStatus::Feasible) {
        write_solution_files(&product, &loaded, with_scen, out)?;
        println!(
            "{model}: {} objective {:.6}, fortified {:?}",
            product.solution.status, product.objective, product.solution.fortified
        );
        Ok(0)
    } else {
        println!("{model}: {}", product.solution.status);
        Ok(EXIT_INFEASIBLE)
    }
}

fn cmd_sweep(
    input: &InputArgs,
    args: &ModelArgs,
    deltas: &str,
    jobs: usize,
    out: &Path,
) -> Result<u8, CliError> {
    let deltas: Vec<f64> = deltas
        .split(',')
        .map(|d| d.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::input(format!("bad --deltas list {deltas:?}")))?;
    if deltas.is_empty() {
        return Err(CliError::input("--deltas must list at least one value"));
    }
    let loaded = load_inputs(input)?;
    let routes = build_routes(&loaded, args.k)?;
    let fort = fortification(args, &loaded.network)?;
    let scenarios = load_scenarios(&args.scenarios, &loaded)?;
    let config = solver_config(args)?;

    let queue: Mutex<Vec<(usize, f64)>> =
        Mutex::new(deltas.iter().copied().enumerate().rev().collect());
    let results: Mutex<Vec<(usize, f64, Result<SolveProduct, String>)>> = Mutex::new(Vec::new());
    let jobs = jobs.max(1).min(deltas.len());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let Some((idx, delta)) = queue.lock().unwrap().pop() else { break };
                let outcome = run_solve(
                    &loaded, &routes, &scenarios, &fort, args, "rnra", Some(delta), &config,
                )
                .map_err(|e| e.msg);
                results.lock().unwrap().push((idx, delta, outcome));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(idx, _, _)| *idx);

    let total_demand = loaded.demand.total_effective();
    let mut combined =
        String::from("delta,scenario,probability,relative_undelivered,total_travel_time,max_route_time\n");
    let mut summary = String::from("delta,status,objective,fortified,mean_relative_undelivered\n");
    let mut reports = Vec::new();
    let mut any_solved = false;
    for (_, delta, outcome) in &results {
        match outcome {
            Ok(product) => {
                any_solved |= matches!(product.status, SolveStatus::Optimal | SolveStatus::Feasible);
                let mut mean_ud = 0.0;
                for (label, o) in &product.solution.outcomes {
                    let p = scenario_probability(&scenarios, label);
                    let rel = o.total_undelivered() / total_demand;
                    mean_ud += p * rel;
                    combined.push_str(&format!(
                        "{delta},{label},{p},{rel},{},{}\n",
                        o.total_travel_time(),
                        o.max_time
                    ));
                }
                let fortified: Vec<String> =
                    product.solution.fortified.iter().map(|n| n.to_string()).collect();
                summary.push_str(&format!(
                    "{delta},{},{},{},{mean_ud}\n",
                    product.solution.status,
                    product.objective,
                    fortified.join(" ")
                ));
                reports.push(solution_report(&product, &loaded, Some(&scenarios), "rnra", *delta, args));
            }
            Err(msg) => {
                summary.push_str(&format!("{delta},error,,,\n"));
                reports.push(json!({"model": "rnra", "delta": delta, "status": "error", "error": msg}));
            }
        }
    }
    write_file(out, "sweep.csv", &combined)?;
    write_file(out, "sweep_summary.csv", &summary)?;
    let doc = json!({"deltas": deltas, "inputs": loaded.digests, "runs": reports});
    write_file(out, "sweep_report.json", &serde_json::to_string_pretty(&doc).unwrap())?;
    println!("sweep over {} delta values written to {}", results.len(), out.display());
    Ok(if any_solved { 0 } else { EXIT_SOLVER })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome: Result<u8, CliError> = match &cli.command {
        Command::Measures { input, measures, top, out } => {
            cmd_measures(input, measures.as_deref(), *top, out).map(|()| 0)
        }
        Command::Routes { input, k, out } => cmd_routes(input, *k, out).map(|()| 0),
        Command::Scenarios { input, source, top_m, rates, out } => {
            cmd_scenarios(input, source, *top_m, rates, out).map(|()| 0)
        }
        Command::Solve { input, model_args, model, out } => {
            cmd_solve(input, model_args, model, out)
        }
        Command::Sweep { input, model_args, deltas, jobs, out } => {
            cmd_sweep(input, model_args, deltas, *jobs, out)
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("fortifynet: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
