//! Solver bridge: CPLEX LP-format serialization and parsing, external
//! solver invocation over a subprocess contract, and the brute-force
//! oracle used to cross-check MILP optima on tiny instances.
//!
//! The subprocess contract is solver-agnostic: an executable plus an
//! argument template with `{model}` and `{solution}` placeholders. Two
//! solution dialects are understood — a `name value` pair-per-line format
//! (with `status` and `objective` header lines) and the common XML
//! solution format. `FORTIFYNET_SOLVER` names the default executable.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

use crate::kshortest::RouteSet;
use crate::milp::{LinearExpr, MilpModel, Sense, VarKind};
use crate::models::{
    governing_disruption, ObjectiveWeights, RiskParams,
};
use crate::network::{DemandTable, FortificationParams, Network, NodeId};
use crate::pla::BprParams;
use crate::scenario::ScenarioSet;

pub const SOLVER_ENV: &str = "FORTIFYNET_SOLVER";

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("objective has a constant term ({0}); LP format cannot express it")]
    ObjectiveConstant(f64),
    #[error("name {0:?} is not legal in the LP dialect")]
    BadName(String),
    #[error("LP parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("solver executable {0:?} not found")]
    NoExecutable(PathBuf),
    #[error("solver run failed: {0}")]
    Run(String),
    #[error("solution parse error: {0}")]
    Solution(String),
    #[error("oracle: {0}")]
    Oracle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Milp(#[from] crate::milp::MilpError),
}

// ---------------------------------------------------------------------------
// LP writing

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:.16e}")
    }
}

fn lp_name_ok(name: &str) -> bool {
    // The structured names never start with 'e'/'E', which old LP readers
    // can confuse with exponents.
    !name.is_empty()
        && !name.starts_with(['e', 'E'])
        && name.chars().next().map(|c| c.is_ascii_alphabetic() || c == '_').unwrap_or(false)
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '(' | ')' | '.'))
}

fn write_expr(out: &mut String, expr: &LinearExpr) {
    let mut first = true;
    for (name, coef) in expr.terms() {
        if first {
            if coef < 0.0 {
                out.push_str("- ");
            }
            first = false;
        } else if coef < 0.0 {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        out.push_str(&fmt_num(coef.abs()));
        out.push(' ');
        out.push_str(name);
    }
    if first {
        out.push('0');
    }
}

/// Serialize to CPLEX LP format. Deterministic: identical models yield
/// identical bytes.
pub fn write_lp(model: &MilpModel) -> Result<String, SolverError> {
    if model.objective().constant != 0.0 {
        return Err(SolverError::ObjectiveConstant(model.objective().constant));
    }
    for v in model.variables() {
        if !lp_name_ok(&v.name) {
            return Err(SolverError::BadName(v.name.clone()));
        }
    }
    for c in model.constraints() {
        if !lp_name_ok(&c.name) {
            return Err(SolverError::BadName(c.name.clone()));
        }
    }
    let mut out = String::new();
    out.push_str("Minimize\n obj: ");
    write_expr(&mut out, model.objective());
    out.push_str("\nSubject To\n");
    for c in model.constraints() {
        out.push(' ');
        out.push_str(&c.name);
        out.push_str(": ");
        write_expr(&mut out, &c.expr);
        out.push_str(match c.sense {
            Sense::Le => " <= ",
            Sense::Ge => " >= ",
            Sense::Eq => " = ",
        });
        out.push_str(&fmt_num(c.rhs));
        out.push('\n');
    }
    out.push_str("Bounds\n");
    let mut sorted: Vec<_> = model.variables().iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    for v in &sorted {
        if v.kind == VarKind::Binary {
            continue;
        }
        let default = v.lower == 0.0 && v.upper.is_infinite();
        if default {
            continue;
        }
        out.push(' ');
        if v.lower.is_infinite() && v.upper.is_infinite() {
            out.push_str(&v.name);
            out.push_str(" free");
        } else if v.lower == 0.0 {
            out.push_str(&v.name);
            out.push_str(" <= ");
            out.push_str(&fmt_num(v.upper));
        } else if v.upper.is_infinite() {
            out.push_str(&v.name);
            out.push_str(" >= ");
            out.push_str(&fmt_num(v.lower));
        } else {
            out.push_str(&fmt_num(v.lower));
            out.push_str(" <= ");
            out.push_str(&v.name);
            out.push_str(" <= ");
            out.push_str(&fmt_num(v.upper));
        }
        out.push('\n');
    }
    let binaries: Vec<&str> = sorted
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binary\n");
        for b in binaries {
            out.push(' ');
            out.push_str(b);
            out.push('\n');
        }
    }
    out.push_str("End\n");
    Ok(out)
}

// ---------------------------------------------------------------------------
// LP parsing

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binary,
    General,
    End,
}

fn section_for(line: &str) -> Option<Section> {
    let l = line.trim().to_ascii_lowercase();
    match l.as_str() {
        "minimize" | "minimise" | "min" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
        "bounds" => Some(Section::Bounds),
        "binary" | "binaries" | "bin" => Some(Section::Binary),
        "general" | "generals" | "gen" | "integer" | "integers" => Some(Section::General),
        "end" => Some(Section::End),
        _ => None,
    }
}

fn parse_terms(
    model: &mut MilpModel,
    tokens: &[&str],
    line: usize,
) -> Result<LinearExpr, SolverError> {
    let mut expr = LinearExpr::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for &tok in tokens {
        match tok {
            "+" => {}
            "-" => sign = -sign,
            _ => {
                if let Ok(num) = tok.parse::<f64>() {
                    coef = Some(coef.unwrap_or(1.0) * num);
                } else {
                    if !model.has_variable(tok) {
                        model.add_variable(tok, VarKind::Continuous, 0.0, f64::INFINITY)?;
                    }
                    expr.add(tok, sign * coef.take().unwrap_or(1.0));
                    sign = 1.0;
                }
            }
        }
    }
    if let Some(c) = coef {
        // Trailing bare number acts as a constant term.
        expr.constant += sign * c;
        let _ = line;
    }
    Ok(expr)
}

/// Parse CPLEX LP text back into a model (minimize-sense only).
pub fn parse_lp(text: &str) -> Result<MilpModel, SolverError> {
    let mut model = MilpModel::new();
    let mut section = Section::Preamble;

    // Constraint/objective rows can wrap; gather token runs per row first.
    let mut objective_tokens: Vec<String> = Vec::new();
    let mut rows: Vec<(usize, String, Vec<String>)> = Vec::new();
    let mut bounds_lines: Vec<(usize, String)> = Vec::new();
    let mut binary_names: Vec<String> = Vec::new();
    let mut general_names: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(next) = section_for(line) {
            section = next;
            continue;
        }
        match section {
            Section::Preamble => {
                return Err(SolverError::Parse {
                    line: line_no,
                    msg: format!("unexpected content before a section header: {line:?}"),
                })
            }
            Section::End => {}
            Section::Objective => {
                for tok in line.split_whitespace() {
                    let tok = tok.strip_prefix("obj:").unwrap_or(tok);
                    if tok == "obj" || tok == ":" || tok.is_empty() {
                        continue;
                    }
                    objective_tokens.push(tok.trim_end_matches(':').to_string());
                }
            }
            Section::Constraints => {
                let mut tokens = line.split_whitespace().peekable();
                while let Some(tok) = tokens.next() {
                    if let Some(label) = tok.strip_suffix(':') {
                        rows.push((line_no, label.to_string(), Vec::new()));
                    } else if tokens.peek() == Some(&":") {
                        rows.push((line_no, tok.to_string(), Vec::new()));
                        tokens.next();
                    } else {
                        match rows.last_mut() {
                            Some((_, _, body)) => body.push(tok.to_string()),
                            None => {
                                // Unnamed first row.
                                rows.push((line_no, format!("c{}", rows.len() + 1), vec![tok.to_string()]));
                            }
                        }
                    }
                }
            }
            Section::Bounds => bounds_lines.push((line_no, line.to_string())),
            Section::Binary => binary_names.extend(line.split_whitespace().map(String::from)),
            Section::General => general_names.extend(line.split_whitespace().map(String::from)),
        }
    }

    let obj_refs: Vec<&str> = objective_tokens.iter().map(String::as_str).collect();
    let objective = parse_terms(&mut model, &obj_refs, 0)?;

    let mut constraints = Vec::new();
    for (line_no, name, body) in rows {
        let sense_pos = body
            .iter()
            .position(|t| matches!(t.as_str(), "<=" | ">=" | "=" | "<" | ">"))
            .ok_or_else(|| SolverError::Parse {
                line: line_no,
                msg: format!("constraint {name:?} has no relational operator"),
            })?;
        let sense = match body[sense_pos].as_str() {
            "<=" | "<" => Sense::Le,
            ">=" | ">" => Sense::Ge,
            _ => Sense::Eq,
        };
        let lhs_refs: Vec<&str> = body[..sense_pos].iter().map(String::as_str).collect();
        let expr = parse_terms(&mut model, &lhs_refs, line_no)?;
        let rhs_text: String = body[sense_pos + 1..].concat();
        let rhs: f64 = rhs_text.parse().map_err(|_| SolverError::Parse {
            line: line_no,
            msg: format!("bad right-hand side {rhs_text:?}"),
        })?;
        constraints.push((line_no, name, expr, sense, rhs));
    }

    for (line_no, bound) in bounds_lines {
        let toks: Vec<&str> = bound.split_whitespace().collect();
        let bad = |msg: &str| SolverError::Parse { line: line_no, msg: msg.to_string() };
        let ensure = |model: &mut MilpModel, name: &str| -> Result<(), SolverError> {
            if !model.has_variable(name) {
                model.add_variable(name, VarKind::Continuous, 0.0, f64::INFINITY)?;
            }
            Ok(())
        };
        match toks.as_slice() {
            [name, "free"] => {
                ensure(&mut model, name)?;
                model.set_bounds(name, f64::NEG_INFINITY, f64::INFINITY)?;
            }
            [name, op, num] => {
                let v: f64 = num.parse().map_err(|_| bad("bad bound value"))?;
                ensure(&mut model, name)?;
                let old = model.variable(name).unwrap();
                let (lo, up) = (old.lower, old.upper);
                match *op {
                    "<=" | "<" => model.set_bounds(name, lo, v)?,
                    ">=" | ">" => model.set_bounds(name, v, up)?,
                    "=" => model.set_bounds(name, v, v)?,
                    _ => return Err(bad("bad bound operator")),
                }
            }
            [lo, "<=", name, "<=", up] | [lo, "<", name, "<", up] => {
                let lo: f64 = lo.parse().map_err(|_| bad("bad lower bound"))?;
                let up: f64 = up.parse().map_err(|_| bad("bad upper bound"))?;
                ensure(&mut model, name)?;
                model.set_bounds(name, lo, up)?;
            }
            _ => return Err(bad("unrecognized bounds line")),
        }
    }
    for name in binary_names {
        if !model.has_variable(&name) {
            model.add_variable(&name, VarKind::Binary, 0.0, 1.0)?;
        } else {
            model.set_kind(&name, VarKind::Binary)?;
        }
    }
    for name in general_names {
        // Integer variables are treated as binaries only when their bounds
        // say so; otherwise kept continuous (this toolkit emits none).
        if !model.has_variable(&name) {
            model.add_variable(&name, VarKind::Continuous, 0.0, f64::INFINITY)?;
        }
    }

    for (line_no, name, expr, sense, rhs) in constraints {
        model.add_constraint(&name, expr, sense, rhs).map_err(|e| SolverError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
    }
    model.set_objective(objective)?;
    Ok(model)
}

// ---------------------------------------------------------------------------
// Subprocess solving

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Unbounded,
    Error,
}

impl SolveStatus {
    pub fn parse(token: &str) -> SolveStatus {
        match token.to_ascii_lowercase().as_str() {
            "optimal" | "optimum" => SolveStatus::Optimal,
            "feasible" | "suboptimal" | "incumbent" => SolveStatus::Feasible,
            "infeasible" => SolveStatus::Infeasible,
            "unbounded" => SolveStatus::Unbounded,
            _ => SolveStatus::Error,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionDialect {
    /// `status <token>` / `objective <num>` / `name value` lines.
    Pairs,
    /// `<variable name=… value=…/>` XML solution files.
    Xml,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub executable: PathBuf,
    /// Arguments with `{model}` / `{solution}` placeholders.
    pub args_template: Vec<String>,
    pub time_limit: f64,
    pub gap_tolerance: f64,
    pub dialect: SolutionDialect,
    /// Retain the temp model/solution files under this directory.
    pub keep_artifacts: Option<PathBuf>,
}

impl SolverConfig {
    /// Shim-style invocation: `exe {model} {solution} --time-limit s --gap g`.
    pub fn pairs_solver(executable: impl Into<PathBuf>) -> Self {
        SolverConfig {
            executable: executable.into(),
            args_template: vec![
                "{model}".into(),
                "{solution}".into(),
                "--time-limit".into(),
                "{time_limit}".into(),
                "--gap".into(),
                "{gap}".into(),
            ],
            time_limit: 600.0,
            gap_tolerance: 1e-6,
            dialect: SolutionDialect::Pairs,
            keep_artifacts: None,
        }
    }

    /// Default executable from `FORTIFYNET_SOLVER`.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(SOLVER_ENV).map(|exe| SolverConfig::pairs_solver(PathBuf::from(exe)))
    }
}

pub fn parse_pairs_solution(text: &str) -> Result<RawSolution, SolverError> {
    let mut status = None;
    let mut objective = None;
    let mut values = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(key), Some(val)) = (it.next(), it.next()) else {
            return Err(SolverError::Solution(format!("bad line {line:?}")));
        };
        match key {
            "status" => status = Some(SolveStatus::parse(val)),
            "objective" => {
                objective =
                    Some(val.parse::<f64>().map_err(|_| {
                        SolverError::Solution(format!("bad objective {val:?}"))
                    })?)
            }
            name => {
                let v: f64 = val
                    .parse()
                    .map_err(|_| SolverError::Solution(format!("bad value for {name:?}")))?;
                values.insert(name.to_string(), v);
            }
        }
    }
    let status = status.ok_or_else(|| SolverError::Solution("missing status line".into()))?;
    Ok(RawSolution { status, objective: objective.unwrap_or(f64::NAN), values })
}

fn xml_attr(tag: &str, attr: &str) -> Option<String> {
    let needle = format!("{attr}=\"");
    let start = tag.find(&needle)? + needle.len();
    let end = tag[start..].find('"')? + start;
    Some(tag[start..end].to_string())
}

pub fn parse_xml_solution(text: &str) -> Result<RawSolution, SolverError> {
    let mut status = SolveStatus::Error;
    let mut objective = f64::NAN;
    let mut values = BTreeMap::new();
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        let tail = &rest[open..];
        let close = tail
            .find('>')
            .ok_or_else(|| SolverError::Solution("unterminated tag".into()))?;
        let tag = &tail[..close + 1];
        if tag.starts_with("<header") || tag.starts_with("<CPLEXSolution") {
            if let Some(s) = xml_attr(tag, "solutionStatusString").or_else(|| xml_attr(tag, "status"))
            {
                status = SolveStatus::parse(s.split_whitespace().next().unwrap_or("error"));
            }
            if let Some(o) = xml_attr(tag, "objectiveValue") {
                objective = o
                    .parse()
                    .map_err(|_| SolverError::Solution(format!("bad objectiveValue {o:?}")))?;
            }
        } else if tag.starts_with("<variable ") {
            let name = xml_attr(tag, "name")
                .ok_or_else(|| SolverError::Solution("variable tag without name".into()))?;
            let value = xml_attr(tag, "value")
                .ok_or_else(|| SolverError::Solution("variable tag without value".into()))?;
            values.insert(
                name,
                value
                    .parse()
                    .map_err(|_| SolverError::Solution(format!("bad value {value:?}")))?,
            );
        }
        rest = &tail[close + 1..];
    }
    Ok(RawSolution { status, objective, values })
}

/// Write the model, run the configured solver, and parse its solution.
pub fn solve(model: &MilpModel, config: &SolverConfig) -> Result<RawSolution, SolverError> {
    let lp = write_lp(model)?;
    let dir = tempfile::tempdir()?;
    let model_path = dir.path().join("model.lp");
    let solution_path = dir.path().join("solution.sol");
    std::fs::write(&model_path, &lp)?;

    let substitute = |arg: &str| -> String {
        arg.replace("{model}", &model_path.to_string_lossy())
            .replace("{solution}", &solution_path.to_string_lossy())
            .replace("{time_limit}", &format!("{}", config.time_limit))
            .replace("{gap}", &format!("{}", config.gap_tolerance))
    };
    let args: Vec<String> = config.args_template.iter().map(|a| substitute(a)).collect();
    let output = Command::new(&config.executable).args(&args).output().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            SolverError::NoExecutable(config.executable.clone())
        } else {
            SolverError::Run(e.to_string())
        }
    })?;

    let result = if solution_path.exists() {
        let text = std::fs::read_to_string(&solution_path)?;
        match config.dialect {
            SolutionDialect::Pairs => parse_pairs_solution(&text),
            SolutionDialect::Xml => parse_xml_solution(&text),
        }
    } else if output.status.success() {
        Err(SolverError::Solution("solver exited cleanly but wrote no solution file".into()))
    } else {
        Err(SolverError::Run(format!(
            "exit {:?}: {}",
            output.status.code(),
            String::from_utf8_lossy(&output.stderr)
        )))
    };

    if let Some(keep) = &config.keep_artifacts {
        std::fs::create_dir_all(keep)?;
        let _ = std::fs::copy(&model_path, keep.join("model.lp"));
        if solution_path.exists() {
            let _ = std::fs::copy(&solution_path, keep.join("solution.sol"));
        }
    }
    result
}

/// The solver's objective must equal the objective recomputed from the
/// returned variable values; returns the absolute gap.
pub fn objective_gap(model: &MilpModel, raw: &RawSolution) -> f64 {
    (model.objective().evaluate(&raw.values) - raw.objective).abs()
}

// ---------------------------------------------------------------------------
// Brute-force oracle

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMode {
    Baseline,
    Rn,
    Ra(RiskParams),
    Rnra(RiskParams),
}

const ORACLE_COMBO_CAP: usize = 2_000_000;
const RATE_CLAMP: f64 = 0.999;

/// Exhaustive optimum over fortification subsets and grid route flows,
/// evaluating the exact nonlinear BPR objective (no PLA) and exact CVaR.
///
/// Intended for tiny instances only (≤ 4 nodes, ≤ 2 scenarios); errors when
/// the flow-assignment combination count exceeds the cap.
#[allow(clippy::too_many_arguments)]
pub fn oracle_solve(
    network: &Network,
    demand: &DemandTable,
    routes: &RouteSet,
    scenarios: Option<&ScenarioSet>,
    fort: Option<&FortificationParams>,
    bpr: BprParams,
    weights: &ObjectiveWeights,
    mode: OracleMode,
    flow_grid: f64,
) -> Result<(f64, BTreeSet<NodeId>), SolverError> {
    assert!(flow_grid > 0.0);
    let nodes: Vec<NodeId> = network.nodes().collect();
    let budget = fort.map(|f| f.budget as usize).unwrap_or(0);

    // Every |x| ≤ budget subset (just the empty set for the baseline).
    let subsets: Vec<BTreeSet<NodeId>> = match mode {
        OracleMode::Baseline => vec![BTreeSet::new()],
        _ => {
            let mut subs = Vec::new();
            let n = nodes.len();
            assert!(n <= 20, "oracle subset enumeration is for tiny instances");
            for mask in 0u32..(1 << n) {
                let set: BTreeSet<NodeId> = nodes
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| mask & (1 << i) != 0)
                    .map(|(_, &v)| v)
                    .collect();
                if set.len() <= budget {
                    subs.push(set);
                }
            }
            subs
        }
    };

    // Grid flow splits per OD pair: every route-flow vector on the grid
    // with sum ≤ demand.
    let pair_splits: Vec<((NodeId, NodeId), Vec<Vec<f64>>)> = routes
        .iter()
        .map(|((o, d), paths)| {
            let dem = demand.effective_demand(o, d).unwrap_or(0.0);
            let steps = (dem / flow_grid).floor() as usize;
            let mut splits = Vec::new();
            let mut current = vec![0.0; paths.len()];
            fn rec(
                route: usize,
                remaining: usize,
                grid: f64,
                current: &mut Vec<f64>,
                out: &mut Vec<Vec<f64>>,
            ) {
                if route == current.len() {
                    out.push(current.clone());
                    return;
                }
                for s in 0..=remaining {
                    current[route] = s as f64 * grid;
                    rec(route + 1, remaining - s, grid, current, out);
                }
                current[route] = 0.0;
            }
            rec(0, steps, flow_grid, &mut current, &mut splits);
            ((o, d), splits)
        })
        .collect();
    let combos: usize = pair_splits.iter().map(|(_, s)| s.len()).product();
    if combos == 0 || combos > ORACLE_COMBO_CAP {
        return Err(SolverError::Oracle(format!("{combos} flow combinations exceed the cap")));
    }

    let cost_term = |x: &BTreeSet<NodeId>| -> f64 {
        let Some(f) = fort else { return 0.0 };
        let total: f64 = x.iter().map(|n| f.cost.get(n).copied().unwrap_or(0.0)).sum();
        weights.w3 * total / weights.cost_normalizer
    };

    // Best scenario cost for a fixed fortification set: exact BPR times at
    // the scenario's effective capacities, z over all routes.
    let stage_cost = |x: &BTreeSet<NodeId>, scenario: Option<&crate::scenario::Scenario>| -> f64 {
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; pair_splits.len()];
        loop {
            // Assemble link flows for this assignment.
            let mut h: BTreeMap<usize, f64> = BTreeMap::new();
            let mut undelivered = 0.0;
            let mut feasible = true;
            for (p, (od, splits)) in pair_splits.iter().enumerate() {
                let flows = &splits[idx[p]];
                let dem = demand.effective_demand(od.0, od.1).unwrap_or(0.0);
                undelivered += dem - flows.iter().sum::<f64>();
                for (r, &f) in flows.iter().enumerate() {
                    if f > 0.0 {
                        for &l in routes.routes(od.0, od.1)[r].edges() {
                            *h.entry(l).or_insert(0.0) += f;
                        }
                    }
                }
            }
            let mut times: BTreeMap<usize, f64> = BTreeMap::new();
            for ((_, _), paths) in routes.iter() {
                for p in paths {
                    for &l in p.edges() {
                        times.entry(l).or_insert(0.0);
                    }
                }
            }
            for (&l, t) in times.iter_mut() {
                let link = network.link(l);
                let flow = h.get(&l).copied().unwrap_or(0.0);
                let eff = match scenario.and_then(|s| governing_disruption(network, s, l)) {
                    None => link.capacity,
                    Some((gov, theta)) => {
                        let theta = if theta < 1.0 { theta.min(RATE_CLAMP) } else { theta };
                        if x.contains(&gov) {
                            link.capacity * (1.0 - (1.0 - scenario.unwrap().gamma) * theta)
                        } else {
                            link.capacity * (1.0 - theta)
                        }
                    }
                };
                if eff <= 0.0 {
                    if flow > 0.0 {
                        feasible = false;
                        break;
                    }
                    *t = link.free_flow_time;
                } else {
                    *t = link.free_flow_time
                        * (1.0 + bpr.alpha * (flow / eff).powf(bpr.beta));
                }
            }
            if feasible {
                let mut z = 0.0f64;
                for ((_, _), paths) in routes.iter() {
                    for p in paths {
                        let rt: f64 = p.edges().iter().map(|l| times[l]).sum();
                        z = z.max(rt);
                    }
                }
                let cost = weights.w1 * z / weights.z_normalizer
                    + weights.w2 * undelivered / weights.demand_normalizer;
                best = best.min(cost);
            }
            // Advance the mixed-radix index.
            let mut p = 0;
            loop {
                if p == idx.len() {
                    return best;
                }
                idx[p] += 1;
                if idx[p] < pair_splits[p].1.len() {
                    break;
                }
                idx[p] = 0;
                p += 1;
            }
        }
    };

    let cvar = |costs: &[(f64, f64)], epsilon: f64| -> f64 {
        // min over v ≥ 0 of v + (1/ε)·Σ π (c − v)⁺ ; optimum at 0 or a cost.
        let mut candidates: Vec<f64> = costs.iter().map(|&(c, _)| c).collect();
        candidates.push(0.0);
        candidates
            .iter()
            .map(|&v| {
                v + costs.iter().map(|&(c, p)| p * (c - v).max(0.0)).sum::<f64>() / epsilon
            })
            .fold(f64::INFINITY, f64::min)
    };

    let mut best = (f64::INFINITY, BTreeSet::new());
    for x in subsets {
        let objective = match (mode, scenarios) {
            (OracleMode::Baseline, _) => stage_cost(&x, None),
            (_, None) => return Err(SolverError::Oracle("scenario set required".into())),
            (m, Some(set)) => {
                let costs: Vec<(f64, f64)> = set
                    .scenarios
                    .iter()
                    .map(|s| (stage_cost(&x, Some(s)), s.probability))
                    .collect();
                let expected: f64 = costs.iter().map(|&(c, p)| c * p).sum();
                match m {
                    OracleMode::Rn => cost_term(&x) + expected,
                    OracleMode::Ra(r) => cost_term(&x) + cvar(&costs, r.epsilon),
                    OracleMode::Rnra(r) => {
                        cost_term(&x)
                            + (1.0 - r.delta) * expected
                            + r.delta * cvar(&costs, r.epsilon)
                    }
                    OracleMode::Baseline => unreachable!(),
                }
            }
        };
        if objective < best.0 {
            best = (objective, x);
        }
    }
    Ok(best)
}

/// Convenience: make a path executable look absolute for configs in tests.
pub fn executable_exists(path: &Path) -> bool {
    path.exists()
}
