//! Solver shim: reads a CPLEX LP file, solves it with HiGHS, and writes a
//! `status` / `objective` / `name value` pairs solution file.
//!
//! Usage: `fortifynet-highs MODEL.lp SOLUTION.sol [--time-limit SECONDS]
//! [--gap REL_GAP] [--threads N] [--verbose]`
//!
//! Exit codes: 0 solved (optimal or feasible incumbent), 2 infeasible or
//! unbounded, 3 solver failure, 4 bad arguments or unreadable input.

use std::collections::HashMap;
use std::process::ExitCode;

use highs::{HighsModelStatus, RowProblem, Sense as HighsSense};

use fortifynet_core::milp::{MilpModel, Sense, VarKind};
use fortifynet_core::solver::parse_lp;

struct Args {
    model: String,
    solution: String,
    time_limit: f64,
    gap: f64,
    threads: i32,
    verbose: bool,
}

fn parse_args() -> Result<Args, String> {
    let mut positional = Vec::new();
    let mut time_limit = 600.0;
    let mut gap = 1e-6;
    let mut threads = 0;
    let mut verbose = false;
    let mut it = std::env::args().skip(1);
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--time-limit" => {
                time_limit = it
                    .next()
                    .ok_or("--time-limit needs a value")?
                    .parse()
                    .map_err(|_| "bad --time-limit value".to_string())?;
            }
            "--gap" => {
                gap = it
                    .next()
                    .ok_or("--gap needs a value")?
                    .parse()
                    .map_err(|_| "bad --gap value".to_string())?;
            }
            "--threads" => {
                threads = it
                    .next()
                    .ok_or("--threads needs a value")?
                    .parse()
                    .map_err(|_| "bad --threads value".to_string())?;
            }
            "--verbose" => verbose = true,
            other if other.starts_with("--") => {
                return Err(format!("unknown flag {other}"));
            }
            _ => positional.push(arg),
        }
    }
    if positional.len() != 2 {
        return Err("expected exactly two arguments: MODEL.lp SOLUTION.sol".into());
    }
    let solution = positional.pop().unwrap();
    let model = positional.pop().unwrap();
    Ok(Args { model, solution, time_limit, gap, threads, verbose })
}

fn status_token(status: HighsModelStatus, has_incumbent: bool) -> &'static str {
    match status {
        HighsModelStatus::Optimal => "optimal",
        HighsModelStatus::Infeasible => "infeasible",
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => "unbounded",
        HighsModelStatus::ReachedTimeLimit
        | HighsModelStatus::ReachedIterationLimit
        | HighsModelStatus::ObjectiveBound
        | HighsModelStatus::ObjectiveTarget => {
            if has_incumbent {
                "feasible"
            } else {
                "error"
            }
        }
        _ => "error",
    }
}

fn run(args: &Args) -> Result<&'static str, (u8, String)> {
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| (4, format!("cannot read {}: {e}", args.model)))?;
    let model: MilpModel =
        parse_lp(&text).map_err(|e| (4, format!("cannot parse {}: {e}", args.model)))?;

    let mut problem = RowProblem::new();
    let mut cols = Vec::with_capacity(model.variables().len());
    let objective: HashMap<&str, f64> = model
        .objective()
        .terms()
        .map(|(n, c)| (n, c))
        .collect();
    for v in model.variables() {
        let coef = objective.get(v.name.as_str()).copied().unwrap_or(0.0);
        let col = problem.add_column_with_integrality(
            coef,
            v.lower..=v.upper,
            v.kind == VarKind::Binary,
        );
        cols.push(col);
    }
    let index: HashMap<&str, usize> = model
        .variables()
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    for c in model.constraints() {
        let factors: Vec<(highs::Col, f64)> = c
            .expr
            .terms()
            .map(|(name, coef)| (cols[index[name]], coef))
            .collect();
        match c.sense {
            Sense::Le => problem.add_row(..=c.rhs, &factors),
            Sense::Ge => problem.add_row(c.rhs.., &factors),
            Sense::Eq => problem.add_row(c.rhs..=c.rhs, &factors),
        };
    }

    let mut solver = problem.optimise(HighsSense::Minimise);
    if !args.verbose {
        solver.make_quiet();
    }
    solver.set_option("time_limit", args.time_limit);
    solver.set_option("mip_rel_gap", args.gap);
    if args.threads > 0 {
        solver.set_option("threads", args.threads);
    }
    let solved = solver.try_solve().map_err(|e| (3, format!("HiGHS failed: {e:?}")))?;

    let status = solved.status();
    let values = solved.get_solution();
    let columns = values.columns();
    let has_incumbent = columns.len() == model.variables().len()
        && columns.iter().all(|v| v.is_finite())
        && solved.objective_value().is_finite();
    let token = status_token(status, has_incumbent);

    let mut out = String::new();
    out.push_str("status ");
    out.push_str(token);
    out.push('\n');
    if matches!(token, "optimal" | "feasible") {
        out.push_str(&format!("objective {:.16e}\n", solved.objective_value()));
        for (v, &value) in model.variables().iter().zip(columns) {
            out.push_str(&v.name);
            out.push(' ');
            out.push_str(&format!("{value:.16e}\n"));
        }
    }
    std::fs::write(&args.solution, out)
        .map_err(|e| (3, format!("cannot write {}: {e}", args.solution)))?;

    Ok(token)
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("fortifynet-highs: {msg}");
            return ExitCode::from(4);
        }
    };
    match run(&args) {
        Ok("optimal") | Ok("feasible") => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err((code, msg)) => {
            eprintln!("fortifynet-highs: {msg}");
            // Leave a status line behind so callers see a parseable outcome.
            let _ = std::fs::write(&args.solution, "status error\n");
            ExitCode::from(code)
        }
    }
}
