//! Builders for the four fortification MILPs — baseline (no disruption),
//! risk-neutral (expected cost), risk-averse (CVaR), and the hybrid mixing
//! both — plus extraction of a raw solver solution back into domain terms.
//!
//! Shared structure: each model instantiates one "second stage" per
//! scenario (route flows f, link traffic h, link times t, route times T,
//! max time z, undelivered demand u), with the BPR congestion term
//! replaced by a piecewise-linear variable w ≈ h^β. Link travel-time rows
//! are ≥-inequalities; minimization pressure makes them tight on links
//! that carry flow. For links incident to a disrupted node the row comes
//! in a big-M pair gated by the first-stage fortification binary x(i):
//!
//!   t ≥ T⁰ + (α·T⁰ / (V(1−(1−γ)ϑ))^β)·w − M(1−x)   (fortified state)
//!   t ≥ T⁰ + (α·T⁰ / (V(1−ϑ))^β)·w − M·x            (unfortified state)
//!
//! with per-link M = α·T⁰·(U/V_min)^β, the tightest constant that
//! deactivates the off state. Total destruction (ϑ = 1) cannot be
//! expressed that way — the unfortified capacity is zero — so such links
//! are closed outright when unfortified (h ≤ U·x) instead; rates just
//! below 1 are clamped to 0.999 with a warning.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::kshortest::RouteSet;
use crate::milp::{LinearExpr, MilpModel, VarKind};
use crate::network::{DemandTable, FortificationParams, Network, NodeId};
use crate::pla::{build_grid, bpr_time, grid_is_convex, pla_fragment, pla_fragment_convex, BprParams};
use crate::scenario::{Scenario, ScenarioSet};

/// Stage label used for the baseline model's (only) second stage.
pub const BASELINE_LABEL: &str = "base";

const RATE_CLAMP: f64 = 0.999;

/// Weight of the expected-cost tie-break added to pure-CVaR objectives.
const CVAR_TIEBREAK: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no route for OD pair ({0}, {1})")]
    NoRoute(NodeId, NodeId),
    #[error("invalid weights: {0}")]
    BadWeights(String),
    #[error("invalid risk parameters: {0}")]
    BadRisk(String),
    #[error("scenario probabilities sum to {0}, expected 1")]
    Unnormalized(f64),
    #[error("solution missing value for {0:?}")]
    MissingValue(String),
    #[error("model construction: {0}")]
    Build(#[from] crate::milp::MilpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    /// Scale for max travel time z (a solved or free-flow max route time).
    pub z_normalizer: f64,
    /// Scale for undelivered demand (total effective demand).
    pub demand_normalizer: f64,
    /// Scale for fortification cost (total cost of fortifying every node).
    pub cost_normalizer: f64,
}

impl ObjectiveWeights {
    pub fn new(
        w1: f64,
        w2: f64,
        w3: f64,
        z_normalizer: f64,
        demand_normalizer: f64,
        cost_normalizer: f64,
    ) -> Result<Self, ModelError> {
        if w1 < 0.0 || w2 < 0.0 || w3 < 0.0 || w1 + w2 + w3 <= 0.0 {
            return Err(ModelError::BadWeights(format!(
                "weights must be nonnegative with a positive sum, got ({w1}, {w2}, {w3})"
            )));
        }
        for (name, v) in
            [("z", z_normalizer), ("demand", demand_normalizer), ("cost", cost_normalizer)]
        {
            if !(v > 0.0) {
                return Err(ModelError::BadWeights(format!("{name} normalizer must be positive, got {v}")));
            }
        }
        Ok(ObjectiveWeights { w1, w2, w3, z_normalizer, demand_normalizer, cost_normalizer })
    }

    /// Equal weights with free-flow normalizers: z scaled by the longest
    /// free-flow route, demand by the total, cost by the dearest node.
    pub fn defaults(
        demand: &DemandTable,
        routes: &RouteSet,
        fort: Option<&FortificationParams>,
    ) -> Result<Self, ModelError> {
        let zn = routes
            .iter()
            .flat_map(|(_, paths)| paths.iter().map(|p| p.cost()))
            .fold(0.0f64, f64::max)
            .max(1e-9);
        let dn = demand.total_effective().max(1e-9);
        // Normalize by the total cost of fortifying everything, so the
        // fortification term stays commensurate with the other two.
        let cn = fort.map(|f| f.cost.values().sum::<f64>()).unwrap_or(1.0).max(1e-9);
        let w = 1.0 / 3.0;
        ObjectiveWeights::new(w, w, w, zn, dn, cn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskParams {
    /// CVaR tail level ε ∈ (0, 1].
    pub epsilon: f64,
    /// Hybrid mixing weight δ ∈ [0, 1].
    pub delta: f64,
}

impl RiskParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, ModelError> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(ModelError::BadRisk(format!("epsilon must be in (0, 1], got {epsilon}")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(ModelError::BadRisk(format!("delta must be in [0, 1], got {delta}")));
        }
        Ok(RiskParams { epsilon, delta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BigMPolicy {
    /// M = α·T⁰·(U / V_min)^β per link-scenario (the default).
    PerLink,
    /// One global constant, for debugging.
    Global(f64),
}

impl Default for BigMPolicy {
    fn default() -> Self {
        BigMPolicy::PerLink
    }
}

// ---------------------------------------------------------------------------
// Shared structure

/// The disrupted incident node that governs a link in a scenario, with its
/// rate: the affected endpoint with the largest ϑ, ties to the smaller id.
pub fn governing_disruption(
    network: &Network,
    scenario: &Scenario,
    link: usize,
) -> Option<(NodeId, f64)> {
    let l = network.link(link);
    let mut best: Option<(NodeId, f64)> = None;
    for n in [l.tail, l.head] {
        if let Some(&rate) = scenario.affected.get(&n) {
            if rate <= 0.0 {
                continue;
            }
            best = match best {
                Some((bn, br)) if br > rate || (br == rate && bn <= n) => Some((bn, br)),
                _ => Some((n, rate)),
            };
        }
    }
    best
}

/// Effective capacity of a link in a scenario given the fortification state
/// of its governing node (the reported V′).
pub fn residual_capacity(
    network: &Network,
    scenario: &Scenario,
    link: usize,
    fortified: bool,
) -> f64 {
    let capacity = network.link(link).capacity;
    match governing_disruption(network, scenario, link) {
        None => capacity,
        Some((_, theta)) => {
            if fortified {
                capacity * (1.0 - (1.0 - scenario.gamma) * theta)
            } else {
                capacity * (1.0 - theta)
            }
        }
    }
}

fn used_links(routes: &RouteSet) -> BTreeSet<usize> {
    routes.iter().flat_map(|(_, paths)| paths.iter().flat_map(|p| p.edges().iter().copied())).collect()
}

/// PLA upper bound per link: max(V_l, Σ demand over pairs routed across l).
fn link_upper_bound(network: &Network, demand: &DemandTable, routes: &RouteSet, link: usize) -> f64 {
    let mut demand_sum = 0.0;
    for ((o, d), paths) in routes.iter() {
        if paths.iter().any(|p| p.edges().contains(&link)) {
            demand_sum += demand.effective_demand(o, d).unwrap_or(0.0);
        }
    }
    network.link(link).capacity.max(demand_sum)
}

struct StageRefs {
    z: String,
    /// (o, d, u-variable name) per demanded pair.
    u: Vec<(NodeId, NodeId, String)>,
}

#[allow(clippy::too_many_arguments)]
fn add_stage(
    model: &mut MilpModel,
    network: &Network,
    demand: &DemandTable,
    routes: &RouteSet,
    bpr: BprParams,
    pla_segments: usize,
    label: &str,
    disruption: Option<&Scenario>,
    big_m: BigMPolicy,
) -> Result<StageRefs, ModelError> {
    let links = used_links(routes);

    // Link variables and travel-time rows.
    for &l in &links {
        let link = network.link(l);
        let upper = link_upper_bound(network, demand, routes, l);
        let h = format!("h({l}.{label})");
        let hn = format!("hn({l}.{label})");
        let t = format!("t({l}.{label})");
        let w = format!("w({l}.{label})");
        let t0 = link.free_flow_time;
        model.add_variable(&h, VarKind::Continuous, 0.0, upper)?;
        // hn = h/U keeps PLA breakpoint values in [0, 1] so matrix
        // coefficients stay numerically tame for any demand scale;
        // w approximates (h/U)^β.
        model.add_variable(&hn, VarKind::Continuous, 0.0, 1.0)?;
        model.add_variable(&t, VarKind::Continuous, t0, f64::INFINITY)?;
        model.add_variable(&w, VarKind::Continuous, 0.0, 1.0)?;
        let mut norm = LinearExpr::term(&h, 1.0);
        norm.add(&hn, -upper);
        model.add_eq(&format!("norm({l}.{label})"), norm, 0.0)?;
        let grid = build_grid(0.0, 1.0, pla_segments, bpr.beta).expect("positive upper bound");
        // β > 1 makes the grid convex, so the binary-free encoding is exact
        // here (w only ever experiences downward pressure in these models).
        if grid_is_convex(&grid) {
            pla_fragment_convex(model, &grid, &format!("{l}.{label}"), &hn, &w);
        } else {
            pla_fragment(model, &grid, &format!("{l}.{label}"), &hn, &w);
        }

        let time_row = |coef: f64| -> LinearExpr {
            // t − coef·w ≥ T⁰  (the PLA form of t ≥ T⁰(1 + α(h/V)^β),
            // with coef = αT⁰(U/V)^β against the normalized w).
            let mut e = LinearExpr::term(&t, 1.0);
            e.add(&w, -coef);
            e
        };
        let base_coef = bpr.alpha * t0 * (upper / link.capacity).powf(bpr.beta);
        match disruption.and_then(|s| governing_disruption(network, s, l)) {
            None => {
                model.add_ge(&format!("bpr({l}.{label})"), time_row(base_coef), t0)?;
            }
            Some((gov, theta)) => {
                let s = disruption.unwrap();
                let x = format!("x({gov})");
                if theta >= 1.0 {
                    // Unfortified state is full closure: h ≤ U·x.
                    let mut close = LinearExpr::term(&h, 1.0);
                    close.add(&x, -upper);
                    model.add_le(&format!("close({l}.{label})"), close, 0.0)?;
                    let eff = link.capacity * s.gamma;
                    if eff > 0.0 {
                        let cf = bpr.alpha * t0 * (upper / eff).powf(bpr.beta);
                        let m = match big_m {
                            BigMPolicy::PerLink => cf,
                            BigMPolicy::Global(m) => m,
                        };
                        let mut e = time_row(cf);
                        e.add(&x, -m);
                        model.add_ge(&format!("tfort({l}.{label})"), e, t0 - m)?;
                    } else {
                        // γ = 0: the link is closed in both states.
                        model.add_le(&format!("shut({l}.{label})"), LinearExpr::term(&h, 1.0), 0.0)?;
                    }
                } else {
                    let theta = if theta > RATE_CLAMP {
                        log::warn!(
                            "scenario {}: disruption rate {theta} on link {l} clamped to {RATE_CLAMP}",
                            s.id
                        );
                        RATE_CLAMP
                    } else {
                        theta
                    };
                    let eff_f = link.capacity * (1.0 - (1.0 - s.gamma) * theta);
                    let eff_u = link.capacity * (1.0 - theta);
                    let cf = bpr.alpha * t0 * (upper / eff_f).powf(bpr.beta);
                    let cu = bpr.alpha * t0 * (upper / eff_u).powf(bpr.beta);
                    let m = match big_m {
                        BigMPolicy::PerLink => bpr.alpha * t0 * (upper / eff_u).powf(bpr.beta),
                        BigMPolicy::Global(m) => m,
                    };
                    // Fortified: t ≥ T⁰ + cf·w − M(1−x).
                    let mut ef = time_row(cf);
                    ef.add(&x, -m);
                    model.add_ge(&format!("tfort({l}.{label})"), ef, t0 - m)?;
                    // Unfortified: t ≥ T⁰ + cu·w − M·x.
                    let mut eu = time_row(cu);
                    eu.add(&x, m);
                    model.add_ge(&format!("tunf({l}.{label})"), eu, t0)?;
                }
            }
        }
    }

    // Route flows, demand balance, aggregation, route times, max time.
    let z = format!("z({label})");
    model.add_variable(&z, VarKind::Continuous, 0.0, f64::INFINITY)?;
    let mut u_refs = Vec::new();
    let mut link_terms: BTreeMap<usize, LinearExpr> = BTreeMap::new();
    for ((o, d), paths) in routes.iter() {
        let dem = demand.effective_demand(o, d).unwrap_or(0.0);
        if paths.is_empty() {
            return Err(ModelError::NoRoute(o, d));
        }
        let u = format!("u({o}.{d}.{label})");
        model.add_variable(&u, VarKind::Continuous, 0.0, dem)?;
        let mut balance = LinearExpr::term(&u, 1.0);
        for (r, path) in paths.iter().enumerate() {
            let f = format!("f({o}.{d}.{r}.{label})");
            model.add_variable(&f, VarKind::Continuous, 0.0, dem)?;
            balance.add(&f, 1.0);
            for &l in path.edges() {
                link_terms.entry(l).or_default().add(&f, -1.0);
            }
            let tt = format!("T({o}.{d}.{r}.{label})");
            model.add_variable(&tt, VarKind::Continuous, 0.0, f64::INFINITY)?;
            let mut rt = LinearExpr::term(&tt, 1.0);
            for &l in path.edges() {
                rt.add(&format!("t({l}.{label})"), -1.0);
            }
            model.add_eq(&format!("rt({o}.{d}.{r}.{label})"), rt, 0.0)?;
            let mut zc = LinearExpr::term(&z, 1.0);
            zc.add(&tt, -1.0);
            model.add_ge(&format!("zc({o}.{d}.{r}.{label})"), zc, 0.0)?;
        }
        model.add_eq(&format!("dem({o}.{d}.{label})"), balance, dem)?;
        u_refs.push((o, d, u));
    }
    for (l, mut e) in link_terms {
        e.add(&format!("h({l}.{label})"), 1.0);
        model.add_eq(&format!("agg({l}.{label})"), e, 0.0)?;
    }
    Ok(StageRefs { z, u: u_refs })
}

fn stage_cost(weights: &ObjectiveWeights, stage: &StageRefs) -> LinearExpr {
    let mut e = LinearExpr::term(&stage.z, weights.w1 / weights.z_normalizer);
    for (_, _, u) in &stage.u {
        e.add(u, weights.w2 / weights.demand_normalizer);
    }
    e
}

fn add_first_stage(
    model: &mut MilpModel,
    network: &Network,
    fort: &FortificationParams,
) -> Result<(), ModelError> {
    let mut budget = LinearExpr::new();
    for n in network.nodes() {
        let x = format!("x({n})");
        model.add_variable(&x, VarKind::Binary, 0.0, 1.0)?;
        budget.add(&x, 1.0);
    }
    model.add_le("budget", budget, fort.budget as f64)?;
    Ok(())
}

fn fortification_cost(
    network: &Network,
    fort: &FortificationParams,
    weights: &ObjectiveWeights,
) -> LinearExpr {
    let mut e = LinearExpr::new();
    for n in network.nodes() {
        let c = fort.cost.get(&n).copied().unwrap_or(0.0);
        e.add(&format!("x({n})"), weights.w3 * c / weights.cost_normalizer);
    }
    e
}

fn check_normalized(scenarios: &ScenarioSet) -> Result<(), ModelError> {
    let total = scenarios.total_probability();
    if (total - 1.0).abs() > 1e-6 {
        return Err(ModelError::Unnormalized(total));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Builders

/// No-disruption model: one second stage, objective
/// ω₁·z/zn + ω₂·Σu/dn.
pub fn build_baseline(
    network: &Network,
    demand: &DemandTable,
    routes: &RouteSet,
    bpr: BprParams,
    weights: &ObjectiveWeights,
    pla_segments: usize,
) -> Result<MilpModel, ModelError> {
    let mut model = MilpModel::new();
    let stage = add_stage(
        &mut model,
        network,
        demand,
        routes,
        bpr,
        pla_segments,
        BASELINE_LABEL,
        None,
        BigMPolicy::default(),
    )?;
    model.set_objective(stage_cost(weights, &stage))?;
    Ok(model)
}

/// Risk-neutral model: expected scenario cost plus fortification cost.
#[allow(clippy::too_many_arguments)]
pub fn build_rn(
    network: &Network,
    demand: &DemandTable,
    routes: &RouteSet,
    scenarios: &ScenarioSet,
    fort: &FortificationParams,
    bpr: BprParams,
    weights: &ObjectiveWeights,
    pla_segments: usize,
    big_m: BigMPolicy,
) -> Result<MilpModel, ModelError> {
    check_normalized(scenarios)?;
    let mut model = MilpModel::new();
    add_first_stage(&mut model, network, fort)?;
    let mut objective = fortification_cost(network, fort, weights);
    for s in &scenarios.scenarios {
        let stage =
            add_stage(&mut model, network, demand, routes, bpr, pla_segments, &s.id, Some(s), big_m)?;
        objective.add_expr(&stage_cost(weights, &stage), s.probability);
    }
    model.set_objective(objective)?;
    Ok(model)
}

fn add_cvar(
    model: &mut MilpModel,
    scenarios: &ScenarioSet,
    weights: &ObjectiveWeights,
    stages: &[StageRefs],
) -> Result<(), ModelError> {
    model.add_variable("v", VarKind::Continuous, 0.0, f64::INFINITY)?;
    for (s, stage) in scenarios.scenarios.iter().zip(stages) {
        let tau = format!("tau({})", s.id);
        model.add_variable(&tau, VarKind::Continuous, 0.0, f64::INFINITY)?;
        // τ ≥ scenario cost − v.
        let mut e = LinearExpr::term(&tau, 1.0);
        e.add("v", 1.0);
        e.add_expr(&stage_cost(weights, stage), -1.0);
        model.add_ge(&format!("cvar({})", s.id), e, 0.0)?;
    }
    Ok(())
}

/// Risk-averse model: CVaR_ε of scenario cost plus fortification cost.
#[allow(clippy::too_many_arguments)]
pub fn build_ra(
    network: &Network,
    demand: &DemandTable,
    routes: &RouteSet,
    scenarios: &ScenarioSet,
    fort: &FortificationParams,
    bpr: BprParams,
    weights: &ObjectiveWeights,
    pla_segments: usize,
    big_m: BigMPolicy,
    risk: RiskParams,
) -> Result<MilpModel, ModelError> {
    check_normalized(scenarios)?;
    let mut model = MilpModel::new();
    add_first_stage(&mut model, network, fort)?;
    let mut stages = Vec::new();
    for s in &scenarios.scenarios {
        stages.push(add_stage(
            &mut model, network, demand, routes, bpr, pla_segments, &s.id, Some(s), big_m,
        )?);
    }
    add_cvar(&mut model, scenarios, weights, &stages)?;
    let mut objective = fortification_cost(network, fort, weights);
    objective.add("v", 1.0);
    for (s, stage) in scenarios.scenarios.iter().zip(&stages) {
        objective.add(&format!("tau({})", s.id), s.probability / risk.epsilon);
        // Scenarios outside the CVaR tail exert no pressure on their z/u
        // variables; a tiny expected-cost term selects, among CVaR-optimal
        // solutions, one whose per-scenario reports are tight.
        objective.add_expr(&stage_cost(weights, stage), CVAR_TIEBREAK * s.probability);
    }
    model.set_objective(objective)?;
    Ok(model)
}

/// Hybrid model: (1−δ)·expected cost + δ·CVaR_ε, plus fortification cost.
#[allow(clippy::too_many_arguments)]
pub fn build_rnra(
    network: &Network,
    demand: &DemandTable,
    routes: &RouteSet,
    scenarios: &ScenarioSet,
    fort: &FortificationParams,
    bpr: BprParams,
    weights: &ObjectiveWeights,
    pla_segments: usize,
    big_m: BigMPolicy,
    risk: RiskParams,
) -> Result<MilpModel, ModelError> {
    check_normalized(scenarios)?;
    let delta = risk.delta;
    let mut model = MilpModel::new();
    add_first_stage(&mut model, network, fort)?;
    let mut stages = Vec::new();
    for s in &scenarios.scenarios {
        stages.push(add_stage(
            &mut model, network, demand, routes, bpr, pla_segments, &s.id, Some(s), big_m,
        )?);
    }
    add_cvar(&mut model, scenarios, weights, &stages)?;
    let mut objective = fortification_cost(network, fort, weights);
    // At δ = 1 the expected-cost coefficient vanishes and non-tail
    // scenario reports would float; keep at least the CVaR tie-break.
    let expected_coef = (1.0 - delta).max(CVAR_TIEBREAK);
    for (s, stage) in scenarios.scenarios.iter().zip(&stages) {
        objective.add_expr(&stage_cost(weights, stage), expected_coef * s.probability);
        objective.add(&format!("tau({})", s.id), delta * s.probability / risk.epsilon);
    }
    objective.add("v", delta);
    model.set_objective(objective)?;
    Ok(model)
}

// ---------------------------------------------------------------------------
// Solution extraction

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    /// Route flow per (origin, destination, route index).
    pub route_flow: BTreeMap<(NodeId, NodeId, usize), f64>,
    pub link_flow: BTreeMap<usize, f64>,
    pub link_time: BTreeMap<usize, f64>,
    pub route_time: BTreeMap<(NodeId, NodeId, usize), f64>,
    pub max_time: f64,
    pub undelivered: BTreeMap<(NodeId, NodeId), f64>,
    /// V′ per link, derived from the scenario and fortification state.
    pub residual_capacity: BTreeMap<usize, f64>,
    pub tau: Option<f64>,
}

impl ScenarioOutcome {
    pub fn total_undelivered(&self) -> f64 {
        self.undelivered.values().sum()
    }

    /// Σ over links of flow × travel time.
    pub fn total_travel_time(&self) -> f64 {
        self.link_flow.iter().map(|(l, &h)| h * self.link_time.get(l).copied().unwrap_or(0.0)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: String,
    pub objective: f64,
    pub fortified: BTreeSet<NodeId>,
    /// One outcome per stage label ("base" or a scenario id), in input order.
    pub outcomes: Vec<(String, ScenarioOutcome)>,
    pub v: Option<f64>,
    /// Invariant violations beyond tolerance, as human-readable notes.
    pub violations: Vec<String>,
}

impl Solution {
    pub fn outcome(&self, label: &str) -> Option<&ScenarioOutcome> {
        self.outcomes.iter().find(|(l, _)| l == label).map(|(_, o)| o)
    }

    /// The normalized scenario cost ω₁·z/zn + ω₂·Σu/dn per stage.
    pub fn scenario_costs(&self, weights: &ObjectiveWeights) -> Vec<(String, f64)> {
        self.outcomes
            .iter()
            .map(|(label, o)| {
                let c = weights.w1 * o.max_time / weights.z_normalizer
                    + weights.w2 * o.total_undelivered() / weights.demand_normalizer;
                (label.clone(), c)
            })
            .collect()
    }
}

const EXTRACT_TOL: f64 = 1e-6;

/// Decode a raw name→value map into domain terms and verify the model's
/// structural invariants (flow aggregation, u bounds, z dominance, budget).
#[allow(clippy::too_many_arguments)]
pub fn extract_solution(
    network: &Network,
    demand: &DemandTable,
    routes: &RouteSet,
    scenarios: Option<&ScenarioSet>,
    fort: Option<&FortificationParams>,
    status: &str,
    objective: f64,
    values: &BTreeMap<String, f64>,
) -> Result<Solution, ModelError> {
    let get = |name: &str| -> Result<f64, ModelError> {
        values.get(name).copied().ok_or_else(|| ModelError::MissingValue(name.to_string()))
    };
    let mut violations = Vec::new();

    let mut fortified = BTreeSet::new();
    if scenarios.is_some() {
        for n in network.nodes() {
            if get(&format!("x({n})"))? > 0.5 {
                fortified.insert(n);
            }
        }
        if let Some(f) = fort {
            if fortified.len() as u32 > f.budget {
                violations.push(format!(
                    "fortified set size {} exceeds budget {}",
                    fortified.len(),
                    f.budget
                ));
            }
        }
    }

    let labels: Vec<(String, Option<&Scenario>)> = match scenarios {
        None => vec![(BASELINE_LABEL.to_string(), None)],
        Some(set) => set.scenarios.iter().map(|s| (s.id.clone(), Some(s))).collect(),
    };

    let links = used_links(routes);
    let mut outcomes = Vec::new();
    for (label, scenario) in labels {
        let mut out = ScenarioOutcome {
            route_flow: BTreeMap::new(),
            link_flow: BTreeMap::new(),
            link_time: BTreeMap::new(),
            route_time: BTreeMap::new(),
            max_time: get(&format!("z({label})"))?,
            undelivered: BTreeMap::new(),
            residual_capacity: BTreeMap::new(),
            tau: values.get(&format!("tau({label})")).copied(),
        };
        for &l in &links {
            out.link_flow.insert(l, get(&format!("h({l}.{label})"))?);
            out.link_time.insert(l, get(&format!("t({l}.{label})"))?);
            let vp = match scenario {
                None => network.link(l).capacity,
                Some(s) => {
                    let gov = governing_disruption(network, s, l).map(|(n, _)| n);
                    residual_capacity(network, s, l, gov.map_or(false, |n| fortified.contains(&n)))
                }
            };
            out.residual_capacity.insert(l, vp);
        }
        for ((o, d), paths) in routes.iter() {
            let dem = demand.effective_demand(o, d).unwrap_or(0.0);
            let u = get(&format!("u({o}.{d}.{label})"))?;
            if !(-EXTRACT_TOL..=dem + EXTRACT_TOL).contains(&u) {
                violations.push(format!("u({o}.{d}.{label}) = {u} outside [0, {dem}]"));
            }
            out.undelivered.insert((o, d), u);
            for (r, _) in paths.iter().enumerate() {
                let f = get(&format!("f({o}.{d}.{r}.{label})"))?;
                out.route_flow.insert((o, d, r), f);
                let tt = get(&format!("T({o}.{d}.{r}.{label})"))?;
                out.route_time.insert((o, d, r), tt);
                if tt > out.max_time + EXTRACT_TOL {
                    violations.push(format!(
                        "route time T({o}.{d}.{r}.{label}) = {tt} exceeds z = {}",
                        out.max_time
                    ));
                }
            }
        }
        // h must aggregate route flows (Eq 8).
        for &l in &links {
            let mut sum = 0.0;
            for ((o, d), paths) in routes.iter() {
                for (r, path) in paths.iter().enumerate() {
                    if path.edges().contains(&l) {
                        sum += out.route_flow[&(o, d, r)];
                    }
                }
            }
            let h = out.link_flow[&l];
            if (h - sum).abs() > 1e-3 {
                violations.push(format!("h({l}.{label}) = {h} differs from route sum {sum}"));
            }
        }
        outcomes.push((label, out));
    }

    Ok(Solution {
        status: status.to_string(),
        objective,
        fortified,
        outcomes,
        v: values.get("v").copied(),
        violations,
    })
}

/// Exact nonlinear per-link travel time for an extracted flow, used by
/// invariant checks: BPR at the scenario's effective capacity.
pub fn exact_link_time(
    network: &Network,
    bpr: BprParams,
    scenario: Option<&Scenario>,
    fortified: &BTreeSet<NodeId>,
    link: usize,
    flow: f64,
) -> f64 {
    let l = network.link(link);
    let capacity = match scenario {
        None => l.capacity,
        Some(s) => {
            let gov = governing_disruption(network, s, link).map(|(n, _)| n);
            residual_capacity(network, s, link, gov.map_or(false, |n| fortified.contains(&n)))
        }
    };
    if capacity <= 0.0 {
        return if flow > 0.0 { f64::INFINITY } else { l.free_flow_time };
    }
    bpr_time(l.free_flow_time, bpr, flow, capacity).expect("positive capacity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kshortest::build_route_sets;
    use crate::network::Link;
    use crate::scenario::{builtin_catalog, Scenario};

    fn tiny_net() -> (Network, DemandTable, RouteSet) {
        // 1→2→4 and 1→3→4.
        let links = vec![
            Link { id: 0, tail: 1, head: 2, free_flow_time: 1.0, capacity: 5.0 },
            Link { id: 1, tail: 2, head: 4, free_flow_time: 1.0, capacity: 5.0 },
            Link { id: 2, tail: 1, head: 3, free_flow_time: 2.0, capacity: 5.0 },
            Link { id: 3, tail: 3, head: 4, free_flow_time: 2.0, capacity: 5.0 },
        ];
        let net = Network::new([1, 2, 3, 4], links).unwrap();
        let dem = DemandTable::new([((1, 4), 4.0)], 1.0).unwrap();
        let routes = build_route_sets(&net, &dem, &net.free_flow_weights(), 2).unwrap();
        (net, dem, routes)
    }

    fn one_scenario(theta: f64) -> ScenarioSet {
        ScenarioSet::new(vec![Scenario {
            id: "xi_1".into(),
            source_measure: None,
            affected: [(2, theta)].into_iter().collect(),
            gamma: 0.5,
            probability: 1.0,
        }])
        .unwrap()
    }

    #[test]
    fn baseline_structure() {
        let (net, dem, routes) = tiny_net();
        let weights = ObjectiveWeights::defaults(&dem, &routes, None).unwrap();
        let m = build_baseline(&net, &dem, &routes, BprParams::default(), &weights, 4).unwrap();
        // Per link: h, hn, t, w + 5 λ (convex grid, no segment binaries);
        // plus 2 f, 2 T, 1 u, 1 z.
        assert_eq!(m.variables().len(), 4 * 9 + 6);
        assert!(m.validate().is_empty(), "{:?}", m.validate());
        assert!(!m.objective().is_empty());
    }

    #[test]
    fn baseline_known_flow_is_feasible() {
        let (net, dem, routes) = tiny_net();
        let weights = ObjectiveWeights::defaults(&dem, &routes, None).unwrap();
        let m = build_baseline(&net, &dem, &routes, BprParams::default(), &weights, 4).unwrap();
        // Send all 4 units down route 0 (links 0,1) and set every derived
        // variable consistently; the PLA runs on hn = h/U over [0,1] with
        // N=4, so h = 4 of U = 5 sits between breakpoints 0.75 and 1.0.
        let mut vals: BTreeMap<String, f64> = BTreeMap::new();
        let grid = build_grid(0.0, 1.0, 4, 4.0).unwrap();
        let w_val = grid.interpolate(0.8);
        for l in [0usize, 1] {
            vals.insert(format!("h({l}.base)"), 4.0);
            vals.insert(format!("hn({l}.base)"), 0.8);
            vals.insert(format!("w({l}.base)"), w_val);
            // λ weights on segment 4 (breakpoints 0.75, 1.0).
            let t = (0.8 - 0.75) / 0.25;
            vals.insert(format!("lam({l}.base.3)"), 1.0 - t);
            vals.insert(format!("lam({l}.base.4)"), t);
            // coef = αT⁰(U/V)^β = 0.15·(5/5)⁴.
            let time = 1.0 + 0.15 * w_val;
            vals.insert(format!("t({l}.base)"), time);
        }
        for l in [2usize, 3] {
            vals.insert(format!("h({l}.base)"), 0.0);
            vals.insert(format!("hn({l}.base)"), 0.0);
            vals.insert(format!("w({l}.base)"), 0.0);
            vals.insert(format!("lam({l}.base.0)"), 1.0);
            vals.insert(format!("t({l}.base)"), net.link(l).free_flow_time);
        }
        vals.insert("f(1.4.0.base)".into(), 4.0);
        vals.insert("f(1.4.1.base)".into(), 0.0);
        vals.insert("u(1.4.base)".into(), 0.0);
        let t_route0 = vals["t(0.base)"] + vals["t(1.base)"];
        vals.insert("T(1.4.0.base)".into(), t_route0);
        vals.insert("T(1.4.1.base)".into(), 4.0);
        vals.insert("z(base)".into(), t_route0.max(4.0));
        let m2 = build_baseline(&net, &dem, &routes, BprParams::default(), &weights, 4).unwrap();
        assert_eq!(m, m2, "builder must be deterministic");
        assert!(m.satisfied_by(&vals, 1e-9));
    }

    #[test]
    fn rn_has_first_stage_and_big_m_pairs() {
        let (net, dem, routes) = tiny_net();
        let fort = FortificationParams::uniform(&net, 1.0, 1);
        let weights = ObjectiveWeights::defaults(&dem, &routes, Some(&fort)).unwrap();
        let m = build_rn(
            &net,
            &dem,
            &routes,
            &one_scenario(0.5),
            &fort,
            BprParams::default(),
            &weights,
            4,
            BigMPolicy::default(),
        )
        .unwrap();
        let binaries: Vec<&str> = m
            .variables()
            .iter()
            .filter(|v| v.kind == VarKind::Binary && v.name.starts_with("x("))
            .map(|v| v.name.as_str())
            .collect();
        assert_eq!(binaries, ["x(1)", "x(2)", "x(3)", "x(4)"]);
        // Links 0 and 1 touch the affected node 2 → a big-M pair each;
        // links 2 and 3 keep the single undisrupted row.
        for l in [0, 1] {
            assert!(m.constraints().iter().any(|c| c.name == format!("tfort({l}.xi_1)")));
            assert!(m.constraints().iter().any(|c| c.name == format!("tunf({l}.xi_1)")));
        }
        for l in [2, 3] {
            assert!(m.constraints().iter().any(|c| c.name == format!("bpr({l}.xi_1)")));
        }
        assert!(m.constraints().iter().any(|c| c.name == "budget"));
        assert!(m.validate().is_empty());
    }

    #[test]
    fn total_destruction_closes_unfortified_link() {
        let (net, dem, routes) = tiny_net();
        let fort = FortificationParams::uniform(&net, 1.0, 1);
        let weights = ObjectiveWeights::defaults(&dem, &routes, Some(&fort)).unwrap();
        let m = build_rn(
            &net,
            &dem,
            &routes,
            &one_scenario(1.0),
            &fort,
            BprParams::default(),
            &weights,
            4,
            BigMPolicy::default(),
        )
        .unwrap();
        for l in [0, 1] {
            let c = m
                .constraints()
                .iter()
                .find(|c| c.name == format!("close({l}.xi_1)"))
                .expect("closure row");
            assert!(c.expr.coefficient(&format!("h({l}.xi_1)")) == 1.0);
            assert!(c.expr.coefficient("x(2)") < 0.0);
        }
    }

    #[test]
    fn rnra_delta_zero_matches_rn_objective() {
        let (net, dem, routes) = tiny_net();
        let fort = FortificationParams::uniform(&net, 1.0, 1);
        let weights = ObjectiveWeights::defaults(&dem, &routes, Some(&fort)).unwrap();
        let scen = one_scenario(0.5);
        let bpr = BprParams::default();
        let rn = build_rn(&net, &dem, &routes, &scen, &fort, bpr, &weights, 4, BigMPolicy::default())
            .unwrap();
        let risk = RiskParams::new(0.1, 0.0).unwrap();
        let hybrid = build_rnra(
            &net, &dem, &routes, &scen, &fort, bpr, &weights, 4, BigMPolicy::default(), risk,
        )
        .unwrap();
        assert_eq!(rn.objective(), hybrid.objective());
    }

    #[test]
    fn rnra_delta_one_matches_ra_objective() {
        let (net, dem, routes) = tiny_net();
        let fort = FortificationParams::uniform(&net, 1.0, 1);
        let weights = ObjectiveWeights::defaults(&dem, &routes, Some(&fort)).unwrap();
        let scen = one_scenario(0.5);
        let bpr = BprParams::default();
        let risk = RiskParams::new(0.1, 1.0).unwrap();
        let ra = build_ra(&net, &dem, &routes, &scen, &fort, bpr, &weights, 4, BigMPolicy::default(), risk)
            .unwrap();
        let hybrid = build_rnra(
            &net, &dem, &routes, &scen, &fort, bpr, &weights, 4, BigMPolicy::default(), risk,
        )
        .unwrap();
        assert_eq!(ra.objective(), hybrid.objective());
    }

    #[test]
    fn unnormalized_probabilities_rejected() {
        let (net, dem, routes) = tiny_net();
        let fort = FortificationParams::uniform(&net, 1.0, 1);
        let weights = ObjectiveWeights::defaults(&dem, &routes, Some(&fort)).unwrap();
        let mut scen = one_scenario(0.5);
        scen.scenarios[0].probability = 0.4;
        assert!(matches!(
            build_rn(
                &net,
                &dem,
                &routes,
                &scen,
                &fort,
                BprParams::default(),
                &weights,
                4,
                BigMPolicy::default()
            ),
            Err(ModelError::Unnormalized(_))
        ));
    }

    #[test]
    fn weights_and_risk_validation() {
        assert!(ObjectiveWeights::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ObjectiveWeights::new(1.0, 1.0, 1.0, 0.0, 1.0, 1.0).is_err());
        assert!(RiskParams::new(0.0, 0.5).is_err());
        assert!(RiskParams::new(0.1, 1.5).is_err());
        assert!(RiskParams::new(1.0, 1.0).is_ok());
    }

    #[test]
    fn governing_node_prefers_larger_rate_then_smaller_id() {
        let (net, _, _) = tiny_net();
        let s = Scenario {
            id: "s".into(),
            source_measure: None,
            affected: [(1, 0.3), (2, 0.6)].into_iter().collect(),
            gamma: 0.5,
            probability: 1.0,
        };
        // Link 0 is 1→2: node 2 has the larger rate.
        assert_eq!(governing_disruption(&net, &s, 0), Some((2, 0.6)));
        let tie = Scenario { affected: [(1, 0.6), (2, 0.6)].into_iter().collect(), ..s.clone() };
        assert_eq!(governing_disruption(&net, &tie, 0), Some((1, 0.6)));
        // Link 3 (3→4) touches no affected node.
        assert_eq!(governing_disruption(&net, &s, 3), None);
    }

    #[test]
    fn residual_capacity_rules() {
        let (net, _, _) = tiny_net();
        let s = Scenario {
            id: "s".into(),
            source_measure: None,
            affected: [(2, 0.6)].into_iter().collect(),
            gamma: 0.5,
            probability: 1.0,
        };
        // Link 0 capacity 5: unfortified 5·0.4 = 2, fortified 5·(1−0.3) = 3.5.
        assert!((residual_capacity(&net, &s, 0, false) - 2.0).abs() < 1e-12);
        assert!((residual_capacity(&net, &s, 0, true) - 3.5).abs() < 1e-12);
        assert_eq!(residual_capacity(&net, &s, 3, false), 5.0);
    }

    #[test]
    fn extract_decodes_fortified_and_flags_violations() {
        let (net, dem, routes) = tiny_net();
        let scen = one_scenario(0.5);
        let fort = FortificationParams::uniform(&net, 1.0, 1);
        let mut vals: BTreeMap<String, f64> = BTreeMap::new();
        for n in 1..=4 {
            vals.insert(format!("x({n})"), if n == 2 { 1.0 } else { 0.0 });
        }
        for l in 0..4usize {
            vals.insert(format!("h({l}.xi_1)"), if l < 2 { 4.0 } else { 0.0 });
            vals.insert(format!("t({l}.xi_1)"), 1.0);
        }
        vals.insert("z(xi_1)".into(), 2.0);
        vals.insert("u(1.4.xi_1)".into(), 0.0);
        vals.insert("f(1.4.0.xi_1)".into(), 4.0);
        vals.insert("f(1.4.1.xi_1)".into(), 1.0); // inconsistent with h on links 2,3
        vals.insert("T(1.4.0.xi_1)".into(), 2.0);
        vals.insert("T(1.4.1.xi_1)".into(), 4.0); // exceeds z
        let sol = extract_solution(
            &net,
            &dem,
            &routes,
            Some(&scen),
            Some(&fort),
            "optimal",
            0.5,
            &vals,
        )
        .unwrap();
        assert_eq!(sol.fortified, [2u32].into_iter().collect());
        assert!(sol.violations.iter().any(|v| v.contains("exceeds z")));
        assert!(sol.violations.iter().any(|v| v.contains("differs from route sum")));
        let out = sol.outcome("xi_1").unwrap();
        assert!((out.residual_capacity[&0] - 3.75).abs() < 1e-12);
        assert!((out.residual_capacity[&2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn extract_errors_on_missing_variable() {
        let (net, dem, routes) = tiny_net();
        let vals = BTreeMap::new();
        assert!(matches!(
            extract_solution(&net, &dem, &routes, None, None, "optimal", 0.0, &vals),
            Err(ModelError::MissingValue(_))
        ));
    }

    #[test]
    fn sioux_falls_rn_builds_with_24_binaries() {
        let net = crate::fixtures::sioux_falls_network();
        let dem = crate::fixtures::sioux_falls_demand(100.0);
        let routes = build_route_sets(&net, &dem, &net.free_flow_weights(), 10).unwrap();
        let fort = crate::fixtures::default_fortification(&net);
        let weights = ObjectiveWeights::defaults(&dem, &routes, Some(&fort)).unwrap();
        let m = build_rn(
            &net,
            &dem,
            &routes,
            &builtin_catalog(),
            &fort,
            BprParams::default(),
            &weights,
            4,
            BigMPolicy::default(),
        )
        .unwrap();
        let x_count = m
            .variables()
            .iter()
            .filter(|v| v.kind == VarKind::Binary && v.name.starts_with("x("))
            .count();
        assert_eq!(x_count, 24);
        assert!(m.validate().is_empty());
    }
}
