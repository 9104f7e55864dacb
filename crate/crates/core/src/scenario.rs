//! Disruption scenarios: the builtin 27-scenario Sioux Falls catalog and
//! programmatic generation from measure rankings.
//!
//! A scenario names the affected nodes with per-node disruption rates ϑ,
//! a mitigation rate γ for incident links (how much fortification reduces
//! the disruption), and an occurrence probability π. The builtin catalog
//! ships the published Sioux Falls set; two of its rows (xi_10 and xi_11)
//! are verbatim duplicates in the source material and are kept as printed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{rank_nodes, Category, MeasureKind, MeasureVector};
use crate::network::NodeId;

/// Default mitigation rate: fortification halves a link's disruption.
pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario {id}: {msg}")]
    Invalid { id: String, msg: String },
    #[error("probabilities sum to zero")]
    ZeroProbability,
    #[error("no measures supplied")]
    NoMeasures,
    #[error("bad scenario file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub source_measure: Option<MeasureKind>,
    /// Disruption rate ϑ per affected node, applied to every incident link.
    pub affected: BTreeMap<NodeId, f64>,
    /// Mitigation rate γ for links incident to affected nodes.
    pub gamma: f64,
    pub probability: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Invalid { id: self.id.clone(), msg });
        if self.affected.is_empty() {
            return fail("no affected nodes".into());
        }
        for (&n, &r) in &self.affected {
            if !(0.0..=1.0).contains(&r) {
                return fail(format!("disruption rate {r} for node {n} outside [0,1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma {} outside [0,1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.probability) {
            return fail(format!("probability {} outside [0,1]", self.probability));
        }
        Ok(())
    }

    /// Disruption rate for node `n` in this scenario (0 when unaffected).
    pub fn theta(&self, n: NodeId) -> f64 {
        self.affected.get(&n).copied().unwrap_or(0.0)
    }

    /// π ≥ 0.06 is tagged high risk in the source material.
    pub fn is_high_risk(&self) -> bool {
        self.probability >= 0.06
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn new(scenarios: Vec<Scenario>) -> Result<Self, ScenarioError> {
        let mut ids = std::collections::BTreeSet::new();
        for s in &scenarios {
            s.validate()?;
            if !ids.insert(s.id.clone()) {
                return Err(ScenarioError::Invalid {
                    id: s.id.clone(),
                    msg: "duplicate scenario id".into(),
                });
            }
        }
        Ok(ScenarioSet { scenarios })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.scenarios.iter().map(|s| s.probability).sum()
    }

    /// Divide every π by the total; order preserved.
    pub fn normalize_probabilities(mut self) -> Result<Self, ScenarioError> {
        let total = self.total_probability();
        if total <= 0.0 {
            return Err(ScenarioError::ZeroProbability);
        }
        for s in &mut self.scenarios {
            s.probability /= total;
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let set: ScenarioSet =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        ScenarioSet::new(set.scenarios)
    }
}

/// The published 27-scenario Sioux Falls catalog.
///
/// Node lists and rates are transcribed from the published table; the
/// printed probability column already sums to 1.00, so normalization is a
/// no-op. xi_10 and xi_11 are identical in the source and kept as two
/// distinct scenarios.
pub fn builtin_catalog() -> ScenarioSet {
    use MeasureKind::*;
    let rows: Vec<(&str, MeasureKind, Vec<(NodeId, f64)>, f64)> = vec![
        (
            "xi_1",
            NeighborhoodConnectivity,
            vec![(9, 0.7), (17, 0.65), (16, 0.65), (15, 0.65), (14, 0.65), (19, 0.65), (21, 0.65), (10, 0.65)],
            0.08,
        ),
        (
            "xi_2",
            PhiNodeCentrality,
            vec![(2, 0.7), (6, 0.68), (8, 0.65), (1, 0.64), (7, 0.63), (3, 0.62), (12, 0.61), (18, 0.6)],
            0.08,
        ),
        (
            "xi_3",
            PageRank,
            vec![(10, 0.7), (8, 0.68), (11, 0.65), (20, 0.64), (22, 0.63), (16, 0.63), (15, 0.63), (3, 0.62)],
            0.08,
        ),
        (
            "xi_4",
            HarmonicCentrality,
            vec![(10, 0.7), (11, 0.68), (16, 0.65), (15, 0.64), (8, 0.64), (20, 0.64), (9, 0.63), (22, 0.62)],
            0.08,
        ),
        (
            "xi_5",
            EigenvectorCentrality,
            vec![(10, 0.7), (15, 0.68), (16, 0.66), (17, 0.64), (22, 0.64), (20, 0.63), (19, 0.62), (11, 0.61)],
            0.06,
        ),
        (
            "xi_6",
            KatzCentrality,
            vec![(10, 0.7), (15, 0.7), (16, 0.7), (22, 0.7), (11, 0.7), (20, 0.7), (8, 0.7), (17, 0.7)],
            0.06,
        ),
        (
            "xi_7",
            ClosenessCentrality,
            vec![(10, 0.7), (11, 0.69), (16, 0.68), (15, 0.67), (9, 0.66), (17, 0.65), (14, 0.64), (12, 0.63)],
            0.06,
        ),
        (
            "xi_8",
            BetweennessCentrality,
            vec![(10, 0.7), (11, 0.69), (8, 0.68), (12, 0.67), (16, 0.66), (15, 0.65), (20, 0.64), (4, 0.63)],
            0.05,
        ),
        (
            "xi_9",
            DegreeCentrality,
            vec![(10, 0.7), (11, 0.69), (8, 0.68), (16, 0.68), (15, 0.67), (22, 0.67), (20, 0.65), (3, 0.62)],
            0.05,
        ),
        (
            "xi_10",
            OutdegreeCentrality,
            vec![(14, 0.7), (8, 0.69), (10, 0.69), (13, 0.69), (15, 0.69), (22, 0.69), (23, 0.69), (3, 0.68)],
            0.03,
        ),
        (
            "xi_11",
            OutdegreeCentrality,
            vec![(14, 0.7), (8, 0.69), (10, 0.69), (13, 0.69), (15, 0.69), (22, 0.69), (23, 0.69), (3, 0.68)],
            0.03,
        ),
        (
            "xi_12",
            Exposure,
            vec![(11, 0.7), (13, 0.7), (17, 0.68), (12, 0.67), (2, 0.66), (19, 0.65), (20, 0.64), (21, 0.64)],
            0.03,
        ),
        (
            "xi_13",
            AggregateMeasure,
            vec![(10, 0.7), (11, 0.66), (8, 0.65), (15, 0.64), (20, 0.53), (16, 0.5), (4, 0.48), (3, 0.47)],
            0.03,
        ),
        (
            "xi_14",
            ProportionalFlow,
            vec![(10, 0.7), (11, 0.69), (12, 0.68), (8, 0.67), (20, 0.66), (6, 0.65), (18, 0.64), (3, 0.63)],
            0.03,
        ),
        (
            "xi_15",
            TsallisRedundancy,
            vec![(10, 0.7), (11, 0.69), (8, 0.68), (4, 0.67), (15, 0.66), (3, 0.65), (6, 0.64), (12, 0.63)],
            0.03,
        ),
        (
            "xi_16",
            StarTsallisRedundancy,
            vec![(6, 0.7), (2, 0.68), (8, 0.66), (7, 0.64), (18, 0.62), (20, 0.6)],
            0.03,
        ),
        (
            "xi_17",
            GroupCentrality,
            vec![(10, 0.7), (11, 0.6), (8, 0.6), (16, 0.6), (15, 0.6), (22, 0.6), (20, 0.6), (3, 0.5)],
            0.03,
        ),
        (
            "xi_18",
            AverageRating,
            vec![(1, 0.7), (3, 0.68), (2, 0.66), (4, 0.64), (6, 0.62), (5, 0.6), (7, 0.4), (8, 0.35)],
            0.02,
        ),
        (
            "xi_19",
            AveragePathDistance,
            vec![(1, 0.7), (3, 0.68), (2, 0.66), (4, 0.64), (6, 0.63), (5, 0.6), (7, 0.4), (8, 0.35)],
            0.02,
        ),
        (
            "xi_20",
            AveragePathDistanceAfterDisruption,
            vec![(24, 0.7), (23, 0.7), (22, 0.7), (21, 0.7), (20, 0.7), (19, 0.7), (18, 0.7), (17, 0.7)],
            0.02,
        ),
        (
            "xi_21",
            WeightedNode,
            vec![(10, 0.7), (11, 0.68), (8, 0.66), (4, 0.64), (15, 0.64), (3, 0.62), (6, 0.6), (12, 0.58)],
            0.02,
        ),
        (
            "xi_22",
            WeightedNodeAfterDisruption,
            vec![(12, 0.7), (20, 0.68), (16, 0.66), (17, 0.64), (18, 0.62), (8, 0.6), (11, 0.58), (24, 0.56)],
            0.02,
        ),
        (
            "xi_23",
            UndeliveredDemandAfterDisruption,
            vec![(1, 0.7), (2, 0.7), (3, 0.7), (6, 0.7), (4, 0.7), (12, 0.7), (5, 0.7), (11, 0.7)],
            0.02,
        ),
        (
            "xi_24",
            PathDistanceChange,
            vec![(1, 0.7), (2, 0.68), (3, 0.66), (6, 0.64), (4, 0.64), (12, 0.6), (5, 0.4), (11, 0.35)],
            0.01,
        ),
        (
            "xi_25",
            Segmentwise,
            vec![(21, 0.7), (20, 0.68), (22, 0.66), (19, 0.64), (23, 0.62), (24, 0.6), (13, 0.58), (14, 0.56)],
            0.01,
        ),
        (
            "xi_26",
            ComplexityMeasureTsallis,
            vec![(8, 0.7), (4, 0.69), (15, 0.68), (3, 0.67), (6, 0.66), (12, 0.65), (9, 0.64), (20, 0.63)],
            0.01,
        ),
        (
            "xi_27",
            ComplexityMeasureDistribution,
            vec![(11, 0.7), (8, 0.69), (4, 0.68), (15, 0.67), (3, 0.66), (6, 0.65), (12, 0.64), (9, 0.63)],
            0.01,
        ),
    ];
    let scenarios = rows
        .into_iter()
        .map(|(id, measure, nodes, probability)| Scenario {
            id: id.to_string(),
            source_measure: Some(measure),
            affected: nodes.into_iter().collect(),
            gamma: DEFAULT_GAMMA,
            probability,
        })
        .collect();
    ScenarioSet::new(scenarios).expect("builtin catalog is valid")
}

/// One scenario per measure vector: the top `top_m` ranked nodes receive
/// rates from the schedule in rank order; probabilities are weighted by the
/// source measure's category and normalized.
pub fn generate_from_measures(
    measures: &[MeasureVector],
    top_m: usize,
    rate_schedule: &[f64],
    prob_weights: &BTreeMap<Category, f64>,
) -> Result<ScenarioSet, ScenarioError> {
    if measures.is_empty() {
        return Err(ScenarioError::NoMeasures);
    }
    assert!(rate_schedule.len() >= top_m, "rate schedule shorter than top_m");
    assert!(
        rate_schedule.windows(2).all(|w| w[0] >= w[1]),
        "rate schedule must be nonincreasing"
    );
    let mut scenarios = Vec::new();
    for (i, v) in measures.iter().enumerate() {
        let ranked = rank_nodes(v, top_m);
        let affected: BTreeMap<NodeId, f64> = ranked
            .iter()
            .enumerate()
            .map(|(rank, &(node, _))| (node, rate_schedule[rank]))
            .collect();
        if affected.is_empty() {
            return Err(ScenarioError::Invalid {
                id: format!("xi_{}", i + 1),
                msg: "measure ranks no nodes".into(),
            });
        }
        scenarios.push(Scenario {
            id: format!("xi_{}", i + 1),
            source_measure: Some(v.kind),
            affected,
            gamma: DEFAULT_GAMMA,
            probability: prob_weights.get(&v.kind.category()).copied().unwrap_or(1.0),
        });
    }
    ScenarioSet::new(scenarios)?.normalize_probabilities()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::measures;

    #[test]
    fn catalog_has_27_scenarios_summing_to_one() {
        let cat = builtin_catalog();
        assert_eq!(cat.len(), 27);
        assert!((cat.total_probability() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn catalog_first_row() {
        let cat = builtin_catalog();
        let s = &cat.scenarios[0];
        assert_eq!(s.id, "xi_1");
        assert_eq!(s.probability, 0.08);
        let expect: BTreeMap<NodeId, f64> =
            [(9, 0.7), (17, 0.65), (16, 0.65), (15, 0.65), (14, 0.65), (19, 0.65), (21, 0.65), (10, 0.65)]
                .into_iter()
                .collect();
        assert_eq!(s.affected, expect);
    }

    #[test]
    fn catalog_last_row_and_duplicate_pair() {
        let cat = builtin_catalog();
        let last = &cat.scenarios[26];
        assert_eq!(last.id, "xi_27");
        assert_eq!(last.source_measure, Some(MeasureKind::ComplexityMeasureDistribution));
        assert_eq!(last.probability, 0.01);
        // xi_10 and xi_11 are printed identically in the source.
        assert_eq!(cat.scenarios[9].affected, cat.scenarios[10].affected);
        assert_eq!(cat.scenarios[9].source_measure, cat.scenarios[10].source_measure);
    }

    #[test]
    fn catalog_rates_affect_only_listed_nodes() {
        let cat = builtin_catalog();
        let s = &cat.scenarios[0];
        assert_eq!(s.theta(9), 0.7);
        assert_eq!(s.theta(1), 0.0);
    }

    #[test]
    fn catalog_risk_split() {
        let cat = builtin_catalog();
        let high: Vec<&str> =
            cat.scenarios.iter().filter(|s| s.is_high_risk()).map(|s| s.id.as_str()).collect();
        assert_eq!(high, ["xi_1", "xi_2", "xi_3", "xi_4", "xi_5", "xi_6", "xi_7"]);
    }

    #[test]
    fn catalog_is_referentially_constant() {
        assert_eq!(builtin_catalog().to_json(), builtin_catalog().to_json());
    }

    #[test]
    fn normalization_scales_and_is_idempotent() {
        let set = ScenarioSet::new(vec![
            Scenario {
                id: "a".into(),
                source_measure: None,
                affected: [(1, 0.5)].into_iter().collect(),
                gamma: 0.5,
                probability: 0.08,
            },
            Scenario {
                id: "b".into(),
                source_measure: None,
                affected: [(2, 0.5)].into_iter().collect(),
                gamma: 0.5,
                probability: 0.02,
            },
        ])
        .unwrap();
        let norm = set.normalize_probabilities().unwrap();
        assert!((norm.scenarios[0].probability - 0.8).abs() < 1e-12);
        assert!((norm.scenarios[1].probability - 0.2).abs() < 1e-12);
        let again = norm.clone().normalize_probabilities().unwrap();
        for (a, b) in norm.scenarios.iter().zip(&again.scenarios) {
            assert!((a.probability - b.probability).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_probability_rejected() {
        let set = ScenarioSet::new(vec![Scenario {
            id: "a".into(),
            source_measure: None,
            affected: [(1, 0.5)].into_iter().collect(),
            gamma: 0.5,
            probability: 0.0,
        }])
        .unwrap();
        assert!(matches!(set.normalize_probabilities(), Err(ScenarioError::ZeroProbability)));
    }

    #[test]
    fn invalid_rate_rejected() {
        let s = Scenario {
            id: "bad".into(),
            source_measure: None,
            affected: [(1, 1.5)].into_iter().collect(),
            gamma: 0.5,
            probability: 0.5,
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let cat = builtin_catalog();
        let parsed = ScenarioSet::from_json(&cat.to_json()).unwrap();
        assert_eq!(parsed, cat);
    }

    #[test]
    fn generate_single_measure_normalizes_to_one() {
        let v = MeasureVector {
            kind: MeasureKind::DegreeCentrality,
            values: [(1, Some(0.9)), (2, Some(0.5)), (3, Some(0.1))].into_iter().collect(),
        };
        let weights: BTreeMap<Category, f64> = [(Category::Connectivity, 0.08)].into_iter().collect();
        let set = generate_from_measures(&[v], 2, &[0.7, 0.65], &weights).unwrap();
        assert_eq!(set.len(), 1);
        assert!((set.scenarios[0].probability - 1.0).abs() < 1e-12);
        assert_eq!(set.scenarios[0].affected[&1], 0.7);
        assert_eq!(set.scenarios[0].affected[&2], 0.65);
    }

    #[test]
    fn generate_rates_nonincreasing_in_rank() {
        let net = fixtures::sioux_falls_network();
        let dem = fixtures::sioux_falls_demand(100.0);
        let all = measures::compute_all(&net, &dem).unwrap();
        let weights: BTreeMap<Category, f64> = [
            (Category::Connectivity, 0.06),
            (Category::Accessibility, 0.04),
            (Category::Criticality, 0.02),
        ]
        .into_iter()
        .collect();
        let schedule = [0.7, 0.69, 0.68, 0.67, 0.66, 0.65, 0.64, 0.63];
        let set = generate_from_measures(&all, 8, &schedule, &weights).unwrap();
        assert_eq!(set.len(), 27);
        assert!((set.total_probability() - 1.0).abs() < 1e-9);
        for s in &set.scenarios {
            let mut rates: Vec<f64> = s.affected.values().copied().collect();
            rates.sort_by(|a, b| b.total_cmp(a));
            assert!(rates.first().copied().unwrap_or(0.0) <= 0.7);
        }
    }

    #[test]
    fn generate_with_zero_rates_is_allowed() {
        let v = MeasureVector {
            kind: MeasureKind::DegreeCentrality,
            values: [(1, Some(0.9)), (2, Some(0.5))].into_iter().collect(),
        };
        let set =
            generate_from_measures(&[v], 2, &[0.0, 0.0], &BTreeMap::new()).unwrap();
        assert_eq!(set.scenarios[0].affected[&1], 0.0);
    }

    #[test]
    fn empty_measure_list_rejected() {
        assert!(matches!(
            generate_from_measures(&[], 2, &[0.5, 0.4], &BTreeMap::new()),
            Err(ScenarioError::NoMeasures)
        ));
    }
}
