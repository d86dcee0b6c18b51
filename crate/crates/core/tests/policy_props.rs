mod oracles;

use std::collections::BTreeMap;

use cohortlab_core::curriculum::{min_completion_terms, Course, Curriculum, EdgeKind, GraduationRule, Parity, PrereqEdge};
use cohortlab_core::policy::{
    apply_policy, decompose_effects, detect_amplifiers, run_experiment, Axis, CellId, CellResult, ExperimentDesign, Outcome,
    PolicyIntervention, RegulatoryAction, ReplicationOutcome,
};
use cohortlab_core::sim::{simulate, BehaviorRules, PopulationSpec, SimulationConfig};
use cohortlab_core::temporal::ShockSeries;
use oracles::{exhaustive_schedule, random_dag, DagParams, RawGraph};
use proptest::prelude::*;

fn replication(seed: u64, dropout: f64) -> ReplicationOutcome {
    ReplicationOutcome { seed, dropout_rate: dropout, graduation_rate: 1.0 - dropout, mean_time_to_degree: Some(10.0), graduates: 1 }
}

fn cells_from(values: &[Vec<f64>]) -> Vec<CellResult> {
    values
        .iter()
        .enumerate()
        .map(|(i, reps)| {
            let reps = reps.iter().enumerate().map(|(r, &v)| replication(r as u64, v)).collect();
            CellResult::from_replications(CellId::from_index(i), reps)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn contrasts_follow_their_definitions(values in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 1..5), 8)) {
        let cells = cells_from(&values);
        let effects = decompose_effects(&cells, Outcome::DropoutRate).unwrap();
        let m = |s: bool, p: bool, r: bool| mean(&values[CellId { structural: s, pedagogical: p, regulatory: r }.index()]);
        let at = |axis: Axis, on: bool, c: CellId| c.is_on(axis) == on;
        // Main effect: mean over on-cells minus mean over off-cells.
        for (k, axis) in Axis::ALL.iter().enumerate() {
            let side = |on: bool| mean(&(0..8).map(CellId::from_index).filter(|&c| at(*axis, on, c)).map(|c| mean(&values[c.index()])).collect::<Vec<_>>());
            prop_assert!((effects.main[k].estimate - (side(true) - side(false))).abs() < 1e-12);
        }
        // S:P as half the difference of simple effects, averaged over R.
        let sp = mean(&[false, true].map(|r| 0.5 * ((m(true, true, r) - m(true, false, r)) - (m(false, true, r) - m(false, false, r)))));
        prop_assert!((effects.two_way[0].estimate - sp).abs() < 1e-12);
        let sr = mean(&[false, true].map(|p| 0.5 * ((m(true, p, true) - m(true, p, false)) - (m(false, p, true) - m(false, p, false)))));
        prop_assert!((effects.two_way[1].estimate - sr).abs() < 1e-12);
        let pr = mean(&[false, true].map(|s| 0.5 * ((m(s, true, true) - m(s, true, false)) - (m(s, false, true) - m(s, false, false)))));
        prop_assert!((effects.two_way[2].estimate - pr).abs() < 1e-12);
        let sp_at = |r: bool| 0.5 * ((m(true, true, r) - m(true, false, r)) - (m(false, true, r) - m(false, false, r)));
        prop_assert!((effects.three_way.estimate - 0.5 * (sp_at(true) - sp_at(false))).abs() < 1e-12);
    }

    #[test]
    fn only_the_injected_pair_is_flagged(pair in 0usize..3, size in 0.02f64..0.2) {
        let pairs = [[Axis::Structural, Axis::Pedagogical], [Axis::Structural, Axis::Regulatory], [Axis::Pedagogical, Axis::Regulatory]];
        let [a, b] = pairs[pair];
        let values: Vec<Vec<f64>> = (0..8)
            .map(CellId::from_index)
            .map(|c| {
                let sign = |x: Axis| if c.is_on(x) { 1.0 } else { -1.0 };
                let additive = 0.4 - 0.03 * sign(Axis::Structural) - 0.02 * sign(Axis::Pedagogical) + 0.01 * sign(Axis::Regulatory);
                vec![additive - size / 2.0 * sign(a) * sign(b); 3]
            })
            .collect();
        let effects = decompose_effects(&cells_from(&values), Outcome::DropoutRate).unwrap();
        let flagged: Vec<[Axis; 2]> = detect_amplifiers(&effects, 0.01).into_iter().filter(|v| v.flagged).map(|v| v.pair).collect();
        prop_assert_eq!(flagged, vec![pairs[pair]]);
    }

    #[test]
    fn downgrading_every_edge_never_slows_completion(seed in any::<u64>(), cap in 1usize..=3, even in any::<bool>()) {
        let cur = random_dag(seed, &DagParams { max_nodes: 9, max_edges: 14, single_parity_prob: 0.2 });
        let start = if even { Parity::Even } else { Parity::Odd };
        let downgrade = PolicyIntervention::Regulatory(RegulatoryAction { downgrade_all: true, ..Default::default() });
        let applied = apply_policy(&cur, &BehaviorRules::default(), &[downgrade]).unwrap();
        prop_assert!(applied.curriculum.edges().iter().all(|e| e.kind == EdgeKind::RequiresRegularized));
        let before = exhaustive_schedule(&RawGraph::of(&cur), cap, start, None, 40).unwrap();
        let after = exhaustive_schedule(&RawGraph::of(&applied.curriculum), cap, start, None, 40).unwrap();
        prop_assert!(after <= before);
        prop_assert_eq!(min_completion_terms(&applied.curriculum, cap, start).unwrap(), after);
    }
}

fn small_base() -> SimulationConfig {
    let ids = ["A", "B", "C", "D", "E", "F"];
    let courses = ids
        .iter()
        .map(|id| Course {
            id: id.to_string(),
            name: id.to_string(),
            credits: 6.0,
            terms_offered: [Parity::Odd, Parity::Even].into_iter().collect(),
            base_difficulty: 0.0,
        })
        .collect();
    let edges = [("A", "B"), ("B", "C"), ("A", "D"), ("D", "E"), ("C", "F")]
        .iter()
        .map(|(a, b)| PrereqEdge { from: a.to_string(), to: b.to_string(), kind: EdgeKind::RequiresPassed })
        .collect();
    SimulationConfig {
        curriculum: Curriculum::build(courses, edges, GraduationRule::AllCoursesPassed).unwrap(),
        population: PopulationSpec {
            n: 300,
            prep_mean: 0.0,
            prep_sd: 1.0,
            high_ses_share: 0.3,
            ses_prep_shift: 0.5,
            work_hours_mean: 10.0,
            work_hours_sd: 5.0,
            ses_work_shift: -5.0,
            start_parity: Parity::Odd,
        },
        shocks: ShockSeries::constant(12, 0.05, 0.1),
        rules: BehaviorRules { nominal_cap: 2, reduced_cap: 1, comfortable_load: 2, ..BehaviorRules::default() },
        policy: Vec::new(),
        horizon: 12,
        seed: 0,
    }
}

#[test]
fn null_interventions_give_contrasts_within_noise() {
    let design = ExperimentDesign { base: small_base(), factors: BTreeMap::new(), replications: 8, seed_base: 40 };
    let cells = run_experiment(&design).unwrap();
    for outcome in [Outcome::DropoutRate, Outcome::GraduationRate] {
        let e = decompose_effects(&cells, outcome).unwrap();
        for c in e.main.iter().chain(&e.two_way).chain([&e.three_way]) {
            assert!(c.std_error > 0.0);
            assert!(c.estimate.abs() <= 3.0 * c.std_error, "{} {}: {} ± {}", outcome.as_str(), c.name(), c.estimate, c.std_error);
        }
    }
}

#[test]
fn cell_results_do_not_depend_on_execution_order() {
    let mut factors = BTreeMap::new();
    factors.insert(
        Axis::Regulatory,
        vec![PolicyIntervention::Regulatory(RegulatoryAction { downgrade_all: true, ..Default::default() })],
    );
    let design = ExperimentDesign { base: small_base(), factors, replications: 2, seed_base: 7 };
    let forward = run_experiment(&design).unwrap();
    let mut backward: Vec<CellResult> = (0..8)
        .rev()
        .map(CellId::from_index)
        .map(|cell| {
            let reps = (0..2).rev().map(|r| ReplicationOutcome::from_result(&simulate(&design.replication_config(cell, r)).unwrap())).collect::<Vec<_>>();
            CellResult::from_replications(cell, reps.into_iter().rev().collect())
        })
        .collect();
    backward.sort_by_key(|c| c.cell.index());
    assert_eq!(forward, backward);
}
