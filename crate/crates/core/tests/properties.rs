mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tbc_core::assignment::{
    adapt_required_domains, classify_element_validity, enumerate_valid_configurations, plan_assignment,
    run_assignment, suitable_benches, AssignmentOptions, Excursion, Outcome,
};
use tbc_core::catalog_io::{emit_catalog, emit_report, parse_catalog, Catalog, LoopOptions, ReportFormat};
use tbc_core::costing::{
    configuration_cost, element_cost, overall_stage_cost, select_optimal, CostedConfiguration, StageCostMatrix,
    WeightSet,
};
use tbc_core::execution::{
    evaluate_criteria, simulate_cut_in, verify_validity, CutInParams, EgoMode, ExecutionTrace, ReplayExecutor, Series,
};
use tbc_core::model::{
    validate_configuration, Aggregate, Comparison, CouplingRule, Dimension, Element, EvaluationCriterion, Interval,
    RequiredValidity, Stage, StageSet, TestBench, TestBenchConfiguration, TestCase, TestObjectRequirements, Unit,
    ValidityDomain,
};
use tbc_core::radar_viz::render_radar;

use common::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_requirements(rng: &mut impl Rng) -> TestObjectRequirements {
    let mut reqs = TestObjectRequirements::default();
    for dim in tbc_core::model::DimensionId::ALL {
        if rng.gen_bool(0.3) {
            let mut set = StageSet::empty();
            while set.is_empty() {
                for s in Stage::ALL {
                    if rng.gen_bool(0.5) {
                        set.insert(s);
                    }
                }
            }
            reqs = reqs.allow_only(dim, set);
        }
    }
    reqs
}

fn random_required(bench: &TestBench, rng: &mut impl Rng) -> RequiredValidity {
    let mut required = RequiredValidity::new();
    for leaf in bench.leaf_dimensions() {
        for q in QUANTITIES {
            if rng.gen_bool(0.4) {
                required
                    .entry(leaf.clone())
                    .or_default()
                    .push(ValidityDomain::new(q, Unit::MetersPerSecondSquared, random_interval(rng, 4.0)));
            }
        }
    }
    required
}

fn selected_ids(tbc: &TestBenchConfiguration) -> Vec<String> {
    let mut ids: Vec<String> = tbc.element_ids().map(str::to_string).collect();
    ids.sort();
    ids
}

fn with_costs(mut bench: TestBench, rng: &mut impl Rng) -> TestBench {
    for e in &mut bench.elements {
        e.criterion_costs.insert("time".into(), rng.gen_range(0.0..5.0));
        e.criterion_costs.insert("exec".into(), rng.gen_range(0.0..5.0));
    }
    bench
}

fn random_trace(rng: &mut impl Rng, len: usize) -> ExecutionTrace {
    let mut series = BTreeMap::new();
    for q in QUANTITIES {
        let scale = [1.0, 3.0, 8.0][rng.gen_range(0..3)];
        let samples = (0..len).map(|_| rng.gen_range(-scale..scale)).collect();
        series.insert(
            q.to_string(),
            Series {
                unit: Unit::MetersPerSecondSquared,
                samples,
            },
        );
    }
    ExecutionTrace {
        test_case_id: "tc".into(),
        tbc_id: "replay".into(),
        step: 0.01,
        series,
    }
}

fn enlarge(required: &RequiredValidity, rng: &mut impl Rng) -> RequiredValidity {
    let mut bigger = required.clone();
    for domains in bigger.values_mut() {
        for d in domains {
            d.interval = Interval::new(d.interval.lo - rng.gen_range(0.0..2.0), d.interval.hi + rng.gen_range(0.0..2.0));
        }
    }
    bigger
}

fn swap_sim_emu(stage: Stage) -> Stage {
    match stage {
        Stage::Simulated => Stage::Emulated,
        Stage::Emulated => Stage::Simulated,
        Stage::Real => Stage::Real,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn adding_an_element_keeps_a_bench_suitable(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bench = random_bench(&mut r, 6, 3, true);
        let reqs = random_requirements(&mut r);
        let before = !suitable_benches(std::slice::from_ref(&bench), &reqs).is_empty();
        let mut grown = bench.clone();
        let leaf = grown.leaf_dimensions()[0].clone();
        grown.elements.push(Element::new("extra", leaf, random_stage(&mut r)));
        let after = !suitable_benches(std::slice::from_ref(&grown), &reqs).is_empty();
        prop_assert!(!before || after);
    }

    #[test]
    fn enlarging_requirements_never_adds_valid_elements(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bench = with_random_domains(random_bench(&mut r, 6, 3, false), &mut r);
        let required = random_required(&bench, &mut r);
        let bigger = enlarge(&required, &mut r);
        let valid = |req: &RequiredValidity| -> BTreeSet<String> {
            classify_element_validity(&bench, req).into_iter().filter(|l| l.is_valid()).map(|l| l.element_id).collect()
        };
        prop_assert!(valid(&bigger).is_subset(&valid(&required)));
    }

    #[test]
    fn enumerated_configurations_validate(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bench = random_bench(&mut r, 6, 3, true);
        let labels = random_labels(&bench, &mut r);
        for tbc in enumerate_valid_configurations(&bench, &labels, &RequiredValidity::new()) {
            let report = validate_configuration(&tbc, &bench).unwrap();
            prop_assert!(report.is_ok(), "{}: {}", tbc.id, report);
        }
    }

    #[test]
    fn validation_accepts_exactly_the_enumeration(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bench = random_bench(&mut r, 4, 4, true);
        let enumerated: BTreeSet<Vec<String>> =
            enumerate_valid_configurations(&bench, &all_valid(&bench), &RequiredValidity::new())
                .iter()
                .map(selected_ids)
                .collect();
        let leaves = bench.leaf_dimensions();
        let per_leaf: Vec<Vec<&Element>> = leaves.iter().map(|l| bench.elements_at(l).collect()).collect();
        let mut accepted = BTreeSet::new();
        let total: usize = per_leaf.iter().map(Vec::len).product();
        for mut code in 0..total {
            let mut selection = BTreeMap::new();
            for (leaf, options) in leaves.iter().zip(&per_leaf) {
                selection.insert(leaf.clone(), options[code % options.len()].id.clone());
                code /= options.len();
            }
            let tbc = TestBenchConfiguration { id: "x".into(), bench_id: bench.id.clone(), selection, cost_override: None };
            if validate_configuration(&tbc, &bench).unwrap().is_ok() {
                accepted.insert(selected_ids(&tbc));
            }
        }
        prop_assert_eq!(accepted, enumerated);
    }

    #[test]
    fn element_cost_is_homogeneous(seed in any::<u64>(), lambda in 0.001f64..1000.0) {
        let mut r = rng(seed);
        let names = ["a", "b", "c", "d"];
        let n = r.gen_range(1..=names.len());
        let w = random_weights(&mut r, n);
        let weights = WeightSet::from_pairs(names[..n].iter().copied().zip(w)).unwrap();
        let mut e = Element::new("e", Dimension::canonical(tbc_core::model::DimensionId::Scenery), Stage::Simulated);
        for name in &names[..n] {
            e = e.with_cost(name, r.gen_range(0.0..10.0));
        }
        let mut scaled = e.clone();
        scaled.criterion_costs.values_mut().for_each(|k| *k *= lambda);
        let base = element_cost(&e, &weights).unwrap();
        let got = element_cost(&scaled, &weights).unwrap();
        prop_assert!((got - lambda * base).abs() <= 1e-12 * (1.0 + lambda * base));
    }

    #[test]
    fn winner_survives_affine_maps(costs in prop::collection::vec(0.0f64..100.0, 1..10), lambda in 0.01f64..100.0, mu in -100.0f64..100.0) {
        let costed: Vec<CostedConfiguration> = costs.iter().enumerate().map(|(i, &cost)| CostedConfiguration {
            tbc: TestBenchConfiguration { id: format!("c{i:02}"), bench_id: "B".into(), selection: BTreeMap::new(), cost_override: None },
            cost,
            breakdown: BTreeMap::new(),
        }).collect();
        let mapped: Vec<CostedConfiguration> = costed.iter().cloned().map(|mut c| { c.cost = lambda * c.cost + mu; c }).collect();
        // Affine maps in floating point can merge near-equal costs; only
        // compare when the winner is separated by more than rounding.
        let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let runner_up = costs.iter().copied().filter(|&c| c > best).fold(f64::INFINITY, f64::min);
        prop_assume!(runner_up - best > 1e-9 || runner_up.is_infinite());
        prop_assert_eq!(&select_optimal(&costed).unwrap().id, &select_optimal(&mapped).unwrap().id);
    }

    #[test]
    fn override_ignores_element_costs(seed in any::<u64>(), k in 0.0f64..100.0) {
        let mut r = rng(seed);
        let bench = with_costs(random_bench(&mut r, 6, 2, false), &mut r);
        let weights = WeightSet::from_pairs([("time", 0.5), ("exec", 0.5)]).unwrap();
        let tbc = enumerate_valid_configurations(&bench, &all_valid(&bench), &RequiredValidity::new()).remove(0);
        let tbc = TestBenchConfiguration { cost_override: Some(k), ..tbc };
        let costed = configuration_cost(&tbc, &bench, &weights).unwrap();
        prop_assert_eq!(costed.cost, k);
        prop_assert!(costed.breakdown.is_empty());
    }

    #[test]
    fn single_criterion_cost_equals_matrix_form(seed in any::<u64>()) {
        let mut r = rng(seed);
        let j_count = r.gen_range(1..=10usize);
        let dims = tbc_core::model::DimensionId::ALL;
        let mut bench = TestBench::new("B");
        let mut values = vec![0.0; 3 * j_count];
        let mut choice = BTreeMap::new();
        for (j, dim) in dims.iter().enumerate() {
            if j >= j_count {
                bench.uncovered.insert(*dim);
                continue;
            }
            let stage = random_stage(&mut r);
            let cost = r.gen_range(0.0..10.0);
            bench.elements.push(Element::new(&format!("e{j}"), Dimension::canonical(*dim), stage).with_cost("k", cost));
            let i = usize::from(stage.plot_coordinate());
            for s in 1..=3 {
                values[(s - 1) * j_count + j] = if s == i { cost } else { r.gen_range(0.0..10.0) };
            }
            choice.insert(j + 1, i);
        }
        let matrix = StageCostMatrix::new(j_count, 1, values, vec![1.0]).unwrap();
        let g = overall_stage_cost(&matrix, &choice).unwrap();
        let tbc = enumerate_valid_configurations(&bench, &all_valid(&bench), &RequiredValidity::new()).remove(0);
        let k = configuration_cost(&tbc, &bench, &WeightSet::from_pairs([("k", 1.0)]).unwrap()).unwrap().cost;
        prop_assert!((g - k).abs() <= 1e-12);
    }

    #[test]
    fn successful_loops_end_valid_and_bounded(seed in any::<u64>(), max_iterations in 1usize..5) {
        let mut r = rng(seed);
        let bench = with_costs(with_random_domains(random_bench(&mut r, 6, 3, false), &mut r), &mut r);
        let trace = random_trace(&mut r, 20);
        let test_case = TestCase {
            id: "tc".into(),
            scenario: BTreeMap::new(),
            criteria: vec![EvaluationCriterion {
                id: "bounded".into(),
                quantity: "lateral_acceleration".into(),
                aggregate: Aggregate::Max,
                comparison: Comparison::Lt,
                threshold: 100.0,
                unit: Unit::MetersPerSecondSquared,
            }],
            required_validity: random_required(&bench, &mut r),
        };
        let executor = ReplayExecutor::new(trace.clone()).unwrap();
        let options = AssignmentOptions {
            weights: WeightSet::from_pairs([("time", 0.5), ("exec", 0.5)]).unwrap(),
            margin: 0.0,
            max_iterations,
        };
        let benches = [bench.clone()];
        let report = run_assignment(&benches, &TestObjectRequirements::default(), &test_case, &executor, &options);
        prop_assert!(report.iterations.len() <= max_iterations);
        let last = report.iterations.last().unwrap();
        match &report.outcome {
            Outcome::Success { tbc_id, .. } => {
                let costed = last.costed_configurations.as_ref().unwrap();
                let tbc = &costed.iter().find(|c| &c.tbc.id == tbc_id).unwrap().tbc;
                prop_assert!(verify_validity(tbc, &bench, &trace).is_empty());
            }
            Outcome::AbortNoProgress => {
                prop_assert_eq!(last.adapted_required_validity.as_ref(), Some(&last.required_validity));
            }
            _ => {}
        }
        let again = run_assignment(&benches, &TestObjectRequirements::default(), &test_case, &executor, &options);
        prop_assert_eq!(emit_report(&report, ReportFormat::Structured), emit_report(&again, ReportFormat::Structured));
    }

    #[test]
    fn swapping_simulated_and_emulated_keeps_the_plan(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bench = with_costs(with_random_domains(random_bench(&mut r, 6, 3, true), &mut r), &mut r);
        let reqs = random_requirements(&mut r);
        let required = random_required(&bench, &mut r);
        let mut swapped = bench.clone();
        for e in &mut swapped.elements {
            e.stage = swap_sim_emu(e.stage);
        }
        for rule in &mut swapped.coupling_rules {
            if let CouplingRule::ForbiddenStagePair { stage_a, stage_b, .. } = rule {
                *stage_a = swap_sim_emu(*stage_a);
                *stage_b = swap_sim_emu(*stage_b);
            }
        }
        let mut swapped_reqs = reqs.clone();
        for set in swapped_reqs.allowed_stages.values_mut() {
            *set = set.iter().map(swap_sim_emu).collect();
        }
        let test_case = TestCase {
            id: "tc".into(),
            scenario: BTreeMap::new(),
            criteria: vec![],
            required_validity: required,
        };
        let options = AssignmentOptions::new(WeightSet::from_pairs([("time", 0.5), ("exec", 0.5)]).unwrap());
        let a = plan_assignment(&[bench], &reqs, &test_case, &options);
        let b = plan_assignment(&[swapped], &swapped_reqs, &test_case, &options);
        prop_assert_eq!(&a.outcome, &b.outcome);
        prop_assert_eq!(&a.iterations[0].valid_configurations, &b.iterations[0].valid_configurations);
    }

    #[test]
    fn adaptation_covers_old_and_observed(seed in any::<u64>(), margin in 0.0f64..0.5) {
        let mut r = rng(seed);
        let old = random_interval(&mut r, 5.0);
        let observed = random_interval(&mut r, 5.0);
        let dim = Dimension::canonical(tbc_core::model::DimensionId::VehicleDynamics);
        let required = RequiredValidity::from([(dim.clone(), vec![ValidityDomain::new("q", Unit::Meters, old)])]);
        let adapted = adapt_required_domains(
            &required,
            &[Excursion { dimension: dim.clone(), quantity: "q".into(), unit: Unit::Meters, observed }],
            margin,
        );
        let iv = adapted[&dim][0].interval;
        prop_assert_eq!(iv.lo, -iv.hi);
        prop_assert!(iv.contains_interval(&old) && iv.contains_interval(&observed));
    }

    #[test]
    fn min_max_criteria_ignore_sample_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let trace = random_trace(&mut r, 50);
        let mut shuffled = trace.clone();
        for s in shuffled.series.values_mut() {
            rand::seq::SliceRandom::shuffle(s.samples.as_mut_slice(), &mut r);
        }
        let criteria: Vec<EvaluationCriterion> = [Aggregate::Min, Aggregate::Max].into_iter().map(|aggregate| EvaluationCriterion {
            id: format!("{aggregate:?}"),
            quantity: "yaw_rate".into(),
            aggregate,
            comparison: Comparison::Ge,
            threshold: r.gen_range(-8.0..8.0),
            unit: Unit::MetersPerSecondSquared,
        }).collect();
        prop_assert_eq!(evaluate_criteria(&trace, &criteria).unwrap(), evaluate_criteria(&shuffled, &criteria).unwrap());
    }

    #[test]
    fn random_catalogs_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bench = with_costs(with_random_domains(random_bench(&mut r, 6, 3, true), &mut r), &mut r);
        let catalog = Catalog {
            benches: vec![bench],
            test_cases: vec![],
            requirements: random_requirements(&mut r),
            weights: Some(WeightSet::from_pairs([("time", 0.5), ("exec", 0.5)]).unwrap()),
            options: LoopOptions::default(),
            executor: None,
        };
        let text = emit_catalog(&catalog);
        let parsed = parse_catalog(&text).unwrap();
        prop_assert_eq!(&parsed, &catalog);
        prop_assert_eq!(emit_catalog(&parsed), text);
    }

    #[test]
    fn radar_marks_every_element_and_leaf(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bench = random_bench(&mut r, 10, 3, false);
        let tbc = enumerate_valid_configurations(&bench, &all_valid(&bench), &RequiredValidity::new()).remove(0);
        let svg = render_radar(&bench, Some(&tbc)).unwrap();
        prop_assert_eq!(svg.matches(r#"class="element""#).count(), bench.elements.len());
        prop_assert_eq!(svg.matches(r#"class="spoke""#).count(), bench.leaf_dimensions().len());
        let polygon = svg.lines().find(|l| l.starts_with("<polygon")).unwrap();
        let points = polygon.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        prop_assert_eq!(points.split(' ').count(), bench.leaf_dimensions().len());
    }
}

#[test]
fn halving_the_step_keeps_the_lateral_peak() {
    for peak in [0.5, 2.0, 3.5, 6.0] {
        let params = CutInParams {
            ego_speed: 120.0,
            cut_in_speed: 130.0,
            start_distance: -3.0,
            trigger_distance: 20.0,
            ego_mode: EgoMode::LaneChange {
                peak_lateral_acceleration: peak,
            },
        };
        let coarse = simulate_cut_in(&params, 0.01, 20.0).unwrap();
        let fine = simulate_cut_in(&params, 0.005, 20.0).unwrap();
        let hull = |t: &ExecutionTrace| t.hull("lateral_acceleration").unwrap();
        assert!((hull(&coarse).hi - hull(&fine).hi).abs() < 1e-6);
        assert!((hull(&coarse).lo - hull(&fine).lo).abs() < 1e-6);
        assert_eq!(simulate_cut_in(&params, 0.01, 20.0).unwrap(), coarse);
    }
}
