//! Systematic assignment of a test case to the cheapest sufficiently valid
//! test bench configuration.
//!
//! The flow is:
//!
//! 1. keep the benches that can operate the test object ([`suitable_benches`]),
//! 2. label every element sufficiently or insufficiently valid against the
//!    required validity domains ([`classify_element_validity`]),
//! 3. enumerate every meaningful composition of valid elements
//!    ([`enumerate_valid_configurations`]),
//! 4. cost each configuration and 5. pick the cheapest (see [`crate::costing`]),
//! 6. execute it and 7. check that no selected element left its domain
//!    (see [`crate::execution`]),
//! 8. on a violation widen the required domains ([`adapt_required_domains`])
//!    and go back to step 2.
//!
//! Step 1 runs once. The loop is bounded by an iteration cap and stops early
//! when step 8 leaves the requirements unchanged.

use std::collections::{BTreeMap, HashSet};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::costing::{configuration_cost, select_optimal, CostedConfiguration, WeightSet};
use crate::execution::{evaluate_criteria, verify_validity, CriterionResult, Executor, TraceSummary, Violation};
use crate::model::{
    requirements_for, unresolved_ports, CouplingEffect, CouplingRule, Dimension, Element, Interval, RequiredValidity,
    Stage, TestBench, TestBenchConfiguration, TestCase, TestObjectRequirements, Unit, ValidityDomain,
};

pub const DEFAULT_MAX_ITERATIONS: usize = 8;

/// Step 1: benches that provide an allowed stage in every dimension and every
/// port the test object needs.
pub fn suitable_benches<'a>(benches: &'a [TestBench], reqs: &TestObjectRequirements) -> Vec<&'a TestBench> {
    benches.iter().filter(|b| is_suitable(b, reqs)).collect()
}

fn is_suitable(bench: &TestBench, reqs: &TestObjectRequirements) -> bool {
    let stages_ok = crate::model::DimensionId::ALL.into_iter().all(|dim| {
        let allowed = reqs.allowed(dim);
        if bench.uncovered.contains(&dim) {
            // An absent dimension only suits a test object indifferent to it.
            return allowed.is_all();
        }
        bench
            .leaf_dimensions()
            .iter()
            .filter(|leaf| leaf.id == dim)
            .all(|leaf| bench.elements_at(leaf).any(|e| allowed.contains(e.stage)))
    });
    let ports_ok = reqs
        .required_ports
        .iter()
        .all(|port| bench.elements.iter().any(|e| e.provides(port)));
    stages_ok && ports_ok
}

/// The part of a suitable bench usable with this test object: elements at a
/// disallowed stage are dropped, along with rules and named configurations
/// that mention them.
pub fn restrict_to_allowed_stages(bench: &TestBench, reqs: &TestObjectRequirements) -> TestBench {
    let keep = |e: &Element| reqs.allowed(e.dimension.id).contains(e.stage);
    let mut restricted = bench.clone();
    restricted.elements.retain(keep);
    let kept: HashSet<String> = restricted.elements.iter().map(|e| e.id.clone()).collect();
    restricted.coupling_rules.retain(|rule| match rule {
        CouplingRule::CouplingEffect {
            element_a, element_b, ..
        } => kept.contains(element_a) && kept.contains(element_b),
        CouplingRule::ForbiddenStagePair { .. } => true,
    });
    restricted
        .configurations
        .retain(|tbc| tbc.element_ids().all(|id| kept.contains(id)));
    restricted
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    SufficientlyValid,
    InsufficientlyValid,
}

/// Why a requirement was (or was not) met for one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonKind {
    /// Declared domain does not contain the required interval.
    NotCovered,
    /// No domain declared for the quantity.
    Undeclared,
    /// Declared in a different unit.
    UnitMismatch,
    /// Accepted on expert assertion rather than a declared domain.
    ExpertAsserted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReason {
    pub quantity: String,
    pub required: Interval,
    pub provided: Option<Interval>,
    pub kind: ReasonKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityLabel {
    pub element_id: String,
    pub verdict: Verdict,
    pub reasons: Vec<ValidityReason>,
}

impl ValidityLabel {
    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::SufficientlyValid
    }
}

/// Shortfalls of `element` against the required domains of its dimension.
fn shortfalls(element: &Element, required: &RequiredValidity) -> Vec<ValidityReason> {
    requirements_for(required, &element.dimension)
        .filter_map(|req| {
            let (provided, kind) = match element.domain(&req.quantity) {
                None => (None, ReasonKind::Undeclared),
                Some(d) if d.unit != req.unit => (Some(d.interval), ReasonKind::UnitMismatch),
                Some(d) if d.interval.contains_interval(&req.interval) => return None,
                Some(d) => (Some(d.interval), ReasonKind::NotCovered),
            };
            Some(ValidityReason {
                quantity: req.quantity.clone(),
                required: req.interval,
                provided,
                kind,
            })
        })
        .collect()
}

/// Step 2: one label per element of the bench.
pub fn classify_element_validity(bench: &TestBench, required: &RequiredValidity) -> Vec<ValidityLabel> {
    bench
        .elements
        .iter()
        .map(|element| {
            if element.stage == Stage::Real {
                return ValidityLabel {
                    element_id: element.id.clone(),
                    verdict: Verdict::SufficientlyValid,
                    reasons: Vec::new(),
                };
            }
            let gaps = shortfalls(element, required);
            if gaps.is_empty() {
                ValidityLabel {
                    element_id: element.id.clone(),
                    verdict: Verdict::SufficientlyValid,
                    reasons: Vec::new(),
                }
            } else if element.expert_asserted_valid {
                ValidityLabel {
                    element_id: element.id.clone(),
                    verdict: Verdict::SufficientlyValid,
                    reasons: gaps
                        .into_iter()
                        .map(|r| ValidityReason {
                            kind: ReasonKind::ExpertAsserted,
                            ..r
                        })
                        .collect(),
                }
            } else {
                ValidityLabel {
                    element_id: element.id.clone(),
                    verdict: Verdict::InsufficientlyValid,
                    reasons: gaps,
                }
            }
        })
        .collect()
}

/// Domain left for `element` on `quantity` once coupling shrinks it to `cap`.
/// Real elements and undeclared domains start from the whole real line.
fn shrunk_domain(element: &Element, quantity: &str, cap: &Interval) -> Option<Interval> {
    match element.domain(quantity) {
        Some(d) if element.stage != Stage::Real => d.interval.intersect(cap),
        _ => Some(*cap),
    }
}

fn survives_shrinking(
    selected: &[&Element],
    a: &str,
    b: &str,
    quantity: &str,
    cap: &Interval,
    required: &RequiredValidity,
) -> bool {
    if !(selected.iter().any(|e| e.id == a) && selected.iter().any(|e| e.id == b)) {
        return true;
    }
    selected.iter().filter(|e| e.id == a || e.id == b).all(|e| {
        requirements_for(required, &e.dimension)
            .filter(|req| req.quantity == quantity)
            .all(|req| shrunk_domain(e, quantity, cap).is_some_and(|d| d.contains_interval(&req.interval)))
    })
}

/// Step 3: every composition of sufficiently valid elements, one per leaf
/// dimension, that resolves its ports and survives the coupling rules.
///
/// Configurations matching a named configuration of the bench take its id
/// and cost override; the rest get [`TestBenchConfiguration::derived_id`].
pub fn enumerate_valid_configurations(
    bench: &TestBench,
    labels: &[ValidityLabel],
    required: &RequiredValidity,
) -> Vec<TestBenchConfiguration> {
    let valid: HashSet<&str> = labels
        .iter()
        .filter(|l| l.is_valid())
        .map(|l| l.element_id.as_str())
        .collect();
    let leaves = bench.leaf_dimensions();
    if leaves.is_empty() {
        return Vec::new();
    }
    let candidates: Vec<Vec<&Element>> = leaves
        .iter()
        .map(|leaf| {
            let mut at_leaf: Vec<&Element> = bench
                .elements_at(leaf)
                .filter(|e| valid.contains(e.id.as_str()))
                .collect();
            at_leaf.sort_by(|a, b| a.id.cmp(&b.id));
            at_leaf
        })
        .collect();

    let mut out: Vec<TestBenchConfiguration> = candidates
        .into_iter()
        .multi_cartesian_product()
        .filter(|selected| unresolved_ports(selected).is_empty())
        .filter(|selected| {
            bench.coupling_rules.iter().all(|rule| match rule {
                CouplingRule::CouplingEffect {
                    element_a,
                    element_b,
                    effect: CouplingEffect::ShrinksDomain { quantity, interval },
                } => survives_shrinking(selected, element_a, element_b, quantity, interval, required),
                other => !other.violated_by(selected),
            })
        })
        .map(|selected| {
            let selection: BTreeMap<Dimension, String> = leaves
                .iter()
                .cloned()
                .zip(selected.iter().map(|e| e.id.clone()))
                .collect();
            match bench.configurations.iter().find(|c| c.selection == selection) {
                Some(named) => named.clone(),
                None => TestBenchConfiguration {
                    id: TestBenchConfiguration::derived_id(&bench.id, &selection),
                    bench_id: bench.id.clone(),
                    selection,
                    cost_override: None,
                },
            }
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// A quantity range observed outside a declared domain, as input to step 8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub dimension: Dimension,
    pub quantity: String,
    pub unit: Unit,
    pub observed: Interval,
}

impl From<&Violation> for Excursion {
    fn from(v: &Violation) -> Self {
        Excursion {
            dimension: v.dimension.clone(),
            quantity: v.quantity.clone(),
            unit: v.unit,
            observed: v.observed,
        }
    }
}

/// Step 8: widen each violated requirement to the symmetric hull
/// `[-m, m]`, `m = (1 + margin) · max(|old|, |observed|)`.
///
/// The requirement is looked up at the violated dimension, then at its
/// parent; a quantity that was not required yet is added at the violated
/// dimension.
pub fn adapt_required_domains(required: &RequiredValidity, excursions: &[Excursion], margin: f64) -> RequiredValidity {
    let mut adapted = required.clone();
    for ex in excursions {
        let parent = Dimension::canonical(ex.dimension.id);
        let key = [&ex.dimension, &parent]
            .into_iter()
            .find(|d| {
                adapted
                    .get(*d)
                    .is_some_and(|domains| domains.iter().any(|r| r.quantity == ex.quantity))
            })
            .cloned();
        match key {
            Some(key) => {
                let domains = adapted.get_mut(&key).expect("key found above");
                let req = domains
                    .iter_mut()
                    .find(|r| r.quantity == ex.quantity)
                    .expect("quantity found above");
                let m = (1.0 + margin) * req.interval.magnitude().max(ex.observed.magnitude());
                req.interval = Interval::symmetric(m);
            }
            None => {
                let m = (1.0 + margin) * ex.observed.magnitude();
                adapted
                    .entry(ex.dimension.clone())
                    .or_default()
                    .push(ValidityDomain::new(&ex.quantity, ex.unit, Interval::symmetric(m)));
            }
        }
    }
    adapted
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentOptions {
    pub weights: WeightSet,
    #[serde(default)]
    pub margin: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

impl AssignmentOptions {
    pub fn new(weights: WeightSet) -> Self {
        AssignmentOptions {
            weights,
            margin: 0.0,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// Everything produced in one pass through steps 2 to 8. Later fields stay
/// `None` when the pass stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub suitable_benches: Vec<String>,
    pub required_validity: RequiredValidity,
    pub validity_labels: Option<BTreeMap<String, Vec<ValidityLabel>>>,
    pub valid_configurations: Option<Vec<String>>,
    pub costed_configurations: Option<Vec<CostedConfiguration>>,
    pub selected: Option<String>,
    pub trace_summary: Option<TraceSummary>,
    pub criteria: Option<BTreeMap<String, CriterionResult>>,
    pub violations: Option<Vec<Violation>>,
    pub adapted_required_validity: Option<RequiredValidity>,
}

impl IterationRecord {
    fn new(iteration: usize, suitable: &[&TestBench], required: &RequiredValidity) -> Self {
        IterationRecord {
            iteration,
            suitable_benches: suitable.iter().map(|b| b.id.clone()).collect(),
            required_validity: required.clone(),
            validity_labels: None,
            valid_configurations: None,
            costed_configurations: None,
            selected: None,
            trace_summary: None,
            criteria: None,
            violations: None,
            adapted_required_validity: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestVerdict {
    Passed,
    CriteriaFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Outcome {
    /// Executed validly. `verdict` is independent of validity.
    Success {
        tbc_id: String,
        verdict: TestVerdict,
        results: BTreeMap<String, CriterionResult>,
    },
    /// Planning only (steps 1 to 5): the configuration that would be executed.
    Planned { tbc_id: String },
    AbortNoSuitableBench,
    AbortNoValidConfiguration,
    AbortIterationCap,
    AbortNoProgress,
    AbortCostError { message: String },
    AbortExecutionError { message: String },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success { .. } | Outcome::Planned { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Success { .. } => "success",
            Outcome::Planned { .. } => "planned",
            Outcome::AbortNoSuitableBench => "abort_no_suitable_bench",
            Outcome::AbortNoValidConfiguration => "abort_no_valid_configuration",
            Outcome::AbortIterationCap => "abort_iteration_cap",
            Outcome::AbortNoProgress => "abort_no_progress",
            Outcome::AbortCostError { .. } => "abort_cost_error",
            Outcome::AbortExecutionError { .. } => "abort_execution_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentReport {
    pub test_case_id: String,
    pub iterations: Vec<IterationRecord>,
    pub outcome: Outcome,
}

impl AssignmentReport {
    pub fn final_tbc(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Success { tbc_id, .. } | Outcome::Planned { tbc_id } => Some(tbc_id),
            _ => None,
        }
    }
}

enum Planning {
    Selected(TestBenchConfiguration),
    Stopped(Outcome),
}

/// Steps 2 to 5 for one iteration, filling in the record as it goes.
fn plan_iteration(
    benches: &[TestBench],
    required: &RequiredValidity,
    weights: &WeightSet,
    record: &mut IterationRecord,
) -> Planning {
    let mut labels = BTreeMap::new();
    let mut configs = Vec::new();
    for bench in benches {
        let bench_labels = classify_element_validity(bench, required);
        configs.extend(enumerate_valid_configurations(bench, &bench_labels, required));
        labels.insert(bench.id.clone(), bench_labels);
    }
    record.validity_labels = Some(labels);
    record.valid_configurations = Some(configs.iter().map(|c| c.id.clone()).collect());
    if configs.is_empty() {
        return Planning::Stopped(Outcome::AbortNoValidConfiguration);
    }

    let mut costed = Vec::with_capacity(configs.len());
    for tbc in &configs {
        let bench = benches
            .iter()
            .find(|b| b.id == tbc.bench_id)
            .expect("configuration enumerated from a known bench");
        match configuration_cost(tbc, bench, weights) {
            Ok(c) => costed.push(c),
            Err(e) => {
                return Planning::Stopped(Outcome::AbortCostError { message: e.to_string() });
            }
        }
    }
    let selected = select_optimal(&costed).expect("non-empty").clone();
    record.costed_configurations = Some(costed);
    record.selected = Some(selected.id.clone());
    Planning::Selected(selected)
}

fn usable_benches<'a>(benches: &'a [TestBench], reqs: &TestObjectRequirements) -> (Vec<&'a TestBench>, Vec<TestBench>) {
    let suitable = suitable_benches(benches, reqs);
    let restricted = suitable.iter().map(|b| restrict_to_allowed_stages(b, reqs)).collect();
    (suitable, restricted)
}

/// Steps 1 to 5 only: which configuration would be used, without executing it.
pub fn plan_assignment(
    benches: &[TestBench],
    reqs: &TestObjectRequirements,
    test_case: &TestCase,
    options: &AssignmentOptions,
) -> AssignmentReport {
    let (suitable, restricted) = usable_benches(benches, reqs);
    let mut record = IterationRecord::new(1, &suitable, &test_case.required_validity);
    let outcome = if suitable.is_empty() {
        Outcome::AbortNoSuitableBench
    } else {
        match plan_iteration(&restricted, &test_case.required_validity, &options.weights, &mut record) {
            Planning::Selected(tbc) => Outcome::Planned { tbc_id: tbc.id },
            Planning::Stopped(outcome) => outcome,
        }
    };
    AssignmentReport {
        test_case_id: test_case.id.clone(),
        iterations: vec![record],
        outcome,
    }
}

/// Full assignment loop with execution and post-hoc validity verification.
pub fn run_assignment(
    benches: &[TestBench],
    reqs: &TestObjectRequirements,
    test_case: &TestCase,
    executor: &dyn Executor,
    options: &AssignmentOptions,
) -> AssignmentReport {
    let mut report = AssignmentReport {
        test_case_id: test_case.id.clone(),
        iterations: Vec::new(),
        outcome: Outcome::AbortIterationCap,
    };
    let (suitable, restricted) = usable_benches(benches, reqs);
    let mut required = test_case.required_validity.clone();
    if suitable.is_empty() {
        report.iterations.push(IterationRecord::new(1, &suitable, &required));
        report.outcome = Outcome::AbortNoSuitableBench;
        return report;
    }

    for iteration in 1..=options.max_iterations.max(1) {
        let mut record = IterationRecord::new(iteration, &suitable, &required);
        let selected = match plan_iteration(&restricted, &required, &options.weights, &mut record) {
            Planning::Selected(tbc) => tbc,
            Planning::Stopped(outcome) => {
                report.iterations.push(record);
                report.outcome = outcome;
                return report;
            }
        };
        let bench = restricted
            .iter()
            .find(|b| b.id == selected.bench_id)
            .expect("selected configuration belongs to a suitable bench");

        let executed = executor.execute(test_case, &selected).and_then(|trace| {
            trace.check()?;
            let criteria = evaluate_criteria(&trace, &test_case.criteria)?;
            Ok((trace, criteria))
        });
        let (trace, criteria) = match executed {
            Ok(v) => v,
            Err(e) => {
                report.iterations.push(record);
                report.outcome = Outcome::AbortExecutionError { message: e.to_string() };
                return report;
            }
        };
        record.trace_summary = Some(trace.summary());
        record.criteria = Some(criteria.clone());

        let violations = verify_validity(&selected, bench, &trace);
        record.violations = Some(violations.clone());
        if violations.is_empty() {
            let verdict = if criteria.values().all(|r| r.passed) {
                TestVerdict::Passed
            } else {
                TestVerdict::CriteriaFailed
            };
            report.iterations.push(record);
            report.outcome = Outcome::Success {
                tbc_id: selected.id,
                verdict,
                results: criteria,
            };
            return report;
        }

        let excursions: Vec<Excursion> = violations.iter().map(Excursion::from).collect();
        let adapted = adapt_required_domains(&required, &excursions, options.margin);
        record.adapted_required_validity = Some(adapted.clone());
        report.iterations.push(record);
        if adapted == required {
            report.outcome = Outcome::AbortNoProgress;
            return report;
        }
        required = adapted;
    }
    report.outcome = Outcome::AbortIterationCap;
    report
}
