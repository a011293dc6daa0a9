//! Classification vocabulary for test benches: dimensions, stages, elements,
//! benches, configurations, test-object requirements and test cases.
//!
//! Every type here is a plain immutable value once built. Structural checks
//! are reported as [`ValidationReport`] findings rather than errors so that a
//! catalog can be linted in one pass.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The ten canonical functionalities a test bench has to provide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionId {
    Scenery,
    MovableObjects,
    EnvironmentalConditions,
    V2xCommunication,
    TestObject,
    EnvironmentPerceptionSensors,
    LocalizationSensors,
    VehicleDynamics,
    DriverUserBehavior,
    ResidualVehicle,
}

impl DimensionId {
    /// Canonical order, also used for radar spokes.
    pub const ALL: [DimensionId; 10] = [
        DimensionId::Scenery,
        DimensionId::MovableObjects,
        DimensionId::EnvironmentalConditions,
        DimensionId::V2xCommunication,
        DimensionId::TestObject,
        DimensionId::EnvironmentPerceptionSensors,
        DimensionId::LocalizationSensors,
        DimensionId::VehicleDynamics,
        DimensionId::DriverUserBehavior,
        DimensionId::ResidualVehicle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DimensionId::Scenery => "scenery",
            DimensionId::MovableObjects => "movable_objects",
            DimensionId::EnvironmentalConditions => "environmental_conditions",
            DimensionId::V2xCommunication => "v2x_communication",
            DimensionId::TestObject => "test_object",
            DimensionId::EnvironmentPerceptionSensors => "environment_perception_sensors",
            DimensionId::LocalizationSensors => "localization_sensors",
            DimensionId::VehicleDynamics => "vehicle_dynamics",
            DimensionId::DriverUserBehavior => "driver_user_behavior",
            DimensionId::ResidualVehicle => "residual_vehicle",
        }
    }
}

impl fmt::Display for DimensionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DimensionId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DimensionId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| ModelError::UnknownDimension(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown dimension `{0}`; only the ten canonical dimensions are accepted")]
    UnknownDimension(String),
    #[error("invalid refinement `{0}`: refinements are one level deep and use [a-z0-9_]")]
    InvalidRefinement(String),
}

/// A canonical dimension, optionally refined one level (`environment_perception_sensors/radar`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Dimension {
    pub id: DimensionId,
    pub refinement: Option<String>,
}

impl Dimension {
    pub fn canonical(id: DimensionId) -> Self {
        Dimension { id, refinement: None }
    }

    pub fn refined(id: DimensionId, refinement: &str) -> Result<Self, ModelError> {
        if !is_identifier(refinement) {
            return Err(ModelError::InvalidRefinement(refinement.to_string()));
        }
        Ok(Dimension {
            id,
            refinement: Some(refinement.to_string()),
        })
    }

    pub fn is_refined(&self) -> bool {
        self.refinement.is_some()
    }

    /// True if `self` equals `other` or is the unrefined parent of `other`.
    pub fn covers(&self, other: &Dimension) -> bool {
        self.id == other.id && (self.refinement.is_none() || self.refinement == other.refinement)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.refinement {
            Some(r) => write!(f, "{}/{}", self.id, r),
            None => write!(f, "{}", self.id),
        }
    }
}

impl FromStr for Dimension {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('/') {
            None => Ok(Dimension::canonical(s.parse()?)),
            Some((parent, leaf)) => Dimension::refined(parent.parse()?, leaf),
        }
    }
}

impl TryFrom<String> for Dimension {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Dimension> for String {
    fn from(value: Dimension) -> Self {
        value.to_string()
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Nominal stage of an element. There is deliberately no `Ord`: the integer is
/// only a chart coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulated,
    Emulated,
    Real,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Simulated, Stage::Emulated, Stage::Real];

    pub fn plot_coordinate(self) -> u8 {
        match self {
            Stage::Simulated => 1,
            Stage::Emulated => 2,
            Stage::Real => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Simulated => "simulated",
            Stage::Emulated => "emulated",
            Stage::Real => "real",
        }
    }

    fn bit(self) -> u8 {
        match self {
            Stage::Simulated => 0b001,
            Stage::Emulated => 0b010,
            Stage::Real => 0b100,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Subset of the three stages. Serialized as a list in `Stage::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Stage>", into = "Vec<Stage>")]
pub struct StageSet(u8);

impl StageSet {
    pub fn all() -> Self {
        Stage::ALL.into_iter().collect()
    }

    pub fn empty() -> Self {
        StageSet(0)
    }

    pub fn only(stage: Stage) -> Self {
        StageSet(stage.bit())
    }

    pub fn contains(self, stage: Stage) -> bool {
        self.0 & stage.bit() != 0
    }

    pub fn insert(&mut self, stage: Stage) {
        self.0 |= stage.bit();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_all(self) -> bool {
        self == StageSet::all()
    }

    pub fn iter(self) -> impl Iterator<Item = Stage> {
        Stage::ALL.into_iter().filter(move |s| self.contains(*s))
    }
}

impl FromIterator<Stage> for StageSet {
    fn from_iter<I: IntoIterator<Item = Stage>>(iter: I) -> Self {
        let mut set = StageSet::empty();
        for s in iter {
            set.insert(s);
        }
        set
    }
}

impl From<Vec<Stage>> for StageSet {
    fn from(value: Vec<Stage>) -> Self {
        value.into_iter().collect()
    }
}

impl From<StageSet> for Vec<Stage> {
    fn from(value: StageSet) -> Self {
        value.iter().collect()
    }
}

/// Units accepted in catalogs and traces. No conversion between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "m/s²")]
    MetersPerSecondSquared,
    #[serde(rename = "m")]
    Meters,
    #[serde(rename = "s")]
    Seconds,
    #[serde(rename = "km/h")]
    KilometersPerHour,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::MetersPerSecondSquared => "m/s²",
            Unit::Meters => "m",
            Unit::Seconds => "s",
            Unit::KilometersPerHour => "km/h",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Closed real interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn symmetric(half_width: f64) -> Self {
        Interval::new(-half_width, half_width)
    }

    pub fn is_well_formed(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    /// `other ⊆ self`
    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval::new(lo, hi))
    }

    pub fn magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Smallest interval holding every sample; `None` for an empty slice.
    pub fn hull(samples: &[f64]) -> Option<Interval> {
        let (first, rest) = samples.split_first()?;
        let mut iv = Interval::new(*first, *first);
        for &x in rest {
            iv.lo = iv.lo.min(x);
            iv.hi = iv.hi.max(x);
        }
        Some(iv)
    }
}

impl From<[f64; 2]> for Interval {
    fn from(value: [f64; 2]) -> Self {
        Interval::new(value[0], value[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(value: Interval) -> Self {
        [value.lo, value.hi]
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidityDomain {
    pub quantity: String,
    pub unit: Unit,
    pub interval: Interval,
}

impl ValidityDomain {
    pub fn new(quantity: &str, unit: Unit, interval: Interval) -> Self {
        ValidityDomain {
            quantity: quantity.to_string(),
            unit,
            interval,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortDirection {
    Provides,
    Requires,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Port {
    pub name: String,
    pub protocol: String,
    pub direction: PortDirection,
}

impl Port {
    pub fn new(name: &str, protocol: &str, direction: PortDirection) -> Self {
        Port {
            name: name.to_string(),
            protocol: protocol.to_string(),
            direction,
        }
    }

    /// Same interface (name and protocol), regardless of direction.
    pub fn mates_with(&self, other: &Port) -> bool {
        self.name == other.name && self.protocol == other.protocol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Element {
    pub id: String,
    pub dimension: Dimension,
    pub stage: Stage,
    #[serde(default)]
    pub validity: Vec<ValidityDomain>,
    #[serde(default)]
    pub expert_asserted_valid: bool,
    #[serde(default)]
    pub ports: Vec<Port>,
    #[serde(default)]
    pub criterion_costs: BTreeMap<String, f64>,
}

impl Element {
    pub fn new(id: &str, dimension: Dimension, stage: Stage) -> Self {
        Element {
            id: id.to_string(),
            dimension,
            stage,
            validity: Vec::new(),
            expert_asserted_valid: false,
            ports: Vec::new(),
            criterion_costs: BTreeMap::new(),
        }
    }

    pub fn with_validity(mut self, domain: ValidityDomain) -> Self {
        self.validity.push(domain);
        self
    }

    pub fn with_port(mut self, port: Port) -> Self {
        self.ports.push(port);
        self
    }

    pub fn with_cost(mut self, criterion: &str, cost: f64) -> Self {
        self.criterion_costs.insert(criterion.to_string(), cost);
        self
    }

    pub fn expert_asserted(mut self) -> Self {
        self.expert_asserted_valid = true;
        self
    }

    pub fn domain(&self, quantity: &str) -> Option<&ValidityDomain> {
        self.validity.iter().find(|d| d.quantity == quantity)
    }

    pub fn provides(&self, port: &Port) -> bool {
        self.ports
            .iter()
            .any(|p| p.direction == PortDirection::Provides && p.mates_with(port))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingEffect {
    Invalidates,
    ShrinksDomain {
        quantity: String,
        interval: Interval,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum CouplingRule {
    /// No element of `stage_a` in `dimension_a` may be combined with one of
    /// `stage_b` in `dimension_b`. A parent dimension matches all its refinements.
    ForbiddenStagePair {
        dimension_a: Dimension,
        stage_a: Stage,
        dimension_b: Dimension,
        stage_b: Stage,
    },
    CouplingEffect {
        element_a: String,
        element_b: String,
        effect: CouplingEffect,
    },
}

impl CouplingRule {
    /// True if the rule forbids or invalidates the given set of elements outright.
    /// Domain shrinking is not a violation by itself.
    pub fn violated_by(&self, selected: &[&Element]) -> bool {
        match self {
            CouplingRule::ForbiddenStagePair {
                dimension_a,
                stage_a,
                dimension_b,
                stage_b,
            } => {
                let hit = |d: &Dimension, s: Stage| {
                    selected
                        .iter()
                        .any(|e| e.stage == s && d.covers(&e.dimension))
                };
                hit(dimension_a, *stage_a) && hit(dimension_b, *stage_b)
            }
            CouplingRule::CouplingEffect {
                element_a,
                element_b,
                effect: CouplingEffect::Invalidates,
            } => {
                selected.iter().any(|e| &e.id == element_a)
                    && selected.iter().any(|e| &e.id == element_b)
            }
            CouplingRule::CouplingEffect { .. } => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestBenchConfiguration {
    pub id: String,
    pub bench_id: String,
    pub selection: BTreeMap<Dimension, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_override: Option<f64>,
}

impl TestBenchConfiguration {
    /// Deterministic id: bench id followed by the sorted element ids.
    pub fn derived_id(bench_id: &str, selection: &BTreeMap<Dimension, String>) -> String {
        let mut ids: Vec<&str> = selection.values().map(String::as_str).collect();
        ids.sort_unstable();
        format!("{}:{}", bench_id, ids.join("+"))
    }

    pub fn element_ids(&self) -> impl Iterator<Item = &str> {
        self.selection.values().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestBench {
    pub id: String,
    pub elements: Vec<Element>,
    #[serde(default)]
    pub coupling_rules: Vec<CouplingRule>,
    /// Canonical dimensions the bench explicitly does not provide.
    #[serde(default)]
    pub uncovered: BTreeSet<DimensionId>,
    /// Configurations with an established name and, optionally, an expert cost.
    #[serde(default)]
    pub configurations: Vec<TestBenchConfiguration>,
}

impl TestBench {
    pub fn new(id: &str) -> Self {
        TestBench {
            id: id.to_string(),
            elements: Vec::new(),
            coupling_rules: Vec::new(),
            uncovered: BTreeSet::new(),
            configurations: Vec::new(),
        }
    }

    pub fn with_element(mut self, element: Element) -> Self {
        self.elements.push(element);
        self
    }

    pub fn with_rule(mut self, rule: CouplingRule) -> Self {
        self.coupling_rules.push(rule);
        self
    }

    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    /// Leaf dimensions in canonical order, refinements sorted under their parent.
    /// A canonical dimension with refined elements contributes its refinements
    /// instead of itself.
    pub fn leaf_dimensions(&self) -> Vec<Dimension> {
        let leaves: BTreeSet<Dimension> = self
            .elements
            .iter()
            .map(|e| e.dimension.clone())
            .collect();
        let refined_parents: HashSet<DimensionId> = leaves
            .iter()
            .filter(|d| d.is_refined())
            .map(|d| d.id)
            .collect();
        leaves
            .into_iter()
            .filter(|d| d.is_refined() || !refined_parents.contains(&d.id))
            .collect()
    }

    pub fn elements_at<'a>(&'a self, leaf: &'a Dimension) -> impl Iterator<Item = &'a Element> + 'a {
        self.elements.iter().filter(move |e| &e.dimension == leaf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestObjectRequirements {
    #[serde(default = "all_stages_everywhere", deserialize_with = "fill_allowed_stages")]
    pub allowed_stages: BTreeMap<DimensionId, StageSet>,
    #[serde(default)]
    pub required_ports: Vec<Port>,
}

fn all_stages_everywhere() -> BTreeMap<DimensionId, StageSet> {
    DimensionId::ALL
        .into_iter()
        .map(|d| (d, StageSet::all()))
        .collect()
}

fn fill_allowed_stages<'de, D>(de: D) -> Result<BTreeMap<DimensionId, StageSet>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let given = BTreeMap::<DimensionId, StageSet>::deserialize(de)?;
    let mut all = all_stages_everywhere();
    all.extend(given);
    Ok(all)
}

impl Default for TestObjectRequirements {
    fn default() -> Self {
        TestObjectRequirements {
            allowed_stages: all_stages_everywhere(),
            required_ports: Vec::new(),
        }
    }
}

impl TestObjectRequirements {
    pub fn allow_only(mut self, dimension: DimensionId, stages: StageSet) -> Self {
        self.allowed_stages.insert(dimension, stages);
        self
    }

    pub fn allowed(&self, dimension: DimensionId) -> StageSet {
        self.allowed_stages
            .get(&dimension)
            .copied()
            .unwrap_or_else(StageSet::all)
    }
}

/// Six-layer scenario model labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    L1,
    L2,
    L3,
    L4,
    L5,
    L6,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParameter {
    pub value: f64,
    pub unit: Unit,
    pub layer: Layer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Gt,
    Ge,
    Lt,
    Le,
}

impl Comparison {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparison::Gt => lhs > rhs,
            Comparison::Ge => lhs >= rhs,
            Comparison::Lt => lhs < rhs,
            Comparison::Le => lhs <= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
            Comparison::Lt => "<",
            Comparison::Le => "<=",
        }
    }
}

/// Threshold predicate over an aggregate of one trace quantity,
/// e.g. `min(distance_to_nearest_object) > 0 m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationCriterion {
    pub id: String,
    pub quantity: String,
    pub aggregate: Aggregate,
    pub comparison: Comparison,
    pub threshold: f64,
    pub unit: Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub id: String,
    #[serde(default)]
    pub scenario: BTreeMap<String, ScenarioParameter>,
    pub criteria: Vec<EvaluationCriterion>,
    #[serde(default)]
    pub required_validity: RequiredValidity,
}

impl TestCase {
    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.scenario.get(name).map(|p| p.value)
    }
}

/// Required validity domains per dimension. A parent-dimension entry applies
/// to all of its refinements.
pub type RequiredValidity = BTreeMap<Dimension, Vec<ValidityDomain>>;

/// Required domains that apply to an element living at `leaf`.
pub fn requirements_for<'a>(
    required: &'a RequiredValidity,
    leaf: &'a Dimension,
) -> impl Iterator<Item = &'a ValidityDomain> + 'a {
    required
        .iter()
        .filter(move |(d, _)| d.covers(leaf))
        .flat_map(|(_, v)| v.iter())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FindingCode {
    EmptyId,
    DuplicateElementId,
    DuplicateValidityQuantity,
    InvalidInterval,
    DuplicatePort,
    InvalidCost,
    UncoveredDimension,
    CoveredAndUncovered,
    MixedRefinement,
    DanglingRuleRef,
    DuplicateConfigurationId,
    InvalidNamedConfiguration,
    UnknownBench,
    UnknownElement,
    MissingDimension,
    ExtraDimension,
    DimensionMismatch,
    UnresolvedPort,
    CouplingViolation,
    InvalidCostOverride,
    InvalidWeights,
    DuplicateBenchId,
    DuplicateTestCaseId,
    NoEvaluationCriterion,
    EmptyAllowedStages,
}

impl FindingCode {
    pub fn as_str(self) -> &'static str {
        match self {
            FindingCode::EmptyId => "EMPTY_ID",
            FindingCode::DuplicateElementId => "DUPLICATE_ELEMENT_ID",
            FindingCode::DuplicateValidityQuantity => "DUPLICATE_VALIDITY_QUANTITY",
            FindingCode::InvalidInterval => "INVALID_INTERVAL",
            FindingCode::DuplicatePort => "DUPLICATE_PORT",
            FindingCode::InvalidCost => "INVALID_COST",
            FindingCode::UncoveredDimension => "UNCOVERED_DIMENSION",
            FindingCode::CoveredAndUncovered => "COVERED_AND_UNCOVERED",
            FindingCode::MixedRefinement => "MIXED_REFINEMENT",
            FindingCode::DanglingRuleRef => "DANGLING_RULE_REF",
            FindingCode::DuplicateConfigurationId => "DUPLICATE_CONFIGURATION_ID",
            FindingCode::InvalidNamedConfiguration => "INVALID_NAMED_CONFIGURATION",
            FindingCode::UnknownBench => "UNKNOWN_BENCH",
            FindingCode::UnknownElement => "UNKNOWN_ELEMENT",
            FindingCode::MissingDimension => "MISSING_DIMENSION",
            FindingCode::ExtraDimension => "EXTRA_DIMENSION",
            FindingCode::DimensionMismatch => "DIMENSION_MISMATCH",
            FindingCode::UnresolvedPort => "UNRESOLVED_PORT",
            FindingCode::CouplingViolation => "COUPLING_VIOLATION",
            FindingCode::InvalidCostOverride => "INVALID_COST_OVERRIDE",
            FindingCode::InvalidWeights => "INVALID_WEIGHTS",
            FindingCode::DuplicateBenchId => "DUPLICATE_BENCH_ID",
            FindingCode::DuplicateTestCaseId => "DUPLICATE_TEST_CASE_ID",
            FindingCode::NoEvaluationCriterion => "NO_EVALUATION_CRITERION",
            FindingCode::EmptyAllowedStages => "EMPTY_ALLOWED_STAGES",
        }
    }
}

impl fmt::Display for FindingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub code: FindingCode,
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has(&self, code: FindingCode) -> bool {
        self.findings.iter().any(|f| f.code == code)
    }

    pub fn codes(&self) -> Vec<FindingCode> {
        self.findings.iter().map(|f| f.code).collect()
    }

    pub(crate) fn push(&mut self, code: FindingCode, subject: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            code,
            subject: subject.into(),
            message: message.into(),
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.findings.extend(other.findings);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(f, "{} {}: {}", finding.code, finding.subject, finding.message)?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of a bench. Empty findings means valid.
pub fn validate_test_bench(bench: &TestBench) -> ValidationReport {
    let mut report = ValidationReport::default();
    if bench.id.is_empty() {
        report.push(FindingCode::EmptyId, "bench", "bench id is empty");
    }

    let mut seen = HashSet::new();
    for element in &bench.elements {
        if element.id.is_empty() {
            report.push(FindingCode::EmptyId, &bench.id, "element id is empty");
        }
        if !seen.insert(element.id.as_str()) {
            report.push(
                FindingCode::DuplicateElementId,
                &element.id,
                format!("element id `{}` appears more than once", element.id),
            );
        }
        check_element(element, &mut report);
        if bench.uncovered.contains(&element.dimension.id) {
            report.push(
                FindingCode::CoveredAndUncovered,
                &element.id,
                format!("dimension {} is declared uncovered but has elements", element.dimension.id),
            );
        }
    }

    for dim in DimensionId::ALL {
        let covered = bench.elements.iter().any(|e| e.dimension.id == dim);
        if !covered && !bench.uncovered.contains(&dim) {
            report.push(
                FindingCode::UncoveredDimension,
                dim.as_str(),
                format!("no element covers {dim} and it is not declared uncovered"),
            );
        }
        let at_parent = bench
            .elements
            .iter()
            .any(|e| e.dimension.id == dim && !e.dimension.is_refined());
        let refined = bench
            .elements
            .iter()
            .any(|e| e.dimension.id == dim && e.dimension.is_refined());
        if at_parent && refined {
            report.push(
                FindingCode::MixedRefinement,
                dim.as_str(),
                format!("{dim} has elements at both the parent and refined dimensions"),
            );
        }
    }

    for (i, rule) in bench.coupling_rules.iter().enumerate() {
        let subject = format!("{}#rule{}", bench.id, i);
        match rule {
            CouplingRule::ForbiddenStagePair {
                dimension_a,
                dimension_b,
                ..
            } => {
                for d in [dimension_a, dimension_b] {
                    if !bench.elements.iter().any(|e| d.covers(&e.dimension)) {
                        report.push(
                            FindingCode::DanglingRuleRef,
                            &subject,
                            format!("rule references dimension {d} which has no element"),
                        );
                    }
                }
            }
            CouplingRule::CouplingEffect {
                element_a,
                element_b,
                effect,
            } => {
                for id in [element_a, element_b] {
                    if bench.element(id).is_none() {
                        report.push(
                            FindingCode::DanglingRuleRef,
                            &subject,
                            format!("rule references unknown element `{id}`"),
                        );
                    }
                }
                if let CouplingEffect::ShrinksDomain { interval, .. } = effect {
                    if !interval.is_well_formed() {
                        report.push(
                            FindingCode::InvalidInterval,
                            &subject,
                            format!("shrunk domain {interval} is not a closed interval"),
                        );
                    }
                }
            }
        }
    }

    // Named configurations are only checked once the bench itself is sound.
    if report.is_ok() {
        let mut ids = HashSet::new();
        for tbc in &bench.configurations {
            if !ids.insert(tbc.id.as_str()) {
                report.push(
                    FindingCode::DuplicateConfigurationId,
                    &tbc.id,
                    "configuration id appears more than once",
                );
            }
            match validate_configuration(tbc, bench) {
                Ok(r) if r.is_ok() => {}
                Ok(r) => {
                    for f in r.findings {
                        report.push(
                            FindingCode::InvalidNamedConfiguration,
                            &tbc.id,
                            format!("{}: {}", f.code, f.message),
                        );
                    }
                }
                Err(e) => report.push(FindingCode::InvalidNamedConfiguration, &tbc.id, e.to_string()),
            }
        }
    }
    report
}

fn check_element(element: &Element, report: &mut ValidationReport) {
    let mut quantities = HashSet::new();
    for domain in &element.validity {
        if !quantities.insert(domain.quantity.as_str()) {
            report.push(
                FindingCode::DuplicateValidityQuantity,
                &element.id,
                format!("more than one validity domain for `{}`", domain.quantity),
            );
        }
        if !domain.interval.is_well_formed() {
            report.push(
                FindingCode::InvalidInterval,
                &element.id,
                format!("`{}` domain {} is not a closed interval", domain.quantity, domain.interval),
            );
        }
    }
    let mut ports = HashSet::new();
    for port in &element.ports {
        if !ports.insert((port.name.as_str(), port.direction)) {
            report.push(
                FindingCode::DuplicatePort,
                &element.id,
                format!("port `{}` declared twice in the same direction", port.name),
            );
        }
    }
    for (criterion, cost) in &element.criterion_costs {
        if !(cost.is_finite() && *cost >= 0.0) {
            report.push(
                FindingCode::InvalidCost,
                &element.id,
                format!("cost for `{criterion}` must be finite and non-negative, got {cost}"),
            );
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigurationError {
    #[error("UNKNOWN_BENCH: configuration `{tbc}` names bench `{named}`, checked against `{actual}`")]
    UnknownBench {
        tbc: String,
        named: String,
        actual: String,
    },
}

/// Checks a configuration against its bench: one element per leaf dimension,
/// every required port resolved, no coupling rule violated.
pub fn validate_configuration(
    tbc: &TestBenchConfiguration,
    bench: &TestBench,
) -> Result<ValidationReport, ConfigurationError> {
    if tbc.bench_id != bench.id {
        return Err(ConfigurationError::UnknownBench {
            tbc: tbc.id.clone(),
            named: tbc.bench_id.clone(),
            actual: bench.id.clone(),
        });
    }
    let mut report = ValidationReport::default();
    if let Some(k) = tbc.cost_override {
        if !(k.is_finite() && k >= 0.0) {
            report.push(
                FindingCode::InvalidCostOverride,
                &tbc.id,
                format!("cost override must be finite and non-negative, got {k}"),
            );
        }
    }

    let leaves = bench.leaf_dimensions();
    for leaf in &leaves {
        if !tbc.selection.contains_key(leaf) {
            report.push(
                FindingCode::MissingDimension,
                &tbc.id,
                format!("no element selected for {leaf}"),
            );
        }
    }

    let mut selected = Vec::new();
    for (dim, element_id) in &tbc.selection {
        if !leaves.contains(dim) {
            report.push(
                FindingCode::ExtraDimension,
                &tbc.id,
                format!("{dim} is not a leaf dimension of bench {}", bench.id),
            );
        }
        match bench.element(element_id) {
            None => report.push(
                FindingCode::UnknownElement,
                &tbc.id,
                format!("element `{element_id}` does not belong to bench {}", bench.id),
            ),
            Some(e) if &e.dimension != dim => report.push(
                FindingCode::DimensionMismatch,
                &tbc.id,
                format!("element `{element_id}` lives at {}, selected for {dim}", e.dimension),
            ),
            Some(e) => selected.push(e),
        }
    }

    for missing in unresolved_ports(&selected) {
        report.push(FindingCode::UnresolvedPort, &tbc.id, missing);
    }
    for (i, rule) in bench.coupling_rules.iter().enumerate() {
        if rule.violated_by(&selected) {
            report.push(
                FindingCode::CouplingViolation,
                &tbc.id,
                format!("selection violates coupling rule #{i} of bench {}", bench.id),
            );
        }
    }
    Ok(report)
}

/// Required ports in `selected` that no other selected element provides.
pub(crate) fn unresolved_ports(selected: &[&Element]) -> Vec<String> {
    let mut missing = Vec::new();
    for (i, element) in selected.iter().enumerate() {
        for port in element
            .ports
            .iter()
            .filter(|p| p.direction == PortDirection::Requires)
        {
            let resolved = selected
                .iter()
                .enumerate()
                .any(|(j, other)| j != i && other.provides(port));
            if !resolved {
                missing.push(format!(
                    "element `{}` requires port `{}` ({}) which no selected element provides",
                    element.id, port.name, port.protocol
                ));
            }
        }
    }
    missing
}

/// Structural checks on a test case.
pub fn validate_test_case(test_case: &TestCase) -> ValidationReport {
    let mut report = ValidationReport::default();
    if test_case.id.is_empty() {
        report.push(FindingCode::EmptyId, "test_case", "test case id is empty");
    }
    if test_case.criteria.is_empty() {
        report.push(
            FindingCode::NoEvaluationCriterion,
            &test_case.id,
            "a test case needs at least one evaluation criterion",
        );
    }
    for (dim, domains) in &test_case.required_validity {
        let mut quantities = HashSet::new();
        for d in domains {
            if !quantities.insert(d.quantity.as_str()) {
                report.push(
                    FindingCode::DuplicateValidityQuantity,
                    &test_case.id,
                    format!("{dim} requires `{}` more than once", d.quantity),
                );
            }
            if !d.interval.is_well_formed() {
                report.push(
                    FindingCode::InvalidInterval,
                    &test_case.id,
                    format!("{dim} requirement `{}` {} is not a closed interval", d.quantity, d.interval),
                );
            }
        }
    }
    report
}

pub fn validate_requirements(reqs: &TestObjectRequirements) -> ValidationReport {
    let mut report = ValidationReport::default();
    for dim in DimensionId::ALL {
        if reqs.allowed(dim).is_empty() {
            report.push(
                FindingCode::EmptyAllowedStages,
                dim.as_str(),
                format!("no stage is allowed for {dim}"),
            );
        }
    }
    report
}
