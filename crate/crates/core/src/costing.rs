//! Weighted cost values for elements and configurations, argmin selection of
//! the cheapest configuration, and the per-stage evaluation function used by
//! earlier X-in-the-loop assignment methods (kept as a numerical comparator).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Element, TestBench, TestBenchConfiguration};

/// Tolerance on `Σ a_c = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("INVALID_WEIGHTS: {0}")]
    InvalidWeights(String),
    #[error("MISSING_CRITERION_COST: element `{element}` has no cost for criterion `{criterion}`")]
    MissingCriterionCost { criterion: String, element: String },
    #[error("INVALID_COST: element `{element}` has cost {value} for `{criterion}`")]
    InvalidCost {
        criterion: String,
        element: String,
        value: f64,
    },
    #[error("UNKNOWN_ELEMENT: configuration `{tbc}` selects `{element}` which is not at bench `{bench}`")]
    UnknownElement {
        tbc: String,
        element: String,
        bench: String,
    },
    #[error("EMPTY_SET: no sufficiently valid configuration to select from")]
    EmptySet,
    #[error("INDEX_OUT_OF_RANGE: {0}")]
    IndexOutOfRange(String),
}

impl CostError {
    pub fn code(&self) -> &'static str {
        match self {
            CostError::InvalidWeights(_) => "INVALID_WEIGHTS",
            CostError::MissingCriterionCost { .. } => "MISSING_CRITERION_COST",
            CostError::InvalidCost { .. } => "INVALID_COST",
            CostError::UnknownElement { .. } => "UNKNOWN_ELEMENT",
            CostError::EmptySet => "EMPTY_SET",
            CostError::IndexOutOfRange(_) => "INDEX_OUT_OF_RANGE",
        }
    }
}

fn check_weight_vector<'a>(weights: impl IntoIterator<Item = (&'a str, f64)>) -> Result<(), CostError> {
    let mut sum = 0.0;
    let mut any = false;
    for (name, a) in weights {
        any = true;
        if !a.is_finite() || !(0.0..=1.0).contains(&a) {
            return Err(CostError::InvalidWeights(format!(
                "weight for `{name}` must lie in [0, 1], got {a}"
            )));
        }
        sum += a;
    }
    if !any {
        return Err(CostError::InvalidWeights("no weights given".into()));
    }
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(CostError::InvalidWeights(format!(
            "weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Weighting parameters `a_c` per cost criterion. Always sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct WeightSet(BTreeMap<String, f64>);

impl WeightSet {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self, CostError> {
        check_weight_vector(weights.iter().map(|(k, v)| (k.as_str(), *v)))?;
        Ok(WeightSet(weights))
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self, CostError> {
        WeightSet::new(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    /// Equal weights over the given criteria.
    pub fn uniform<'a>(criteria: impl IntoIterator<Item = &'a str>) -> Result<Self, CostError> {
        let names: Vec<&str> = criteria.into_iter().collect();
        let a = 1.0 / names.len() as f64;
        WeightSet::from_pairs(names.into_iter().map(|n| (n, a)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn get(&self, criterion: &str) -> Option<f64> {
        self.0.get(criterion).copied()
    }
}

impl TryFrom<BTreeMap<String, f64>> for WeightSet {
    type Error = CostError;

    fn try_from(value: BTreeMap<String, f64>) -> Result<Self, Self::Error> {
        WeightSet::new(value)
    }
}

impl From<WeightSet> for BTreeMap<String, f64> {
    fn from(value: WeightSet) -> Self {
        value.0
    }
}

/// `K_TB,e = Σ_c a_c · K_TB,e,c`
pub fn element_cost(element: &Element, weights: &WeightSet) -> Result<f64, CostError> {
    weights.iter().try_fold(0.0, |acc, (criterion, a)| {
        let k = element
            .criterion_costs
            .get(criterion)
            .copied()
            .ok_or_else(|| CostError::MissingCriterionCost {
                criterion: criterion.to_string(),
                element: element.id.clone(),
            })?;
        if !(k.is_finite() && k >= 0.0) {
            return Err(CostError::InvalidCost {
                criterion: criterion.to_string(),
                element: element.id.clone(),
                value: k,
            });
        }
        Ok(acc + a * k)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostedConfiguration {
    pub tbc: TestBenchConfiguration,
    pub cost: f64,
    /// Per-element cost values; empty when the cost came from an expert override.
    pub breakdown: BTreeMap<String, f64>,
}

/// `K_TBC = Σ_e K_TB,e`, unless the configuration carries an expert cost
/// override, which then wins outright.
pub fn configuration_cost(
    tbc: &TestBenchConfiguration,
    bench: &TestBench,
    weights: &WeightSet,
) -> Result<CostedConfiguration, CostError> {
    if let Some(cost) = tbc.cost_override {
        return Ok(CostedConfiguration {
            tbc: tbc.clone(),
            cost,
            breakdown: BTreeMap::new(),
        });
    }
    let mut breakdown = BTreeMap::new();
    for id in tbc.element_ids() {
        let element = bench.element(id).ok_or_else(|| CostError::UnknownElement {
            tbc: tbc.id.clone(),
            element: id.to_string(),
            bench: bench.id.clone(),
        })?;
        breakdown.insert(id.to_string(), element_cost(element, weights)?);
    }
    Ok(CostedConfiguration {
        tbc: tbc.clone(),
        cost: breakdown.values().sum(),
        breakdown,
    })
}

/// Cheapest configuration; ties go to the lexicographically smallest id.
pub fn select_optimal(costed: &[CostedConfiguration]) -> Result<&TestBenchConfiguration, CostError> {
    costed
        .iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then_with(|| a.tbc.id.cmp(&b.tbc.id)))
        .map(|c| &c.tbc)
        .ok_or(CostError::EmptySet)
}

/// Cost table `k[i][j][n]` over stage `i ∈ 1..=3`, dimension `j ∈ 1..=J` and
/// criterion `n ∈ 1..=N`, with weights `a_n`. All indices are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCostMatrix {
    dimensions: usize,
    criteria: usize,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl StageCostMatrix {
    pub const STAGES: usize = 3;

    /// `values` is laid out stage-major: `values[((i-1)*J + (j-1))*N + (n-1)]`.
    pub fn new(dimensions: usize, criteria: usize, values: Vec<f64>, weights: Vec<f64>) -> Result<Self, CostError> {
        if dimensions == 0 || criteria == 0 {
            return Err(CostError::IndexOutOfRange("J and N must be at least 1".into()));
        }
        if values.len() != Self::STAGES * dimensions * criteria {
            return Err(CostError::IndexOutOfRange(format!(
                "expected {} cost values for 3×{}×{}, got {}",
                Self::STAGES * dimensions * criteria,
                dimensions,
                criteria,
                values.len()
            )));
        }
        if weights.len() != criteria {
            return Err(CostError::InvalidWeights(format!(
                "expected {} weights, got {}",
                criteria,
                weights.len()
            )));
        }
        if let Some(bad) = values.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
            return Err(CostError::InvalidWeights(format!(
                "cost values must be finite and non-negative, got {bad}"
            )));
        }
        let names: Vec<String> = (1..=criteria).map(|n| format!("a_{n}")).collect();
        check_weight_vector(names.iter().map(String::as_str).zip(weights.iter().copied()))?;
        Ok(StageCostMatrix {
            dimensions,
            criteria,
            values,
            weights,
        })
    }

    pub fn dimensions(&self) -> usize {
        self.dimensions
    }

    pub fn criteria(&self) -> usize {
        self.criteria
    }

    pub fn weight(&self, n: usize) -> Option<f64> {
        (1..=self.criteria).contains(&n).then(|| self.weights[n - 1])
    }

    pub fn k(&self, stage: usize, dimension: usize, criterion: usize) -> Option<f64> {
        let in_range = (1..=Self::STAGES).contains(&stage)
            && (1..=self.dimensions).contains(&dimension)
            && (1..=self.criteria).contains(&criterion);
        in_range.then(|| {
            self.values[((stage - 1) * self.dimensions + (dimension - 1)) * self.criteria + (criterion - 1)]
        })
    }
}

/// `G = Σ_{n=1..N} a_n · Σ_{j=1..J} k[stage(j)][j][n]`
pub fn overall_stage_cost(
    matrix: &StageCostMatrix,
    stage_choice: &BTreeMap<usize, usize>,
) -> Result<f64, CostError> {
    let mut stages = Vec::with_capacity(matrix.dimensions);
    for j in 1..=matrix.dimensions {
        let i = *stage_choice
            .get(&j)
            .ok_or_else(|| CostError::IndexOutOfRange(format!("no stage chosen for dimension {j}")))?;
        if !(1..=StageCostMatrix::STAGES).contains(&i) {
            return Err(CostError::IndexOutOfRange(format!(
                "stage index {i} for dimension {j} is outside 1..=3"
            )));
        }
        stages.push(i);
    }
    if let Some(j) = stage_choice.keys().find(|j| !(1..=matrix.dimensions).contains(*j)) {
        return Err(CostError::IndexOutOfRange(format!(
            "dimension index {j} is outside 1..={}",
            matrix.dimensions
        )));
    }
    let g = (1..=matrix.criteria)
        .map(|n| {
            let a = matrix.weights[n - 1];
            let inner: f64 = stages
                .iter()
                .enumerate()
                .map(|(j0, &i)| matrix.values[((i - 1) * matrix.dimensions + j0) * matrix.criteria + (n - 1)])
                .sum();
            a * inner
        })
        .sum();
    Ok(g)
}
