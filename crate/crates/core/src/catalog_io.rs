//! Catalog, trace and report documents.
//!
//! All three are JSON with a `schema_version` of [`SCHEMA_VERSION`]. Emission
//! is canonical: keys sorted, two-space indentation, LF line endings, one
//! trailing newline. Reports are additionally quantized to a 1e-12 grid so
//! that runs differing only in the last few bits emit identical bytes.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::assignment::{AssignmentOptions, AssignmentReport, IterationRecord, Outcome, TestVerdict};
use crate::costing::{CostError, CostedConfiguration, WeightSet};
use crate::execution::{CutInExecutor, ExecutionTrace, Series};
use crate::model::{
    validate_requirements, validate_test_bench, validate_test_case, FindingCode, RequiredValidity, TestBench,
    TestCase, TestObjectRequirements, ValidationReport,
};

pub const SCHEMA_VERSION: &str = "tbc/1";

/// Reports are snapped to multiples of 1 / STEPS_PER_UNIT.
const STEPS_PER_UNIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported schema version `{0}`, expected `{SCHEMA_VERSION}`")]
    SchemaVersionUnsupported(String),
    #[error("{0}")]
    InvalidWeights(String),
    #[error("catalog failed validation\n{0}")]
    Invalid(ValidationReport),
    #[error("{0}")]
    MalformedTrace(String),
}

impl CatalogError {
    pub fn code(&self) -> &'static str {
        match self {
            CatalogError::Parse { .. } => "PARSE_ERROR",
            CatalogError::SchemaVersionUnsupported(_) => "SCHEMA_VERSION_UNSUPPORTED",
            CatalogError::InvalidWeights(_) => "INVALID_WEIGHTS",
            CatalogError::Invalid(_) => "VALIDATION_FAILED",
            CatalogError::MalformedTrace(_) => "MALFORMED_TRACE",
        }
    }
}

impl From<serde_json::Error> for CatalogError {
    fn from(e: serde_json::Error) -> Self {
        CatalogError::Parse {
            line: e.line(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopOptions {
    #[serde(default)]
    pub margin: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_max_iterations() -> usize {
    crate::assignment::DEFAULT_MAX_ITERATIONS
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions {
            margin: 0.0,
            max_iterations: default_max_iterations(),
        }
    }
}

/// Everything a catalog document declares, after validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub benches: Vec<TestBench>,
    pub test_cases: Vec<TestCase>,
    pub requirements: TestObjectRequirements,
    pub weights: Option<WeightSet>,
    pub options: LoopOptions,
    pub executor: Option<CutInExecutor>,
}

impl Catalog {
    pub fn bench(&self, id: &str) -> Option<&TestBench> {
        self.benches.iter().find(|b| b.id == id)
    }

    pub fn test_case(&self, id: &str) -> Option<&TestCase> {
        self.test_cases.iter().find(|t| t.id == id)
    }

    /// Loop options, if the catalog declares weights.
    pub fn assignment_options(&self) -> Option<AssignmentOptions> {
        self.weights.clone().map(|weights| AssignmentOptions {
            weights,
            margin: self.options.margin,
            max_iterations: self.options.max_iterations,
        })
    }

    /// Catalog-level checks on top of the per-object validators.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut bench_ids = HashSet::new();
        for bench in &self.benches {
            if !bench_ids.insert(bench.id.as_str()) {
                report.push(
                    FindingCode::DuplicateBenchId,
                    &bench.id,
                    format!("bench id `{}` appears more than once", bench.id),
                );
            }
            report.extend(validate_test_bench(bench));
        }
        let mut case_ids = HashSet::new();
        for test_case in &self.test_cases {
            if !case_ids.insert(test_case.id.as_str()) {
                report.push(
                    FindingCode::DuplicateTestCaseId,
                    &test_case.id,
                    format!("test case id `{}` appears more than once", test_case.id),
                );
            }
            report.extend(validate_test_case(test_case));
        }
        report.extend(validate_requirements(&self.requirements));
        report
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogDocument {
    schema_version: String,
    benches: Vec<TestBench>,
    #[serde(default)]
    test_cases: Vec<TestCase>,
    #[serde(default)]
    requirements: TestObjectRequirements,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    options: LoopOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    executor: Option<CutInExecutor>,
}

/// Rejects anything that is not JSON or not of our schema version before the
/// typed parse runs, so version errors are not reported as field errors.
fn check_schema_version(document: &str) -> Result<(), CatalogError> {
    let value: Value = serde_json::from_str(document)?;
    match value.get("schema_version").and_then(Value::as_str) {
        Some(SCHEMA_VERSION) => Ok(()),
        Some(other) => Err(CatalogError::SchemaVersionUnsupported(other.to_string())),
        None => Err(CatalogError::SchemaVersionUnsupported("<missing>".to_string())),
    }
}

pub fn parse_catalog(document: &str) -> Result<Catalog, CatalogError> {
    check_schema_version(document)?;
    let doc: CatalogDocument = serde_json::from_str(document)?;
    let weights = doc
        .weights
        .map(WeightSet::new)
        .transpose()
        .map_err(|e| match e {
            CostError::InvalidWeights(message) => CatalogError::InvalidWeights(message),
            other => CatalogError::InvalidWeights(other.to_string()),
        })?;
    let catalog = Catalog {
        benches: doc.benches,
        test_cases: doc.test_cases,
        requirements: doc.requirements,
        weights,
        options: doc.options,
        executor: doc.executor,
    };
    let report = catalog.validate();
    if report.is_ok() {
        Ok(catalog)
    } else {
        Err(CatalogError::Invalid(report))
    }
}

pub fn emit_catalog(catalog: &Catalog) -> String {
    let doc = CatalogDocument {
        schema_version: SCHEMA_VERSION.to_string(),
        benches: catalog.benches.clone(),
        test_cases: catalog.test_cases.clone(),
        requirements: catalog.requirements.clone(),
        weights: catalog.weights.clone().map(Into::into),
        options: catalog.options,
        executor: catalog.executor,
    };
    canonical(serde_json::to_value(doc).expect("catalog serializes"))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceDocument {
    schema_version: String,
    test_case_id: String,
    tbc_id: String,
    step: f64,
    series: BTreeMap<String, Series>,
}

pub fn parse_trace(document: &str) -> Result<ExecutionTrace, CatalogError> {
    check_schema_version(document)?;
    let doc: TraceDocument = serde_json::from_str(document)?;
    let trace = ExecutionTrace {
        test_case_id: doc.test_case_id,
        tbc_id: doc.tbc_id,
        step: doc.step,
        series: doc.series,
    };
    trace.check().map_err(|e| CatalogError::MalformedTrace(e.to_string()))?;
    Ok(trace)
}

pub fn emit_trace(trace: &ExecutionTrace) -> String {
    let doc = TraceDocument {
        schema_version: SCHEMA_VERSION.to_string(),
        test_case_id: trace.test_case_id.clone(),
        tbc_id: trace.tbc_id.clone(),
        step: trace.step,
        series: trace.series.clone(),
    };
    canonical(serde_json::to_value(doc).expect("trace serializes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Structured,
    HumanText,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportDocument {
    schema_version: String,
    test_case_id: String,
    iterations: Vec<IterationRecord>,
    outcome: Outcome,
}

impl ReportDocument {
    fn new(report: &AssignmentReport) -> Self {
        ReportDocument {
            schema_version: SCHEMA_VERSION.to_string(),
            test_case_id: report.test_case_id.clone(),
            iterations: report.iterations.clone(),
            outcome: report.outcome.clone(),
        }
    }

    fn into_report(self) -> AssignmentReport {
        AssignmentReport {
            test_case_id: self.test_case_id,
            iterations: self.iterations,
            outcome: self.outcome,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportSetDocument {
    schema_version: String,
    reports: Vec<ReportDocument>,
}

pub fn emit_report(report: &AssignmentReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Structured => {
            let mut value = serde_json::to_value(ReportDocument::new(report)).expect("report serializes");
            quantize(&mut value);
            canonical(value)
        }
        ReportFormat::HumanText => human_text(report),
    }
}

pub fn parse_report(document: &str) -> Result<AssignmentReport, CatalogError> {
    check_schema_version(document)?;
    let doc: ReportDocument = serde_json::from_str(document)?;
    Ok(doc.into_report())
}

/// Several reports in one document, in the given order.
pub fn emit_report_set(reports: &[AssignmentReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Structured => {
            let doc = ReportSetDocument {
                schema_version: SCHEMA_VERSION.to_string(),
                reports: reports.iter().map(ReportDocument::new).collect(),
            };
            let mut value = serde_json::to_value(doc).expect("report set serializes");
            quantize(&mut value);
            canonical(value)
        }
        ReportFormat::HumanText => reports.iter().map(human_text).collect::<Vec<_>>().join("\n"),
    }
}

pub fn parse_report_set(document: &str) -> Result<Vec<AssignmentReport>, CatalogError> {
    check_schema_version(document)?;
    let doc: ReportSetDocument = serde_json::from_str(document)?;
    Ok(doc.reports.into_iter().map(ReportDocument::into_report).collect())
}

fn canonical(value: Value) -> String {
    let mut text = serde_json::to_string_pretty(&value).expect("json value serializes");
    text.push('\n');
    text
}

/// Snaps a float to the 1e-12 grid. Values too large for the grid to matter
/// are left alone, which also keeps the snapping idempotent.
fn snap(x: f64) -> f64 {
    if !x.is_finite() || x.abs() >= 1e3 {
        return x;
    }
    let q = (x * STEPS_PER_UNIT).round() / STEPS_PER_UNIT;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

fn quantize(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().and_then(|x| serde_json::Number::from_f64(snap(x))) {
                *n = x;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(quantize),
        Value::Object(map) => map.values_mut().for_each(quantize),
        _ => {}
    }
}

fn required_lines(out: &mut String, required: &RequiredValidity) {
    if required.is_empty() {
        out.push_str("    (none)\n");
    }
    for (dimension, domains) in required {
        for d in domains {
            let _ = writeln!(out, "    {dimension} {} {} {}", d.quantity, d.interval, d.unit);
        }
    }
}

fn list(items: &[String]) -> String {
    if items.is_empty() {
        "(none)".to_string()
    } else {
        items.join(", ")
    }
}

/// Table of costed configurations, cheapest first.
pub fn render_cost_table(costed: &[CostedConfiguration]) -> String {
    let mut rows: Vec<&CostedConfiguration> = costed.iter().collect();
    rows.sort_by(|a, b| a.cost.total_cmp(&b.cost).then_with(|| a.tbc.id.cmp(&b.tbc.id)));
    let width = rows.iter().map(|c| c.tbc.id.len()).max().unwrap_or(0).max("configuration".len());
    let mut out = format!("{:<width$}  cost  source\n", "configuration");
    for c in rows {
        let source = if c.breakdown.is_empty() && c.tbc.cost_override.is_some() {
            "override"
        } else {
            "weighted"
        };
        let _ = writeln!(out, "{:<width$}  {}  {source}", c.tbc.id, snap(c.cost));
    }
    out
}

fn human_text(report: &AssignmentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Assignment report for test case {}", report.test_case_id);
    let _ = write!(out, "Outcome: {}", report.outcome.label());
    match &report.outcome {
        Outcome::Success { tbc_id, verdict, .. } => {
            let verdict = match verdict {
                TestVerdict::Passed => "passed",
                TestVerdict::CriteriaFailed => "criteria failed",
            };
            let _ = writeln!(out, " on {tbc_id}, test {verdict}");
        }
        Outcome::Planned { tbc_id } => {
            let _ = writeln!(out, " {tbc_id}");
        }
        Outcome::AbortCostError { message } | Outcome::AbortExecutionError { message } => {
            let _ = writeln!(out, " ({message})");
        }
        _ => out.push('\n'),
    }

    for record in &report.iterations {
        let _ = writeln!(out, "\nIteration {}", record.iteration);
        let _ = writeln!(out, "  Step 1  suitable test benches: {}", list(&record.suitable_benches));
        out.push_str("  Step 2  required validity:\n");
        required_lines(&mut out, &record.required_validity);
        if let Some(labels) = &record.validity_labels {
            for (bench, labels) in labels {
                let (valid, invalid): (Vec<_>, Vec<_>) = labels.iter().partition(|l| l.is_valid());
                let ids = |ls: &[&crate::assignment::ValidityLabel]| {
                    list(&ls.iter().map(|l| l.element_id.clone()).collect::<Vec<_>>())
                };
                let _ = writeln!(out, "    {bench} sufficiently valid: {}", ids(&valid));
                let _ = writeln!(out, "    {bench} insufficiently valid: {}", ids(&invalid));
            }
        }
        if let Some(configs) = &record.valid_configurations {
            let _ = writeln!(out, "  Step 3  valid configurations: {}", list(configs));
        }
        if let Some(costed) = &record.costed_configurations {
            out.push_str("  Step 4  costs:\n");
            for line in render_cost_table(costed).lines() {
                let _ = writeln!(out, "    {line}");
            }
        }
        if let Some(selected) = &record.selected {
            let _ = writeln!(out, "  Step 5  selected: {selected}");
        }
        if let Some(summary) = &record.trace_summary {
            let _ = writeln!(
                out,
                "  Step 6  executed: {} samples at {} s",
                summary.samples,
                snap(summary.step)
            );
            for (quantity, q) in &summary.quantities {
                let _ = writeln!(out, "    {quantity} [{}, {}] {}", snap(q.min), snap(q.max), q.unit);
            }
            for (id, result) in record.criteria.iter().flatten() {
                let status = if result.passed { "passed" } else { "failed" };
                let _ = writeln!(out, "    criterion {id} {status} at {}", snap(result.witness));
            }
        }
        if let Some(violations) = &record.violations {
            if violations.is_empty() {
                out.push_str("  Step 7  validity verified, no violations\n");
            } else {
                out.push_str("  Step 7  validity violations:\n");
                for v in violations {
                    let _ = writeln!(
                        out,
                        "    {} ({}) {} observed [{}, {}] outside {} {}",
                        v.element_id,
                        v.dimension,
                        v.quantity,
                        snap(v.observed.lo),
                        snap(v.observed.hi),
                        v.declared,
                        v.unit
                    );
                }
            }
        }
        if let Some(adapted) = &record.adapted_required_validity {
            out.push_str("  Step 8  adapted required validity:\n");
            required_lines(&mut out, adapted);
        }
    }
    out
}
