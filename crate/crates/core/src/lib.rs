//! Assignment of scenario-based test cases to X-in-the-loop test bench
//! configurations.
//!
//! Benches are classified by which element realizes each of ten dimensions
//! and at which stage (simulated, emulated, real). A test case is assigned to
//! the cheapest configuration whose elements are valid for it, executed, and
//! re-assigned with widened requirements if the execution left an element's
//! validity domain.

pub mod assignment;
pub mod catalog_io;
pub mod costing;
pub mod execution;
pub mod model;
pub mod radar_viz;

pub use assignment::{
    adapt_required_domains, classify_element_validity, enumerate_valid_configurations, plan_assignment,
    run_assignment, suitable_benches, AssignmentOptions, AssignmentReport, Outcome, ValidityLabel,
};
pub use catalog_io::{parse_catalog, Catalog, CatalogError, ReportFormat};
pub use costing::{configuration_cost, element_cost, select_optimal, WeightSet};
pub use execution::{verify_validity, CutInExecutor, EgoMode, ExecutionTrace, Executor, ReplayExecutor};
pub use model::{Element, Stage, TestBench, TestBenchConfiguration, TestCase, TestObjectRequirements};
pub use radar_viz::render_radar;
