use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tbc_core::assignment::{classify_element_validity, enumerate_valid_configurations, AssignmentReport};
use tbc_core::catalog_io::{emit_report, emit_report_set, parse_catalog, render_cost_table, Catalog, ReportFormat};
use tbc_core::execution::{replay_executor, CutInExecutor, EgoMode, Executor, DEFAULT_DURATION, DEFAULT_STEP};
use tbc_core::model::{RequiredValidity, TestBenchConfiguration, TestCase};
use tbc_core::{plan_assignment, render_radar, run_assignment, AssignmentOptions, WeightSet};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "tbc", version, about = "Assign test cases to test bench configurations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a catalog and report findings.
    Validate {
        #[arg(long)]
        catalog: PathBuf,
    },
    /// Draw a bench as a radar chart, optionally highlighting a configuration.
    Render {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        bench: String,
        #[arg(long)]
        tbc: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Plan only: select the configuration without executing it.
    Assign(Common),
    /// Plan, execute and adapt until the result is valid or the loop gives up.
    Run {
        #[command(flatten)]
        common: Common,
        /// `cutin` or `replay:PATH`.
        #[arg(long)]
        executor: String,
        /// `brake` or `lane_change:PEAK` (m/s²). Overrides the catalog.
        #[arg(long)]
        ego_mode: Option<String>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Print the cost table of all valid configurations.
    Costs(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    test_case: Option<String>,
    #[arg(long, conflicts_with = "test_case")]
    all_test_cases: bool,
    /// Criterion weights as `name=value,...`. Overrides the catalog.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Structured)]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Reserved. Every code path is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Structured,
    #[value(name = "human_text")]
    HumanText,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Structured => ReportFormat::Structured,
            Format::HumanText => ReportFormat::HumanText,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Validate { catalog } => validate(&catalog),
        Command::Render {
            catalog,
            bench,
            tbc,
            output,
        } => render(&catalog, &bench, tbc.as_deref(), output.as_deref()),
        Command::Assign(common) => assign(&common),
        Command::Run {
            common,
            executor,
            ego_mode,
            step,
            duration,
        } => run(&common, &executor, ego_mode.as_deref(), step, duration),
        Command::Costs(common) => costs(&common),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Loads a catalog. A catalog that fails to load is reported and mapped to
/// exit code 1; `None` signals that case to the caller.
fn load(path: &Path) -> Result<Option<Catalog>> {
    match parse_catalog(&read(path)?) {
        Ok(catalog) => Ok(Some(catalog)),
        Err(e) => {
            eprintln!("{}: {e}", e.code());
            Ok(None)
        }
    }
}

/// Writes `text` to `output` in one atomic rename, or to stdout.
fn write_output(output: Option<&Path>, text: &str) -> Result<()> {
    let Some(path) = output else {
        std::io::stdout().write_all(text.as_bytes())?;
        return Ok(());
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write to {}", dir.display()))?;
    tmp.write_all(text.as_bytes())?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mode = fs::metadata(path).map_or(0o644, |m| m.permissions().mode());
        tmp.as_file().set_permissions(fs::Permissions::from_mode(mode))?;
    }
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn validate(path: &Path) -> Result<ExitCode> {
    let Some(catalog) = load(path)? else {
        return Ok(ExitCode::from(EXIT_FAILURE));
    };
    println!(
        "ok: {} benches, {} test cases",
        catalog.benches.len(),
        catalog.test_cases.len()
    );
    Ok(ExitCode::SUCCESS)
}

/// Named configuration of the bench, or one of its enumerable compositions.
fn find_configuration(catalog: &Catalog, bench_id: &str, tbc_id: &str) -> Option<TestBenchConfiguration> {
    let bench = catalog.bench(bench_id)?;
    if let Some(named) = bench.configurations.iter().find(|c| c.id == tbc_id) {
        return Some(named.clone());
    }
    let none = RequiredValidity::new();
    let labels = classify_element_validity(bench, &none);
    enumerate_valid_configurations(bench, &labels, &none)
        .into_iter()
        .find(|c| c.id == tbc_id)
}

fn render(path: &Path, bench_id: &str, tbc_id: Option<&str>, output: Option<&Path>) -> Result<ExitCode> {
    let Some(catalog) = load(path)? else {
        return Ok(ExitCode::from(EXIT_FAILURE));
    };
    let bench = catalog
        .bench(bench_id)
        .ok_or_else(|| anyhow!("no bench `{bench_id}` in {}", path.display()))?;
    let highlight = match tbc_id {
        Some(id) => Some(
            find_configuration(&catalog, bench_id, id)
                .ok_or_else(|| anyhow!("no configuration `{id}` on bench `{bench_id}`"))?,
        ),
        None => None,
    };
    match render_radar(bench, highlight.as_ref()) {
        Ok(svg) => {
            write_output(output, &svg)?;
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("{e}");
            Ok(ExitCode::from(EXIT_FAILURE))
        }
    }
}

fn parse_weights(spec: &str) -> Result<WeightSet> {
    let mut weights = BTreeMap::new();
    for pair in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let (name, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("weight `{pair}` is not of the form name=value"))?;
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("weight `{pair}` has no numeric value"))?;
        weights.insert(name.trim().to_string(), value);
    }
    WeightSet::new(weights).map_err(|e| anyhow!("{e}"))
}

fn options(common: &Common, catalog: &Catalog) -> Result<AssignmentOptions> {
    let mut options = match &common.weights {
        Some(spec) => AssignmentOptions {
            weights: parse_weights(spec)?,
            margin: catalog.options.margin,
            max_iterations: catalog.options.max_iterations,
        },
        None => catalog
            .assignment_options()
            .ok_or_else(|| anyhow!("no weights in the catalog; pass --weights"))?,
    };
    if let Some(margin) = common.margin {
        if !(margin.is_finite() && margin >= 0.0) {
            bail!("--margin must be a non-negative number");
        }
        options.margin = margin;
    }
    if let Some(n) = common.max_iterations {
        if n == 0 {
            bail!("--max-iterations must be at least 1");
        }
        options.max_iterations = n;
    }
    Ok(options)
}

fn test_cases<'a>(common: &Common, catalog: &'a Catalog) -> Result<Vec<&'a TestCase>> {
    if common.all_test_cases {
        return Ok(catalog.test_cases.iter().collect());
    }
    match (&common.test_case, catalog.test_cases.as_slice()) {
        (Some(id), _) => Ok(vec![catalog
            .test_case(id)
            .ok_or_else(|| anyhow!("no test case `{id}` in the catalog"))?]),
        (None, [only]) => Ok(vec![only]),
        (None, []) => bail!("the catalog has no test cases"),
        (None, _) => bail!("the catalog has several test cases; pass --test-case or --all-test-cases"),
    }
}

/// Emits the reports and maps any abort to exit code 1.
fn finish(common: &Common, reports: &[AssignmentReport]) -> Result<ExitCode> {
    let format = common.format.into();
    let text = if common.all_test_cases {
        emit_report_set(reports, format)
    } else {
        emit_report(&reports[0], format)
    };
    write_output(common.output.as_deref(), &text)?;
    let mut code = ExitCode::SUCCESS;
    for report in reports.iter().filter(|r| !r.outcome.is_success()) {
        eprintln!("{}: {}", report.test_case_id, report.outcome.label());
        code = ExitCode::from(EXIT_FAILURE);
    }
    Ok(code)
}

fn assign(common: &Common) -> Result<ExitCode> {
    let Some(catalog) = load(&common.catalog)? else {
        return Ok(ExitCode::from(EXIT_FAILURE));
    };
    let options = options(common, &catalog)?;
    let reports: Vec<_> = test_cases(common, &catalog)?
        .into_iter()
        .map(|tc| plan_assignment(&catalog.benches, &catalog.requirements, tc, &options))
        .collect();
    finish(common, &reports)
}

fn costs(common: &Common) -> Result<ExitCode> {
    let Some(catalog) = load(&common.catalog)? else {
        return Ok(ExitCode::from(EXIT_FAILURE));
    };
    let options = options(common, &catalog)?;
    let mut code = ExitCode::SUCCESS;
    let mut text = String::new();
    for tc in test_cases(common, &catalog)? {
        let report = plan_assignment(&catalog.benches, &catalog.requirements, tc, &options);
        text.push_str(&format!("test case {}\n", tc.id));
        match report.iterations[0].costed_configurations.as_deref() {
            Some(costed) => text.push_str(&render_cost_table(costed)),
            None => {
                text.push_str(&format!("no costs: {}\n", report.outcome.label()));
                code = ExitCode::from(EXIT_FAILURE);
            }
        }
    }
    write_output(common.output.as_deref(), &text)?;
    Ok(code)
}

fn parse_ego_mode(spec: &str) -> Result<EgoMode> {
    match spec.split_once(':') {
        None if spec == "brake" => Ok(EgoMode::Brake),
        Some(("lane_change", peak)) => Ok(EgoMode::LaneChange {
            peak_lateral_acceleration: peak
                .parse()
                .with_context(|| format!("lane change peak `{peak}` is not a number"))?,
        }),
        _ => bail!("ego mode must be `brake` or `lane_change:PEAK`, got `{spec}`"),
    }
}

fn executor(
    spec: &str,
    catalog: &Catalog,
    ego_mode: Option<&str>,
    step: Option<f64>,
    duration: Option<f64>,
) -> Result<Box<dyn Executor>> {
    if let Some(path) = spec.strip_prefix("replay:") {
        let replay = replay_executor(&read(Path::new(path))?).map_err(|e| anyhow!("{}: {e}", e.code()))?;
        return Ok(Box::new(replay));
    }
    if spec != "cutin" {
        bail!("executor must be `cutin` or `replay:PATH`, got `{spec}`");
    }
    let mut cut_in = catalog.executor.unwrap_or(CutInExecutor {
        ego_mode: EgoMode::Brake,
        step: DEFAULT_STEP,
        duration: DEFAULT_DURATION,
    });
    if let Some(mode) = ego_mode {
        cut_in.ego_mode = parse_ego_mode(mode)?;
    }
    if let Some(step) = step {
        cut_in.step = step;
    }
    if let Some(duration) = duration {
        cut_in.duration = duration;
    }
    Ok(Box::new(cut_in))
}

fn run(
    common: &Common,
    executor_spec: &str,
    ego_mode: Option<&str>,
    step: Option<f64>,
    duration: Option<f64>,
) -> Result<ExitCode> {
    let Some(catalog) = load(&common.catalog)? else {
        return Ok(ExitCode::from(EXIT_FAILURE));
    };
    let options = options(common, &catalog)?;
    let executor = executor(executor_spec, &catalog, ego_mode, step, duration)?;
    let cases = test_cases(common, &catalog)?;
    let executor = executor.as_ref();
    let reports: Vec<AssignmentReport> = std::thread::scope(|scope| {
        let handles: Vec<_> = cases
            .iter()
            .map(|tc| {
                let (catalog, options) = (&catalog, &options);
                scope.spawn(move || run_assignment(&catalog.benches, &catalog.requirements, tc, executor, options))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("assignment thread panicked"))
            .collect()
    });
    finish(common, &reports)
}
