//! Radar chart rendering of a bench and, optionally, one of its configurations.
//!
//! One spoke per leaf dimension, clockwise from the top in canonical order.
//! Stages sit on three rings at radius 1/3, 2/3 and 1 of the chart radius.
//! Elements sharing a spoke and stage are spread tangentially in id order.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{
    validate_configuration, validate_test_bench, ConfigurationError, Dimension, Stage, TestBench,
    TestBenchConfiguration, ValidationReport,
};

const CANVAS: f64 = 800.0;
const CENTER: f64 = CANVAS / 2.0;
const RADIUS: f64 = 300.0;
const LABEL_RADIUS: f64 = 340.0;
const JITTER: f64 = 12.0;
const DOT_RADIUS: f64 = 6.0;

const STYLE: &str = "\
svg { font-family: sans-serif; font-size: 13px; }
.ring { fill: none; stroke: #b0b0b0; stroke-width: 1; }
.spoke { stroke: #808080; stroke-width: 1; }
.spoke-label { fill: #202020; text-anchor: middle; dominant-baseline: middle; }
.ring-label { fill: #707070; font-size: 11px; }
.element { fill: #4a4a4a; stroke: #ffffff; stroke-width: 1; }
.highlight { fill: none; stroke: #e67e00; stroke-width: 2.5; stroke-dasharray: 8 5; }
";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("bench `{bench}` is invalid\n{report}")]
    InvalidBench { bench: String, report: ValidationReport },
    #[error("configuration `{tbc}` is invalid\n{report}")]
    InvalidHighlight { tbc: String, report: ValidationReport },
    #[error(transparent)]
    Configuration(#[from] ConfigurationError),
}

/// Rounds to two decimals and prints without a negative zero.
fn coord(x: f64) -> String {
    let r = (x * 100.0).round() / 100.0;
    format!("{:.2}", if r == 0.0 { 0.0 } else { r })
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(ch),
        }
    }
    out
}

fn spoke_angle(index: usize, count: usize) -> f64 {
    -PI / 2.0 + 2.0 * PI * index as f64 / count as f64
}

fn ring_radius(stage: Stage) -> f64 {
    RADIUS * f64::from(stage.plot_coordinate()) / 3.0
}

/// Marker positions keyed by element id.
fn element_positions(bench: &TestBench, leaves: &[Dimension]) -> BTreeMap<String, (f64, f64)> {
    let mut positions = BTreeMap::new();
    for (k, leaf) in leaves.iter().enumerate() {
        let angle = spoke_angle(k, leaves.len());
        let (dx, dy) = (angle.cos(), angle.sin());
        for stage in Stage::ALL {
            let mut ids: Vec<&str> = bench
                .elements_at(leaf)
                .filter(|e| e.stage == stage)
                .map(|e| e.id.as_str())
                .collect();
            ids.sort_unstable();
            let r = ring_radius(stage);
            let centre_offset = (ids.len() as f64 - 1.0) / 2.0;
            for (i, id) in ids.into_iter().enumerate() {
                let t = (i as f64 - centre_offset) * JITTER;
                positions.insert(id.to_string(), (CENTER + r * dx - t * dy, CENTER + r * dy + t * dx));
            }
        }
    }
    positions
}

/// SVG 1.1 radar chart of `bench`, with `highlight` drawn as a dashed closed
/// line through its selected elements.
pub fn render_radar(bench: &TestBench, highlight: Option<&TestBenchConfiguration>) -> Result<String, RenderError> {
    let report = validate_test_bench(bench);
    if !report.is_ok() {
        return Err(RenderError::InvalidBench {
            bench: bench.id.clone(),
            report,
        });
    }
    if let Some(tbc) = highlight {
        let report = validate_configuration(tbc, bench)?;
        if !report.is_ok() {
            return Err(RenderError::InvalidHighlight {
                tbc: tbc.id.clone(),
                report,
            });
        }
    }

    let leaves = bench.leaf_dimensions();
    let positions = element_positions(bench, &leaves);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="800" height="800" viewBox="0 0 800 800">"#
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(&bench.id));
    let _ = writeln!(svg, "<style type=\"text/css\"><![CDATA[\n{STYLE}]]></style>");

    for stage in Stage::ALL {
        let r = ring_radius(stage);
        let _ = writeln!(
            svg,
            r#"<circle class="ring" cx="{c}" cy="{c}" r="{}"/>"#,
            coord(r),
            c = coord(CENTER)
        );
        let _ = writeln!(
            svg,
            r#"<text class="ring-label" x="{}" y="{}">{} {}</text>"#,
            coord(CENTER + 4.0),
            coord(CENTER - r - 4.0),
            stage.plot_coordinate(),
            stage.as_str()
        );
    }

    for (k, leaf) in leaves.iter().enumerate() {
        let angle = spoke_angle(k, leaves.len());
        let _ = writeln!(
            svg,
            r#"<line class="spoke" x1="{c}" y1="{c}" x2="{}" y2="{}"/>"#,
            coord(CENTER + RADIUS * angle.cos()),
            coord(CENTER + RADIUS * angle.sin()),
            c = coord(CENTER)
        );
        let _ = writeln!(
            svg,
            r#"<text class="spoke-label" x="{}" y="{}">{}</text>"#,
            coord(CENTER + LABEL_RADIUS * angle.cos()),
            coord(CENTER + LABEL_RADIUS * angle.sin()),
            escape(&leaf.to_string())
        );
    }

    if let Some(tbc) = highlight {
        let points: Vec<String> = leaves
            .iter()
            .filter_map(|leaf| tbc.selection.get(leaf))
            .filter_map(|id| positions.get(id))
            .map(|&(x, y)| format!("{},{}", coord(x), coord(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon class="highlight" data-tbc="{}" points="{}"/>"#,
            escape(&tbc.id),
            points.join(" ")
        );
    }

    for (id, (x, y)) in &positions {
        let element = bench.element(id).expect("positions come from bench elements");
        let _ = writeln!(
            svg,
            r#"<circle class="element" cx="{}" cy="{}" r="{}" data-dimension="{}" data-stage="{}"><title>{}</title></circle>"#,
            coord(*x),
            coord(*y),
            coord(DOT_RADIUS),
            escape(&element.dimension.to_string()),
            element.stage.as_str(),
            escape(id)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
