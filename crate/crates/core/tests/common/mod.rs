//! Fixture loading, random instance generators and brute-force oracles shared
//! by the integration suites. Oracles deliberately avoid the library's own
//! helpers so that they check it rather than mirror it.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use tbc_core::assignment::{ValidityLabel, Verdict};
use tbc_core::catalog_io::{parse_catalog, Catalog};
use tbc_core::model::{
    CouplingRule, Dimension, DimensionId, Element, Interval, Port, PortDirection, Stage, TestBench, Unit,
    ValidityDomain,
};

pub fn fixture_path(name: &str) -> String {
    format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn catalog(name: &str) -> Catalog {
    parse_catalog(&fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub const CATALOG_FIXTURES: [&str; 7] = [
    "cut_in.catalog.json",
    "cut_in_no_double_track.catalog.json",
    "cut_in_no_double_track_adapted.catalog.json",
    "hil_bench.catalog.json",
    "sil_bench.catalog.json",
    "tv_bench.catalog.json",
    "invalid_weights.catalog.json",
];

pub const QUANTITIES: [&str; 3] = ["lateral_acceleration", "longitudinal_acceleration", "yaw_rate"];

const PORT_NAMES: [&str; 3] = ["bus_a", "bus_b", "bus_c"];

pub fn random_stage(rng: &mut impl Rng) -> Stage {
    *Stage::ALL.choose(rng).unwrap()
}

pub fn random_interval(rng: &mut impl Rng, scale: f64) -> Interval {
    let a = rng.gen_range(-scale..scale);
    let b = rng.gen_range(-scale..scale);
    Interval::new(a.min(b), a.max(b))
}

/// A valid bench covering `1..=max_dims` canonical dimensions, each leaf with
/// `1..=max_per_leaf` elements. With `rules`, elements get random ports and
/// the bench random forbidden stage pairs.
pub fn random_bench(rng: &mut impl Rng, max_dims: usize, max_per_leaf: usize, rules: bool) -> TestBench {
    let mut dims = DimensionId::ALL.to_vec();
    dims.shuffle(rng);
    let covered = rng.gen_range(1..=max_dims);
    let mut bench = TestBench::new("R");
    for &dim in &dims[covered..] {
        bench.uncovered.insert(dim);
    }
    let mut leaves = Vec::new();
    for &dim in &dims[..covered] {
        if dim == DimensionId::EnvironmentPerceptionSensors && rng.gen_bool(0.5) {
            leaves.push(Dimension::refined(dim, "radar").unwrap());
            leaves.push(Dimension::refined(dim, "camera").unwrap());
        } else {
            leaves.push(Dimension::canonical(dim));
        }
    }
    for (k, leaf) in leaves.iter().enumerate() {
        for i in 0..rng.gen_range(1..=max_per_leaf) {
            let mut e = Element::new(&format!("e{k}_{i}"), leaf.clone(), random_stage(rng));
            if rules {
                if rng.gen_bool(0.25) {
                    let name = PORT_NAMES.choose(rng).unwrap();
                    e = e.with_port(Port::new(name, "can", PortDirection::Requires));
                }
                if rng.gen_bool(0.35) {
                    let name = PORT_NAMES.choose(rng).unwrap();
                    e = e.with_port(Port::new(name, "can", PortDirection::Provides));
                }
            }
            bench.elements.push(e);
        }
    }
    if rules {
        for _ in 0..rng.gen_range(0..=2) {
            let a = leaves.choose(rng).unwrap().clone();
            let b = leaves.choose(rng).unwrap().clone();
            bench.coupling_rules.push(CouplingRule::ForbiddenStagePair {
                dimension_a: Dimension::canonical(a.id),
                stage_a: random_stage(rng),
                dimension_b: b,
                stage_b: random_stage(rng),
            });
        }
    }
    bench
}

/// Gives every simulated or emulated element random domains over a random
/// subset of [`QUANTITIES`].
pub fn with_random_domains(mut bench: TestBench, rng: &mut impl Rng) -> TestBench {
    for e in &mut bench.elements {
        for q in QUANTITIES {
            if rng.gen_bool(0.6) {
                e.validity
                    .push(ValidityDomain::new(q, Unit::MetersPerSecondSquared, random_interval(rng, 8.0)));
            }
        }
    }
    bench
}

pub fn random_labels(bench: &TestBench, rng: &mut impl Rng) -> Vec<ValidityLabel> {
    bench
        .elements
        .iter()
        .map(|e| ValidityLabel {
            element_id: e.id.clone(),
            verdict: if rng.gen_bool(0.8) {
                Verdict::SufficientlyValid
            } else {
                Verdict::InsufficientlyValid
            },
            reasons: Vec::new(),
        })
        .collect()
}

pub fn all_valid(bench: &TestBench) -> Vec<ValidityLabel> {
    bench
        .elements
        .iter()
        .map(|e| ValidityLabel {
            element_id: e.id.clone(),
            verdict: Verdict::SufficientlyValid,
            reasons: Vec::new(),
        })
        .collect()
}

/// Leaves computed from scratch: every element dimension, minus canonical
/// dimensions that also appear refined.
fn oracle_leaves(bench: &TestBench) -> Vec<Dimension> {
    let dims: BTreeSet<Dimension> = bench.elements.iter().map(|e| e.dimension.clone()).collect();
    dims.iter()
        .filter(|d| d.refinement.is_some() || !dims.iter().any(|o| o.id == d.id && o.refinement.is_some()))
        .cloned()
        .collect()
}

fn oracle_admissible(bench: &TestBench, picked: &[&Element]) -> bool {
    for (i, e) in picked.iter().enumerate() {
        for need in e.ports.iter().filter(|p| p.direction == PortDirection::Requires) {
            let met = picked.iter().enumerate().any(|(j, o)| {
                j != i
                    && o.ports.iter().any(|p| {
                        p.direction == PortDirection::Provides && p.name == need.name && p.protocol == need.protocol
                    })
            });
            if !met {
                return false;
            }
        }
    }
    let in_dim = |rule_dim: &Dimension, e: &Element| {
        rule_dim.id == e.dimension.id && (rule_dim.refinement.is_none() || rule_dim.refinement == e.dimension.refinement)
    };
    for rule in &bench.coupling_rules {
        match rule {
            CouplingRule::ForbiddenStagePair {
                dimension_a,
                stage_a,
                dimension_b,
                stage_b,
            } => {
                for x in picked {
                    for y in picked {
                        if x.stage == *stage_a && in_dim(dimension_a, x) && y.stage == *stage_b && in_dim(dimension_b, y)
                        {
                            return false;
                        }
                    }
                }
            }
            _ => unimplemented!("oracle covers forbidden stage pairs only"),
        }
    }
    true
}

/// Exhaustive product over leaves, filtered by validity, ports and forbidden
/// pairs. Each result is a sorted list of element ids.
pub fn oracle_enumeration(bench: &TestBench, labels: &[ValidityLabel]) -> BTreeSet<Vec<String>> {
    let valid: BTreeSet<&str> = labels
        .iter()
        .filter(|l| l.verdict == Verdict::SufficientlyValid)
        .map(|l| l.element_id.as_str())
        .collect();
    let leaves = oracle_leaves(bench);
    let mut out = BTreeSet::new();
    if leaves.is_empty() {
        return out;
    }
    let mut odometer = vec![0usize; leaves.len()];
    let per_leaf: Vec<Vec<&Element>> = leaves
        .iter()
        .map(|l| bench.elements.iter().filter(|e| &e.dimension == l).collect())
        .collect();
    'outer: loop {
        let picked: Vec<&Element> = odometer.iter().zip(&per_leaf).map(|(&i, es)| es[i]).collect();
        if picked.iter().all(|e| valid.contains(e.id.as_str())) && oracle_admissible(bench, &picked) {
            let mut ids: Vec<String> = picked.iter().map(|e| e.id.clone()).collect();
            ids.sort();
            out.insert(ids);
        }
        for k in 0..odometer.len() {
            odometer[k] += 1;
            if odometer[k] < per_leaf[k].len() {
                continue 'outer;
            }
            odometer[k] = 0;
        }
        break;
    }
    out
}

/// `Σ_c a_c · k_c`, summed in criterion-name order.
pub fn oracle_element_cost(costs: &BTreeMap<String, f64>, weights: &BTreeMap<String, f64>) -> f64 {
    let mut total = 0.0;
    for (name, a) in weights {
        total += a * costs[name];
    }
    total
}

/// Random weight vector of length `n` summing to one.
pub fn random_weights(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / sum).collect();
    let head: f64 = w[..n - 1].iter().sum();
    w[n - 1] = 1.0 - head;
    w
}

/// Triple loop over stage, dimension and criterion with 1-based indices.
pub fn oracle_stage_matrix(j_count: usize, n_count: usize, values: &[f64], weights: &[f64], stage_of: &[usize]) -> f64 {
    let mut k = vec![vec![vec![0.0; n_count + 1]; j_count + 1]; 4];
    let mut idx = 0;
    for stage in k.iter_mut().skip(1) {
        for row in stage.iter_mut().skip(1) {
            for cell in row.iter_mut().skip(1) {
                *cell = values[idx];
                idx += 1;
            }
        }
    }
    let mut g = 0.0;
    for (i, stage) in k.iter().enumerate().skip(1) {
        for j in 1..=j_count {
            if stage_of[j - 1] != i {
                continue;
            }
            for n in 1..=n_count {
                g += weights[n - 1] * stage[j][n];
            }
        }
    }
    g
}
