//! Workloads, architectures and constraint sets shipped with the crate.

use crate::archmodel::ArchSpec;
use crate::optimizer::SearchConstraints;
use crate::workload::Network;

macro_rules! files {
    ($dir:literal: $($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../data/", $dir, "/", $name, ".txt")))),*]
    };
}

pub const NETWORKS: &[(&str, &str)] = files!("networks":
    "alexnet", "vgg16", "googlenet", "mobilenet", "lstm-m", "lstm-l", "rhn", "mlp-m", "mlp-l", "tiny-net",
);

pub const ARCHS: &[(&str, &str)] = files!("archs": "blue", "red", "green", "os4", "os8", "ws16");

pub const CONSTRAINTS: &[(&str, &str)] = files!("constraints": "mobile", "two-level-rf", "pinned", "sweep");

/// The benchmark suite: four CNNs, three recurrent networks, two MLPs.
pub const BENCHMARKS: &[&str] = &[
    "alexnet", "vgg16", "googlenet", "mobilenet", "lstm-m", "lstm-l", "rhn", "mlp-m", "mlp-l",
];

/// The baseline the benchmark suite is compared against.
pub const BASELINE_ARCH: &str = "blue";

/// Constraint set the benchmark suite searches under.
pub const BENCHMARK_CONSTRAINTS: &str = "mobile";

fn find(table: &[(&'static str, &'static str)], name: &str) -> Option<&'static str> {
    table.iter().find(|e| e.0 == name).map(|e| e.1)
}

pub fn network_text(name: &str) -> Option<&'static str> {
    find(NETWORKS, name)
}

pub fn arch_text(name: &str) -> Option<&'static str> {
    find(ARCHS, name)
}

pub fn constraints_text(name: &str) -> Option<&'static str> {
    find(CONSTRAINTS, name)
}

/// Parsed bundled network. Panics only if a shipped file is malformed.
pub fn network(name: &str) -> Option<Network> {
    network_text(name).map(|t| Network::parse(t, name).expect("bundled network parses"))
}

pub fn arch(name: &str) -> Option<ArchSpec> {
    arch_text(name).map(|t| ArchSpec::parse(t, name).expect("bundled architecture parses"))
}

pub fn constraints(name: &str) -> Option<SearchConstraints> {
    constraints_text(name).map(|t| SearchConstraints::parse(t, name).expect("bundled constraints parse"))
}
