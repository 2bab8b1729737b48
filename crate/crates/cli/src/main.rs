//! `dnn-dse`: evaluate, search and validate loop-nest mappings of DNN
//! layers on accelerator memory hierarchies.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{ArgGroup, Args, Parser, Subcommand};
use dnn_dse::archmodel::ArchSpec;
use dnn_dse::costmodel::{CostReport, ModelOptions};
use dnn_dse::optimizer::{
    assemble_design, best_design, parse_array, pruned_search, sweep_pe_array, DataflowSet, DesignPoint, Objective,
    SearchConstraints, SearchOptions,
};
use dnn_dse::schedule::{enumerate_blockings, enumerate_dataflows, parse_schedules, validate_schedule, Dataflow, Schedule};
use dnn_dse::validation::validate_layer_with;
use dnn_dse::workload::Network;
use dnn_dse::{bundled, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "dnn-dse", version, about = "Design-space exploration for dense DNN accelerators")]
struct Cli {
    /// Worker threads for searches (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Print `key=value` lines instead of tables.
    #[arg(long, global = true)]
    flat: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cost of a network on an architecture, with given or searched schedules.
    Evaluate(EvaluateArgs),
    /// Pick a shared architecture and per-layer schedules under constraints.
    Search(SearchArgs),
    /// Run `search` for a series of PE array sizes.
    Sweep(SweepArgs),
    /// Check the analytic model against the loop-nest simulator.
    Validate(ValidateArgs),
    /// List the dataflows or blockings of each layer.
    Enumerate(EnumerateArgs),
    /// Improvement of searched designs over a baseline architecture.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("mapping").required(true).args(["schedules", "auto_block"])))]
struct EvaluateArgs {
    /// Network file or bundled network name.
    network: String,
    /// Architecture file or bundled architecture name.
    arch: String,
    /// Schedule file: `schedule <layer>` sections, or unnamed schedules in layer order.
    #[arg(long, value_name = "FILE")]
    schedules: Option<PathBuf>,
    /// Search the best blocking of every layer.
    #[arg(long)]
    auto_block: bool,
    /// Dataflows for --auto-block: `ck`, `all`, or one such as `C|K`.
    #[arg(long, default_value = "ck", value_name = "DATAFLOW")]
    dataflow: String,
    #[arg(long, default_value = "energy")]
    objective: String,
    /// Also write arch.txt, schedules.txt and report.txt here.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    network: String,
    /// Constraints file or bundled constraint set name.
    constraints: String,
    #[arg(long, default_value = "design", value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    network: String,
    constraints: String,
    /// Array sizes in ascending PE count, e.g. `8x8,16x16,32x32`.
    #[arg(long, value_delimiter = ',', required = true)]
    arrays: Vec<String>,
    #[arg(long, default_value = "sweep", value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    network: String,
    arch: String,
    /// Random schedules per layer.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skews the model's input halo; for checking that mismatches are caught.
    #[arg(long, hide = true, default_value_t = 0, allow_negative_numbers = true)]
    halo_adjust: i64,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("what").required(true).args(["dataflows", "blockings"])))]
struct EnumerateArgs {
    network: String,
    arch: String,
    #[arg(long)]
    dataflows: bool,
    #[arg(long)]
    blockings: bool,
    /// Include replicated variants when listing dataflows.
    #[arg(long)]
    replicate: bool,
    /// Dataflow of the listed blockings, e.g. `C|K`; `none` unrolls nothing.
    #[arg(long, default_value = "none", value_name = "DATAFLOW")]
    dataflow: String,
    /// Only this layer.
    #[arg(long)]
    layer: Option<String>,
    /// Stop listing blockings of a layer after this many.
    #[arg(long, default_value_t = 1000)]
    limit: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Networks to compare (default: the bundled benchmark suite).
    networks: Vec<String>,
    #[arg(long, default_value = bundled::BASELINE_ARCH)]
    baseline: String,
    #[arg(long, default_value = bundled::BENCHMARK_CONSTRAINTS)]
    constraints: String,
}

/// How a command that ran to completion exits.
struct Outcome {
    code: u8,
}

impl Outcome {
    fn ok() -> Outcome {
        Outcome { code: 0 }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(&cli) {
        Ok(o) => ExitCode::from(o.code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()).map(Error::root) {
        Some(Error::InvalidSchedule(_) | Error::InvalidArch(_)) => EXIT_INVALID,
        Some(Error::NoSolution(_) | Error::BudgetExceeded { .. }) => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Evaluate(a) => evaluate(a, cli.flat),
        Command::Search(a) => search(a, cli.flat),
        Command::Sweep(a) => sweep(a, cli.flat),
        Command::Validate(a) => validate(a, cli.flat),
        Command::Enumerate(a) => enumerate(a, cli.flat),
        Command::Report(a) => report(a, cli.flat),
    }
}

/// Reads `arg` as a file, or else as the name of a bundled file.
fn load_text(arg: &str, what: &str, bundled: fn(&str) -> Option<&'static str>) -> anyhow::Result<(String, String)> {
    let path = Path::new(arg);
    if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let stem = path.file_stem().map_or(arg.to_string(), |s| s.to_string_lossy().into_owned());
        return Ok((text, stem));
    }
    match bundled(arg) {
        Some(t) => Ok((t.to_string(), arg.to_string())),
        None => bail!("no {what} file `{arg}` and no bundled {what} of that name"),
    }
}

fn load_network(arg: &str) -> anyhow::Result<Network> {
    let (text, name) = load_text(arg, "network", bundled::network_text)?;
    Network::parse(&text, &name).with_context(|| format!("parsing network `{arg}`"))
}

fn load_arch(arg: &str) -> anyhow::Result<ArchSpec> {
    let (text, name) = load_text(arg, "architecture", bundled::arch_text)?;
    ArchSpec::parse(&text, &name).with_context(|| format!("parsing architecture `{arg}`"))
}

fn load_constraints(arg: &str) -> anyhow::Result<SearchConstraints> {
    let (text, name) = load_text(arg, "constraints", bundled::constraints_text)?;
    let c = SearchConstraints::parse(&text, &name).with_context(|| format!("parsing constraints `{arg}`"))?;
    c.check()?;
    Ok(c)
}

/// Per-layer summary lines followed by the network totals.
fn design_report(d: &DesignPoint, flat: bool) -> String {
    let mut out = String::new();
    if flat {
        let _ = writeln!(out, "arch={}", d.arch.name);
        let _ = writeln!(out, "objective={}", d.objective);
        for l in &d.layers {
            let _ = writeln!(out, "layer.{}.dataflow={}", l.name, l.schedule.dataflow);
            let _ = writeln!(out, "layer.{}.resident={}", l.name, l.resident);
            out.push_str(&l.report.to_flat(&format!("layer.{}.", l.name)));
        }
        out.push_str(&d.total.to_flat("total."));
        return out;
    }
    let _ = writeln!(out, "arch {} ({}x{} PEs, {} B on chip)", d.arch.name, d.arch.rows, d.arch.cols, d.arch.on_chip_bytes());
    let _ = writeln!(
        out,
        "{:<12} {:<10} {:>16} {:>8} {:>14} {:>9}",
        "layer", "dataflow", "energy_pJ", "util", "runtime", "resident"
    );
    for l in &d.layers {
        let _ = writeln!(
            out,
            "{:<12} {:<10} {:>16.3} {:>8.4} {:>14} {:>9}",
            l.name,
            l.schedule.dataflow.to_string(),
            l.report.total_energy,
            l.report.utilization,
            l.report.runtime,
            if l.resident { "yes" } else { "no" }
        );
    }
    out.push('\n');
    out.push_str(&d.total.to_table());
    out
}

fn write_design(d: &DesignPoint, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let files = [
        ("arch.txt", d.arch.to_text()),
        ("schedules.txt", d.schedules_text()),
        ("report.txt", design_report(d, false)),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn evaluate(a: &EvaluateArgs, flat: bool) -> anyhow::Result<Outcome> {
    let net = load_network(&a.network)?;
    let arch = load_arch(&a.arch)?;
    let objective: Objective = a.objective.parse()?;
    let design = match &a.schedules {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let schedules = parse_schedules(&text).with_context(|| format!("parsing {}", path.display()))?;
            let layers = match_schedules(&net, schedules)?;
            let mut bad = String::new();
            for (name, layer, s) in &layers {
                if let Err(v) = validate_schedule(layer, s, &arch) {
                    for v in v {
                        let _ = writeln!(bad, "layer {name}: {v}");
                    }
                }
            }
            if !bad.is_empty() {
                eprint!("{bad}");
                eprintln!("error: schedules do not validate against `{}`", arch.name);
                return Ok(Outcome { code: EXIT_INVALID });
            }
            assemble_design(&arch, layers, objective)?
        }
        None => {
            let set: DataflowSet = a.dataflow.parse()?;
            let opts = SearchOptions {
                objective,
                ..Default::default()
            };
            best_design(&net, &arch, &set, &opts)?
        }
    };
    print!("{}", design_report(&design, flat));
    if let Some(dir) = &a.out {
        write_design(&design, dir)?;
    }
    Ok(Outcome::ok())
}

/// Named sections go to the layer of that name; unnamed ones are taken in
/// layer order.
fn match_schedules(
    net: &Network,
    schedules: Vec<(Option<String>, Schedule)>,
) -> anyhow::Result<Vec<(String, dnn_dse::workload::LayerShape, Schedule)>> {
    let mut unnamed = Vec::new();
    let mut named = std::collections::HashMap::new();
    for (name, s) in schedules {
        match name {
            Some(n) => {
                if net.layer(&n).is_none() {
                    bail!("schedule for unknown layer `{n}`");
                }
                if named.insert(n.clone(), s).is_some() {
                    bail!("two schedules for layer `{n}`");
                }
            }
            None => unnamed.push(s),
        }
    }
    let mut unnamed = unnamed.into_iter();
    net.layers
        .iter()
        .map(|l| {
            let s = named
                .remove(&l.name)
                .or_else(|| unnamed.next())
                .ok_or_else(|| anyhow!("no schedule for layer `{}`", l.name))?;
            Ok((l.name.clone(), l.shape, s))
        })
        .collect()
}

fn search(a: &SearchArgs, flat: bool) -> anyhow::Result<Outcome> {
    let net = load_network(&a.network)?;
    let c = load_constraints(&a.constraints)?;
    let d = pruned_search(&net, &c)?;
    print!("{}", design_report(&d, flat));
    write_design(&d, &a.out)?;
    Ok(Outcome::ok())
}

fn sweep(a: &SweepArgs, flat: bool) -> anyhow::Result<Outcome> {
    let net = load_network(&a.network)?;
    let c = load_constraints(&a.constraints)?;
    let arrays = a
        .arrays
        .iter()
        .map(|s| parse_array(s.trim()))
        .collect::<dnn_dse::Result<Vec<_>>>()?;
    let points = sweep_pe_array(&net, &arrays, &c)?;
    let mut out = String::new();
    if !flat {
        let _ = writeln!(out, "{:<8} {:>6} {:<28} {:>12} {:>16}", "array", "PEs", "arch", "on_chip_B", "energy_pJ");
    }
    for ((r, cc), d) in &points {
        let key = format!("{r}x{cc}");
        if flat {
            let _ = writeln!(out, "sweep.{key}.arch={}", d.arch.name);
            for (i, size) in d.arch.aggregate_on_chip_sizes().iter().enumerate() {
                let _ = writeln!(out, "sweep.{key}.level{i}.bytes={size}");
            }
            let _ = writeln!(out, "sweep.{key}.energy_pj={}", d.total.total_energy);
        } else {
            let _ = writeln!(
                out,
                "{:<8} {:>6} {:<28} {:>12} {:>16.3}",
                key,
                r * cc,
                d.arch.name,
                d.arch.on_chip_bytes(),
                d.total.total_energy
            );
        }
        write_design(d, &a.out.join(&key))?;
    }
    print!("{out}");
    Ok(Outcome::ok())
}

fn validate(a: &ValidateArgs, flat: bool) -> anyhow::Result<Outcome> {
    let net = load_network(&a.network)?;
    let arch = load_arch(&a.arch)?;
    let opts = ModelOptions {
        halo_adjust: a.halo_adjust,
    };
    let mut failed = 0;
    let mut out = String::new();
    for (i, l) in net.layers.iter().enumerate() {
        let r = validate_layer_with(&l.shape, &arch, a.trials, a.seed.wrapping_add(i as u64), &opts)?;
        let status = if r.passed() { "pass" } else { "FAIL" };
        if flat {
            let _ = writeln!(out, "layer.{}.trials={}", l.name, r.trials);
            let _ = writeln!(out, "layer.{}.max_deviation={}", l.name, r.max_deviation);
            let _ = writeln!(out, "layer.{}.functional_failures={}", l.name, r.functional_failures);
            let _ = writeln!(out, "layer.{}.shrunk={}", l.name, r.shrunk_from.is_some());
            let _ = writeln!(out, "layer.{}.status={status}", l.name);
        } else {
            let shrunk = match r.shrunk_from {
                Some(_) => format!(" (simulated as {:?})", r.layer.bounds()),
                None => String::new(),
            };
            let _ = writeln!(
                out,
                "{:<12} {status}: {} trials, max deviation {}, functional failures {}{shrunk}",
                l.name, r.trials, r.max_deviation, r.functional_failures
            );
        }
        if let Some(d) = &r.first_divergence {
            let _ = writeln!(out, "  first divergence: {d}");
        }
        if !r.passed() {
            failed += 1;
        }
    }
    if flat {
        let _ = writeln!(out, "failed_layers={failed}");
    } else {
        let _ = writeln!(out, "{} of {} layers passed", net.layers.len() - failed, net.layers.len());
    }
    print!("{out}");
    Ok(Outcome {
        code: if failed == 0 { 0 } else { EXIT_INVALID },
    })
}

fn one_line(s: &Schedule) -> String {
    s.to_text().lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

fn enumerate(a: &EnumerateArgs, flat: bool) -> anyhow::Result<Outcome> {
    let net = load_network(&a.network)?;
    let arch = load_arch(&a.arch)?;
    let layers: Vec<_> = net
        .layers
        .iter()
        .filter(|l| a.layer.as_ref().is_none_or(|n| *n == l.name))
        .collect();
    if layers.is_empty() {
        bail!("no layer named `{}`", a.layer.as_deref().unwrap_or_default());
    }
    let mut out = String::new();
    for l in layers {
        let items: Vec<String> = if a.dataflows {
            enumerate_dataflows(&l.shape, arch.rows, arch.cols, a.replicate)
                .iter()
                .map(|d| {
                    let factors = d.entries().map(|(l, f)| format!("{l}:{f}")).collect::<Vec<_>>().join(",");
                    format!("{d} {factors}")
                })
                .collect()
        } else {
            let df = match a.dataflow.as_str() {
                "none" => Dataflow::default(),
                s => match s.parse::<DataflowSet>()? {
                    DataflowSet::Fixed(df) => {
                        dnn_dse::schedule::replication_factors(&df, &l.shape, arch.rows, arch.cols)
                    }
                    _ => bail!("--blockings needs a single dataflow such as C|K"),
                },
            };
            enumerate_blockings(&l.shape, &df, &arch).take(a.limit).map(|s| one_line(&s)).collect()
        };
        let kind = if a.dataflows { "dataflow" } else { "blocking" };
        if flat {
            for it in &items {
                let _ = writeln!(out, "{}.{kind}={it}", l.name);
            }
            let _ = writeln!(out, "{}.{kind}s={}", l.name, items.len());
        } else {
            let _ = writeln!(out, "layer {}: {} {kind}s", l.name, items.len());
            for it in &items {
                let _ = writeln!(out, "  {it}");
            }
        }
    }
    print!("{out}");
    Ok(Outcome::ok())
}

fn report(a: &ReportArgs, flat: bool) -> anyhow::Result<Outcome> {
    let names: Vec<String> = if a.networks.is_empty() {
        bundled::BENCHMARKS.iter().map(|s| s.to_string()).collect()
    } else {
        a.networks.clone()
    };
    let baseline = load_arch(&a.baseline)?;
    let c = load_constraints(&a.constraints)?;
    let mut out = String::new();
    if !flat {
        let _ = writeln!(
            out,
            "{:<12} {:>16} {:>16} {:>8}  {}",
            "network", "baseline_pJ", "searched_pJ", "factor", "searched arch"
        );
    }
    for name in &names {
        let net = load_network(name)?;
        let base = best_design(&net, &baseline, &DataflowSet::PrimaryPair, &c.options())?;
        let best = pruned_search(&net, &c)?;
        let factor = improvement(&base.total, &best.total);
        if flat {
            let _ = writeln!(out, "{}.baseline_pj={}", net.name, base.total.total_energy);
            let _ = writeln!(out, "{}.searched_pj={}", net.name, best.total.total_energy);
            let _ = writeln!(out, "{}.arch={}", net.name, best.arch.name);
            let _ = writeln!(out, "{}.improvement={factor}", net.name);
        } else {
            let _ = writeln!(
                out,
                "{:<12} {:>16.4e} {:>16.4e} {:>8.3}  {}",
                net.name, base.total.total_energy, best.total.total_energy, factor, best.arch.name
            );
        }
    }
    print!("{out}");
    Ok(Outcome::ok())
}

fn improvement(baseline: &CostReport, searched: &CostReport) -> f64 {
    baseline.total_energy / searched.total_energy
}
