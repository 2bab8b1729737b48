//! Design-space search.
//!
//! [`exhaustive_search`] finds the best blocking of one layer on a fixed
//! architecture. [`pruned_search`] picks a shared architecture for a whole
//! network: it fixes the C|K dataflow, keeps only memory hierarchies whose
//! adjacent on-chip sizes grow by a bounded ratio, and runs the exhaustive
//! blocking search per layer on each surviving candidate. [`full_search`]
//! drops both rules and serves as ground truth on small inputs.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::archmodel::{validate_arch, ArchSpec, EnergyTable, MemKind, MemLevel, WORD_BYTES};
use crate::costmodel::{
    report_from_counts, utilization, AccessCounts, CostReport, CountModel, ModelOptions, Pricing,
};
use crate::error::{Error, Result};
use crate::schedule::{
    enumerate_dataflows, level_orders, split_counts, validate_schedule, BlockingLevel, Dataflow,
    Schedule,
};
use crate::text;
use crate::workload::{footprint_of, LayerShape, LoopId, Network, Tensor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Objective {
    #[default]
    Energy,
    EnergyDelayProduct,
}

impl Objective {
    pub fn value(self, energy: f64, runtime: u64) -> f64 {
        match self {
            Objective::Energy => energy,
            Objective::EnergyDelayProduct => energy * runtime as f64,
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Objective> {
        match s.to_ascii_lowercase().as_str() {
            "energy" => Ok(Objective::Energy),
            "edp" | "energy-delay" => Ok(Objective::EnergyDelayProduct),
            _ => Err(Error::Syntax(format!("unknown objective `{s}`, expected energy or edp"))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Energy => "energy",
            Objective::EnergyDelayProduct => "edp",
        })
    }
}

/// Upper bound on per-loop factor splits a single blocking search may visit.
pub const DEFAULT_BUDGET: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub objective: Objective,
    pub budget: u64,
    /// Dataflows below this utilization are not considered.
    pub min_utilization: Option<f64>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            objective: Objective::Energy,
            budget: DEFAULT_BUDGET,
            min_utilization: None,
        }
    }
}

/// Lexicographic rank of a candidate. The schedule text is only built when
/// everything before it ties.
#[derive(Debug, Clone, PartialEq)]
struct Score {
    objective: f64,
    energy: f64,
    runtime: u64,
}

impl Score {
    fn cmp(&self, other: &Score) -> Ordering {
        self.objective
            .total_cmp(&other.objective)
            .then(self.energy.total_cmp(&other.energy))
            .then(self.runtime.cmp(&other.runtime))
    }
}

struct Best {
    score: Score,
    schedule: Schedule,
    text: String,
}

impl Best {
    fn offer(slot: &mut Option<Best>, score: Score, make: impl FnOnce() -> Schedule) {
        let ord = match slot {
            None => Ordering::Less,
            Some(b) => score.cmp(&b.score),
        };
        match ord {
            Ordering::Greater => {}
            Ordering::Less => {
                let schedule = make();
                let text = schedule.to_text();
                *slot = Some(Best { score, schedule, text });
            }
            Ordering::Equal => {
                let schedule = make();
                let text = schedule.to_text();
                if slot.as_ref().is_some_and(|b| text < b.text) {
                    *slot = Some(Best { score, schedule, text });
                }
            }
        }
    }

    fn merge(a: Option<Best>, b: Option<Best>) -> Option<Best> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => match a.score.cmp(&b.score).then_with(|| a.text.cmp(&b.text)) {
                Ordering::Greater => Some(b),
                _ => Some(a),
            },
        }
    }
}

fn divisors(n: u64) -> Vec<u64> {
    (1..=n).filter(|d| n % d == 0).collect()
}

/// Walks every divisor blocking of one layer and dataflow whose tiles fit
/// the on-chip levels, with every representative loop order above level 0,
/// and hands each one's access counts to `visit`.
trait Visitor {
    /// Whether any order of a blocking can matter; false skips its orders.
    fn promising(&mut self, _model: &CountModel, _factors: &[[u64; 7]]) -> bool {
        true
    }

    /// Whether any blocking that starts with the `prefix` levels and splits
    /// `left` over the rest can matter; false skips them all.
    fn promising_prefix(&mut self, _model: &CountModel, _prefix: &[[u64; 7]], _left: &[u64; 7]) -> bool {
        true
    }

    fn visit(&mut self, factors: &[[u64; 7]], orders: &[&[LoopId]], counts: &AccessCounts);
}

struct Walker<'a> {
    arch: &'a ArchSpec,
    model: CountModel,
    spatial: [u64; 7],
    caps: Vec<Option<u64>>,
    per_pe: Vec<bool>,
    factors: Vec<[u64; 7]>,
    left: [u64; 7],
    counts: AccessCounts,
    /// Level that must take every remaining factor, leaving the top level
    /// with none.
    absorb: Option<usize>,
}

impl<'a> Walker<'a> {
    fn new(layer: &LayerShape, arch: &'a ArchSpec, dataflow: &Dataflow) -> Walker<'a> {
        let nl = arch.num_storage_levels();
        let p = arch.pe_level();
        let spatial = dataflow.factors().map(|s| s.max(1));
        Walker {
            arch,
            model: CountModel::new(dataflow, arch, ModelOptions::default()),
            spatial,
            caps: (0..nl).map(|i| arch.tile_capacity_bytes(i)).collect(),
            per_pe: (0..nl).map(|i| p.is_some_and(|p| i <= p)).collect(),
            factors: vec![[1; 7]; nl],
            left: LoopId::ALL.map(|l| layer.bound(l).div_ceil(spatial[l.index()])),
            counts: AccessCounts::new(nl),
            absorb: None,
        }
    }

    /// Only blockings whose top level has no factors, so the level below
    /// holds the whole layer.
    fn resident_only(mut self) -> Self {
        self.absorb = self.factors.len().checked_sub(2);
        self
    }

    fn fits(&self, i: usize) -> bool {
        let Some(cap) = self.caps[i] else { return true };
        let mut e = [1u64; 7];
        for f in &self.factors[..=i] {
            for l in 0..7 {
                e[l] *= f[l];
            }
        }
        if !self.per_pe[i] {
            for l in 0..7 {
                e[l] *= self.spatial[l];
            }
        }
        Tensor::ALL.iter().map(|&t| footprint_of(&e, t) * WORD_BYTES).sum::<u64>() <= cap
    }

    fn run(&mut self, visit: &mut dyn Visitor) {
        if self.arch.num_storage_levels() == 0 {
            return;
        }
        self.level(0, visit);
    }

    fn level(&mut self, i: usize, visit: &mut dyn Visitor) {
        let nl = self.factors.len();
        if i == nl - 1 {
            self.factors[i] = self.left;
            if self.fits(i) {
                self.orders(visit);
            }
            self.factors[i] = [1; 7];
            return;
        }
        if !self.fits(i) {
            return;
        }
        if i > 0 && !visit.promising_prefix(&self.model, &self.factors[..i], &self.left) {
            return;
        }
        self.pick(i, 0, visit);
    }

    fn pick(&mut self, i: usize, l: usize, visit: &mut dyn Visitor) {
        if l == 7 {
            self.level(i + 1, visit);
            return;
        }
        let n = self.left[l];
        // Largest factors first: big tiles tend to be cheap, and an early
        // cheap incumbent lets the bounds prune more.
        let mut fitting = false;
        let ds = if self.absorb == Some(i) { vec![n] } else { divisors(n) };
        for d in ds.into_iter().rev() {
            self.factors[i][l] = d;
            // Tiles only shrink with the factor.
            if !fitting {
                if d > 1 && !self.fits(i) {
                    continue;
                }
                fitting = true;
            }
            self.left[l] = n / d;
            self.pick(i, l + 1, visit);
        }
        self.left[l] = n;
        self.factors[i][l] = 1;
    }

    fn orders(&mut self, visit: &mut dyn Visitor) {
        let nl = self.factors.len();
        if !visit.promising(&self.model, &self.factors) {
            return;
        }
        let choices: Vec<Vec<Vec<LoopId>>> = self
            .factors
            .iter()
            .enumerate()
            .map(|(i, f)| {
                if i == 0 {
                    vec![LoopId::ALL.into_iter().filter(|l| f[l.index()] > 1).collect()]
                } else {
                    level_orders(f)
                }
            })
            .collect();
        let mut pick = vec![0usize; nl];
        loop {
            let orders: Vec<&[LoopId]> = (0..nl).map(|i| choices[i][pick[i]].as_slice()).collect();
            self.model.fill(&self.factors, &orders, &mut self.counts);
            visit.visit(&self.factors, &orders, &self.counts);
            let mut k = 0;
            while k < nl {
                pick[k] += 1;
                if pick[k] < choices[k].len() {
                    break;
                }
                pick[k] = 0;
                k += 1;
            }
            if k == nl {
                return;
            }
        }
    }
}

fn build_schedule(dataflow: &Dataflow, factors: &[[u64; 7]], orders: &[&[LoopId]]) -> Schedule {
    Schedule::new(
        dataflow.clone(),
        factors
            .iter()
            .zip(orders)
            .map(|(f, o)| BlockingLevel::new(*f, o.to_vec()))
            .collect(),
    )
}

/// Calls `visit` with the `(energy, runtime)` of every blocking of `layer`
/// under `dataflow`: the same blockings [`exhaustive_search`] ranks.
pub fn for_each_blocking(
    layer: &LayerShape,
    arch: &ArchSpec,
    dataflow: &Dataflow,
    visit: impl FnMut(f64, u64),
) {
    struct Each<F> {
        pricing: Pricing,
        f: F,
    }
    impl<F: FnMut(f64, u64)> Visitor for Each<F> {
        fn visit(&mut self, factors: &[[u64; 7]], _: &[&[LoopId]], counts: &AccessCounts) {
            let steps = factors.iter().flatten().product();
            (self.f)(self.pricing.energy(counts), self.pricing.runtime(counts, steps).0);
        }
    }
    let mut each = Each {
        pricing: Pricing::new(arch, dataflow.pe_count()),
        f: visit,
    };
    Walker::new(layer, arch, dataflow).run(&mut each);
}

struct Search<'a> {
    dataflow: &'a Dataflow,
    steps: u64,
    pricing: Pricing,
    objective: Objective,
    best: Option<Best>,
}

impl Search<'_> {
    fn score(&self, factors: &[[u64; 7]], counts: &AccessCounts) -> Score {
        let steps = factors.iter().flatten().product();
        let energy = self.pricing.energy(counts);
        let runtime = self.pricing.runtime(counts, steps).0;
        Score {
            objective: self.objective.value(energy, runtime),
            energy,
            runtime,
        }
    }
}

impl Search<'_> {
    /// Whether an energy bound can still reach the incumbent. Runtime is at
    /// least the compute steps, which every blocking shares. The margin
    /// absorbs rounding differences between a bound and the exact sum.
    fn within(&self, energy_bound: f64) -> bool {
        let Some(best) = &self.best else { return true };
        let bound = self.objective.value(energy_bound, self.steps);
        bound <= best.score.objective * (1.0 + 1e-9)
    }
}

impl Visitor for Search<'_> {
    fn promising(&mut self, model: &CountModel, factors: &[[u64; 7]]) -> bool {
        self.within(model.energy_lower_bound(factors, &self.pricing))
    }

    fn promising_prefix(&mut self, model: &CountModel, prefix: &[[u64; 7]], left: &[u64; 7]) -> bool {
        self.within(model.partial_lower_bound(prefix, left, &self.pricing))
    }

    fn visit(&mut self, factors: &[[u64; 7]], orders: &[&[LoopId]], counts: &AccessCounts) {
        let score = self.score(factors, counts);
        let df = self.dataflow;
        Best::offer(&mut self.best, score, || build_schedule(df, factors, orders));
    }
}

fn best_blocking(
    layer: &LayerShape,
    arch: &ArchSpec,
    dataflow: &Dataflow,
    objective: Objective,
    resident: bool,
) -> Option<Best> {
    let steps = LoopId::ALL
        .iter()
        .map(|&l| layer.bound(l).div_ceil(dataflow.factor(l).max(1)))
        .product();
    let mut search = Search {
        dataflow,
        steps,
        pricing: Pricing::new(arch, dataflow.pe_count()),
        objective,
        best: None,
    };
    let walker = Walker::new(layer, arch, dataflow);
    let mut walker = if resident { walker.resident_only() } else { walker };
    walker.run(&mut search);
    search.best
}

/// Every dataflow of `layer` on `arch`, replication included, or the empty
/// dataflow when the architecture has no PE array levels.
pub fn all_dataflows(layer: &LayerShape, arch: &ArchSpec) -> Vec<Dataflow> {
    if arch.pe_level().is_none() {
        return vec![Dataflow::default()];
    }
    enumerate_dataflows(layer, arch.rows, arch.cols, true)
}

/// The C|K dataflow and its replicated variants: input and output channels
/// spread over the two array dimensions, with spare PEs filled by a second
/// loop per dimension. On a one-dimensional array either channel loop
/// qualifies.
pub fn ck_dataflows(layer: &LayerShape, arch: &ArchSpec) -> Vec<Dataflow> {
    if arch.pe_level().is_none() {
        return vec![Dataflow::default()];
    }
    let is_ck = |df: &Dataflow| {
        let mut primary: Vec<LoopId> = [&df.vertical, &df.horizontal]
            .iter()
            .filter_map(|d| d.first().map(|e| e.0))
            .collect();
        primary.sort();
        match primary.as_slice() {
            [a, b] => (*a, *b) == (LoopId::K, LoopId::C),
            [a] => matches!(a, LoopId::C | LoopId::K),
            _ => false,
        }
    };
    let out: Vec<Dataflow> = enumerate_dataflows(layer, arch.rows, arch.cols, true)
        .into_iter()
        .filter(|df| is_ck(df))
        .collect();
    if out.is_empty() {
        all_dataflows(layer, arch)
    } else {
        out
    }
}

/// Minimum-energy schedule of `layer` on `arch` over the given dataflows
/// and all their divisor blockings.
pub fn exhaustive_search(
    layer: &LayerShape,
    arch: &ArchSpec,
    dataflows: &[Dataflow],
) -> Result<(Schedule, CostReport)> {
    exhaustive_search_with(layer, arch, dataflows, &SearchOptions::default())
}

pub fn exhaustive_search_with(
    layer: &LayerShape,
    arch: &ArchSpec,
    dataflows: &[Dataflow],
    opts: &SearchOptions,
) -> Result<(Schedule, CostReport)> {
    search_layer(layer, arch, dataflows, opts, false)
}

/// With `resident`, only blockings that hold the whole layer in the level
/// below the top are searched.
fn search_layer(
    layer: &LayerShape,
    arch: &ArchSpec,
    dataflows: &[Dataflow],
    opts: &SearchOptions,
    resident: bool,
) -> Result<(Schedule, CostReport)> {
    validate_arch(arch).map_err(Error::InvalidArch)?;
    let nl = arch.num_storage_levels();
    let candidates: Vec<&Dataflow> = dataflows
        .iter()
        .filter(|df| {
            opts.min_utilization
                .is_none_or(|u| utilization(layer, df, arch.rows, arch.cols) >= u)
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoSolution(match opts.min_utilization {
            Some(u) if !dataflows.is_empty() => {
                format!("no dataflow reaches the utilization floor {u}")
            }
            _ => "no dataflow to search".into(),
        }));
    }
    let size: u64 = candidates
        .iter()
        .map(|df| split_counts(layer, df, nl))
        .fold(0u64, |a, b| a.saturating_add(b));
    if size > opts.budget {
        return Err(Error::BudgetExceeded { size, budget: opts.budget });
    }
    let best = candidates
        .par_iter()
        .map(|df| best_blocking(layer, arch, df, opts.objective, resident))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(None, Best::merge);
    let Some(best) = best else {
        return Err(Error::NoSolution(format!(
            "no blocking fits the on-chip levels of `{}`",
            arch.name
        )));
    };
    let report = report_from_counts(
        layer,
        &best.schedule,
        arch,
        crate::costmodel::access_counts(layer, &best.schedule, arch),
    );
    Ok((best.schedule, report))
}

/// Candidate architectures and search settings for a network-level search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConstraints {
    pub name: String,
    /// Candidate `(rows, cols)` PE arrays.
    pub arrays: Vec<(u64, u64)>,
    /// Candidate per-PE sizes of the innermost RF.
    pub rf_sizes: Vec<u64>,
    /// Candidate per-PE sizes of a second RF level; `None` means no second level.
    pub rf2_sizes: Vec<Option<u64>>,
    pub sram_sizes: Vec<u64>,
    pub interpe: bool,
    /// Per-cycle bandwidth of RF (per PE), SRAM and DRAM.
    pub bandwidth: [f64; 3],
    /// Fixed dataflow; `None` means C|K with replication.
    pub dataflow: Option<Dataflow>,
    pub objective: Objective,
    pub min_utilization: Option<f64>,
    /// Allowed growth between adjacent on-chip levels, by aggregate size.
    pub ratio: (u64, u64),
    pub budget: u64,
    pub energy: EnergyTable,
}

impl Default for SearchConstraints {
    fn default() -> Self {
        SearchConstraints {
            name: "constraints".into(),
            arrays: vec![(16, 16)],
            rf_sizes: vec![16, 32, 64, 128, 256, 512],
            rf2_sizes: vec![None],
            sram_sizes: [32, 64, 128, 256, 512].map(|k| k * 1024).to_vec(),
            interpe: true,
            bandwidth: [8.0, 64.0, 16.0],
            dataflow: None,
            objective: Objective::Energy,
            min_utilization: None,
            ratio: (4, 16),
            budget: DEFAULT_BUDGET,
            energy: EnergyTable::default(),
        }
    }
}

/// `16x16` style array dimensions.
pub fn parse_array(tok: &str) -> Result<(u64, u64)> {
    let (r, c) = tok
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Syntax(format!("expected an array like 16x16, found `{tok}`")))?;
    let r = text::parse_int("array", r)?;
    let c = text::parse_int("array", c)?;
    if r < 1 || c < 1 {
        return Err(Error::Syntax(format!("array dimensions must be at least 1 in `{tok}`")));
    }
    Ok((r as u64, c as u64))
}

fn parse_dataflow(tok: &str) -> Result<Dataflow> {
    let (v, h) = tok
        .split_once('|')
        .ok_or_else(|| Error::Syntax(format!("expected a dataflow like C|K, found `{tok}`")))?;
    let dim = |s: &str| -> Result<Vec<(LoopId, u64)>> {
        let mut out = Vec::new();
        let mut rest = s;
        while !rest.is_empty() {
            let take = if rest.starts_with("FX") || rest.starts_with("FY") { 2 } else { 1 };
            let name = rest.get(..take).ok_or_else(|| Error::Syntax(format!("bad dataflow `{tok}`")))?;
            out.push((name.parse::<LoopId>()?, 0));
            rest = &rest[take..];
        }
        Ok(out)
    };
    Ok(Dataflow::new(dim(v)?, dim(h)?))
}

impl SearchConstraints {
    /// Parses the constraints format: one record per line, e.g.
    ///
    /// ```text
    /// name mobile
    /// array 16x16
    /// rf 16 32 64 128 256 512
    /// rf2 none 128 256
    /// sram 64K 128K 256K
    /// interpe on
    /// bandwidth rf=8 sram=64 dram=16
    /// objective energy
    /// ```
    ///
    /// Optional records: `dataflow C|K`, `min_util 0.5`, `ratio 4 16`,
    /// `budget N`, and `energy`/`table` records that override the energy
    /// table.
    pub fn parse(input: &str, default_name: &str) -> Result<SearchConstraints> {
        let mut c = SearchConstraints {
            name: default_name.to_string(),
            ..Default::default()
        };
        let mut energy_lines = String::new();
        for (line, tokens) in text::records(input) {
            let args = &tokens[1..];
            let r: Result<()> = (|| {
                let one = || -> Result<&str> {
                    match args {
                        [v] => Ok(v),
                        _ => Err(Error::Syntax(format!("`{}` expects one value", tokens[0]))),
                    }
                };
                match tokens[0] {
                    "name" => c.name = one()?.to_string(),
                    "array" => c.arrays = args.iter().map(|t| parse_array(t)).collect::<Result<_>>()?,
                    "rf" => c.rf_sizes = args.iter().map(|t| text::parse_bytes("rf", t)).collect::<Result<_>>()?,
                    "rf2" => {
                        c.rf2_sizes = args
                            .iter()
                            .map(|t| match *t {
                                "none" => Ok(None),
                                _ => text::parse_bytes("rf2", t).map(Some),
                            })
                            .collect::<Result<_>>()?
                    }
                    "sram" => {
                        c.sram_sizes = args.iter().map(|t| text::parse_bytes("sram", t)).collect::<Result<_>>()?
                    }
                    "interpe" => {
                        c.interpe = match one()? {
                            "on" | "yes" | "true" => true,
                            "off" | "no" | "false" => false,
                            v => return Err(Error::Syntax(format!("`interpe` expects on or off, found `{v}`"))),
                        }
                    }
                    "bandwidth" => {
                        for tok in args {
                            let (k, v) = text::key_value(tok)?;
                            let slot = match k {
                                "rf" => 0,
                                "sram" => 1,
                                "dram" => 2,
                                _ => return Err(Error::Syntax(format!("unknown bandwidth key `{k}`"))),
                            };
                            c.bandwidth[slot] = text::parse_f64(k, v)?;
                        }
                    }
                    "dataflow" => c.dataflow = Some(parse_dataflow(one()?)?),
                    "objective" => c.objective = one()?.parse()?,
                    "min_util" => c.min_utilization = Some(text::parse_f64("min_util", one()?)?),
                    "ratio" => match args {
                        [lo, hi] => {
                            let lo = text::parse_int("ratio", lo)?;
                            let hi = text::parse_int("ratio", hi)?;
                            if lo < 1 || hi < lo {
                                return Err(Error::Syntax("`ratio` expects 1 <= low <= high".into()));
                            }
                            c.ratio = (lo as u64, hi as u64);
                        }
                        _ => return Err(Error::Syntax("`ratio` expects two values".into())),
                    },
                    "budget" => {
                        let b = text::parse_int("budget", one()?)?;
                        if b < 1 {
                            return Err(Error::Syntax("`budget` must be positive".into()));
                        }
                        c.budget = b as u64;
                    }
                    "energy" | "table" => {
                        energy_lines.push_str(&tokens.join(" "));
                        energy_lines.push('\n');
                    }
                    other => return Err(Error::Syntax(format!("unknown record `{other}`"))),
                }
                Ok(())
            })();
            r.map_err(|e| e.at_line(line))?;
        }
        if !energy_lines.is_empty() {
            let mut table = EnergyTable::default().to_text();
            table.push_str(&energy_lines);
            c.energy = EnergyTable::parse(&table)?;
        }
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        let empty = [
            ("array", self.arrays.is_empty()),
            ("rf", self.rf_sizes.is_empty()),
            ("rf2", self.rf2_sizes.is_empty()),
            ("sram", self.sram_sizes.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|e| e.1) {
            return Err(Error::Syntax(format!("candidate set `{name}` is empty")));
        }
        if let Some(&s) = self
            .rf_sizes
            .iter()
            .chain(self.rf2_sizes.iter().flatten())
            .chain(&self.sram_sizes)
            .find(|&&s| s == 0)
        {
            return Err(Error::NonPositiveSize(s));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let sizes = |v: &[u64]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = format!("name {}\n", self.name);
        let arrays: Vec<String> = self.arrays.iter().map(|(r, c)| format!("{r}x{c}")).collect();
        out.push_str(&format!("array {}\n", arrays.join(" ")));
        out.push_str(&format!("rf {}\n", sizes(&self.rf_sizes)));
        let rf2: Vec<String> = self
            .rf2_sizes
            .iter()
            .map(|s| s.map_or("none".to_string(), |s| s.to_string()))
            .collect();
        out.push_str(&format!("rf2 {}\n", rf2.join(" ")));
        out.push_str(&format!("sram {}\n", sizes(&self.sram_sizes)));
        out.push_str(&format!("interpe {}\n", if self.interpe { "on" } else { "off" }));
        let [rf, sram, dram] = self.bandwidth.map(text::fmt_f64);
        out.push_str(&format!("bandwidth rf={rf} sram={sram} dram={dram}\n"));
        if let Some(df) = &self.dataflow {
            out.push_str(&format!("dataflow {df}\n"));
        }
        out.push_str(&format!("objective {}\n", self.objective));
        if let Some(u) = self.min_utilization {
            out.push_str(&format!("min_util {}\n", text::fmt_f64(u)));
        }
        out.push_str(&format!("ratio {} {}\n", self.ratio.0, self.ratio.1));
        out.push_str(&format!("budget {}\n", self.budget));
        out.push_str(&self.energy.to_text());
        out
    }

    pub fn options(&self) -> SearchOptions {
        SearchOptions {
            objective: self.objective,
            budget: self.budget,
            min_utilization: self.min_utilization,
        }
    }

    /// Every architecture the candidate sets describe, in a fixed order.
    pub fn candidate_archs(&self) -> Vec<ArchSpec> {
        let [rf_bw, sram_bw, dram_bw] = self.bandwidth;
        let mut out = Vec::new();
        for &(rows, cols) in &self.arrays {
            for &rf in &self.rf_sizes {
                for &rf2 in &self.rf2_sizes {
                    for &sram in &self.sram_sizes {
                        let mut levels = vec![MemLevel::rf(rf, rf_bw)];
                        let mut name = format!("{rows}x{cols}-rf{}", size_label(rf));
                        if let Some(rf2) = rf2 {
                            levels.push(MemLevel::rf(rf2, rf_bw));
                            name.push_str(&format!("-rf{}", size_label(rf2)));
                        }
                        if self.interpe && rows * cols > 1 {
                            levels.push(MemLevel::interpe());
                        }
                        levels.push(MemLevel::sram(sram, sram_bw));
                        levels.push(MemLevel::dram(dram_bw));
                        name.push_str(&format!("-sram{}", size_label(sram)));
                        let mut arch = ArchSpec::new(name, rows, cols, levels);
                        arch.energy = self.energy.clone();
                        out.push(arch);
                    }
                }
            }
        }
        out
    }
}

fn size_label(bytes: u64) -> String {
    if bytes >= 1024 * 1024 && bytes % (1024 * 1024) == 0 {
        format!("{}M", bytes / (1024 * 1024))
    } else if bytes >= 1024 && bytes % 1024 == 0 {
        format!("{}K", bytes / 1024)
    } else {
        bytes.to_string()
    }
}

/// Ratios between adjacent on-chip levels by aggregate size (RF sizes are
/// multiplied by the PE count), innermost pair first.
pub fn adjacent_ratios(arch: &ArchSpec) -> Vec<f64> {
    arch.aggregate_on_chip_sizes()
        .windows(2)
        .map(|w| w[1] as f64 / w[0] as f64)
        .collect()
}

/// Whether every adjacent on-chip ratio lies in `[lo, hi]`.
pub fn ratios_within(arch: &ArchSpec, (lo, hi): (u64, u64)) -> bool {
    adjacent_ratios(arch)
        .iter()
        .all(|&r| r >= lo as f64 && r <= hi as f64)
}

/// Schedule and cost of one layer inside a design.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDesign {
    pub name: String,
    pub layer: LayerShape,
    pub schedule: Schedule,
    pub report: CostReport,
    /// The outermost on-chip buffer holds the whole layer.
    pub resident: bool,
}

/// A shared architecture with a schedule per layer and the network totals.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    pub arch: ArchSpec,
    pub layers: Vec<LayerDesign>,
    pub total: CostReport,
    pub objective: Objective,
}

impl DesignPoint {
    pub fn objective_value(&self) -> f64 {
        self.objective.value(self.total.total_energy, self.total.runtime)
    }

    /// All schedules as one file of `schedule <layer>` sections.
    pub fn schedules_text(&self) -> String {
        self.layers
            .iter()
            .map(|l| format!("schedule {}\n{}", l.name, l.schedule.to_text()))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn rank(&self, other: &DesignPoint) -> Ordering {
        self.objective_value()
            .total_cmp(&other.objective_value())
            .then(self.total.total_energy.total_cmp(&other.total.total_energy))
            .then(self.total.runtime.cmp(&other.total.runtime))
            .then(self.arch.on_chip_bytes().cmp(&other.arch.on_chip_bytes()))
            .then_with(|| self.schedules_text().cmp(&other.schedules_text()))
            .then_with(|| self.arch.to_text().cmp(&other.arch.to_text()))
    }
}

/// Whether the top-level factors are all one, so the level below DRAM holds
/// the entire layer.
fn fully_resident(schedule: &Schedule, arch: &ArchSpec) -> bool {
    let nl = schedule.levels.len();
    nl >= 2
        && arch.storage(nl - 1).kind == MemKind::DRAM
        && arch.storage(nl - 2).kind == MemKind::SRAM
        && schedule.levels[nl - 1].product() == 1
}

/// Builds a design from per-layer schedules. When two consecutive layers
/// are both fully resident in the outermost on-chip buffer, the earlier
/// layer's outputs stay on chip as the later layer's inputs: the output
/// write-back to DRAM and the input fetch from DRAM (with its buffer fill)
/// are dropped.
pub fn assemble_design(
    arch: &ArchSpec,
    layers: Vec<(String, LayerShape, Schedule)>,
    objective: Objective,
) -> Result<DesignPoint> {
    let nl = arch.num_storage_levels();
    let mut designs: Vec<LayerDesign> = Vec::with_capacity(layers.len());
    let mut counts: Vec<AccessCounts> = Vec::with_capacity(layers.len());
    for (name, layer, schedule) in layers {
        validate_schedule(&layer, &schedule, arch).map_err(Error::InvalidSchedule)?;
        counts.push(crate::costmodel::access_counts(&layer, &schedule, arch));
        let resident = fully_resident(&schedule, arch);
        designs.push(LayerDesign {
            name,
            layer,
            report: report_from_counts(&layer, &schedule, arch, AccessCounts::default()),
            schedule,
            resident,
        });
    }
    let (i, o) = (Tensor::I.index(), Tensor::O.index());
    for j in 1..designs.len() {
        if designs[j - 1].resident && designs[j].resident {
            counts[j - 1].levels[nl - 1].writes[o] = 0;
            let fetched = std::mem::take(&mut counts[j].levels[nl - 1].reads[i]);
            counts[j].levels[nl - 2].writes[i] -= fetched;
        }
    }
    for (d, c) in designs.iter_mut().zip(counts) {
        d.report = report_from_counts(&d.layer, &d.schedule, arch, c);
    }
    let total = CostReport::aggregate(designs.iter().map(|d| &d.report))
        .ok_or_else(|| Error::NoSolution("the network has no layers".into()))?;
    Ok(DesignPoint {
        arch: arch.clone(),
        layers: designs,
        total,
        objective,
    })
}

/// Whether `arch` has an SRAM directly below DRAM, so that a layer can be
/// held on chip between layers.
fn can_hold_layers(arch: &ArchSpec) -> bool {
    let nl = arch.num_storage_levels();
    nl >= 2 && arch.storage(nl - 1).kind == MemKind::DRAM && arch.storage(nl - 2).kind == MemKind::SRAM
}

/// A layer's best schedule, and its best fully resident one when that
/// differs, with what a resident neighbour would save.
struct LayerChoice {
    free: Option<(Schedule, f64)>,
    resident: Option<Resident>,
}

struct Resident {
    schedule: Schedule,
    energy: f64,
    /// Saved when the next layer is resident too: the output write-back.
    out_saving: f64,
    /// Saved when the previous layer is resident too: the input fetch.
    in_saving: f64,
}

impl Resident {
    fn new(layer: &LayerShape, schedule: Schedule, arch: &ArchSpec) -> Resident {
        let nl = arch.num_storage_levels();
        let counts = crate::costmodel::access_counts(layer, &schedule, arch);
        let cost = |c: AccessCounts| report_from_counts(layer, &schedule, arch, c).total_energy;
        let energy = cost(counts.clone());
        let mut no_out = counts.clone();
        no_out.levels[nl - 1].writes[Tensor::O.index()] = 0;
        let mut no_in = counts;
        let fetched = std::mem::take(&mut no_in.levels[nl - 1].reads[Tensor::I.index()]);
        no_in.levels[nl - 2].writes[Tensor::I.index()] -= fetched;
        Resident {
            out_saving: energy - cost(no_out),
            in_saving: energy - cost(no_in),
            energy,
            schedule,
        }
    }
}

fn layer_choice(
    layer: &LayerShape,
    arch: &ArchSpec,
    dataflows: &[Dataflow],
    opts: &SearchOptions,
) -> Result<LayerChoice> {
    let (free, report) = search_layer(layer, arch, dataflows, opts, false)?;
    if !can_hold_layers(arch) {
        return Ok(LayerChoice {
            free: Some((free, report.total_energy)),
            resident: None,
        });
    }
    if fully_resident(&free, arch) {
        return Ok(LayerChoice {
            free: None,
            resident: Some(Resident::new(layer, free, arch)),
        });
    }
    let resident = match search_layer(layer, arch, dataflows, opts, true) {
        Ok((s, _)) => Some(Resident::new(layer, s, arch)),
        Err(Error::NoSolution(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(LayerChoice {
        free: Some((free, report.total_energy)),
        resident,
    })
}

/// Per layer, the free or the resident schedule, whichever minimizes the
/// network energy once consecutive resident layers skip their DRAM round
/// trip. A two-state shortest path over the layer chain.
fn chain_schedules(choices: &[&LayerChoice]) -> Vec<Schedule> {
    const FREE: usize = 0;
    const HELD: usize = 1;
    let mut cost = [0.0, f64::INFINITY];
    let mut from: Vec<[usize; 2]> = Vec::with_capacity(choices.len());
    let mut prev_out = 0.0;
    for (j, c) in choices.iter().enumerate() {
        let best_prev = if cost[HELD] < cost[FREE] { HELD } else { FREE };
        let mut next = [f64::INFINITY; 2];
        let mut link = [best_prev; 2];
        if let Some((_, e)) = &c.free {
            next[FREE] = cost[best_prev] + e;
        }
        if let Some(r) = &c.resident {
            let chained = if j > 0 { cost[HELD] - prev_out - r.in_saving } else { f64::INFINITY };
            if chained < cost[best_prev] {
                next[HELD] = chained + r.energy;
                link[HELD] = HELD;
            } else {
                next[HELD] = cost[best_prev] + r.energy;
            }
            prev_out = r.out_saving;
        }
        from.push(link);
        cost = next;
    }
    let mut state = if cost[HELD] < cost[FREE] { HELD } else { FREE };
    let mut picked = Vec::with_capacity(choices.len());
    for (j, c) in choices.iter().enumerate().rev() {
        picked.push(match state {
            FREE => c.free.as_ref().expect("reachable state").0.clone(),
            _ => c.resident.as_ref().expect("reachable state").schedule.clone(),
        });
        state = from[j][state];
    }
    picked.reverse();
    picked
}

/// Best per-layer schedules on one architecture. Identical layer shapes
/// are searched once. Each layer gets its best schedule, or its best fully
/// resident one where keeping consecutive layers on chip saves more.
fn design_for_arch(
    network: &Network,
    arch: &ArchSpec,
    dataflows: &(dyn Fn(&LayerShape, &ArchSpec) -> Vec<Dataflow> + Sync),
    opts: &SearchOptions,
) -> Result<DesignPoint> {
    let mut unique: Vec<LayerShape> = Vec::new();
    for l in &network.layers {
        if !unique.contains(&l.shape) {
            unique.push(l.shape);
        }
    }
    let found: Vec<Result<LayerChoice>> = unique
        .par_iter()
        .map(|layer| layer_choice(layer, arch, &dataflows(layer, arch), opts))
        .collect();
    let mut by_shape: HashMap<LayerShape, LayerChoice> = HashMap::new();
    for (layer, r) in unique.iter().zip(found) {
        by_shape.insert(*layer, r?);
    }
    let choices: Vec<&LayerChoice> = network.layers.iter().map(|l| &by_shape[&l.shape]).collect();
    let assemble = |schedules: Vec<Schedule>| {
        let layers = network
            .layers
            .iter()
            .zip(schedules)
            .map(|(l, s)| (l.name.clone(), l.shape, s))
            .collect();
        assemble_design(arch, layers, opts.objective)
    };
    let chained = assemble(chain_schedules(&choices))?;
    // The chain minimizes energy; under another objective the plain
    // per-layer optimum may still rank better.
    let plain: Vec<Schedule> = choices
        .iter()
        .map(|c| match (&c.free, &c.resident) {
            (Some((s, _)), _) => s.clone(),
            (None, Some(r)) => r.schedule.clone(),
            (None, None) => unreachable!("every layer has a schedule"),
        })
        .collect();
    let plain = assemble(plain)?;
    Ok(if plain.rank(&chained) == Ordering::Less { plain } else { chained })
}

/// Dataflows a per-layer search considers.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum DataflowSet {
    /// C|K with replication (see [`ck_dataflows`]).
    #[default]
    PrimaryPair,
    /// Every dataflow, replication included.
    All,
    /// One dataflow; unresolved factors are filled in by replication.
    Fixed(Dataflow),
}

impl FromStr for DataflowSet {
    type Err = Error;

    /// `ck`, `all`, or a dataflow such as `C|K` or `K|CX`.
    fn from_str(s: &str) -> Result<DataflowSet> {
        match s.to_ascii_lowercase().as_str() {
            "ck" => Ok(DataflowSet::PrimaryPair),
            "all" => Ok(DataflowSet::All),
            _ => parse_dataflow(s).map(DataflowSet::Fixed),
        }
    }
}

/// Best per-layer schedules on a given architecture.
pub fn best_design(
    network: &Network,
    arch: &ArchSpec,
    dataflows: &DataflowSet,
    opts: &SearchOptions,
) -> Result<DesignPoint> {
    validate_arch(arch).map_err(Error::InvalidArch)?;
    match dataflows {
        DataflowSet::PrimaryPair => design_for_arch(network, arch, &ck_dataflows, opts),
        DataflowSet::All => design_for_arch(network, arch, &all_dataflows, opts),
        DataflowSet::Fixed(df) => design_for_arch(network, arch, &fixed_dataflows(df), opts),
    }
}

fn fixed_dataflows(df: &Dataflow) -> impl Fn(&LayerShape, &ArchSpec) -> Vec<Dataflow> + Sync + '_ {
    move |layer, arch| {
        let resolved = if df.is_resolved() {
            df.clone()
        } else {
            crate::schedule::replication_factors(df, layer, arch.rows, arch.cols)
        };
        vec![resolved]
    }
}

fn pick_best(
    network: &Network,
    archs: &[ArchSpec],
    dataflows: &(dyn Fn(&LayerShape, &ArchSpec) -> Vec<Dataflow> + Sync),
    opts: &SearchOptions,
) -> (Option<DesignPoint>, Vec<(String, Error)>) {
    let results: Vec<Result<DesignPoint>> = archs
        .par_iter()
        .map(|arch| design_for_arch(network, arch, dataflows, opts))
        .collect();
    let mut best: Option<DesignPoint> = None;
    let mut failures = Vec::new();
    for (arch, r) in archs.iter().zip(results) {
        match r {
            Ok(d) => {
                if best.as_ref().is_none_or(|b| d.rank(b) == Ordering::Less) {
                    best = Some(d);
                }
            }
            Err(e) => failures.push((arch.name.clone(), e)),
        }
    }
    (best, failures)
}

fn explain(failures: &[(String, Error)]) -> String {
    let budget = failures.iter().find(|f| matches!(f.1, Error::BudgetExceeded { .. }));
    let floor = failures.iter().find(|f| matches!(&f.1, Error::NoSolution(m) if m.contains("utilization")));
    let first = budget.or(floor).or(failures.first());
    match first {
        Some((arch, e)) => format!("every candidate architecture failed; e.g. `{arch}`: {e}"),
        None => "no candidate architecture".into(),
    }
}

/// The network-level search with the two pruning rules: C|K dataflow (or
/// the constrained one) and adjacent on-chip size ratios within
/// `constraints.ratio`.
pub fn pruned_search(network: &Network, constraints: &SearchConstraints) -> Result<DesignPoint> {
    constraints.check()?;
    let all = constraints.candidate_archs();
    let valid: Vec<ArchSpec> = all.iter().filter(|a| validate_arch(a).is_ok()).cloned().collect();
    if valid.is_empty() {
        return Err(Error::NoSolution(
            "no candidate hierarchy is well formed (RF sizes must not exceed the SRAM size)".into(),
        ));
    }
    let archs: Vec<ArchSpec> = valid
        .into_iter()
        .filter(|a| ratios_within(a, constraints.ratio))
        .collect();
    if archs.is_empty() {
        return Err(Error::NoSolution(format!(
            "no candidate hierarchy has adjacent on-chip size ratios within [{}, {}]",
            constraints.ratio.0, constraints.ratio.1
        )));
    }
    let opts = constraints.options();
    let (best, failures) = match &constraints.dataflow {
        Some(df) => pick_best(network, &archs, &fixed_dataflows(df), &opts),
        None => pick_best(network, &archs, &ck_dataflows, &opts),
    };
    best.ok_or_else(|| Error::NoSolution(explain(&failures)))
}

/// Ground truth for [`pruned_search`]: every well-formed candidate
/// hierarchy, every dataflow. Only practical for small networks.
pub fn full_search(network: &Network, constraints: &SearchConstraints) -> Result<DesignPoint> {
    constraints.check()?;
    let archs: Vec<ArchSpec> = constraints
        .candidate_archs()
        .into_iter()
        .filter(|a| validate_arch(a).is_ok())
        .collect();
    let opts = constraints.options();
    let (best, failures) = pick_best(network, &archs, &all_dataflows, &opts);
    best.ok_or_else(|| Error::NoSolution(explain(&failures)))
}

/// Runs [`pruned_search`] once per array size, in the given (ascending)
/// order, with all other constraints unchanged.
pub fn sweep_pe_array(
    network: &Network,
    arrays: &[(u64, u64)],
    constraints: &SearchConstraints,
) -> Result<Vec<((u64, u64), DesignPoint)>> {
    if arrays.windows(2).any(|w| w[0].0 * w[0].1 > w[1].0 * w[1].1) {
        return Err(Error::Syntax("array sizes must be given in ascending PE count".into()));
    }
    arrays
        .iter()
        .map(|&a| {
            let c = SearchConstraints {
                arrays: vec![a],
                ..constraints.clone()
            };
            pruned_search(network, &c).map(|d| (a, d))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::energy;
    use crate::schedule::enumerate_blockings;
    use crate::workload::make_fc;

    fn small_arch() -> ArchSpec {
        ArchSpec::new(
            "t",
            2,
            2,
            vec![
                MemLevel::rf(32, 4.0),
                MemLevel::interpe(),
                MemLevel::sram(1024, 16.0),
                MemLevel::dram(4.0),
            ],
        )
    }

    #[test]
    fn all_ones_layer_gives_trivial_schedule() {
        let layer = LayerShape::conv(1, 1, 1, 1, 1, 1, 1).unwrap();
        let arch = ArchSpec::new("t", 1, 1, vec![MemLevel::dram(1.0)]);
        let (s, r) = exhaustive_search(&layer, &arch, &all_dataflows(&layer, &arch)).unwrap();
        assert_eq!(s, crate::schedule::canonicalize(&Schedule::trivial(&layer, 1), &layer));
        assert_eq!(r.total_energy, 3.0 * 200.0 + 0.075);
    }

    #[test]
    fn walker_matches_iterator_enumeration() {
        let layer = LayerShape::conv(2, 4, 2, 3, 2, 2, 1).unwrap();
        let arch = small_arch();
        for df in all_dataflows(&layer, &arch).iter().take(6) {
            let mut fast = Vec::new();
            for_each_blocking(&layer, &arch, df, |e, _| fast.push(e));
            let mut slow: Vec<f64> = enumerate_blockings(&layer, df, &arch)
                .map(|s| energy(&layer, &s, &arch).total_energy)
                .collect();
            fast.sort_by(f64::total_cmp);
            slow.sort_by(f64::total_cmp);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn pruning_never_skips_the_minimum() {
        let two_rf = ArchSpec::new(
            "t2",
            2,
            2,
            vec![
                MemLevel::rf(16, 4.0),
                MemLevel::rf(64, 4.0),
                MemLevel::interpe(),
                MemLevel::sram(2048, 16.0),
                MemLevel::dram(4.0),
            ],
        );
        let layers = [
            LayerShape::conv(2, 4, 3, 4, 4, 3, 3).unwrap(),
            LayerShape::conv(1, 8, 4, 3, 3, 2, 2).unwrap(),
            make_fc(12, 16, 4).unwrap(),
        ];
        for arch in [small_arch(), two_rf] {
            for layer in &layers {
                for df in all_dataflows(layer, &arch).iter().take(8) {
                    for objective in [Objective::Energy, Objective::EnergyDelayProduct] {
                        let mut brute = f64::INFINITY;
                        for_each_blocking(layer, &arch, df, |e, r| brute = brute.min(objective.value(e, r)));
                        let best = best_blocking(layer, &arch, df, objective, false).unwrap();
                        assert_eq!(best.score.objective, brute, "{layer:?} {df}");
                    }
                }
            }
        }
    }

    #[test]
    fn chaining_picks_the_best_mix_of_resident_layers() {
        let arch = ArchSpec::new(
            "t",
            2,
            2,
            vec![MemLevel::rf(32, 4.0), MemLevel::interpe(), MemLevel::sram(4096, 16.0), MemLevel::dram(4.0)],
        );
        let mut net = Network::new("n");
        net.push("a", LayerShape::conv(2, 4, 3, 6, 6, 3, 3).unwrap()).unwrap();
        net.push("b", LayerShape::conv(2, 8, 4, 4, 4, 3, 3).unwrap()).unwrap();
        net.push("c", make_fc(128, 10, 2).unwrap()).unwrap();
        net.push("d", make_fc(10, 6, 2).unwrap()).unwrap();
        let opts = SearchOptions::default();
        let choices: Vec<LayerChoice> = net
            .layers
            .iter()
            .map(|l| layer_choice(&l.shape, &arch, &ck_dataflows(&l.shape, &arch), &opts).unwrap())
            .collect();
        let options: Vec<Vec<Schedule>> = choices
            .iter()
            .map(|c| {
                c.free
                    .iter()
                    .map(|f| f.0.clone())
                    .chain(c.resident.iter().map(|r| r.schedule.clone()))
                    .collect()
            })
            .collect();
        let mut brute = f64::INFINITY;
        let mut pick = vec![0usize; options.len()];
        loop {
            let layers = net
                .layers
                .iter()
                .zip(&pick)
                .enumerate()
                .map(|(j, (l, &k))| (l.name.clone(), l.shape, options[j][k].clone()))
                .collect();
            brute = brute.min(assemble_design(&arch, layers, Objective::Energy).unwrap().total.total_energy);
            let mut j = 0;
            while j < pick.len() {
                pick[j] += 1;
                if pick[j] < options[j].len() {
                    break;
                }
                pick[j] = 0;
                j += 1;
            }
            if j == pick.len() {
                break;
            }
        }
        let refs: Vec<&LayerChoice> = choices.iter().collect();
        let layers = net
            .layers
            .iter()
            .zip(chain_schedules(&refs))
            .map(|(l, s)| (l.name.clone(), l.shape, s))
            .collect();
        let chained = assemble_design(&arch, layers, Objective::Energy).unwrap().total.total_energy;
        assert!((chained - brute).abs() <= 1e-9 * brute, "{chained} vs {brute}");
        assert!(options.iter().any(|o| o.len() > 1));
    }

    #[test]
    fn budget_is_enforced() {
        let layer = make_fc(64, 64, 16).unwrap();
        let arch = small_arch();
        let opts = SearchOptions {
            budget: 10,
            ..Default::default()
        };
        let err = exhaustive_search_with(&layer, &arch, &all_dataflows(&layer, &arch), &opts).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { budget: 10, .. }));
    }

    #[test]
    fn constraints_round_trip() {
        let text = "name m\narray 8x8 16x16\nrf 16 64\nrf2 none 256\nsram 64K 128K\ninterpe off\n\
                    bandwidth rf=4 sram=32 dram=8\ndataflow C|K\nobjective edp\nmin_util 0.5\nratio 2 32\n";
        let c = SearchConstraints::parse(text, "x").unwrap();
        assert_eq!(c.arrays, vec![(8, 8), (16, 16)]);
        assert_eq!(c.rf2_sizes, vec![None, Some(256)]);
        assert_eq!(c.sram_sizes, vec![65536, 131072]);
        assert_eq!(c.objective, Objective::EnergyDelayProduct);
        assert_eq!(c.dataflow.as_ref().unwrap().to_string(), "C|K");
        assert_eq!(SearchConstraints::parse(&c.to_text(), "y").unwrap(), c);
        assert!(SearchConstraints::parse("rf\n", "x").is_err());
        assert!(SearchConstraints::parse("sram 0\n", "x").is_err());
    }

    #[test]
    fn ratio_rule_uses_aggregate_rf() {
        let c = SearchConstraints {
            rf_sizes: vec![64, 512],
            sram_sizes: vec![128 * 1024],
            ..Default::default()
        };
        let archs = c.candidate_archs();
        assert!(ratios_within(&archs[0], (4, 16)));
        assert!(!ratios_within(&archs[1], (4, 16)));
    }
}
