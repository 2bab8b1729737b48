//! Mappings of a layer onto an architecture: per-level loop blocking and
//! ordering plus the spatial unrolling (dataflow) across the PE array.
//!
//! Blocking levels correspond one-to-one to the storage levels of the
//! architecture (every level except InterPE), innermost first. The tile held
//! at level `i` spans the factors of levels `0..=i`; for levels outside the PE
//! array it also spans the spatial unrolling.

mod enumerate;

use std::fmt;

use crate::archmodel::{ArchSpec, WORD_BYTES};
use crate::error::{Error, Result};
use crate::text;
use crate::workload::{footprint_of, LayerShape, LoopId, Tensor};

pub use enumerate::{
    enumerate_blockings, enumerate_dataflows, level_orders, replication_factors, split_counts,
    BlockingIter,
};

/// Most loops that may share one physical array dimension.
pub const MAX_LOOPS_PER_DIM: usize = 2;

/// Spatial unrolling. The first entry of each list is nearest-neighbour: PEs
/// that differ only in it are adjacent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Dataflow {
    pub vertical: Vec<(LoopId, u64)>,
    pub horizontal: Vec<(LoopId, u64)>,
}

impl Dataflow {
    pub fn new(vertical: Vec<(LoopId, u64)>, horizontal: Vec<(LoopId, u64)>) -> Dataflow {
        Dataflow {
            vertical,
            horizontal,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertical.is_empty() && self.horizontal.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (LoopId, u64)> + '_ {
        self.vertical.iter().chain(&self.horizontal).copied()
    }

    /// Spatial unroll factor of `l`; 1 if it is not unrolled.
    pub fn factor(&self, l: LoopId) -> u64 {
        self.entries()
            .filter(|e| e.0 == l)
            .map(|e| e.1)
            .product()
    }

    pub fn factors(&self) -> [u64; 7] {
        let mut f = [1; 7];
        for (l, s) in self.entries() {
            f[l.index()] *= s;
        }
        f
    }

    pub fn vertical_extent(&self) -> u64 {
        self.vertical.iter().map(|e| e.1).product()
    }

    pub fn horizontal_extent(&self) -> u64 {
        self.horizontal.iter().map(|e| e.1).product()
    }

    /// PEs that hold a distinct iteration.
    pub fn pe_count(&self) -> u64 {
        self.vertical_extent() * self.horizontal_extent()
    }

    /// Whether every entry has a concrete factor.
    pub fn is_resolved(&self) -> bool {
        self.entries().all(|e| e.1 > 0)
    }

    fn fmt_dim(dim: &[(LoopId, u64)]) -> String {
        dim.iter()
            .map(|(l, f)| {
                if *f == 0 {
                    l.to_string()
                } else {
                    format!("{l}:{f}")
                }
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    fn parse_dim(s: &str) -> Result<Vec<(LoopId, u64)>> {
        if s.is_empty() || s == "-" {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|item| match item.split_once(':') {
                Some((l, f)) => {
                    let f = text::parse_int(l, f)?;
                    if f < 1 {
                        return Err(Error::Syntax(format!("unroll factor of {l} must be at least 1")));
                    }
                    Ok((l.parse()?, f as u64))
                }
                None => Ok((item.parse()?, 0)),
            })
            .collect()
    }
}

/// `U|V` notation; replicated loops are concatenated (`C|KX`).
impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |d: &[(LoopId, u64)]| d.iter().map(|e| e.0.name()).collect::<String>();
        if self.horizontal.is_empty() {
            write!(f, "{}", name(&self.vertical))
        } else {
            write!(f, "{}|{}", name(&self.vertical), name(&self.horizontal))
        }
    }
}

/// Factors and loop order of one blocking level.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockingLevel {
    /// Tile factor per loop, in [`LoopId::ALL`] order.
    pub factors: [u64; 7],
    /// Loops iterated at this level, outermost first. Loops left out must
    /// have factor 1.
    pub order: Vec<LoopId>,
}

impl BlockingLevel {
    pub fn new(factors: [u64; 7], order: Vec<LoopId>) -> BlockingLevel {
        BlockingLevel { factors, order }
    }

    /// A level with every factor 1.
    pub fn unit() -> BlockingLevel {
        BlockingLevel::new([1; 7], Vec::new())
    }

    pub fn factor(&self, l: LoopId) -> u64 {
        self.factors[l.index()]
    }

    pub fn product(&self) -> u64 {
        self.factors.iter().product()
    }

    /// Non-unit loops in order, outermost first.
    pub fn active_order(&self) -> Vec<LoopId> {
        self.order
            .iter()
            .copied()
            .filter(|&l| self.factor(l) > 1)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Schedule {
    pub dataflow: Dataflow,
    /// Innermost first; the last level is DRAM.
    pub levels: Vec<BlockingLevel>,
}

impl Schedule {
    pub fn new(dataflow: Dataflow, levels: Vec<BlockingLevel>) -> Schedule {
        Schedule { dataflow, levels }
    }

    /// Everything iterated from the outermost level; no spatial unrolling.
    pub fn trivial(layer: &LayerShape, num_levels: usize) -> Schedule {
        let mut levels = vec![BlockingLevel::unit(); num_levels];
        let top = levels.last_mut().expect("at least one level");
        top.factors = layer.bounds();
        top.order = LoopId::ALL.to_vec();
        Schedule::new(Dataflow::default(), levels)
    }

    /// Product of the temporal factors of `l` over all levels.
    pub fn temporal_factor(&self, l: LoopId) -> u64 {
        self.levels.iter().map(|lv| lv.factor(l)).product()
    }

    /// Number of time steps of the blocked nest.
    pub fn temporal_steps(&self) -> u64 {
        self.levels.iter().map(|lv| lv.product()).product()
    }

    /// Per-loop extent of the tile held at `level`. `pe_level` is the
    /// outermost per-PE level; tiles above it include the spatial factors.
    pub fn tile_extents(&self, level: usize, pe_level: Option<usize>) -> [u64; 7] {
        let spatial = self.dataflow.factors();
        let mut e = [1u64; 7];
        for lv in &self.levels[..=level] {
            for (x, f) in e.iter_mut().zip(lv.factors) {
                *x *= f;
            }
        }
        if pe_level.map_or(true, |p| level > p) {
            for (x, s) in e.iter_mut().zip(spatial) {
                *x *= s;
            }
        }
        e
    }

    /// Elements of `tensor` in the tile held at `level`.
    pub fn tile_elems(&self, level: usize, pe_level: Option<usize>, tensor: Tensor) -> u64 {
        footprint_of(&self.tile_extents(level, pe_level), tensor)
    }

    pub fn parse(text: &str) -> Result<Schedule> {
        let mut all = parse_schedules(text)?;
        match all.len() {
            0 => Err(Error::Syntax("no schedule found".into())),
            1 => Ok(all.pop().unwrap().1),
            n => Err(Error::Syntax(format!(
                "expected one schedule, found {n}"
            ))),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("dataflow");
        if !self.dataflow.vertical.is_empty() {
            out.push_str(" vert=");
            out.push_str(&Dataflow::fmt_dim(&self.dataflow.vertical));
        }
        if !self.dataflow.horizontal.is_empty() {
            out.push_str(" horiz=");
            out.push_str(&Dataflow::fmt_dim(&self.dataflow.horizontal));
        }
        out.push('\n');
        for (i, lv) in self.levels.iter().enumerate() {
            let order: Vec<&str> = lv.order.iter().map(|l| l.name()).collect();
            let factors: Vec<String> = LoopId::ALL
                .iter()
                .filter(|&&l| lv.factor(l) != 1)
                .map(|&l| format!("{l}={}", lv.factor(l)))
                .collect();
            out.push_str(&format!("level {i} order={}", order.join(",")));
            if !factors.is_empty() {
                out.push_str(&format!(" factors={}", factors.join(",")));
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a schedule file holding one or more schedules. Each
/// `schedule <layer>` record starts a new named schedule; records before the
/// first such header form an unnamed schedule.
pub fn parse_schedules(text: &str) -> Result<Vec<(Option<String>, Schedule)>> {
    let mut out: Vec<(Option<String>, Schedule)> = Vec::new();
    let mut current: Option<(Option<String>, Schedule)> = None;
    for (line, tokens) in text::records(text) {
        let r: Result<()> = (|| {
            match tokens[0] {
                "schedule" => {
                    let name = tokens
                        .get(1)
                        .filter(|_| tokens.len() == 2)
                        .ok_or_else(|| Error::Syntax("expected `schedule <layer>`".into()))?;
                    if out.iter().chain(current.iter()).any(|s| s.0.as_deref() == Some(*name)) {
                        return Err(Error::DuplicateLayer(name.to_string()));
                    }
                    out.extend(current.take());
                    current = Some((Some(name.to_string()), Schedule::new(Dataflow::default(), Vec::new())));
                }
                "dataflow" => {
                    let s = &mut current
                        .get_or_insert_with(|| (None, Schedule::new(Dataflow::default(), Vec::new())))
                        .1;
                    for tok in &tokens[1..] {
                        let (k, v) = text::key_value(tok)?;
                        match k {
                            "vert" => s.dataflow.vertical = Dataflow::parse_dim(v)?,
                            "horiz" => s.dataflow.horizontal = Dataflow::parse_dim(v)?,
                            _ => return Err(Error::Syntax(format!("unknown dataflow key `{k}`"))),
                        }
                    }
                }
                "level" => {
                    let s = &mut current
                        .get_or_insert_with(|| (None, Schedule::new(Dataflow::default(), Vec::new())))
                        .1;
                    let idx = tokens
                        .get(1)
                        .ok_or_else(|| Error::Syntax("expected `level <i> ...`".into()))?;
                    let idx = text::parse_int("level", idx)?;
                    if idx != s.levels.len() as i64 {
                        return Err(Error::Syntax(format!(
                            "levels must be listed in order; expected level {}, found {idx}",
                            s.levels.len()
                        )));
                    }
                    s.levels.push(parse_level(&tokens[2..])?);
                }
                other => {
                    return Err(Error::Syntax(format!(
                        "unknown record `{other}`, expected `schedule`, `dataflow` or `level`"
                    )))
                }
            }
            Ok(())
        })();
        r.map_err(|e| e.at_line(line))?;
    }
    out.extend(current);
    for (name, s) in &out {
        if s.levels.is_empty() {
            return Err(Error::Syntax(format!(
                "schedule{} has no levels",
                name.as_ref().map(|n| format!(" `{n}`")).unwrap_or_default()
            )));
        }
    }
    Ok(out)
}

fn parse_level(tokens: &[&str]) -> Result<BlockingLevel> {
    let mut lv = BlockingLevel::unit();
    let mut have_order = false;
    for tok in tokens {
        let (k, v) = text::key_value(tok)?;
        match k {
            "order" => {
                lv.order = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(str::parse).collect::<Result<_>>()?
                };
                have_order = true;
            }
            "factors" => {
                for item in v.split(',').filter(|s| !s.is_empty()) {
                    let (l, f) = text::key_value(item)?;
                    let l: LoopId = l.parse()?;
                    let f = text::parse_int(l.name(), f)?;
                    if f < 1 {
                        return Err(Error::Syntax(format!("factor of {l} must be at least 1")));
                    }
                    lv.factors[l.index()] = f as u64;
                }
            }
            _ => return Err(Error::Syntax(format!("unknown level key `{k}`"))),
        }
    }
    if !have_order {
        lv.order = LoopId::ALL
            .into_iter()
            .filter(|&l| lv.factor(l) > 1)
            .collect();
    }
    Ok(lv)
}

/// One reason a schedule does not fit a layer or an architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub level: Option<usize>,
    pub tensor: Option<Tensor>,
    /// Bytes required and available, for capacity violations.
    pub required: Option<u64>,
    pub available: Option<u64>,
    pub message: String,
}

impl Violation {
    fn new(level: Option<usize>, message: String) -> Violation {
        Violation {
            level,
            tensor: None,
            required: None,
            available: None,
            message,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.level {
            write!(f, "level {l}: ")?;
        }
        f.write_str(&self.message)
    }
}

/// Checks loop coverage, order consistency, the dataflow against the PE
/// array and the tile working sets against each on-chip level.
pub fn validate_schedule(
    layer: &LayerShape,
    schedule: &Schedule,
    arch: &ArchSpec,
) -> std::result::Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let levels = arch.num_storage_levels();
    if schedule.levels.len() != levels {
        v.push(Violation::new(
            None,
            format!(
                "schedule has {} blocking levels but the architecture has {levels} storage levels",
                schedule.levels.len()
            ),
        ));
        return Err(v);
    }

    for (i, lv) in schedule.levels.iter().enumerate() {
        let mut seen = [false; 7];
        for &l in &lv.order {
            if std::mem::replace(&mut seen[l.index()], true) {
                v.push(Violation::new(Some(i), format!("{l} appears twice in the loop order")));
            }
        }
        for l in LoopId::ALL {
            if lv.factor(l) == 0 {
                v.push(Violation::new(Some(i), format!("factor of {l} is zero")));
            } else if lv.factor(l) > 1 && !seen[l.index()] {
                v.push(Violation::new(
                    Some(i),
                    format!("{l} has factor {} but is missing from the loop order", lv.factor(l)),
                ));
            }
        }
    }

    let df = &schedule.dataflow;
    let mut seen = [false; 7];
    for (l, f) in df.entries() {
        if std::mem::replace(&mut seen[l.index()], true) {
            v.push(Violation::new(None, format!("{l} is unrolled more than once")));
        }
        if f == 0 {
            v.push(Violation::new(None, format!("unroll factor of {l} is not set")));
        }
    }
    for (name, dim, extent) in [
        ("vertical", &df.vertical, arch.rows),
        ("horizontal", &df.horizontal, arch.cols),
    ] {
        if dim.len() > MAX_LOOPS_PER_DIM {
            v.push(Violation::new(
                None,
                format!("{} loops on the {name} dimension; at most {MAX_LOOPS_PER_DIM} are allowed", dim.len()),
            ));
        }
        let used: u64 = dim.iter().map(|e| e.1).product();
        if used > extent {
            v.push(Violation::new(
                None,
                format!("{name} unrolling uses {used} PEs but the array has {extent}"),
            ));
        }
    }
    let pe_level = arch.pe_level();
    if !df.is_empty() && pe_level.is_none() {
        v.push(Violation::new(
            None,
            "spatial unrolling needs a per-PE register file level".into(),
        ));
    }

    for l in LoopId::ALL {
        let covered = schedule.temporal_factor(l).saturating_mul(df.factor(l));
        if covered < layer.bound(l) {
            v.push(Violation::new(
                None,
                format!("{l} covers {covered} iterations but the bound is {}", layer.bound(l)),
            ));
        }
    }
    if !v.is_empty() {
        return Err(v);
    }

    for i in 0..levels {
        let Some(cap) = arch.tile_capacity_bytes(i) else {
            continue;
        };
        let bytes = Tensor::ALL.map(|t| schedule.tile_elems(i, pe_level, t) * WORD_BYTES);
        let total: u64 = bytes.iter().sum();
        let breakdown = Tensor::ALL
            .iter()
            .map(|t| format!("{t}={}", bytes[t.index()]))
            .collect::<Vec<_>>()
            .join(" ");
        let largest = Tensor::ALL
            .into_iter()
            .max_by_key(|t| (bytes[t.index()], std::cmp::Reverse(t.index())))
            .unwrap();
        if bytes[largest.index()] > cap {
            v.push(Violation {
                level: Some(i),
                tensor: Some(largest),
                required: Some(bytes[largest.index()]),
                available: Some(cap),
                message: format!(
                    "tile of {largest} needs {} B > {cap} B available ({breakdown})",
                    bytes[largest.index()]
                ),
            });
        } else if total > cap {
            v.push(Violation {
                level: Some(i),
                tensor: Some(largest),
                required: Some(total),
                available: Some(cap),
                message: format!("tiles need {total} B > {cap} B available ({breakdown})"),
            });
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Whether the tile working set fits every on-chip level.
pub fn fits_capacity(schedule: &Schedule, arch: &ArchSpec) -> bool {
    let pe_level = arch.pe_level();
    (0..schedule.levels.len()).all(|i| match arch.tile_capacity_bytes(i) {
        None => true,
        Some(cap) => {
            let e = schedule.tile_extents(i, pe_level);
            Tensor::ALL
                .iter()
                .map(|&t| footprint_of(&e, t) * WORD_BYTES)
                .sum::<u64>()
                <= cap
        }
    })
}

/// Drops unit-factor loops from every level's order, so that schedules that
/// differ only in where unit loops sit compare equal.
pub fn canonicalize(schedule: &Schedule, _layer: &LayerShape) -> Schedule {
    Schedule {
        dataflow: schedule.dataflow.clone(),
        levels: schedule
            .levels
            .iter()
            .map(|lv| BlockingLevel::new(lv.factors, lv.active_order()))
            .collect(),
    }
}
