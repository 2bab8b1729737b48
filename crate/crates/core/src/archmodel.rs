//! Hardware resource allocation: the PE array, the memory hierarchy and the
//! per-access energy of each level.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text;

/// Bytes per element; all arithmetic is 16-bit.
pub const WORD_BYTES: u64 = 2;

const DEFAULT_TABLE: &str = include_str!("../data/energy_28nm.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemKind {
    RF,
    InterPE,
    SRAM,
    DRAM,
}

impl MemKind {
    pub fn name(self) -> &'static str {
        match self {
            MemKind::RF => "rf",
            MemKind::InterPE => "interpe",
            MemKind::SRAM => "sram",
            MemKind::DRAM => "dram",
        }
    }

    fn rank(self) -> u8 {
        match self {
            MemKind::RF => 0,
            MemKind::InterPE => 1,
            MemKind::SRAM => 2,
            MemKind::DRAM => 3,
        }
    }

    fn parse(s: &str) -> Result<MemKind> {
        match s.to_ascii_lowercase().as_str() {
            "rf" => Ok(MemKind::RF),
            "interpe" => Ok(MemKind::InterPE),
            "sram" => Ok(MemKind::SRAM),
            "dram" => Ok(MemKind::DRAM),
            _ => Err(Error::Syntax(format!(
                "unknown memory kind `{s}`, expected rf, interpe, sram or dram"
            ))),
        }
    }
}

impl fmt::Display for MemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemLevel {
    pub kind: MemKind,
    /// Bytes per instance; per PE for RF levels. `None` is unbounded.
    pub size: Option<u64>,
    /// Elements per cycle toward the child level; per PE for RF levels.
    pub bandwidth: f64,
}

impl MemLevel {
    pub fn new(kind: MemKind, size: Option<u64>, bandwidth: f64) -> MemLevel {
        MemLevel {
            kind,
            size,
            bandwidth,
        }
    }

    pub fn rf(size: u64, bandwidth: f64) -> MemLevel {
        MemLevel::new(MemKind::RF, Some(size), bandwidth)
    }

    pub fn sram(size: u64, bandwidth: f64) -> MemLevel {
        MemLevel::new(MemKind::SRAM, Some(size), bandwidth)
    }

    pub fn dram(bandwidth: f64) -> MemLevel {
        MemLevel::new(MemKind::DRAM, None, bandwidth)
    }

    pub fn interpe() -> MemLevel {
        MemLevel::new(MemKind::InterPE, None, 0.0)
    }
}

/// Energy per 16-bit access, by memory kind and size.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTable {
    /// `(bytes, pJ)` rows sorted by size.
    pub rf: Vec<(u64, f64)>,
    pub sram: Vec<(u64, f64)>,
    pub mac: f64,
    pub hop: f64,
    pub dram: f64,
}

impl Default for EnergyTable {
    fn default() -> Self {
        EnergyTable::parse(DEFAULT_TABLE).expect("bundled energy table parses")
    }
}

impl EnergyTable {
    /// Parses `energy ...` and `table ...` records; other records are rejected.
    pub fn parse(text: &str) -> Result<EnergyTable> {
        let mut table = EnergyTable {
            rf: Vec::new(),
            sram: Vec::new(),
            mac: 0.0,
            hop: 0.0,
            dram: 0.0,
        };
        for (line, tokens) in text::records(text) {
            table
                .apply_record(&tokens)
                .and_then(|handled| {
                    if handled {
                        Ok(())
                    } else {
                        Err(Error::Syntax(format!("unexpected record `{}`", tokens[0])))
                    }
                })
                .map_err(|e| e.at_line(line))?;
        }
        table.check()?;
        Ok(table)
    }

    fn apply_record(&mut self, tokens: &[&str]) -> Result<bool> {
        match tokens[0] {
            "energy" => {
                for tok in &tokens[1..] {
                    let (k, v) = text::key_value(tok)?;
                    let v = text::parse_f64(k, v)?;
                    match k {
                        "mac" => self.mac = v,
                        "hop" => self.hop = v,
                        "dram" => self.dram = v,
                        _ => return Err(Error::Syntax(format!("unknown energy key `{k}`"))),
                    }
                }
                Ok(true)
            }
            "table" => {
                let kind = tokens
                    .get(1)
                    .ok_or_else(|| Error::Syntax("expected `table <rf|sram> size=pJ ...`".into()))?;
                let mut rows = Vec::new();
                for tok in &tokens[2..] {
                    let (k, v) = text::key_value(tok)?;
                    rows.push((text::parse_bytes("size", k)?, text::parse_f64(k, v)?));
                }
                rows.sort_by_key(|r| r.0);
                match MemKind::parse(kind)? {
                    MemKind::RF => self.rf = rows,
                    MemKind::SRAM => self.sram = rows,
                    other => {
                        return Err(Error::Syntax(format!(
                            "tables exist only for rf and sram, not {other}"
                        )))
                    }
                }
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    fn check(&self) -> Result<()> {
        for (name, rows) in [("rf", &self.rf), ("sram", &self.sram)] {
            if rows.is_empty() {
                return Err(Error::Syntax(format!("energy table for {name} is empty")));
            }
            for w in rows.windows(2) {
                if w[0].0 == w[1].0 || w[1].1 < w[0].1 || w[0].1 <= 0.0 {
                    return Err(Error::Syntax(format!(
                        "energy table for {name} must have distinct sizes and positive, non-decreasing energies"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "energy mac={} hop={} dram={}\n",
            text::fmt_f64(self.mac),
            text::fmt_f64(self.hop),
            text::fmt_f64(self.dram)
        );
        for (name, rows) in [("rf", &self.rf), ("sram", &self.sram)] {
            out.push_str("table ");
            out.push_str(name);
            for (s, e) in rows {
                out.push_str(&format!(" {s}={}", text::fmt_f64(*e)));
            }
            out.push('\n');
        }
        out
    }

    /// Energy of one access to a memory of `kind` and `size_bytes`.
    ///
    /// Table sizes return the table value. Between two rows the energy is
    /// interpolated geometrically: `e_a * (e_b / e_a)^((s - a) / (b - a))`.
    /// Outside the table the growth per size doubling of the nearest two
    /// rows is continued. DRAM ignores the size; InterPE returns one hop.
    pub fn energy_per_access(&self, kind: MemKind, size_bytes: u64) -> Result<f64> {
        let rows = match kind {
            MemKind::DRAM => return Ok(self.dram),
            MemKind::InterPE => return Ok(self.hop),
            MemKind::RF => &self.rf,
            MemKind::SRAM => &self.sram,
        };
        if size_bytes == 0 {
            return Err(Error::NonPositiveSize(size_bytes));
        }
        Ok(lookup(rows, size_bytes))
    }

    /// Cost of moving one element `distance` hops between PEs.
    pub fn hop_cost(&self, distance: u64) -> f64 {
        distance as f64 * self.hop
    }
}

fn lookup(rows: &[(u64, f64)], size: u64) -> f64 {
    if let Some(&(_, e)) = rows.iter().find(|r| r.0 == size) {
        return e;
    }
    let growth_per_doubling = |a: (u64, f64), b: (u64, f64)| -> f64 {
        (b.1 / a.1).powf(1.0 / (b.0 as f64 / a.0 as f64).log2())
    };
    let s = size as f64;
    let first = rows[0];
    let last = rows[rows.len() - 1];
    if size < first.0 {
        if rows.len() == 1 {
            return first.1;
        }
        let g = growth_per_doubling(rows[0], rows[1]);
        return first.1 * g.powf((s / first.0 as f64).log2());
    }
    if size > last.0 {
        if rows.len() == 1 {
            return last.1;
        }
        let g = growth_per_doubling(rows[rows.len() - 2], last);
        return last.1 * g.powf((s / last.0 as f64).log2());
    }
    let hi = rows.iter().position(|r| r.0 > size).unwrap();
    let (a, b) = (rows[hi - 1], rows[hi]);
    let t = (s - a.0 as f64) / (b.0 - a.0) as f64;
    a.1 * (b.1 / a.1).powf(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub name: String,
    pub rows: u64,
    pub cols: u64,
    /// Innermost first; the last level is DRAM.
    pub levels: Vec<MemLevel>,
    pub energy: EnergyTable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchViolation {
    pub level: Option<usize>,
    pub message: String,
}

impl fmt::Display for ArchViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.level {
            Some(i) => write!(f, "level {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl ArchSpec {
    pub fn new(name: impl Into<String>, rows: u64, cols: u64, levels: Vec<MemLevel>) -> ArchSpec {
        ArchSpec {
            name: name.into(),
            rows,
            cols,
            levels,
            energy: EnergyTable::default(),
        }
    }

    pub fn pe_count(&self) -> u64 {
        self.rows * self.cols
    }

    pub fn has_interpe(&self) -> bool {
        self.levels.iter().any(|l| l.kind == MemKind::InterPE)
    }

    /// Indices into `levels` of the storage levels (everything but InterPE).
    /// Schedules block loops over exactly these, innermost first.
    pub fn storage_levels(&self) -> Vec<usize> {
        (0..self.levels.len())
            .filter(|&i| self.levels[i].kind != MemKind::InterPE)
            .collect()
    }

    pub fn storage(&self, idx: usize) -> &MemLevel {
        &self.levels[self.storage_levels()[idx]]
    }

    pub fn num_storage_levels(&self) -> usize {
        self.levels
            .iter()
            .filter(|l| l.kind != MemKind::InterPE)
            .count()
    }

    /// Storage index of the outermost per-PE (RF) level, if any. Spatial
    /// unrolling sits directly above it.
    pub fn pe_level(&self) -> Option<usize> {
        self.levels
            .iter()
            .filter(|l| l.kind != MemKind::InterPE)
            .enumerate()
            .filter(|(_, l)| l.kind == MemKind::RF)
            .map(|(i, _)| i)
            .last()
    }

    /// Energy per access of a storage level.
    pub fn access_energy(&self, storage_idx: usize) -> f64 {
        let lvl = self.storage(storage_idx);
        self.energy
            .energy_per_access(lvl.kind, lvl.size.unwrap_or(1).max(1))
            .expect("sizes are positive")
    }

    /// Elements a single tile set may occupy at a storage level: RF levels
    /// use their full size, SRAM levels half (double buffering), DRAM is
    /// unbounded.
    pub fn tile_capacity_bytes(&self, storage_idx: usize) -> Option<u64> {
        let lvl = self.storage(storage_idx);
        match lvl.kind {
            MemKind::RF => lvl.size,
            MemKind::SRAM => lvl.size.map(|s| s / 2),
            MemKind::DRAM | MemKind::InterPE => None,
        }
    }

    /// Total bytes of on-chip storage, counting every PE's RF.
    pub fn on_chip_bytes(&self) -> u64 {
        self.levels
            .iter()
            .map(|l| match l.kind {
                MemKind::RF => l.size.unwrap_or(0) * self.pe_count(),
                MemKind::SRAM => l.size.unwrap_or(0),
                _ => 0,
            })
            .sum()
    }

    /// Aggregate capacity of each on-chip storage level, innermost first.
    /// RF levels are multiplied by the PE count.
    pub fn aggregate_on_chip_sizes(&self) -> Vec<u64> {
        self.levels
            .iter()
            .filter_map(|l| match l.kind {
                MemKind::RF => Some(l.size.unwrap_or(0) * self.pe_count()),
                MemKind::SRAM => Some(l.size.unwrap_or(0)),
                _ => None,
            })
            .collect()
    }

    pub fn parse(text: &str, default_name: &str) -> Result<ArchSpec> {
        let mut arch = ArchSpec::new(default_name, 0, 0, Vec::new());
        let mut have_array = false;
        for (line, tokens) in text::records(text) {
            let r: Result<()> = (|| {
                match tokens[0] {
                    "name" => {
                        arch.name = tokens
                            .get(1)
                            .ok_or_else(|| Error::Syntax("expected `name <name>`".into()))?
                            .to_string();
                    }
                    "array" => {
                        for tok in &tokens[1..] {
                            let (k, v) = text::key_value(tok)?;
                            let n = text::parse_int(k, v)?;
                            if n < 1 {
                                return Err(Error::Syntax(format!("`{k}` must be at least 1")));
                            }
                            match k {
                                "rows" => arch.rows = n as u64,
                                "cols" => arch.cols = n as u64,
                                _ => return Err(Error::Syntax(format!("unknown array key `{k}`"))),
                            }
                        }
                        have_array = true;
                    }
                    "level" => {
                        let idx = tokens
                            .get(1)
                            .ok_or_else(|| Error::Syntax("expected `level <i> ...`".into()))?;
                        let idx = text::parse_int("level", idx)?;
                        if idx != arch.levels.len() as i64 {
                            return Err(Error::Syntax(format!(
                                "levels must be listed in order; expected level {}, found {idx}",
                                arch.levels.len()
                            )));
                        }
                        arch.levels.push(parse_level(&tokens[2..])?);
                    }
                    _ => {
                        if !arch.energy.apply_record(&tokens)? {
                            return Err(Error::Syntax(format!(
                                "unknown record `{}`",
                                tokens[0]
                            )));
                        }
                    }
                }
                Ok(())
            })();
            r.map_err(|e| e.at_line(line))?;
        }
        if !have_array {
            return Err(Error::Syntax("missing `array rows=.. cols=..` record".into()));
        }
        arch.energy.check()?;
        Ok(arch)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("name {}\narray rows={} cols={}\n", self.name, self.rows, self.cols);
        for (i, l) in self.levels.iter().enumerate() {
            let size = match l.size {
                Some(s) => s.to_string(),
                None if l.kind == MemKind::InterPE => "0".to_string(),
                None => "unbounded".to_string(),
            };
            out.push_str(&format!(
                "level {i} kind={} size={size} bw={}\n",
                l.kind,
                text::fmt_f64(l.bandwidth)
            ));
        }
        out.push_str(&self.energy.to_text());
        out
    }
}

fn parse_level(tokens: &[&str]) -> Result<MemLevel> {
    let mut kind = None;
    let mut size = None;
    let mut bw = None;
    for tok in tokens {
        let (k, v) = text::key_value(tok)?;
        match k {
            "kind" => kind = Some(MemKind::parse(v)?),
            "size" => {
                size = Some(if v == "unbounded" {
                    None
                } else {
                    Some(text::parse_bytes(k, v)?)
                })
            }
            "bw" => bw = Some(text::parse_f64(k, v)?),
            _ => return Err(Error::Syntax(format!("unknown level key `{k}`"))),
        }
    }
    let kind = kind.ok_or_else(|| Error::Syntax("level is missing `kind`".into()))?;
    let size = match (kind, size) {
        (MemKind::InterPE, Some(Some(0))) | (MemKind::InterPE, None) => None,
        (MemKind::DRAM, None) => None,
        (_, Some(s)) => s,
        (_, None) => return Err(Error::Syntax(format!("{kind} level is missing `size`"))),
    };
    let bw = match (kind, bw) {
        (MemKind::InterPE, b) => b.unwrap_or(0.0),
        (_, Some(b)) => b,
        (_, None) => return Err(Error::Syntax(format!("{kind} level is missing `bw`"))),
    };
    Ok(MemLevel::new(kind, size, bw))
}

pub fn load_arch(path: impl AsRef<Path>) -> Result<ArchSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("arch");
    ArchSpec::parse(&text, stem)
}

/// Structural checks on an architecture description.
pub fn validate_arch(arch: &ArchSpec) -> std::result::Result<(), Vec<ArchViolation>> {
    let mut v = Vec::new();
    let mut push = |level: Option<usize>, message: String| v.push(ArchViolation { level, message });
    if arch.rows == 0 || arch.cols == 0 {
        push(None, "PE array dimensions must be at least 1".into());
    }
    if arch.levels.is_empty() {
        push(None, "no memory levels".into());
    }
    let drams: Vec<usize> = (0..arch.levels.len())
        .filter(|&i| arch.levels[i].kind == MemKind::DRAM)
        .collect();
    match drams.len() {
        0 => push(None, "missing a DRAM level".into()),
        1 => {
            if drams[0] != arch.levels.len() - 1 {
                push(Some(drams[0]), "DRAM must be the outermost level".into());
            }
        }
        _ => {
            for &i in &drams[1..] {
                push(Some(i), "more than one DRAM level".into());
            }
        }
    }
    let mut seen_interpe = false;
    let mut prev_on_chip: Option<(usize, u64)> = None;
    for (i, l) in arch.levels.iter().enumerate() {
        if i > 0 && l.kind.rank() < arch.levels[i - 1].kind.rank() {
            push(
                Some(i),
                format!(
                    "{} level cannot sit outside a {} level",
                    l.kind,
                    arch.levels[i - 1].kind
                ),
            );
        }
        match l.kind {
            MemKind::InterPE => {
                if seen_interpe {
                    push(Some(i), "more than one interpe level".into());
                }
                seen_interpe = true;
                if i == 0 || arch.levels[i - 1].kind != MemKind::RF {
                    push(Some(i), "interpe must directly follow the per-PE rf levels".into());
                }
            }
            MemKind::RF | MemKind::SRAM => {
                match l.size {
                    Some(s) if s > 0 => {
                        if let Some((pi, ps)) = prev_on_chip {
                            if s < ps {
                                push(
                                    Some(i),
                                    format!("size {s} B is smaller than level {pi} ({ps} B)"),
                                );
                            }
                        }
                        prev_on_chip = Some((i, s));
                    }
                    _ => push(Some(i), format!("{} level needs a positive size", l.kind)),
                }
                if !(l.bandwidth > 0.0) {
                    push(Some(i), "bandwidth must be positive".into());
                }
            }
            MemKind::DRAM => {
                if !(l.bandwidth > 0.0) {
                    push(Some(i), "bandwidth must be positive".into());
                }
            }
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eyeriss_like() -> ArchSpec {
        ArchSpec::new(
            "blue",
            16,
            16,
            vec![
                MemLevel::rf(512, 8.0),
                MemLevel::interpe(),
                MemLevel::sram(128 * 1024, 64.0),
                MemLevel::dram(16.0),
            ],
        )
    }

    #[test]
    fn table_values() {
        let t = EnergyTable::default();
        assert_eq!(t.energy_per_access(MemKind::RF, 64).unwrap(), 0.12);
        assert_eq!(t.energy_per_access(MemKind::SRAM, 128 * 1024).unwrap(), 13.5);
        assert_eq!(t.energy_per_access(MemKind::DRAM, 1).unwrap(), 200.0);
        assert_eq!(t.mac, 0.075);
    }

    #[test]
    fn interpolates_geometrically() {
        let t = EnergyTable::default();
        let e = t.energy_per_access(MemKind::RF, 48).unwrap();
        let expected = (0.06f64 * 0.12).sqrt();
        assert!((e - expected).abs() < 1e-12, "{e}");
        assert!((e - 0.0849).abs() < 1e-4);
    }

    #[test]
    fn extrapolates_with_table_growth() {
        let t = EnergyTable::default();
        let e8 = t.energy_per_access(MemKind::RF, 8).unwrap();
        assert!((e8 - 0.015).abs() < 1e-12);
        let e1m = t.energy_per_access(MemKind::SRAM, 1024 * 1024).unwrap();
        assert!((e1m - 30.375 * 1.5).abs() < 1e-9);
        assert!(matches!(
            t.energy_per_access(MemKind::RF, 0),
            Err(Error::NonPositiveSize(0))
        ));
    }

    #[test]
    fn hop_cost_is_linear() {
        let t = EnergyTable::default();
        assert_eq!(t.hop_cost(0), 0.0);
        assert_eq!(t.hop_cost(1), 0.035);
        assert!((t.hop_cost(4) - 0.14).abs() < 1e-15);
    }

    #[test]
    fn eyeriss_like_validates() {
        assert!(validate_arch(&eyeriss_like()).is_ok());
        let os4 = ArchSpec::new(
            "os4",
            4,
            1,
            vec![
                MemLevel::rf(32, 8.0),
                MemLevel::interpe(),
                MemLevel::sram(32 * 1024, 16.0),
                MemLevel::dram(4.0),
            ],
        );
        assert!(validate_arch(&os4).is_ok());
    }

    #[test]
    fn two_drams_rejected() {
        let mut a = eyeriss_like();
        a.levels.insert(3, MemLevel::dram(16.0));
        let v = validate_arch(&a).unwrap_err();
        assert!(v.iter().any(|x| x.message.contains("DRAM")));
    }

    #[test]
    fn shrinking_sizes_rejected() {
        let mut a = eyeriss_like();
        a.levels[2] = MemLevel::sram(256, 64.0);
        let v = validate_arch(&a).unwrap_err();
        assert_eq!(v[0].level, Some(2));
    }

    #[test]
    fn storage_indexing() {
        let a = eyeriss_like();
        assert_eq!(a.storage_levels(), vec![0, 2, 3]);
        assert_eq!(a.pe_level(), Some(0));
        assert_eq!(a.tile_capacity_bytes(0), Some(512));
        assert_eq!(a.tile_capacity_bytes(1), Some(64 * 1024));
        assert_eq!(a.tile_capacity_bytes(2), None);
        assert_eq!(a.aggregate_on_chip_sizes(), vec![512 * 256, 128 * 1024]);
    }

    #[test]
    fn text_round_trip() {
        let a = eyeriss_like();
        let back = ArchSpec::parse(&a.to_text(), "x").unwrap();
        assert_eq!(back, a);
    }
}
