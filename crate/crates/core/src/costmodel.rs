//! Closed-form access counts, reuse factors, energy, utilization and runtime
//! of a scheduled layer.
//!
//! Counting rules (shared with the loop-nest oracle in `simoracle`):
//!
//! * A tile held at level `i` is replaced whenever a loop above `i` that
//!   indexes the tensor advances. The innermost run of non-unit loops above
//!   `i` that do not index the tensor keeps the tile resident.
//! * Operand tiles (I, W) are read from the parent and written into the child
//!   on every replacement. Each MAC reads both operands from level 0.
//! * Output tiles are written back to the parent when replaced. A tile that
//!   was seen before is first refilled with its partial sums; a fresh tile
//!   starts from zero and its first accumulation per element is write-only.
//! * Between the outermost per-PE level and its parent, PEs that need the
//!   same operand tile share one parent read and forward it over the InterPE
//!   network; partial sums of PEs that share an output tile are reduced to
//!   one root PE, which alone receives refills. Without an InterPE level every
//!   PE reads operands from the parent and outputs are reduced by an adder
//!   tree without hops.
//! * Input tiles are counted with their full halo, `(x + fx - 1)` per axis;
//!   overlap between consecutive tiles is not cached.

use std::fmt;

use crate::archmodel::{ArchSpec, MemKind};
use crate::schedule::{Dataflow, Schedule};
use crate::text;
use crate::workload::{footprint_of, LayerShape, LoopId, Tensor};

/// Reads and writes of each tensor at one storage level.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LevelCounts {
    pub reads: [u64; 3],
    pub writes: [u64; 3],
}

impl LevelCounts {
    pub fn total(&self) -> u64 {
        self.reads.iter().sum::<u64>() + self.writes.iter().sum::<u64>()
    }

    pub fn read(&self, t: Tensor) -> u64 {
        self.reads[t.index()]
    }

    pub fn write(&self, t: Tensor) -> u64 {
        self.writes[t.index()]
    }
}

/// Per-level, per-tensor access counts of one layer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessCounts {
    /// Storage levels, innermost first.
    pub levels: Vec<LevelCounts>,
    /// Elements forwarded between PEs, per tensor.
    pub transfers: [u64; 3],
    /// Element-hops over the InterPE network, per tensor.
    pub hops: [u64; 3],
    /// Executed MACs, including padded iterations.
    pub macs: u64,
    /// MACs that fall inside the layer bounds.
    pub useful_macs: u64,
}

impl AccessCounts {
    pub(crate) fn new(levels: usize) -> AccessCounts {
        AccessCounts {
            levels: vec![LevelCounts::default(); levels],
            ..Default::default()
        }
    }

    fn clear(&mut self) {
        for lc in &mut self.levels {
            *lc = LevelCounts::default();
        }
        self.transfers = [0; 3];
        self.hops = [0; 3];
        self.macs = 0;
    }

    /// First difference from `other`, as `(level, tensor, what)`. Level
    /// `None` stands for the InterPE counters.
    pub fn first_difference(&self, other: &AccessCounts) -> Option<(Option<usize>, Tensor, &'static str)> {
        for (i, (a, b)) in self.levels.iter().zip(&other.levels).enumerate() {
            for t in Tensor::ALL {
                if a.read(t) != b.read(t) {
                    return Some((Some(i), t, "reads"));
                }
                if a.write(t) != b.write(t) {
                    return Some((Some(i), t, "writes"));
                }
            }
        }
        for t in Tensor::ALL {
            if self.transfers[t.index()] != other.transfers[t.index()] {
                return Some((None, t, "transfers"));
            }
            if self.hops[t.index()] != other.hops[t.index()] {
                return Some((None, t, "hops"));
            }
        }
        None
    }

    /// Largest absolute difference over all counters.
    pub fn max_deviation(&self, other: &AccessCounts) -> u64 {
        let mut d = self.macs.abs_diff(other.macs).max(self.useful_macs.abs_diff(other.useful_macs));
        if self.levels.len() != other.levels.len() {
            return u64::MAX;
        }
        for (a, b) in self.levels.iter().zip(&other.levels) {
            for t in 0..3 {
                d = d.max(a.reads[t].abs_diff(b.reads[t]));
                d = d.max(a.writes[t].abs_diff(b.writes[t]));
            }
        }
        for t in 0..3 {
            d = d.max(self.transfers[t].abs_diff(other.transfers[t]));
            d = d.max(self.hops[t].abs_diff(other.hops[t]));
        }
        d
    }

    fn add(&mut self, o: &AccessCounts) {
        if self.levels.len() < o.levels.len() {
            self.levels.resize(o.levels.len(), LevelCounts::default());
        }
        for (a, b) in self.levels.iter_mut().zip(&o.levels) {
            for t in 0..3 {
                a.reads[t] += b.reads[t];
                a.writes[t] += b.writes[t];
            }
        }
        for t in 0..3 {
            self.transfers[t] += o.transfers[t];
            self.hops[t] += o.hops[t];
        }
        self.macs += o.macs;
        self.useful_macs += o.useful_macs;
    }
}

/// `RT` per storage level and tensor: how often the child level accesses
/// the data during one residency at this level.
#[derive(Debug, Clone, PartialEq)]
pub struct ReuseFactors {
    pub levels: Vec<[f64; 3]>,
}

impl ReuseFactors {
    pub fn get(&self, level: usize, t: Tensor) -> f64 {
        self.levels[level][t.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    ComputeBound,
    /// Index of the storage level whose transfers take longest.
    MemoryBound(usize),
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::ComputeBound => f.write_str("compute"),
            Bound::MemoryBound(i) => write!(f, "memory(level {i})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub counts: AccessCounts,
    /// Kind and size of each storage level, innermost first.
    pub level_info: Vec<(MemKind, Option<u64>)>,
    /// pJ per storage level.
    pub level_energy: Vec<f64>,
    pub interpe_energy: f64,
    pub mac_energy: f64,
    pub total_energy: f64,
    pub utilization: f64,
    pub compute_cycles: u64,
    pub runtime: u64,
    pub bound: Bound,
}

#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModelOptions {
    /// Added to each input halo extent. Non-zero only to check that the
    /// validation harness catches a wrong model.
    pub halo_adjust: i64,
}

/// Most storage levels the fast evaluator handles.
pub(crate) const MAX_LEVELS: usize = 8;

/// The count formulas with everything that depends only on the dataflow and
/// the architecture hoisted out, so that many blockings can be counted
/// without allocating.
#[derive(Debug, Clone)]
pub(crate) struct CountModel {
    pe_level: Option<usize>,
    interpe: bool,
    pes: u64,
    spatial: [u64; 7],
    groups: [u64; 3],
    hops: [u64; 3],
    opts: ModelOptions,
}

impl CountModel {
    pub(crate) fn new(dataflow: &Dataflow, arch: &ArchSpec, opts: ModelOptions) -> CountModel {
        let spatial = dataflow.factors();
        CountModel {
            pe_level: arch.pe_level(),
            interpe: arch.has_interpe(),
            pes: dataflow.pe_count(),
            spatial,
            groups: Tensor::ALL.map(|t| {
                LoopId::ALL
                    .iter()
                    .filter(|&&l| t.is_indexed_by(l))
                    .map(|&l| spatial[l.index()])
                    .product()
            }),
            hops: Tensor::ALL.map(|t| dataflow_hops(dataflow, t)),
            opts,
        }
    }

    fn tile(&self, e: &[u64; 7], t: Tensor) -> u64 {
        if t == Tensor::I && self.opts.halo_adjust != 0 {
            let [b, _, c, x, y, fx, fy] = *e;
            let hx = (x + fx - 1) as i64 + self.opts.halo_adjust;
            return b * c * hx.max(0) as u64 * (y + fy - 1);
        }
        footprint_of(e, t)
    }

    fn per_pe(&self, i: usize) -> bool {
        self.pe_level.is_some_and(|p| i <= p)
    }

    /// Order-independent quantities of a blocking.
    fn shape(&self, factors: &[[u64; 7]]) -> Shape {
        let nl = factors.len();
        assert!((1..=MAX_LEVELS).contains(&nl));
        let mut sh = Shape {
            nl,
            tiles: [[0; 3]; MAX_LEVELS],
            o_prod: [1; MAX_LEVELS],
            distinct: [[1; 3]; MAX_LEVELS],
            all_above: [1; MAX_LEVELS],
            macs: self.pes * factors.iter().flatten().product::<u64>(),
        };
        let mut e = [1u64; 7];
        for i in 0..nl {
            for l in 0..7 {
                e[l] *= factors[i][l];
            }
            let mut ext = e;
            if !self.per_pe(i) {
                for l in 0..7 {
                    ext[l] *= self.spatial[l];
                }
            }
            sh.tiles[i] = Tensor::ALL.map(|t| self.tile(&ext, t));
            sh.o_prod[i] = relevant_product(&factors[i], Tensor::O);
        }
        for i in (0..nl - 1).rev() {
            let f = &factors[i + 1];
            sh.distinct[i] = Tensor::ALL.map(|t| sh.distinct[i + 1][t.index()] * relevant_product(f, t));
            sh.all_above[i] = sh.all_above[i + 1] * f.iter().product::<u64>();
        }
        sh
    }

    /// Fresh output residencies at level `i`, summed over PEs, given the
    /// output residencies of the outermost per-PE level.
    fn fresh(&self, sh: &Shape, i: usize, res_p: u64) -> u64 {
        let o = Tensor::O.index();
        let g = self.groups[o];
        match self.pe_level {
            Some(p) if i <= p => {
                let mid: u64 = sh.o_prod[i + 1..=p].iter().product();
                g * sh.distinct[i][o] + (self.pes - g) * res_p * mid
            }
            _ => sh.distinct[i][o],
        }
    }

    /// Overwrites `c` with the counts of the blocking given by per-level
    /// factors and orders (innermost level first, orders outermost loop
    /// first). `c.useful_macs` is left alone.
    pub(crate) fn fill(&self, factors: &[[u64; 7]], orders: &[&[LoopId]], c: &mut AccessCounts) {
        let sh = self.shape(factors);
        let nl = sh.nl;
        assert!(orders.len() == nl && c.levels.len() == nl);
        let p = self.pe_level;
        let pes = self.pes;
        let at_pe = |i: usize| p == Some(i);

        // Residencies above each level, built top-down: the loops of level
        // i + 1 sit just outside level i.
        let mut residencies = [[1u64; 3]; MAX_LEVELS];
        let mut all = 1u64;
        let mut run = [1u64; 3];
        for i in (0..nl - 1).rev() {
            let f = &factors[i + 1];
            for t in Tensor::ALL {
                let ti = t.index();
                let mut prefix = 1u64;
                let mut hit = false;
                for &l in orders[i + 1].iter().rev() {
                    let x = f[l.index()];
                    if x == 1 {
                        continue;
                    }
                    if t.is_indexed_by(l) {
                        hit = true;
                        break;
                    }
                    prefix *= x;
                }
                run[ti] = if hit { prefix } else { prefix * run[ti] };
            }
            all *= orders[i + 1].iter().map(|l| f[l.index()]).product::<u64>();
            residencies[i] = run.map(|r| all / r);
        }

        c.clear();
        let macs = sh.macs;
        c.macs = macs;
        let tiles = &sh.tiles;
        let distinct = &sh.distinct;

        for t in [Tensor::I, Tensor::W] {
            let ti = t.index();
            c.levels[0].reads[ti] += macs;
            for i in 0..nl - 1 {
                let n = residencies[i][ti] * tiles[i][ti];
                if self.per_pe(i) {
                    c.levels[i].writes[ti] += pes * n;
                } else {
                    c.levels[i].writes[ti] += n;
                }
                if at_pe(i) && self.interpe {
                    c.levels[i + 1].reads[ti] += self.groups[ti] * n;
                    c.transfers[ti] += (pes - self.groups[ti]) * n;
                    c.hops[ti] += n * self.hops[ti];
                } else if self.per_pe(i) {
                    c.levels[i + 1].reads[ti] += pes * n;
                } else {
                    c.levels[i + 1].reads[ti] += n;
                }
            }
        }

        let o = Tensor::O.index();
        let g = self.groups[o];
        let res_p = p.map_or(0, |p| residencies[p][o]);
        c.levels[0].writes[o] += macs;
        c.levels[0].reads[o] += macs - self.fresh(&sh, 0, res_p) * tiles[0][o];
        for i in 0..nl - 1 {
            let f = residencies[i][o];
            let tile = tiles[i][o];
            let (drained, refills) = if at_pe(i) {
                if self.interpe {
                    c.hops[o] += f * tile * self.hops[o];
                    c.transfers[o] += (pes - g) * f * tile;
                }
                (g * f, (f - distinct[i][o]) * g)
            } else if self.per_pe(i) {
                (pes * f, pes * f - self.fresh(&sh, i, res_p))
            } else {
                (f, f - distinct[i][o])
            };
            c.levels[i + 1].writes[o] += drained * tile;
            c.levels[i + 1].reads[o] += refills * tile;
            c.levels[i].writes[o] += refills * tile;
        }
    }

    /// A lower bound on the energy of every loop order of a blocking.
    ///
    /// Across a boundary the innermost non-unit loop above is irrelevant to
    /// exactly one tensor, so at most one tensor is kept resident there and
    /// the other two are refetched on every iteration above. Each boundary
    /// takes the cheapest choice of that tensor, assuming it stays resident
    /// for its whole reuse; terms that shrink as outputs stay resident
    /// longer use the largest residency possible.
    pub(crate) fn energy_lower_bound(&self, factors: &[[u64; 7]], pricing: &Pricing) -> f64 {
        let sh = self.shape(factors);
        let res_p = self.pe_level.map_or(0, |p| sh.all_above[p]);
        let o = Tensor::O.index();
        let level0_reads = sh.macs.saturating_sub(self.fresh(&sh, 0, res_p) * sh.tiles[0][o]);
        let mut total = self.fixed_bound(pricing, sh.macs, level0_reads);
        for i in 0..sh.nl - 1 {
            let fresh = self.fresh(&sh, i, res_p);
            total += self.boundary_bound(pricing, i, &sh.tiles[i], &sh.distinct[i], sh.all_above[i], fresh);
        }
        total
    }

    /// Like [`CountModel::energy_lower_bound`], for every blocking whose
    /// innermost levels are `prefix` and whose remaining per-loop factors
    /// multiply to `left`. Only the boundaries just above `prefix` levels
    /// are counted.
    pub(crate) fn partial_lower_bound(&self, prefix: &[[u64; 7]], left: &[u64; 7], pricing: &Pricing) -> f64 {
        let k = prefix.len();
        assert!(k >= 1 && k <= MAX_LEVELS);
        let o = Tensor::O.index();
        let g = self.groups[o];
        let mut all = [1u64; MAX_LEVELS];
        let mut distinct = [[1u64; 3]; MAX_LEVELS];
        let rest: u64 = left.iter().product();
        let rest_rel = Tensor::ALL.map(|t| relevant_product(left, t));
        all[k - 1] = rest;
        distinct[k - 1] = rest_rel;
        for i in (0..k - 1).rev() {
            let f = &prefix[i + 1];
            all[i] = all[i + 1] * f.iter().product::<u64>();
            distinct[i] = Tensor::ALL.map(|t| distinct[i + 1][t.index()] * relevant_product(f, t));
        }
        let macs = self.pes * all[0] * prefix[0].iter().product::<u64>();
        // Fresh output residencies are at most one per residency above.
        let fresh = |i: usize| match self.pe_level {
            Some(p) if i <= p => g * distinct[i][o] + (self.pes - g) * all[i],
            _ => distinct[i][o],
        };
        let mut e = [1u64; 7];
        let mut total = 0.0;
        for i in 0..k {
            for l in 0..7 {
                e[l] *= prefix[i][l];
            }
            let mut ext = e;
            if !self.per_pe(i) {
                for l in 0..7 {
                    ext[l] *= self.spatial[l];
                }
            }
            let tiles = Tensor::ALL.map(|t| self.tile(&ext, t));
            if i == 0 {
                total += self.fixed_bound(pricing, macs, macs.saturating_sub(fresh(0) * tiles[o]));
            }
            total += self.boundary_bound(pricing, i, &tiles, &distinct[i], all[i], fresh(i));
        }
        total
    }

    fn fixed_bound(&self, pricing: &Pricing, macs: u64, level0_o_reads: u64) -> f64 {
        let e0 = pricing.access[0];
        macs as f64 * (3.0 * e0 + pricing.mac) + level0_o_reads as f64 * e0
    }

    /// Lowest energy of the transfers across the boundary above level `i`,
    /// over the choice of the one tensor that may stay resident.
    fn boundary_bound(
        &self,
        pricing: &Pricing,
        i: usize,
        tiles: &[u64; 3],
        distinct: &[u64; 3],
        all: u64,
        fresh_ub: u64,
    ) -> f64 {
        let p = self.pe_level;
        let pes = self.pes;
        let e = &pricing.access;
        let o = Tensor::O.index();
        let g = self.groups[o];
        let operand = |t: Tensor, f: u64| -> f64 {
            let ti = t.index();
            let n = (f * tiles[ti]) as f64;
            let copies = if self.per_pe(i) { pes as f64 } else { 1.0 };
            let mut cost = copies * n * e[i];
            if p == Some(i) && self.interpe {
                cost += self.groups[ti] as f64 * n * e[i + 1] + (n * self.hops[ti] as f64) * pricing.hop;
            } else {
                cost += copies * n * e[i + 1];
            }
            cost
        };
        let output = |f: u64| -> f64 {
            let tile = tiles[o] as f64;
            let d = distinct[o];
            let mut cost = 0.0;
            let (drained, refills) = if p == Some(i) {
                if self.interpe {
                    cost += f as f64 * tile * self.hops[o] as f64 * pricing.hop;
                }
                (g * f, (f - d) * g)
            } else if self.per_pe(i) {
                (pes * f, (pes * f).saturating_sub(fresh_ub))
            } else {
                (f, f - d)
            };
            cost + drained as f64 * tile * e[i + 1] + refills as f64 * tile * (e[i + 1] + e[i])
        };
        Tensor::ALL
            .iter()
            .map(|&kept| {
                let f = |t: Tensor| if t == kept { distinct[t.index()] } else { all };
                operand(Tensor::I, f(Tensor::I)) + operand(Tensor::W, f(Tensor::W)) + output(f(Tensor::O))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

struct Shape {
    nl: usize,
    tiles: [[u64; 3]; MAX_LEVELS],
    /// Product of the output-relevant factors of each level.
    o_prod: [u64; MAX_LEVELS],
    /// Distinct tiles per tensor above each level.
    distinct: [[u64; 3]; MAX_LEVELS],
    /// Product of all temporal factors above each level.
    all_above: [u64; MAX_LEVELS],
    macs: u64,
}

fn relevant_product(f: &[u64; 7], t: Tensor) -> u64 {
    LoopId::ALL
        .iter()
        .filter(|&&l| t.is_indexed_by(l))
        .map(|&l| f[l.index()])
        .product()
}

/// Per-level energy and bandwidth of an architecture, for pricing counts.
#[derive(Debug, Clone)]
pub(crate) struct Pricing {
    access: Vec<f64>,
    bandwidth: Vec<f64>,
    hop: f64,
    mac: f64,
}

impl Pricing {
    pub(crate) fn new(arch: &ArchSpec, pes: u64) -> Pricing {
        let p = arch.pe_level();
        let n = arch.num_storage_levels();
        Pricing {
            access: (0..n).map(|i| arch.access_energy(i)).collect(),
            bandwidth: (0..n)
                .map(|i| {
                    let bw = arch.storage(i).bandwidth;
                    if p.is_some_and(|p| i <= p) {
                        bw * pes as f64
                    } else {
                        bw
                    }
                })
                .collect(),
            hop: arch.energy.hop,
            mac: arch.energy.mac,
        }
    }

    fn level_energy(&self, counts: &AccessCounts, i: usize) -> f64 {
        counts.levels[i].total() as f64 * self.access[i]
    }

    pub(crate) fn energy(&self, counts: &AccessCounts) -> f64 {
        let levels: f64 = (0..counts.levels.len()).map(|i| self.level_energy(counts, i)).sum();
        levels + counts.hops.iter().sum::<u64>() as f64 * self.hop + counts.macs as f64 * self.mac
    }

    /// Cycles and what limits them, given the temporal step count.
    pub(crate) fn runtime(&self, counts: &AccessCounts, compute: u64) -> (u64, Bound) {
        let mut best = (compute, Bound::ComputeBound);
        for (i, lc) in counts.levels.iter().enumerate() {
            let cycles = (lc.total() as f64 / self.bandwidth[i]).ceil() as u64;
            if cycles > best.0 {
                best = (cycles, Bound::MemoryBound(i));
            }
        }
        best
    }
}

/// Total element-hops to forward one element to every PE of its sharing
/// group, summed over groups. Groups are laid out along each array
/// dimension by the loops that do not index `t`; the data travels the
/// span of one dimension and then the span of the other from every
/// position reached, whichever order is shorter.
pub fn hops_per_element(schedule: &Schedule, t: Tensor) -> u64 {
    dataflow_hops(&schedule.dataflow, t)
}

fn dataflow_hops(dataflow: &Dataflow, t: Tensor) -> u64 {
    let dim = |entries: &[(LoopId, u64)]| -> (u64, u64, u64) {
        let (mut stride, mut span, mut reach, mut groups) = (1u64, 0u64, 1u64, 1u64);
        for &(l, a) in entries {
            if t.is_indexed_by(l) {
                groups *= a;
            } else {
                span += (a - 1) * stride;
                reach *= a;
            }
            stride *= a;
        }
        (span, reach, groups)
    };
    let (cv, rv, gv) = dim(&dataflow.vertical);
    let (ch, rh, gh) = dim(&dataflow.horizontal);
    gv * gh * (cv + rv * ch).min(ch + rh * cv)
}

/// Analytic per-level access counts.
pub fn access_counts(layer: &LayerShape, schedule: &Schedule, arch: &ArchSpec) -> AccessCounts {
    access_counts_with(layer, schedule, arch, &ModelOptions::default())
}

#[doc(hidden)]
pub fn access_counts_with(
    layer: &LayerShape,
    schedule: &Schedule,
    arch: &ArchSpec,
    opts: &ModelOptions,
) -> AccessCounts {
    let nl = schedule.levels.len();
    let model = CountModel::new(&schedule.dataflow, arch, *opts);
    let factors: Vec<[u64; 7]> = schedule.levels.iter().map(|lv| lv.factors).collect();
    let orders: Vec<&[LoopId]> = schedule.levels.iter().map(|lv| lv.order.as_slice()).collect();
    let mut c = AccessCounts::new(nl);
    model.fill(&factors, &orders, &mut c);
    c.useful_macs = layer.mac_count();
    c
}

/// Child-facing accesses of a tensor at a level: operands are read by the
/// child, outputs are written by it.
fn child_facing(c: &LevelCounts, t: Tensor) -> u64 {
    match t {
        Tensor::I | Tensor::W => c.read(t),
        Tensor::O => c.write(t),
    }
}

/// Reuse factors derived from access counts: `RT_i` is the ratio of
/// child-facing accesses at level `i` to those at level `i + 1`, and at the
/// outermost level the ratio to the padded tensor size.
pub fn reuse_from_counts(counts: &AccessCounts, padded: [u64; 3]) -> ReuseFactors {
    let n = counts.levels.len();
    let levels = (0..n)
        .map(|i| {
            Tensor::ALL.map(|t| {
                let here = child_facing(&counts.levels[i], t) as f64;
                let there = if i + 1 < n {
                    child_facing(&counts.levels[i + 1], t)
                } else {
                    padded[t.index()]
                };
                here / there as f64
            })
        })
        .collect();
    ReuseFactors { levels }
}

pub fn reuse_factors(layer: &LayerShape, schedule: &Schedule, arch: &ArchSpec) -> ReuseFactors {
    let counts = access_counts(layer, schedule, arch);
    let top = schedule.levels.len() - 1;
    let e = schedule.tile_extents(top, arch.pe_level());
    reuse_from_counts(&counts, Tensor::ALL.map(|t| footprint_of(&e, t)))
}

/// Average fraction of PEs doing useful work. Along each unrolled loop the
/// bound is spread over `ceil(bound / factor)` passes.
pub fn utilization(layer: &LayerShape, dataflow: &crate::schedule::Dataflow, rows: u64, cols: u64) -> f64 {
    let mut num = 1u64;
    let mut den = rows * cols;
    for (l, s) in dataflow.entries() {
        let n = layer.bound(l);
        num *= n;
        den *= n.div_ceil(s.max(1));
    }
    num as f64 / den as f64
}

/// Cycles with transfers overlapped with compute (double buffering), and
/// what limits them. Per-PE levels transfer in parallel across PEs.
pub fn runtime(layer: &LayerShape, schedule: &Schedule, arch: &ArchSpec) -> (u64, Bound) {
    let counts = access_counts(layer, schedule, arch);
    runtime_from_counts(&counts, schedule, arch)
}

fn runtime_from_counts(counts: &AccessCounts, schedule: &Schedule, arch: &ArchSpec) -> (u64, Bound) {
    Pricing::new(arch, schedule.dataflow.pe_count()).runtime(counts, schedule.temporal_steps())
}

/// Full cost report: energy per level, utilization and runtime.
pub fn energy(layer: &LayerShape, schedule: &Schedule, arch: &ArchSpec) -> CostReport {
    report_from_counts(layer, schedule, arch, access_counts(layer, schedule, arch))
}

/// Cost report for externally obtained counts, such as the oracle's.
pub fn report_from_counts(
    layer: &LayerShape,
    schedule: &Schedule,
    arch: &ArchSpec,
    counts: AccessCounts,
) -> CostReport {
    let pricing = Pricing::new(arch, schedule.dataflow.pe_count());
    let level_energy: Vec<f64> = (0..counts.levels.len()).map(|i| pricing.level_energy(&counts, i)).collect();
    let interpe_energy = counts.hops.iter().sum::<u64>() as f64 * pricing.hop;
    let mac_energy = counts.macs as f64 * pricing.mac;
    let total_energy = pricing.energy(&counts);
    let (runtime, bound) = pricing.runtime(&counts, schedule.temporal_steps());
    CostReport {
        level_info: (0..counts.levels.len())
            .map(|i| (arch.storage(i).kind, arch.storage(i).size))
            .collect(),
        level_energy,
        interpe_energy,
        mac_energy,
        total_energy,
        utilization: utilization(layer, &schedule.dataflow, arch.rows, arch.cols),
        compute_cycles: schedule.temporal_steps(),
        runtime,
        bound,
        counts,
    }
}

impl CostReport {
    /// Sum of per-layer reports. Utilization is weighted by compute cycles;
    /// the bound is that of the longest-running layer.
    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a CostReport>) -> Option<CostReport> {
        let mut it = reports.into_iter();
        let mut acc = it.next()?.clone();
        let mut weighted = acc.utilization * acc.compute_cycles as f64;
        let mut longest = acc.runtime;
        for r in it {
            acc.counts.add(&r.counts);
            for (a, b) in acc.level_energy.iter_mut().zip(&r.level_energy) {
                *a += b;
            }
            acc.interpe_energy += r.interpe_energy;
            acc.mac_energy += r.mac_energy;
            acc.compute_cycles += r.compute_cycles;
            acc.runtime += r.runtime;
            weighted += r.utilization * r.compute_cycles as f64;
            if r.runtime > longest {
                longest = r.runtime;
                acc.bound = r.bound;
            }
        }
        acc.total_energy = acc.level_energy.iter().sum::<f64>() + acc.interpe_energy + acc.mac_energy;
        acc.utilization = weighted / acc.compute_cycles.max(1) as f64;
        Some(acc)
    }

    /// Share of all reads served by level 0.
    pub fn innermost_read_share(&self) -> f64 {
        let all: u64 = self
            .counts
            .levels
            .iter()
            .map(|l| l.reads.iter().sum::<u64>())
            .sum();
        self.counts.levels[0].reads.iter().sum::<u64>() as f64 / all as f64
    }

    /// Largest share of the total energy taken by one storage level.
    pub fn max_level_share(&self) -> f64 {
        self.level_energy.iter().cloned().fold(0.0, f64::max) / self.total_energy
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<6} {:<8} {:>10} {:>14} {:>14} {:>16}\n",
            "level", "kind", "size", "reads", "writes", "energy_pJ"
        );
        for (i, lc) in self.counts.levels.iter().enumerate() {
            let (kind, size) = self.level_info[i];
            let size = size.map_or("-".to_string(), |s| s.to_string());
            out.push_str(&format!(
                "{:<6} {:<8} {:>10} {:>14} {:>14} {:>16.3}\n",
                i,
                kind.name(),
                size,
                lc.reads.iter().sum::<u64>(),
                lc.writes.iter().sum::<u64>(),
                self.level_energy[i]
            ));
        }
        out.push_str(&format!(
            "{:<6} {:<8} {:>10} {:>14} {:>14} {:>16.3}\n",
            "-",
            "interpe",
            "-",
            self.counts.hops.iter().sum::<u64>(),
            "",
            self.interpe_energy
        ));
        out.push_str(&format!(
            "{:<6} {:<8} {:>10} {:>14} {:>14} {:>16.3}\n",
            "-", "mac", "-", self.counts.macs, "", self.mac_energy
        ));
        out.push_str(&format!("total energy: {:.3} pJ\n", self.total_energy));
        out.push_str(&format!("utilization: {:.4}\n", self.utilization));
        out.push_str(&format!("runtime: {} cycles ({})\n", self.runtime, self.bound));
        out
    }

    /// One `key=value` line per metric, each key prefixed by `prefix`.
    pub fn to_flat(&self, prefix: &str) -> String {
        let mut out = String::new();
        let mut kv = |k: String, v: String| out.push_str(&format!("{prefix}{k}={v}\n"));
        for (i, lc) in self.counts.levels.iter().enumerate() {
            let (kind, size) = self.level_info[i];
            kv(format!("level{i}.kind"), kind.name().to_string());
            kv(
                format!("level{i}.size"),
                size.map_or("unbounded".to_string(), |s| s.to_string()),
            );
            for t in Tensor::ALL {
                kv(format!("level{i}.reads.{t}"), lc.read(t).to_string());
                kv(format!("level{i}.writes.{t}"), lc.write(t).to_string());
            }
            kv(format!("level{i}.energy_pj"), text::fmt_f64(self.level_energy[i]));
        }
        for t in Tensor::ALL {
            kv(format!("interpe.transfers.{t}"), self.counts.transfers[t.index()].to_string());
            kv(format!("interpe.hops.{t}"), self.counts.hops[t.index()].to_string());
        }
        kv("interpe.energy_pj".into(), text::fmt_f64(self.interpe_energy));
        kv("mac.count".into(), self.counts.macs.to_string());
        kv("mac.energy_pj".into(), text::fmt_f64(self.mac_energy));
        kv("energy_pj".into(), text::fmt_f64(self.total_energy));
        kv("utilization".into(), text::fmt_f64(self.utilization));
        kv("compute_cycles".into(), self.compute_cycles.to_string());
        kv("runtime_cycles".into(), self.runtime.to_string());
        kv("bound".into(), self.bound.to_string());
        out
    }
}
