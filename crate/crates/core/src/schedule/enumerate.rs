use std::collections::{HashSet, VecDeque};

use super::{fits_capacity, BlockingLevel, Dataflow, Schedule, MAX_LOOPS_PER_DIM};
use crate::archmodel::ArchSpec;
use crate::workload::{LayerShape, LoopId, Tensor};

/// Dataflows for a layer on a `rows` x `cols` array.
///
/// Without replication this is one dataflow per choice of `d` loops out of
/// the layer's non-unit loops, where `d` counts the array dimensions longer
/// than one; for two dimensions the lower loop goes on the vertical axis.
/// With replication every dimension may additionally carry a second loop.
/// Factors are filled in by [`replication_factors`]; replicated variants
/// whose second loop gets no PEs are dropped as duplicates.
pub fn enumerate_dataflows(
    layer: &LayerShape,
    rows: u64,
    cols: u64,
    allow_replication: bool,
) -> Vec<Dataflow> {
    let active = layer.active_loops();
    let dims: Vec<bool> = [(true, rows), (false, cols)]
        .into_iter()
        .filter(|d| d.1 > 1)
        .map(|d| d.0)
        .collect();
    let mut bases: Vec<Vec<LoopId>> = Vec::new();
    match dims.len() {
        0 => bases.push(Vec::new()),
        1 => bases.extend(active.iter().map(|&l| vec![l])),
        _ => {
            for (a, &u) in active.iter().enumerate() {
                for &v in &active[a + 1..] {
                    bases.push(vec![u, v]);
                }
            }
        }
    }

    let build = |assign: &[Vec<LoopId>]| -> Dataflow {
        let mut df = Dataflow::default();
        for (k, &vertical) in dims.iter().enumerate() {
            let entries = assign[k].iter().map(|&l| (l, 0)).collect();
            if vertical {
                df.vertical = entries;
            } else {
                df.horizontal = entries;
            }
        }
        replication_factors(&df, layer, rows, cols)
    };

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for base in &bases {
        let assign: Vec<Vec<LoopId>> = base.iter().map(|&l| vec![l]).collect();
        let df = if dims.is_empty() {
            Dataflow::default()
        } else {
            build(&assign)
        };
        if seen.insert(df.clone()) {
            out.push(df);
        }
        if !allow_replication || dims.is_empty() {
            continue;
        }
        let spare: Vec<LoopId> = active
            .iter()
            .copied()
            .filter(|l| !base.contains(l))
            .collect();
        // Each dimension takes no second loop or one of the spare loops.
        let options: Vec<Option<LoopId>> = std::iter::once(None)
            .chain(spare.iter().map(|&l| Some(l)))
            .collect();
        let mut choice = vec![0usize; dims.len()];
        loop {
            let picks: Vec<Option<LoopId>> = choice.iter().map(|&c| options[c]).collect();
            let distinct = {
                let named: Vec<LoopId> = picks.iter().flatten().copied().collect();
                named.iter().collect::<HashSet<_>>().len() == named.len()
            };
            if distinct && picks.iter().any(Option::is_some) {
                let mut a = assign.clone();
                for (k, p) in picks.iter().enumerate() {
                    if let Some(l) = p {
                        a[k].push(*l);
                    }
                }
                let mut df = build(&a);
                drop_idle(&mut df.vertical);
                drop_idle(&mut df.horizontal);
                if seen.insert(df.clone()) {
                    out.push(df);
                }
            }
            let mut k = 0;
            while k < choice.len() {
                choice[k] += 1;
                if choice[k] < options.len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() {
                break;
            }
        }
    }
    out
}

/// Removes replicated loops that received a single PE.
fn drop_idle(dim: &mut Vec<(LoopId, u64)>) {
    let mut first = true;
    dim.retain(|e| std::mem::replace(&mut first, false) || e.1 > 1);
}

/// Concrete unroll factors for a dataflow. Along each dimension the first
/// loop takes `min(bound, extent)` PEs and each following loop takes as many
/// copies as still fit, capped by its own bound.
pub fn replication_factors(df: &Dataflow, layer: &LayerShape, rows: u64, cols: u64) -> Dataflow {
    let fill = |dim: &[(LoopId, u64)], extent: u64| -> Vec<(LoopId, u64)> {
        let mut left = extent;
        dim.iter()
            .take(MAX_LOOPS_PER_DIM.max(dim.len()))
            .map(|&(l, _)| {
                let f = layer.bound(l).min(left).max(1);
                left /= f;
                (l, f)
            })
            .collect()
    };
    Dataflow::new(fill(&df.vertical, rows), fill(&df.horizontal, cols))
}

/// All ways to write `n` as an ordered product of `parts` factors.
fn ordered_splits(n: u64, parts: usize) -> Vec<Vec<u64>> {
    if parts == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for d in (1..=n).filter(|d| n % d == 0) {
        for mut rest in ordered_splits(n / d, parts - 1) {
            rest.insert(0, d);
            out.push(rest);
        }
    }
    out
}

/// Number of per-loop factor splits `enumerate_blockings` visits, before
/// capacity filtering and order choices.
pub fn split_counts(layer: &LayerShape, dataflow: &Dataflow, levels: usize) -> u64 {
    LoopId::ALL
        .iter()
        .map(|&l| ordered_splits(residual(layer, dataflow, l), levels).len() as u64)
        .product()
}

fn residual(layer: &LayerShape, dataflow: &Dataflow, l: LoopId) -> u64 {
    layer.bound(l).div_ceil(dataflow.factor(l).max(1))
}

/// How a level's order affects reuse: for each tensor, the product of the
/// innermost run of loops that do not index it, and whether that run spans
/// the whole level.
fn order_signature(factors: &[u64; 7], order: &[LoopId]) -> [(u64, bool); 3] {
    Tensor::ALL.map(|t| {
        let mut run = 1;
        let mut whole = true;
        for &l in order.iter().rev().filter(|&&l| factors[l.index()] > 1) {
            if t.is_indexed_by(l) {
                whole = false;
                break;
            }
            run *= factors[l.index()];
        }
        (run, whole)
    })
}

/// Representative loop orders (outermost first) for a level with the given
/// factors. Only the innermost run of loops that leave one tensor unchanged
/// matters for reuse, so one order is kept per distinct run.
pub fn level_orders(factors: &[u64; 7]) -> Vec<Vec<LoopId>> {
    let active: Vec<LoopId> = LoopId::ALL
        .into_iter()
        .filter(|l| factors[l.index()] > 1)
        .collect();
    if active.len() <= 1 {
        return vec![active];
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for t in Tensor::ALL {
        let class: Vec<LoopId> = active
            .iter()
            .copied()
            .filter(|l| l.unindexed_tensor() == t)
            .collect();
        let others: Vec<LoopId> = active
            .iter()
            .copied()
            .filter(|l| l.unindexed_tensor() != t)
            .collect();
        for mask in 1u32..(1 << class.len()) {
            let inner: Vec<LoopId> = (0..class.len())
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| class[b])
                .collect();
            let mut order: Vec<LoopId> = class
                .iter()
                .copied()
                .filter(|l| !inner.contains(l))
                .collect();
            order.extend(&others);
            order.extend(&inner);
            if seen.insert(order_signature(factors, &order)) {
                out.push(order);
            }
        }
    }
    out
}

/// Lazily yields every blocking of `layer` for a fixed dataflow: per-level
/// factors that divide the padded residual bound of each loop, combined
/// with the representative orders of each level. Schedules whose tiles do
/// not fit the on-chip levels are skipped.
pub fn enumerate_blockings(layer: &LayerShape, dataflow: &Dataflow, arch: &ArchSpec) -> BlockingIter {
    let levels = arch.num_storage_levels();
    let splits: Vec<Vec<Vec<u64>>> = LoopId::ALL
        .iter()
        .map(|&l| ordered_splits(residual(layer, dataflow, l), levels))
        .collect();
    BlockingIter {
        arch: arch.clone(),
        dataflow: dataflow.clone(),
        levels,
        splits,
        cursor: [0; 7],
        done: false,
        pending: VecDeque::new(),
    }
}

pub struct BlockingIter {
    arch: ArchSpec,
    dataflow: Dataflow,
    levels: usize,
    splits: Vec<Vec<Vec<u64>>>,
    cursor: [usize; 7],
    done: bool,
    pending: VecDeque<Schedule>,
}

impl BlockingIter {
    fn current(&self) -> Schedule {
        let levels = (0..self.levels)
            .map(|i| {
                let mut f = [1u64; 7];
                for l in 0..7 {
                    f[l] = self.splits[l][self.cursor[l]][i];
                }
                BlockingLevel::new(f, Vec::new())
            })
            .collect();
        Schedule::new(self.dataflow.clone(), levels)
    }

    fn advance(&mut self) {
        let mut k = 0;
        while k < 7 {
            self.cursor[k] += 1;
            if self.cursor[k] < self.splits[k].len() {
                return;
            }
            self.cursor[k] = 0;
            k += 1;
        }
        self.done = true;
    }

    fn expand(&mut self, base: Schedule) {
        let choices: Vec<Vec<Vec<LoopId>>> = base
            .levels
            .iter()
            .enumerate()
            .map(|(i, lv)| {
                if i == 0 {
                    vec![lv_active(&lv.factors)]
                } else {
                    level_orders(&lv.factors)
                }
            })
            .collect();
        let mut pick = vec![0usize; choices.len()];
        loop {
            let mut s = base.clone();
            for (i, lv) in s.levels.iter_mut().enumerate() {
                lv.order = choices[i][pick[i]].clone();
            }
            self.pending.push_back(s);
            let mut k = 0;
            while k < pick.len() {
                pick[k] += 1;
                if pick[k] < choices[k].len() {
                    break;
                }
                pick[k] = 0;
                k += 1;
            }
            if k == pick.len() {
                return;
            }
        }
    }
}

fn lv_active(factors: &[u64; 7]) -> Vec<LoopId> {
    LoopId::ALL
        .into_iter()
        .filter(|l| factors[l.index()] > 1)
        .collect()
}

impl Iterator for BlockingIter {
    type Item = Schedule;

    fn next(&mut self) -> Option<Schedule> {
        loop {
            if let Some(s) = self.pending.pop_front() {
                return Some(s);
            }
            if self.done {
                return None;
            }
            let base = self.current();
            self.advance();
            if fits_capacity(&base, &self.arch) {
                self.expand(base);
            }
        }
    }
}
