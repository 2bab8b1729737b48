//! Brute-force reference: walks the blocked and unrolled loop nest step by
//! step, keeps modelled buffers for every level, tensor and PE, and counts
//! every element moved. Used to check the analytic model and the functional
//! correctness of schedules at small scale.

use std::collections::BTreeMap;

use rand::Rng;

use crate::archmodel::ArchSpec;
use crate::costmodel::AccessCounts;
use crate::error::{Error, Result};
use crate::schedule::{validate_schedule, Schedule};
use crate::workload::{LayerShape, LoopId, Tensor};

/// Access counts measured by the simulator; same layout as the model's.
pub type TraceCounts = AccessCounts;

/// Largest padded MAC count [`execute_scheduled`] accepts.
pub const EXECUTE_MAC_CAP: u64 = 10_000_000;
/// Largest padded MAC count [`simulate`] accepts.
pub const SIMULATE_MAC_CAP: u64 = 100_000_000;

/// A dense 4-D integer tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorData {
    pub dims: [usize; 4],
    pub data: Vec<i64>,
}

impl TensorData {
    pub fn zeros(dims: [usize; 4]) -> TensorData {
        TensorData {
            dims,
            data: vec![0; dims.iter().product()],
        }
    }

    /// Extents of `tensor` for `layer`: I is `[B][C][X+FX-1][Y+FY-1]`,
    /// W is `[K][C][FX][FY]`, O is `[B][K][X][Y]`.
    pub fn extents(layer: &LayerShape, tensor: Tensor) -> [usize; 4] {
        tensor_dims(&layer.bounds(), tensor)
    }

    pub fn for_layer(layer: &LayerShape, tensor: Tensor) -> TensorData {
        TensorData::zeros(TensorData::extents(layer, tensor))
    }

    /// Uniform values in `-8..8`.
    pub fn random(layer: &LayerShape, tensor: Tensor, rng: &mut impl Rng) -> TensorData {
        let mut t = TensorData::for_layer(layer, tensor);
        for v in &mut t.data {
            *v = rng.gen_range(-8..8);
        }
        t
    }

    fn offset(&self, i: [usize; 4]) -> usize {
        ((i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]) * self.dims[3] + i[3]
    }

    pub fn get(&self, i: [usize; 4]) -> i64 {
        self.data[self.offset(i)]
    }

    pub fn set(&mut self, i: [usize; 4], v: i64) {
        let o = self.offset(i);
        self.data[o] = v;
    }
}

fn tensor_dims(n: &[u64; 7], t: Tensor) -> [usize; 4] {
    let [b, k, c, x, y, fx, fy] = n.map(|v| v as usize);
    match t {
        Tensor::I => [b, c, x + fx - 1, y + fy - 1],
        Tensor::W => [k, c, fx, fy],
        Tensor::O => [b, k, x, y],
    }
}

/// Tensor coordinate touched by loop indices `i`.
fn coord(t: Tensor, i: &[u64; 7]) -> [usize; 4] {
    let [b, k, c, x, y, fx, fy] = i.map(|v| v as usize);
    match t {
        Tensor::I => [b, c, x + fx, y + fy],
        Tensor::W => [k, c, fx, fy],
        Tensor::O => [b, k, x, y],
    }
}

fn check_extents(layer: &LayerShape, t: Tensor, data: &TensorData) -> Result<()> {
    let expected = TensorData::extents(layer, t);
    if data.dims != expected {
        return Err(Error::ExtentMismatch {
            tensor: t.name(),
            expected: expected.iter().product(),
            actual: data.dims.iter().product(),
        });
    }
    Ok(())
}

/// Direct evaluation of the convolution nest.
pub fn reference_conv(layer: &LayerShape, input: &TensorData, weight: &TensorData) -> Result<TensorData> {
    check_extents(layer, Tensor::I, input)?;
    check_extents(layer, Tensor::W, weight)?;
    let [nb, nk, nc, nx, ny, nfx, nfy] = layer.bounds().map(|v| v as usize);
    let mut out = TensorData::for_layer(layer, Tensor::O);
    for b in 0..nb {
        for k in 0..nk {
            for x in 0..nx {
                for y in 0..ny {
                    let mut acc = 0i64;
                    for c in 0..nc {
                        for fx in 0..nfx {
                            for fy in 0..nfy {
                                acc += input.get([b, c, x + fx, y + fy]) * weight.get([k, c, fx, fy]);
                            }
                        }
                    }
                    out.set([b, k, x, y], acc);
                }
            }
        }
    }
    Ok(out)
}

/// Runs the schedule on real data. Returns the computed output and the
/// access counts.
pub fn execute_scheduled(
    layer: &LayerShape,
    schedule: &Schedule,
    arch: &ArchSpec,
    input: &TensorData,
    weight: &TensorData,
) -> Result<(TensorData, TraceCounts)> {
    check_extents(layer, Tensor::I, input)?;
    check_extents(layer, Tensor::W, weight)?;
    prepare(layer, schedule, arch, EXECUTE_MAC_CAP)?;
    let mut engine = Engine::new(layer, schedule, arch, Some((input, weight)));
    engine.run();
    let out = engine.output(layer);
    Ok((out, engine.counts))
}

/// Counts accesses without computing values.
pub fn simulate(layer: &LayerShape, schedule: &Schedule, arch: &ArchSpec) -> Result<TraceCounts> {
    prepare(layer, schedule, arch, SIMULATE_MAC_CAP)?;
    let mut engine = Engine::new(layer, schedule, arch, None);
    engine.run();
    Ok(engine.counts)
}

fn prepare(layer: &LayerShape, schedule: &Schedule, arch: &ArchSpec, cap: u64) -> Result<()> {
    validate_schedule(layer, schedule, arch).map_err(Error::InvalidSchedule)?;
    let macs = schedule
        .temporal_steps()
        .saturating_mul(schedule.dataflow.pe_count());
    if macs > cap {
        return Err(Error::SimulationCap { macs, cap });
    }
    Ok(())
}

struct Pe {
    /// Spatial index of each loop.
    spatial: [u64; 7],
    row: u64,
    col: u64,
}

/// One modelled buffer instance. Flags and values cover the whole padded
/// tensor; only the elements of the current tile are meaningful.
struct Buf {
    key: Option<[u64; 7]>,
    elems: Vec<usize>,
    /// For outputs: holds a partial sum. For operands: holds the data.
    valid: Vec<bool>,
    vals: Vec<i64>,
}

impl Buf {
    fn new(size: usize, with_values: bool) -> Buf {
        Buf {
            key: None,
            elems: Vec::new(),
            valid: vec![false; size],
            vals: if with_values { vec![0; size] } else { Vec::new() },
        }
    }
}

struct Engine {
    nl: usize,
    pe_level: Option<usize>,
    interpe: bool,
    values: bool,
    bounds: [u64; 7],
    pes: Vec<Pe>,
    /// Temporal loops of the whole nest, outermost first: (level, loop, factor).
    digits: Vec<(usize, LoopId, u64)>,
    /// Stride of each digit in its loop's global index.
    digit_stride: Vec<u64>,
    /// Stride of the spatial index of each loop.
    spatial_stride: [u64; 7],
    /// Tile extents per level.
    extents: Vec<[u64; 7]>,
    /// Padded tensor dims per tensor.
    dims: [[usize; 4]; 3],
    /// `bufs[level][tensor][instance]`.
    bufs: Vec<[Vec<Buf>; 3]>,
    counts: AccessCounts,
}

impl Engine {
    fn new(
        layer: &LayerShape,
        schedule: &Schedule,
        arch: &ArchSpec,
        data: Option<(&TensorData, &TensorData)>,
    ) -> Engine {
        let nl = schedule.levels.len();
        let pe_level = arch.pe_level();
        let spatial = schedule.dataflow.factors();

        let mut pes = vec![Pe {
            spatial: [0; 7],
            row: 0,
            col: 0,
        }];
        for (vertical, dim) in [(true, &schedule.dataflow.vertical), (false, &schedule.dataflow.horizontal)] {
            let mut stride = 1;
            for &(l, a) in dim {
                let mut next = Vec::new();
                for pe in &pes {
                    for s in 0..a {
                        let mut q = Pe {
                            spatial: pe.spatial,
                            row: pe.row,
                            col: pe.col,
                        };
                        q.spatial[l.index()] = s;
                        if vertical {
                            q.row += s * stride;
                        } else {
                            q.col += s * stride;
                        }
                        next.push(q);
                    }
                }
                pes = next;
                stride *= a;
            }
        }

        let mut level_stride = vec![[0u64; 7]; nl];
        let mut spatial_stride = [1u64; 7];
        let mut padded = [0u64; 7];
        for l in LoopId::ALL {
            let li = l.index();
            let mut r = 1;
            if pe_level.is_none() {
                spatial_stride[li] = r;
                r *= spatial[li];
            }
            for (j, lv) in schedule.levels.iter().enumerate() {
                level_stride[j][li] = r;
                r *= lv.factor(l);
                if pe_level == Some(j) {
                    spatial_stride[li] = r;
                    r *= spatial[li];
                }
            }
            padded[li] = r;
        }
        let mut digits = Vec::new();
        let mut digit_stride = Vec::new();
        for j in (0..nl).rev() {
            let lv = &schedule.levels[j];
            for &l in &lv.order {
                if lv.factor(l) > 1 {
                    digits.push((j, l, lv.factor(l)));
                    digit_stride.push(level_stride[j][l.index()]);
                }
            }
        }
        let extents = (0..nl).map(|i| schedule.tile_extents(i, pe_level)).collect();
        let dims = Tensor::ALL.map(|t| tensor_dims(&padded, t));
        let values = data.is_some();

        let bufs = (0..nl)
            .map(|i| {
                let instances = if pe_level.is_some_and(|p| i <= p) { pes.len() } else { 1 };
                Tensor::ALL.map(|t| {
                    let size = dims[t.index()].iter().product();
                    let track = values || t == Tensor::O;
                    (0..instances)
                        .map(|_| Buf::new(if track { size } else { 0 }, values))
                        .collect()
                })
            })
            .collect();

        let mut e = Engine {
            nl,
            pe_level,
            interpe: arch.has_interpe(),
            values,
            bounds: layer.bounds(),
            pes,
            digits,
            digit_stride,
            spatial_stride,
            extents,
            dims,
            bufs,
            counts: AccessCounts {
                levels: vec![Default::default(); nl],
                ..Default::default()
            },
        };

        // The outermost level holds the whole padded tensors.
        let top = nl - 1;
        for t in Tensor::ALL {
            let buf = &mut e.bufs[top][t.index()][0];
            buf.key = Some([0; 7]);
            if let (Some((input, weight)), true) = (data, t != Tensor::O) {
                let src = if t == Tensor::I { input } else { weight };
                let dst = TensorData::zeros(e.dims[t.index()]);
                for idx in 0..src.data.len() {
                    let mut rem = idx;
                    let mut c = [0usize; 4];
                    for d in (0..4).rev() {
                        c[d] = rem % src.dims[d];
                        rem /= src.dims[d];
                    }
                    buf.vals[dst.offset(c)] = src.data[idx];
                }
                buf.valid.iter_mut().for_each(|v| *v = true);
            }
        }
        e
    }

    fn instances(&self, level: usize) -> usize {
        self.bufs[level][0].len()
    }

    fn parent_instance(&self, level: usize, q: usize) -> usize {
        if self.pe_level.is_some_and(|p| level + 1 <= p) {
            q
        } else {
            0
        }
    }

    fn global(&self, cur: &[u64], q: usize) -> [u64; 7] {
        let mut idx = [0u64; 7];
        for (d, &(_, l, _)) in self.digits.iter().enumerate() {
            idx[l.index()] += cur[d] * self.digit_stride[d];
        }
        for l in 0..7 {
            idx[l] += self.pes[q].spatial[l] * self.spatial_stride[l];
        }
        idx
    }

    fn key(&self, level: usize, t: Tensor, idx: &[u64; 7]) -> [u64; 7] {
        let e = &self.extents[level];
        let mut k = [0u64; 7];
        for l in LoopId::ALL {
            if t.is_indexed_by(l) {
                let li = l.index();
                k[li] = idx[li] / e[li] * e[li];
            }
        }
        k
    }

    /// Linear element offsets covered by a tile.
    fn tile_elems(&self, level: usize, t: Tensor, origin: &[u64; 7]) -> Vec<usize> {
        let e = &self.extents[level];
        let loops: Vec<LoopId> = LoopId::ALL.into_iter().filter(|&l| t.is_indexed_by(l)).collect();
        let dims = self.dims[t.index()];
        let mut out = Vec::new();
        let mut i = *origin;
        loop {
            let c = coord(t, &i);
            out.push(((c[0] * dims[1] + c[1]) * dims[2] + c[2]) * dims[3] + c[3]);
            let mut d = loops.len();
            loop {
                if d == 0 {
                    out.sort_unstable();
                    out.dedup();
                    return out;
                }
                d -= 1;
                let li = loops[d].index();
                i[li] += 1;
                if i[li] < origin[li] + e[li] {
                    break;
                }
                i[li] = origin[li];
            }
        }
    }

    fn path_length(&self, group: &[usize]) -> u64 {
        let rows: Vec<u64> = group.iter().map(|&q| self.pes[q].row).collect();
        let cols: Vec<u64> = group.iter().map(|&q| self.pes[q].col).collect();
        let distinct = |v: &[u64]| {
            let mut v = v.to_vec();
            v.sort_unstable();
            v.dedup();
            v.len() as u64
        };
        let span = |v: &[u64]| v.iter().max().unwrap() - v.iter().min().unwrap();
        let (sv, sh) = (span(&rows), span(&cols));
        (sv + distinct(&rows) * sh).min(sh + distinct(&cols) * sv)
    }

    /// PEs grouped by their key at the outermost per-PE level.
    fn groups(&self, keys: &[[u64; 7]]) -> Vec<Vec<usize>> {
        let mut m: BTreeMap<[u64; 7], Vec<usize>> = BTreeMap::new();
        for (q, k) in keys.iter().enumerate() {
            m.entry(*k).or_default().push(q);
        }
        m.into_values().collect()
    }

    fn run(&mut self) {
        let mut cur = vec![0u64; self.digits.len()];
        // Levels below `dirty` may have changed tiles.
        let mut dirty = self.nl - 1;
        loop {
            if dirty > 0 {
                self.retile(&cur, dirty);
            }
            self.macs(&cur);
            let mut d = cur.len();
            loop {
                if d == 0 {
                    self.flush();
                    return;
                }
                d -= 1;
                cur[d] += 1;
                if cur[d] < self.digits[d].2 {
                    break;
                }
                cur[d] = 0;
            }
            dirty = self.digits[d].0;
        }
    }

    fn retile(&mut self, cur: &[u64], dirty: usize) {
        let globals: Vec<[u64; 7]> = (0..self.pes.len()).map(|q| self.global(cur, q)).collect();
        let inst_global = |engine: &Engine, i: usize, q: usize| -> [u64; 7] {
            if engine.instances(i) == 1 {
                globals[0]
            } else {
                globals[q]
            }
        };
        // Which (level, tensor) instances change tile.
        let mut changed = vec![[false; 3]; dirty];
        let mut new_keys: Vec<[Vec<[u64; 7]>; 3]> = Vec::new();
        for i in 0..dirty {
            let keys = Tensor::ALL.map(|t| {
                (0..self.instances(i))
                    .map(|q| self.key(i, t, &inst_global(self, i, q)))
                    .collect::<Vec<_>>()
            });
            for t in Tensor::ALL {
                let bufs = &self.bufs[i][t.index()];
                changed[i][t.index()] = bufs.iter().zip(&keys[t.index()]).any(|(b, k)| b.key != Some(*k));
            }
            new_keys.push(keys);
        }
        let o = Tensor::O.index();
        for i in 0..dirty {
            if changed[i][o] && self.bufs[i][o][0].key.is_some() {
                self.drain(i);
            }
        }
        for i in (0..dirty).rev() {
            for t in Tensor::ALL {
                if changed[i][t.index()] {
                    self.fill(i, t, &new_keys[i][t.index()]);
                }
            }
        }
    }

    /// Writes the output tiles of level `i` back to the parent.
    fn drain(&mut self, i: usize) {
        let o = Tensor::O.index();
        if self.pe_level == Some(i) {
            let keys: Vec<[u64; 7]> = self.bufs[i][o].iter().map(|b| b.key.unwrap()).collect();
            for group in self.groups(&keys) {
                let elems = std::mem::take(&mut self.bufs[i][o][group[0]].elems);
                let n = elems.len() as u64;
                if self.interpe {
                    self.counts.transfers[o] += (group.len() as u64 - 1) * n;
                    self.counts.hops[o] += self.path_length(&group) * n;
                }
                self.counts.levels[i + 1].writes[o] += n;
                for &e in &elems {
                    let mut sum = 0;
                    for &q in &group {
                        let b = &mut self.bufs[i][o][q];
                        if self.values {
                            sum += b.vals[e];
                        }
                        b.valid[e] = false;
                    }
                    let parent = &mut self.bufs[i + 1][o][0];
                    parent.valid[e] = true;
                    if self.values {
                        parent.vals[e] = sum;
                    }
                }
                for &q in &group {
                    self.bufs[i][o][q].elems.clear();
                }
            }
        } else {
            for q in 0..self.instances(i) {
                let pq = self.parent_instance(i, q);
                let elems = std::mem::take(&mut self.bufs[i][o][q].elems);
                self.counts.levels[i + 1].writes[o] += elems.len() as u64;
                for &e in &elems {
                    let v = if self.values { self.bufs[i][o][q].vals[e] } else { 0 };
                    self.bufs[i][o][q].valid[e] = false;
                    let parent = &mut self.bufs[i + 1][o][pq];
                    parent.valid[e] = true;
                    if self.values {
                        parent.vals[e] = v;
                    }
                }
            }
        }
    }

    /// Loads new tiles of tensor `t` into level `i`.
    fn fill(&mut self, i: usize, t: Tensor, keys: &[[u64; 7]]) {
        let ti = t.index();
        let at_pe = self.pe_level == Some(i);
        let groups: Vec<Vec<usize>> = if at_pe {
            self.groups(keys)
        } else {
            (0..keys.len()).map(|q| vec![q]).collect()
        };
        for group in groups {
            let elems = self.tile_elems(i, t, &keys[group[0]]);
            let n = elems.len() as u64;
            let pq = self.parent_instance(i, group[0]);
            if t != Tensor::O {
                if at_pe && self.interpe {
                    self.counts.levels[i + 1].reads[ti] += n;
                    self.counts.transfers[ti] += (group.len() as u64 - 1) * n;
                    self.counts.hops[ti] += self.path_length(&group) * n;
                } else {
                    self.counts.levels[i + 1].reads[ti] += group.len() as u64 * n;
                }
                self.counts.levels[i].writes[ti] += group.len() as u64 * n;
            }
            for (pos, &q) in group.iter().enumerate() {
                let old = std::mem::take(&mut self.bufs[i][ti][q].elems);
                if self.values || t == Tensor::O {
                    for &e in &old {
                        self.bufs[i][ti][q].valid[e] = false;
                    }
                }
                // Only the first PE of an output group receives partial sums.
                let receives = t != Tensor::O || pos == 0;
                for &e in &elems {
                    let (pv, pval) = if self.values || t == Tensor::O {
                        let p = &self.bufs[i + 1][ti][pq];
                        (p.valid[e], if self.values { p.vals[e] } else { 0 })
                    } else {
                        (true, 0)
                    };
                    if t == Tensor::O {
                        let take = receives && pv;
                        if take {
                            self.counts.levels[i + 1].reads[ti] += 1;
                            self.counts.levels[i].writes[ti] += 1;
                        }
                        let b = &mut self.bufs[i][ti][q];
                        b.valid[e] = take;
                        if self.values {
                            b.vals[e] = if take { pval } else { 0 };
                        }
                    } else if self.values {
                        assert!(pv, "operand element missing from the parent buffer");
                        let b = &mut self.bufs[i][ti][q];
                        b.valid[e] = true;
                        b.vals[e] = pval;
                    }
                }
                let b = &mut self.bufs[i][ti][q];
                b.elems = elems.clone();
                b.key = Some(keys[q]);
            }
        }
    }

    fn macs(&mut self, cur: &[u64]) {
        let (ii, wi, oi) = (Tensor::I.index(), Tensor::W.index(), Tensor::O.index());
        for q in 0..self.pes.len() {
            let idx = self.global(cur, q);
            self.counts.macs += 1;
            if LoopId::ALL.iter().all(|l| idx[l.index()] < self.bounds[l.index()]) {
                self.counts.useful_macs += 1;
            }
            let lin = |t: Tensor| {
                let c = coord(t, &idx);
                let d = self.dims[t.index()];
                ((c[0] * d[1] + c[1]) * d[2] + c[2]) * d[3] + c[3]
            };
            let (ei, ew, eo) = (lin(Tensor::I), lin(Tensor::W), lin(Tensor::O));
            let inst = if self.instances(0) == 1 { 0 } else { q };
            let lc = &mut self.counts.levels[0];
            lc.reads[ii] += 1;
            lc.reads[wi] += 1;
            let prod = if self.values {
                let a = &self.bufs[0][ii][inst];
                let b = &self.bufs[0][wi][inst];
                assert!(a.valid[ei] && b.valid[ew], "operand not resident at level 0");
                a.vals[ei] * b.vals[ew]
            } else {
                0
            };
            let out = &mut self.bufs[0][oi][inst];
            if out.valid[eo] {
                lc.reads[oi] += 1;
            }
            lc.writes[oi] += 1;
            out.valid[eo] = true;
            if self.values {
                out.vals[eo] += prod;
            }
        }
    }

    fn flush(&mut self) {
        let o = Tensor::O.index();
        for i in 0..self.nl - 1 {
            if self.bufs[i][o][0].key.is_some() {
                self.drain(i);
                for b in &mut self.bufs[i][o] {
                    b.key = None;
                }
            }
        }
    }

    fn output(&self, layer: &LayerShape) -> TensorData {
        let mut out = TensorData::for_layer(layer, Tensor::O);
        let top = &self.bufs[self.nl - 1][Tensor::O.index()][0];
        let d = self.dims[Tensor::O.index()];
        let [nb, nk, nx, ny] = out.dims;
        for b in 0..nb {
            for k in 0..nk {
                for x in 0..nx {
                    for y in 0..ny {
                        out.set([b, k, x, y], top.vals[((b * d[1] + k) * d[2] + x) * d[3] + y]);
                    }
                }
            }
        }
        out
    }
}
