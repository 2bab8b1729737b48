//! Randomized comparison of the analytic model against the loop-nest
//! simulator.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::archmodel::ArchSpec;
use crate::costmodel::{access_counts_with, ModelOptions};
use crate::error::Result;
use crate::schedule::{
    enumerate_dataflows, validate_schedule, BlockingLevel, Dataflow, Schedule,
};
use crate::simoracle::{execute_scheduled, reference_conv, TensorData, EXECUTE_MAC_CAP};
use crate::workload::{LayerKind, LayerShape, LoopId, Tensor};

/// Largest bound per loop used when a layer has to be shrunk for simulation.
pub const SHRINK_BOUND: u64 = 8;

/// A random schedule for `layer` on `arch` that passes validation. Factors
/// are arbitrary (not only divisors), orders are random permutations and
/// the dataflow is drawn from the replicated dataflows with random factors.
/// Falls back to the trivial schedule when no random draw fits.
pub fn random_schedule(layer: &LayerShape, arch: &ArchSpec, rng: &mut impl Rng) -> Schedule {
    let nl = arch.num_storage_levels();
    let mut dataflows = vec![Dataflow::default()];
    if arch.pe_level().is_some() {
        dataflows.extend(enumerate_dataflows(layer, arch.rows, arch.cols, true));
    }
    for _ in 0..200 {
        let mut df = dataflows.choose(rng).unwrap().clone();
        for dim in [&mut df.vertical, &mut df.horizontal] {
            for e in dim.iter_mut() {
                e.1 = rng.gen_range(1..=e.1.max(1));
            }
        }
        let mut levels = vec![BlockingLevel::unit(); nl];
        for l in LoopId::ALL {
            let mut left = layer.bound(l).div_ceil(df.factor(l));
            for lv in levels.iter_mut().take(nl - 1) {
                let f = if left > 1 && rng.gen_bool(0.6) {
                    rng.gen_range(1..=left)
                } else {
                    1
                };
                lv.factors[l.index()] = f;
                left = left.div_ceil(f);
            }
            levels[nl - 1].factors[l.index()] = left;
        }
        for lv in &mut levels {
            let mut order = LoopId::ALL.to_vec();
            order.shuffle(rng);
            lv.order = order;
        }
        let s = Schedule::new(df, levels);
        if validate_schedule(layer, &s, arch).is_ok() {
            return s;
        }
    }
    Schedule::trivial(layer, nl)
}

/// Caps every bound at [`SHRINK_BOUND`] and halves the largest until the
/// layer fits the simulation cap. Returns the layer unchanged when it
/// already fits.
pub fn shrink_for_simulation(layer: &LayerShape) -> LayerShape {
    if layer.mac_count() <= EXECUTE_MAC_CAP / 16 {
        return *layer;
    }
    let mut b = layer.bounds().map(|v| v.min(SHRINK_BOUND));
    while b.iter().product::<u64>() > EXECUTE_MAC_CAP / 16 {
        let i = (0..7).max_by_key(|&i| (b[i], std::cmp::Reverse(i))).unwrap();
        b[i] = b[i].div_ceil(2);
    }
    LayerShape::new(layer.kind(), b).unwrap_or_else(|_| LayerShape::new(LayerKind::Conv, b).unwrap())
}

/// Where the model and the simulator first disagreed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub trial: usize,
    /// Storage level, or `None` for the InterPE counters.
    pub level: Option<usize>,
    pub tensor: Tensor,
    pub what: &'static str,
    pub model: u64,
    pub oracle: u64,
    pub schedule: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let place = match self.level {
            Some(l) => format!("level {l}"),
            None => "interpe".to_string(),
        };
        let halo = if self.tensor == Tensor::I { " (input halo counts)" } else { "" };
        write!(
            f,
            "trial {}: {place} tensor {} {}: model {} vs oracle {}{halo}",
            self.trial, self.tensor, self.what, self.model, self.oracle
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub layer: LayerShape,
    /// Set when the layer was shrunk to fit the simulator.
    pub shrunk_from: Option<LayerShape>,
    pub trials: usize,
    pub max_deviation: u64,
    pub functional_failures: usize,
    pub first_divergence: Option<Divergence>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.max_deviation == 0 && self.functional_failures == 0
    }
}

/// Runs `trials` random schedules of `layer` through both the model and the
/// simulator (with random data) and compares counts and outputs. The same
/// seed gives the same trials.
pub fn validate_layer(
    layer: &LayerShape,
    arch: &ArchSpec,
    trials: usize,
    seed: u64,
) -> Result<ValidationReport> {
    validate_layer_with(layer, arch, trials, seed, &ModelOptions::default())
}

#[doc(hidden)]
pub fn validate_layer_with(
    layer: &LayerShape,
    arch: &ArchSpec,
    trials: usize,
    seed: u64,
    opts: &ModelOptions,
) -> Result<ValidationReport> {
    let small = shrink_for_simulation(layer);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = TensorData::random(&small, Tensor::I, &mut rng);
    let weight = TensorData::random(&small, Tensor::W, &mut rng);
    let expected = reference_conv(&small, &input, &weight)?;
    let mut report = ValidationReport {
        layer: small,
        shrunk_from: (small != *layer).then_some(*layer),
        trials,
        max_deviation: 0,
        functional_failures: 0,
        first_divergence: None,
    };
    for trial in 0..trials {
        let s = random_schedule(&small, arch, &mut rng);
        let model = access_counts_with(&small, &s, arch, opts);
        let (out, oracle) = execute_scheduled(&small, &s, arch, &input, &weight)?;
        if out != expected {
            report.functional_failures += 1;
        }
        report.max_deviation = report.max_deviation.max(model.max_deviation(&oracle));
        if report.first_divergence.is_none() {
            if let Some((level, tensor, what)) = model.first_difference(&oracle) {
                let pick = |c: &crate::costmodel::AccessCounts| match (level, what) {
                    (Some(l), "reads") => c.levels[l].reads[tensor.index()],
                    (Some(l), _) => c.levels[l].writes[tensor.index()],
                    (None, "transfers") => c.transfers[tensor.index()],
                    (None, _) => c.hops[tensor.index()],
                };
                report.first_divergence = Some(Divergence {
                    trial,
                    level,
                    tensor,
                    what,
                    model: pick(&model),
                    oracle: pick(&oracle),
                    schedule: s.to_text(),
                });
            }
        }
    }
    Ok(report)
}
