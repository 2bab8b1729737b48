//! The closed-form counts must agree exactly with the loop-by-loop
//! simulator, and every schedule must compute the same output as the plain
//! convolution.

use dnn_dse::archmodel::{ArchSpec, MemLevel};
use dnn_dse::costmodel::access_counts;
use dnn_dse::simoracle::{execute_scheduled, reference_conv, simulate, TensorData};
use dnn_dse::validation::{random_schedule, validate_layer};
use dnn_dse::workload::{LayerShape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn archs() -> Vec<ArchSpec> {
    vec![
        ArchSpec::new("dram-only", 1, 1, vec![MemLevel::dram(4.0)]),
        ArchSpec::new("rf-dram", 1, 1, vec![MemLevel::rf(256, 4.0), MemLevel::dram(4.0)]),
        ArchSpec::new(
            "grid",
            4,
            4,
            vec![MemLevel::rf(256, 4.0), MemLevel::interpe(), MemLevel::sram(32768, 16.0), MemLevel::dram(4.0)],
        ),
        ArchSpec::new(
            "no-interpe",
            2,
            4,
            vec![MemLevel::rf(256, 4.0), MemLevel::sram(32768, 16.0), MemLevel::dram(4.0)],
        ),
        ArchSpec::new(
            "two-rf",
            4,
            2,
            vec![
                MemLevel::rf(64, 4.0),
                MemLevel::rf(512, 4.0),
                MemLevel::interpe(),
                MemLevel::sram(32768, 16.0),
                MemLevel::dram(4.0),
            ],
        ),
        ArchSpec::new(
            "line",
            8,
            1,
            vec![MemLevel::rf(128, 4.0), MemLevel::interpe(), MemLevel::sram(32768, 16.0), MemLevel::dram(4.0)],
        ),
    ]
}

fn layer_strategy() -> impl Strategy<Value = LayerShape> {
    (1u64..=4, 1u64..=8, 1u64..=8, 1u64..=6, 1u64..=6, 1u64..=3, 1u64..=3)
        .prop_map(|(b, k, c, x, y, fx, fy)| LayerShape::conv(b, k, c, x, y, fx, fy).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(160))]

    #[test]
    fn model_counts_equal_simulated_counts(layer in layer_strategy(), arch_ix in 0usize..6, seed in any::<u64>()) {
        let arch = &archs()[arch_ix];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_schedule(&layer, arch, &mut rng);
        let model = access_counts(&layer, &s, arch);
        let oracle = simulate(&layer, &s, arch).unwrap();
        prop_assert_eq!(model.first_difference(&oracle), None, "schedule:\n{}", s.to_text());
        prop_assert_eq!(model, oracle);
    }

    #[test]
    fn scheduled_execution_is_bit_exact(layer in layer_strategy(), arch_ix in 0usize..6, seed in any::<u64>()) {
        let arch = &archs()[arch_ix];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = TensorData::random(&layer, Tensor::I, &mut rng);
        let weight = TensorData::random(&layer, Tensor::W, &mut rng);
        let s = random_schedule(&layer, arch, &mut rng);
        let expected = reference_conv(&layer, &input, &weight).unwrap();
        let (out, counts) = execute_scheduled(&layer, &s, arch, &input, &weight).unwrap();
        prop_assert_eq!(out, expected);
        prop_assert_eq!(counts, access_counts(&layer, &s, arch));
    }
}

#[test]
fn validation_passes_on_every_arch() {
    let layer = LayerShape::conv(2, 6, 5, 4, 4, 3, 3).unwrap();
    for (i, arch) in archs().iter().enumerate() {
        let r = validate_layer(&layer, arch, 20, i as u64).unwrap();
        assert!(r.passed(), "{}: {:?}", arch.name, r.first_divergence.map(|d| d.to_string()));
    }
}

#[test]
fn large_layers_are_shrunk_before_simulation() {
    let big = LayerShape::conv(16, 384, 256, 13, 13, 3, 3).unwrap();
    let r = validate_layer(&big, &archs()[2], 3, 1).unwrap();
    assert_eq!(r.shrunk_from, Some(big));
    assert!(r.passed());
}

#[test]
fn reference_conv_matches_hand_computation() {
    // One output channel, 2x2 input, 2x1 filter: out[x, 0] = in[x, 0] * w0 + in[x, 1] * w1.
    let layer = LayerShape::conv(1, 1, 1, 2, 1, 1, 2).unwrap();
    let mut input = TensorData::for_layer(&layer, Tensor::I);
    let mut weight = TensorData::for_layer(&layer, Tensor::W);
    input.set([0, 0, 0, 0], 3);
    input.set([0, 0, 0, 1], -2);
    input.set([0, 0, 1, 0], 5);
    input.set([0, 0, 1, 1], 7);
    weight.set([0, 0, 0, 0], 4);
    weight.set([0, 0, 0, 1], -1);
    let out = reference_conv(&layer, &input, &weight).unwrap();
    assert_eq!(out.get([0, 0, 0, 0]), 3 * 4 + 2);
    assert_eq!(out.get([0, 0, 1, 0]), 5 * 4 - 7);
}

#[test]
fn mismatched_tensor_extents_are_rejected() {
    let layer = LayerShape::conv(1, 2, 2, 3, 3, 1, 1).unwrap();
    let other = LayerShape::conv(1, 2, 3, 3, 3, 1, 1).unwrap();
    let input = TensorData::for_layer(&other, Tensor::I);
    let weight = TensorData::for_layer(&layer, Tensor::W);
    assert!(reference_conv(&layer, &input, &weight).is_err());
}
