use dnn_dse::archmodel::{validate_arch, ArchSpec, MemLevel};
use dnn_dse::costmodel::energy;
use dnn_dse::optimizer::{
    adjacent_ratios, all_dataflows, assemble_design, exhaustive_search, for_each_blocking, full_search,
    pruned_search, sweep_pe_array, Objective, SearchConstraints,
};
use dnn_dse::schedule::{enumerate_blockings, validate_schedule};
use dnn_dse::workload::{make_fc, LayerShape, Network};
use dnn_dse::Error;

fn network(text: &str) -> Network {
    Network::parse(text, "n").unwrap()
}

fn tiny_net() -> Network {
    network(include_str!("../data/networks/tiny-net.txt"))
}

/// Small enough that `full_search` (every arch, every dataflow) runs in
/// seconds.
fn desk_constraints() -> SearchConstraints {
    SearchConstraints {
        arrays: vec![(4, 4)],
        rf_sizes: vec![16, 32, 64, 128],
        rf2_sizes: vec![None, Some(128), Some(256)],
        sram_sizes: vec![2048, 4096, 8192],
        ..Default::default()
    }
}

fn desk_suite() -> Vec<Network> {
    vec![
        tiny_net(),
        network("network pair\nlayer a conv B=1 K=8 C=8 X=4 Y=4 FX=3 FY=3\nlayer b conv B=1 K=8 C=8 X=4 Y=4 FX=1 FY=1\n"),
        network("network mlp\nlayer f1 fc B=4 K=32 C=64\nlayer f2 fc B=4 K=16 C=32\n"),
    ]
}

#[test]
fn exhaustive_search_matches_an_independent_enumeration() {
    let arch = ArchSpec::new(
        "small",
        2,
        2,
        vec![MemLevel::rf(32, 4.0), MemLevel::interpe(), MemLevel::sram(1024, 16.0), MemLevel::dram(4.0)],
    );
    let layer = LayerShape::conv(2, 4, 2, 3, 2, 2, 1).unwrap();
    let dataflows = all_dataflows(&layer, &arch);
    let (s, r) = exhaustive_search(&layer, &arch, &dataflows).unwrap();
    let brute = dataflows
        .iter()
        .flat_map(|df| enumerate_blockings(&layer, df, &arch))
        .map(|s| energy(&layer, &s, &arch).total_energy)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(r.total_energy, brute);
    assert_eq!(energy(&layer, &s, &arch).total_energy, brute);
}

#[test]
fn blocking_energies_cover_the_search_result() {
    let arch = ArchSpec::new(
        "small",
        2,
        2,
        vec![MemLevel::rf(64, 4.0), MemLevel::interpe(), MemLevel::sram(4096, 16.0), MemLevel::dram(4.0)],
    );
    let layer = make_fc(16, 12, 4).unwrap();
    for df in all_dataflows(&layer, &arch) {
        let mut min = f64::INFINITY;
        for_each_blocking(&layer, &arch, &df, |e, _| min = min.min(e));
        let (_, r) = exhaustive_search(&layer, &arch, std::slice::from_ref(&df)).unwrap();
        assert_eq!(r.total_energy, min, "{df}");
    }
}

#[test]
fn pruned_search_stays_near_ground_truth() {
    let c = desk_constraints();
    for net in desk_suite() {
        let pruned = pruned_search(&net, &c).unwrap();
        let full = full_search(&net, &c).unwrap();
        let ratio = pruned.total.total_energy / full.total.total_energy;
        assert!(ratio >= 1.0 - 1e-12, "{}: pruned beat ground truth ({ratio})", net.name);
        assert!(ratio <= 1.25, "{}: pruned is {ratio:.3}x ground truth", net.name);
    }
}

#[test]
fn returned_designs_are_valid_and_obey_the_ratio_rule() {
    let c = desk_constraints();
    for net in desk_suite() {
        let d = pruned_search(&net, &c).unwrap();
        assert!(validate_arch(&d.arch).is_ok());
        for r in adjacent_ratios(&d.arch) {
            assert!((4.0..=16.0).contains(&r), "{}: ratio {r}", d.arch.name);
        }
        for l in &d.layers {
            assert!(validate_schedule(&l.layer, &l.schedule, &d.arch).is_ok());
        }
    }
}

#[test]
fn search_is_deterministic() {
    let c = desk_constraints();
    let net = tiny_net();
    let a = pruned_search(&net, &c).unwrap();
    let b = pruned_search(&net, &c).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.schedules_text(), b.schedules_text());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c3 = pool.install(|| pruned_search(&net, &c).unwrap());
    assert_eq!(a, c3);
}

#[test]
fn pinned_constraints_degenerate_to_per_layer_search() {
    let net = tiny_net();
    let c = SearchConstraints {
        arrays: vec![(4, 4)],
        rf_sizes: vec![32],
        sram_sizes: vec![4096],
        ..Default::default()
    };
    let d = pruned_search(&net, &c).unwrap();
    let arch = &c.candidate_archs()[0];
    assert_eq!(&d.arch, arch);
    let mut plain = Vec::new();
    for l in &d.layers {
        let dfs = dnn_dse::optimizer::ck_dataflows(&l.layer, arch);
        let (s, _) = exhaustive_search(&l.layer, arch, &dfs).unwrap();
        // A layer either keeps its own optimum or is held on chip whole.
        assert!(l.schedule == s || l.resident, "{}", l.name);
        plain.push((l.name.clone(), l.layer, s));
    }
    let plain = assemble_design(arch, plain, Objective::Energy).unwrap();
    assert!(d.total.total_energy <= plain.total.total_energy);
}

#[test]
fn ratio_rule_failure_names_the_constraint() {
    let c = SearchConstraints {
        arrays: vec![(4, 4)],
        rf_sizes: vec![16],
        sram_sizes: vec![65536],
        ..Default::default()
    };
    match pruned_search(&tiny_net(), &c) {
        Err(Error::NoSolution(msg)) => assert!(msg.contains("ratio"), "{msg}"),
        other => panic!("expected no solution, got {other:?}"),
    }
}

#[test]
fn utilization_floor_can_make_the_search_infeasible() {
    let c = SearchConstraints {
        min_utilization: Some(1.0),
        ..desk_constraints()
    };
    let net = network("network odd\nlayer a fc B=1 K=3 C=3\n");
    match pruned_search(&net, &c) {
        Err(Error::NoSolution(msg)) => assert!(msg.contains("utilization"), "{msg}"),
        other => panic!("expected no solution, got {other:?}"),
    }
}

#[test]
fn edp_objective_never_loses_on_edp() {
    let net = tiny_net();
    let e = pruned_search(&net, &desk_constraints()).unwrap();
    let edp = pruned_search(
        &net,
        &SearchConstraints {
            objective: Objective::EnergyDelayProduct,
            ..desk_constraints()
        },
    )
    .unwrap();
    let value = |d: &dnn_dse::optimizer::DesignPoint| d.total.total_energy * d.total.runtime as f64;
    assert!(value(&edp) <= value(&e) * (1.0 + 1e-12));
    assert!(edp.total.total_energy >= e.total.total_energy * (1.0 - 1e-12));
}

#[test]
fn sweep_of_one_array_equals_pruned_search() {
    let net = tiny_net();
    let c = desk_constraints();
    let sweep = sweep_pe_array(&net, &[(4, 4)], &c).unwrap();
    assert_eq!(sweep.len(), 1);
    assert_eq!(sweep[0].1, pruned_search(&net, &c).unwrap());
    assert!(sweep_pe_array(&net, &[(4, 4), (2, 2)], &c).is_err());
}

#[test]
fn resident_layers_skip_the_dram_round_trip() {
    let arch = ArchSpec::new(
        "big",
        2,
        2,
        vec![MemLevel::rf(64, 4.0), MemLevel::interpe(), MemLevel::sram(1 << 20, 16.0), MemLevel::dram(4.0)],
    );
    let a = make_fc(16, 8, 2).unwrap();
    let b = make_fc(8, 4, 2).unwrap();
    let sa = dnn_dse::schedule::Schedule::trivial(&a, 3);
    let sb = dnn_dse::schedule::Schedule::trivial(&b, 3);
    // Move every factor from DRAM into the SRAM level so both layers are resident.
    let resident = |mut s: dnn_dse::schedule::Schedule| {
        s.levels.swap(1, 2);
        s
    };
    let (sa, sb) = (resident(sa), resident(sb));
    let d = assemble_design(
        &arch,
        vec![("a".into(), a, sa.clone()), ("b".into(), b, sb.clone())],
        Objective::Energy,
    )
    .unwrap();
    assert!(d.layers.iter().all(|l| l.resident));
    let dram = arch.num_storage_levels() - 1;
    let alone_a = energy(&a, &sa, &arch);
    let alone_b = energy(&b, &sb, &arch);
    assert_eq!(d.layers[0].report.counts.levels[dram].writes[2], 0);
    assert_eq!(d.layers[1].report.counts.levels[dram].reads[0], 0);
    assert!(d.total.total_energy < alone_a.total_energy + alone_b.total_energy);
    assert_eq!(alone_a.counts.levels[dram].writes[2], 16);
}
