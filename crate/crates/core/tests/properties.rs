use std::collections::BTreeSet;

use proptest::prelude::*;
use prunekit::arch::GraphBuilder;
use prunekit::complexity::Mode;
use prunekit::{
    network_complexity, parse_architecture, propagate_shapes, relative_weights, remove_filters, serialize_architecture,
    validate_graph, zoo, InputShape, LayerKind, NetworkGraph, PruneRng,
};

#[derive(Debug, Clone)]
struct ConvSpec {
    filters: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    pool: bool,
}

fn conv_spec() -> impl Strategy<Value = ConvSpec> {
    (1usize..16, 1usize..=3, 1usize..=2, 0usize..=1, any::<bool>())
        .prop_map(|(filters, kernel, stride, padding, pool)| ConvSpec { filters, kernel, stride, padding, pool })
}

/// Random conv chain with optional pools and a dense head after either a
/// flatten or a global pool. Returns `None` when the spatial extent runs out.
fn chain(channels: usize, size: usize, convs: &[ConvSpec], gap_head: bool, units: usize) -> Option<NetworkGraph> {
    let mut b = GraphBuilder::new(InputShape::new(channels, size, size));
    let mut prev = b.input("in");
    for (i, c) in convs.iter().enumerate() {
        prev = b.conv(&prev, &format!("conv{i}"), c.filters, c.kernel, c.stride, c.padding);
        prev = b.activation(&prev, &format!("relu{i}"));
        if c.pool {
            prev = b.pool_max(&prev, &format!("pool{i}"), 2, 2);
        }
    }
    prev = if gap_head { b.global_avg_pool(&prev, "gap") } else { b.flatten(&prev, "flat") };
    prev = b.dense(&prev, "fc", units);
    b.output(&prev, "out");
    b.build().ok()
}

fn chain_graph() -> impl Strategy<Value = NetworkGraph> {
    (1usize..=4, 6usize..=20, prop::collection::vec(conv_spec(), 1..=5), any::<bool>(), 1usize..=12)
        .prop_filter_map("spatial extent exhausted", |(c, s, convs, gap, units)| chain(c, s, &convs, gap, units))
}

fn zoo_graph() -> impl Strategy<Value = NetworkGraph> {
    prop::sample::select(zoo::names().collect::<Vec<_>>()).prop_map(|n| zoo::builtin_arch(n).unwrap())
}

fn any_graph() -> impl Strategy<Value = NetworkGraph> {
    prop_oneof![3 => chain_graph(), 1 => zoo_graph()]
}

fn width(g: &NetworkGraph, id: &str) -> usize {
    g.layer(id).unwrap().resolved_out_channels().unwrap()
}

fn assert_closed(g: &NetworkGraph) {
    let report = validate_graph(g);
    assert!(report.ok, "{}", report.render());
    for (p, c) in &g.edges {
        let produced = width(g, p);
        let consumer = g.layer(c).unwrap();
        if consumer.kind == LayerKind::Dense {
            let s = g.layer(p).unwrap().out_spatial().unwrap();
            assert_eq!(s.area(), 1, "dense {c} fed a spatial map");
        }
        assert_eq!(consumer.in_channels(), Some(produced), "{p} -> {c}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Any sequence of valid filter removals leaves every producer/consumer
    /// pair agreeing on channel counts.
    #[test]
    fn removal_sequences_preserve_channel_closure(
        g in any_graph(),
        ops in prop::collection::vec((any::<u64>(), any::<u64>()), 1..6),
    ) {
        let baseline = g.clone();
        let base_cost = network_complexity(&g, 2).unwrap().totals;
        let mut g = g;
        let mut prev_cost = base_cost;
        for (pick, seed) in ops {
            let eligible: Vec<String> =
                g.prunable_ids().into_iter().filter(|id| width(&g, id) > 1).collect();
            if eligible.is_empty() {
                break;
            }
            let id = &eligible[(pick % eligible.len() as u64) as usize];
            let n = width(&g, id);
            let count = 1 + (seed % (n as u64 - 1)) as usize;
            let indices = PruneRng::new(seed).distinct_indices(n, count);
            let next = remove_filters(&g, id, &indices).unwrap();
            prop_assert_eq!(width(&next, id), n - count);
            assert_closed(&next);

            let cost = network_complexity(&next, 2).unwrap().totals;
            prop_assert!(cost.params < prev_cost.params);
            prop_assert!(cost.flops < prev_cost.flops);
            prop_assert!(cost.memory_bytes < prev_cost.memory_bytes);
            prev_cost = cost;
            g = next;
        }
        for group in baseline.channel_groups.iter().filter(|gr| baseline.group_is_protected(gr)) {
            for m in &group.member_ids {
                prop_assert_eq!(width(&g, m), width(&baseline, m));
            }
        }
        for l in baseline.layers.iter().filter(|l| l.protected) {
            prop_assert_eq!(width(&g, &l.id), width(&baseline, &l.id));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn serialization_round_trips(g in any_graph(), seed in any::<u64>()) {
        // prune one layer so non-zoo widths are exercised too
        let g = match g.prunable_ids().into_iter().find(|id| width(&g, id) > 1) {
            Some(id) => {
                let idx: BTreeSet<usize> = PruneRng::new(seed).distinct_indices(width(&g, &id), 1);
                remove_filters(&g, &id, &idx).unwrap()
            }
            None => g,
        };
        let text = serialize_architecture(&g);
        let parsed = parse_architecture(&text).unwrap();
        let resolved = propagate_shapes(&parsed, parsed.input_shape).unwrap();
        prop_assert_eq!(&resolved, &g);
        prop_assert_eq!(serialize_architecture(&resolved), text);
    }

    #[test]
    fn totals_are_per_layer_sums(g in any_graph(), factor in 1u32..=2) {
        let p = network_complexity(&g, factor).unwrap();
        let sum: prunekit::Totals = p.per_layer.values().copied().sum();
        prop_assert_eq!(sum, p.totals);
        prop_assert_eq!(p.totals.memory_bytes, 4 * p.totals.params);
    }

    #[test]
    fn weights_are_a_distribution_and_factor_free(g in any_graph()) {
        let ids = g.prunable_ids();
        prop_assume!(!ids.is_empty());
        let one = network_complexity(&g, 1).unwrap();
        let two = network_complexity(&g, 2).unwrap();
        for mode in Mode::ALL {
            let w1 = relative_weights(&one, mode, &ids).unwrap();
            let w2 = relative_weights(&two, mode, &ids).unwrap();
            prop_assert_eq!(&w1, &w2);
            prop_assert!((w1.sum() - 1.0).abs() < 1e-12);
            prop_assert!(w1.iter().all(|(_, p)| p > 0.0 && p <= 1.0));
        }
    }

    #[test]
    fn conv_macs_match_enumeration(g in chain_graph(), factor in 1u32..=2) {
        let p = network_complexity(&g, factor).unwrap();
        for l in g.layers.iter().filter(|l| l.kind == LayerKind::Conv) {
            let shape = l.shape.unwrap();
            let k = l.kernel_size.unwrap();
            let padded = shape.in_spatial.width + 2 * l.padding;
            let mut macs = 0u64;
            let mut ox = 0;
            while ox * l.stride + k <= padded {
                let mut oy = 0;
                while oy * l.stride + k <= shape.in_spatial.height + 2 * l.padding {
                    macs += (k * k * shape.in_channels * shape.out_channels) as u64;
                    oy += 1;
                }
                ox += 1;
            }
            prop_assert_eq!(p.per_layer[&l.id].flops, u64::from(factor) * macs);
        }
    }
}
