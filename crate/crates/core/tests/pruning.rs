use std::collections::BTreeMap;

use prunekit::complexity::Mode;
use prunekit::{
    builtin_arch, network_complexity, prune_step, prune_to_target, relative_weights, validate_graph, PruneConfig,
    PruneRng, Terminal,
};

#[test]
fn step_sampling_tracks_relative_weights() {
    let g = builtin_arch("fig3_toy").unwrap();
    let profile = network_complexity(&g, 2).unwrap();
    for mode in Mode::ALL {
        let weights = relative_weights(&profile, mode, &g.prunable_ids()).unwrap();
        let cfg = PruneConfig::new(mode, 0, 0.1, 0);
        let mut rng = PruneRng::new(123);
        let mut hits: BTreeMap<String, usize> = BTreeMap::new();
        let draws = 20_000;
        for i in 0..draws {
            let (_, step) = prune_step(&g, &cfg, &mut rng, i + 1).unwrap();
            assert_eq!(step.weight_vector, weights);
            *hits.entry(step.sampled_layer).or_default() += 1;
        }
        for (id, p) in weights.iter() {
            let f = hits.get(id).copied().unwrap_or(0) as f64 / draws as f64;
            assert!((f - p).abs() < 0.015, "{mode} {id}: {f} vs {p}");
        }
    }
}

#[test]
fn traces_are_reproducible_and_seed_sensitive() {
    let g = builtin_arch("mobilenetv2_cifar10").unwrap();
    let base = network_complexity(&g, 2).unwrap().totals.memory_bytes;
    let cfg = PruneConfig::new(Mode::Memory, base * 7 / 10, 0.2, 5);
    let (a_graph, a) = prune_to_target(&g, &cfg).unwrap();
    let (b_graph, b) = prune_to_target(&g, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a_graph, b_graph);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let other = PruneConfig { seed: 6, ..cfg };
    let (_, c) = prune_to_target(&g, &other).unwrap();
    assert_ne!(a.steps, c.steps);
}

#[test]
fn resnet_prunes_only_bottleneck_interiors() {
    let g = builtin_arch("resnet50_cifar100").unwrap();
    let base = network_complexity(&g, 2).unwrap().totals.params;
    let cfg = PruneConfig::new(Mode::Params, base / 2, 0.3, 1);
    let (pruned, trace) = prune_to_target(&g, &cfg).unwrap();
    assert!(validate_graph(&pruned).ok);
    for step in &trace.steps {
        let l = g.layer(&step.sampled_layer).unwrap();
        assert!(!l.protected);
        assert!(g.residual_group_of(&l.id).is_none());
    }
    assert_ne!(trace.terminal, Terminal::MaxIterations);
}

#[test]
fn trace_json_round_trips() {
    let g = builtin_arch("vgg16_cifar10").unwrap();
    let cfg = PruneConfig::new(Mode::Flops, 400_000_000, 0.1, 2);
    let (_, trace) = prune_to_target(&g, &cfg).unwrap();
    let text = serde_json::to_string_pretty(&trace).unwrap();
    let back: prunekit::PruneTrace = serde_json::from_str(&text).unwrap();
    assert_eq!(back.steps.len(), trace.steps.len());
    assert_eq!(back.final_totals(), trace.final_totals());
    assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
}
