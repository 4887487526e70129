use std::collections::BTreeSet;

use super::shape::resolve;
use super::{validate_graph, ArchError, LayerKind, NetworkGraph};

/// Removes the given output filters from a conv layer and propagates the
/// narrower channel dimension to every downstream consumer. Members of the
/// layer's residual channel group lose the same indices.
pub fn remove_filters(
    graph: &NetworkGraph,
    layer_id: &str,
    filter_indices: &BTreeSet<usize>,
) -> Result<NetworkGraph, ArchError> {
    let resolved;
    let graph = if graph.is_resolved() {
        graph
    } else {
        resolved = resolve(graph, graph.input_shape, false)?;
        &resolved
    };

    let layer = graph.layer(layer_id).ok_or_else(|| ArchError::UnknownLayer(layer_id.to_string()))?;
    if layer.protected {
        return Err(ArchError::Protected(layer_id.to_string()));
    }
    if layer.kind != LayerKind::Conv || !layer.prunable {
        return Err(ArchError::NotPrunable(layer_id.to_string()));
    }
    let group = graph.residual_group_of(layer_id);
    if group.is_some_and(|g| graph.group_is_protected(g)) {
        return Err(ArchError::Protected(layer_id.to_string()));
    }

    let filters = layer.resolved_out_channels().expect("resolved graph has channel counts");
    if filter_indices.is_empty() {
        return Err(ArchError::EmptySelection(layer_id.to_string()));
    }
    if let Some(&index) = filter_indices.iter().next_back().filter(|&&i| i >= filters) {
        return Err(ArchError::IndexOutOfRange { id: layer_id.to_string(), index, filters });
    }
    if filter_indices.len() >= filters {
        return Err(ArchError::WouldRemoveAll { id: layer_id.to_string(), requested: filter_indices.len(), filters });
    }

    let targets: Vec<String> = match group {
        Some(g) => {
            g.member_ids.iter().filter(|m| graph.layer(m).is_some_and(|l| l.kind == LayerKind::Conv)).cloned().collect()
        }
        None => vec![layer_id.to_string()],
    };

    let removed = filter_indices.len();
    let mut next = graph.clone();
    for id in &targets {
        let l = next.layer_mut(id).expect("group members exist");
        let width = l.out_channels.expect("conv declares its width");
        if width != filters {
            return Err(ArchError::InvalidResult(format!(
                "group member `{id}` has {width} filters, `{layer_id}` has {filters}"
            )));
        }
        l.out_channels = Some(width - removed);
    }

    let next = resolve(&next, next.input_shape, true)?;
    let report = validate_graph(&next);
    if !report.ok {
        return Err(ArchError::InvalidResult(report.render()));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{GraphBuilder, GroupReason, InputShape};

    fn set(range: std::ops::Range<usize>) -> BTreeSet<usize> {
        range.collect()
    }

    fn chain() -> NetworkGraph {
        let mut b = GraphBuilder::new(InputShape::new(3, 8, 8));
        let x = b.input("in");
        let c1 = b.conv(&x, "conv1", 64, 3, 1, 1);
        let a = b.activation(&c1, "relu1");
        let c2 = b.conv(&a, "conv2", 32, 3, 1, 1);
        b.output(&c2, "out");
        b.build().unwrap()
    }

    #[test]
    fn removal_narrows_layer_and_consumer() {
        let g = remove_filters(&chain(), "conv1", &set(0..16)).unwrap();
        let c1 = g.layer("conv1").unwrap();
        assert_eq!(c1.out_channels, Some(48));
        assert_eq!(c1.resolved_out_channels(), Some(48));
        assert_eq!(g.layer("relu1").unwrap().resolved_out_channels(), Some(48));
        assert_eq!(g.layer("conv2").unwrap().in_channels(), Some(48));
        assert_eq!(g.layer("conv2").unwrap().out_channels, Some(32));
    }

    #[test]
    fn input_graph_is_untouched() {
        let g = chain();
        let before = g.clone();
        let _ = remove_filters(&g, "conv1", &set(0..4)).unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn flatten_dense_shrinks_by_area() {
        let mut b = GraphBuilder::new(InputShape::new(3, 4, 4));
        let x = b.input("in");
        let c = b.conv(&x, "conv", 8, 3, 1, 0);
        let f = b.flatten(&c, "flat");
        b.dense(&f, "fc", 10);
        let g = b.build().unwrap();
        // oracle: flatten length rebuilt from channels x spatial area
        let s = g.layer("conv").unwrap().out_spatial().unwrap();
        assert_eq!((s.width, s.height), (2, 2));
        let before = g.layer("fc").unwrap().in_channels().unwrap();
        assert_eq!(before, 8 * s.width * s.height);
        let pruned = remove_filters(&g, "conv", &[1, 5].into()).unwrap();
        let after = pruned.layer("fc").unwrap().in_channels().unwrap();
        assert_eq!(after, 6 * s.width * s.height);
        assert_eq!(before - after, 8);
    }

    #[test]
    fn protected_layer_is_refused() {
        let mut b = GraphBuilder::new(InputShape::new(8, 8, 8));
        let x = b.input("in");
        let c = b.conv(&x, "branch", 8, 3, 1, 1);
        let s = b.add(&[&c, &x], "sum");
        b.output(&s, "out");
        b.group(GroupReason::ResidualAdd, &[c.clone(), s]);
        b.protect(&c);
        let g = b.build().unwrap();
        assert!(matches!(
            remove_filters(&g, "branch", &[0].into()),
            Err(ArchError::Protected(id)) if id == "branch"
        ));
    }

    #[test]
    fn projection_residual_prunes_in_lockstep() {
        let mut b = GraphBuilder::new(InputShape::new(3, 8, 8));
        let x = b.input("in");
        let main = b.conv(&x, "main", 16, 3, 1, 1);
        let proj = b.conv(&x, "proj", 16, 1, 1, 0);
        let s = b.add(&[&main, &proj], "sum");
        let after = b.conv(&s, "after", 4, 1, 1, 0);
        b.output(&after, "out");
        b.group(GroupReason::ResidualAdd, &[main, proj, s]);
        let g = b.build().unwrap();
        let pruned = remove_filters(&g, "main", &set(0..6)).unwrap();
        for id in ["main", "proj", "sum"] {
            assert_eq!(pruned.layer(id).unwrap().resolved_out_channels(), Some(10), "{id}");
        }
        assert_eq!(pruned.layer("after").unwrap().in_channels(), Some(10));
        assert!(validate_graph(&pruned).ok);
    }

    #[test]
    fn depthwise_follows_its_source() {
        let mut b = GraphBuilder::new(InputShape::new(3, 8, 8));
        let x = b.input("in");
        let e = b.conv(&x, "expand", 24, 1, 1, 0);
        let d = b.depthwise(&e, "dw", 3, 1, 1);
        b.layer_mut(&d).unwrap().out_channels = Some(24);
        let p = b.conv(&d, "project", 8, 1, 1, 0);
        b.output(&p, "out");
        b.group(GroupReason::DepthwiseTie, &[e, d]);
        let g = b.build().unwrap();
        let pruned = remove_filters(&g, "expand", &set(0..4)).unwrap();
        let dw = pruned.layer("dw").unwrap();
        assert_eq!(dw.in_channels(), Some(20));
        assert_eq!(dw.resolved_out_channels(), Some(20));
        assert_eq!(dw.out_channels, Some(20));
        assert_eq!(pruned.layer("project").unwrap().in_channels(), Some(20));
    }

    #[test]
    fn bad_selections_are_refused() {
        let g = chain();
        assert!(matches!(
            remove_filters(&g, "conv1", &[64].into()),
            Err(ArchError::IndexOutOfRange { index: 64, filters: 64, .. })
        ));
        assert!(matches!(remove_filters(&g, "conv1", &set(0..64)), Err(ArchError::WouldRemoveAll { .. })));
        assert!(matches!(remove_filters(&g, "conv1", &BTreeSet::new()), Err(ArchError::EmptySelection(_))));
        assert!(matches!(remove_filters(&g, "relu1", &[0].into()), Err(ArchError::NotPrunable(_))));
        assert!(matches!(remove_filters(&g, "nope", &[0].into()), Err(ArchError::UnknownLayer(_))));
    }
}
