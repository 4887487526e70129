//! Shape inference over the layer DAG.

use std::collections::{BTreeSet, VecDeque};

use super::{ArchError, InputShape, LayerKind, LayerShape, NetworkGraph, Spatial};

/// Output extent along one axis for a square window: floor((in + 2p - k)/s) + 1.
/// Returns `None` when the window does not fit in the padded input.
pub fn window_output(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if kernel == 0 || stride == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Resolves channels and spatial extents for every layer.
pub fn propagate_shapes(graph: &NetworkGraph, input_shape: InputShape) -> Result<NetworkGraph, ArchError> {
    resolve(graph, input_shape, false)
}

/// Topological order of layer indices, ties broken by declaration order.
pub(crate) fn topo_order(graph: &NetworkGraph) -> Result<Vec<usize>, ArchError> {
    let index = graph.index_map();
    let n = graph.layers.len();
    let mut indegree = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (p, c) in &graph.edges {
        let (Some(&pi), Some(&ci)) = (index.get(p.as_str()), index.get(c.as_str())) else {
            let missing = if index.contains_key(p.as_str()) { c } else { p };
            return Err(ArchError::DanglingEdge { producer: p.clone(), consumer: c.clone(), missing: missing.clone() });
        };
        indegree[ci] += 1;
        out[pi].push(ci);
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &out[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).expect("cycle leaves a layer");
        return Err(ArchError::Cycle(graph.layers[stuck].id.clone()));
    }
    Ok(order)
}

pub(crate) fn input_index(graph: &NetworkGraph) -> Result<usize, ArchError> {
    let inputs: Vec<usize> =
        graph.layers.iter().enumerate().filter(|(_, l)| l.kind == LayerKind::Input).map(|(i, _)| i).collect();
    match inputs.as_slice() {
        [only] => Ok(*only),
        _ => Err(ArchError::InputCount(inputs.len())),
    }
}

/// Layers not reachable from the input, in declaration order.
pub(crate) fn unreachable(graph: &NetworkGraph, input: usize) -> Vec<usize> {
    let index = graph.index_map();
    let mut seen = vec![false; graph.layers.len()];
    let mut queue = VecDeque::from([input]);
    seen[input] = true;
    while let Some(i) = queue.pop_front() {
        for c in graph.consumers(&graph.layers[i].id) {
            if let Some(&ci) = index.get(c) {
                if !seen[ci] {
                    seen[ci] = true;
                    queue.push_back(ci);
                }
            }
        }
    }
    (0..graph.layers.len()).filter(|&i| !seen[i]).collect()
}

/// Shape resolution. With `sync_declared`, a declared depthwise width is
/// overwritten by the derived one instead of being checked against it;
/// filter removal uses this after shrinking an upstream conv.
pub(crate) fn resolve(
    graph: &NetworkGraph,
    input_shape: InputShape,
    sync_declared: bool,
) -> Result<NetworkGraph, ArchError> {
    let input = input_index(graph)?;
    let order = topo_order(graph)?;
    if let Some(&i) = unreachable(graph, input).first() {
        return Err(ArchError::Unreachable(graph.layers[i].id.clone()));
    }

    let index = graph.index_map();
    let mut out = graph.clone();
    out.input_shape = input_shape;
    let mut shapes: Vec<Option<LayerShape>> = vec![None; graph.layers.len()];

    for i in order {
        let layer = &graph.layers[i];
        let producers: Vec<LayerShape> = graph
            .producers(&layer.id)
            .map(|p| shapes[index[p]].expect("producers resolve first in topological order"))
            .collect();

        let expected = match layer.kind {
            LayerKind::Input => (producers.is_empty(), "0"),
            LayerKind::Add => (producers.len() >= 2, ">= 2"),
            _ => (producers.len() == 1, "1"),
        };
        if !expected.0 {
            return Err(ArchError::ProducerCount {
                id: layer.id.clone(),
                kind: layer.kind,
                expected: expected.1,
                found: producers.len(),
            });
        }

        let shape = match layer.kind {
            LayerKind::Input => {
                if let Some(declared) = layer.out_channels.filter(|&c| c != input_shape.channels) {
                    return Err(ArchError::DeclaredMismatch {
                        id: layer.id.clone(),
                        field: "out_channels",
                        declared,
                        derived: input_shape.channels,
                    });
                }
                LayerShape {
                    in_channels: input_shape.channels,
                    out_channels: input_shape.channels,
                    in_spatial: input_shape.spatial(),
                    out_spatial: input_shape.spatial(),
                }
            }
            LayerKind::Add => {
                let first = producers[0];
                if let Some(bad) = producers
                    .iter()
                    .find(|p| p.out_channels != first.out_channels || p.out_spatial != first.out_spatial)
                {
                    return Err(ArchError::AddMismatch {
                        id: layer.id.clone(),
                        detail: format!(
                            "{}ch {} vs {}ch {}",
                            first.out_channels, first.out_spatial, bad.out_channels, bad.out_spatial
                        ),
                    });
                }
                LayerShape {
                    in_channels: first.out_channels,
                    out_channels: first.out_channels,
                    in_spatial: first.out_spatial,
                    out_spatial: first.out_spatial,
                }
            }
            kind => {
                let src = producers[0];
                let in_channels = src.out_channels;
                let in_spatial = src.out_spatial;
                let out_spatial = if kind.is_windowed() {
                    let k = layer
                        .kernel_size
                        .ok_or_else(|| ArchError::MissingField { id: layer.id.clone(), field: "kernel_size" })?;
                    let axis = |x: usize| {
                        window_output(x, k, layer.stride, layer.padding).ok_or(ArchError::NonPositiveSpatial {
                            id: layer.id.clone(),
                            kernel: k,
                            padded: x + 2 * layer.padding,
                            input: in_spatial,
                            padding: layer.padding,
                        })
                    };
                    Spatial::new(axis(in_spatial.width)?, axis(in_spatial.height)?)
                } else if matches!(kind, LayerKind::GlobalAvgPool | LayerKind::Flatten | LayerKind::Dense) {
                    Spatial::unit()
                } else {
                    in_spatial
                };
                let out_channels = match kind {
                    LayerKind::Conv => declared(layer)?,
                    LayerKind::Dense => {
                        if in_spatial != Spatial::unit() {
                            return Err(ArchError::DenseInput { id: layer.id.clone(), spatial: in_spatial });
                        }
                        declared(layer)?
                    }
                    LayerKind::Flatten => in_channels * in_spatial.area(),
                    LayerKind::DepthwiseConv => match layer.out_channels {
                        Some(d) if d != in_channels && !sync_declared => {
                            return Err(ArchError::DeclaredMismatch {
                                id: layer.id.clone(),
                                field: "out_channels",
                                declared: d,
                                derived: in_channels,
                            })
                        }
                        _ => in_channels,
                    },
                    _ => in_channels,
                };
                LayerShape { in_channels, out_channels, in_spatial, out_spatial }
            }
        };
        shapes[i] = Some(shape);
    }

    for (layer, shape) in out.layers.iter_mut().zip(shapes) {
        layer.shape = shape;
        if sync_declared && layer.kind == LayerKind::DepthwiseConv && layer.out_channels.is_some() {
            layer.out_channels = shape.map(|s| s.out_channels);
        }
    }
    Ok(out)
}

fn declared(layer: &super::LayerSpec) -> Result<usize, ArchError> {
    layer.out_channels.ok_or_else(|| ArchError::MissingField { id: layer.id.clone(), field: "out_channels" })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::GraphBuilder;

    /// Counts window placements by sliding over the padded axis.
    fn enumerate_positions(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
        let padded = input + 2 * padding;
        let mut count = 0;
        let mut start = 0;
        while start + kernel <= padded {
            count += 1;
            start += stride;
        }
        count
    }

    #[test]
    fn fig_style_valid_conv() {
        assert_eq!(window_output(32, 3, 1, 0), Some(30));
    }

    #[test]
    fn pool_halves() {
        assert_eq!(enumerate_positions(32, 2, 2, 0), 16);
        assert_eq!(window_output(32, 2, 2, 0), Some(16));
    }

    #[test]
    fn unit_kernel_is_identity() {
        for n in 1..40 {
            assert_eq!(window_output(n, 1, 1, 0), Some(n));
        }
    }

    #[test]
    fn formula_matches_enumeration() {
        for input in 1..20 {
            for kernel in 1..8 {
                for stride in 1..5 {
                    for padding in 0..4 {
                        let expected = match enumerate_positions(input, kernel, stride, padding) {
                            0 => None,
                            n => Some(n),
                        };
                        assert_eq!(window_output(input, kernel, stride, padding), expected);
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_larger_than_input_fails() {
        let mut b = GraphBuilder::new(InputShape::new(3, 4, 4));
        let x = b.input("in");
        b.conv(&x, "c", 8, 7, 1, 1);
        let err = propagate_shapes(&b.graph(), InputShape::new(3, 4, 4)).unwrap_err();
        assert!(matches!(err, ArchError::NonPositiveSpatial { .. }));
    }

    #[test]
    fn add_mismatch_fails() {
        let mut b = GraphBuilder::new(InputShape::new(3, 8, 8));
        let x = b.input("in");
        let l = b.conv(&x, "l", 64, 3, 1, 1);
        let r = b.conv(&x, "r", 48, 3, 1, 1);
        b.add(&[&l, &r], "sum");
        let err = propagate_shapes(&b.graph(), InputShape::new(3, 8, 8)).unwrap_err();
        assert!(matches!(err, ArchError::AddMismatch { id, .. } if id == "sum"));
    }

    #[test]
    fn flatten_multiplies_area() {
        let mut b = GraphBuilder::new(InputShape::new(3, 4, 4));
        let x = b.input("in");
        let c = b.conv(&x, "c", 8, 3, 1, 0);
        let f = b.flatten(&c, "flat");
        b.dense(&f, "fc", 10);
        let g = propagate_shapes(&b.graph(), InputShape::new(3, 4, 4)).unwrap();
        assert_eq!(g.layer("c").unwrap().out_spatial(), Some(Spatial::new(2, 2)));
        assert_eq!(g.layer("flat").unwrap().resolved_out_channels(), Some(32));
        assert_eq!(g.layer("fc").unwrap().in_channels(), Some(32));
    }

    #[test]
    fn dense_after_spatial_map_fails() {
        let mut b = GraphBuilder::new(InputShape::new(3, 4, 4));
        let x = b.input("in");
        let c = b.conv(&x, "c", 8, 3, 1, 0);
        b.dense(&c, "fc", 10);
        assert!(matches!(propagate_shapes(&b.graph(), InputShape::new(3, 4, 4)), Err(ArchError::DenseInput { .. })));
    }

    #[test]
    fn cycle_is_detected() {
        let mut b = GraphBuilder::new(InputShape::new(3, 4, 4));
        let x = b.input("in");
        let a = b.activation(&x, "a");
        let c = b.activation(&a, "c");
        let mut g = b.graph();
        g.edges.push((c, a));
        assert!(matches!(propagate_shapes(&g, g.input_shape), Err(ArchError::Cycle(_))));
    }
}
