use serde::Serialize;

use super::shape::{input_index, topo_order, unreachable, window_output};
use super::{ArchError, GroupReason, LayerKind, NetworkGraph, Spatial};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub layer_id: String,
    pub rule: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self { ok: violations.is_empty(), violations }
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    pub fn render(&self) -> String {
        if self.ok {
            return "ok\n".to_string();
        }
        self.violations.iter().map(|v| format!("{}: [{}] {}\n", v.layer_id, v.rule, v.message)).collect()
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, layer_id: &str, rule: &'static str, message: String) {
        self.0.push(Violation { layer_id: layer_id.to_string(), rule, message });
    }
}

/// Checks every structural, channel and shape invariant of `graph`.
/// Violations are reported as data; this never fails.
pub fn validate_graph(graph: &NetworkGraph) -> ValidationReport {
    let mut out = Collector(Vec::new());
    const GRAPH: &str = "<graph>";

    match input_index(graph) {
        Ok(i) => {
            for j in unreachable(graph, i) {
                out.push(&graph.layers[j].id, "reachable", "not reachable from the input layer".into());
            }
        }
        Err(e) => out.push(GRAPH, "single_input", e.to_string()),
    }
    match topo_order(graph) {
        Err(e @ ArchError::Cycle(_)) => out.push(GRAPH, "acyclic", e.to_string()),
        Err(e) => out.push(GRAPH, "edges", e.to_string()),
        Ok(_) => {}
    }

    for layer in &graph.layers {
        let id = layer.id.as_str();
        if layer.kind.is_windowed() && (layer.kernel_size.unwrap_or(0) == 0 || layer.stride == 0) {
            out.push(id, "kernel_geometry", "windowed layers need kernel_size >= 1 and stride >= 1".into());
        }
        if layer.prunable && (layer.kind != LayerKind::Conv || layer.protected) {
            out.push(
                id,
                "prunable_kind",
                format!(
                    "prunable layer must be an unprotected conv (kind {}, protected {})",
                    layer.kind, layer.protected
                ),
            );
        }
        let Some(shape) = layer.shape else {
            out.push(id, "unresolved_shape", "shapes have not been propagated".into());
            continue;
        };
        if layer.kind.declares_width() && layer.out_channels != Some(shape.out_channels) {
            out.push(
                id,
                "declared_width",
                format!("declared width {:?} but resolved {}", layer.out_channels, shape.out_channels),
            );
        }
        if layer.kind == LayerKind::DepthwiseConv && shape.in_channels != shape.out_channels {
            out.push(
                id,
                "depthwise_channels",
                format!("depthwise in {} != out {}", shape.in_channels, shape.out_channels),
            );
        }
        if layer.kind.is_windowed() {
            if let Some(k) = layer.kernel_size.filter(|&k| k > 0 && layer.stride > 0) {
                let expected = window_output(shape.in_spatial.width, k, layer.stride, layer.padding)
                    .zip(window_output(shape.in_spatial.height, k, layer.stride, layer.padding))
                    .map(|(w, h)| Spatial::new(w, h));
                if expected != Some(shape.out_spatial) {
                    out.push(
                        id,
                        "spatial_formula",
                        format!("out {} but window formula gives {:?}", shape.out_spatial, expected),
                    );
                }
            }
        }
        if layer.kind == LayerKind::Flatten && shape.out_channels != shape.in_channels * shape.in_spatial.area() {
            out.push(
                id,
                "flatten_length",
                format!("flatten length {} != {} x {}", shape.out_channels, shape.in_channels, shape.in_spatial),
            );
        }
        if layer.kind.preserves_channels() && layer.kind != LayerKind::Add && shape.in_channels != shape.out_channels {
            out.push(
                id,
                "channel_passthrough",
                format!("{} must keep channels: in {} out {}", layer.kind, shape.in_channels, shape.out_channels),
            );
        }
    }

    let index = graph.index_map();
    let get = |id: &str| index.get(id).map(|&i| &graph.layers[i]);
    let mut producers: std::collections::HashMap<&str, Vec<&str>> = std::collections::HashMap::new();
    for (p, c) in &graph.edges {
        producers.entry(c.as_str()).or_default().push(p.as_str());
    }

    for (p, c) in &graph.edges {
        let (Some(prod), Some(cons)) = (get(p), get(c)) else {
            continue;
        };
        let (Some(ps), Some(cs)) = (prod.shape, cons.shape) else {
            continue;
        };
        if cons.kind == LayerKind::Add {
            continue;
        }
        if cs.in_channels != ps.out_channels {
            let rule = if cons.kind == LayerKind::Dense && prod.kind == LayerKind::Flatten {
                "flatten_dense_dim"
            } else {
                "channel_mismatch"
            };
            out.push(
                c,
                rule,
                format!("`{c}` expects {} input channels but producer `{p}` emits {}", cs.in_channels, ps.out_channels),
            );
        }
        if cs.in_spatial != ps.out_spatial {
            out.push(
                c,
                "spatial_mismatch",
                format!("`{c}` expects input {} but producer `{p}` emits {}", cs.in_spatial, ps.out_spatial),
            );
        }
    }

    for layer in graph.layers.iter().filter(|l| l.kind == LayerKind::Add) {
        let widths: Vec<(String, Option<usize>)> = producers
            .get(layer.id.as_str())
            .into_iter()
            .flatten()
            .map(|&p| (p.to_string(), get(p).and_then(|l| l.shape).map(|s| s.out_channels)))
            .collect();
        if let Some((_, Some(first))) = widths.first() {
            if widths.iter().any(|(_, w)| *w != Some(*first)) {
                let detail = widths
                    .iter()
                    .map(|(p, w)| format!("{p}={}", w.map_or("?".into(), |w| w.to_string())))
                    .collect::<Vec<_>>()
                    .join(", ");
                out.push(&layer.id, "residual_mismatch", format!("add branches disagree: {detail}"));
            }
        }
    }

    for group in &graph.channel_groups {
        let widths: Vec<(&str, Option<usize>)> =
            group.member_ids.iter().map(|m| (m.as_str(), get(m).and_then(|l| l.resolved_out_channels()))).collect();
        if let Some(&(anchor, first)) = widths.first() {
            for &(m, w) in &widths[1..] {
                if w != first {
                    out.push(
                        m,
                        "group_channels",
                        format!(
                            "{} group member has {:?} channels, `{anchor}` has {:?}",
                            group.reason.as_str(),
                            w,
                            first
                        ),
                    );
                }
            }
        }
        if group.reason == GroupReason::ResidualAdd && has_identity_skip(graph, &group.member_ids) {
            for m in &group.member_ids {
                if let Some(l) = get(m).filter(|l| l.kind == LayerKind::Conv && !l.protected) {
                    out.push(
                        &l.id,
                        "residual_protection",
                        "conv in a residual group with an identity skip must be protected".into(),
                    );
                }
            }
        }
    }

    ValidationReport::from_violations(out.0)
}

/// True if some add in `members` receives a branch that reaches a non-conv
/// source through channel-transparent layers only.
pub(crate) fn has_identity_skip(graph: &NetworkGraph, members: &[String]) -> bool {
    members.iter().filter_map(|m| graph.layer(m)).filter(|l| l.kind == LayerKind::Add).any(|add| {
        graph.producers(&add.id).any(|p| {
            let mut cur = p;
            loop {
                let Some(l) = graph.layer(cur) else { return false };
                match l.kind {
                    LayerKind::Activation | LayerKind::Batchnorm => match graph.producers(cur).next() {
                        Some(next) => cur = next,
                        None => return true,
                    },
                    LayerKind::Conv => return false,
                    _ => return true,
                }
            }
        })
    })
}
