//! JSON interchange format for architectures.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{ArchError, ChannelGroup, GroupReason, InputShape, LayerKind, LayerSpec, NetworkGraph};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchDoc {
    format_version: u64,
    input_shape: [usize; 3],
    layers: Vec<LayerDoc>,
    #[serde(default)]
    edges: Vec<(String, String)>,
    #[serde(default)]
    channel_groups: Vec<GroupDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    id: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel_size: Option<KernelDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prunable: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    protected: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    has_bias: Option<bool>,
}

// Accepting the pair form only to reject it with a precise error.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum KernelDoc {
    Square(usize),
    Pair(Vec<usize>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupDoc {
    members: Vec<String>,
    reason: String,
}

/// Parses an architecture document. Shapes are left unresolved.
pub fn parse_architecture(document: &str) -> Result<NetworkGraph, ArchError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let doc: ArchDoc = serde_path_to_error::deserialize(de)
        .map_err(|e| ArchError::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;

    if doc.format_version != FORMAT_VERSION {
        return Err(ArchError::UnsupportedVersion(doc.format_version));
    }
    let [c, w, h] = doc.input_shape;
    if c == 0 || w == 0 || h == 0 {
        return Err(ArchError::Schema {
            path: "input_shape".into(),
            message: "all dimensions must be positive".into(),
        });
    }

    let mut seen = HashSet::new();
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (i, ld) in doc.layers.into_iter().enumerate() {
        let layer = layer_from_doc(ld, i)?;
        if !seen.insert(layer.id.clone()) {
            return Err(ArchError::DuplicateId(layer.id));
        }
        layers.push(layer);
    }

    for (p, c) in &doc.edges {
        for end in [p, c] {
            if !seen.contains(end) {
                return Err(ArchError::DanglingEdge { producer: p.clone(), consumer: c.clone(), missing: end.clone() });
            }
        }
    }

    let mut channel_groups = Vec::with_capacity(doc.channel_groups.len());
    for gd in doc.channel_groups {
        let reason = GroupReason::from_name(&gd.reason).ok_or(ArchError::UnknownGroupReason(gd.reason))?;
        if let Some(m) = gd.members.iter().find(|m| !seen.contains(*m)) {
            return Err(ArchError::DanglingGroupMember(m.clone()));
        }
        channel_groups.push(ChannelGroup { member_ids: gd.members, reason });
    }

    Ok(NetworkGraph { layers, edges: doc.edges, channel_groups, input_shape: InputShape::new(c, w, h) })
}

fn layer_from_doc(ld: LayerDoc, index: usize) -> Result<LayerSpec, ArchError> {
    let kind = LayerKind::from_name(&ld.kind)
        .ok_or_else(|| ArchError::UnknownKind { id: ld.id.clone(), kind: ld.kind.clone() })?;
    if ld.id.is_empty() {
        return Err(ArchError::Schema {
            path: format!("layers[{index}].id"),
            message: "layer id must be non-empty".into(),
        });
    }
    let kernel_size = match ld.kernel_size {
        None => None,
        Some(KernelDoc::Square(k)) => Some(k),
        Some(KernelDoc::Pair(_)) => return Err(ArchError::NonSquareKernel(ld.id)),
    };

    let mut layer = LayerSpec::new(ld.id, kind);
    layer.out_channels = ld.out_channels;
    layer.kernel_size = kernel_size;
    layer.stride = ld.stride.unwrap_or(1);
    layer.padding = ld.padding.unwrap_or(0);
    layer.protected = ld.protected.unwrap_or(false);
    layer.prunable = ld.prunable.unwrap_or(kind == LayerKind::Conv && !layer.protected);
    layer.has_bias = ld.has_bias.unwrap_or(false);

    if kind.declares_width() && layer.out_channels.is_none() {
        return Err(ArchError::MissingField { id: layer.id, field: "out_channels" });
    }
    if layer.out_channels == Some(0) {
        return Err(ArchError::NonPositive { id: layer.id, field: "out_channels" });
    }
    if kind.is_windowed() {
        match layer.kernel_size {
            None => return Err(ArchError::MissingField { id: layer.id, field: "kernel_size" }),
            Some(0) => return Err(ArchError::NonPositive { id: layer.id, field: "kernel_size" }),
            Some(_) => {}
        }
    }
    if layer.stride == 0 {
        return Err(ArchError::NonPositive { id: layer.id, field: "stride" });
    }
    Ok(layer)
}

fn layer_to_doc(layer: &LayerSpec) -> LayerDoc {
    let windowed = layer.kind.is_windowed();
    let default_prunable = layer.kind == LayerKind::Conv && !layer.protected;
    let out_channels = match layer.kind {
        k if k.declares_width() => layer.out_channels,
        LayerKind::DepthwiseConv => layer.out_channels,
        _ => None,
    };
    LayerDoc {
        id: layer.id.clone(),
        kind: layer.kind.as_str().to_string(),
        out_channels,
        kernel_size: layer.kernel_size.map(KernelDoc::Square),
        stride: (windowed || layer.stride != 1).then_some(layer.stride),
        padding: (windowed || layer.padding != 0).then_some(layer.padding),
        prunable: (layer.prunable != default_prunable).then_some(layer.prunable),
        protected: layer.protected.then_some(true),
        has_bias: layer.has_bias.then_some(true),
    }
}

/// Serializes a graph to pretty JSON with a trailing newline. Key order is
/// fixed by the document structs; resolved shapes are not written.
pub fn serialize_architecture(graph: &NetworkGraph) -> String {
    let doc = ArchDoc {
        format_version: FORMAT_VERSION,
        input_shape: [graph.input_shape.channels, graph.input_shape.width, graph.input_shape.height],
        layers: graph.layers.iter().map(layer_to_doc).collect(),
        edges: graph.edges.clone(),
        channel_groups: graph
            .channel_groups
            .iter()
            .map(|g| GroupDoc { members: g.member_ids.clone(), reason: g.reason.as_str().to_string() })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("architecture document serializes");
    text.push('\n');
    text
}
