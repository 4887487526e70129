//! CNN architecture model: layers, edges, channel-coupling groups.
//!
//! A [`NetworkGraph`] is a plain value. Every transformation (shape
//! resolution, filter removal) returns a new graph and leaves its input
//! untouched.

mod builder;
mod schema;
mod shape;
mod surgery;
mod validate;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builder::GraphBuilder;
pub use schema::{parse_architecture, serialize_architecture, FORMAT_VERSION};
pub use shape::{propagate_shapes, window_output};
pub use surgery::remove_filters;
pub use validate::{validate_graph, ValidationReport, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    Dense,
    PoolMax,
    PoolAvg,
    GlobalAvgPool,
    Flatten,
    Add,
    Activation,
    Batchnorm,
    Input,
    Output,
}

impl LayerKind {
    pub const ALL: [LayerKind; 12] = [
        LayerKind::Conv,
        LayerKind::DepthwiseConv,
        LayerKind::Dense,
        LayerKind::PoolMax,
        LayerKind::PoolAvg,
        LayerKind::GlobalAvgPool,
        LayerKind::Flatten,
        LayerKind::Add,
        LayerKind::Activation,
        LayerKind::Batchnorm,
        LayerKind::Input,
        LayerKind::Output,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::DepthwiseConv => "depthwise_conv",
            LayerKind::Dense => "dense",
            LayerKind::PoolMax => "pool_max",
            LayerKind::PoolAvg => "pool_avg",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Flatten => "flatten",
            LayerKind::Add => "add",
            LayerKind::Activation => "activation",
            LayerKind::Batchnorm => "batchnorm",
            LayerKind::Input => "input",
            LayerKind::Output => "output",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == name)
    }

    /// Kinds that own a weight tensor.
    pub fn is_parametric(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::DepthwiseConv | LayerKind::Dense)
    }

    /// Kinds that slide a square window over the spatial grid.
    pub fn is_windowed(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::DepthwiseConv | LayerKind::PoolMax | LayerKind::PoolAvg)
    }

    /// Kinds that declare their output width instead of inheriting it.
    pub fn declares_width(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Dense)
    }

    /// Kinds whose output channels are exactly their input channels.
    pub fn preserves_channels(self) -> bool {
        matches!(
            self,
            LayerKind::DepthwiseConv
                | LayerKind::PoolMax
                | LayerKind::PoolAvg
                | LayerKind::GlobalAvgPool
                | LayerKind::Add
                | LayerKind::Activation
                | LayerKind::Batchnorm
                | LayerKind::Output
        )
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Spatial {
    pub width: usize,
    pub height: usize,
}

impl Spatial {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn unit() -> Self {
        Self::new(1, 1)
    }

    pub fn area(self) -> usize {
        self.width * self.height
    }
}

impl fmt::Display for Spatial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Channel counts and spatial extents resolved by [`propagate_shapes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_spatial: Spatial,
    pub out_spatial: Spatial,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    /// Declared width: filter count for conv, output dimension for dense.
    /// Derived kinds leave this empty.
    pub out_channels: Option<usize>,
    pub kernel_size: Option<usize>,
    pub stride: usize,
    pub padding: usize,
    pub prunable: bool,
    pub protected: bool,
    pub has_bias: bool,
    pub shape: Option<LayerShape>,
}

impl LayerSpec {
    pub fn new(id: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            id: id.into(),
            kind,
            out_channels: None,
            kernel_size: None,
            stride: 1,
            padding: 0,
            prunable: kind == LayerKind::Conv,
            protected: false,
            has_bias: false,
            shape: None,
        }
    }

    pub fn in_channels(&self) -> Option<usize> {
        self.shape.map(|s| s.in_channels)
    }

    /// Resolved output channels, falling back to the declared width.
    pub fn resolved_out_channels(&self) -> Option<usize> {
        self.shape.map(|s| s.out_channels).or(self.out_channels)
    }

    pub fn out_spatial(&self) -> Option<Spatial> {
        self.shape.map(|s| s.out_spatial)
    }

    pub fn in_spatial(&self) -> Option<Spatial> {
        self.shape.map(|s| s.in_spatial)
    }

    /// Whether this layer may be picked by the pruner at all.
    pub fn is_prunable(&self) -> bool {
        self.prunable && !self.protected && self.kind == LayerKind::Conv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupReason {
    ResidualAdd,
    DepthwiseTie,
}

impl GroupReason {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupReason::ResidualAdd => "residual_add",
            GroupReason::DepthwiseTie => "depthwise_tie",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "residual_add" => Some(GroupReason::ResidualAdd),
            "depthwise_tie" => Some(GroupReason::DepthwiseTie),
            _ => None,
        }
    }
}

/// Layers whose output-channel counts are coupled and must stay equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelGroup {
    pub member_ids: Vec<String>,
    pub reason: GroupReason,
}

impl ChannelGroup {
    pub fn new(reason: GroupReason, members: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { member_ids: members.into_iter().map(Into::into).collect(), reason }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.member_ids.iter().any(|m| m == id)
    }
}

/// Input tensor shape as (channels, width, height).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputShape {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
}

impl InputShape {
    pub fn new(channels: usize, width: usize, height: usize) -> Self {
        Self { channels, width, height }
    }

    pub fn spatial(self) -> Spatial {
        Spatial::new(self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkGraph {
    pub layers: Vec<LayerSpec>,
    pub edges: Vec<(String, String)>,
    pub channel_groups: Vec<ChannelGroup>,
    pub input_shape: InputShape,
}

impl NetworkGraph {
    pub fn layer(&self, id: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub fn layer_mut(&mut self, id: &str) -> Option<&mut LayerSpec> {
        self.layers.iter_mut().find(|l| l.id == id)
    }

    pub fn index_map(&self) -> HashMap<&str, usize> {
        self.layers.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect()
    }

    /// Producers of `id` in edge-list order.
    pub fn producers<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().filter(move |(_, c)| c == id).map(|(p, _)| p.as_str())
    }

    pub fn consumers<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().filter(move |(p, _)| p == id).map(|(_, c)| c.as_str())
    }

    pub fn groups_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a ChannelGroup> + 'a {
        self.channel_groups.iter().filter(move |g| g.contains(id))
    }

    /// The residual group containing `id`, if any.
    pub fn residual_group_of(&self, id: &str) -> Option<&ChannelGroup> {
        self.channel_groups.iter().find(|g| g.reason == GroupReason::ResidualAdd && g.contains(id))
    }

    /// A group is protected when any of its members is.
    pub fn group_is_protected(&self, group: &ChannelGroup) -> bool {
        group.member_ids.iter().filter_map(|m| self.layer(m)).any(|l| l.protected)
    }

    /// Conv layers the pruner may select: prunable, unprotected and not
    /// coupled to a protected residual group.
    pub fn prunable_ids(&self) -> Vec<String> {
        self.layers
            .iter()
            .filter(|l| l.is_prunable())
            .filter(|l| self.residual_group_of(&l.id).is_none_or(|g| !self.group_is_protected(g)))
            .map(|l| l.id.clone())
            .collect()
    }

    pub fn is_resolved(&self) -> bool {
        self.layers.iter().all(|l| l.shape.is_some())
    }

    pub fn count_kind(&self, kind: LayerKind) -> usize {
        self.layers.iter().filter(|l| l.kind == kind).count()
    }
}

#[derive(Debug, Error)]
pub enum ArchError {
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported format_version {0}")]
    UnsupportedVersion(u64),
    #[error("unknown layer kind `{kind}` for layer `{id}`")]
    UnknownKind { id: String, kind: String },
    #[error("unknown channel group reason `{0}`")]
    UnknownGroupReason(String),
    #[error("duplicate layer id `{0}`")]
    DuplicateId(String),
    #[error("edge ({producer}, {consumer}) references unknown layer `{missing}`")]
    DanglingEdge { producer: String, consumer: String, missing: String },
    #[error("channel group references unknown layer `{0}`")]
    DanglingGroupMember(String),
    #[error("layer `{0}`: non-square kernels are not supported")]
    NonSquareKernel(String),
    #[error("layer `{id}`: missing required field `{field}`")]
    MissingField { id: String, field: &'static str },
    #[error("layer `{id}`: field `{field}` must be positive")]
    NonPositive { id: String, field: &'static str },
    #[error("graph must contain exactly one input layer, found {0}")]
    InputCount(usize),
    #[error("graph contains a cycle through `{0}`")]
    Cycle(String),
    #[error("layer `{0}` is not reachable from the input")]
    Unreachable(String),
    #[error("layer `{id}` ({kind}) expects {expected} producer(s), found {found}")]
    ProducerCount { id: String, kind: LayerKind, expected: &'static str, found: usize },
    #[error("layer `{id}`: kernel {kernel} exceeds padded input {padded} (in {input}, padding {padding})")]
    NonPositiveSpatial { id: String, kernel: usize, padded: usize, input: Spatial, padding: usize },
    #[error("add junction `{id}`: producer shapes disagree ({detail})")]
    AddMismatch { id: String, detail: String },
    #[error("layer `{id}`: declared {field} {declared} disagrees with derived {derived}")]
    DeclaredMismatch { id: String, field: &'static str, declared: usize, derived: usize },
    #[error("dense layer `{id}` needs a 1x1 producer (flatten or global pool), got {spatial}")]
    DenseInput { id: String, spatial: Spatial },
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("layer `{0}` is not prunable")]
    NotPrunable(String),
    #[error("layer `{0}` is protected (residual connection)")]
    Protected(String),
    #[error("layer `{id}`: filter index {index} out of range for {filters} filters")]
    IndexOutOfRange { id: String, index: usize, filters: usize },
    #[error("layer `{id}`: removing {requested} of {filters} filters would leave none")]
    WouldRemoveAll { id: String, requested: usize, filters: usize },
    #[error("layer `{0}`: no filter indices given")]
    EmptySelection(String),
    #[error("filter removal produced an invalid graph: {0}")]
    InvalidResult(String),
}
