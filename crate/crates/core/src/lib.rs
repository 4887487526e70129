//! Complexity-driven structured filter pruning for CNN architectures.
//!
//! Architectures are modelled as layer graphs ([`arch`]), costed per layer
//! in FLOPs, memory bytes and parameters ([`complexity`]), and shrunk by
//! removing random filters from layers sampled in proportion to their share
//! of the chosen cost ([`pruner`]). [`report`] turns profiles and traces
//! into reduction tables and trade-off series.

pub mod arch;
pub mod cli;
pub mod complexity;
pub mod pruner;
pub mod report;
pub mod zoo;

pub use arch::{
    parse_architecture, propagate_shapes, remove_filters, serialize_architecture, validate_graph, ArchError,
    ChannelGroup, GroupReason, InputShape, LayerKind, LayerSpec, NetworkGraph, ValidationReport,
};
pub use complexity::{
    energy_estimate, network_complexity, relative_weights, ComplexityProfile, EnergyEstimate, Mode, Totals,
    WeightVector,
};
pub use pruner::{prune_step, prune_to_target, sample_layer, PruneConfig, PruneRng, PruneTrace, Terminal};
pub use zoo::builtin_arch;
