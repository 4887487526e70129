//! FLOPs, memory and parameter accounting, sampling weights and the
//! energy model.
//!
//! Per-layer costs follow the weight-tensor view of a layer:
//!
//! * conv: `C_in * k^2 * C_out` weights, each applied at every one of the
//!   `W_out * H_out` output positions
//! * depthwise conv: one `k x k` kernel per channel
//! * dense: an `in x out` matrix
//!
//! Everything else (pools, activations, batchnorm, adds, reshapes) costs
//! nothing. FLOPs are counted as multiply-accumulates; the reported figure
//! is scaled by a `flops_factor` of 1 or 2 (multiply and add separately).
//! Memory is four bytes per parameter.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{validate_graph, LayerKind, LayerSpec, NetworkGraph};

pub const BYTES_PER_PARAM: u64 = 4;
pub const PJ_PER_FLOP: f64 = 2.3;
pub const PJ_PER_MIB: f64 = 640.0;
pub const MIB: u64 = 1 << 20;

#[derive(Debug, Error, PartialEq)]
pub enum ComplexityError {
    #[error("layer `{0}` has unresolved shapes")]
    Unresolved(String),
    #[error("flops factor must be 1 or 2, got {0}")]
    InvalidFlopsFactor(u32),
    #[error("graph is invalid:\n{0}")]
    InvalidGraph(String),
    #[error("no prunable layers given")]
    NoPrunableLayers,
    #[error("layer `{0}` is not in the profile")]
    UnknownLayer(String),
    #[error("every prunable layer has zero {0} weight")]
    AllZero(Mode),
}

/// Which currency drives layer sampling and the stop condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Flops,
    Memory,
    Params,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Flops, Mode::Memory, Mode::Params];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Flops => "flops",
            Mode::Memory => "memory",
            Mode::Params => "params",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "flops" => Ok(Mode::Flops),
            "memory" => Ok(Mode::Memory),
            "params" => Ok(Mode::Params),
            other => Err(format!("unknown mode `{other}` (expected flops, memory or params)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub flops: u64,
    pub memory_bytes: u64,
    pub params: u64,
}

impl Totals {
    pub fn get(&self, mode: Mode) -> u64 {
        match mode {
            Mode::Flops => self.flops,
            Mode::Memory => self.memory_bytes,
            Mode::Params => self.params,
        }
    }

    pub fn memory_mib(&self) -> f64 {
        self.memory_bytes as f64 / MIB as f64
    }
}

impl std::ops::Add for Totals {
    type Output = Totals;

    fn add(self, rhs: Totals) -> Totals {
        Totals {
            flops: self.flops + rhs.flops,
            memory_bytes: self.memory_bytes + rhs.memory_bytes,
            params: self.params + rhs.params,
        }
    }
}

impl std::iter::Sum for Totals {
    fn sum<I: Iterator<Item = Totals>>(iter: I) -> Totals {
        iter.fold(Totals::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityProfile {
    pub per_layer: IndexMap<String, Totals>,
    pub totals: Totals,
    pub flops_factor: u32,
}

impl ComplexityProfile {
    /// Unscaled multiply-accumulate count of one layer.
    pub fn layer_macs(&self, id: &str) -> Option<u64> {
        self.per_layer.get(id).map(|c| c.flops / u64::from(self.flops_factor))
    }

    /// Value of a layer in the given mode, with FLOPs unscaled.
    fn raw_weight(&self, id: &str, mode: Mode) -> Option<u64> {
        match mode {
            Mode::Flops => self.layer_macs(id),
            _ => self.per_layer.get(id).map(|c| c.get(mode)),
        }
    }
}

fn resolved(layer: &LayerSpec) -> Result<crate::arch::LayerShape, ComplexityError> {
    layer.shape.ok_or_else(|| ComplexityError::Unresolved(layer.id.clone()))
}

/// Multiply-accumulates of one layer.
pub fn layer_flops(layer: &LayerSpec) -> Result<u64, ComplexityError> {
    let s = resolved(layer)?;
    let k = layer.kernel_size.unwrap_or(1) as u64;
    let area = s.out_spatial.area() as u64;
    Ok(match layer.kind {
        LayerKind::Conv => s.in_channels as u64 * k * k * s.out_channels as u64 * area,
        LayerKind::DepthwiseConv => k * k * s.out_channels as u64 * area,
        LayerKind::Dense => s.in_channels as u64 * s.out_channels as u64,
        _ => 0,
    })
}

pub fn layer_params(layer: &LayerSpec) -> Result<u64, ComplexityError> {
    let s = resolved(layer)?;
    let k = layer.kernel_size.unwrap_or(1) as u64;
    let out = s.out_channels as u64;
    let bias = if layer.has_bias { out } else { 0 };
    Ok(match layer.kind {
        LayerKind::Conv => s.in_channels as u64 * k * k * out + bias,
        LayerKind::DepthwiseConv => k * k * out + bias,
        LayerKind::Dense => s.in_channels as u64 * out + bias,
        _ => 0,
    })
}

pub fn layer_memory_bytes(layer: &LayerSpec) -> Result<u64, ComplexityError> {
    Ok(layer_params(layer)? * BYTES_PER_PARAM)
}

fn check_factor(flops_factor: u32) -> Result<(), ComplexityError> {
    match flops_factor {
        1 | 2 => Ok(()),
        f => Err(ComplexityError::InvalidFlopsFactor(f)),
    }
}

/// Per-layer and total complexity of a valid, shape-resolved graph.
pub fn network_complexity(graph: &NetworkGraph, flops_factor: u32) -> Result<ComplexityProfile, ComplexityError> {
    check_factor(flops_factor)?;
    let report = validate_graph(graph);
    if !report.ok {
        if let Some(v) = report.violations.iter().find(|v| v.rule == "unresolved_shape") {
            return Err(ComplexityError::Unresolved(v.layer_id.clone()));
        }
        return Err(ComplexityError::InvalidGraph(report.render()));
    }
    profile_unchecked(graph, flops_factor)
}

/// Same as [`network_complexity`] without the validity pass. The pruner uses
/// this on graphs produced by `remove_filters`, which validates already.
pub(crate) fn profile_unchecked(graph: &NetworkGraph, flops_factor: u32) -> Result<ComplexityProfile, ComplexityError> {
    check_factor(flops_factor)?;
    let factor = u64::from(flops_factor);
    let mut per_layer = IndexMap::with_capacity(graph.layers.len());
    for layer in &graph.layers {
        let cost = Totals {
            flops: layer_flops(layer)? * factor,
            memory_bytes: layer_memory_bytes(layer)?,
            params: layer_params(layer)?,
        };
        per_layer.insert(layer.id.clone(), cost);
    }
    let totals = per_layer.values().copied().sum();
    Ok(ComplexityProfile { per_layer, totals, flops_factor })
}

/// Sampling distribution over prunable layers, ordered as given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector {
    pub entries: IndexMap<String, f64>,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.get(id).copied()
    }

    pub fn sum(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// `P_k = w_k / sum_j w_j` over `prunable_ids`, with `w` the layer's cost in
/// `mode`. FLOPs enter unscaled, so the flops factor cancels exactly.
pub fn relative_weights(
    profile: &ComplexityProfile,
    mode: Mode,
    prunable_ids: &[String],
) -> Result<WeightVector, ComplexityError> {
    if prunable_ids.is_empty() {
        return Err(ComplexityError::NoPrunableLayers);
    }
    let raw: Vec<(&String, u64)> = prunable_ids
        .iter()
        .map(|id| {
            profile.raw_weight(id, mode).map(|w| (id, w)).ok_or_else(|| ComplexityError::UnknownLayer(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let total: u128 = raw.iter().map(|&(_, w)| u128::from(w)).sum();
    if total == 0 {
        return Err(ComplexityError::AllZero(mode));
    }
    let total = total as f64;
    Ok(WeightVector { entries: raw.into_iter().map(|(id, w)| (id.clone(), w as f64 / total)).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub compute_pj: f64,
    pub access_pj: f64,
    pub total_pj: f64,
}

impl EnergyEstimate {
    pub fn total_mj(&self) -> f64 {
        self.total_pj * 1e-9
    }
}

/// Energy of one inference: 2.3 pJ per reported FLOP plus 640 pJ per MiB of
/// weights fetched from DRAM.
pub fn energy_estimate(profile: &ComplexityProfile) -> EnergyEstimate {
    energy_from_totals(&profile.totals)
}

pub fn energy_from_totals(totals: &Totals) -> EnergyEstimate {
    let compute_pj = (totals.flops as f64 * 23.0) / 10.0;
    let access_pj = (totals.memory_bytes as f64 * 5.0) / 8192.0;
    debug_assert!((PJ_PER_FLOP - 23.0 / 10.0).abs() < f64::EPSILON);
    debug_assert!((PJ_PER_MIB / MIB as f64 - 5.0 / 8192.0).abs() < f64::EPSILON);
    EnergyEstimate { compute_pj, access_pj, total_pj: compute_pj + access_pj }
}
