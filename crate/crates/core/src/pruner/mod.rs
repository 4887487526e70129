//! Complexity-driven pruning loop.
//!
//! Each iteration recomputes the relative complexity weight of every
//! eligible conv layer on the current graph, draws one layer with
//! probability proportional to that weight and removes a random
//! `prune_ratio` share of its filters. The loop stops once the configured
//! currency is at or below the target.

mod rng;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::arch::{remove_filters, ArchError, NetworkGraph};
use crate::complexity::{
    network_complexity, profile_unchecked, relative_weights, ComplexityError, Mode, Totals, WeightVector,
};

pub use rng::PruneRng;

pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("invalid pruning config: {0}")]
    InvalidConfig(String),
    #[error("no layer is eligible for pruning")]
    NoEligibleLayer,
    #[error("weight vector has no positive entry")]
    EmptyWeights,
    #[error(transparent)]
    Complexity(#[from] ComplexityError),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneConfig {
    pub mode: Mode,
    /// Stop once the mode's total is at or below this, in the mode's unit
    /// (reported FLOPs, bytes, or parameters).
    pub target_complexity: u64,
    pub prune_ratio: f64,
    pub seed: u64,
    pub min_filters: usize,
    pub max_iterations: usize,
    pub flops_factor: u32,
}

impl PruneConfig {
    pub fn new(mode: Mode, target_complexity: u64, prune_ratio: f64, seed: u64) -> Self {
        Self {
            mode,
            target_complexity,
            prune_ratio,
            seed,
            min_filters: 1,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            flops_factor: 2,
        }
    }

    pub fn validate(&self) -> Result<(), PruneError> {
        if !(self.prune_ratio > 0.0 && self.prune_ratio < 1.0) {
            return Err(PruneError::InvalidConfig(format!("prune_ratio must lie in (0, 1), got {}", self.prune_ratio)));
        }
        if self.min_filters == 0 {
            return Err(PruneError::InvalidConfig("min_filters must be at least 1".into()));
        }
        if !matches!(self.flops_factor, 1 | 2) {
            return Err(PruneError::InvalidConfig(format!("flops_factor must be 1 or 2, got {}", self.flops_factor)));
        }
        Ok(())
    }

    /// Filters removed from a layer holding `filters`: `max(1, floor(r * N))`,
    /// capped so at least `min_filters` survive.
    pub fn filters_to_remove(&self, filters: usize) -> usize {
        let n = ((self.prune_ratio * filters as f64).floor() as usize).max(1);
        n.min(filters.saturating_sub(self.min_filters))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    TargetMet,
    Infeasible,
    MaxIterations,
}

impl Terminal {
    pub fn as_str(self) -> &'static str {
        match self {
            Terminal::TargetMet => "target_met",
            Terminal::Infeasible => "infeasible",
            Terminal::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceStep {
    pub iteration: usize,
    #[serde(rename = "layer")]
    pub sampled_layer: String,
    #[serde(rename = "weights", serialize_with = "twelve_digits")]
    pub weight_vector: WeightVector,
    #[serde(rename = "removed")]
    pub removed_indices: Vec<usize>,
    #[serde(rename = "totals_after")]
    pub complexity_after: Totals,
}

/// Where a trace came from; filled in by the CLI so reports can check that
/// traces share a baseline and match ingested metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSource {
    pub arch: String,
    pub baseline_sha256: String,
    pub pruned_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneTrace {
    pub config: PruneConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<TraceSource>,
    pub baseline: Totals,
    pub terminal: Terminal,
    pub steps: Vec<TraceStep>,
}

impl PruneTrace {
    pub fn final_totals(&self) -> Totals {
        self.steps.last().map_or(self.baseline, |s| s.complexity_after)
    }
}

fn twelve_digits<S: Serializer>(weights: &WeightVector, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(weights.len()))?;
    for (id, p) in weights.iter() {
        let rounded: f64 = format!("{p:.11e}").parse().expect("formatted float parses");
        map.serialize_entry(id, &rounded)?;
    }
    map.end()
}

/// Draws one layer by inverting the cumulative distribution at a single
/// uniform draw. Zero-weight entries are never returned.
pub fn sample_layer(weights: &WeightVector, rng: &mut PruneRng) -> Result<String, PruneError> {
    let last_positive =
        weights.iter().filter(|&(_, p)| p > 0.0).last().map(|(id, _)| id).ok_or(PruneError::EmptyWeights)?;
    let u = rng.unit();
    let mut cumulative = 0.0;
    for (id, p) in weights.iter().filter(|&(_, p)| p > 0.0) {
        cumulative += p;
        if u < cumulative {
            return Ok(id.to_string());
        }
    }
    // rounding left the cumulative sum a hair under 1
    Ok(last_positive.to_string())
}

/// Layers the next step may sample: prunable, unprotected, and above the
/// filter floor (for a residual group, every conv member must be).
pub fn eligible_layers(graph: &NetworkGraph, min_filters: usize) -> Vec<String> {
    let above_floor =
        |id: &str| graph.layer(id).and_then(|l| l.resolved_out_channels()).is_some_and(|n| n > min_filters);
    graph
        .prunable_ids()
        .into_iter()
        .filter(|id| above_floor(id))
        .filter(|id| {
            graph.residual_group_of(id).is_none_or(|g| {
                g.member_ids
                    .iter()
                    .filter(|m| graph.layer(m).is_some_and(|l| l.kind == crate::arch::LayerKind::Conv))
                    .all(|m| above_floor(m))
            })
        })
        .collect()
}

/// One iteration: weigh, sample, remove.
pub fn prune_step(
    graph: &NetworkGraph,
    config: &PruneConfig,
    rng: &mut PruneRng,
    iteration: usize,
) -> Result<(NetworkGraph, TraceStep), PruneError> {
    let eligible = eligible_layers(graph, config.min_filters);
    if eligible.is_empty() {
        return Err(PruneError::NoEligibleLayer);
    }
    let profile = profile_unchecked(graph, config.flops_factor)?;
    let weights = match relative_weights(&profile, config.mode, &eligible) {
        Err(ComplexityError::AllZero(_)) => return Err(PruneError::NoEligibleLayer),
        other => other?,
    };
    let layer = sample_layer(&weights, rng)?;
    let filters = graph.layer(&layer).and_then(|l| l.resolved_out_channels()).expect("eligible layers are resolved");
    let amount = config.filters_to_remove(filters);
    let indices = rng.distinct_indices(filters, amount);
    let next = remove_filters(graph, &layer, &indices)?;
    let complexity_after = profile_unchecked(&next, config.flops_factor)?.totals;
    Ok((
        next,
        TraceStep {
            iteration,
            sampled_layer: layer,
            weight_vector: weights,
            removed_indices: indices.into_iter().collect(),
            complexity_after,
        },
    ))
}

/// Prunes until the configured currency is at or below the target, no layer
/// is eligible any more, or the iteration budget runs out.
pub fn prune_to_target(graph: &NetworkGraph, config: &PruneConfig) -> Result<(NetworkGraph, PruneTrace), PruneError> {
    config.validate()?;
    let baseline = network_complexity(graph, config.flops_factor)?.totals;
    let mut rng = PruneRng::new(config.seed);
    let mut current = graph.clone();
    let mut totals = baseline;
    let mut steps = Vec::new();

    let terminal = loop {
        if totals.get(config.mode) <= config.target_complexity {
            break Terminal::TargetMet;
        }
        if steps.len() >= config.max_iterations {
            break Terminal::MaxIterations;
        }
        match prune_step(&current, config, &mut rng, steps.len() + 1) {
            Ok((next, step)) => {
                totals = step.complexity_after;
                current = next;
                steps.push(step);
            }
            Err(PruneError::NoEligibleLayer) => break Terminal::Infeasible,
            Err(e) => return Err(e),
        }
    };

    Ok((current, PruneTrace { config: config.clone(), source: None, baseline, terminal, steps }))
}
