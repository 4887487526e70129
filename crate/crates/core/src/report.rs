//! Reduction tables, per-layer breakdowns and trade-off series.
//!
//! Percentages are rounded half-up to two decimals from exact integer
//! ratios. CSV output has a header row, LF line endings and RFC 4180
//! quoting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexity::{energy_from_totals, ComplexityProfile, EnergyEstimate, Mode, Totals};
use crate::pruner::PruneTrace;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("profiles use different flops factors ({baseline} vs {pruned})")]
    FlopsFactorMismatch { baseline: u32, pruned: u32 },
    #[error("baseline {0} total is zero")]
    ZeroBaseline(Mode),
    #[error("traces do not share a baseline: {0}")]
    InconsistentBaselines(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Metrics emitted by the training harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsDoc {
    /// Zoo name, or the SHA-256 hex digest of the architecture file.
    pub arch: String,
    pub dataset: String,
    pub epochs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

impl MetricsDoc {
    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let doc: MetricsDoc = serde_json::from_str(text)?;
        if let Some(a) = doc.accuracy.filter(|a| !(0.0..=1.0).contains(a)) {
            return Err(ReportError::Json(serde::de::Error::custom(format!("accuracy must lie in [0, 1], got {a}"))));
        }
        Ok(doc)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainingResults {
    pub baseline: Option<MetricsDoc>,
    pub pruned: Option<MetricsDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionPct {
    pub flops: f64,
    pub memory: f64,
    pub params: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPair {
    pub baseline: EnergyEstimate,
    pub pruned: EnergyEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub flops_factor: u32,
    pub baseline: Totals,
    pub pruned: Totals,
    pub reduction_pct: ReductionPct,
    pub energy: EnergyPair,
    /// Pruned minus baseline accuracy, in percentage points.
    pub accuracy_delta: Option<f64>,
}

/// `100 * (1 - pruned / baseline)` rounded half-up to hundredths, clamped
/// to [0, 100].
pub fn reduction_percent(baseline: u64, pruned: u64) -> f64 {
    if baseline == 0 || pruned >= baseline {
        return 0.0;
    }
    let (b, d) = (u128::from(baseline), u128::from(baseline - pruned));
    let hundredths = (20_000 * d + b) / (2 * b);
    hundredths as f64 / 100.0
}

pub fn format_percent(value: f64) -> String {
    format!("{value:.2}")
}

pub fn reduction_report(
    baseline: &ComplexityProfile,
    pruned: &ComplexityProfile,
    training: Option<&TrainingResults>,
) -> Result<ReductionReport, ReportError> {
    reduction_from_totals(&baseline.totals, &pruned.totals, baseline.flops_factor, pruned.flops_factor, training)
}

pub fn reduction_from_totals(
    baseline: &Totals,
    pruned: &Totals,
    baseline_factor: u32,
    pruned_factor: u32,
    training: Option<&TrainingResults>,
) -> Result<ReductionReport, ReportError> {
    if baseline_factor != pruned_factor {
        return Err(ReportError::FlopsFactorMismatch { baseline: baseline_factor, pruned: pruned_factor });
    }
    if let Some(mode) = Mode::ALL.into_iter().find(|&m| baseline.get(m) == 0) {
        return Err(ReportError::ZeroBaseline(mode));
    }
    let accuracy_delta = training.and_then(|t| {
        let b = t.baseline.as_ref()?.accuracy?;
        let p = t.pruned.as_ref()?.accuracy?;
        Some((p - b) * 100.0)
    });
    Ok(ReductionReport {
        flops_factor: baseline_factor,
        baseline: *baseline,
        pruned: *pruned,
        reduction_pct: ReductionPct {
            flops: reduction_percent(baseline.flops, pruned.flops),
            memory: reduction_percent(baseline.memory_bytes, pruned.memory_bytes),
            params: reduction_percent(baseline.params, pruned.params),
        },
        energy: EnergyPair { baseline: energy_from_totals(baseline), pruned: energy_from_totals(pruned) },
        accuracy_delta,
    })
}

/// One row in the comparison-table layout: baseline FLOPs, MiB and millions
/// of parameters, then accuracy delta and the three reductions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub approach: String,
    pub baseline_flops: u64,
    pub baseline_memory_mib: String,
    pub baseline_params_millions: String,
    pub accuracy_delta_pct: String,
    pub flops_reduction_pct: String,
    pub memory_reduction_pct: String,
    pub params_reduction_pct: String,
    pub baseline_energy_pj: f64,
    pub pruned_energy_pj: f64,
    pub pruned_energy_mj: f64,
}

impl ReductionReport {
    pub fn table_row(&self, approach: &str) -> TableRow {
        TableRow {
            approach: approach.to_string(),
            baseline_flops: self.baseline.flops,
            baseline_memory_mib: format!("{:.2}", self.baseline.memory_mib()),
            baseline_params_millions: format!("{:.2}", self.baseline.params as f64 / 1e6),
            accuracy_delta_pct: self.accuracy_delta.map(format_percent).unwrap_or_default(),
            flops_reduction_pct: format_percent(self.reduction_pct.flops),
            memory_reduction_pct: format_percent(self.reduction_pct.memory),
            params_reduction_pct: format_percent(self.reduction_pct.params),
            baseline_energy_pj: self.energy.baseline.total_pj,
            pruned_energy_pj: self.energy.pruned.total_pj,
            pruned_energy_mj: self.energy.pruned.total_mj(),
        }
    }

    pub fn to_csv(&self, approach: &str) -> Result<String, ReportError> {
        to_csv(std::iter::once(self.table_row(approach)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub id: String,
    pub flops: u64,
    pub memory_bytes: u64,
    pub params: u64,
    pub flops_share: f64,
    pub memory_share: f64,
    pub params_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBreakdown {
    pub flops_factor: u32,
    pub totals: Totals,
    pub rows: Vec<BreakdownRow>,
}

impl LayerBreakdown {
    pub fn to_csv(&self) -> Result<String, ReportError> {
        to_csv(self.rows.iter().cloned())
    }
}

fn share(part: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        part as f64 / total as f64
    }
}

/// Per-layer cost table with each layer's share of every total. Layers with
/// no cost at all (pools, activations, reshapes) are omitted.
pub fn layer_breakdown(profile: &ComplexityProfile) -> LayerBreakdown {
    let t = profile.totals;
    let rows = profile
        .per_layer
        .iter()
        .filter(|(_, c)| **c != Totals::default())
        .map(|(id, c)| BreakdownRow {
            id: id.clone(),
            flops: c.flops,
            memory_bytes: c.memory_bytes,
            params: c.params,
            flops_share: share(c.flops, t.flops),
            memory_share: share(c.memory_bytes, t.memory_bytes),
            params_share: share(c.params, t.params),
        })
        .collect();
    LayerBreakdown { flops_factor: profile.flops_factor, totals: t, rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub trace: usize,
    pub mode: Mode,
    pub iteration: usize,
    pub flops: u64,
    pub memory_bytes: u64,
    pub params: u64,
    pub energy_total_pj: f64,
    pub energy_total_mj: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffSeries {
    pub rows: Vec<TradeoffRow>,
}

impl TradeoffSeries {
    pub fn to_csv(&self) -> Result<String, ReportError> {
        to_csv(self.rows.iter().cloned())
    }

    pub fn from_csv(text: &str) -> Result<Self, ReportError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows = rdr.deserialize().collect::<Result<Vec<TradeoffRow>, _>>()?;
        Ok(Self { rows })
    }
}

fn row(trace: usize, mode: Mode, iteration: usize, totals: &Totals, accuracy: Option<f64>) -> TradeoffRow {
    let energy = energy_from_totals(totals);
    TradeoffRow {
        trace,
        mode,
        iteration,
        flops: totals.flops,
        memory_bytes: totals.memory_bytes,
        params: totals.params,
        energy_total_pj: energy.total_pj,
        energy_total_mj: energy.total_mj(),
        accuracy,
    }
}

/// Baseline row plus one row per step for every trace. A metrics document
/// attaches its accuracy to the final row of the trace whose pruned
/// architecture it names, or to the baseline row when it names the
/// baseline.
pub fn tradeoff_series(traces: &[PruneTrace], metrics: &[MetricsDoc]) -> Result<TradeoffSeries, ReportError> {
    if let Some(first) = traces.first() {
        for (i, t) in traces.iter().enumerate().skip(1) {
            if t.baseline != first.baseline || t.config.flops_factor != first.config.flops_factor {
                return Err(ReportError::InconsistentBaselines(format!(
                    "trace {i} starts from {:?} (flops factor {}), trace 0 from {:?} (flops factor {})",
                    t.baseline, t.config.flops_factor, first.baseline, first.config.flops_factor
                )));
            }
            let hash = |t: &PruneTrace| t.source.as_ref().map(|s| s.baseline_sha256.clone());
            if let (Some(a), Some(b)) = (hash(first), hash(t)) {
                if a != b {
                    return Err(ReportError::InconsistentBaselines(format!(
                        "trace {i} baseline digest {b} differs from {a}"
                    )));
                }
            }
        }
    }

    let accuracy_for =
        |names: &[&str]| metrics.iter().find(|m| names.contains(&m.arch.as_str())).and_then(|m| m.accuracy);

    let mut rows = Vec::new();
    for (ti, trace) in traces.iter().enumerate() {
        let mode = trace.config.mode;
        let (baseline_acc, pruned_acc) = match &trace.source {
            Some(s) => (accuracy_for(&[&s.baseline_sha256, &s.arch]), accuracy_for(&[&s.pruned_sha256])),
            None => (None, None),
        };
        let last = trace.steps.len();
        let acc_at = |iteration: usize| {
            if iteration == last && pruned_acc.is_some() {
                pruned_acc
            } else if iteration == 0 {
                baseline_acc
            } else {
                None
            }
        };
        rows.push(row(ti, mode, 0, &trace.baseline, acc_at(0)));
        for step in &trace.steps {
            rows.push(row(ti, mode, step.iteration, &step.complexity_after, acc_at(step.iteration)));
        }
    }
    Ok(TradeoffSeries { rows })
}

pub fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, ReportError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pruner::{PruneConfig, Terminal, TraceStep};

    fn totals(n: u64) -> Totals {
        Totals { flops: 2 * n, memory_bytes: 4 * n, params: n }
    }

    #[test]
    fn half_reduction() {
        let r = reduction_from_totals(&totals(100), &totals(50), 2, 2, None).unwrap();
        assert_eq!(r.reduction_pct.params, 50.0);
        assert_eq!(r.reduction_pct.flops, 50.0);
        assert_eq!(r.reduction_pct.memory, 50.0);
    }

    #[test]
    fn identical_profiles_reduce_nothing() {
        let r = reduction_from_totals(&totals(77), &totals(77), 1, 1, None).unwrap();
        assert_eq!(r.reduction_pct, ReductionPct { flops: 0.0, memory: 0.0, params: 0.0 });
        assert_eq!(r.energy.baseline, r.energy.pruned);
    }

    #[test]
    fn rounding_is_half_up() {
        // 1/8 = 12.5% exactly; 1/3 = 33.333..%
        assert_eq!(reduction_percent(8, 7), 12.5);
        assert_eq!(reduction_percent(3, 2), 33.33);
        assert_eq!(reduction_percent(3, 1), 66.67);
        // 0.125% sits exactly on a half-hundredth
        assert_eq!(reduction_percent(800, 799), 0.13);
        assert_eq!(format_percent(reduction_percent(10_000, 1_575)), "84.25");
    }

    #[test]
    fn mismatched_factor_and_zero_baseline_error() {
        assert!(matches!(
            reduction_from_totals(&totals(10), &totals(5), 1, 2, None),
            Err(ReportError::FlopsFactorMismatch { .. })
        ));
        assert!(matches!(reduction_from_totals(&totals(0), &totals(0), 2, 2, None), Err(ReportError::ZeroBaseline(_))));
    }

    #[test]
    fn accuracy_delta_from_metrics() {
        let doc = |acc| MetricsDoc {
            arch: "x".into(),
            dataset: "cifar10".into(),
            epochs: 2,
            accuracy: Some(acc),
            loss: None,
        };
        let t = TrainingResults { baseline: Some(doc(0.90)), pruned: Some(doc(0.85)) };
        let r = reduction_from_totals(&totals(10), &totals(5), 2, 2, Some(&t)).unwrap();
        assert!((r.accuracy_delta.unwrap() + 5.0).abs() < 1e-9);
        let partial = TrainingResults { baseline: Some(doc(0.9)), pruned: None };
        let r = reduction_from_totals(&totals(10), &totals(5), 2, 2, Some(&partial)).unwrap();
        assert_eq!(r.accuracy_delta, None);
    }

    #[test]
    fn metrics_schema() {
        let ok = r#"{"arch": "vgg16_cifar10", "dataset": "cifar10", "epochs": 2, "accuracy": 0.5, "loss": 1.2}"#;
        assert_eq!(MetricsDoc::from_json(ok).unwrap().accuracy, Some(0.5));
        let no_acc = r#"{"arch": "a", "dataset": "cifar10", "epochs": 2}"#;
        assert_eq!(MetricsDoc::from_json(no_acc).unwrap().accuracy, None);
        assert!(MetricsDoc::from_json(r#"{"arch": "a", "dataset": "c", "epochs": 1, "accuracy": 3}"#).is_err());
        assert!(MetricsDoc::from_json(r#"{"arch": "a", "dataset": "c", "epochs": 1, "extra": 3}"#).is_err());
    }

    fn trace(steps: usize) -> PruneTrace {
        let mut t = PruneTrace {
            config: PruneConfig::new(Mode::Params, 0, 0.1, 0),
            source: None,
            baseline: totals(1000),
            terminal: Terminal::TargetMet,
            steps: Vec::new(),
        };
        for i in 1..=steps {
            t.steps.push(TraceStep {
                iteration: i,
                sampled_layer: "c".into(),
                weight_vector: Default::default(),
                removed_indices: vec![0],
                complexity_after: totals(1000 - 100 * i as u64),
            });
        }
        t
    }

    #[test]
    fn empty_trace_gives_baseline_row() {
        let s = tradeoff_series(&[trace(0)], &[]).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].iteration, 0);
        assert_eq!(s.rows[0].params, 1000);
    }

    #[test]
    fn three_step_trace_gives_four_rows() {
        let s = tradeoff_series(&[trace(3)], &[]).unwrap();
        assert_eq!(s.rows.len(), 4);
        assert!(s.rows.windows(2).all(|w| w[1].params < w[0].params));
        assert!(s.rows.iter().all(|r| r.accuracy.is_none()));
        let csv = s.to_csv().unwrap();
        assert!(csv
            .starts_with("trace,mode,iteration,flops,memory_bytes,params,energy_total_pj,energy_total_mj,accuracy\n"));
        assert!(!csv.contains('\r'));
        assert_eq!(TradeoffSeries::from_csv(&csv).unwrap(), s);
    }

    #[test]
    fn inconsistent_baselines_error() {
        let mut other = trace(1);
        other.baseline = totals(999);
        assert!(matches!(tradeoff_series(&[trace(1), other], &[]), Err(ReportError::InconsistentBaselines(_))));
    }

    #[test]
    fn breakdown_shares() {
        let mut per_layer = indexmap::IndexMap::new();
        per_layer.insert("in".to_string(), Totals::default());
        per_layer.insert("only".to_string(), totals(10));
        let p = ComplexityProfile { per_layer, totals: totals(10), flops_factor: 2 };
        let b = layer_breakdown(&p);
        assert_eq!(b.rows.len(), 1);
        let r = &b.rows[0];
        assert_eq!((r.flops_share, r.memory_share, r.params_share), (1.0, 1.0, 1.0));
    }
}
