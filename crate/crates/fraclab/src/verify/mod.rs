//! Empirical condition checks: each named estimate becomes an estimator
//! over sampled configurations, reported with fitted exponents, constant
//! brackets and a pass/fail/inconclusive verdict.

mod equivalence;
mod fit;
mod functional;
mod harmonic;
mod heat_bounds;
mod volume;

pub use equivalence::{equivalence_matrix, EquivalenceSummary};
pub use fit::{
    fit_exponent, fit_log_periodic, fit_stable_window, fit_stable_window_periodic, FitMode,
};
pub use functional::check_functional_inequalities;
pub use harmonic::check_harmonic_regularity;
pub use heat_bounds::check_heat_kernel_bounds;
pub use volume::check_volume;

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{MetricMode, WeightedGraph};
use crate::scaling::ScalingExponents;

pub const REPORT_SCHEMA: u32 = 1;

/// A window spans "enough" scales when max/min >= 2^MIN_DYADIC_SCALES.
pub const MIN_DYADIC_SCALES: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub samples: usize,
}

/// Empirical min/max of a normalized ratio.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Bracket {
    pub min: f64,
    pub max: f64,
}

impl Bracket {
    pub fn empty() -> Self {
        Bracket {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn push(&mut self, v: f64) {
        if v < self.min {
            self.min = v;
        }
        if v > self.max {
            self.max = v;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min > self.max
    }

    /// max/min spread; infinite when the bracket touches 0 or is empty.
    pub fn factor(&self) -> f64 {
        if self.is_empty() || self.min <= 0.0 {
            f64::INFINITY
        } else {
            self.max / self.min
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Window {
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub schema: u32,
    pub condition: String,
    /// hex content fingerprint of the graph the report belongs to
    pub graph: String,
    pub verdict: Verdict,
    /// named verdicts for the individual estimates the check covers
    pub sub_verdicts: BTreeMap<String, Verdict>,
    pub fits: BTreeMap<String, ExponentFit>,
    pub constants: BTreeMap<String, Bracket>,
    pub window: Window,
    pub skipped_samples: usize,
    pub notes: Vec<String>,
    pub sample_columns: Vec<String>,
    pub samples: Vec<Vec<f64>>,
}

impl ConditionReport {
    pub fn new(condition: &str, graph: &WeightedGraph) -> Self {
        ConditionReport {
            schema: REPORT_SCHEMA,
            condition: condition.to_string(),
            graph: format!("{:016x}", graph.fingerprint()),
            verdict: Verdict::Inconclusive,
            sub_verdicts: BTreeMap::new(),
            fits: BTreeMap::new(),
            constants: BTreeMap::new(),
            window: Window::default(),
            skipped_samples: 0,
            notes: Vec::new(),
            sample_columns: Vec::new(),
            samples: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Raw samples as CSV, one column per entry of `sample_columns`.
    pub fn write_samples_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.sample_columns)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for row in &self.samples {
            wtr.write_record(row.iter().map(|v| format!("{v:.17e}")))
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Aggregate sub-verdicts into the overall verdict.
    pub(crate) fn finalize(&mut self) {
        self.verdict = self
            .sub_verdicts
            .values()
            .fold(Verdict::Pass, |acc, &v| acc.and(v));
    }
}

/// Everything a check needs beyond the graph itself. A fixed plan (seed
/// included) yields byte-identical reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub exps: ScalingExponents,
    pub samples: usize,
    pub seed: u64,
    pub metric: MetricMode,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub volume_slope: f64,
    pub heat_slope: f64,
    pub hr_slope: f64,
    /// constant conditions pass when the bracket spread stays below this
    pub bracket_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            volume_slope: 0.1,
            heat_slope: 0.05,
            hr_slope: 0.05,
            bracket_factor: 4.0,
        }
    }
}

impl ExperimentPlan {
    pub fn new(exps: ScalingExponents, seed: u64) -> Self {
        ExperimentPlan {
            exps,
            samples: 200,
            seed,
            metric: MetricMode::Geodesic,
            tolerances: Tolerances::default(),
        }
    }

    /// Independent, reproducible RNG for a named work item.
    pub fn rng_for(&self, label: &str, item: u64) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(label.as_bytes());
        h.update(item.to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

/// The scale range on which a finite window approximates the infinite
/// space: [4 * min edge length, diameter / 4]. None when the graph is too
/// small to have one.
pub(crate) fn mesoscopic_window(graph: &WeightedGraph) -> Option<(f64, f64)> {
    let h = graph.min_edge_len();
    let diam = graph.diameter_estimate();
    let lo = 4.0 * h;
    let hi = diam / 4.0;
    if hi > lo {
        Some((lo, hi))
    } else {
        None
    }
}

pub(crate) fn spans_dyadic_scales(lo: f64, hi: f64) -> bool {
    lo > 0.0 && hi / lo >= 2f64.powf(MIN_DYADIC_SCALES)
}

pub(crate) fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Decade index of a positive value, for per-decade bracket stability.
pub(crate) fn decade(v: f64) -> i64 {
    v.log10().floor() as i64
}

/// Stability of per-decade extremes: the spread between the largest and
/// smallest per-decade value. Pass needs >= 2 populated decades.
pub(crate) fn per_decade_stability(per_decade: &BTreeMap<i64, f64>) -> Option<f64> {
    if per_decade.len() < 2 {
        return None;
    }
    let mut b = Bracket::empty();
    for &v in per_decade.values() {
        b.push(v);
    }
    Some(b.factor())
}
