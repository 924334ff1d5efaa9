//! Model-centric profiles from checkpoint traces.
//!
//! For node `v` with true class `c` and checkpoint probabilities `p_e`:
//! `mean_p` is the checkpoint mean of `p_e`, `v_ep` its population variance
//! and `v_al` the mean of `p_e (1 - p_e)`. Nodes are then sorted into
//! easy/ambiguous/hard by comparing `mean_p` against confidence thresholds and
//! `v_al` against the cohort median.

mod trace;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSet;

pub use trace::{PredictionTrace, TraceMeta, NPTR_MAGIC, STOCHASTIC_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyProfile {
    pub mean_p: f64,
    pub v_ep: f64,
    pub v_al: f64,
}

/// Mean true-class probability with epistemic and aleatoric uncertainty per node.
pub fn uncertainties(trace: &PredictionTrace, labels: &LabelSet) -> Result<Vec<UncertaintyProfile>> {
    let y = labels.require_single("checkpoint uncertainty")?;
    if trace.num_nodes() != y.len() {
        return Err(Error::Invalid(format!(
            "trace covers {} nodes, labels cover {}",
            trace.num_nodes(),
            y.len()
        )));
    }
    if trace.num_classes() != labels.num_classes() {
        return Err(Error::Invalid(format!(
            "trace has {} classes, labels have {}",
            trace.num_classes(),
            labels.num_classes()
        )));
    }
    let e = trace.num_checkpoints() as f64;
    Ok((0..y.len())
        .into_par_iter()
        .map(|v| {
            let mean_p = trace.class_series(v, y[v]).sum::<f64>() / e;
            let v_ep = trace
                .class_series(v, y[v])
                .map(|p| (p - mean_p).powi(2))
                .sum::<f64>()
                / e;
            let v_al = trace.class_series(v, y[v]).map(|p| p * (1.0 - p)).sum::<f64>() / e;
            UncertaintyProfile { mean_p, v_ep, v_al }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyCategory {
    Easy,
    Ambiguous,
    Hard,
}

impl DifficultyCategory {
    pub const ALL: [DifficultyCategory; 3] = [
        DifficultyCategory::Easy,
        DifficultyCategory::Ambiguous,
        DifficultyCategory::Hard,
    ];

    pub fn index(self) -> usize {
        match self {
            DifficultyCategory::Easy => 0,
            DifficultyCategory::Ambiguous => 1,
            DifficultyCategory::Hard => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DifficultyCategory::Easy => "easy",
            DifficultyCategory::Ambiguous => "ambiguous",
            DifficultyCategory::Hard => "hard",
        }
    }
}

impl fmt::Display for DifficultyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DifficultyCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(DifficultyCategory::Easy),
            "ambiguous" => Ok(DifficultyCategory::Ambiguous),
            "hard" => Ok(DifficultyCategory::Hard),
            other => Err(Error::Invalid(format!("unknown difficulty category {other:?}"))),
        }
    }
}

pub const DEFAULT_C_UP: f64 = 0.75;
pub const DEFAULT_C_LOW: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyConfig {
    pub c_up: f64,
    pub c_low: f64,
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        TaxonomyConfig {
            c_up: DEFAULT_C_UP,
            c_low: DEFAULT_C_LOW,
        }
    }
}

impl TaxonomyConfig {
    /// Thresholds used for the knowledge-graph error-detection recipe.
    pub const KB_RECIPE: TaxonomyConfig = TaxonomyConfig {
        c_up: 0.6,
        c_low: 0.4,
    };

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.c_low && self.c_low < self.c_up && self.c_up <= 1.0) {
            return Err(Error::Config(format!(
                "thresholds need 0 <= c_low < c_up <= 1, got c_low={} c_up={}",
                self.c_low, self.c_up
            )));
        }
        Ok(())
    }
}

/// Empirical median; even counts take the midpoint of the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    })
}

/// Easy: `mean_p >= c_up` and `v_al` strictly below the cohort median.
/// Hard: `mean_p <= c_low` and `v_al` strictly below the median.
/// Everything else is ambiguous.
pub fn categorize(profiles: &[UncertaintyProfile], config: &TaxonomyConfig) -> Vec<DifficultyCategory> {
    let v_al: Vec<f64> = profiles.iter().map(|p| p.v_al).collect();
    let Some(med) = median(&v_al) else {
        return Vec::new();
    };
    profiles
        .par_iter()
        .map(|p| {
            let settled = p.v_al < med;
            if settled && p.mean_p >= config.c_up {
                DifficultyCategory::Easy
            } else if settled && p.mean_p <= config.c_low {
                DifficultyCategory::Hard
            } else {
                DifficultyCategory::Ambiguous
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CategoryCounts {
    pub easy: usize,
    pub ambiguous: usize,
    pub hard: usize,
}

impl CategoryCounts {
    pub fn total(&self) -> usize {
        self.easy + self.ambiguous + self.hard
    }

    pub fn get(&self, c: DifficultyCategory) -> usize {
        match c {
            DifficultyCategory::Easy => self.easy,
            DifficultyCategory::Ambiguous => self.ambiguous,
            DifficultyCategory::Hard => self.hard,
        }
    }

    /// (easy, ambiguous, hard) fractions; all zero for an empty population.
    pub fn fractions(&self) -> [f64; 3] {
        let t = self.total();
        if t == 0 {
            return [0.0; 3];
        }
        let t = t as f64;
        [self.easy as f64 / t, self.ambiguous as f64 / t, self.hard as f64 / t]
    }

    /// Most frequent category; ties prefer easy, then ambiguous.
    pub fn plurality(&self) -> DifficultyCategory {
        let mut best = DifficultyCategory::Easy;
        for c in DifficultyCategory::ALL {
            if self.get(c) > self.get(best) {
                best = c;
            }
        }
        best
    }
}

/// Counts over all nodes, or over the nodes selected by `mask`.
pub fn category_counts(categories: &[DifficultyCategory], mask: Option<&[bool]>) -> CategoryCounts {
    let mut counts = CategoryCounts::default();
    for (v, c) in categories.iter().enumerate() {
        if mask.is_some_and(|m| !m[v]) {
            continue;
        }
        match c {
            DifficultyCategory::Easy => counts.easy += 1,
            DifficultyCategory::Ambiguous => counts.ambiguous += 1,
            DifficultyCategory::Hard => counts.hard += 1,
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Enrichment {
    pub precision_hard: f64,
    pub recall_hard: f64,
}

/// How well the hard category recovers nodes carrying `marker`.
pub fn enrichment(categories: &[DifficultyCategory], marker: &[bool]) -> Result<Enrichment> {
    if categories.len() != marker.len() {
        return Err(Error::Invalid(format!(
            "{} categories but {} marker entries",
            categories.len(),
            marker.len()
        )));
    }
    let hard = categories.iter().filter(|&&c| c == DifficultyCategory::Hard).count();
    let marked = marker.iter().filter(|&&m| m).count();
    let both = categories
        .iter()
        .zip(marker)
        .filter(|(&c, &m)| m && c == DifficultyCategory::Hard)
        .count();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(Enrichment {
        precision_hard: ratio(both, hard),
        recall_hard: ratio(both, marked),
    })
}
