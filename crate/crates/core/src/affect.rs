//! Affect measures of an annotation window and the three contrastive
//! labeling strategies built on them.
//!
//! * state `g_a`: mean of the `n` samples in the window
//! * change `c_a`: mean of the `n - 1` absolute consecutive differences
//! * trend `t_a`: mean of the `n - 1` signed consecutive differences,
//!   which telescopes to `(v_last - v_first) / (n - 1)`
//!
//! Labels are binarized against the median of a population of measures.
//! Because a common positive rescaling of every measure and its median
//! leaves all comparisons unchanged, the choice of normalizing constant
//! above does not affect any label.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Median with the even-count rule (mean of the two middle values).
/// Returns `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    })
}

/// Annotation samples falling inside one time window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTrace {
    values: Vec<f64>,
    window_length_s: f64,
    sample_rate_hz: f64,
}

impl WindowTrace {
    pub fn new(values: Vec<f64>, window_length_s: f64, sample_rate_hz: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config(format!(
                "window trace needs at least 2 samples, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("annotation value {v} outside [-1, 1]")));
        }
        if !(window_length_s > 0.0 && sample_rate_hz > 0.0) {
            return Err(Error::Config(
                "window length and sample rate must be positive".into(),
            ));
        }
        Ok(Self {
            values,
            window_length_s,
            sample_rate_hz,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn window_length_s(&self) -> f64 {
        self.window_length_s
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn measures(&self) -> AffectMeasures {
        AffectMeasures::from_values(&self.values).expect("validated at construction")
    }
}

pub fn affect_state(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Degenerate("affect state of an empty trace".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn affect_change(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "affect change needs at least 2 samples, got {}",
            values.len()
        )));
    }
    let sum: f64 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(sum / (values.len() - 1) as f64)
}

pub fn affect_trend(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "affect trend needs at least 2 samples, got {}",
            values.len()
        )));
    }
    let sum: f64 = values.windows(2).map(|w| w[1] - w[0]).sum();
    Ok(sum / (values.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffectMeasures {
    /// `g_a`
    pub state: f64,
    /// `c_a`
    pub change: f64,
    /// `t_a`
    pub trend: f64,
}

impl AffectMeasures {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Ok(Self {
            state: affect_state(values)?,
            change: affect_change(values)?,
            trend: affect_trend(values)?,
        })
    }

    pub fn get(&self, strategy: Strategy) -> f64 {
        match strategy {
            Strategy::HighLow => self.state,
            Strategy::ChangeUnchanged => self.change,
            Strategy::UpDown => self.trend,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            state: self.state * factor,
            change: self.change * factor,
            trend: self.trend * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "HL")]
    HighLow,
    #[serde(rename = "CU")]
    ChangeUnchanged,
    #[serde(rename = "UD")]
    UpDown,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::HighLow, Strategy::ChangeUnchanged, Strategy::UpDown];

    pub fn code(self) -> &'static str {
        match self {
            Strategy::HighLow => "HL",
            Strategy::ChangeUnchanged => "CU",
            Strategy::UpDown => "UD",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelThresholds {
    pub strategy: Strategy,
    pub median: f64,
    /// Width of the excluded band around the median; always 0 unless HL.
    pub epsilon: f64,
}

impl LabelThresholds {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            median: self.median * factor,
            epsilon: self.epsilon * factor,
            ..*self
        }
    }
}

/// Median of `measures`, with `epsilon` attached for HL (ignored otherwise).
pub fn compute_threshold(measures: &[f64], strategy: Strategy, epsilon: f64) -> Result<LabelThresholds> {
    let median = median(measures)
        .ok_or_else(|| Error::Degenerate("threshold of an empty measure list".into()))?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(LabelThresholds {
        strategy,
        median,
        epsilon: if strategy == Strategy::HighLow { epsilon } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    High,
    Low,
    Change,
    Unchanged,
    Uptrend,
    Downtrend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContrastiveLabel {
    pub strategy: Strategy,
    pub category: Category,
}

impl ContrastiveLabel {
    /// Class index used by the classifiers: 1 for high / change / uptrend,
    /// 0 for the other category.
    pub fn class_index(&self) -> usize {
        match self.category {
            Category::High | Category::Change | Category::Uptrend => 1,
            Category::Low | Category::Unchanged | Category::Downtrend => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Labeled(ContrastiveLabel),
    /// Inside the HL ambiguity band.
    Excluded,
}

impl Assignment {
    pub fn label(self) -> Option<ContrastiveLabel> {
        match self {
            Assignment::Labeled(l) => Some(l),
            Assignment::Excluded => None,
        }
    }
}

pub fn assign_label(m: &AffectMeasures, th: &LabelThresholds) -> Assignment {
    let strategy = th.strategy;
    let value = m.get(strategy);
    let category = match strategy {
        Strategy::HighLow => {
            if value > th.median + th.epsilon {
                Category::High
            } else if value < th.median - th.epsilon {
                Category::Low
            } else {
                return Assignment::Excluded;
            }
        }
        Strategy::ChangeUnchanged => {
            if value > th.median {
                Category::Change
            } else {
                Category::Unchanged
            }
        }
        Strategy::UpDown => {
            if value > th.median {
                Category::Uptrend
            } else {
                Category::Downtrend
            }
        }
    };
    Assignment::Labeled(ContrastiveLabel { strategy, category })
}
