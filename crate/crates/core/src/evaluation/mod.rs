//! Participant-disjoint cross-validation, accuracy aggregation and
//! significance testing.

mod experiment;
mod folds;
mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use experiment::{
    evaluate_accuracy, run_experiment, ExperimentOptions, ExperimentResult, FoldResult, Method,
    RunResult, ThresholdRecord,
};
pub use folds::{split_folds, FoldSplit};
pub use stats::{
    ln_gamma, regularized_beta, student_t_cdf, student_t_quantile, t_test_two_tailed, TTest,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Mean over every fold of every run.
    pub mean_accuracy: f64,
    /// Half-width of the 95% t-interval on the run-level means; absent with
    /// a single run.
    pub ci95_half_width: Option<f64>,
    pub best_fold_accuracy: f64,
    /// Run-level means in run order.
    pub run_means: Vec<f64>,
    pub n_accuracies: usize,
}

/// Mean computed from sorted values, so the result does not depend on input
/// order, and exact when all values are equal.
fn stable_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pivot = v[0];
    pivot + v.iter().map(|x| x - pivot).sum::<f64>() / v.len() as f64
}

pub fn aggregate(result: &ExperimentResult) -> Result<Summary> {
    let all = result.all_accuracies();
    if all.is_empty() || result.runs.iter().any(|r| r.folds.is_empty()) {
        return Err(Error::Degenerate("cannot aggregate an empty result".into()));
    }
    let run_means: Vec<f64> = result.runs.iter().map(|r| stable_mean(&r.accuracies())).collect();
    let ci95_half_width = (run_means.len() >= 2).then(|| {
        let r = run_means.len() as f64;
        let m = stable_mean(&run_means);
        let mut dev: Vec<f64> = run_means.iter().map(|x| (x - m) * (x - m)).collect();
        dev.sort_by(f64::total_cmp);
        let sd = (dev.iter().sum::<f64>() / (r - 1.0)).sqrt();
        student_t_quantile(0.975, r - 1.0) * sd / r.sqrt()
    });
    Ok(Summary {
        mean_accuracy: stable_mean(&all),
        ci95_half_width,
        best_fold_accuracy: all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        run_means,
        n_accuracies: all.len(),
    })
}
