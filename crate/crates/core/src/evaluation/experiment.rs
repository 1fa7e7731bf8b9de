use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{split_folds, FoldSplit};
use crate::affect::{assign_label, compute_threshold, ContrastiveLabel, LabelThresholds, Strategy};
use crate::corpus::mix_seed;
use crate::corpus::{fuse_annotations, shuffle_measures, window_session, ModalityConfig, Session, Standardizer, WindowSample};
use crate::error::{Error, Result};
use crate::training::{
    train_encoder_scl, train_end_to_end, train_probe, Classifier, MajorityClassifier, ProbedEncoder,
    TrainConfig, TrainReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Contrastive pretraining on high/low labels, then a linear probe.
    #[serde(rename = "E_HL")]
    EHighLow,
    #[serde(rename = "E_CU")]
    EChangeUnchanged,
    #[serde(rename = "E_UD")]
    EUpDown,
    /// Encoder and probe trained end to end.
    #[serde(rename = "E_b")]
    EndToEnd,
    #[serde(rename = "majority_baseline")]
    Majority,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::EHighLow,
        Method::EChangeUnchanged,
        Method::EUpDown,
        Method::EndToEnd,
        Method::Majority,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::EHighLow => "E_HL",
            Method::EChangeUnchanged => "E_CU",
            Method::EUpDown => "E_UD",
            Method::EndToEnd => "E_b",
            Method::Majority => "majority_baseline",
        }
    }

    /// Labeling strategy that drives contrastive pretraining, if any.
    pub fn contrastive_strategy(self) -> Option<Strategy> {
        match self {
            Method::EHighLow => Some(Strategy::HighLow),
            Method::EChangeUnchanged => Some(Strategy::ChangeUnchanged),
            Method::EUpDown => Some(Strategy::UpDown),
            Method::EndToEnd | Method::Majority => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("majority") {
            return Ok(Method::Majority);
        }
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method '{s}' (expected E_HL, E_CU, E_UD, E_b or majority_baseline)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentOptions {
    pub step_s: f64,
    /// Half-width of the excluded band around the high/low median.
    pub epsilon: f64,
    pub n_runs: usize,
    pub k_folds: usize,
    pub base_seed: u64,
    /// When set, affect measures are permuted across windows with this seed
    /// before labeling (chance-level control).
    pub label_shuffle_seed: Option<u64>,
    pub train: TrainConfig,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            step_s: 0.4,
            epsilon: 0.1,
            n_runs: 10,
            k_folds: 5,
            base_seed: 0,
            label_shuffle_seed: None,
            train: TrainConfig::default(),
        }
    }
}

/// A median threshold together with the participants whose windows it was
/// computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub thresholds: LabelThresholds,
    pub source_participants: BTreeSet<String>,
    pub n_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub split: FoldSplit,
    pub accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Change/trend threshold fitted on this fold's training windows.
    pub fold_threshold: Option<ThresholdRecord>,
    /// Whether probe training left the encoder bit-identical.
    pub encoder_frozen: Option<bool>,
    pub pretrain: Option<TrainReport>,
    pub train: Option<TrainReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_index: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
}

impl RunResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method: Method,
    pub window_length_s: f64,
    pub modality: ModalityConfig,
    pub options: ExperimentOptions,
    /// Corpus-wide high/low threshold.
    pub hl_threshold: ThresholdRecord,
    pub n_windows: usize,
    pub n_excluded: usize,
    pub runs: Vec<RunResult>,
}

impl ExperimentResult {
    pub fn run_seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }

    pub fn all_accuracies(&self) -> Vec<f64> {
        self.runs.iter().flat_map(|r| r.accuracies()).collect()
    }
}

/// Fraction of samples whose arg-max prediction matches the label.
pub fn evaluate_accuracy(model: &dyn Classifier, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::Degenerate("accuracy of an empty test set".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} test rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let mut hits = 0usize;
    for (x, &y) in features.iter().zip(labels) {
        if model.predict(x)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / features.len() as f64)
}

/// A window that survived the high/low exclusion band.
struct Labeled {
    window: WindowSample,
    hl: ContrastiveLabel,
}

/// Windows every session, fuses annotators, and applies the corpus-wide
/// high/low threshold.
fn prepare(
    sessions: &[Session],
    window_length_s: f64,
    modality: &ModalityConfig,
    opts: &ExperimentOptions,
) -> Result<(Vec<Labeled>, ThresholdRecord, usize)> {
    let mut windows = Vec::new();
    for s in sessions {
        let fused = fuse_annotations(&s.annotations)
            .map_err(|e| e.with_context(format!("participant {}", s.participant_id)))?;
        let w = window_session(s, &fused, window_length_s, opts.step_s, modality)?;
        for msg in &w.warnings {
            log::warn!("{msg}");
        }
        windows.extend(w.samples);
    }
    if windows.is_empty() {
        return Err(Error::Degenerate(format!(
            "no {window_length_s} s windows could be formed"
        )));
    }
    if let Some(seed) = opts.label_shuffle_seed {
        shuffle_measures(&mut windows, seed);
    }
    let states: Vec<f64> = windows.iter().map(|w| w.measures.state).collect();
    let th = compute_threshold(&states, Strategy::HighLow, opts.epsilon)?;
    let record = ThresholdRecord {
        thresholds: th,
        source_participants: windows.iter().map(|w| w.participant_id.clone()).collect(),
        n_windows: windows.len(),
    };
    let total = windows.len();
    let labeled: Vec<Labeled> = windows
        .into_iter()
        .filter_map(|window| {
            assign_label(&window.measures, &th)
                .label()
                .map(|hl| Labeled { window, hl })
        })
        .collect();
    let excluded = total - labeled.len();
    Ok((labeled, record, excluded))
}

fn run_fold(
    method: Method,
    data: &[Labeled],
    split: &FoldSplit,
    train_cfg: &TrainConfig,
) -> Result<FoldResult> {
    if !split.is_disjoint() {
        return Err(Error::Config(format!(
            "fold {} shares participants between train and test",
            split.fold_index
        )));
    }
    let train: Vec<&Labeled> = data
        .iter()
        .filter(|l| split.train_participants.contains(&l.window.participant_id))
        .collect();
    let test: Vec<&Labeled> = data
        .iter()
        .filter(|l| split.test_participants.contains(&l.window.participant_id))
        .collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::Degenerate(format!(
            "fold {} has {} training and {} test windows",
            split.fold_index,
            train.len(),
            test.len()
        )));
    }

    let raw_train: Vec<Vec<f64>> = train.iter().map(|l| l.window.features.clone()).collect();
    let scaler = Standardizer::fit(&raw_train)?;
    let x_train = scaler.transform(&raw_train)?;
    let x_test: Vec<Vec<f64>> = test.iter().map(|l| scaler.transform_row(&l.window.features)).collect();
    let y_train: Vec<usize> = train.iter().map(|l| l.hl.class_index()).collect();
    let y_test: Vec<usize> = test.iter().map(|l| l.hl.class_index()).collect();

    let mut result = FoldResult {
        split: split.clone(),
        accuracy: 0.0,
        n_train: train.len(),
        n_test: test.len(),
        fold_threshold: None,
        encoder_frozen: None,
        pretrain: None,
        train: None,
    };

    result.accuracy = match method {
        Method::Majority => {
            let model = MajorityClassifier::fit(&y_train)?;
            evaluate_accuracy(&model, &x_test, &y_test)?
        }
        Method::EndToEnd => {
            let (model, report) = train_end_to_end(&x_train, &y_train, train_cfg)?;
            result.train = Some(report);
            evaluate_accuracy(&model, &x_test, &y_test)?
        }
        Method::EHighLow | Method::EChangeUnchanged | Method::EUpDown => {
            let strategy = method.contrastive_strategy().expect("contrastive method");
            let scl_labels: Vec<ContrastiveLabel> = if strategy == Strategy::HighLow {
                train.iter().map(|l| l.hl).collect()
            } else {
                let values: Vec<f64> = train.iter().map(|l| l.window.measures.get(strategy)).collect();
                let th = compute_threshold(&values, strategy, 0.0)?;
                result.fold_threshold = Some(ThresholdRecord {
                    thresholds: th,
                    source_participants: train.iter().map(|l| l.window.participant_id.clone()).collect(),
                    n_windows: train.len(),
                });
                train
                    .iter()
                    .map(|l| assign_label(&l.window.measures, &th).label().expect("only HL excludes"))
                    .collect()
            };
            let (encoder, pre) = train_encoder_scl(&x_train, &scl_labels, train_cfg)
                .map_err(|e| e.with_context("contrastive pretraining"))?;
            let before = encoder.fingerprint();
            let (probe, report) = train_probe(&encoder, &x_train, &y_train, train_cfg)
                .map_err(|e| e.with_context("probe training"))?;
            result.encoder_frozen = Some(encoder.fingerprint() == before);
            result.pretrain = Some(pre);
            result.train = Some(report);
            evaluate_accuracy(&ProbedEncoder { encoder: &encoder, probe: &probe }, &x_test, &y_test)?
        }
    };
    Ok(result)
}

/// Cross-validates one method on one (window length, modality) cell for
/// `opts.n_runs` runs. Run `r` uses seed `base_seed + r` for its fold
/// partition; each fold trains with a seed mixed from the run seed and the
/// fold index. Folds run in parallel; results are ordered and deterministic.
pub fn run_experiment(
    sessions: &[Session],
    method: Method,
    window_length_s: f64,
    modality: &ModalityConfig,
    opts: &ExperimentOptions,
) -> Result<ExperimentResult> {
    if opts.n_runs == 0 {
        return Err(Error::Config("n_runs must be positive".into()));
    }
    opts.train.validate()?;
    let (data, hl_threshold, n_excluded) = prepare(sessions, window_length_s, modality, opts)?;
    let participants: Vec<String> = sessions.iter().map(|s| s.participant_id.clone()).collect();

    let mut jobs = Vec::new();
    for run in 0..opts.n_runs {
        let seed = opts.base_seed.wrapping_add(run as u64);
        for split in split_folds(&participants, opts.k_folds, seed)? {
            jobs.push((run, seed, split));
        }
    }
    let folds: Vec<FoldResult> = jobs
        .par_iter()
        .map(|(run, seed, split)| {
            let cfg = opts.train.with_seed(mix_seed(*seed, split.fold_index as u64));
            run_fold(method, &data, split, &cfg).map_err(|e| {
                e.with_context(format!(
                    "{method}, {window_length_s} s, {modality}: run {run}, fold {}",
                    split.fold_index
                ))
            })
        })
        .collect::<Result<_>>()?;

    let mut folds = folds.into_iter();
    let runs = (0..opts.n_runs)
        .map(|run| RunResult {
            run_index: run,
            seed: opts.base_seed.wrapping_add(run as u64),
            folds: folds.by_ref().take(opts.k_folds).collect(),
        })
        .collect();

    Ok(ExperimentResult {
        method,
        window_length_s,
        modality: modality.clone(),
        options: opts.clone(),
        n_windows: hl_threshold.n_windows,
        hl_threshold,
        n_excluded,
        runs,
    })
}
