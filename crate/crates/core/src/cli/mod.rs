//! `synth`, `run` and `compare` subcommands.
//!
//! `run` writes into its output directory:
//!
//! ```text
//! cells/<method>_w<window>_<modality>.json   one ExperimentResult per grid cell
//! results.json                               spec plus every cell (result or error)
//! summary.json / summary.csv                 one aggregated row per cell
//! ```

mod args;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{generate_synthetic, load_corpus, write_corpus, CorpusSchema, ModalityConfig, SynthConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate, run_experiment, t_test_two_tailed, ExperimentOptions, ExperimentResult, Method, Summary,
    TTest,
};
use crate::training::TrainConfig;

pub use args::{main_with_args, Cli};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub corpus_root: PathBuf,
    pub dimension: String,
    pub methods: Vec<Method>,
    pub window_lengths_s: Vec<f64>,
    pub step_s: f64,
    pub epsilon: f64,
    pub modalities: Vec<ModalityConfig>,
    pub n_runs: usize,
    pub k_folds: usize,
    pub train: TrainConfig,
    pub base_seed: u64,
    pub label_shuffle_seed: Option<u64>,
    pub output_dir: PathBuf,
    /// Grid cells processed concurrently.
    pub workers: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let opts = ExperimentOptions::default();
        Self {
            corpus_root: PathBuf::from("corpus"),
            dimension: "arousal".into(),
            methods: vec![Method::EHighLow, Method::EChangeUnchanged, Method::EUpDown, Method::EndToEnd],
            window_lengths_s: vec![1.0, 2.0, 3.0, 4.0],
            step_s: opts.step_s,
            epsilon: opts.epsilon,
            modalities: ModalityConfig::standard_grid(),
            n_runs: opts.n_runs,
            k_folds: opts.k_folds,
            train: opts.train,
            base_seed: opts.base_seed,
            label_shuffle_seed: None,
            output_dir: PathBuf::from("results"),
            workers: 1,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::from(e).with_context(format!("spec {}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.window_lengths_s.is_empty() || self.modalities.is_empty() {
            return Err(Error::Config("methods, window lengths and modalities must be non-empty".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        if !self.corpus_root.is_dir() {
            return Err(Error::Config(format!(
                "corpus root {} is not a directory",
                self.corpus_root.display()
            )));
        }
        self.train.validate()
    }

    pub fn options(&self) -> ExperimentOptions {
        ExperimentOptions {
            step_s: self.step_s,
            epsilon: self.epsilon,
            n_runs: self.n_runs,
            k_folds: self.k_folds,
            base_seed: self.base_seed,
            label_shuffle_seed: self.label_shuffle_seed,
            train: self.train.clone(),
        }
    }

    /// Every (method, window, modality) combination in spec order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for &method in &self.methods {
            for &window_length_s in &self.window_lengths_s {
                for modality in &self.modalities {
                    cells.push(CellKey {
                        method,
                        window_length_s,
                        modality: modality.clone(),
                    });
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub method: Method,
    pub window_length_s: f64,
    pub modality: ModalityConfig,
}

impl CellKey {
    pub fn file_stem(&self) -> String {
        format!("{}_w{}_{}", self.method, self.window_length_s, self.modality)
    }

    /// Identity of the cell apart from its method.
    fn setting(&self) -> (u64, String) {
        (self.window_length_s.to_bits(), self.modality.label())
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {} s / {}", self.method, self.window_length_s, self.modality)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub key: CellKey,
    pub result: Option<ExperimentResult>,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub spec: ExperimentSpec,
    pub cells: Vec<CellRecord>,
}

impl ResultsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::from(e).with_context(format!("results {}", path.display())))
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Generates a synthetic corpus and writes it under `out`.
pub fn cmd_synth(cfg: &SynthConfig, out: &Path, dimension: &str) -> Result<usize> {
    let sessions = generate_synthetic(cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_corpus(&sessions, out, dimension)?;
    Ok(sessions.len())
}

fn opt_to_string(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV table of one row per cell. Floats are written in shortest
/// round-trip form.
pub fn summary_csv(cells: &[CellRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "window_length_s",
        "modality",
        "n_accuracies",
        "mean_accuracy",
        "ci95_half_width",
        "best_fold_accuracy",
        "status",
        "error",
    ])?;
    for c in cells {
        let s = c.summary.as_ref();
        w.write_record([
            c.key.method.to_string(),
            c.key.window_length_s.to_string(),
            c.key.modality.label(),
            s.map(|s| s.n_accuracies.to_string()).unwrap_or_default(),
            opt_to_string(s.map(|s| s.mean_accuracy)),
            opt_to_string(s.and_then(|s| s.ci95_half_width)),
            opt_to_string(s.map(|s| s.best_fold_accuracy)),
            if c.error.is_some() { "failed" } else { "ok" }.to_string(),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| Error::Config(format!("summary table: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SummaryRow {
    key: CellKey,
    summary: Option<Summary>,
    error: Option<String>,
}

/// Runs the full grid. A failing cell is recorded with its error and the
/// remaining cells still run; only setup problems return `Err`.
pub fn cmd_run(spec: &ExperimentSpec) -> Result<ResultsFile> {
    spec.validate()?;
    let needed: BTreeSet<_> = spec
        .modalities
        .iter()
        .flat_map(|m| m.selected().iter().copied())
        .collect();
    let schema = CorpusSchema {
        dimension: spec.dimension.clone(),
        modalities: needed.into_iter().collect(),
        dims: None,
    };
    let (sessions, _) = load_corpus(&spec.corpus_root, &schema)?;
    let opts = spec.options();
    let cells_dir = spec.output_dir.join("cells");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let keys = spec.cells();
    log::info!("running {} grid cells on {} worker(s)", keys.len(), spec.workers);

    let cells: Vec<CellRecord> = pool.install(|| {
        keys.par_iter()
            .map(|key| {
                let outcome = run_experiment(&sessions, key.method, key.window_length_s, &key.modality, &opts)
                    .and_then(|r| {
                        let s = aggregate(&r)?;
                        write_atomic(&cells_dir.join(format!("{}.json", key.file_stem())), &to_json(&r)?)?;
                        Ok((r, s))
                    });
                match outcome {
                    Ok((result, summary)) => {
                        log::info!("{key}: mean accuracy {:.4}", summary.mean_accuracy);
                        CellRecord {
                            key: key.clone(),
                            result: Some(result),
                            summary: Some(summary),
                            error: None,
                        }
                    }
                    Err(e) => {
                        log::error!("{key}: {e}");
                        CellRecord {
                            key: key.clone(),
                            result: None,
                            summary: None,
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect()
    });

    let results = ResultsFile {
        spec: spec.clone(),
        cells,
    };
    let rows: Vec<SummaryRow> = results
        .cells
        .iter()
        .map(|c| SummaryRow {
            key: c.key.clone(),
            summary: c.summary.clone(),
            error: c.error.clone(),
        })
        .collect();
    write_atomic(&spec.output_dir.join("results.json"), &to_json(&results)?)?;
    write_atomic(&spec.output_dir.join("summary.json"), &to_json(&rows)?)?;
    write_atomic(&spec.output_dir.join("summary.csv"), &summary_csv(&results.cells)?)?;
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: CellKey,
    pub b: CellKey,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Absent when both sets of run means have zero variance.
    pub test: Option<TTest>,
    pub significant: bool,
    pub degenerate: bool,
}

fn successful(file: &ResultsFile, method: Option<Method>) -> Vec<(&CellKey, &ExperimentResult)> {
    file.cells
        .iter()
        .filter(|c| method.is_none_or(|m| c.key.method == m))
        .filter_map(|c| c.result.as_ref().map(|r| (&c.key, r)))
        .collect()
}

/// Pairs cells of `a` and `b` and runs a two-tailed t-test on their
/// run-level mean accuracies. Without method filters cells pair by their
/// full key; with filters they pair by window length and modality.
pub fn cmd_compare(
    a: &ResultsFile,
    b: &ResultsFile,
    method_a: Option<Method>,
    method_b: Option<Method>,
) -> Result<Vec<Comparison>> {
    let by_method = method_a.is_some() || method_b.is_some();
    let index = |k: &CellKey| {
        let (w, m) = k.setting();
        (if by_method { None } else { Some(k.method) }, w, m)
    };
    let left = successful(a, method_a);
    let right: BTreeMap<_, _> = successful(b, method_b)
        .into_iter()
        .map(|(k, r)| (index(k), (k, r)))
        .collect();
    if left.is_empty() {
        return Err(Error::Mismatch("first results file has no matching successful cells".into()));
    }

    let mut missing = Vec::new();
    let mut out = Vec::new();
    let mut used = BTreeSet::new();
    for (ka, ra) in left {
        let Some(&(kb, rb)) = right.get(&index(ka)) else {
            missing.push(format!("{ka} has no counterpart"));
            continue;
        };
        used.insert(index(ka));
        let sa = aggregate(ra)?;
        let sb = aggregate(rb)?;
        let (test, degenerate) = match t_test_two_tailed(&sa.run_means, &sb.run_means) {
            Ok(t) => (Some(t), false),
            Err(Error::Degenerate(_)) => (None, true),
            Err(e) => return Err(e.with_context(format!("comparing {ka} with {kb}"))),
        };
        out.push(Comparison {
            a: ka.clone(),
            b: kb.clone(),
            mean_a: sa.mean_accuracy,
            mean_b: sb.mean_accuracy,
            significant: test.is_some_and(|t| t.p < 0.05),
            test,
            degenerate,
        });
    }
    for (idx, (kb, _)) in &right {
        if !used.contains(idx) {
            missing.push(format!("{kb} only in second results file"));
        }
    }
    if !missing.is_empty() {
        return Err(Error::Mismatch(missing.join("; ")));
    }
    Ok(out)
}

pub fn render_comparisons(rows: &[Comparison]) -> String {
    let mut s = format!(
        "{:<40} {:<40} {:>8} {:>8} {:>9} {:>10}  sig\n",
        "a", "b", "mean_a", "mean_b", "t", "p"
    );
    for r in rows {
        let (t, p) = match r.test {
            Some(t) => (format!("{:.3}", t.t), format!("{:.4e}", t.p)),
            None => ("-".into(), "degenerate".into()),
        };
        s.push_str(&format!(
            "{:<40} {:<40} {:>8.4} {:>8.4} {:>9} {:>10}  {}\n",
            r.a.to_string(),
            r.b.to_string(),
            r.mean_a,
            r.mean_b,
            t,
            p,
            if r.significant { "*" } else { "" }
        ));
    }
    s
}
