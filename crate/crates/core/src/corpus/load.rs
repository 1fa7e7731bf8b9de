//! On-disk corpus layout:
//!
//! ```text
//! <root>/<participant_id>/features_<modality>.csv                  time_s,f0,f1,...
//! <root>/<participant_id>/annotations_<dimension>_<annotator>.csv  time_s,value
//! ```
//!
//! Comma separated, header row, one sample per row.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnnotationTrace, FeatureStream, Modality, ModalityDims, Session};
use crate::error::{Error, LoadIssue, Result};

/// What a corpus directory is expected to contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSchema {
    /// Annotated affect dimension, part of the annotation file names.
    pub dimension: String,
    /// Feature files every participant must provide.
    pub modalities: Vec<Modality>,
    /// When set, feature files must have exactly these widths.
    pub dims: Option<ModalityDims>,
}

impl Default for CorpusSchema {
    fn default() -> Self {
        Self {
            dimension: "arousal".into(),
            modalities: Modality::ALL.to_vec(),
            dims: None,
        }
    }
}

/// Summary of a successful load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub participants: usize,
    pub files_read: usize,
    pub feature_frames: usize,
    pub annotation_samples: usize,
}

struct Issues(Vec<LoadIssue>);

impl Issues {
    fn push(&mut self, file: &Path, row: Option<usize>, message: impl Into<String>) {
        self.0.push(LoadIssue {
            file: file.to_path_buf(),
            row,
            message: message.into(),
        });
    }
}

/// Parses a `time_s,...` CSV into timestamps and row-major values.
fn read_table(path: &Path, issues: &mut Issues) -> Option<(Vec<String>, Vec<f64>, Vec<f64>)> {
    let mut reader = match csv::ReaderBuilder::new().flexible(true).from_path(path) {
        Ok(r) => r,
        Err(e) => {
            issues.push(path, None, format!("cannot open: {e}"));
            return None;
        }
    };
    let header: Vec<String> = match reader.headers() {
        Ok(h) => h.iter().map(|s| s.trim().to_string()).collect(),
        Err(e) => {
            issues.push(path, None, format!("cannot read header: {e}"));
            return None;
        }
    };
    if header.first().map(String::as_str) != Some("time_s") || header.len() < 2 {
        issues.push(path, None, "header must start with time_s and name at least one column");
        return None;
    }
    let width = header.len() - 1;
    let before = issues.0.len();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                issues.push(path, Some(row), format!("unreadable row: {e}"));
                continue;
            }
        };
        if record.len() != header.len() {
            issues.push(
                path,
                Some(row),
                format!("ragged row: {} fields, header has {}", record.len(), header.len()),
            );
            continue;
        }
        let mut parsed = Vec::with_capacity(record.len());
        for field in record.iter() {
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => parsed.push(v),
                _ => {
                    issues.push(path, Some(row), format!("not a finite number: '{field}'"));
                    break;
                }
            }
        }
        if parsed.len() != record.len() {
            continue;
        }
        if let Some(&prev) = times.last() {
            if !(parsed[0] > prev) {
                issues.push(path, Some(row), format!("time {} does not increase", parsed[0]));
            }
        }
        times.push(parsed[0]);
        values.extend_from_slice(&parsed[1..]);
    }
    if times.is_empty() {
        issues.push(path, None, "no data rows");
    }
    if issues.0.len() > before {
        return None;
    }
    debug_assert_eq!(values.len(), times.len() * width);
    Some((header, times, values))
}

fn read_annotation(
    path: &Path,
    annotator_id: &str,
    issues: &mut Issues,
) -> Option<AnnotationTrace> {
    let (header, times, values) = read_table(path, issues)?;
    if header.len() != 2 {
        issues.push(path, None, "annotation files have exactly the columns time_s,value");
        return None;
    }
    let mut ok = true;
    for (i, v) in values.iter().enumerate() {
        if !(-1.0..=1.0).contains(v) {
            issues.push(path, Some(i + 1), format!("annotation value {v} outside [-1, 1]"));
            ok = false;
        }
    }
    if times.len() < 2 {
        issues.push(path, None, "need at least 2 annotation samples to infer the rate");
        return None;
    }
    let period = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if let Some(i) = times
        .windows(2)
        .position(|w| ((w[1] - w[0]) - period).abs() > 0.01 * period)
    {
        issues.push(path, Some(i + 2), "annotation samples are not uniformly spaced");
        ok = false;
    }
    ok.then(|| AnnotationTrace {
        annotator_id: annotator_id.to_string(),
        values,
        rate_hz: 1.0 / period,
        start_s: times[0],
    })
}

fn load_session(dir: &Path, participant_id: &str, schema: &CorpusSchema, issues: &mut Issues, report: &mut LoadReport) -> Option<Session> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) => {
            issues.push(dir, None, format!("cannot list directory: {e}"));
            return None;
        }
    };
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();

    let before = issues.0.len();
    let mut streams = BTreeMap::new();
    for &modality in &schema.modalities {
        let path = dir.join(format!("features_{}.csv", modality.name()));
        if !path.is_file() {
            issues.push(&path, None, "missing feature file");
            continue;
        }
        report.files_read += 1;
        let Some((header, timestamps, values)) = read_table(&path, issues) else {
            continue;
        };
        let dim = header.len() - 1;
        if let Some(expected) = schema.dims.map(|d| d.get(modality)) {
            if dim != expected {
                issues.push(&path, None, format!("{dim} feature columns, expected {expected}"));
                continue;
            }
        }
        report.feature_frames += timestamps.len();
        streams.insert(modality, FeatureStream { timestamps, dim, values });
    }

    let prefix = format!("annotations_{}_", schema.dimension);
    let mut annotations = Vec::new();
    for name in &names {
        let Some(annotator) = name.strip_prefix(&prefix).and_then(|r| r.strip_suffix(".csv")) else {
            continue;
        };
        let path = dir.join(name);
        report.files_read += 1;
        if let Some(trace) = read_annotation(&path, annotator, issues) {
            report.annotation_samples += trace.values.len();
            annotations.push(trace);
        }
    }
    if annotations.is_empty() && issues.0.len() == before {
        issues.push(dir, None, format!("no {prefix}*.csv annotation files"));
    }
    if let Some(first) = annotations.first() {
        for t in &annotations[1..] {
            if t.values.len() != first.values.len() || (t.rate_hz - first.rate_hz).abs() > 1e-6 * first.rate_hz {
                issues.push(
                    &dir.join(format!("{prefix}{}.csv", t.annotator_id)),
                    None,
                    format!(
                        "{} samples at {:.4} Hz, annotator {} has {} at {:.4} Hz",
                        t.values.len(),
                        t.rate_hz,
                        first.annotator_id,
                        first.values.len(),
                        first.rate_hz
                    ),
                );
            }
        }
    }
    if issues.0.len() > before {
        return None;
    }
    Some(Session {
        participant_id: participant_id.to_string(),
        streams,
        annotations,
    })
}

/// Reads every participant directory under `root`. All problems across all
/// files are collected and returned together.
pub fn load_corpus(root: &Path, schema: &CorpusSchema) -> Result<(Vec<Session>, LoadReport)> {
    let mut issues = Issues(Vec::new());
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();

    let mut report = LoadReport::default();
    let mut sessions = Vec::new();
    for dir in &dirs {
        let Some(id) = dir.file_name().and_then(|n| n.to_str()) else {
            issues.push(dir, None, "participant directory name is not UTF-8");
            continue;
        };
        if let Some(s) = load_session(dir, id, schema, &mut issues, &mut report) {
            sessions.push(s);
        }
    }
    if dirs.is_empty() {
        issues.push(root, None, "no sessions: the corpus root has no participant directories");
    }
    if !issues.0.is_empty() {
        return Err(Error::Load(issues.0));
    }
    report.participants = sessions.len();
    log::info!(
        "loaded {} sessions from {} files ({} feature frames, {} annotation samples)",
        report.participants,
        report.files_read,
        report.feature_frames,
        report.annotation_samples
    );
    Ok((sessions, report))
}

fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes sessions in the layout [`load_corpus`] reads. Floats use the
/// shortest representation that round-trips, so output is byte-stable.
pub fn write_corpus(sessions: &[Session], root: &Path, dimension: &str) -> Result<()> {
    for s in sessions {
        let dir = root.join(&s.participant_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (modality, stream) in &s.streams {
            let mut header = vec!["time_s".to_string()];
            header.extend((0..stream.dim).map(|i| format!("f{i}")));
            let rows = (0..stream.len()).map(|i| {
                std::iter::once(stream.timestamps[i])
                    .chain(stream.frame(i).iter().copied())
                    .map(|v| v.to_string())
                    .collect()
            });
            write_table(&dir.join(format!("features_{}.csv", modality.name())), &header, rows)?;
        }
        for trace in &s.annotations {
            let header = vec!["time_s".to_string(), "value".to_string()];
            let rows = trace
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| vec![trace.time_of(i).to_string(), v.to_string()]);
            let path = dir.join(format!("annotations_{dimension}_{}.csv", trace.annotator_id));
            write_table(&path, &header, rows)?;
        }
    }
    Ok(())
}
