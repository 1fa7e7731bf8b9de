use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotationTrace, ModalityConfig, Session};
use crate::affect::{median, AffectMeasures};
use crate::error::{Error, Result};

/// Slack for timestamp comparisons, so `k * step` landing one ulp past a
/// sample time does not move the sample to the next window.
const TIME_EPS: f64 = 1e-9;

/// One time window reduced to a single feature vector plus its affect
/// measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub participant_id: String,
    pub window_start_s: f64,
    pub window_length_s: f64,
    pub features: Vec<f64>,
    pub measures: AffectMeasures,
}

/// Pointwise median across annotators (even count: mean of the middle two).
pub fn fuse_annotations(traces: &[AnnotationTrace]) -> Result<AnnotationTrace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Config("no annotation traces to fuse".into()))?;
    if let Some(bad) = traces.iter().find(|t| t.values.len() != first.values.len()) {
        return Err(Error::Dimension(format!(
            "annotator {} has {} samples, {} has {}",
            bad.annotator_id,
            bad.values.len(),
            first.annotator_id,
            first.values.len()
        )));
    }
    let mut column = vec![0.0; traces.len()];
    let values = (0..first.values.len())
        .map(|i| {
            for (c, t) in column.iter_mut().zip(traces) {
                *c = t.values[i];
            }
            median(&column).expect("at least one trace")
        })
        .collect();
    Ok(AnnotationTrace {
        annotator_id: "median".into(),
        values,
        rate_hz: first.rate_hz,
        start_s: first.start_s,
    })
}

/// Number of windows of `length` at starts `0, step, 2 step, ...` that fit
/// in `duration`.
pub fn window_count(duration_s: f64, length_s: f64, step_s: f64) -> usize {
    if length_s > duration_s + TIME_EPS {
        return 0;
    }
    ((duration_s - length_s) / step_s + TIME_EPS).floor() as usize + 1
}

/// Windows of one session plus the reasons any were dropped.
#[derive(Debug, Clone, Default)]
pub struct Windowing {
    pub samples: Vec<WindowSample>,
    pub warnings: Vec<String>,
}

/// Slides half-open windows `[start, start + length)` over a session.
///
/// Features are averaged per dimension over the frames inside each window
/// (selected modalities concatenated in canonical order) and measures are
/// computed from the fused annotation samples in the same interval. Windows
/// with no frame for some selected modality, or fewer than two annotation
/// samples, are dropped with a warning.
pub fn window_session(
    session: &Session,
    fused: &AnnotationTrace,
    window_length_s: f64,
    step_s: f64,
    modality: &ModalityConfig,
) -> Result<Windowing> {
    if !(window_length_s > 0.0 && step_s > 0.0) {
        return Err(Error::Config(format!(
            "window length and step must be positive (got {window_length_s}, {step_s})"
        )));
    }
    let streams = modality
        .selected()
        .iter()
        .map(|m| {
            session.streams.get(m).ok_or_else(|| {
                Error::Config(format!(
                    "participant {} has no {m} features",
                    session.participant_id
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fused_dim: usize = streams.iter().map(|s| s.dim).sum();

    let mut out = Windowing::default();
    let count = window_count(fused.duration_s(), window_length_s, step_s);
    if count == 0 {
        out.warnings.push(format!(
            "participant {}: session of {:.3} s is shorter than a {window_length_s} s window",
            session.participant_id,
            fused.duration_s()
        ));
        return Ok(out);
    }
    let ann_times: Vec<f64> = (0..fused.values.len()).map(|i| fused.time_of(i)).collect();

    for k in 0..count {
        let start = fused.start_s + k as f64 * step_s;
        let end = start + window_length_s;
        let inside = |times: &[f64]| {
            let lo = times.partition_point(|&t| t < start - TIME_EPS);
            let hi = times.partition_point(|&t| t < end - TIME_EPS);
            lo..hi
        };

        let ann = inside(&ann_times);
        if ann.len() < 2 {
            out.warnings.push(format!(
                "participant {}: window at {start:.3} s has {} annotation sample(s), dropped",
                session.participant_id,
                ann.len()
            ));
            continue;
        }

        let mut features = Vec::with_capacity(fused_dim);
        let mut empty = None;
        for (stream, m) in streams.iter().zip(modality.selected()) {
            let frames = inside(&stream.timestamps);
            if frames.is_empty() {
                empty = Some(*m);
                break;
            }
            let mut acc = vec![0.0; stream.dim];
            for i in frames.clone() {
                for (a, v) in acc.iter_mut().zip(stream.frame(i)) {
                    *a += v;
                }
            }
            let n = frames.len() as f64;
            features.extend(acc.into_iter().map(|a| a / n));
        }
        if let Some(m) = empty {
            out.warnings.push(format!(
                "participant {}: window at {start:.3} s has no {m} frames, dropped",
                session.participant_id
            ));
            continue;
        }

        out.samples.push(WindowSample {
            participant_id: session.participant_id.clone(),
            window_start_s: start,
            window_length_s,
            features,
            measures: AffectMeasures::from_values(&fused.values[ann])?,
        });
    }
    Ok(out)
}

/// Randomly reassigns measures among windows (features stay put), which
/// destroys any feature-affect relation. Used for chance-level controls.
pub fn shuffle_measures(windows: &mut [WindowSample], seed: u64) {
    let mut measures: Vec<AffectMeasures> = windows.iter().map(|w| w.measures).collect();
    measures.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (w, m) in windows.iter_mut().zip(measures) {
        w.measures = m;
    }
}
