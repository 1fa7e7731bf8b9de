//! Sessions of multimodal feature streams with continuous annotations:
//! loading, annotator fusion, sliding windows, standardization, and a
//! synthetic generator that writes the same on-disk layout.

mod load;
mod standardize;
mod synth;
mod window;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use load::{load_corpus, write_corpus, CorpusSchema, LoadReport};
pub use standardize::{standardize_features, Standardizer};
pub use synth::{generate_synthetic, SynthConfig};
pub(crate) use synth::mix_seed;
pub use window::{
    fuse_annotations, shuffle_measures, window_count, window_session, WindowSample, Windowing,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Video,
    Physiology,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Audio, Modality::Video, Modality::Physiology];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Video => "video",
            Modality::Physiology => "physiology",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" => Ok(Modality::Audio),
            "video" => Ok(Modality::Video),
            "physiology" => Ok(Modality::Physiology),
            other => Err(Error::Config(format!("unknown modality '{other}'"))),
        }
    }
}

/// Feature count per modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityDims {
    pub audio: usize,
    pub video: usize,
    pub physiology: usize,
}

impl Default for ModalityDims {
    /// The handcrafted feature sets of the reference corpus.
    fn default() -> Self {
        Self {
            audio: 130,
            video: 40,
            physiology: 116,
        }
    }
}

impl ModalityDims {
    pub fn get(&self, modality: Modality) -> usize {
        match modality {
            Modality::Audio => self.audio,
            Modality::Video => self.video,
            Modality::Physiology => self.physiology,
        }
    }

    pub fn uniform(dim: usize) -> Self {
        Self {
            audio: dim,
            video: dim,
            physiology: dim,
        }
    }
}

/// A non-empty subset of modalities whose features are concatenated in
/// canonical order (audio, video, physiology).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModalityConfig {
    selected: Vec<Modality>,
}

impl ModalityConfig {
    pub fn new(selected: &[Modality]) -> Result<Self> {
        let mut selected = selected.to_vec();
        selected.sort();
        selected.dedup();
        if selected.is_empty() {
            return Err(Error::Config("modality selection is empty".into()));
        }
        Ok(Self { selected })
    }

    pub fn single(modality: Modality) -> Self {
        Self {
            selected: vec![modality],
        }
    }

    pub fn all() -> Self {
        Self {
            selected: Modality::ALL.to_vec(),
        }
    }

    /// Audio, video, physiology, audio+video, and all three.
    pub fn standard_grid() -> Vec<Self> {
        vec![
            Self::single(Modality::Audio),
            Self::single(Modality::Video),
            Self::single(Modality::Physiology),
            Self::new(&[Modality::Audio, Modality::Video]).unwrap(),
            Self::all(),
        ]
    }

    pub fn selected(&self) -> &[Modality] {
        &self.selected
    }

    pub fn fused_dim(&self, dims: &ModalityDims) -> usize {
        self.selected.iter().map(|&m| dims.get(m)).sum()
    }

    /// Short name: a modality name, names joined by `+`, or `all`.
    pub fn label(&self) -> String {
        if self.selected.len() == Modality::ALL.len() {
            "all".to_string()
        } else {
            self.selected
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join("+")
        }
    }
}

impl fmt::Display for ModalityConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl From<ModalityConfig> for String {
    fn from(m: ModalityConfig) -> String {
        m.label()
    }
}

impl TryFrom<String> for ModalityConfig {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ModalityConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Self::all());
        }
        let mods = s
            .split('+')
            .map(|p| p.trim().parse())
            .collect::<Result<Vec<Modality>>>()?;
        Self::new(&mods)
    }
}

/// Timestamped feature frames of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStream {
    pub timestamps: Vec<f64>,
    pub dim: usize,
    /// Row-major, one row of `dim` values per timestamp.
    pub values: Vec<f64>,
}

impl FeatureStream {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.timestamps.len() * self.dim {
            return Err(Error::Dimension(format!(
                "{} values for {} frames of width {}",
                self.values.len(),
                self.timestamps.len(),
                self.dim
            )));
        }
        if let Some(i) = self.timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!(
                "timestamps not strictly increasing at frame {}",
                i + 1
            )));
        }
        Ok(())
    }
}

/// One annotator's continuous trace, sampled uniformly from `start_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTrace {
    pub annotator_id: String,
    pub values: Vec<f64>,
    pub rate_hz: f64,
    pub start_s: f64,
}

impl AnnotationTrace {
    pub fn time_of(&self, i: usize) -> f64 {
        self.start_s + i as f64 / self.rate_hz
    }

    /// Time covered by the trace, each sample spanning one period.
    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::Config(format!(
                "annotator {}: rate must be positive, got {}",
                self.annotator_id, self.rate_hz
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!(
                "annotator {}: value {v} outside [-1, 1]",
                self.annotator_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub participant_id: String,
    pub streams: BTreeMap<Modality, FeatureStream>,
    pub annotations: Vec<AnnotationTrace>,
}

impl Session {
    pub fn validate(&self) -> Result<()> {
        let ctx = |e: Error| e.with_context(format!("participant {}", self.participant_id));
        for stream in self.streams.values() {
            stream.validate().map_err(ctx)?;
        }
        if self.annotations.is_empty() {
            return Err(ctx(Error::Config("no annotation traces".into())));
        }
        let first = &self.annotations[0];
        for trace in &self.annotations {
            trace.validate().map_err(ctx)?;
            if trace.values.len() != first.values.len()
                || (trace.rate_hz - first.rate_hz).abs() > 1e-9 * first.rate_hz
                || (trace.start_s - first.start_s).abs() > 1e-9
            {
                return Err(ctx(Error::Config(format!(
                    "annotator {} disagrees with {} on length, rate or start",
                    trace.annotator_id, first.annotator_id
                ))));
            }
        }
        Ok(())
    }
}
